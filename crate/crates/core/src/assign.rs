//! Small exact assignment solver.

/// Permutation `p` minimizing `sum_i cost[i][p[i]]` over all injective maps
/// from rows to columns. Requires `rows <= cols`. Ties resolve to the
/// lexicographically smallest permutation.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, |r| r.len());
    assert!(rows <= cols, "more rows than columns");
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut current = Vec::with_capacity(rows);
    let mut used = vec![false; cols];
    search(cost, &mut current, &mut used, 0.0, &mut best);
    best.map(|(_, p)| p).unwrap_or_default()
}

fn search(cost: &[Vec<f64>], current: &mut Vec<usize>, used: &mut [bool], acc: f64, best: &mut Option<(f64, Vec<usize>)>) {
    if let Some((b, _)) = best {
        if acc > *b + 1e-12 {
            return;
        }
    }
    let i = current.len();
    if i == cost.len() {
        if best.as_ref().is_none_or(|(b, _)| acc < *b - 1e-12) {
            *best = Some((acc, current.clone()));
        }
        return;
    }
    for j in 0..used.len() {
        if used[j] {
            continue;
        }
        used[j] = true;
        current.push(j);
        search(cost, current, used, acc + cost[i][j], best);
        current.pop();
        used[j] = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_diagonal_when_cheapest() {
        let c = vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
        assert_eq!(min_cost_assignment(&c), vec![0, 1, 2]);
    }

    #[test]
    fn rectangular() {
        let c = vec![vec![5.0, 1.0, 3.0]];
        assert_eq!(min_cost_assignment(&c), vec![1]);
    }

    #[test]
    fn ties_take_first_permutation() {
        let c = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert_eq!(min_cost_assignment(&c), vec![0, 1]);
    }
}
