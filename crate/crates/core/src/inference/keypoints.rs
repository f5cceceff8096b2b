use std::collections::{BTreeMap, BTreeSet};

use crate::perception::InteractionFeatures;
use crate::sim::EntityId;

use super::{InferError, InteractionKeypoint, KeypointKind, Transition};

type PairKey = (KeypointKind, EntityId, EntityId);

/// Every binary pair signal present in the frame.
fn pair_values(f: &InteractionFeatures) -> BTreeMap<PairKey, bool> {
    let mut out = BTreeMap::new();
    for (i, r) in f.robots.iter().enumerate() {
        for (j, o) in f.objects.iter().enumerate() {
            out.insert((KeypointKind::ObjectRobot, *r, *o), f.phi[i][j]);
        }
        for (j, b) in f.robots.iter().enumerate().skip(i + 1) {
            out.insert((KeypointKind::RobotRobot, *r, *b), f.omega[i][j]);
        }
    }
    for (i, a) in f.objects.iter().enumerate() {
        for (j, b) in f.objects.iter().enumerate().skip(i + 1) {
            out.insert((KeypointKind::ObjectObject, *a, *b), f.psi[i][j]);
        }
    }
    out
}

/// Keypoints from debounced feature toggles plus appearance events.
///
/// A toggle at frame `k` counts when the new value holds for at least
/// `debounce` frames starting at `k`; short blips never change the filtered
/// state, so their trailing edge is not reported either.
pub fn detect_keypoints(features: &[InteractionFeatures], debounce: usize) -> Result<Vec<InteractionKeypoint>, InferError> {
    if features.is_empty() {
        return Err(InferError::EmptyFeatures);
    }
    let values: Vec<BTreeMap<PairKey, bool>> = features.iter().map(pair_values).collect();
    let mut state: BTreeMap<PairKey, bool> = values[0].clone();
    let mut out = BTreeSet::new();
    for k in 1..features.len() {
        for (key, &v) in &values[k] {
            let Some(&prev_raw) = values[k - 1].get(key) else {
                state.insert(*key, v);
                continue;
            };
            let s = *state.get(key).unwrap_or(&prev_raw);
            if v == s {
                continue;
            }
            let hold = debounce.max(1);
            let persists = k + hold <= features.len()
                && (k..k + hold).all(|t| values[t].get(key) == Some(&v));
            if persists {
                state.insert(*key, v);
                out.insert(InteractionKeypoint {
                    frame_index: k,
                    kind: key.0,
                    entities: BTreeSet::from([key.1, key.2]),
                    transition: if v { Transition::Onset } else { Transition::Offset },
                });
            }
        }
        for id in &features[k].appear {
            out.insert(InteractionKeypoint {
                frame_index: k,
                kind: KeypointKind::BehaviorTrigger,
                entities: BTreeSet::from([*id]),
                transition: Transition::Appearance,
            });
        }
        for id in &features[k].disappear {
            out.insert(InteractionKeypoint {
                frame_index: k,
                kind: KeypointKind::BehaviorTrigger,
                entities: BTreeSet::from([*id]),
                transition: Transition::Disappearance,
            });
        }
    }
    Ok(out.into_iter().collect())
}
