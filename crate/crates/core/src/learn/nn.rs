//! Dense MLPs with hand-written backpropagation and Adam.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
        }
    }

    /// Derivative expressed through the activation output.
    fn grad_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Fully connected layer, `y = x·w + b` with `w` shaped (in, out).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { w: Array2::zeros((inputs, outputs)), b: Array1::zeros(outputs) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub hidden: Activation,
}

/// Layer inputs recorded by a forward pass; `inputs[i + 1]` is the
/// activated output of hidden layer `i`.
pub struct Cache {
    inputs: Vec<Array2<f64>>,
}

impl Mlp {
    /// Uniform fan-in initialisation on every layer.
    pub fn new<R: Rng>(sizes: &[usize], hidden: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let mut d = Dense::zeros(w[0], w[1]);
                d.w.mapv_inplace(|_| rng.random_range(-bound..bound));
                d.b.mapv_inplace(|_| rng.random_range(-bound..bound));
                d
            })
            .collect();
        Self { layers, hidden }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").w.ncols()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.w.ncols()));
        s
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut h = x.to_owned();
        let n = self.layers.len();
        for (i, l) in self.layers.iter().enumerate() {
            h = h.dot(&l.w) + &l.b;
            if i + 1 < n {
                self.hidden.apply(&mut h);
            }
        }
        h
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> (Array2<f64>, Cache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let n = self.layers.len();
        for (i, l) in self.layers.iter().enumerate() {
            let z = h.dot(&l.w) + &l.b;
            inputs.push(h);
            h = z;
            if i + 1 < n {
                self.hidden.apply(&mut h);
            }
        }
        (h, Cache { inputs })
    }

    /// Gradients of `sum(dout ⊙ out)` with respect to the parameters and
    /// the input batch.
    pub fn backward(&self, cache: &Cache, dout: Array2<f64>) -> (Vec<Dense>, Array2<f64>) {
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut d = dout;
        for i in (0..self.layers.len()).rev() {
            let x = &cache.inputs[i];
            let gw = x.t().dot(&d);
            let gb = d.sum_axis(Axis(0));
            let mut dx = d.dot(&self.layers[i].w.t());
            if i > 0 {
                let act = self.hidden;
                ndarray::Zip::from(&mut dx).and(x).for_each(|g, &a| *g *= act.grad_from_output(a));
            }
            grads.push(Dense { w: gw, b: gb });
            d = dx;
        }
        grads.reverse();
        (grads, d)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Parameters flattened layer by layer, weights (row-major) then bias.
    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_flat(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count());
        let mut k = 0;
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = p[k];
                k += 1;
            }
        }
    }

    /// `self ← (1 − tau)·self + tau·src`.
    pub fn polyak(&mut self, src: &Mlp, tau: f64) {
        for (t, s) in self.layers.iter_mut().zip(&src.layers) {
            ndarray::Zip::from(&mut t.w).and(&s.w).for_each(|t, &s| *t = (1.0 - tau) * *t + tau * s);
            ndarray::Zip::from(&mut t.b).and(&s.b).for_each(|t, &s| *t = (1.0 - tau) * *t + tau * s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }
}

pub fn flatten(layers: &[Dense]) -> Vec<f64> {
    layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()).copied()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Dense>,
    v: Vec<Dense>,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        let zeros: Vec<Dense> = net.layers.iter().map(|l| Dense::zeros(l.w.nrows(), l.w.ncols())).collect();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: zeros.clone(), v: zeros }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &[Dense]) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let lr = self.lr * c2.sqrt() / c1;
        let upd = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * *m / (v.sqrt() + eps);
        };
        for (((l, g), m), v) in net.layers.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(&mut l.w).and(&mut m.w).and(&mut v.w).and(&g.w).for_each(|p, m, v, &g| upd(p, m, v, g));
            ndarray::Zip::from(&mut l.b).and(&mut m.b).and(&mut v.b).and(&g.b).for_each(|p, m, v, &g| upd(p, m, v, g));
        }
    }

    /// Moment tensors, first then second, in layer order.
    pub fn moments(&self) -> (&[Dense], &[Dense]) {
        (&self.m, &self.v)
    }

    pub fn set_moments(&mut self, m: Vec<Dense>, v: Vec<Dense>) {
        self.m = m;
        self.v = v;
    }
}

/// Adam on a single scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarAdam {
    pub lr: f64,
    pub t: u64,
    pub m: f64,
    pub v: f64,
}

impl ScalarAdam {
    pub fn new(lr: f64) -> Self {
        Self { lr, t: 0, m: 0.0, v: 0.0 }
    }

    pub fn step(&mut self, p: &mut f64, g: f64) {
        self.t += 1;
        self.m = 0.9 * self.m + 0.1 * g;
        self.v = 0.999 * self.v + 0.001 * g * g;
        let mh = self.m / (1.0 - 0.9f64.powi(self.t as i32));
        let vh = self.v / (1.0 - 0.999f64.powi(self.t as i32));
        *p -= self.lr * mh / (vh.sqrt() + 1e-8);
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn loss(net: &Mlp, x: &Array2<f64>, t: &Array2<f64>) -> f64 {
        0.5 * (net.forward(x.view()) - t).mapv(|v| v * v).sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        for act in [Activation::Tanh, Activation::Relu] {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mut net = Mlp::new(&[3, 5, 4, 2], act, &mut rng);
            let x = array![[0.3, -0.2, 0.9], [-0.7, 0.1, 0.4]];
            let t = array![[0.5, -1.0], [0.0, 0.2]];
            let (y, cache) = net.forward_cached(x.view());
            let (g, dx) = net.backward(&cache, &y - &t);
            let analytic = flatten(&g);
            let p0 = net.flat();
            let h = 1e-6;
            for i in 0..p0.len() {
                let mut p = p0.clone();
                p[i] += h;
                net.set_flat(&p);
                let up = loss(&net, &x, &t);
                p[i] -= 2.0 * h;
                net.set_flat(&p);
                let dn = loss(&net, &x, &t);
                let fd = (up - dn) / (2.0 * h);
                assert!((fd - analytic[i]).abs() <= 1e-6 + 1e-4 * fd.abs(), "{act:?} param {i}: {fd} vs {}", analytic[i]);
            }
            net.set_flat(&p0);
            for r in 0..2 {
                for c in 0..3 {
                    let mut xp = x.clone();
                    xp[[r, c]] += h;
                    let up = loss(&net, &xp, &t);
                    xp[[r, c]] -= 2.0 * h;
                    let dn = loss(&net, &xp, &t);
                    let fd = (up - dn) / (2.0 * h);
                    assert!((fd - dx[[r, c]]).abs() <= 1e-6 + 1e-4 * fd.abs());
                }
            }
        }
    }

    #[test]
    fn polyak_blends() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Mlp::new(&[2, 3, 1], Activation::Relu, &mut rng);
        let b = Mlp::new(&[2, 3, 1], Activation::Relu, &mut rng);
        let mut t = a.clone();
        t.polyak(&b, 0.25);
        for ((x, y), z) in a.flat().iter().zip(b.flat()).zip(t.flat()) {
            assert_eq!(z, 0.75 * x + 0.25 * y);
        }
    }

    #[test]
    fn adam_descends_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Mlp::new(&[1, 1], Activation::Relu, &mut rng);
        let mut opt = Adam::new(&net, 0.05);
        let x = array![[1.0], [2.0], [-1.0]];
        let t = array![[3.0], [5.0], [-1.0]];
        for _ in 0..2000 {
            let (y, c) = net.forward_cached(x.view());
            let (g, _) = net.backward(&c, &y - &t);
            opt.step(&mut net, &g);
        }
        assert!((net.layers[0].w[[0, 0]] - 2.0).abs() < 1e-3);
        assert!((net.layers[0].b[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }
}
