//! Soft actor-critic: per-robot squashed-Gaussian actors, shared twin
//! critics over the joint state and action, polyak targets and automatic
//! temperature.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::nn::{Activation, Adam, Dense, Mlp, ScalarAdam};
use super::replay::Transition;
use super::LearnError;

/// Wheel speeds per robot.
pub const ROBOT_ACTION: usize = 2;
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacHyper {
    pub gamma: f64,
    pub tau: f64,
    pub lr: f64,
    pub batch: usize,
    pub buffer: usize,
    pub init_alpha: f64,
    /// Defaults to minus the joint action dimension.
    pub target_entropy: Option<f64>,
    pub hidden: usize,
    pub activation: Activation,
}

impl Default for SacHyper {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            lr: 3e-4,
            batch: 256,
            buffer: 100_000,
            init_alpha: 0.2,
            target_entropy: None,
            hidden: 64,
            activation: Activation::Relu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SacLosses {
    pub critic: f64,
    pub actor: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SacModel {
    pub state_dim: usize,
    pub robots: usize,
    pub hyper: SacHyper,
    pub actors: Vec<Mlp>,
    pub critics: [Mlp; 2],
    pub targets: [Mlp; 2],
    pub log_alpha: f64,
    actor_opt: Vec<Adam>,
    critic_opt: [Adam; 2],
    alpha_opt: ScalarAdam,
    pub updates: u64,
}

/// Batch tensors assembled from transitions.
pub struct Batch {
    pub s: Array2<f64>,
    pub a: Array2<f64>,
    pub r: Array1<f64>,
    pub s2: Array2<f64>,
    pub done: Array1<f64>,
}

impl Batch {
    pub fn from_transitions(ts: &[Transition]) -> Self {
        let n = ts.len();
        let sd = ts.first().map(|t| t.state.len()).unwrap_or(0);
        let ad = ts.first().map(|t| t.action.len()).unwrap_or(0);
        let mut s = Array2::zeros((n, sd));
        let mut a = Array2::zeros((n, ad));
        let mut s2 = Array2::zeros((n, sd));
        for (i, t) in ts.iter().enumerate() {
            s.row_mut(i).assign(&ArrayView1::from(&t.state[..]));
            a.row_mut(i).assign(&ArrayView1::from(&t.action[..]));
            s2.row_mut(i).assign(&ArrayView1::from(&t.next_state[..]));
        }
        let r = ts.iter().map(|t| t.reward).collect();
        let done = ts.iter().map(|t| if t.done { 1.0 } else { 0.0 }).collect();
        Self { s, a, r, s2, done }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Squashed Gaussian sample for one actor given its raw output rows and
/// standard-normal noise. Returns actions, per-row log-probabilities and
/// the intermediates needed for backpropagation.
struct Sample {
    action: Array2<f64>,
    logp: Array1<f64>,
    sigma: Array2<f64>,
    raw_tanh: Array2<f64>,
}

fn squash(out: &Array2<f64>, eps: &Array2<f64>) -> Sample {
    let n = out.nrows();
    let mut action = Array2::zeros((n, ROBOT_ACTION));
    let mut sigma = Array2::zeros((n, ROBOT_ACTION));
    let mut raw_tanh = Array2::zeros((n, ROBOT_ACTION));
    let mut logp = Array1::zeros(n);
    for i in 0..n {
        for j in 0..ROBOT_ACTION {
            let mu = out[[i, j]];
            let rt = out[[i, ROBOT_ACTION + j]].tanh();
            let ls = LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (rt + 1.0);
            let sd = ls.exp();
            let e = eps[[i, j]];
            let u = mu + sd * e;
            // log(1 − tanh²u) in a form that stays finite for large |u|
            let log_jac = 2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u));
            logp[i] += -0.5 * e * e - ls - HALF_LN_2PI - log_jac;
            action[[i, j]] = u.tanh();
            sigma[[i, j]] = sd;
            raw_tanh[[i, j]] = rt;
        }
    }
    Sample { action, logp, sigma, raw_tanh }
}

fn concat_cols(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[a, b]).expect("equal row counts")
}

/// Loss `mean ½(Q(s,a) − y)²` and its parameter gradients.
pub fn critic_loss_grad(critic: &Mlp, s: ArrayView2<f64>, a: ArrayView2<f64>, y: ArrayView1<f64>) -> (f64, Vec<Dense>) {
    let x = concat_cols(s, a);
    let n = x.nrows() as f64;
    let (q, cache) = critic.forward_cached(x.view());
    let diff: Array1<f64> = &q.column(0) - &y;
    let loss = 0.5 * diff.mapv(|d| d * d).sum() / n;
    let dout = (diff / n).insert_axis(Axis(1));
    let (g, _) = critic.backward(&cache, dout);
    (loss, g)
}

/// Actor objective `mean(α·Σ log π − min_k Q_k(s, a))` with the given
/// noise per actor, and each actor's parameter gradients. Also returns the
/// joint log-probabilities.
pub fn actor_loss_grad(
    actors: &[Mlp],
    critics: [&Mlp; 2],
    s: ArrayView2<f64>,
    eps: &[Array2<f64>],
    alpha: f64,
) -> (f64, Vec<Vec<Dense>>, Array1<f64>) {
    let n = s.nrows();
    let nf = n as f64;
    let mut outs = Vec::with_capacity(actors.len());
    let mut samples = Vec::with_capacity(actors.len());
    let mut joint = Array2::zeros((n, ROBOT_ACTION * actors.len()));
    let mut logp = Array1::zeros(n);
    for (k, actor) in actors.iter().enumerate() {
        let (out, cache) = actor.forward_cached(s);
        let smp = squash(&out, &eps[k]);
        joint.slice_mut(s![.., k * ROBOT_ACTION..(k + 1) * ROBOT_ACTION]).assign(&smp.action);
        logp += &smp.logp;
        outs.push(cache);
        samples.push(smp);
    }
    let x = concat_cols(s, joint.view());
    let (q0, c0) = critics[0].forward_cached(x.view());
    let (q1, c1) = critics[1].forward_cached(x.view());
    let mut pick0 = Array2::zeros((n, 1));
    let mut pick1 = Array2::zeros((n, 1));
    let mut qmin = Array1::zeros(n);
    for i in 0..n {
        if q0[[i, 0]] <= q1[[i, 0]] {
            pick0[[i, 0]] = 1.0;
            qmin[i] = q0[[i, 0]];
        } else {
            pick1[[i, 0]] = 1.0;
            qmin[i] = q1[[i, 0]];
        }
    }
    let loss = (alpha * &logp - &qmin).sum() / nf;
    let (_, dx0) = critics[0].backward(&c0, pick0);
    let (_, dx1) = critics[1].backward(&c1, pick1);
    let sd = s.ncols();
    let dq_da = &dx0.slice(s![.., sd..]) + &dx1.slice(s![.., sd..]);
    let mut grads = Vec::with_capacity(actors.len());
    for (k, actor) in actors.iter().enumerate() {
        let smp = &samples[k];
        let mut dout = Array2::zeros((n, 2 * ROBOT_ACTION));
        for i in 0..n {
            for j in 0..ROBOT_ACTION {
                let a = smp.action[[i, j]];
                let g = dq_da[[i, k * ROBOT_ACTION + j]];
                let du = alpha * 2.0 * a - g * (1.0 - a * a);
                let dls = du * smp.sigma[[i, j]] * eps[k][[i, j]] - alpha;
                let rt = smp.raw_tanh[[i, j]];
                dout[[i, j]] = du / nf;
                dout[[i, ROBOT_ACTION + j]] = dls * 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - rt * rt) / nf;
            }
        }
        let (g, _) = actor.backward(&outs[k], dout);
        grads.push(g);
    }
    (loss, grads, logp)
}

impl SacModel {
    pub fn new(state_dim: usize, robots: usize, hyper: SacHyper, seed: u64) -> Self {
        assert!(robots >= 1, "at least one actor");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = hyper.hidden;
        let act = hyper.activation;
        let actors: Vec<Mlp> =
            (0..robots).map(|_| Mlp::new(&[state_dim, h, h, 2 * ROBOT_ACTION], act, &mut rng)).collect();
        let qin = state_dim + ROBOT_ACTION * robots;
        let critics = [Mlp::new(&[qin, h, h, 1], act, &mut rng), Mlp::new(&[qin, h, h, 1], act, &mut rng)];
        let targets = critics.clone();
        let actor_opt = actors.iter().map(|a| Adam::new(a, hyper.lr)).collect();
        let critic_opt = [Adam::new(&critics[0], hyper.lr), Adam::new(&critics[1], hyper.lr)];
        Self {
            state_dim,
            robots,
            hyper,
            actors,
            critics,
            targets,
            log_alpha: hyper.init_alpha.ln(),
            actor_opt,
            critic_opt,
            alpha_opt: ScalarAdam::new(hyper.lr),
            updates: 0,
        }
    }

    pub fn action_dim(&self) -> usize {
        ROBOT_ACTION * self.robots
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.hyper.target_entropy.unwrap_or(-(self.action_dim() as f64))
    }

    fn check_dim(&self, got: usize) -> Result<(), LearnError> {
        if got == self.state_dim {
            Ok(())
        } else {
            Err(LearnError::Dimension { expected: self.state_dim, got })
        }
    }

    /// Joint action in [−1, 1]: `tanh(μ)` when deterministic, otherwise
    /// `tanh(μ + σ·ε)`.
    pub fn act<R: Rng>(&self, state: &[f64], deterministic: bool, rng: &mut R) -> Result<Vec<f64>, LearnError> {
        self.check_dim(state.len())?;
        let x = ArrayView2::from_shape((1, state.len()), state).expect("row view");
        let mut out = Vec::with_capacity(self.action_dim());
        for actor in &self.actors {
            let o = actor.forward(x);
            let mut eps = Array2::zeros((1, ROBOT_ACTION));
            if !deterministic {
                eps.mapv_inplace(|_: f64| rng.sample::<f64, _>(StandardNormal));
            }
            out.extend(squash(&o, &eps).action.iter().copied());
        }
        Ok(out)
    }

    /// Action of a single actor for its own state.
    pub fn act_robot(&self, actor: usize, state: &[f64]) -> Result<[f64; 2], LearnError> {
        self.check_dim(state.len())?;
        let x = ArrayView2::from_shape((1, state.len()), state).expect("row view");
        let o = self.actors[actor.min(self.actors.len() - 1)].forward(x);
        Ok([o[[0, 0]].tanh(), o[[0, 1]].tanh()])
    }

    fn noise<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<Array2<f64>> {
        (0..self.robots)
            .map(|_| Array2::from_shape_fn((n, ROBOT_ACTION), |_| rng.sample::<f64, _>(StandardNormal)))
            .collect()
    }

    /// Soft Bellman targets `r + γ(1 − done)(min Q_target(s', a') − α log π(a'|s'))`.
    pub fn targets_for(&self, b: &Batch, eps: &[Array2<f64>]) -> Array1<f64> {
        let n = b.s2.nrows();
        let mut joint = Array2::zeros((n, self.action_dim()));
        let mut logp = Array1::zeros(n);
        for (k, actor) in self.actors.iter().enumerate() {
            let smp = squash(&actor.forward(b.s2.view()), &eps[k]);
            joint.slice_mut(s![.., k * ROBOT_ACTION..(k + 1) * ROBOT_ACTION]).assign(&smp.action);
            logp += &smp.logp;
        }
        let x = concat_cols(b.s2.view(), joint.view());
        let t0 = self.targets[0].forward(x.view());
        let t1 = self.targets[1].forward(x.view());
        let alpha = self.alpha();
        Array1::from_shape_fn(n, |i| {
            let v = t0[[i, 0]].min(t1[[i, 0]]) - alpha * logp[i];
            b.r[i] + self.hyper.gamma * (1.0 - b.done[i]) * v
        })
    }

    /// One gradient step on critics, actors and temperature, then the
    /// polyak target update. Nothing changes if any loss is non-finite.
    pub fn update<R: Rng>(&mut self, batch: &[Transition], rng: &mut R) -> Result<SacLosses, LearnError> {
        if batch.len() < 2 {
            return Err(LearnError::SmallBatch(batch.len()));
        }
        self.check_dim(batch[0].state.len())?;
        let b = Batch::from_transitions(batch);
        let n = batch.len();
        let eps_next = self.noise(n, rng);
        let y = self.targets_for(&b, &eps_next);
        let (l0, g0) = critic_loss_grad(&self.critics[0], b.s.view(), b.a.view(), y.view());
        let (l1, g1) = critic_loss_grad(&self.critics[1], b.s.view(), b.a.view(), y.view());
        if !(l0.is_finite() && l1.is_finite()) {
            return Err(LearnError::NonFinite("critic"));
        }
        let saved = (self.critics.clone(), self.critic_opt.clone());
        self.critic_opt[0].step(&mut self.critics[0], &g0);
        self.critic_opt[1].step(&mut self.critics[1], &g1);
        let eps = self.noise(n, rng);
        let alpha = self.alpha();
        let (la, ga, logp) = actor_loss_grad(&self.actors, [&self.critics[0], &self.critics[1]], b.s.view(), &eps, alpha);
        if !la.is_finite() || !logp.iter().all(|v| v.is_finite()) {
            (self.critics, self.critic_opt) = saved;
            return Err(LearnError::NonFinite("actor"));
        }
        for ((actor, opt), g) in self.actors.iter_mut().zip(&mut self.actor_opt).zip(&ga) {
            opt.step(actor, g);
        }
        let h_target = self.target_entropy();
        let mean_logp = logp.mean().unwrap_or(0.0);
        let alpha_grad = -(mean_logp + h_target);
        let alpha_loss = -self.log_alpha * (mean_logp + h_target);
        self.alpha_opt.step(&mut self.log_alpha, alpha_grad);
        let tau = self.hyper.tau;
        self.targets[0].polyak(&self.critics[0], tau);
        self.targets[1].polyak(&self.critics[1], tau);
        self.updates += 1;
        Ok(SacLosses { critic: 0.5 * (l0 + l1), actor: la, alpha_loss, alpha: self.alpha(), entropy: -mean_logp })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new("sac");
        c.meta.insert("state_dim".into(), self.state_dim.into());
        c.meta.insert("robots".into(), self.robots.into());
        c.meta.insert("updates".into(), self.updates.into());
        c.meta.insert("hyper".into(), serde_json::to_value(self.hyper).expect("hyper serializes"));
        for (i, a) in self.actors.iter().enumerate() {
            c.put_mlp(&format!("actor{i}"), a);
        }
        for k in 0..2 {
            c.put_mlp(&format!("critic{k}"), &self.critics[k]);
            c.put_mlp(&format!("target{k}"), &self.targets[k]);
        }
        c.push("log_alpha", vec![1], vec![self.log_alpha]);
        let opts = self.actor_opt.iter().enumerate().map(|(i, o)| (format!("actor{i}"), o));
        let copts = self.critic_opt.iter().enumerate().map(|(k, o)| (format!("critic{k}"), o));
        for (name, o) in opts.chain(copts) {
            let (m, v) = o.moments();
            c.put_layers(&format!("adam.{name}.m"), m);
            c.put_layers(&format!("adam.{name}.v"), v);
            c.push(&format!("adam.{name}.t"), vec![1], vec![o.t as f64]);
        }
        let a = self.alpha_opt;
        c.push("adam.alpha", vec![3], vec![a.t as f64, a.m, a.v]);
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self, LearnError> {
        c.expect_kind("sac")?;
        let get = |k: &str| {
            c.meta.get(k).and_then(|v| v.as_u64()).ok_or_else(|| LearnError::Checkpoint(format!("missing meta `{k}`")))
        };
        let state_dim = get("state_dim")? as usize;
        let robots = get("robots")? as usize;
        let hyper: SacHyper = c
            .meta
            .get("hyper")
            .map(|v| serde_json::from_value(v.clone()))
            .transpose()
            .map_err(|e| LearnError::Checkpoint(e.to_string()))?
            .unwrap_or_default();
        let mut m = SacModel::new(state_dim, robots, hyper, 0);
        let act = hyper.activation;
        for i in 0..robots {
            m.actors[i] = c.mlp(&format!("actor{i}"), act)?;
        }
        for k in 0..2 {
            m.critics[k] = c.mlp(&format!("critic{k}"), act)?;
            m.targets[k] = c.mlp(&format!("target{k}"), act)?;
        }
        let shapes_ok = m.actors.iter().all(|a| a.input_dim() == state_dim && a.output_dim() == 2 * ROBOT_ACTION)
            && m.critics.iter().chain(&m.targets).all(|q| q.input_dim() == state_dim + ROBOT_ACTION * robots);
        if !shapes_ok {
            return Err(LearnError::Checkpoint("network shapes do not match state and action sizes".into()));
        }
        m.log_alpha = c.scalar("log_alpha")?;
        m.updates = get("updates").unwrap_or(0);
        let restore = |opt: &mut Adam, name: &str| -> Result<(), LearnError> {
            if let (Ok(mm), Ok(vv)) = (c.layers(&format!("adam.{name}.m")), c.layers(&format!("adam.{name}.v"))) {
                opt.set_moments(mm, vv);
                opt.t = c.scalar(&format!("adam.{name}.t"))? as u64;
            }
            Ok(())
        };
        for i in 0..robots {
            restore(&mut m.actor_opt[i], &format!("actor{i}"))?;
        }
        for k in 0..2 {
            restore(&mut m.critic_opt[k], &format!("critic{k}"))?;
        }
        if let Ok(t) = c.tensor("adam.alpha") {
            if t.data.len() == 3 {
                m.alpha_opt.t = t.data[0] as u64;
                m.alpha_opt.m = t.data[1];
                m.alpha_opt.v = t.data[2];
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::nn::flatten;

    fn toy_hyper(act: Activation) -> SacHyper {
        SacHyper { hidden: 8, activation: act, ..Default::default() }
    }

    fn batch(rng: &mut ChaCha8Rng, n: usize, sd: usize, ad: usize) -> Vec<Transition> {
        (0..n)
            .map(|i| Transition {
                state: (0..sd).map(|_| rng.random_range(-1.0..1.0)).collect(),
                action: (0..ad).map(|_| rng.random_range(-1.0..1.0)).collect(),
                reward: rng.random_range(-1.0..1.0),
                next_state: (0..sd).map(|_| rng.random_range(-1.0..1.0)).collect(),
                done: i % 3 == 0,
            })
            .collect()
    }

    fn fd_check(net: &mut Mlp, analytic: &[f64], mut loss: impl FnMut(&Mlp) -> f64) {
        let p0 = net.flat();
        let h = 1e-6;
        for i in 0..p0.len() {
            let mut p = p0.clone();
            p[i] = p0[i] + h;
            net.set_flat(&p);
            let up = loss(net);
            p[i] = p0[i] - h;
            net.set_flat(&p);
            let dn = loss(net);
            let fd = (up - dn) / (2.0 * h);
            let tol = 1e-4 * fd.abs().max(analytic[i].abs()) + 1e-8;
            assert!((fd - analytic[i]).abs() <= tol, "param {i}: fd {fd} analytic {}", analytic[i]);
        }
        net.set_flat(&p0);
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = SacModel::new(3, 1, toy_hyper(Activation::Tanh), 1);
        let b = Batch::from_transitions(&batch(&mut rng, 4, 3, 2));
        let y = b.r.clone();
        let mut q = m.critics[0].clone();
        let (_, g) = critic_loss_grad(&q, b.s.view(), b.a.view(), y.view());
        fd_check(&mut q, &flatten(&g), |q| critic_loss_grad(q, b.s.view(), b.a.view(), y.view()).0);
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        for robots in [1, 2] {
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let m = SacModel::new(3, robots, toy_hyper(Activation::Tanh), 2);
            let b = Batch::from_transitions(&batch(&mut rng, 4, 3, 2 * robots));
            let eps = m.noise(4, &mut rng);
            let critics = [&m.critics[0], &m.critics[1]];
            let (_, g, _) = actor_loss_grad(&m.actors, critics, b.s.view(), &eps, 0.3);
            for k in 0..robots {
                let mut actors = m.actors.clone();
                let mut net = actors[k].clone();
                fd_check(&mut net, &flatten(&g[k]), |a| {
                    actors[k] = a.clone();
                    actor_loss_grad(&actors, critics, b.s.view(), &eps, 0.3).0
                });
            }
        }
    }

    #[test]
    fn polyak_identity_after_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut m = SacModel::new(4, 1, toy_hyper(Activation::Relu), 3);
        let data = batch(&mut rng, 8, 4, 2);
        m.update(&data, &mut rng).unwrap();
        let old: Vec<Vec<f64>> = m.targets.iter().map(|t| t.flat()).collect();
        m.update(&data, &mut rng).unwrap();
        for k in 0..2 {
            let online = m.critics[k].flat();
            for ((t, o), n) in m.targets[k].flat().iter().zip(&old[k]).zip(&online) {
                assert_eq!(*t, (1.0 - 0.005) * o + 0.005 * n);
            }
        }
    }

    #[test]
    fn terminal_target_is_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = SacModel::new(3, 1, toy_hyper(Activation::Relu), 4);
        let mut data = batch(&mut rng, 4, 3, 2);
        for t in &mut data {
            t.done = true;
        }
        let b = Batch::from_transitions(&data);
        let eps = m.noise(4, &mut rng);
        let y = m.targets_for(&b, &eps);
        assert_eq!(y, b.r);
    }

    #[test]
    fn actions_are_bounded_and_reproducible() {
        let m = SacModel::new(3, 2, SacHyper { init_alpha: 1.0, ..Default::default() }, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let s: Vec<f64> = (0..3).map(|_| rng.random_range(-50.0..50.0)).collect();
            assert!(m.act(&s, false, &mut rng).unwrap().iter().all(|a| a.abs() <= 1.0));
        }
        let s = [0.1, 0.2, 0.3];
        let a = m.act(&s, false, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = m.act(&s, false, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_mean_deterministic_action_is_zero() {
        let mut m = SacModel::new(3, 1, SacHyper::default(), 1);
        let last = m.actors[0].layers.last_mut().unwrap();
        last.w.fill(0.0);
        last.b.fill(0.0);
        assert_eq!(m.act(&[0.5, 0.5, 0.5], true, &mut ChaCha8Rng::seed_from_u64(0)).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_input() {
        let mut m = SacModel::new(3, 1, SacHyper::default(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(m.act(&[0.0; 4], true, &mut rng), Err(LearnError::Dimension { expected: 3, got: 4 })));
        let one = batch(&mut rng, 1, 3, 2);
        assert_eq!(m.update(&one, &mut rng), Err(LearnError::SmallBatch(1)));
        let mut bad = batch(&mut rng, 4, 3, 2);
        bad[0].reward = f64::NAN;
        let before = m.clone();
        assert_eq!(m.update(&bad, &mut rng), Err(LearnError::NonFinite("critic")));
        assert_eq!(m, before);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut m = SacModel::new(4, 2, toy_hyper(Activation::Relu), 5);
        m.update(&batch(&mut rng, 6, 4, 4), &mut rng).unwrap();
        let c = Checkpoint::from_json(&m.to_checkpoint().to_json()).unwrap();
        assert_eq!(SacModel::from_checkpoint(&c).unwrap(), m);
    }
}
