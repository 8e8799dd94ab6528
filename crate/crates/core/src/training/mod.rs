//! Physics-informed loss, the epoch/minibatch training loop with best-model
//! tracking and instability restarts, and the growing-horizon pre-training.

pub mod metrics;
pub mod reference;
pub mod riemann;

use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Dd, Real, Tape, TapeError};
use crate::dg::{Discretization, SolutionState};
use crate::mesh::MeshError;
use crate::nn::{AdamW, AdamWConfig, NetworkParams, NnError, Plateau};
use crate::solver::{self, training_dt, Integrator, SolverError};
use crate::viscosity::{NeuralViscosity, ViscosityModel};

pub use metrics::{compute_metrics, Metrics};
pub use reference::{build_reference, IcFn, ReferenceKind, OVERKILL_LEVELS};
pub use riemann::{Primitive, RiemannError, RiemannSolution};

/// Loss value reported for an unroll that blew up.
pub const L_MAX: f64 = 1e30;

#[derive(Debug, thiserror::Error)]
pub enum TrainingError {
    #[error("shape mismatch: expected {expected} dofs, got {got}")]
    Shape { expected: usize, got: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Riemann(#[from] RiemannError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("reference solution: {0}")]
    Reference(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("every training problem blew up at the initial parameters: {0}")]
    AllFailed(String),
}

/// Weights and norm of the loss. The loss of one problem is
/// `sum_n eps^q + w_grad grad_eps^q + w_jump jump^q + w_ou ou^q + w_vp vp^q (+ w_mv mv^q if periodic)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub q: u32,
    pub w_grad: f64,
    pub w_jump: f64,
    pub w_ou: f64,
    pub w_vp: f64,
    /// Applied to periodic problems only.
    pub w_mv: f64,
    pub vp_eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            q: 1,
            w_grad: 1.0,
            w_jump: 0.0,
            w_ou: 10.0,
            w_vp: 0.1,
            w_mv: 1.0,
            vp_eps: 1e-8,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        if !(self.q == 1 || self.q == 2) {
            return Err(TrainingError::Config(format!("q must be 1 or 2, got {}", self.q)));
        }
        let w = [self.w_grad, self.w_jump, self.w_ou, self.w_vp, self.w_mv];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(TrainingError::Config("loss weights must be finite and non-negative".into()));
        }
        if !(self.vp_eps > 0.0) {
            return Err(TrainingError::Config("vp_eps must be positive".into()));
        }
        Ok(())
    }

    fn weights(&self, periodic: bool) -> [f64; 6] {
        let mv = if periodic { self.w_mv } else { 0.0 };
        [1.0, self.w_grad, self.w_jump, self.w_ou, mv, self.w_vp]
    }

    /// Weighted loss contribution of one step.
    pub fn combine<T: Real>(&self, m: &Metrics<T>, periodic: bool) -> T {
        let q = self.q;
        let p = metrics::powq;
        let terms = [p(m.eps, q), p(m.grad_eps, q), p(m.jump_eps, q), p(m.ou, q), p(m.mv, q), p(m.vp, q)];
        T::lincomb(&self.weights(periodic), &terms)
    }
}

/// Growing-horizon pre-training schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultistepConfig {
    pub n0: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub alpha: f64,
    pub epochs_per_stage: usize,
}

impl Default for MultistepConfig {
    fn default() -> Self {
        Self {
            n0: 10,
            n_min: 5,
            n_max: 50,
            alpha: 1.1,
            epochs_per_stage: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub l_max: f64,
    pub n_test: usize,
    pub seed: u64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub multistep: MultistepConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let a = AdamWConfig::default();
        Self {
            epochs: 200,
            batch_size: 4,
            lr: 5e-2,
            l_max: L_MAX,
            n_test: 1,
            seed: 0,
            weight_decay: a.weight_decay,
            beta1: a.beta1,
            beta2: a.beta2,
            adam_eps: a.eps,
            plateau_patience: 30,
            plateau_factor: 0.5,
            multistep: MultistepConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        let bad = |m: &str| Err(TrainingError::Config(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.l_max > 0.0) {
            return bad("l_max must be positive");
        }
        if self.n_test == 0 {
            return bad("n_test must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        let m = &self.multistep;
        if m.n0 == 0 || m.n_min == 0 || m.n_min > m.n_max || !(m.alpha >= 1.0) {
            return bad("multistep requires n0 >= 1, 1 <= n_min <= n_max and alpha >= 1");
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// `max(min(b, c), a)`.
pub fn clip(a: usize, b: usize, c: usize) -> usize {
    b.min(c).max(a)
}

/// A training problem: discretization, initial state, fixed step and the
/// reference states at every step.
#[derive(Debug, Clone)]
pub struct TrainProblem {
    pub name: String,
    pub disc: Arc<Discretization>,
    pub u0: Vec<f64>,
    pub dt: f64,
    pub n_steps: usize,
    pub reference: Vec<Vec<f64>>,
    pub periodic: bool,
    pub integrator: Integrator,
    /// Viscosity cap of the neural model on this problem.
    pub c_max: f64,
}

impl TrainProblem {
    /// Fix the step from the initial state and build the reference.
    pub fn new(
        name: impl Into<String>,
        disc: Arc<Discretization>,
        u0: Vec<f64>,
        reference: &ReferenceKind,
        cfl: f64,
        c_max: f64,
        n_steps: usize,
    ) -> Result<Self, TrainingError> {
        let dt = training_dt(&disc, &u0, cfl, c_max)?;
        let reference = build_reference(&disc, reference, dt, n_steps)?;
        Ok(Self {
            name: name.into(),
            periodic: disc.mesh.is_periodic(),
            integrator: Integrator::default_for(disc.k()),
            disc,
            u0,
            dt,
            n_steps,
            reference,
            c_max,
        })
    }

    fn model(&self, net: Arc<NetworkParams>, param: Option<crate::autodiff::ParamId>) -> ViscosityModel {
        ViscosityModel::Neural(NeuralViscosity {
            net,
            param,
            c_max: self.c_max,
        })
    }
}

/// Per-step and cumulative metrics of one unroll plus the weighted total.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub per_step: Vec<Metrics<f64>>,
    pub cumulative: Metrics<f64>,
    pub total: f64,
    pub blew_up: bool,
}

impl LossBreakdown {
    fn sentinel(l_max: f64) -> Self {
        Self {
            total: l_max,
            blew_up: true,
            ..Default::default()
        }
    }
}

/// Unroll `n` steps from `u0` and accumulate the loss.
pub fn rollout<T: Real>(
    p: &TrainProblem,
    model: &ViscosityModel,
    u0: Vec<T>,
    n: usize,
    cfg: &LossConfig,
) -> Result<(T, Vec<Metrics<f64>>), TrainingError> {
    if n > p.n_steps || p.reference.len() <= n {
        return Err(TrainingError::Config(format!("{}: {n} steps requested, reference has {}", p.name, p.n_steps)));
    }
    let mut state = SolutionState::new(u0);
    let mut terms = Vec::with_capacity(n);
    let mut per_step = Vec::with_capacity(n);
    for s in 0..n {
        let (next, mu) = solver::step(&p.disc, model, &state, p.dt, p.integrator, s)?;
        let m = compute_metrics(&p.disc, &next.u, &p.reference[s + 1], mu.as_ref(), &state.u, cfg.q, cfg.vp_eps)?;
        terms.push(cfg.combine(&m, p.periodic));
        per_step.push(m.values());
        state = next;
    }
    Ok((T::sum(&terms), per_step))
}

fn breakdown(total: f64, per_step: Vec<Metrics<f64>>) -> LossBreakdown {
    let mut cumulative = Metrics::default();
    for m in &per_step {
        cumulative.add(m);
    }
    LossBreakdown {
        per_step,
        cumulative,
        total,
        blew_up: false,
    }
}

fn with_theta(net: &NetworkParams, theta: &[f64]) -> Arc<NetworkParams> {
    Arc::new(NetworkParams {
        theta: theta.to_vec(),
        ..net.clone()
    })
}

/// Loss of `n` steps without gradients; blow-ups give the `l_max` sentinel.
pub fn loss_value(net: &NetworkParams, p: &TrainProblem, n: usize, cfg: &LossConfig, l_max: f64) -> Result<LossBreakdown, TrainingError> {
    let model = p.model(Arc::new(net.clone()), None);
    match rollout::<f64>(p, &model, p.u0.clone(), n, cfg) {
        Ok((total, steps)) => Ok(breakdown(total, steps)),
        Err(TrainingError::Solver(e)) if e.is_blowup() => Ok(LossBreakdown::sentinel(l_max)),
        Err(e) => Err(e),
    }
}

/// Loss of `n` steps evaluated in double-double arithmetic; `None` on blow-up.
pub fn loss_value_dd(net: &NetworkParams, p: &TrainProblem, n: usize, cfg: &LossConfig) -> Result<Option<Dd>, TrainingError> {
    let model = p.model(Arc::new(net.clone()), None);
    let u0: Vec<Dd> = p.u0.iter().map(|&x| Dd::new(x)).collect();
    match rollout::<Dd>(p, &model, u0, n, cfg) {
        Ok((total, _)) => Ok(Some(total)),
        Err(TrainingError::Solver(e)) if e.is_blowup() => Ok(None),
        Err(e) => Err(e),
    }
}

/// Central difference of the loss in parameter `i` with step `h`. Losses are
/// evaluated in double-double so the quotient is not swamped by rounding, and
/// the steps actually taken after rounding `theta_i +- h` are used.
pub fn loss_central_difference(net: &NetworkParams, p: &TrainProblem, n: usize, cfg: &LossConfig, i: usize, h: f64) -> Result<f64, TrainingError> {
    let t = net.theta[i];
    let (tp, tm) = (t + h, t - h);
    let mut plus = net.clone();
    plus.theta[i] = tp;
    let mut minus = net.clone();
    minus.theta[i] = tm;
    let blew = || TrainingError::Config(format!("{}: unroll blew up while differencing parameter {i}", p.name));
    let lp = loss_value_dd(&plus, p, n, cfg)?.ok_or_else(blew)?;
    let lm = loss_value_dd(&minus, p, n, cfg)?.ok_or_else(blew)?;
    Ok(((lp - lm) / (Dd::new(tp) - Dd::new(tm))).value())
}

/// Loss of `n` steps and its gradient with respect to the network weights.
/// The gradient is `None` when the unroll blew up.
pub fn loss_and_grad(
    net: &NetworkParams,
    p: &TrainProblem,
    n: usize,
    cfg: &LossConfig,
    l_max: f64,
) -> Result<(LossBreakdown, Option<Vec<f64>>), TrainingError> {
    let tape = Tape::new();
    let pid = tape.register_params(net.n_params());
    let model = p.model(Arc::new(net.clone()), Some(pid));
    // the initial state goes on the tape so the network block has a tape to record on
    let u0 = tape.vars(&p.u0);
    match rollout(p, &model, u0, n, cfg) {
        Ok((loss, steps)) => {
            let g = tape.backward(&loss)?;
            Ok((breakdown(loss.value(), steps), Some(g.param(pid).to_vec())))
        }
        Err(TrainingError::Solver(e)) if e.is_blowup() => Ok((LossBreakdown::sentinel(l_max), None)),
        Err(e) => Err(e),
    }
}

/// Scalar loss summary used by the training loop.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub total: f64,
    pub terms: Metrics<f64>,
    pub blew_up: bool,
}

impl Evaluation {
    fn accumulate(list: &[Evaluation]) -> Evaluation {
        let mut out = Evaluation::default();
        for e in list {
            out.total += e.total;
            out.terms.add(&e.terms);
            out.blew_up |= e.blew_up;
        }
        out
    }
}

/// What the training loop needs from a problem set.
pub trait Objective: Sync {
    fn n_train(&self) -> usize;
    fn n_test(&self) -> usize;
    /// Longest horizon every training problem supports.
    fn max_steps(&self) -> usize;
    /// Loss of training problem `j` over `n` steps with its gradient (`None` on blow-up).
    fn train_eval(&self, theta: &[f64], j: usize, n: usize) -> Result<(Evaluation, Option<Vec<f64>>), TrainingError>;
    /// Loss of training problem `j` without gradient.
    fn train_value(&self, theta: &[f64], j: usize, n: usize) -> Result<Evaluation, TrainingError>;
    /// Loss of test problem `j`.
    fn test_value(&self, theta: &[f64], j: usize, n: usize) -> Result<Evaluation, TrainingError>;
}

/// Neural viscosity trained through the DG solver.
pub struct PhysicsObjective {
    pub net: NetworkParams,
    pub train: Vec<TrainProblem>,
    pub test: Vec<TrainProblem>,
    pub loss: LossConfig,
    pub l_max: f64,
}

impl PhysicsObjective {
    fn eval(&self, theta: &[f64], p: &TrainProblem, n: usize) -> Result<Evaluation, TrainingError> {
        let net = with_theta(&self.net, theta);
        let b = loss_value(&net, p, n.min(p.n_steps), &self.loss, self.l_max)?;
        Ok(Evaluation {
            total: b.total,
            terms: b.cumulative,
            blew_up: b.blew_up,
        })
    }
}

impl Objective for PhysicsObjective {
    fn n_train(&self) -> usize {
        self.train.len()
    }

    fn n_test(&self) -> usize {
        self.test.len()
    }

    fn max_steps(&self) -> usize {
        self.train.iter().map(|p| p.n_steps).min().unwrap_or(0)
    }

    fn train_eval(&self, theta: &[f64], j: usize, n: usize) -> Result<(Evaluation, Option<Vec<f64>>), TrainingError> {
        let p = &self.train[j];
        let net = with_theta(&self.net, theta);
        let (b, g) = loss_and_grad(&net, p, n.min(p.n_steps), &self.loss, self.l_max)?;
        let e = Evaluation {
            total: b.total,
            terms: b.cumulative,
            blew_up: b.blew_up,
        };
        Ok((e, g))
    }

    fn train_value(&self, theta: &[f64], j: usize, n: usize) -> Result<Evaluation, TrainingError> {
        self.eval(theta, &self.train[j], n)
    }

    fn test_value(&self, theta: &[f64], j: usize, n: usize) -> Result<Evaluation, TrainingError> {
        self.eval(theta, &self.test[j], n)
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: u64,
    pub lr: f64,
    pub n_steps: usize,
    pub train_loss: f64,
    pub test: Option<Evaluation>,
    /// Parameters were reset to the best snapshot after this epoch's test.
    pub restored: bool,
    pub wall_time: f64,
}

/// Mutable training state; survives across calls so pre-training and the
/// main loop share optimizer moments and best-model bookkeeping.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub theta: Vec<f64>,
    pub best_theta: Vec<f64>,
    pub best_loss: f64,
    /// Horizon at which `best_loss` was measured.
    pub best_n: usize,
    pub opt: AdamW,
    pub plateau: Plateau,
    pub epoch: u64,
    last_train: Option<f64>,
    started: Instant,
}

impl Trainer {
    pub fn new(theta0: Vec<f64>, cfg: &TrainConfig) -> Self {
        Self {
            opt: AdamW::new(theta0.len(), cfg.adamw()),
            best_theta: theta0.clone(),
            theta: theta0,
            best_loss: f64::INFINITY,
            best_n: 0,
            plateau: Plateau::new(cfg.plateau_patience, cfg.plateau_factor),
            epoch: 0,
            last_train: None,
            started: Instant::now(),
        }
    }

    /// Continue from saved parameters, optimizer state and bookkeeping.
    pub fn resume(theta: Vec<f64>, opt: AdamW, best_loss: f64, epoch: u64, cfg: &TrainConfig) -> Self {
        let mut t = Self::new(theta, cfg);
        t.opt = opt;
        t.best_loss = best_loss;
        t.epoch = epoch;
        t
    }

    fn evaluate_test<O: Objective + ?Sized>(&self, obj: &O, theta: &[f64], n: usize) -> Result<Evaluation, TrainingError> {
        let evals: Vec<Evaluation> = if obj.n_test() > 0 {
            (0..obj.n_test()).into_par_iter().map(|j| obj.test_value(theta, j, n)).collect::<Result<_, _>>()?
        } else {
            (0..obj.n_train()).into_par_iter().map(|j| obj.train_value(theta, j, n)).collect::<Result<_, _>>()?
        };
        Ok(Evaluation::accumulate(&evals))
    }

    /// Run `epochs` epochs at horizon `n`.
    pub fn run_epochs<O: Objective + ?Sized>(
        &mut self,
        obj: &O,
        cfg: &TrainConfig,
        epochs: usize,
        n: usize,
        mut observe: impl FnMut(&EpochLog),
    ) -> Result<(), TrainingError> {
        cfg.validate()?;
        if obj.n_train() == 0 {
            return Err(TrainingError::Config("no training problems".into()));
        }
        if n != self.best_n {
            // losses at different horizons are not comparable
            self.best_loss = f64::INFINITY;
            self.best_n = n;
        }
        for _ in 0..epochs {
            if let Some(l) = self.last_train {
                let lr = self.plateau.step(l, self.opt.lr());
                self.opt.set_lr(lr);
            }
            let mut order: Vec<usize> = (0..obj.n_train()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ self.epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            order.shuffle(&mut rng);

            let mut epoch_loss = 0.0;
            let mut any_ok = false;
            let mut failures = Vec::new();
            for batch in order.chunks(cfg.batch_size) {
                let theta = &self.theta;
                let results: Vec<(Evaluation, Option<Vec<f64>>)> =
                    batch.par_iter().map(|&j| obj.train_eval(theta, j, n)).collect::<Result<_, _>>()?;
                let mut grad: Option<Vec<f64>> = None;
                for (&j, (e, g)) in batch.iter().zip(&results) {
                    epoch_loss += e.total;
                    match g {
                        Some(g) => {
                            any_ok = true;
                            match grad.as_mut() {
                                Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                                None => grad = Some(g.clone()),
                            }
                        }
                        None => failures.push(j),
                    }
                }
                if let Some(g) = grad {
                    if let Err(e) = self.opt.step(&mut self.theta, &g) {
                        log::warn!("epoch {}: optimizer step skipped: {e}", self.epoch);
                    }
                }
            }
            if self.epoch == 0 && !any_ok {
                return Err(TrainingError::AllFailed(format!("problems {failures:?} blew up")));
            }
            self.last_train = Some(epoch_loss);

            let mut test = None;
            let mut restored = false;
            if (self.epoch + 1) % cfg.n_test as u64 == 0 {
                let ev = self.evaluate_test(obj, &self.theta, n)?;
                if ev.total < self.best_loss {
                    self.best_loss = ev.total;
                    self.best_theta = self.theta.clone();
                } else if !(ev.total <= cfg.l_max) {
                    log::warn!("epoch {}: unstable model (test loss {:e}); restoring best parameters", self.epoch, ev.total);
                    self.theta = self.best_theta.clone();
                    self.opt.set_lr(self.opt.lr() * 0.5);
                    restored = true;
                }
                test = Some(ev);
            }
            observe(&EpochLog {
                epoch: self.epoch,
                lr: self.opt.lr(),
                n_steps: n,
                train_loss: epoch_loss,
                test,
                restored,
                wall_time: self.started.elapsed().as_secs_f64(),
            });
            self.epoch += 1;
        }
        Ok(())
    }

    /// Sum of the training losses at horizon `n` without gradients.
    pub fn probe<O: Objective + ?Sized>(&self, obj: &O, n: usize) -> Result<f64, TrainingError> {
        let theta = &self.theta;
        let evals: Vec<Evaluation> = (0..obj.n_train()).into_par_iter().map(|j| obj.train_value(theta, j, n)).collect::<Result<_, _>>()?;
        Ok(evals.iter().map(|e| e.total).sum())
    }
}

/// Algorithm loop at the full horizon; returns the best parameters.
pub fn train<O: Objective + ?Sized>(obj: &O, cfg: &TrainConfig, theta0: Vec<f64>, observe: impl FnMut(&EpochLog)) -> Result<Trainer, TrainingError> {
    let mut t = Trainer::new(theta0, cfg);
    t.run_epochs(obj, cfg, cfg.epochs, obj.max_steps(), observe)?;
    Ok(t)
}

/// Largest `a <= limit` with `avg(n + a) <= alpha avg(n)`, where `avg(m)` is
/// the per-step loss over `m` steps. Doubling then bisection; assumes the
/// per-step loss grows with the horizon.
pub fn horizon_increment(avg: impl Fn(usize) -> Result<f64, TrainingError>, n: usize, alpha: f64, limit: usize) -> Result<usize, TrainingError> {
    if limit == 0 {
        return Ok(0);
    }
    let base = avg(n)?;
    let ok = |a: usize| -> Result<bool, TrainingError> { Ok(avg(n + a)? <= alpha * base) };
    if !ok(1)? {
        return Ok(0);
    }
    let mut good = 1;
    let mut bad = None;
    while good < limit {
        let next = (good * 2).min(limit);
        if ok(next)? {
            good = next;
        } else {
            bad = Some(next);
            break;
        }
    }
    if let Some(mut hi) = bad {
        while hi - good > 1 {
            let mid = (good + hi) / 2;
            if ok(mid)? {
                good = mid;
            } else {
                hi = mid;
            }
        }
    }
    Ok(good)
}

/// Train a few epochs per stage while growing the horizon from `n0` to the
/// full length. Returns the final horizon.
pub fn multistep_pretrain<O: Objective + ?Sized>(
    obj: &O,
    cfg: &TrainConfig,
    trainer: &mut Trainer,
    mut observe: impl FnMut(&EpochLog),
) -> Result<usize, TrainingError> {
    let m = cfg.multistep;
    let full = obj.max_steps();
    let mut n = m.n0.min(full);
    if n == 0 {
        return Err(TrainingError::Config("training problems have no steps".into()));
    }
    while n < full {
        trainer.run_epochs(obj, cfg, m.epochs_per_stage, n, &mut observe)?;
        let avg = |k: usize| -> Result<f64, TrainingError> { Ok(trainer.probe(obj, k)? / k as f64) };
        let limit = m.n_max.min(full - n);
        let a = horizon_increment(avg, n, m.alpha, limit)?;
        let step = clip(m.n_min, a, m.n_max);
        log::info!("horizon {n} -> {} (probe increment {a})", (n + step).min(full));
        n = (n + step).min(full);
    }
    Ok(n)
}
