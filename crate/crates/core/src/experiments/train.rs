//! `train`: problem batteries, the training run and the held-out table.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::flux::FluxModel;
use crate::mesh::{build_structured_tri_2d, build_uniform_1d};
use crate::dg::Discretization;
use crate::nn::{feature_count, load_checkpoint, save_checkpoint, Activation, Checkpoint, NetworkParams};
use crate::training::{multistep_pretrain, rollout, EpochLog, LossConfig, Metrics, PhysicsObjective, ReferenceKind, TrainProblem, Trainer};
use crate::viscosity::{EvConfig, NeuralViscosity, ViscosityModel};

use super::config::{ProblemSet, TrainRunConfig};
use super::output::{write_json, write_rows};
use super::registry::{ic_by_id, InitialCondition};
use super::{ensure_dir, ExperimentError};

fn one_problem(set: &ProblemSet, ic_id: &str, flux_id: &str, cells: usize, k: usize) -> Result<(TrainProblem, EvConfig), ExperimentError> {
    let flux = FluxModel::from_id(flux_id).map_err(|e| ExperimentError::Registry(format!("{e}; known: advection1d, burgers1d, euler1d, advection2d, burgers2d, kpp2d, euler2d")))?;
    let ic = ic_by_id(ic_id)?;
    let euler = flux.is_euler();
    let mesh = match flux.dim() {
        1 => build_uniform_1d(0.0, 1.0, cells, !euler)?,
        _ => build_structured_tri_2d([0.0; 2], [1.0; 2], cells, cells, !euler)?,
    };
    let mut disc = Discretization::new(Arc::new(mesh), k, flux)?;
    if euler {
        let ic = ic.clone();
        disc.set_dirichlet(move |p| ic.eval(&flux, p));
    }
    let u0 = disc.interpolate(|p| ic.eval(&flux, p));
    let kind = match (flux, &ic) {
        (FluxModel::Advection1d { beta }, _) => ReferenceKind::Translation {
            ic: ic.ic_fn(flux),
            beta: [beta, 0.0],
            lo: [0.0; 2],
            hi: [1.0, 0.0],
        },
        (FluxModel::Advection2d { beta }, _) => ReferenceKind::Translation {
            ic: ic.ic_fn(flux),
            beta,
            lo: [0.0; 2],
            hi: [1.0; 2],
        },
        (FluxModel::Euler1d { gamma }, InitialCondition::Riemann1d { left, right, x0 }) => ReferenceKind::Riemann {
            left: *left,
            right: *right,
            x0: *x0,
            gamma,
        },
        _ => ReferenceKind::Overkill {
            ic: ic.ic_fn(flux),
            ev: set.ev,
            levels: set.levels,
        },
    };
    let name = format!("{flux_id}/{ic_id}/n{cells}/k{k}");
    let p = TrainProblem::new(name, Arc::new(disc), u0, &kind, set.cfl, set.c_max, set.n_steps)?;
    Ok((p, set.ev))
}

fn expand(sets: &[ProblemSet]) -> Result<Vec<(TrainProblem, EvConfig)>, ExperimentError> {
    let mut jobs = Vec::new();
    for set in sets {
        if set.n_steps == 0 {
            return Err(ExperimentError::Config("problem sets need n_steps >= 1".into()));
        }
        for ic in &set.ics {
            for f in &set.fluxes {
                for &n in &set.cells {
                    for &k in &set.ks {
                        jobs.push((set, ic.as_str(), f.as_str(), n, k));
                    }
                }
            }
        }
    }
    jobs.par_iter().map(|&(s, ic, f, n, k)| one_problem(s, ic, f, n, k)).collect()
}

/// Every problem of the Cartesian products, with references built in parallel.
pub fn build_problems(sets: &[ProblemSet]) -> Result<Vec<TrainProblem>, ExperimentError> {
    Ok(expand(sets)?.into_iter().map(|(p, _)| p).collect())
}

/// Cumulative `L1` metrics of `model` over the whole problem; `None` on blow-up.
pub fn evaluate_model(p: &TrainProblem, model: &ViscosityModel) -> Result<Option<Metrics<f64>>, ExperimentError> {
    let cfg = LossConfig::default();
    match rollout::<f64>(p, model, p.u0.clone(), p.n_steps, &cfg) {
        Ok((_, steps)) => {
            let mut m = Metrics::default();
            steps.iter().for_each(|s| m.add(s));
            Ok(Some(m))
        }
        Err(crate::training::TrainingError::Solver(e)) if e.is_blowup() => Ok(None),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutRow {
    pub problem: String,
    pub model: String,
    pub status: String,
    pub eps: f64,
    pub grad_eps: f64,
    pub jump_eps: f64,
    pub ou: f64,
    pub mv: f64,
    pub vp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LogRow {
    epoch: u64,
    lr: f64,
    n_steps: usize,
    train_loss: f64,
    test_loss: Option<f64>,
    restored: bool,
    wall_time: f64,
}

impl From<&EpochLog> for LogRow {
    fn from(l: &EpochLog) -> Self {
        LogRow {
            epoch: l.epoch,
            lr: l.lr,
            n_steps: l.n_steps,
            train_loss: l.train_loss,
            test_loss: l.test.map(|t| t.total),
            restored: l.restored,
            wall_time: l.wall_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub n_params: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub epochs: u64,
    pub horizon: usize,
    /// Training loss at the full horizon before any update.
    pub initial_loss: f64,
    /// Training loss at the full horizon with the returned parameters.
    pub final_loss: f64,
    pub best_test_loss: f64,
    pub held_out: Vec<HeldOutRow>,
}

fn held_out_row(problem: &str, model: &str, m: Option<Metrics<f64>>) -> HeldOutRow {
    let m2 = m.unwrap_or(Metrics {
        eps: f64::NAN,
        grad_eps: f64::NAN,
        jump_eps: f64::NAN,
        ou: f64::NAN,
        mv: f64::NAN,
        vp: f64::NAN,
    });
    HeldOutRow {
        problem: problem.into(),
        model: model.into(),
        status: if m.is_some() { "ok".into() } else { "blowup".into() },
        eps: m2.eps,
        grad_eps: m2.grad_eps,
        jump_eps: m2.jump_eps,
        ou: m2.ou,
        mv: m2.mv,
        vp: m2.vp,
    }
}

/// Pre-train, train, save the best network to `checkpoint.bin` and compare it
/// with entropy viscosity on the held-out problems.
pub fn train_run(cfg: &TrainRunConfig, out: &Path) -> Result<TrainSummary, ExperimentError> {
    cfg.train.validate()?;
    cfg.loss.validate()?;
    let train = build_problems(&cfg.problems)?;
    if train.is_empty() {
        return Err(ExperimentError::Config("no training problems".into()));
    }
    let dim = train[0].disc.flux.dim();
    if train.iter().any(|p| p.disc.flux.dim() != dim) {
        return Err(ExperimentError::Config("training problems mix 1D and 2D fluxes".into()));
    }
    let test = build_problems(&cfg.test)?;
    let resumed = match &cfg.resume {
        Some(p) => Some(load_checkpoint(p)?.expect_dim(dim)?),
        None => None,
    };
    let net = match (&resumed, &cfg.hidden) {
        (Some(ck), _) => ck.net.clone(),
        (None, Some(h)) => {
            let mut sizes = vec![feature_count(dim)];
            sizes.extend(h);
            sizes.push(1);
            NetworkParams::with_sizes(sizes, Activation::Gelu, cfg.net_seed)?
        }
        (None, None) => NetworkParams::init(dim, cfg.net_seed)?,
    };
    let obj = PhysicsObjective {
        net: net.clone(),
        train,
        test,
        loss: cfg.loss,
        l_max: cfg.train.l_max,
    };
    let full = obj.train.iter().map(|p| p.n_steps).min().unwrap_or(0);
    ensure_dir(out)?;

    let mut trainer = match resumed {
        Some(ck) => {
            let mut t = Trainer::resume(ck.net.theta.clone(), ck.opt, ck.best_loss, ck.epoch, &cfg.train);
            // the saved best loss was measured at the full horizon
            t.best_n = full;
            t
        }
        None => Trainer::new(net.theta.clone(), &cfg.train),
    };
    let initial_loss = trainer.probe(&obj, full)?;
    let mut log: Vec<LogRow> = Vec::new();
    let mut observe = |l: &EpochLog| {
        log::info!("epoch {} n={} train={:.6e} test={:?} lr={:.2e}", l.epoch, l.n_steps, l.train_loss, l.test.map(|t| t.total), l.lr);
        log.push(l.into());
    };
    if cfg.resume.is_none() && !cfg.skip_multistep {
        multistep_pretrain(&obj, &cfg.train, &mut trainer, &mut observe)?;
    }
    trainer.run_epochs(&obj, &cfg.train, cfg.train.epochs, full, &mut observe)?;
    write_rows(&out.join("train_log.csv"), &log)?;

    let theta = if trainer.best_loss.is_finite() { trainer.best_theta.clone() } else { trainer.theta.clone() };
    let mut fin = trainer.clone();
    fin.theta = theta.clone();
    let final_loss = fin.probe(&obj, full)?;
    let best = NetworkParams { theta, ..net };
    let ck = Checkpoint {
        dim,
        net: best.clone(),
        opt: trainer.opt.clone(),
        best_loss: trainer.best_loss,
        epoch: trainer.epoch,
    };
    save_checkpoint(&ck, out.join("checkpoint.bin"))?;

    let held = expand(&cfg.held_out)?;
    let best = Arc::new(best);
    let rows: Vec<Vec<HeldOutRow>> = held
        .par_iter()
        .map(|(p, ev)| -> Result<Vec<HeldOutRow>, ExperimentError> {
            let nn = ViscosityModel::Neural(NeuralViscosity {
                net: best.clone(),
                param: None,
                c_max: p.c_max,
            });
            Ok(vec![
                held_out_row(&p.name, "nn", evaluate_model(p, &nn)?),
                held_out_row(&p.name, &format!("ev:{}:{}", ev.c_k, ev.c_max), evaluate_model(p, &ViscosityModel::Entropy(*ev))?),
            ])
        })
        .collect::<Result<_, _>>()?;
    let held_out: Vec<HeldOutRow> = rows.into_iter().flatten().collect();
    if !held_out.is_empty() {
        write_rows(&out.join("held_out.csv"), &held_out)?;
    }
    let summary = TrainSummary {
        n_params: best.n_params(),
        n_train: obj.train.len(),
        n_test: obj.test.len(),
        epochs: trainer.epoch,
        horizon: full,
        initial_loss,
        final_loss,
        best_test_loss: trainer.best_loss,
        held_out,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::parse;

    const SMOKE: &str = r#"
        hidden = [8, 8]
        skip_multistep = true
        [[problems]]
        ics = ["box", "sine-w1"]
        fluxes = ["advection1d"]
        cells = [8]
        ks = [1]
        n_steps = 4
        [[held_out]]
        ics = ["piecewise"]
        fluxes = ["advection1d"]
        cells = [8]
        ks = [1]
        n_steps = 4
        ev = { c_k = 0.6, c_max = 0.3 }
        [train]
        epochs = 2
        batch_size = 2
        lr = 1e-3
    "#;

    #[test]
    fn smoke_run_produces_loadable_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let cfg: TrainRunConfig = parse(SMOKE).unwrap();
        let s = train_run(&cfg, dir.path()).unwrap();
        assert_eq!(s.n_train, 2);
        assert_eq!(s.epochs, 2);
        assert_eq!(s.held_out.len(), 2);
        assert!(s.initial_loss.is_finite() && s.final_loss.is_finite());
        let ck = load_checkpoint(dir.path().join("checkpoint.bin")).unwrap();
        assert_eq!(ck.net.sizes, vec![19, 8, 8, 1]);
        assert_eq!(ck.epoch, 2);

        // resuming keeps the best loss unless a better one is found
        let mut again = cfg.clone();
        again.resume = Some(dir.path().join("checkpoint.bin"));
        again.train.epochs = 1;
        let dir2 = tempfile::tempdir().unwrap();
        let s2 = train_run(&again, dir2.path()).unwrap();
        assert_eq!(s2.epochs, 3);
        assert!(s2.best_test_loss <= ck.best_loss);
    }

    #[test]
    fn same_seed_gives_identical_summary() {
        let cfg: TrainRunConfig = parse(SMOKE).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        train_run(&cfg, a.path()).unwrap();
        train_run(&cfg, b.path()).unwrap();
        let ra = std::fs::read(a.path().join("summary.json")).unwrap();
        let rb = std::fs::read(b.path().join("summary.json")).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn unknown_flux_lists_registry() {
        let text = SMOKE.replace("fluxes = [\"advection1d\"]\n        cells = [8]\n        ks = [1]\n        n_steps = 4\n        [[held_out]]", "fluxes = [\"maxwell\"]\n        cells = [8]\n        ks = [1]\n        n_steps = 4\n        [[held_out]]");
        let cfg: TrainRunConfig = parse(&text).unwrap();
        let err = train_run(&cfg, tempfile::tempdir().unwrap().path()).unwrap_err();
        assert!(err.to_string().contains("burgers1d"), "{err}");
    }

    #[test]
    fn sod_problem_uses_exact_reference() {
        let set = ProblemSet {
            ics: vec!["sod".into()],
            fluxes: vec!["euler1d".into()],
            cells: vec![20],
            ks: vec![1],
            cfl: 0.3,
            c_max: 0.5,
            n_steps: 3,
            ev: EvConfig::default(),
            levels: 2,
        };
        let p = build_problems(&[set]).unwrap();
        assert!(!p[0].periodic);
        // far-left cells sit outside the wave fan
        assert_eq!(p[0].reference[3][0], 1.0);
    }
}
