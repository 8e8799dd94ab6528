//! `solve`, `compare`, `convergence` and `mesh-gen`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dg::Discretization;
use crate::mesh::{build_structured_tri_2d, build_uniform_1d, load_mesh, write_mesh};
use crate::nn::load_checkpoint;
use crate::solver::{run_observed, training_dt, ProblemSpec, TimeControls};
use crate::training::metrics::{cell_mean_viscosity, compute_metrics};
use crate::training::reference::analytic_state;
use crate::training::{build_reference, ReferenceKind};
use crate::viscosity::{EvConfig, NeuralViscosity, ViscosityModel};

use super::config::{CompareConfig, ConvergenceConfig, MeshGenConfig, ModelSpec, SolveConfig};
use super::output::{write_csv, write_json, write_rows, MetricRow};
use super::registry::{test_case, ReferenceSource, TestCase};
use super::{ensure_dir, ExperimentError};

/// Exponent of the discrete norms in reported metrics (`L1`).
const Q: u32 = 1;
const VP_EPS: f64 = 1e-8;

struct Setup {
    case: TestCase,
    k: usize,
    cfl: f64,
    t_final: f64,
    disc: Arc<Discretization>,
    u0: Vec<f64>,
}

fn setup(case: u32, k: usize, n: Option<usize>, cfl: Option<f64>, t_final: Option<f64>, mesh: Option<&Path>) -> Result<Setup, ExperimentError> {
    let case = test_case(case)?;
    if k == 0 {
        return Err(ExperimentError::Config("polynomial degree must be at least 1".into()));
    }
    let d = case.defaults_for(k);
    let n = n.unwrap_or(d.n);
    let m = match mesh {
        Some(p) => load_mesh(p)?,
        None => case.mesh(n)?,
    };
    let disc = case.discretize(m, k)?;
    let u0 = case.initial_state(&disc);
    Ok(Setup {
        k,
        cfl: cfl.unwrap_or(d.cfl),
        t_final: t_final.unwrap_or(case.t_final),
        disc: Arc::new(disc),
        u0,
        case,
    })
}

/// Turn a model name into a producer, loading checkpoints as needed.
fn build_model(spec: &ModelSpec, case: &TestCase) -> Result<ViscosityModel, ExperimentError> {
    Ok(match spec {
        ModelSpec::None => ViscosityModel::None,
        ModelSpec::Ev { c_k, c_max } => {
            let ev = EvConfig {
                c_k: c_k.unwrap_or(case.ev.c_k),
                c_max: c_max.unwrap_or(case.ev.c_max),
                ..case.ev
            };
            ev.validate()?;
            ViscosityModel::Entropy(ev)
        }
        ModelSpec::Nn { checkpoint, c_max } => {
            let ck = load_checkpoint(checkpoint)?.expect_dim(case.dim())?;
            ViscosityModel::Neural(NeuralViscosity {
                net: Arc::new(ck.net),
                param: None,
                c_max: c_max.unwrap_or(case.ev.c_max),
            })
        }
    })
}

/// Fixed step that is stable for every viscosity up to `cap`, rounded so
/// that an integer number of steps lands on `t_final`.
fn fixed_steps(s: &Setup, cap: f64) -> Result<(f64, usize), ExperimentError> {
    let dt = training_dt(&s.disc, &s.u0, s.cfl, cap)?;
    let n = (s.t_final / dt - 1e-9).ceil().max(1.0) as usize;
    Ok((s.t_final / n as f64, n))
}

enum Reference {
    None,
    Analytic(ReferenceKind),
    Steps(Vec<Vec<f64>>),
}

impl Reference {
    fn label(&self) -> &'static str {
        match self {
            Reference::None => "none",
            Reference::Analytic(ReferenceKind::Riemann { .. }) => "exact-riemann",
            Reference::Analytic(_) => "exact-translation",
            Reference::Steps(_) => "overkill",
        }
    }

    fn at(&self, disc: &Discretization, step: usize, t: f64) -> Option<Vec<f64>> {
        match self {
            Reference::None => None,
            Reference::Analytic(kind) => Some(disc.interpolate(|x| analytic_state(kind, &disc.flux, x, t).expect("analytic reference"))),
            Reference::Steps(r) => r.get(step).cloned(),
        }
    }
}

/// Analytic reference when the case has one, else an overkill run on the
/// fixed step grid (or nothing when `levels` is 0 or the step is adaptive).
fn make_reference(s: &Setup, levels: usize, steps: Option<(f64, usize)>) -> Result<Reference, ExperimentError> {
    match s.case.reference {
        ReferenceSource::Translation | ReferenceSource::Riemann => Ok(Reference::Analytic(s.case.reference_kind(levels))),
        ReferenceSource::Overkill => match steps {
            Some((dt, n)) if levels > 0 => Ok(Reference::Steps(build_reference(&s.disc, &s.case.reference_kind(levels), dt, n)?)),
            _ => Ok(Reference::None),
        },
    }
}

/// Cumulative metrics over all steps of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Cumulative {
    pub eps: Option<f64>,
    pub grad_eps: Option<f64>,
    pub jump_eps: Option<f64>,
    pub ou: Option<f64>,
    pub mv: f64,
    pub vp: f64,
    /// Largest viscosity of the run.
    pub mu_max: f64,
}

impl Cumulative {
    fn from_rows(rows: &[MetricRow]) -> Self {
        let sum = |f: fn(&MetricRow) -> Option<f64>| -> Option<f64> { rows.iter().map(f).sum() };
        Cumulative {
            eps: sum(|r| r.eps),
            grad_eps: sum(|r| r.grad_eps),
            jump_eps: sum(|r| r.jump_eps),
            ou: sum(|r| r.ou),
            mv: rows.iter().map(|r| r.mv).sum(),
            vp: rows.iter().map(|r| r.vp).sum(),
            mu_max: rows.iter().map(|r| r.mu_max).fold(0.0, f64::max),
        }
    }

    /// `(name, value)` of the metrics that rank models.
    fn ranked(&self) -> [(&'static str, Option<f64>); 5] {
        [
            ("eps", self.eps),
            ("grad_eps", self.grad_eps),
            ("jump_eps", self.jump_eps),
            ("ou", self.ou),
            ("mv", Some(self.mv)),
        ]
    }
}

struct Outcome {
    rows: Vec<MetricRow>,
    fields: Vec<Vec<f64>>,
    viscosity: Vec<Vec<f64>>,
    steps: usize,
    t_end: f64,
    failure: Option<String>,
}

fn field_rows(disc: &Discretization, step: usize, t: f64, u: &[f64], out: &mut Vec<Vec<f64>>) {
    for c in 0..disc.mesh.n_cells() {
        for i in 0..disc.np() {
            let x = disc.node_coord(c, i);
            let mut r = vec![step as f64, t, c as f64, i as f64, x[0], x[1]];
            r.extend((0..disc.n_vars()).map(|v| u[disc.idx(c, v, i)]));
            out.push(r);
        }
    }
}

/// Run `model` and collect per-step metrics; fields are kept every
/// `field_every` steps when it is non-zero.
fn execute(s: &Setup, model: &ViscosityModel, controls: TimeControls, reference: &Reference, field_every: usize) -> Result<Outcome, ExperimentError> {
    let disc = &s.disc;
    let spec = ProblemSpec {
        disc: disc.clone(),
        u0: s.u0.clone(),
        controls,
    };
    let mut rows = Vec::new();
    let mut fields = Vec::new();
    let mut viscosity = Vec::new();
    if field_every > 0 {
        field_rows(disc, 0, 0.0, &s.u0, &mut fields);
    }
    let mut prev = s.u0.clone();
    let mut err: Option<ExperimentError> = None;
    let mut last_step = 0;
    let res = run_observed(&spec, model, |ev| {
        if err.is_some() {
            return;
        }
        let u = &ev.state.u;
        let reference = reference.at(disc, ev.step, ev.state.t);
        let has_ref = reference.is_some();
        let u_ref = reference.unwrap_or_else(|| u.clone());
        match compute_metrics(disc, u, &u_ref, ev.viscosity, &prev, Q, VP_EPS) {
            Ok(m) => {
                let opt = |x: f64| has_ref.then_some(x);
                rows.push(MetricRow {
                    step: ev.step,
                    t: ev.state.t,
                    dt: ev.dt,
                    eps: opt(m.eps),
                    grad_eps: opt(m.grad_eps),
                    jump_eps: opt(m.jump_eps),
                    ou: opt(m.ou),
                    mv: m.mv,
                    vp: m.vp,
                    mu_max: ev.viscosity.map_or(0.0, |f| f.max_value()),
                });
            }
            Err(e) => err = Some(e.into()),
        }
        if field_every > 0 && ev.step % field_every == 0 {
            field_rows(disc, ev.step, ev.state.t, u, &mut fields);
        }
        if field_every > 0 && (ev.step - 1) % field_every == 0 {
            if let Some(mu) = ev.viscosity {
                for c in 0..disc.mesh.n_cells() {
                    let m = disc.mesh.centroid(c);
                    viscosity.push(vec![ev.step as f64, ev.state.t - ev.dt, c as f64, m[0], m[1], cell_mean_viscosity(disc, mu, c)]);
                }
            }
        }
        last_step = ev.step;
        prev.clone_from(u);
    });
    if let Some(e) = err {
        return Err(e);
    }
    let (state, failure) = match res {
        Ok(st) => (st, None),
        Err((e, st)) if e.is_blowup() => (st, Some(e.to_string())),
        Err((e, _)) => return Err(e.into()),
    };
    if field_every > 0 && last_step % field_every != 0 {
        field_rows(disc, last_step, state.t, &state.u, &mut fields);
    }
    Ok(Outcome {
        rows,
        fields,
        viscosity,
        steps: last_step,
        t_end: state.t,
        failure,
    })
}

fn field_header(n_vars: usize) -> Vec<String> {
    let mut h: Vec<String> = ["step", "t", "cell", "node", "x", "y"].iter().map(|s| s.to_string()).collect();
    h.extend((0..n_vars).map(|v| format!("u{v}")));
    h
}

fn write_outcome(dir: &Path, disc: &Discretization, o: &Outcome) -> Result<(), ExperimentError> {
    ensure_dir(dir)?;
    write_rows(&dir.join("metrics.csv"), &o.rows)?;
    if !o.fields.is_empty() {
        let h = field_header(disc.n_vars());
        let h: Vec<&str> = h.iter().map(String::as_str).collect();
        write_csv(&dir.join("solution.csv"), &h, &o.fields)?;
    }
    write_csv(&dir.join("viscosity.csv"), &["step", "t", "cell", "x", "y", "mu"], &o.viscosity)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub case: u32,
    pub name: String,
    pub k: usize,
    pub n_cells: usize,
    pub n_dofs: usize,
    pub cfl: f64,
    pub t_final: f64,
    pub model: String,
    pub fixed_dt: bool,
    pub reference: String,
    pub steps: usize,
    pub t_end: f64,
    pub status: String,
    pub cumulative: Cumulative,
}

/// One run with metric, field and viscosity files plus `summary.json` in
/// `out`. A blow-up still writes everything, then returns a numerical error.
pub fn solve(cfg: &SolveConfig, out: &Path) -> Result<SolveSummary, ExperimentError> {
    let s = setup(cfg.case, cfg.k, cfg.n, cfg.cfl, cfg.t_final, cfg.mesh.as_deref())?;
    let model = build_model(&cfg.model, &s.case)?;
    let needs_grid = s.case.reference == ReferenceSource::Overkill && cfg.reference_levels > 0;
    let fixed = cfg.fixed_dt || needs_grid;
    let (controls, grid) = if fixed {
        let (dt, n) = fixed_steps(&s, model.c_max().unwrap_or(s.case.ev.c_max))?;
        let c = TimeControls {
            cfl: s.cfl,
            dt: Some(dt),
            n_steps: Some(n),
            ..TimeControls::default()
        };
        (c, Some((dt, n)))
    } else {
        let c = TimeControls {
            cfl: s.cfl,
            t_final: Some(s.t_final),
            ..TimeControls::default()
        };
        (c, None)
    };
    let reference = make_reference(&s, cfg.reference_levels, grid)?;
    let o = execute(&s, &model, controls, &reference, cfg.field_every.max(1))?;
    write_outcome(out, &s.disc, &o)?;
    let summary = SolveSummary {
        case: s.case.id,
        name: s.case.name.clone(),
        k: s.k,
        n_cells: s.disc.mesh.n_cells(),
        n_dofs: s.disc.n_dofs(),
        cfl: s.cfl,
        t_final: s.t_final,
        model: cfg.model.to_string(),
        fixed_dt: fixed,
        reference: reference.label().into(),
        steps: o.steps,
        t_end: o.t_end,
        status: o.failure.clone().unwrap_or_else(|| "ok".into()),
        cumulative: Cumulative::from_rows(&o.rows),
    };
    write_json(&out.join("summary.json"), &summary)?;
    match o.failure {
        Some(f) => Err(ExperimentError::Numerical(format!("{f} (partial results in {})", out.display()))),
        None => Ok(summary),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub model: String,
    pub status: String,
    pub steps: usize,
    pub eps: Option<f64>,
    pub grad_eps: Option<f64>,
    pub jump_eps: Option<f64>,
    pub ou: Option<f64>,
    pub mv: f64,
    pub vp: f64,
    pub mu_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub case: u32,
    pub name: String,
    pub k: usize,
    pub n_cells: usize,
    pub dt: f64,
    pub steps: usize,
    pub reference: String,
    pub rows: Vec<CompareRow>,
    /// Metric name to the model with the smallest cumulative value among completed runs.
    pub winners: BTreeMap<String, String>,
}

fn dir_name(i: usize, label: &str) -> String {
    let clean: String = label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' }).collect();
    format!("{i}-{clean}")
}

/// Every model on the same mesh and step sequence; runs execute in parallel.
pub fn compare(cfg: &CompareConfig, out: &Path) -> Result<CompareSummary, ExperimentError> {
    if cfg.models.is_empty() {
        return Err(ExperimentError::Config("compare needs at least one model".into()));
    }
    let s = setup(cfg.case, cfg.k, cfg.n, cfg.cfl, cfg.t_final, cfg.mesh.as_deref())?;
    let models = cfg.models.iter().map(|m| build_model(m, &s.case)).collect::<Result<Vec<_>, _>>()?;
    let cap = models.iter().filter_map(|m| m.c_max()).fold(s.case.ev.c_max, f64::max);
    let (dt, n) = fixed_steps(&s, cap)?;
    let reference = make_reference(&s, cfg.reference_levels, Some((dt, n)))?;
    let controls = TimeControls {
        cfl: s.cfl,
        dt: Some(dt),
        n_steps: Some(n),
        ..TimeControls::default()
    };
    let outcomes = models
        .par_iter()
        .map(|m| execute(&s, m, controls, &reference, 0))
        .collect::<Result<Vec<_>, _>>()?;
    ensure_dir(out)?;
    let mut rows = Vec::new();
    for (i, (spec, o)) in cfg.models.iter().zip(&outcomes).enumerate() {
        let label = spec.to_string();
        write_outcome(&out.join(dir_name(i, &label)), &s.disc, o)?;
        let c = Cumulative::from_rows(&o.rows);
        rows.push(CompareRow {
            model: label,
            status: o.failure.clone().unwrap_or_else(|| "ok".into()),
            steps: o.steps,
            eps: c.eps,
            grad_eps: c.grad_eps,
            jump_eps: c.jump_eps,
            ou: c.ou,
            mv: c.mv,
            vp: c.vp,
            mu_max: c.mu_max,
        });
    }
    let mut winners = BTreeMap::new();
    let cums: Vec<Cumulative> = outcomes.iter().map(|o| Cumulative::from_rows(&o.rows)).collect();
    for (mi, (name, _)) in Cumulative::default().ranked().iter().enumerate() {
        let best = rows
            .iter()
            .zip(&cums)
            .filter(|(r, _)| r.status == "ok")
            .filter_map(|(r, c)| c.ranked()[mi].1.map(|v| (v, &r.model)))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((_, m)) = best {
            winners.insert(name.to_string(), m.clone());
        }
    }
    write_rows(&out.join("compare.csv"), &rows)?;
    let summary = CompareSummary {
        case: s.case.id,
        name: s.case.name.clone(),
        k: s.k,
        n_cells: s.disc.mesh.n_cells(),
        dt,
        steps: n,
        reference: reference.label().into(),
        rows,
        winners,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub k: usize,
    pub n: usize,
    pub h: f64,
    pub error: f64,
    /// Rate against the previous refinement of the same degree.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub case: u32,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log error` against `log h` per degree; absent
    /// with a single refinement.
    pub slopes: BTreeMap<usize, Option<f64>>,
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// L2 errors at the final time for every degree and refinement.
pub fn convergence(cfg: &ConvergenceConfig, out: Option<&Path>) -> Result<ConvergenceTable, ExperimentError> {
    let case = test_case(cfg.case)?;
    if case.reference != ReferenceSource::Translation {
        return Err(ExperimentError::Config(format!("test case {} has no analytic solution; use case 1 or 2", case.id)));
    }
    if cfg.levels == 0 || cfg.ks.is_empty() || cfg.n0 < 2 {
        return Err(ExperimentError::Config("convergence needs levels >= 1, a degree and n0 >= 2".into()));
    }
    let jobs: Vec<(usize, usize)> = cfg.ks.iter().flat_map(|&k| (0..cfg.levels).map(move |l| (k, cfg.n0 << l))).collect();
    let errors = jobs
        .par_iter()
        .map(|&(k, n)| -> Result<f64, ExperimentError> {
            let s = setup(cfg.case, k, Some(n), cfg.cfl, cfg.t_final, None)?;
            let model = build_model(&cfg.model, &s.case)?;
            let spec = ProblemSpec {
                disc: s.disc.clone(),
                u0: s.u0.clone(),
                controls: TimeControls {
                    cfl: s.cfl,
                    t_final: Some(s.t_final),
                    integrator: Some(cfg.integrator),
                    ..TimeControls::default()
                },
            };
            let fin = run_observed(&spec, &model, |_| {}).map_err(|(e, _)| ExperimentError::from(e))?;
            let kind = s.case.reference_kind(0);
            Ok(s.disc.l2_error(&fin.u, 0, |x| analytic_state(&kind, &s.disc.flux, x, fin.t).expect("translation")[0]))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let width = case.hi[0] - case.lo[0];
    let mut rows = Vec::new();
    let mut slopes = BTreeMap::new();
    for &k in &cfg.ks {
        let mine: Vec<(usize, f64)> = jobs.iter().zip(&errors).filter(|((kk, _), _)| *kk == k).map(|((_, n), e)| (*n, *e)).collect();
        let mut prev: Option<(f64, f64)> = None;
        for &(n, error) in &mine {
            let h = width / n as f64;
            let rate = prev.map(|(ph, pe)| (pe / error).ln() / (ph / h).ln());
            rows.push(ConvergenceRow { k, n, h, error, rate });
            prev = Some((h, error));
        }
        let lx: Vec<f64> = mine.iter().map(|(n, _)| (width / *n as f64).ln()).collect();
        let ly: Vec<f64> = mine.iter().map(|(_, e)| e.ln()).collect();
        slopes.insert(k, ls_slope(&lx, &ly));
    }
    let table = ConvergenceTable { case: case.id, rows, slopes };
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_rows(&dir.join("convergence.csv"), &table.rows)?;
        write_json(&dir.join("summary.json"), &table)?;
    }
    Ok(table)
}

/// Write a structured mesh to `path`; returns the number of cells.
pub fn mesh_gen(cfg: &MeshGenConfig, path: &Path) -> Result<usize, ExperimentError> {
    let mut m = match cfg.dim {
        1 => build_uniform_1d(cfg.lo[0], cfg.hi[0], cfg.n, cfg.periodic)?,
        2 => build_structured_tri_2d(cfg.lo, cfg.hi, cfg.n, cfg.ny.unwrap_or(cfg.n), cfg.periodic)?,
        d => return Err(ExperimentError::Config(format!("mesh dimension must be 1 or 2, got {d}"))),
    };
    for _ in 0..cfg.refine {
        m = m.refine()?;
    }
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    std::fs::write(path, write_mesh(&m)).map_err(|e| ExperimentError::io(path, e))?;
    Ok(m.n_cells())
}
