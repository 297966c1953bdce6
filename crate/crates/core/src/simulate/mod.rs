//! Path generation for the d-dimensional process and its radial reduction.
//!
//! Both simulators use fixed-step Euler–Maruyama inside annuli. Near a membrane
//! with nonzero skew coefficient the step is corrected by the skew rule: if the
//! Brownian bridge of the step touches the membrane (always when it crosses,
//! with probability exp(-2 d0 d1 / h) otherwise) the end point is placed outside
//! with probability `alpha` and inside with probability `1 - alpha`, at the same
//! distance from the membrane as the proposal. Without drift this reproduces the
//! transition kernel of skew Brownian motion exactly. Steps crossing several
//! membranes are bisected along a Brownian bridge. Membranes with coefficient
//! zero never touch the RNG, so they can be added or removed without changing
//! any path.
//!
//! Every path owns a ChaCha8 stream: the key is the master seed expanded by
//! `seed_from_u64`, the stream id is the path index. Paths are therefore
//! reproducible bit-for-bit independently of the number of worker threads.

mod export;
mod stepper;

pub use export::{read_binary, write_binary, write_csv, write_local_time_csv, BinaryFrame, MAGIC, VERSION};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radial::{RadialModel, SkewTable};
use crate::weights::WeightField;
use stepper::{Geometry, Stepper};

/// Time-stepping scheme. Only one is implemented; the tag is echoed into artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Euler–Maruyama with distance-preserving skew reflection at membranes.
    #[default]
    EulerSkew,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dim: usize,
    pub horizon: f64,
    pub step: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Half-width of the shell used by the occupation local-time estimator.
    pub shell_eps: f64,
    /// Start point: d coordinates for the full simulator, a single radius or level otherwise.
    pub start: Vec<f64>,
    /// Record every n-th grid time (the final time is always recorded).
    pub record_every: usize,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
    /// Keep the driving Gaussian increments of every grid step.
    pub keep_noise: bool,
    /// Levels tracked for local time in addition to the membrane radii.
    pub track_levels: Vec<f64>,
    /// Radial bands (lo, hi) whose occupation time is accumulated.
    pub occupation_bands: Vec<(f64, f64)>,
    pub scheme: Scheme,
}

impl SimConfig {
    pub fn new(dim: usize, horizon: f64, step: f64, n_paths: usize, seed: u64, start: Vec<f64>) -> Self {
        Self {
            dim,
            horizon,
            step,
            n_paths,
            seed,
            shell_eps: 0.02,
            start,
            record_every: 1,
            workers: None,
            keep_noise: false,
            track_levels: vec![],
            occupation_bands: vec![],
            scheme: Scheme::EulerSkew,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Validation(format!("step must be positive, got {}", self.step)));
        }
        if !(self.horizon >= self.step) {
            return Err(Error::Validation(format!(
                "horizon {} must be at least one step {}",
                self.horizon, self.step
            )));
        }
        if !(self.shell_eps > 0.0) {
            return Err(Error::Validation("shell_eps must be positive".into()));
        }
        if self.n_paths == 0 {
            return Err(Error::Validation("n_paths must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Validation("record_every must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Validation("workers must be at least 1".into()));
        }
        if self.start.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("start point must be finite".into()));
        }
        Ok(())
    }

    /// Number of Euler steps; the horizon is rounded to the nearest multiple of the step.
    pub fn n_steps(&self) -> usize {
        (self.horizon / self.step).round().max(1.0) as usize
    }
}

/// Accumulated estimate for one level at every recorded time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSeries {
    pub level: f64,
    pub values: Vec<f64>,
}

/// One simulated path on the recording grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub path: u64,
    /// Coordinates per recorded point: d for the full process, 1 otherwise.
    pub dim: usize,
    pub step: f64,
    pub shell_eps: f64,
    pub record_every: usize,
    pub times: Vec<f64>,
    /// Flat, `times.len() * dim` values.
    pub positions: Vec<f64>,
    /// Occupation local-time estimate per tracked level.
    pub local_time: Vec<LevelSeries>,
    /// Signed crossing counts per tracked level (+1 outward, -1 inward).
    pub crossings: Vec<i64>,
    /// Occupation time of each configured band over the whole horizon.
    pub occupation: Vec<f64>,
    /// Driving increments, `n_steps * dim` values, when requested.
    pub noise: Option<Vec<f64>>,
    /// Per-step radial displacement without the skew corrections (drift plus
    /// martingale part of the radius), kept together with `noise`.
    pub increments: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    /// Radial coordinate (the signed level for the 1D line harness).
    pub fn radius(&self, i: usize) -> f64 {
        let p = self.position(i);
        if p.len() == 1 {
            p[0]
        } else {
            p.iter().map(|v| v * v).sum::<f64>().sqrt()
        }
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.times.len()).map(|i| self.radius(i)).collect()
    }

    pub fn terminal(&self) -> &[f64] {
        self.position(self.times.len() - 1)
    }

    pub fn terminal_radius(&self) -> f64 {
        self.radius(self.times.len() - 1)
    }

    pub fn level_index(&self, a: f64) -> Option<usize> {
        self.local_time.iter().position(|l| l.level == a)
    }
}

fn run_paths<F>(cfg: &SimConfig, paths: std::ops::Range<u64>, f: F) -> Result<Vec<Trajectory>>
where
    F: Fn(u64) -> Result<Trajectory> + Sync + Send,
{
    let work = || paths.clone().into_par_iter().map(&f).collect::<Result<Vec<_>>>();
    match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work),
        None => work(),
    }
}

fn tracked_levels(skew: &SkewTable, cfg: &SimConfig) -> Vec<f64> {
    let mut levels = skew.radii();
    for &l in &cfg.track_levels {
        if !levels.contains(&l) {
            levels.push(l);
        }
    }
    levels
}

/// Radial SDE dr = b(r) dt + dB + sum coeff_k dl^{a_k}, started at `cfg.start[0] > 0`.
pub fn simulate_radial(rm: &RadialModel, cfg: &SimConfig) -> Result<Vec<Trajectory>> {
    simulate_radial_paths(rm, cfg, 0..cfg.n_paths as u64)
}

/// Like [`simulate_radial`] for an explicit range of path indices.
pub fn simulate_radial_paths(
    rm: &RadialModel,
    cfg: &SimConfig,
    paths: std::ops::Range<u64>,
) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    if cfg.start.len() != 1 || !(cfg.start[0] > 0.0) {
        return Err(Error::Usage("radial simulation needs a single positive start radius".into()));
    }
    let drift = rm.drift_fn();
    let stepper = Stepper::new(
        Geometry::Radial,
        Box::new(move |x: &[f64], out: &mut [f64]| {
            out[0] = drift(x[0]);
            if out[0].is_finite() {
                Ok(())
            } else {
                Err(Error::eval(x, "radial drift is not finite"))
            }
        }),
        &rm.skew,
        tracked_levels(&rm.skew, cfg),
        cfg,
    );
    run_paths(cfg, paths, |p| stepper.run(p))
}

/// One-dimensional harness on the whole line: levels may be any real number and
/// no positivity is enforced. Used for closed-form checks on skew Brownian motion.
pub fn simulate_line(rm: &RadialModel, cfg: &SimConfig) -> Result<Vec<Trajectory>> {
    simulate_line_paths(rm, cfg, 0..cfg.n_paths as u64)
}

pub fn simulate_line_paths(
    rm: &RadialModel,
    cfg: &SimConfig,
    paths: std::ops::Range<u64>,
) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    if cfg.start.len() != 1 {
        return Err(Error::Usage("line simulation needs a single start level".into()));
    }
    let drift = rm.drift_fn();
    let stepper = Stepper::new(
        Geometry::Line,
        Box::new(move |x: &[f64], out: &mut [f64]| {
            out[0] = drift(x[0]);
            Ok(())
        }),
        &rm.skew,
        tracked_levels(&rm.skew, cfg),
        cfg,
    );
    run_paths(cfg, paths, |p| stepper.run(p))
}

/// Full d-dimensional SDE X = x + W + int grad(rho)/(2 rho)(X) ds + N.
pub fn simulate_full(wf: &WeightField, st: &SkewTable, cfg: &SimConfig) -> Result<Vec<Trajectory>> {
    simulate_full_paths(wf, st, cfg, 0..cfg.n_paths as u64)
}

pub fn simulate_full_paths(
    wf: &WeightField,
    st: &SkewTable,
    cfg: &SimConfig,
    paths: std::ops::Range<u64>,
) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    if cfg.dim != wf.dim() || cfg.start.len() != cfg.dim {
        return Err(Error::Usage(format!(
            "start point must have {} coordinates, got {}",
            wf.dim(),
            cfg.start.len()
        )));
    }
    if cfg.start.iter().all(|&v| v == 0.0) {
        return Err(Error::Usage("the full simulator cannot start at the origin".into()));
    }
    let density = wf.density.clone();
    let stepper = Stepper::new(
        Geometry::Full,
        Box::new(move |x: &[f64], out: &mut [f64]| density.drift_into(x, out)),
        st,
        tracked_levels(st, cfg),
        cfg,
    );
    run_paths(cfg, paths, |p| stepper.run(p))
}

/// How a stopped radial path left its interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitSide {
    Lower,
    Upper,
    /// Still inside at the horizon.
    Undecided,
}

/// Runs radial paths from `cfg.start[0]` until they leave (lo, hi) or reach the horizon.
pub fn first_exit_radial(rm: &RadialModel, cfg: &SimConfig, lo: f64, hi: f64) -> Result<Vec<(ExitSide, f64)>> {
    cfg.validate()?;
    let r0 = *cfg.start.first().ok_or_else(|| Error::Usage("missing start radius".into()))?;
    if !(lo < r0 && r0 < hi) && !(lo <= r0 && r0 <= hi && rm.skew.get(r0).is_some()) {
        return Err(Error::Usage(format!("start {r0} must lie in ({lo}, {hi})")));
    }
    let drift = rm.drift_fn();
    let stepper = Stepper::new(
        Geometry::Radial,
        Box::new(move |x: &[f64], out: &mut [f64]| {
            out[0] = drift(x[0]);
            if out[0].is_finite() {
                Ok(())
            } else {
                Err(Error::eval(x, "radial drift is not finite"))
            }
        }),
        &rm.skew,
        vec![],
        cfg,
    );
    let run = || {
        (0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|p| stepper.run_until_exit(p, lo, hi))
            .collect::<Result<Vec<_>>>()
    };
    match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(run),
        None => run(),
    }
}

/// Occupation estimate (1 / 2 eps) sum_{s < t} h 1{| |X_s| - a | < eps} at each recorded time.
pub fn local_time_estimate(traj: &Trajectory, a: f64, eps: f64) -> Result<Vec<f64>> {
    if eps == traj.shell_eps {
        if let Some(i) = traj.level_index(a) {
            return Ok(traj.local_time[i].values.clone());
        }
    }
    if traj.record_every != 1 {
        return Err(Error::Usage(format!(
            "level {a} with eps {eps} is not tracked and the path is downsampled"
        )));
    }
    let n = traj.times.len();
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    let w = traj.step / (2.0 * eps);
    for i in 0..n {
        out.push(acc);
        if (traj.radius(i) - a).abs() < eps {
            acc += w;
        }
    }
    Ok(out)
}

/// Symmetric Tanaka residual at every grid time,
///
/// R_t = |r_t - a| - |r_0 - a| - sum_s sign(r_s - a) dR_s
///       - sum_{k: a_k != a} coeff_k sign(a_k - a) l_t^{a_k} - l_t^a,
///
/// where dR is the per-step radial displacement without skew corrections and
/// `skew` supplies the coefficients of the other membranes. Needs every step
/// recorded, the increments retained and all skew membranes tracked.
pub fn tanaka_residual(traj: &Trajectory, skew: &SkewTable, a: f64) -> Result<Vec<f64>> {
    if traj.record_every != 1 {
        return Err(Error::Usage("tanaka residual needs every step recorded (record_every = 1)".into()));
    }
    let inc = traj
        .increments
        .as_ref()
        .ok_or_else(|| Error::Usage("tanaka residual needs retained increments (keep_noise)".into()))?;
    let series = |level: f64| {
        traj.level_index(level)
            .map(|i| &traj.local_time[i].values)
            .ok_or_else(|| Error::Usage(format!("level {level} is not tracked")))
    };
    let lt = series(a)?;
    let others = skew
        .active()
        .filter(|e| e.radius != a)
        .map(|e| Ok((e.coeff * sign(e.radius - a), series(e.radius)?)))
        .collect::<Result<Vec<_>>>()?;
    let r = traj.radii();
    let mut out = Vec::with_capacity(r.len());
    let mut integral = 0.0;
    let d0 = (r[0] - a).abs();
    for i in 0..r.len() {
        if i > 0 {
            integral += sign(r[i - 1] - a) * inc[i - 1];
        }
        let pushes: f64 = others.iter().map(|(c, l)| c * l[i]).sum();
        out.push((r[i] - a).abs() - d0 - integral - pushes - lt[i]);
    }
    Ok(out)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
