//! Statistical tests of the simulators against exact or quadrature targets.
//!
//! Every test returns a [`TestReport`] whose verdict can be recomputed from its own
//! fields. Large path counts are simulated in batches so that only the summary
//! statistics of each path are kept in memory.

mod report;
mod stats;

pub use report::{render_table, write_json_lines, Criterion, TestReport};
pub use stats::{bootstrap_ratio_se, kernel_values, kolmogorov_survival, ks_two_sample, silverman_bandwidth, KsResult};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{annulus_mass, growth_criteria, log_grid, QuadratureConfig};
use crate::error::{Error, Result};
use crate::radial::{exit_probability, RadialModel, SkewTable};
use crate::simulate::{first_exit_radial, simulate_full_paths, simulate_line_paths, simulate_radial_paths, ExitSide, SimConfig, Trajectory};
use crate::weights::WeightField;

/// Paths simulated per batch when only terminal values are needed.
const BATCH: usize = 20_000;
/// Minimum number of samples within one bandwidth of an evaluation point.
const MIN_WINDOW: usize = 30;
/// Bootstrap replicates for kernel density ratios.
const BOOTSTRAP: usize = 200;

/// Shell (a - below, a + above) around a membrane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shell {
    pub below: f64,
    pub above: f64,
}

impl Shell {
    pub fn symmetric(eps: f64) -> Self {
        Self { below: eps, above: eps }
    }
}

/// Runs `n_paths` in batches, keeping `f(trajectory)` for each path in order.
fn batched<T, S, F>(cfg: &SimConfig, offset: u64, sim: S, mut f: F) -> Result<Vec<T>>
where
    S: Fn(&SimConfig, std::ops::Range<u64>) -> Result<Vec<Trajectory>>,
    F: FnMut(&Trajectory) -> T,
{
    let mut out = Vec::with_capacity(cfg.n_paths);
    let n = cfg.n_paths as u64;
    let mut start = 0;
    while start < n {
        let end = (start + BATCH as u64).min(n);
        for t in sim(cfg, offset + start..offset + end)? {
            out.push(f(&t));
        }
        start = end;
    }
    Ok(out)
}

/// Only the final time is recorded.
fn terminal_only(cfg: &SimConfig) -> SimConfig {
    let mut c = cfg.clone();
    c.record_every = c.n_steps();
    c.keep_noise = false;
    c
}

/// Exit side of the shell around membrane `a`, started on the membrane. The target
/// is the scale-function exit probability, which equals alpha for a driftless
/// symmetric shell.
pub fn crossing_probability_test(rm: &RadialModel, a: f64, shell: Shell, cfg: &SimConfig, k: f64) -> Result<TestReport> {
    crossing_against(rm, rm, a, shell, cfg, k, "crossing_probability")
}

/// Simulates with every alpha replaced by 1 - alpha and compares with the unflipped target.
pub fn crossing_negative_control(rm: &RadialModel, a: f64, shell: Shell, cfg: &SimConfig, k: f64) -> Result<TestReport> {
    let mut flipped = rm.clone();
    flipped.skew = rm.skew.flipped();
    crossing_against(&flipped, rm, a, shell, cfg, k, "crossing_negative_control")
}

fn crossing_against(
    sim: &RadialModel,
    oracle: &RadialModel,
    a: f64,
    shell: Shell,
    cfg: &SimConfig,
    k: f64,
    name: &str,
) -> Result<TestReport> {
    let entry = oracle
        .skew
        .get(a)
        .ok_or_else(|| Error::Config(format!("no membrane at radius {a}")))?;
    if !(shell.below > 0.0 && shell.above > 0.0) {
        return Err(Error::Config("shell half-widths must be positive".into()));
    }
    let (lo, hi) = (a - shell.below, a + shell.above);
    if lo <= 0.0 {
        return Err(Error::Config(format!("shell ({lo}, {hi}) reaches the origin")));
    }
    if let Some(other) = oracle.skew.active().find(|e| e.radius != a && e.radius >= lo && e.radius <= hi) {
        return Err(Error::Config(format!(
            "shell ({lo}, {hi}) contains another membrane at {}",
            other.radius
        )));
    }
    let target = exit_probability(oracle, a, lo, hi)?;
    let mut c = cfg.clone();
    c.start = vec![a];
    let exits = first_exit_radial(sim, &c, lo, hi)?;
    let undecided = exits.iter().filter(|e| e.0 == ExitSide::Undecided).count();
    if undecided > 0 {
        return Err(Error::Config(format!(
            "{undecided} paths did not leave the shell before the horizon {}",
            cfg.horizon
        )));
    }
    let n = exits.len();
    let p = exits.iter().filter(|e| e.0 == ExitSide::Upper).count() as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    Ok(TestReport::new(
        name,
        p,
        target,
        Some(se),
        None,
        n,
        Criterion::StdErr { k },
        json!({
            "membrane": a, "alpha": entry.alpha, "shell": [lo, hi],
            "step": cfg.step, "horizon": cfg.horizon, "seed": cfg.seed,
        }),
    ))
}

/// KS comparison of ||X_T|| from the full simulator with r_T from the radial model
/// built from the same weight field (Bessel term included).
pub fn radial_consistency_test(wf: &WeightField, st: &SkewTable, cfg: &SimConfig, threshold: f64) -> Result<TestReport> {
    let rm = RadialModel::from_weight_field(wf, (0.0, f64::INFINITY))?;
    radial_consistency_against(wf, st, &rm, cfg, threshold, "radial_consistency")
}

/// The same comparison with a radial model that omits the (d - 1) / (2 r) term; expected to fail.
pub fn radial_consistency_negative_control(wf: &WeightField, st: &SkewTable, cfg: &SimConfig, threshold: f64) -> Result<TestReport> {
    let rm = RadialModel::from_weight_field_without_bessel(wf, (0.0, f64::INFINITY))?;
    radial_consistency_against(wf, st, &rm, cfg, threshold, "radial_consistency_no_bessel")
}

/// KS comparison against an explicit radial model. The radial sample uses its own seed
/// (`cfg.seed + 1`) so that both samples are independent.
pub fn radial_consistency_against(
    wf: &WeightField,
    st: &SkewTable,
    rm: &RadialModel,
    cfg: &SimConfig,
    threshold: f64,
    name: &str,
) -> Result<TestReport> {
    if cfg.n_paths < 100 {
        return Err(Error::Config(format!("KS comparison needs at least 100 paths, got {}", cfg.n_paths)));
    }
    let full_cfg = terminal_only(cfg);
    let full = batched(&full_cfg, 0, |c, r| simulate_full_paths(wf, st, c, r), |t| t.terminal_radius())?;
    let mut radial_cfg = full_cfg.clone();
    radial_cfg.start = vec![cfg.start.iter().map(|v| v * v).sum::<f64>().sqrt()];
    radial_cfg.seed = cfg.seed.wrapping_add(1);
    let mut model = rm.clone();
    model.skew = st.clone();
    // without the Bessel term the origin is reachable; reflect there
    let radial = if model.bessel {
        batched(&radial_cfg, 0, |c, r| simulate_radial_paths(&model, c, r), |t| t.terminal_radius())?
    } else {
        batched(&radial_cfg, 0, |c, r| simulate_line_paths(&model, c, r), |t| t.terminal()[0].abs())?
    };
    let ks = ks_two_sample(&full, &radial)?;
    Ok(TestReport::new(
        name,
        ks.statistic,
        0.0,
        None,
        Some(ks.p_value),
        cfg.n_paths,
        Criterion::PValue { threshold },
        json!({
            "bessel": rm.bessel, "step": cfg.step, "horizon": cfg.horizon,
            "seed": cfg.seed, "start": cfg.start, "membranes": st.radii(),
        }),
    ))
}

/// Detailed balance check p_T(x, y) psi(x) = p_T(y, x) psi(y) with Lebesgue transition
/// densities estimated by Gaussian kernels. `bandwidth = None` uses Silverman's rule on
/// the pooled terminal sample. Paths from `x` use indices 0..n, paths from `y` n..2n.
pub fn reversibility_test(
    wf: &WeightField,
    st: &SkewTable,
    cfg: &SimConfig,
    x: &[f64],
    y: &[f64],
    bandwidth: Option<f64>,
    tol: f64,
) -> Result<TestReport> {
    let dim = wf.dim();
    if x.len() != dim || y.len() != dim || x == y {
        return Err(Error::Config("need two distinct points of the right dimension".into()));
    }
    for p in [x, y] {
        let r = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        if st.entries.iter().any(|e| e.radius == r) {
            return Err(Error::Config(format!("point {p:?} lies on a membrane")));
        }
    }
    let mut from_x = terminal_only(cfg);
    from_x.start = x.to_vec();
    let mut from_y = from_x.clone();
    from_y.start = y.to_vec();
    let sim = |c: &SimConfig, r| simulate_full_paths(wf, st, c, r);
    let xs: Vec<f64> = batched(&from_x, 0, sim, |t| t.terminal().to_vec())?.concat();
    let ys: Vec<f64> = batched(&from_y, cfg.n_paths as u64, sim, |t| t.terminal().to_vec())?.concat();
    let h = match bandwidth {
        Some(h) if h > 0.0 => h,
        Some(h) => return Err(Error::Config(format!("bandwidth must be positive, got {h}"))),
        None => {
            let pooled = [xs.as_slice(), ys.as_slice()].concat();
            silverman_bandwidth(&pooled, dim)
        }
    };
    let (kx, inside_x) = kernel_values(&xs, dim, y, h);
    let (ky, inside_y) = kernel_values(&ys, dim, x, h);
    if inside_x.min(inside_y) < MIN_WINDOW {
        return Err(Error::Config(format!(
            "only {} samples within bandwidth {h}; widen the bandwidth or add paths",
            inside_x.min(inside_y)
        )));
    }
    let (psi_x, psi_y) = (wf.psi(x), wf.psi(y));
    let ratio = |qxy: f64, qyx: f64| (qxy / psi_y) / (qyx / psi_x);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let estimate = ratio(mean(&kx), mean(&ky));
    let se = bootstrap_ratio_se(&kx, &ky, BOOTSTRAP, cfg.seed, ratio);
    Ok(TestReport::new(
        "reversibility",
        estimate,
        1.0,
        Some(se),
        None,
        cfg.n_paths,
        Criterion::RelTol { tol },
        json!({
            "x": x, "y": y, "bandwidth": h, "window_counts": [inside_x, inside_y],
            "step": cfg.step, "horizon": cfg.horizon, "seed": cfg.seed,
        }),
    ))
}

/// Ratio of occupation times of two annuli against the ratio of their psi-masses.
/// Refuses configurations that the volume growth test does not classify as recurrent.
pub fn occupation_ratio_test(
    wf: &WeightField,
    st: &SkewTable,
    cfg: &SimConfig,
    a: (f64, f64),
    b: (f64, f64),
    tol: f64,
) -> Result<TestReport> {
    let qc = QuadratureConfig::default();
    let growth = growth_criteria(wf, &log_grid(1e3, 10), &qc)?;
    if !growth.recurrent {
        return Err(Error::Hypothesis(format!(
            "volume growth exponent {:.3} > 2: the process is transient and occupation ratios do not converge",
            growth.fitted_exponent
        )));
    }
    let target = annulus_mass(wf, a.0, a.1, &qc)? / annulus_mass(wf, b.0, b.1, &qc)?;
    let mut c = terminal_only(cfg);
    c.occupation_bands = vec![a, b];
    let occ = batched(&c, 0, |c, r| simulate_full_paths(wf, st, c, r), |t| (t.occupation[0], t.occupation[1]))?;
    let n = occ.len() as f64;
    let ma = occ.iter().map(|o| o.0).sum::<f64>() / n;
    let mb = occ.iter().map(|o| o.1).sum::<f64>() / n;
    if mb == 0.0 {
        return Err(Error::Config(format!("no path visited the annulus {b:?}")));
    }
    let estimate = ma / mb;
    // delta method for a ratio of means
    let var = occ.iter().map(|o| (o.0 - estimate * o.1).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let se = (var / n).sqrt() / mb;
    Ok(TestReport::new(
        "occupation_ratio",
        estimate,
        target,
        Some(se),
        None,
        occ.len(),
        Criterion::RelTol { tol },
        json!({
            "a": a, "b": b, "growth_exponent": growth.fitted_exponent,
            "step": cfg.step, "horizon": cfg.horizon, "seed": cfg.seed,
        }),
    ))
}
