use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{ExitSide, LevelSeries, SimConfig, Trajectory};
use crate::error::{Error, Result};
use crate::radial::SkewTable;

/// Splitting budget for steps crossing several membranes.
const MAX_CROSSING_DEPTH: u32 = 40;
/// Splitting budget for steps where the drift is too large for the step.
const MAX_DRIFT_HALVINGS: u32 = 20;
/// Bridge touch probabilities below exp(-40) are treated as zero.
const TOUCH_CUTOFF: f64 = 40.0;

pub(super) type DriftFn = Box<dyn Fn(&[f64], &mut [f64]) -> Result<()> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Geometry {
    /// Signed 1D coordinate, no positivity constraint.
    Line,
    /// Positive 1D radius.
    Radial,
    /// d-dimensional point; membranes act on its norm.
    Full,
}

/// Per-path RNG: ChaCha8 keyed by the master seed, stream = path index.
pub(super) fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

pub(super) struct Stepper {
    geometry: Geometry,
    drift: DriftFn,
    /// Active membranes (coefficient != 0), sorted by radius: (radius, alpha).
    membranes: Vec<(f64, f64)>,
    levels: Vec<f64>,
    dim: usize,
    step: f64,
    n_steps: usize,
    seed: u64,
    eps: f64,
    start: Vec<f64>,
    record_every: usize,
    keep_noise: bool,
    bands: Vec<(f64, f64)>,
    horizon: f64,
}

struct Scratch {
    drift: Vec<f64>,
    proposal: Vec<f64>,
    crossings: Vec<i64>,
    /// Radial displacement of the current grid step before skew corrections.
    continuous: f64,
}

impl Stepper {
    pub(super) fn new(
        geometry: Geometry,
        drift: DriftFn,
        skew: &SkewTable,
        levels: Vec<f64>,
        cfg: &SimConfig,
    ) -> Self {
        let dim = if geometry == Geometry::Full { cfg.dim } else { 1 };
        Self {
            geometry,
            drift,
            membranes: skew.active().map(|e| (e.radius, e.alpha)).collect(),
            levels,
            dim,
            step: cfg.step,
            n_steps: cfg.n_steps(),
            seed: cfg.seed,
            eps: cfg.shell_eps,
            start: cfg.start.clone(),
            record_every: cfg.record_every,
            keep_noise: cfg.keep_noise,
            bands: cfg.occupation_bands.clone(),
            horizon: cfg.horizon,
        }
    }

    fn radius(&self, x: &[f64]) -> f64 {
        match self.geometry {
            Geometry::Line | Geometry::Radial => x[0],
            Geometry::Full => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    fn scratch(&self) -> Scratch {
        Scratch {
            drift: vec![0.0; self.dim],
            proposal: vec![0.0; self.dim],
            crossings: vec![0; self.levels.len()],
            continuous: 0.0,
        }
    }

    pub(super) fn run(&self, path: u64) -> Result<Trajectory> {
        let mut rng = path_rng(self.seed, path);
        let mut x = self.start.clone();
        let mut s = self.scratch();
        let n = self.n_steps;
        let n_rec = n / self.record_every + usize::from(!n.is_multiple_of(self.record_every)) + 1;
        let mut times = Vec::with_capacity(n_rec);
        let mut positions = Vec::with_capacity(n_rec * self.dim);
        let mut lt_acc = vec![0.0; self.levels.len()];
        let mut lt_series: Vec<Vec<f64>> = vec![Vec::with_capacity(n_rec); self.levels.len()];
        let mut occupation = vec![0.0; self.bands.len()];
        let mut noise = self.keep_noise.then(|| Vec::with_capacity(n * self.dim));
        let mut increments = self.keep_noise.then(|| Vec::with_capacity(n));
        let lt_weight = self.step / (2.0 * self.eps);
        let sqrt_h = self.step.sqrt();
        let mut dw = vec![0.0; self.dim];

        for i in 0..=n {
            let r = self.radius(&x);
            if i % self.record_every == 0 || i == n {
                times.push(i as f64 * self.step);
                positions.extend_from_slice(&x);
                for (series, acc) in lt_series.iter_mut().zip(&lt_acc) {
                    series.push(*acc);
                }
            }
            if i == n {
                break;
            }
            for (acc, &a) in lt_acc.iter_mut().zip(&self.levels) {
                if (r - a).abs() < self.eps {
                    *acc += lt_weight;
                }
            }
            for (occ, &(lo, hi)) in occupation.iter_mut().zip(&self.bands) {
                if r > lo && r < hi {
                    *occ += self.step;
                }
            }
            for v in dw.iter_mut() {
                *v = sqrt_h * rng.sample::<f64, _>(StandardNormal);
            }
            if let Some(nz) = noise.as_mut() {
                nz.extend_from_slice(&dw);
            }
            s.continuous = 0.0;
            self.advance(&mut x, self.step, &dw, &mut rng, &mut s, 0, 0)
                .map_err(|e| annotate(e, path, i))?;
            if let Some(inc) = increments.as_mut() {
                inc.push(s.continuous);
            }
        }
        Ok(Trajectory {
            path,
            dim: self.dim,
            step: self.step,
            shell_eps: self.eps,
            record_every: self.record_every,
            times,
            positions,
            local_time: self
                .levels
                .iter()
                .zip(lt_series)
                .map(|(&level, values)| LevelSeries { level, values })
                .collect(),
            crossings: s.crossings,
            occupation,
            noise,
            increments,
        })
    }

    /// Steps until the radius leaves (lo, hi); returns the side and exit time.
    pub(super) fn run_until_exit(&self, path: u64, lo: f64, hi: f64) -> Result<(ExitSide, f64)> {
        let mut rng = path_rng(self.seed, path);
        let mut x = self.start.clone();
        let mut s = self.scratch();
        let sqrt_h = self.step.sqrt();
        let mut dw = vec![0.0; self.dim];
        let max_steps = (self.horizon / self.step).ceil() as u64;
        for i in 0..max_steps {
            for v in dw.iter_mut() {
                *v = sqrt_h * rng.sample::<f64, _>(StandardNormal);
            }
            self.advance(&mut x, self.step, &dw, &mut rng, &mut s, 0, 0)
                .map_err(|e| annotate(e, path, i as usize))?;
            let r = self.radius(&x);
            let t = (i + 1) as f64 * self.step;
            if r <= lo {
                return Ok((ExitSide::Lower, t));
            }
            if r >= hi {
                return Ok((ExitSide::Upper, t));
            }
        }
        Ok((ExitSide::Undecided, self.horizon))
    }

    /// Advances `x` over a time step `h` driven by the Brownian increment `dw`.
    #[allow(clippy::too_many_arguments)]
    fn advance(
        &self,
        x: &mut Vec<f64>,
        h: f64,
        dw: &[f64],
        rng: &mut ChaCha8Rng,
        s: &mut Scratch,
        crossing_depth: u32,
        halvings: u32,
    ) -> Result<()> {
        (self.drift)(x, &mut s.drift)?;
        let drift_norm = s.drift.iter().map(|v| v * v).sum::<f64>().sqrt();
        if drift_norm * h > 0.5 * h.sqrt() && halvings < MAX_DRIFT_HALVINGS {
            return self.split(x, h, dw, rng, s, crossing_depth, halvings + 1);
        }
        for (p, (xi, b)) in s.proposal.iter_mut().zip(x.iter().zip(&s.drift)) {
            *p = xi + b * h;
        }
        let r0 = self.radius(x);
        // skew draws act on the noise only: bridges start from the drifted radius
        let mut shifted = self.radius(&s.proposal);
        if self.geometry == Geometry::Full && shifted > 0.0 {
            shifted += 0.5 * (self.dim as f64 - 1.0) * h / shifted;
        }
        for (p, w) in s.proposal.iter_mut().zip(dw) {
            *p += w;
        }
        let mut r1 = self.radius(&s.proposal);
        if self.geometry == Geometry::Radial && r1 <= 0.0 {
            if halvings < MAX_DRIFT_HALVINGS {
                return self.split(x, h, dw, rng, s, crossing_depth, halvings + 1);
            }
            if s.drift[0] <= 0.0 {
                return Err(Error::StepSize(format!(
                    "radius became nonpositive ({r1}) from {r0}; reduce the step"
                )));
            }
            // repelling origin (Bessel drift): the noise overshot, reflect
            r1 = (-r1).max(f64::MIN_POSITIVE);
            s.proposal[0] = r1;
        }
        let crossed = self
            .membranes
            .iter()
            .filter(|(a, _)| (shifted - a) * (r1 - a) < 0.0 || (shifted == *a && r1 != *a))
            .count();
        if crossed > 1 && crossing_depth < MAX_CROSSING_DEPTH {
            return self.split(x, h, dw, rng, s, crossing_depth + 1, halvings);
        }
        s.continuous += r1 - r0;
        let r_new = if crossed == 0 {
            self.touch(shifted, r1, h, rng)
        } else {
            self.resolve(shifted, r1, rng)
        };
        match self.geometry {
            Geometry::Line | Geometry::Radial => s.proposal[0] = r_new,
            Geometry::Full => {
                if r_new != r1 {
                    if r1 == 0.0 {
                        return Err(Error::StepSize("proposal landed on the origin".into()));
                    }
                    let f = r_new / r1;
                    s.proposal.iter_mut().for_each(|v| *v *= f);
                }
            }
        }
        if self.geometry == Geometry::Radial && r_new <= 0.0 {
            return Err(Error::StepSize(format!(
                "skew reflection produced a nonpositive radius ({r_new}); reduce the step"
            )));
        }
        for (c, &a) in s.crossings.iter_mut().zip(&self.levels) {
            if r0 < a && r_new > a {
                *c += 1;
            } else if r0 > a && r_new < a {
                *c -= 1;
            }
        }
        x.copy_from_slice(&s.proposal);
        Ok(())
    }

    /// Splits a step in two halves along the Brownian bridge with total increment `dw`.
    #[allow(clippy::too_many_arguments)]
    fn split(
        &self,
        x: &mut Vec<f64>,
        h: f64,
        dw: &[f64],
        rng: &mut ChaCha8Rng,
        s: &mut Scratch,
        crossing_depth: u32,
        halvings: u32,
    ) -> Result<()> {
        let half_sd = 0.5 * h.sqrt();
        let first: Vec<f64> = dw
            .iter()
            .map(|w| 0.5 * w + half_sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let second: Vec<f64> = dw.iter().zip(&first).map(|(w, f)| w - f).collect();
        self.advance(x, 0.5 * h, &first, rng, s, crossing_depth, halvings)?;
        self.advance(x, 0.5 * h, &second, rng, s, crossing_depth, halvings)
    }

    /// Resolves the move r0 -> r1 across the active membranes in the order they are met.
    fn resolve(&self, r0: f64, r1: f64, rng: &mut ChaCha8Rng) -> f64 {
        let (mut from, mut to) = (r0, r1);
        // a start exactly on a membrane is resolved by that membrane first
        let mut pending = self.membranes.iter().position(|(a, _)| *a == r0);
        loop {
            let next = pending.take().or_else(|| self.first_between(from, to));
            let Some(i) = next else { return to };
            let (a, alpha) = self.membranes[i];
            let delta = (to - a).abs();
            if delta == 0.0 {
                return to;
            }
            let outward = rng.random::<f64>() < alpha;
            to = if outward { a + delta } else { a - delta };
            from = a;
        }
    }

    /// A step that stays on one side may still have touched the nearest membrane
    /// below or above it: the Brownian bridge from r0 to r1 hits a with probability
    /// exp(-2 |r0 - a| |r1 - a| / h). After a touch the side is redrawn.
    fn touch(&self, r0: f64, r1: f64, h: f64, rng: &mut ChaCha8Rng) -> f64 {
        let lo = r0.min(r1);
        let hi = r0.max(r1);
        let below = self.membranes.partition_point(|(a, _)| *a < lo);
        let above = self.membranes.partition_point(|(a, _)| *a <= hi);
        let candidates = [below.checked_sub(1), (above < self.membranes.len()).then_some(above)];
        for i in candidates.into_iter().flatten() {
            let (a, alpha) = self.membranes[i];
            let exponent = 2.0 * (r0 - a).abs() * (r1 - a).abs() / h;
            if exponent > TOUCH_CUTOFF {
                continue;
            }
            if rng.random::<f64>() < (-exponent).exp() {
                let delta = (r1 - a).abs();
                return if rng.random::<f64>() < alpha { a + delta } else { a - delta };
            }
        }
        r1
    }

    /// Index of the first active membrane strictly between `from` and `to`, in the direction of travel.
    fn first_between(&self, from: f64, to: f64) -> Option<usize> {
        if to > from {
            let i = self.membranes.partition_point(|(a, _)| *a <= from);
            (i < self.membranes.len() && self.membranes[i].0 < to).then_some(i)
        } else {
            let i = self.membranes.partition_point(|(a, _)| *a < from);
            (i > 0 && self.membranes[i - 1].0 > to).then(|| i - 1)
        }
    }
}

fn annotate(e: Error, path: u64, step: usize) -> Error {
    match e {
        Error::StepSize(m) => Error::StepSize(format!("path {path}, step {step}: {m}")),
        other => other,
    }
}
