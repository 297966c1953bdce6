//! One-dimensional reduction: skew coefficients, the radial drift, the scale
//! function and exit probabilities of the radial diffusion.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::adaptive;
use crate::weights::{MembraneSet, WeightField};

/// Skew data for one membrane radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewEntry {
    pub radius: f64,
    /// Probability of leaving the membrane outward.
    pub alpha: f64,
    /// 2 alpha - 1, the local-time coefficient.
    pub coeff: f64,
    /// (w_in + w_out) / 2, the weight of rho d(sigma) in the boundary local time.
    pub revuz_weight: f64,
}

impl SkewEntry {
    pub fn from_weights(radius: f64, inside: f64, outside: f64) -> Self {
        let total = outside + inside;
        Self {
            radius,
            alpha: outside / total,
            coeff: (outside - inside) / total,
            revuz_weight: 0.5 * total,
        }
    }

    /// A membrane specified by its outward probability only; weights (1 - alpha, alpha).
    pub fn from_alpha(radius: f64, alpha: f64) -> Self {
        Self::from_weights(radius, 1.0 - alpha, alpha)
    }

    /// True when the membrane has no effect on the dynamics.
    pub fn is_neutral(&self) -> bool {
        self.coeff == 0.0
    }
}

/// Ordered skew entries, one per represented membrane including `m0`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SkewTable {
    pub entries: Vec<SkewEntry>,
}

impl SkewTable {
    pub fn new(mut entries: Vec<SkewEntry>) -> Result<Self> {
        entries.sort_by(|a, b| a.radius.partial_cmp(&b.radius).unwrap());
        for w in entries.windows(2) {
            if !(w[0].radius < w[1].radius) {
                return Err(Error::Validation(format!("duplicate membrane radius {}", w[0].radius)));
            }
        }
        for e in &entries {
            if !(e.alpha > 0.0 && e.alpha < 1.0) || !(e.radius > 0.0) {
                return Err(Error::Validation(format!(
                    "membrane at {} needs radius > 0 and alpha in (0, 1), got {}",
                    e.radius, e.alpha
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_alphas(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(r, a)| SkewEntry::from_alpha(r, a)).collect())
    }

    pub fn radii(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.radius).collect()
    }

    pub fn get(&self, radius: f64) -> Option<&SkewEntry> {
        self.entries.iter().find(|e| e.radius == radius)
    }

    /// Same table with alpha replaced by 1 - alpha everywhere.
    pub fn flipped(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|e| SkewEntry {
                    radius: e.radius,
                    alpha: 1.0 - e.alpha,
                    coeff: -e.coeff,
                    revuz_weight: e.revuz_weight,
                })
                .collect(),
        }
    }

    /// Entries with a nonzero coefficient.
    pub fn active(&self) -> impl Iterator<Item = &SkewEntry> {
        self.entries.iter().filter(|e| !e.is_neutral())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("radius,alpha,coeff,revuz_weight\n");
        for e in &self.entries {
            s.push_str(&format!("{},{},{},{}\n", e.radius, e.alpha, e.coeff, e.revuz_weight));
        }
        s
    }
}

/// Skew table of a membrane set; `m0` is always present.
pub fn skew_coefficients(ms: &MembraneSet) -> SkewTable {
    SkewTable {
        entries: ms
            .interfaces()
            .iter()
            .map(|i| SkewEntry::from_weights(i.radius, i.weight_inside, i.weight_outside))
            .collect(),
    }
}

type DriftFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The radial diffusion dr = b(r) dt + dB + sum_k coeff_k dl^{a_k}.
#[derive(Clone)]
pub struct RadialModel {
    pub dim: usize,
    pub skew: SkewTable,
    drift: DriftFn,
    /// Interval used by scale-function computations.
    pub domain: (f64, f64),
    /// Whether the drift contains the (d - 1) / (2 r) term.
    pub bessel: bool,
}

impl fmt::Debug for RadialModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialModel")
            .field("dim", &self.dim)
            .field("skew", &self.skew)
            .field("domain", &self.domain)
            .field("bessel", &self.bessel)
            .finish()
    }
}

impl RadialModel {
    /// Radial part of the process for a radially symmetric density:
    /// b(r) = (d - 1) / (2 r) + rho'(r) / (2 rho(r)).
    pub fn from_weight_field(wf: &WeightField, domain: (f64, f64)) -> Result<Self> {
        Self::build(wf, domain, true)
    }

    /// Same as [`RadialModel::from_weight_field`] but without the (d - 1) / (2 r) term.
    pub fn from_weight_field_without_bessel(wf: &WeightField, domain: (f64, f64)) -> Result<Self> {
        Self::build(wf, domain, false)
    }

    fn build(wf: &WeightField, domain: (f64, f64), bessel: bool) -> Result<Self> {
        if !wf.density.is_radial() {
            return Err(Error::Usage("radial reduction needs a radially symmetric density".into()));
        }
        let density = wf.density.clone();
        let dim = wf.dim();
        let half_bessel = if bessel { 0.5 * (dim as f64 - 1.0) } else { 0.0 };
        let drift: DriftFn = Arc::new(move |r: f64| {
            half_bessel / r + 0.5 * density.radial_log_derivative(r).unwrap_or(f64::NAN)
        });
        Self::with_drift(dim, skew_coefficients(&wf.membranes), drift, domain).map(|mut m| {
            m.bessel = bessel;
            m
        })
    }

    pub fn with_drift(
        dim: usize,
        skew: SkewTable,
        drift: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        domain: (f64, f64),
    ) -> Result<Self> {
        if !(domain.0 >= 0.0 && domain.0 < domain.1) {
            return Err(Error::Validation(format!("bad radial domain {domain:?}")));
        }
        Ok(Self {
            dim,
            skew,
            drift,
            domain,
            bessel: false,
        })
    }

    /// Zero drift, the skew Brownian motion harness.
    pub fn driftless(skew: SkewTable, domain: (f64, f64)) -> Result<Self> {
        Self::with_drift(1, skew, Arc::new(|_| 0.0), domain)
    }

    pub fn drift(&self, r: f64) -> f64 {
        (self.drift)(r)
    }

    pub fn drift_fn(&self) -> DriftFn {
        self.drift.clone()
    }

    fn check_point(&self, r: f64) -> Result<()> {
        if !(r >= self.domain.0 && r <= self.domain.1) {
            return Err(Error::eval(&[r], format!("radius outside domain {:?}", self.domain)));
        }
        Ok(())
    }

    /// Scale increment from `anchor` to `r` with s'(anchor) = 1. Across a membrane
    /// at a_k the slope is multiplied by (1 - alpha_k) / alpha_k.
    fn scale_from(&self, anchor: f64, r: f64) -> Result<f64> {
        if r == anchor {
            return Ok(0.0);
        }
        let (lo, hi, sign) = if r > anchor { (anchor, r, 1.0) } else { (r, anchor, -1.0) };
        let b0 = self.drift(anchor);
        if !b0.is_finite() {
            return Err(Error::eval(&[anchor], "drift is singular at the scale anchor"));
        }
        // Segment edges at membranes strictly inside (lo, hi).
        let mut edges = vec![lo];
        edges.extend(self.skew.entries.iter().map(|e| e.radius).filter(|&a| a > lo && a < hi));
        edges.push(hi);

        let tol = 1e-12;
        let mut total = 0.0;
        // log slope relative to s'(lo) = 1 at the left edge of the current segment
        let mut log_slope = 0.0;
        for (i, w) in edges.windows(2).enumerate() {
            let (p, q) = (w[0], w[1]);
            if i > 0 {
                let e = self.skew.get(p).expect("segment edge is a membrane");
                log_slope += ((1.0 - e.alpha) / e.alpha).ln();
            }
            let base = log_slope;
            let seg = adaptive(
                |u| (base - adaptive(|v| 2.0 * self.drift(v), p, u, tol)).exp(),
                p,
                q,
                tol,
            );
            if !seg.is_finite() {
                return Err(Error::eval(&[p, q], "scale density is not integrable on segment"));
            }
            total += seg;
            log_slope -= adaptive(|v| 2.0 * self.drift(v), p, q, tol);
        }
        if sign > 0.0 {
            Ok(total)
        } else {
            // renormalize so that the slope is one at the anchor (= hi)
            Ok(-total * (-log_slope).exp())
        }
    }
}

/// Scale function normalized by s(domain.0) = 0 and s'(domain.0+) = 1.
pub fn scale_function(rm: &RadialModel, r: f64) -> Result<f64> {
    rm.check_point(r)?;
    rm.scale_from(rm.domain.0, r)
}

/// Probability that the radial diffusion started at `r0` leaves (a, b) through b.
pub fn exit_probability(rm: &RadialModel, r0: f64, a: f64, b: f64) -> Result<f64> {
    if !(a < r0 && r0 < b) {
        return Err(Error::Usage(format!("need a < r0 < b, got a={a}, r0={r0}, b={b}")));
    }
    rm.check_point(a)?;
    rm.check_point(b)?;
    let num = rm.scale_from(a, r0)?;
    let den = rm.scale_from(a, b)?;
    Ok(num / den)
}
