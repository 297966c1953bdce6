//! Membrane geometry and the piecewise-constant step weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One membrane radius together with the weight it carries.
///
/// For inner membranes (`radius < m0`) `weight` is the value of the step weight on
/// the annulus immediately *inside* the radius. For outer membranes it is the value
/// immediately *outside*. With that convention dropping a membrane from either list
/// merges two annuli without touching any other entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Membrane {
    pub radius: f64,
    pub weight: f64,
}

/// Bookkeeping for membranes removed from an infinite family.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TruncationNote {
    /// Number of candidate membranes dropped.
    pub dropped: usize,
    /// Sum of |skew coefficient| over dropped membranes.
    pub dropped_skew_mass: f64,
    /// Sum of |weight increment| over dropped membranes.
    pub dropped_increment_mass: f64,
    /// Total variation of the inner weights over the enumerated family (analytic input only).
    pub enumerated_sum_inner: Option<f64>,
    /// Total variation of the outer weights over the enumerated family, accumulation side.
    pub enumerated_sum_outer: Option<f64>,
    /// Infimum of the weight over the enumerated family and its limit at the origin.
    pub enumerated_infimum: Option<f64>,
}

/// Concentric spherical membranes accumulating at the origin and at `m0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembraneSet {
    pub m0: f64,
    /// Increasing radii below `m0`, weights on the annulus inside each radius.
    pub inner: Vec<Membrane>,
    /// Weight on (l_K, m0), the limit of the inner weights.
    pub gamma_top: f64,
    /// Increasing radii above `m0`, weights on the annulus outside each radius.
    pub outer: Vec<Membrane>,
    /// Weight on (m0, r_1), the limit of the outer weights at `m0`.
    pub gammabar_bottom: f64,
    pub truncation: TruncationNote,
}

/// A radius at which the weight jumps, with the weights on either side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interface {
    pub radius: f64,
    pub weight_inside: f64,
    pub weight_outside: f64,
}

impl Interface {
    /// (w_out - w_in) / (w_out + w_in).
    pub fn skew_coefficient(&self) -> f64 {
        (self.weight_outside - self.weight_inside) / (self.weight_outside + self.weight_inside)
    }
}

impl MembraneSet {
    /// Validates and truncates explicit membrane lists. Membranes whose skew coefficient
    /// magnitude is below `tolerance` are removed and recorded.
    pub fn explicit(
        m0: f64,
        inner: Vec<Membrane>,
        gamma_top: f64,
        outer: Vec<Membrane>,
        gammabar_bottom: f64,
        tolerance: f64,
    ) -> Result<Self> {
        let set = Self {
            m0,
            inner,
            gamma_top,
            outer,
            gammabar_bottom,
            truncation: TruncationNote::default(),
        };
        set.validate()?;
        Ok(set.truncate(tolerance))
    }

    /// A set with no membranes other than `m0` and a constant weight.
    pub fn constant(m0: f64, weight: f64) -> Result<Self> {
        Self::explicit(m0, vec![], weight, vec![], weight, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m0.is_finite() && self.m0 > 0.0) {
            return Err(Error::Validation(format!("m0 must be positive, got {}", self.m0)));
        }
        let mut prev = 0.0;
        for (i, m) in self.inner.iter().enumerate() {
            if !(m.radius > prev) {
                return Err(Error::Validation(format!(
                    "inner radii must increase from 0: entry {i} has radius {} after {prev}",
                    m.radius
                )));
            }
            prev = m.radius;
        }
        if !(self.m0 > prev) {
            return Err(Error::Validation(format!(
                "inner radii must stay below m0 = {} (last is {prev})",
                self.m0
            )));
        }
        prev = self.m0;
        for (i, m) in self.outer.iter().enumerate() {
            if !(m.radius > prev) || !m.radius.is_finite() {
                return Err(Error::Validation(format!(
                    "outer radii must increase from m0: entry {i} has radius {} after {prev}",
                    m.radius
                )));
            }
            prev = m.radius;
        }
        let weights = self
            .inner
            .iter()
            .chain(&self.outer)
            .map(|m| m.weight)
            .chain([self.gamma_top, self.gammabar_bottom]);
        for w in weights {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Validation(format!("weights must be positive and finite, got {w}")));
            }
        }
        Ok(())
    }

    fn truncate(mut self, tolerance: f64) -> Self {
        let ifaces = self.interfaces();
        let mut keep_inner = Vec::with_capacity(self.inner.len());
        let mut keep_outer = Vec::with_capacity(self.outer.len());
        let n_inner = self.inner.len();
        for (i, iface) in ifaces.iter().enumerate() {
            if iface.radius == self.m0 {
                continue;
            }
            let c = iface.skew_coefficient();
            let keep = c.abs() >= tolerance;
            if !keep {
                self.truncation.dropped += 1;
                self.truncation.dropped_skew_mass += c.abs();
                self.truncation.dropped_increment_mass +=
                    (iface.weight_outside - iface.weight_inside).abs();
            }
            if i < n_inner {
                keep_inner.push(keep);
            } else {
                keep_outer.push(keep);
            }
        }
        let mut k = keep_inner.into_iter();
        self.inner.retain(|_| k.next().unwrap());
        let mut k = keep_outer.into_iter();
        self.outer.retain(|_| k.next().unwrap());
        self
    }

    /// All weight interfaces in increasing radius, `m0` included.
    pub fn interfaces(&self) -> Vec<Interface> {
        let mut out = Vec::with_capacity(self.inner.len() + self.outer.len() + 1);
        for (i, m) in self.inner.iter().enumerate() {
            let outside = self.inner.get(i + 1).map_or(self.gamma_top, |n| n.weight);
            out.push(Interface {
                radius: m.radius,
                weight_inside: m.weight,
                weight_outside: outside,
            });
        }
        out.push(Interface {
            radius: self.m0,
            weight_inside: self.gamma_top,
            weight_outside: self.gammabar_bottom,
        });
        for (i, m) in self.outer.iter().enumerate() {
            let inside = if i == 0 {
                self.gammabar_bottom
            } else {
                self.outer[i - 1].weight
            };
            out.push(Interface {
                radius: m.radius,
                weight_inside: inside,
                weight_outside: m.weight,
            });
        }
        out
    }

    /// Merged, sorted radii of every represented membrane including `m0`.
    pub fn radii(&self) -> Vec<f64> {
        self.inner
            .iter()
            .map(|m| m.radius)
            .chain(std::iter::once(self.m0))
            .chain(self.outer.iter().map(|m| m.radius))
            .collect()
    }

    /// Number of retained membranes, not counting `m0`.
    pub fn retained(&self) -> usize {
        self.inner.len() + self.outer.len()
    }

    /// Piecewise weight: `(radii, values)` with `values.len() == radii.len() + 1`;
    /// `values[i]` holds on (radii[i-1], radii[i]).
    pub fn annuli(&self) -> (Vec<f64>, Vec<f64>) {
        let ifaces = self.interfaces();
        let radii = ifaces.iter().map(|i| i.radius).collect();
        let mut values = Vec::with_capacity(ifaces.len() + 1);
        values.push(ifaces[0].weight_inside);
        values.extend(ifaces.iter().map(|i| i.weight_outside));
        (radii, values)
    }

    /// Multiplies every weight by `c`, leaving the geometry unchanged.
    pub fn scaled(&self, c: f64) -> Self {
        let mut s = self.clone();
        s.inner.iter_mut().for_each(|m| m.weight *= c);
        s.outer.iter_mut().for_each(|m| m.weight *= c);
        s.gamma_top *= c;
        s.gammabar_bottom *= c;
        if let Some(inf) = s.truncation.enumerated_infimum.as_mut() {
            *inf *= c;
        }
        s
    }
}

/// Analytic weight sequences indexed by k ∈ ℤ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightFamily {
    /// gamma_k = value.
    Constant { value: f64 },
    /// gamma_k = base + amp * ratio^|k|, with 0 < ratio < 1.
    Geometric { base: f64, amp: f64, ratio: f64 },
    /// gamma_k = amp / |k| for k <= -1 and amp for k >= 0; decays to 0 at the origin.
    Harmonic { amp: f64 },
}

impl WeightFamily {
    pub fn weight(&self, k: i64) -> f64 {
        match *self {
            WeightFamily::Constant { value } => value,
            WeightFamily::Geometric { base, amp, ratio } => base + amp * ratio.powi(k.unsigned_abs() as i32),
            WeightFamily::Harmonic { amp } => {
                if k <= -1 {
                    amp / (-k) as f64
                } else {
                    amp
                }
            }
        }
    }

    /// Limit as k → -∞.
    pub fn limit_neg(&self) -> f64 {
        match *self {
            WeightFamily::Constant { value } => value,
            WeightFamily::Geometric { base, .. } => base,
            WeightFamily::Harmonic { .. } => 0.0,
        }
    }

    /// Limit as k → +∞.
    pub fn limit_pos(&self) -> f64 {
        match *self {
            WeightFamily::Constant { value } => value,
            WeightFamily::Geometric { base, .. } => base,
            WeightFamily::Harmonic { amp } => amp,
        }
    }

    fn validate(&self) -> Result<()> {
        if let WeightFamily::Geometric { ratio, .. } = *self {
            if !(ratio > 0.0 && ratio < 1.0) {
                return Err(Error::Hypothesis(format!(
                    "geometric weights need 0 < ratio < 1 for summable increments, got {ratio}"
                )));
            }
        }
        Ok(())
    }
}

/// Infinite membrane families: inner radii l_k = m0 / (1 + q^-k) accumulate at 0 and
/// m0; outer radii r_k = m0 (1 + q^k) accumulate at m0 and diverge. Weights follow
/// the indexing gamma_k on (l_{k-1}, l_k) and gammabar_k on (r_{k-1}, r_k).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticFamily {
    pub m0: f64,
    pub inner: WeightFamily,
    pub outer: WeightFamily,
    /// Indices k in [-k_max, k_max] are enumerated.
    #[serde(default = "default_k_max")]
    pub k_max: i64,
    /// Geometric ratio q > 1 of the radius sequences.
    #[serde(default = "default_radius_ratio")]
    pub radius_ratio: f64,
}

fn default_k_max() -> i64 {
    60
}

fn default_radius_ratio() -> f64 {
    2.0
}

impl AnalyticFamily {
    pub fn inner_radius(&self, k: i64) -> f64 {
        self.m0 / (1.0 + self.radius_ratio.powi(-k as i32))
    }

    pub fn outer_radius(&self, k: i64) -> f64 {
        self.m0 * (1.0 + self.radius_ratio.powi(k as i32))
    }

    /// Enumerates the family on [-k_max, k_max] and truncates it.
    pub fn build(&self, tolerance: f64) -> Result<MembraneSet> {
        if !(self.radius_ratio > 1.0) || self.k_max < 1 {
            return Err(Error::Validation(
                "analytic family needs radius_ratio > 1 and k_max >= 1".into(),
            ));
        }
        self.inner.validate()?;
        self.outer.validate()?;
        let ks: Vec<i64> = (-self.k_max..=self.k_max).collect();
        let mut inner = Vec::with_capacity(ks.len());
        let mut outer = Vec::with_capacity(ks.len());
        let (mut tv_in, mut tv_out) = (0.0, 0.0);
        let mut inf = self.inner.limit_neg().min(self.inner.limit_pos());
        for &k in &ks {
            let (g, g_next) = (self.inner.weight(k), self.inner.weight(k + 1));
            tv_in += (g_next - g).abs();
            inf = inf.min(g);
            inner.push(Membrane {
                radius: self.inner_radius(k),
                weight: g,
            });
            // outer r_k carries the weight outside it, gammabar_{k+1}
            let (gb, gb_next) = (self.outer.weight(k), self.outer.weight(k + 1));
            if k <= 0 {
                tv_out += (gb_next - gb).abs();
            }
            inf = inf.min(gb);
            outer.push(Membrane {
                radius: self.outer_radius(k),
                weight: gb_next,
            });
        }
        inf = inf.min(self.outer.limit_neg());
        let gamma_top = self.inner.limit_pos();
        let gammabar_bottom = self.outer.limit_neg();

        // Truncation decides on the analytic coefficient of each membrane.
        let coeff = |a: f64, b: f64| (b - a) / (b + a);
        let mut note = TruncationNote {
            enumerated_sum_inner: Some(tv_in),
            enumerated_sum_outer: Some(tv_out),
            enumerated_infimum: Some(inf),
            ..Default::default()
        };
        // Membranes closer to an accumulation point than f64 resolves are dropped as well.
        let mut kept_inner: Vec<Membrane> = Vec::new();
        for (&k, m) in ks.iter().zip(&inner) {
            let (a, b) = (self.inner.weight(k), self.inner.weight(k + 1));
            let prev = kept_inner.last().map_or(0.0, |p| p.radius);
            let representable = m.radius > prev && m.radius < self.m0;
            if representable && coeff(a, b).abs() >= tolerance {
                kept_inner.push(*m);
            } else {
                note.dropped += 1;
                note.dropped_skew_mass += coeff(a, b).abs();
                note.dropped_increment_mass += (b - a).abs();
            }
        }
        let mut kept_outer: Vec<Membrane> = Vec::new();
        for (&k, m) in ks.iter().zip(&outer) {
            let (a, b) = (self.outer.weight(k), self.outer.weight(k + 1));
            let prev = kept_outer.last().map_or(self.m0, |p| p.radius);
            let representable = m.radius > prev && m.radius.is_finite();
            if representable && coeff(a, b).abs() >= tolerance {
                kept_outer.push(*m);
            } else {
                note.dropped += 1;
                note.dropped_skew_mass += coeff(a, b).abs();
                note.dropped_increment_mass += (b - a).abs();
            }
        }
        let set = MembraneSet {
            m0: self.m0,
            inner: kept_inner,
            gamma_top,
            outer: kept_outer,
            gammabar_bottom,
            truncation: note,
        };
        // Limits may be zero for decaying families; positivity of represented weights is what
        // the simulator needs, the H1 report catches the vanishing infimum.
        set.validate()?;
        if !(tv_in.is_finite() && tv_out.is_finite()) {
            return Err(Error::Hypothesis("weight increments are not summable".into()));
        }
        Ok(set)
    }
}

/// Step weight at radius `r`: the annulus value, or the mean of the two adjacent
/// values when `r` is exactly a membrane radius.
pub fn phi(ms: &MembraneSet, r: f64) -> f64 {
    let ifaces = ms.interfaces();
    let idx = ifaces.partition_point(|i| i.radius < r);
    match ifaces.get(idx) {
        Some(i) if i.radius == r => 0.5 * (i.weight_inside + i.weight_outside),
        Some(i) => i.weight_inside,
        None => ifaces.last().map_or(ms.gammabar_bottom, |i| i.weight_outside),
    }
}

/// Summability and local positivity report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H1Report {
    pub sum_inner: f64,
    pub sum_outer: f64,
    /// Dropped increment mass, already included in the sums when they come from the represented set.
    pub tail_bound: f64,
    /// (probe radius, min weight on the ball of that radius).
    pub delta: Vec<(f64, f64)>,
    pub pass: bool,
}

pub fn check_h1(ms: &MembraneSet, probe_radii: &[f64]) -> H1Report {
    let ifaces = ms.interfaces();
    let (rep_in, rep_out) = ifaces.iter().fold((0.0, 0.0), |(a, b), i| {
        let inc = (i.weight_outside - i.weight_inside).abs();
        if i.radius < ms.m0 {
            (a + inc, b)
        } else if i.radius > ms.m0 {
            (a, b + inc)
        } else {
            (a, b)
        }
    });
    let tail = ms.truncation.dropped_increment_mass;
    let sum_inner = ms.truncation.enumerated_sum_inner.unwrap_or(rep_in + tail);
    let sum_outer = ms.truncation.enumerated_sum_outer.unwrap_or(rep_out);
    let (radii, values) = ms.annuli();
    let floor = ms.truncation.enumerated_infimum;
    let delta: Vec<(f64, f64)> = probe_radii
        .iter()
        .map(|&r| {
            // annuli intersecting B_r: value i lives on (radii[i-1], radii[i])
            let n = radii.partition_point(|&a| a < r) + 1;
            let mut m = values[..n.min(values.len())]
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            if let Some(f) = floor {
                // the analytic family reaches every neighbourhood of the origin
                m = m.min(f);
            }
            (r, m)
        })
        .collect();
    let pass = sum_inner.is_finite() && sum_outer.is_finite() && delta.iter().all(|&(_, d)| d > 0.0);
    H1Report {
        sum_inner,
        sum_outer,
        tail_bound: tail,
        delta,
        pass,
    }
}
