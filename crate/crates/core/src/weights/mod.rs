//! Membrane geometry, the step weight phi, the density rho and the combined weight rho * phi.

mod density;
mod membranes;

pub use density::{drift_ac, fd_gradient, BuiltinDensity, CustomDensity, DensityKind, DensityModel};
pub use membranes::{
    check_h1, phi, AnalyticFamily, H1Report, Interface, Membrane, MembraneSet, TruncationNote,
    WeightFamily,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{ball_volume, radial_panels, GaussLegendre, SphereRule};

/// Membranes plus density: the weight psi = rho * phi.
#[derive(Debug, Clone)]
pub struct WeightField {
    pub membranes: MembraneSet,
    pub density: DensityModel,
}

impl WeightField {
    pub fn new(membranes: MembraneSet, density: DensityModel) -> Self {
        Self { membranes, density }
    }

    pub fn dim(&self) -> usize {
        self.density.dim
    }

    pub fn phi(&self, r: f64) -> f64 {
        phi(&self.membranes, r)
    }

    pub fn psi(&self, x: &[f64]) -> f64 {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.density.rho(x) * self.phi(r)
    }
}

/// Balls on which the A2 ratio is sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSampler {
    pub balls: Vec<(Vec<f64>, f64)>,
    pub radial_nodes: usize,
    pub polar_nodes: usize,
    pub azimuth_nodes: usize,
    /// Sphere sample count for d > 3.
    pub mc_samples: usize,
}

impl BallSampler {
    pub fn new(balls: Vec<(Vec<f64>, f64)>) -> Self {
        Self {
            balls,
            radial_nodes: 32,
            polar_nodes: 16,
            azimuth_nodes: 32,
            mc_samples: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A2Estimate {
    /// max over sampled balls of avg(psi) * avg(1/psi); a lower bound for the A2 constant.
    pub sup_ratio: f64,
    pub worst_ball: (Vec<f64>, f64),
    /// Ratio for every ball in sampler order.
    pub ratios: Vec<f64>,
}

/// Averages of `psi` and `1/psi` over the ball B(center, radius).
pub fn ball_averages(
    wf: &WeightField,
    center: &[f64],
    radius: f64,
    sampler: &BallSampler,
) -> Result<(f64, f64)> {
    let dim = wf.dim();
    if center.len() != dim || !(radius > 0.0) {
        return Err(Error::Validation(format!(
            "ball must have a {dim}-dimensional centre and positive radius"
        )));
    }
    let sphere = SphereRule::new(dim, sampler.polar_nodes, sampler.azimuth_nodes, sampler.mc_samples);
    let gl = GaussLegendre::new(sampler.radial_nodes.max(1));
    let at_origin = center.iter().all(|&c| c == 0.0);
    let breaks = if at_origin { wf.membranes.radii() } else { vec![] };
    let edges = radial_panels(0.0, radius, &breaks);
    let (mut s_psi, mut s_inv) = (0.0, 0.0);
    let mut bad: Option<Vec<f64>> = None;
    for w in edges.windows(2) {
        for (s, ws) in gl.mapped(w[0], w[1]) {
            let [direct, inv] = sphere.integrate_sphere_n(center, s, |x, _| {
                let p = wf.psi(x);
                if !(p > 0.0 && p.is_finite()) && bad.is_none() {
                    bad = Some(x.to_vec());
                }
                [p, 1.0 / p]
            });
            s_psi += ws * direct;
            s_inv += ws * inv;
        }
    }
    if let Some(x) = bad {
        return Err(Error::Hypothesis(format!(
            "weight is not positive at {x:?}; A2 ratio undefined"
        )));
    }
    let vol = ball_volume(dim) * radius.powi(dim as i32);
    Ok((s_psi / vol, s_inv / vol))
}

/// Sampled A2 diagnostic: never a proof of membership.
pub fn a2_estimate(wf: &WeightField, sampler: &BallSampler) -> Result<A2Estimate> {
    if sampler.balls.is_empty() {
        return Err(Error::Validation("ball sampler has no balls".into()));
    }
    let mut ratios = Vec::with_capacity(sampler.balls.len());
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (i, (c, r)) in sampler.balls.iter().enumerate() {
        let (a, b) = ball_averages(wf, c, *r, sampler)?;
        let ratio = a * b;
        if ratio > best.0 {
            best = (ratio, i);
        }
        ratios.push(ratio);
    }
    Ok(A2Estimate {
        sup_ratio: best.0,
        worst_ball: sampler.balls[best.1].clone(),
        ratios,
    })
}

/// Exact sufficient condition: phi bounded above and below and rho asserted to be A2.
/// Returns the bound c with c^-1 <= phi / m <= c for the geometric mean m of the extremes,
/// or `None` when it cannot be certified.
pub fn structural_a2(ms: &MembraneSet, rho_is_a2: bool) -> Option<f64> {
    if !rho_is_a2 {
        return None;
    }
    let (_, values) = ms.annuli();
    let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(0.0, f64::max);
    if let Some(inf) = ms.truncation.enumerated_infimum {
        lo = lo.min(inf);
    }
    (lo > 0.0).then(|| (hi / lo).sqrt())
}
