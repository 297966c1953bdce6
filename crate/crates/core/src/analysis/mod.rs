//! Deterministic quadrature checks: the Dirichlet form, the integration by parts
//! identity with its membrane surface terms, the trace inequality on balls and the
//! volume growth of the weight.
//!
//! Volume integrals are computed as iterated integrals: Gauss–Legendre in the radius
//! on panels that break at every membrane and test-function breakpoint, times a
//! rule on the sphere (a product rule in d = 3, Monte Carlo directions for d > 3).

mod testfn;

pub use testfn::{Jet, TestFunction};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{radial_panels, sphere_area, GaussLegendre, SphereRule};
use crate::weights::{check_h1, WeightField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    /// Gauss–Legendre nodes per radial panel.
    pub radial_nodes: usize,
    /// d = 3 sphere rule: Gauss–Legendre nodes in cos(theta).
    pub polar_nodes: usize,
    /// d = 3 sphere rule: uniform azimuth nodes.
    pub azimuth_nodes: usize,
    /// Sphere directions for d > 3.
    pub mc_samples: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            radial_nodes: 64,
            polar_nodes: 16,
            azimuth_nodes: 32,
            mc_samples: 20_000,
        }
    }
}

impl QuadratureConfig {
    pub fn with_radial_nodes(mut self, n: usize) -> Self {
        self.radial_nodes = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.radial_nodes < 2 || self.polar_nodes < 2 || self.azimuth_nodes < 3 || self.mc_samples < 100 {
            return Err(Error::Validation(format!(
                "quadrature needs radial >= 2, polar >= 2, azimuth >= 3 and mc >= 100 nodes, got {self:?}"
            )));
        }
        Ok(())
    }

    fn sphere(&self, dim: usize) -> SphereRule {
        SphereRule::new(dim, self.polar_nodes, self.azimuth_nodes, self.mc_samples)
    }
}

/// phi on annuli without re-deriving the interface list at every node.
struct PhiLookup {
    radii: Vec<f64>,
    values: Vec<f64>,
}

impl PhiLookup {
    fn new(wf: &WeightField) -> Self {
        let (radii, values) = wf.membranes.annuli();
        Self { radii, values }
    }

    fn at(&self, r: f64) -> f64 {
        let i = self.radii.partition_point(|&a| a < r);
        if i < self.radii.len() && self.radii[i] == r {
            0.5 * (self.values[i] + self.values[i + 1])
        } else {
            self.values[i]
        }
    }
}

/// Integral over the ball B(0, radius) of an N-valued integrand `f(x, u, r)`, where
/// `u` is the unit direction and `r` the radius of `x`.
fn integrate_ball<const N: usize, F>(
    sphere: &SphereRule,
    gl: &GaussLegendre,
    radius: f64,
    breakpoints: &[f64],
    mut f: F,
) -> [f64; N]
where
    F: FnMut(&[f64], &[f64], f64) -> [f64; N],
{
    let origin = vec![0.0; sphere.dim];
    let edges = radial_panels(0.0, radius, breakpoints);
    let mut acc = [0.0; N];
    for w in edges.windows(2) {
        for (r, wr) in gl.mapped(w[0], w[1]) {
            let v = sphere.integrate_sphere_n(&origin, r, |x, u| f(x, u, r));
            for (a, vi) in acc.iter_mut().zip(v) {
                *a += wr * vi;
            }
        }
    }
    acc
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_inputs(fs: &[&TestFunction], wf: &WeightField, qc: &QuadratureConfig) -> Result<()> {
    qc.validate()?;
    for f in fs {
        f.validate(wf.dim())?;
    }
    Ok(())
}

fn breakpoints(wf: &WeightField, fs: &[&TestFunction]) -> Vec<f64> {
    let mut b = wf.membranes.radii();
    for f in fs {
        b.extend(f.breakpoints());
    }
    b
}

fn common_support(f: &TestFunction, g: &TestFunction) -> Result<f64> {
    let r = f.support_radius().min(g.support_radius());
    if !r.is_finite() {
        return Err(Error::Validation(
            "at least one test function must have compact support".into(),
        ));
    }
    Ok(r)
}

fn finite_or_eval(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation {
            point: vec![],
            reason: format!("{what} did not converge (non-integrable singularity?)"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormValue {
    pub value: f64,
    /// Difference to the same quadrature with half the radial nodes (and, for
    /// Monte Carlo sphere rules, an independent set of directions).
    pub error_estimate: f64,
    pub monte_carlo: bool,
}

fn dirichlet_with(f: &TestFunction, g: &TestFunction, wf: &WeightField, qc: &QuadratureConfig, sphere: &SphereRule) -> Result<f64> {
    let radius = common_support(f, g)?;
    let phi = PhiLookup::new(wf);
    let gl = GaussLegendre::new(qc.radial_nodes);
    let [v] = integrate_ball(sphere, &gl, radius, &breakpoints(wf, &[f, g]), |x, _, r| {
        let (jf, jg) = (f.jet(x), g.jet(x));
        [0.5 * dot(&jf.grad, &jg.grad) * wf.density.rho(x) * phi.at(r)]
    });
    finite_or_eval(v, "Dirichlet form quadrature")
}

/// E(f, g) = 1/2 int grad f . grad g rho phi dx.
pub fn dirichlet_form(f: &TestFunction, g: &TestFunction, wf: &WeightField, qc: &QuadratureConfig) -> Result<FormValue> {
    check_inputs(&[f, g], wf, qc)?;
    let sphere = qc.sphere(wf.dim());
    let value = dirichlet_with(f, g, wf, qc, &sphere)?;
    let coarse = dirichlet_with(f, g, wf, &qc.with_radial_nodes((qc.radial_nodes / 2).max(2)), &sphere)?;
    let mut error_estimate = (value - coarse).abs();
    if sphere.monte_carlo {
        let alt = SphereRule::monte_carlo(wf.dim(), qc.mc_samples, 0x0A17_5EED);
        error_estimate = error_estimate.max((value - dirichlet_with(f, g, wf, qc, &alt)?).abs());
    }
    if error_estimate > 0.1 * value.abs().max(1e-8) {
        return Err(Error::Evaluation {
            point: vec![],
            reason: format!("Dirichlet form quadrature not converging: {value} +- {error_estimate}"),
        });
    }
    Ok(FormValue {
        value,
        error_estimate,
        monte_carlo: sphere.monte_carlo,
    })
}

/// One membrane contribution to the integration by parts identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceTerm {
    pub radius: f64,
    /// (w_out - w_in) / 2.
    pub coefficient: f64,
    /// int over the sphere of grad f . nu g rho d(sigma).
    pub flux: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IbpReport {
    /// -E(f, g).
    pub lhs: f64,
    /// int (Delta f / 2 + grad f . grad rho / (2 rho)) g rho phi dx.
    pub volume: f64,
    pub surface: Vec<SurfaceTerm>,
    pub rhs: f64,
    pub abs_residual: f64,
    /// abs_residual / max(|lhs|, |rhs|), or abs_residual when both vanish.
    pub rel_residual: f64,
    /// Bound on the surface terms of membranes dropped by truncation.
    pub truncation_bound: f64,
}

/// Residual of -E(f, g) = volume term + membrane surface terms.
pub fn ibp_residual(f: &TestFunction, g: &TestFunction, wf: &WeightField, qc: &QuadratureConfig) -> Result<IbpReport> {
    check_inputs(&[f, g], wf, qc)?;
    let dim = wf.dim();
    let radius = common_support(f, g)?;
    let sphere = qc.sphere(dim);
    let gl = GaussLegendre::new(qc.radial_nodes);
    let phi = PhiLookup::new(wf);
    let mut grad_rho = vec![0.0; dim];
    let [energy, volume] = integrate_ball(&sphere, &gl, radius, &breakpoints(wf, &[f, g]), |x, _, r| {
        let (jf, jg) = (f.jet(x), g.jet(x));
        let rho = wf.density.rho(x);
        wf.density.grad_rho(x, &mut grad_rho);
        let p = phi.at(r);
        [
            0.5 * dot(&jf.grad, &jg.grad) * rho * p,
            (0.5 * jf.laplacian * rho + 0.5 * dot(&jf.grad, &grad_rho)) * jg.value * p,
        ]
    });
    let lhs = -finite_or_eval(energy, "Dirichlet form quadrature")?;
    let volume = finite_or_eval(volume, "volume term quadrature")?;
    let flux = |a: f64| {
        sphere.integrate_sphere(&vec![0.0; dim], a, |x, u| {
            let (jf, jg) = (f.jet(x), g.jet(x));
            dot(&jf.grad, u) * jg.value * wf.density.rho(x)
        })
    };
    let surface: Vec<SurfaceTerm> = wf
        .membranes
        .interfaces()
        .iter()
        .filter(|i| i.radius < radius && i.weight_outside != i.weight_inside)
        .map(|i| SurfaceTerm {
            radius: i.radius,
            coefficient: 0.5 * (i.weight_outside - i.weight_inside),
            flux: flux(i.radius),
        })
        .collect();
    let rhs = volume + surface.iter().map(|s| s.coefficient * s.flux).sum::<f64>();
    let dropped = wf.membranes.truncation.dropped_increment_mass;
    let truncation_bound = if dropped > 0.0 {
        // sup of |flux| over the radial nodes, times the dropped increments
        let edges = radial_panels(0.0, radius, &breakpoints(wf, &[f, g]));
        let sup = edges
            .windows(2)
            .flat_map(|w| gl.mapped(w[0], w[1]).map(|(r, _)| flux(r).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max);
        0.5 * dropped * sup
    } else {
        0.0
    };
    let abs_residual = (lhs - rhs).abs();
    let scale = lhs.abs().max(rhs.abs());
    Ok(IbpReport {
        lhs,
        volume,
        surface,
        rhs,
        abs_residual,
        rel_residual: if scale > 0.0 { abs_residual / scale } else { abs_residual },
        truncation_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub radius: f64,
    /// int over the sphere of radius l of |f| rho d(sigma).
    pub lhs: f64,
    /// (int_{B_l} |grad f|^2 rho phi + |f|^2 rho phi)^(1/2).
    pub norm: f64,
    /// rho dx(B_l).
    pub rho_volume: f64,
    /// ||grad sqrt(rho)||_{L^2(B_l)}.
    pub grad_xi: f64,
    /// inf of phi on B_l.
    pub delta: f64,
    /// sqrt(8 / delta) (rho_volume^(1/2) + grad_xi).
    pub constant: f64,
    pub rhs: f64,
    pub pass: bool,
    /// max(1, d / l) (2 / sqrt(delta)) (rho_volume^(1/2) + grad_xi), from the
    /// divergence theorem with the field x / l.
    pub constant_corrected: f64,
    pub rhs_corrected: f64,
    pub pass_corrected: bool,
    /// lhs / rhs_corrected.
    pub ratio: f64,
}

/// Checks int_{dB_l} |f| rho d(sigma) <= C(l) ||f||_{B_l} with the explicit constant and
/// with the constant that also accounts for the zeroth-order term of the trace estimate.
pub fn trace_inequality_check(f: &TestFunction, l: f64, wf: &WeightField, qc: &QuadratureConfig) -> Result<TraceReport> {
    check_inputs(&[f], wf, qc)?;
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::Validation(format!("trace radius must be positive, got {l}")));
    }
    let dim = wf.dim();
    let sphere = qc.sphere(dim);
    let gl = GaussLegendre::new(qc.radial_nodes);
    let phi = PhiLookup::new(wf);
    let mut grad_rho = vec![0.0; dim];
    let [energy, rho_volume, grad_xi2] = integrate_ball(&sphere, &gl, l, &breakpoints(wf, &[f]), |x, _, r| {
        let j = f.jet(x);
        let rho = wf.density.rho(x);
        wf.density.grad_rho(x, &mut grad_rho);
        let psi = rho * phi.at(r);
        [
            (dot(&j.grad, &j.grad) + j.value * j.value) * psi,
            rho,
            dot(&grad_rho, &grad_rho) / (4.0 * rho),
        ]
    });
    let lhs = sphere.integrate_sphere(&vec![0.0; dim], l, |x, _| f.value(x).abs() * wf.density.rho(x));
    let norm = finite_or_eval(energy, "trace norm quadrature")?.max(0.0).sqrt();
    let rho_volume = finite_or_eval(rho_volume, "density volume quadrature")?;
    let grad_xi = finite_or_eval(grad_xi2, "density gradient quadrature")?.sqrt();
    let delta = check_h1(&wf.membranes, &[l]).delta[0].1;
    if !(delta > 0.0) {
        return Err(Error::Hypothesis(format!("phi has no positive lower bound on B_{l}")));
    }
    let base = rho_volume.sqrt() + grad_xi;
    let constant = (8.0 / delta).sqrt() * base;
    let constant_corrected = (dim as f64 / l).max(1.0) * 2.0 / delta.sqrt() * base;
    let rhs = constant * norm;
    let rhs_corrected = constant_corrected * norm;
    Ok(TraceReport {
        radius: l,
        lhs,
        norm,
        rho_volume,
        grad_xi,
        delta,
        constant,
        rhs,
        pass: lhs <= rhs,
        constant_corrected,
        rhs_corrected,
        pass_corrected: lhs <= rhs_corrected,
        ratio: if rhs_corrected > 0.0 { lhs / rhs_corrected } else { 0.0 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub radii: Vec<f64>,
    /// psi dx(B_r) at every grid radius.
    pub volumes: Vec<f64>,
    /// Least-squares slope of log volume against log r over the last decade of the grid.
    pub fitted_exponent: f64,
    /// Slopes between consecutive grid points.
    pub local_exponents: Vec<f64>,
    /// Polynomial growth makes int r / log V(r) dr diverge: conservative (heuristic).
    pub conservative: bool,
    /// Exponent <= 2 makes int r / V(r) dr diverge: recurrent (heuristic).
    pub recurrent: bool,
}

/// Volume growth of psi dx and the derived conservativeness and recurrence diagnostics.
pub fn growth_criteria(wf: &WeightField, r_grid: &[f64], qc: &QuadratureConfig) -> Result<GrowthReport> {
    qc.validate()?;
    if r_grid.len() < 2 || r_grid[0] <= 0.0 || r_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Validation("radius grid must be positive, increasing and have two points".into()));
    }
    let dim = wf.dim();
    let gl = GaussLegendre::new(qc.radial_nodes);
    let phi = PhiLookup::new(wf);
    let radial = wf.density.is_radial();
    let sphere = qc.sphere(dim);
    let origin = vec![0.0; dim];
    let area = sphere_area(dim);
    let shell = |r: f64| {
        let rho_shell = if radial {
            area * r.powi(dim as i32 - 1) * wf.density.radial_profile(r).map_or(f64::NAN, |p| p.0)
        } else {
            sphere.integrate_sphere(&origin, r, |x, _| wf.density.rho(x))
        };
        rho_shell * phi.at(r)
    };
    let membranes = wf.membranes.radii();
    let mut volumes = Vec::with_capacity(r_grid.len());
    let mut total = 0.0;
    let mut lo = 0.0;
    for &hi in r_grid {
        for w in radial_panels(lo, hi, &membranes).windows(2) {
            total += gl.integrate(shell, w[0], w[1]);
        }
        let v = finite_or_eval(total, "volume quadrature")?;
        volumes.push(v);
        lo = hi;
    }
    if volumes.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Hypothesis("weight has zero volume on a grid ball".into()));
    }
    let logs: Vec<(f64, f64)> = r_grid.iter().zip(&volumes).map(|(r, v)| (r.ln(), v.ln())).collect();
    let local_exponents = logs.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
    let r_max = *r_grid.last().unwrap();
    let tail: Vec<(f64, f64)> = r_grid
        .iter()
        .zip(&logs)
        .filter(|(r, _)| **r >= r_max / 10.0)
        .map(|(_, p)| *p)
        .collect();
    let tail = if tail.len() >= 2 { tail } else { logs[logs.len() - 2..].to_vec() };
    let fitted_exponent = slope(&tail);
    Ok(GrowthReport {
        radii: r_grid.to_vec(),
        volumes,
        fitted_exponent,
        local_exponents,
        conservative: fitted_exponent.is_finite(),
        recurrent: fitted_exponent <= 2.0,
    })
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Geometric grid from 1 to `r_max` with `per_decade` points per decade.
pub fn log_grid(r_max: f64, per_decade: usize) -> Vec<f64> {
    let n = (r_max.log10() * per_decade as f64).ceil().max(1.0) as usize;
    (0..=n).map(|i| r_max.powf(i as f64 / n as f64)).collect()
}

/// psi dx(A) for the annulus lo < |x| < hi.
pub fn annulus_mass(wf: &WeightField, lo: f64, hi: f64, qc: &QuadratureConfig) -> Result<f64> {
    if !(0.0 <= lo && lo < hi) {
        return Err(Error::Validation(format!("bad annulus ({lo}, {hi})")));
    }
    let inner = if lo > 0.0 {
        growth_criteria(wf, &[lo, hi], qc)?.volumes
    } else {
        let v = growth_criteria(wf, &[hi / 2.0, hi], qc)?.volumes;
        vec![0.0, v[1]]
    };
    Ok(inner[1] - inner[0])
}

#[cfg(test)]
mod tests;
