//! Gauss–Legendre rules, adaptive 1D integration and spherical product rules.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the `n`-point rule by Newton iteration on the Legendre recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Adaptive bisection on top of a fixed Gauss rule: a panel is accepted when
/// the one-panel and two-half-panel estimates agree to `tol` (scaled by panel width).
pub fn adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let rule = GaussLegendre::new(15);
    let whole = rule.integrate(&mut f, a, b);
    adaptive_step(&rule, &mut f, a, b, whole, tol.max(1e-15), 0)
}

fn adaptive_step<F: FnMut(f64) -> f64>(
    rule: &GaussLegendre,
    f: &mut F,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let mid = 0.5 * (a + b);
    let left = rule.integrate(&mut *f, a, mid);
    let right = rule.integrate(&mut *f, mid, b);
    let both = left + right;
    if (both - whole).abs() <= tol || depth >= 48 {
        return both;
    }
    adaptive_step(rule, f, a, mid, left, 0.5 * tol, depth + 1)
        + adaptive_step(rule, f, mid, b, right, 0.5 * tol, depth + 1)
}

/// Panel endpoints for a radial integral on [a, b]: every breakpoint inside
/// (a, b) becomes a panel edge, and long panels are split geometrically so that
/// a fixed rule resolves functions with structure at scale ~1 near the origin
/// and slow variation far out.
pub fn radial_panels(a: f64, b: f64, breakpoints: &[f64]) -> Vec<f64> {
    let mut edges: Vec<f64> = vec![a];
    edges.extend(breakpoints.iter().copied().filter(|&r| r > a && r < b));
    edges.push(b);
    edges.sort_by(|x, y| x.partial_cmp(y).unwrap());
    edges.dedup();
    let mut out = vec![edges[0]];
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mut cur = lo;
        // split [lo, hi] while hi is much larger than the current left edge
        while hi > 4.0 * cur.max(0.25) {
            cur = 2.0 * cur.max(0.25);
            out.push(cur);
        }
        out.push(hi);
    }
    out.dedup();
    out
}

/// Area of the unit sphere S^{d-1} in R^d.
pub fn sphere_area(dim: usize) -> f64 {
    2.0 * PI.powf(dim as f64 / 2.0) / gamma_half(dim)
}

/// Volume of the unit ball in R^d.
pub fn ball_volume(dim: usize) -> f64 {
    sphere_area(dim) / dim as f64
}

/// Gamma(d/2) for a positive integer d.
fn gamma_half(d: usize) -> f64 {
    if d.is_multiple_of(2) {
        (1..d / 2).map(|k| k as f64).product()
    } else {
        let mut g = PI.sqrt();
        let mut x = 0.5;
        while x < d as f64 / 2.0 - 0.25 {
            g *= x;
            x += 1.0;
        }
        g
    }
}

/// A cubature rule on the unit sphere S^{d-1}: unit directions with weights summing to its area.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub dim: usize,
    pub directions: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// True when the rule is a Monte Carlo sample (d > 3).
    pub monte_carlo: bool,
}

impl SphereRule {
    /// d = 3: Gauss–Legendre in cos(theta) times uniform azimuth. d > 3: `mc_samples`
    /// normalized Gaussian directions from a fixed-seed stream.
    pub fn new(dim: usize, polar_nodes: usize, azimuth_nodes: usize, mc_samples: usize) -> Self {
        if dim == 3 {
            let gl = GaussLegendre::new(polar_nodes.max(1));
            let n_az = azimuth_nodes.max(1);
            let mut directions = Vec::with_capacity(gl.len() * n_az);
            let mut weights = Vec::with_capacity(gl.len() * n_az);
            let dphi = 2.0 * PI / n_az as f64;
            for (c, w) in gl.mapped(-1.0, 1.0) {
                let s = (1.0 - c * c).max(0.0).sqrt();
                for j in 0..n_az {
                    let phi = (j as f64 + 0.5) * dphi;
                    directions.push(vec![s * phi.cos(), s * phi.sin(), c]);
                    weights.push(w * dphi);
                }
            }
            Self {
                dim,
                directions,
                weights,
                monte_carlo: false,
            }
        } else {
            Self::monte_carlo(dim, mc_samples, 0x0053_4845_5245_u64 ^ dim as u64)
        }
    }

    /// `samples` normalized Gaussian directions drawn from a stream keyed by `seed`.
    pub fn monte_carlo(dim: usize, samples: usize, seed: u64) -> Self {
        let n = samples.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let area = sphere_area(dim);
        let mut directions = Vec::with_capacity(n);
        for _ in 0..n {
            let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            directions.push(v);
        }
        Self {
            dim,
            directions,
            weights: vec![area / n as f64; n],
            monte_carlo: true,
        }
    }

    /// Integral over the sphere of radius `r` centred at `center` of `f`, w.r.t. surface measure.
    pub fn integrate_sphere<F: FnMut(&[f64], &[f64]) -> f64>(
        &self,
        center: &[f64],
        r: f64,
        mut f: F,
    ) -> f64 {
        let scale = r.powi(self.dim as i32 - 1);
        let mut x = vec![0.0; self.dim];
        let mut acc = 0.0;
        for (u, w) in self.directions.iter().zip(&self.weights) {
            for ((xi, ci), ui) in x.iter_mut().zip(center).zip(u) {
                *xi = ci + r * ui;
            }
            acc += w * f(&x, u);
        }
        acc * scale
    }

    /// Several integrands over the same sphere in one sweep.
    pub fn integrate_sphere_n<const N: usize, F: FnMut(&[f64], &[f64]) -> [f64; N]>(
        &self,
        center: &[f64],
        r: f64,
        mut f: F,
    ) -> [f64; N] {
        let scale = r.powi(self.dim as i32 - 1);
        let mut x = vec![0.0; self.dim];
        let mut acc = [0.0; N];
        for (u, w) in self.directions.iter().zip(&self.weights) {
            for ((xi, ci), ui) in x.iter_mut().zip(center).zip(u) {
                *xi = ci + r * ui;
            }
            let v = f(&x, u);
            for (a, vi) in acc.iter_mut().zip(v) {
                *a += w * vi;
            }
        }
        acc.map(|a| a * scale)
    }
}
