//! Smooth compactly supported test functions with exact gradients and Laplacians.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value, gradient and Laplacian of a test function at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec<f64>,
    pub laplacian: f64,
}

/// Built-in test functions. Radial profiles are functions of ||x||.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// exp(-1 / (1 - t^2)) with t = (||x|| - center) / width. Needs `center == 0`
    /// (a ball bump) or `center >= width` (a shell bump).
    RadialBump { center: f64, width: f64 },
    /// 1 on ||x|| <= inner, decaying smoothly to 0 at ||x|| = outer.
    Plateau { inner: f64, outer: f64 },
    /// (offset + slope . x) times a radial bump.
    PolyBump {
        offset: f64,
        slope: Vec<f64>,
        center: f64,
        width: f64,
    },
    /// A constant; only usable on bounded domains such as the trace check.
    Constant { value: f64 },
}

impl TestFunction {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bump_ok = |c: f64, w: f64| w > 0.0 && (c == 0.0 || c >= w) && c.is_finite() && w.is_finite();
        let ok = match self {
            Self::RadialBump { center, width } => bump_ok(*center, *width),
            Self::Plateau { inner, outer } => *inner >= 0.0 && outer > inner && outer.is_finite(),
            Self::PolyBump {
                slope, center, width, ..
            } => bump_ok(*center, *width) && slope.len() == dim,
            Self::Constant { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid test function {self:?} in dimension {dim}")))
        }
    }

    /// Radius outside of which the function and its derivatives vanish (infinite for constants).
    pub fn support_radius(&self) -> f64 {
        match self {
            Self::RadialBump { center, width } | Self::PolyBump { center, width, .. } => center + width,
            Self::Plateau { outer, .. } => *outer,
            Self::Constant { .. } => f64::INFINITY,
        }
    }

    /// Radii where the function changes regime; quadrature panels should break there.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::RadialBump { center, width } | Self::PolyBump { center, width, .. } => {
                vec![(center - width).max(0.0), *center, center + width]
            }
            Self::Plateau { inner, outer } => vec![*inner, *outer],
            Self::Constant { .. } => vec![],
        }
    }

    pub fn is_radial(&self) -> bool {
        !matches!(self, Self::PolyBump { .. })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.jet(x).value
    }

    pub fn jet(&self, x: &[f64]) -> Jet {
        let dim = x.len();
        let r = norm(x);
        match self {
            Self::Constant { value } => Jet {
                value: *value,
                grad: vec![0.0; dim],
                laplacian: 0.0,
            },
            Self::RadialBump { center, width } => {
                let p = bump_profile(r, *center, *width);
                radial_jet(x, p)
            }
            Self::Plateau { inner, outer } => {
                let p = plateau_profile(r, *inner, *outer);
                radial_jet(x, p)
            }
            Self::PolyBump {
                offset,
                slope,
                center,
                width,
            } => {
                let p = bump_profile(r, *center, *width);
                let poly = offset + dot(slope, x);
                // grad(p B) = B a + p B'(r) x / r, lap(p B) = 2 B'(r) (a . x) / r + p lap B
                let grad = slope
                    .iter()
                    .zip(x)
                    .map(|(a, xi)| p.f * a + poly * p.d1_over_r * xi)
                    .collect();
                let lap_b = p.d2 + (dim as f64 - 1.0) * p.d1_over_r;
                Jet {
                    value: poly * p.f,
                    grad,
                    laplacian: 2.0 * p.d1_over_r * dot(slope, x) + poly * lap_b,
                }
            }
        }
    }
}

/// F(r), F'(r) / r and F''(r) of a radial profile.
#[derive(Debug, Clone, Copy)]
struct Profile {
    f: f64,
    d1_over_r: f64,
    d2: f64,
}

fn radial_jet(x: &[f64], p: Profile) -> Jet {
    let dim = x.len() as f64;
    Jet {
        value: p.f,
        grad: x.iter().map(|xi| p.d1_over_r * xi).collect(),
        laplacian: p.d2 + (dim - 1.0) * p.d1_over_r,
    }
}

/// beta(t) = exp(-1 / (1 - t^2)) and its first two derivatives.
fn beta(t: f64) -> (f64, f64, f64, f64) {
    if t.abs() >= 1.0 {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let s = 1.0 - t * t;
    let b = (-1.0 / s).exp();
    let g1 = -2.0 * t / (s * s);
    let g2 = -2.0 / (s * s) - 8.0 * t * t / (s * s * s);
    // last entry: beta'(t) / t, finite at t = 0
    (b, b * g1, b * (g1 * g1 + g2), -2.0 * b / (s * s))
}

fn bump_profile(r: f64, center: f64, width: f64) -> Profile {
    let t = (r - center) / width;
    let (b, b1, b2, b1_over_t) = beta(t);
    let d1_over_r = if center == 0.0 {
        // F'(r) / r = beta'(t) / (w r) = beta'(t) / (w^2 t)
        b1_over_t / (width * width)
    } else {
        b1 / (width * r)
    };
    Profile {
        f: b,
        d1_over_r,
        d2: b2 / (width * width),
    }
}

/// exp(-1/s) for s > 0 with derivatives.
fn h(s: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let v = (-1.0 / s).exp();
    (v, v / (s * s), v * (1.0 / s.powi(4) - 2.0 / s.powi(3)))
}

fn plateau_profile(r: f64, inner: f64, outer: f64) -> Profile {
    if r <= inner {
        return Profile {
            f: 1.0,
            d1_over_r: 0.0,
            d2: 0.0,
        };
    }
    if r >= outer {
        return Profile {
            f: 0.0,
            d1_over_r: 0.0,
            d2: 0.0,
        };
    }
    let len = outer - inner;
    let s = (outer - r) / len;
    let (a, a1, a2) = h(s);
    let (b, hb1, hb2) = h(1.0 - s);
    let (b1, b2) = (-hb1, hb2);
    let sum = a + b;
    // S = a / (a + b) as a function of s, then chain rule with ds/dr = -1/len
    let s1 = (a1 * b - a * b1) / (sum * sum);
    let s2 = ((a2 * b - a * b2) * sum - 2.0 * (a1 * b - a * b1) * (a1 + b1)) / (sum * sum * sum);
    Profile {
        f: a / sum,
        d1_over_r: -s1 / len / r,
        d2: s2 / (len * len),
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Central differences for the gradient and the Laplacian.
    fn fd_jet(f: &TestFunction, x: &[f64]) -> (Vec<f64>, f64) {
        let e = 1e-4;
        let f0 = f.value(x);
        let mut grad = vec![0.0; x.len()];
        let mut lap = 0.0;
        for i in 0..x.len() {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += e;
            m[i] -= e;
            let (fp, fm) = (f.value(&p), f.value(&m));
            lap += (fp - 2.0 * f0 + fm) / (e * e);
            let g = 1e-6;
            p[i] = x[i] + g;
            m[i] = x[i] - g;
            grad[i] = (f.value(&p) - f.value(&m)) / (2.0 * g);
        }
        (grad, lap)
    }

    fn catalog() -> Vec<TestFunction> {
        vec![
            TestFunction::RadialBump { center: 0.0, width: 1.3 },
            TestFunction::RadialBump { center: 1.0, width: 0.6 },
            TestFunction::Plateau { inner: 0.5, outer: 1.5 },
            TestFunction::PolyBump {
                offset: 0.5,
                slope: vec![1.0, -2.0, 0.25],
                center: 0.9,
                width: 0.7,
            },
        ]
    }

    proptest! {
        #[test]
        fn derivatives_match_finite_differences(
            i in 0usize..4,
            x in prop::collection::vec(-1.2f64..1.2, 3),
        ) {
            let f = &catalog()[i];
            let jet = f.jet(&x);
            let (g, lap) = fd_jet(f, &x);
            let scale = 1.0 + jet.grad.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for (a, b) in jet.grad.iter().zip(&g) {
                prop_assert!((a - b).abs() < 1e-6 * scale, "grad {a} vs {b}");
            }
            prop_assert!((jet.laplacian - lap).abs() < 1e-4 * (1.0 + jet.laplacian.abs()),
                "laplacian {} vs {lap}", jet.laplacian);
        }
    }

    #[test]
    fn vanishes_outside_support() {
        for f in catalog() {
            let r = f.support_radius();
            for u in [[1.0, 0.0, 0.0], [0.0, 0.6, 0.8]] {
                let x: Vec<f64> = u.iter().map(|v| v * r * 1.0001).collect();
                let j = f.jet(&x);
                assert_eq!(j.value, 0.0);
                assert!(j.grad.iter().all(|v| *v == 0.0));
                assert_eq!(j.laplacian, 0.0);
            }
        }
    }

    #[test]
    fn ball_bump_is_smooth_at_origin() {
        let f = TestFunction::RadialBump { center: 0.0, width: 1.0 };
        let j = f.jet(&[0.0, 0.0, 0.0]);
        assert_eq!(j.value, (-1.0f64).exp());
        // F''(0) = beta''(0) = -2 e^-1, Laplacian = d F''(0)
        assert!((j.laplacian + 6.0 * (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn validation() {
        assert!(TestFunction::RadialBump { center: 0.3, width: 0.5 }.validate(3).is_err());
        assert!(TestFunction::Plateau { inner: 1.0, outer: 1.0 }.validate(3).is_err());
        assert!(TestFunction::PolyBump {
            offset: 0.0,
            slope: vec![1.0],
            center: 0.0,
            width: 1.0
        }
        .validate(3)
        .is_err());
    }
}
