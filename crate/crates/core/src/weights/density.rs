//! The absolutely continuous part of the symmetrizing weight.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
type RadialFn = Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>;

/// Built-in densities, all radially symmetric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum BuiltinDensity {
    /// rho = value.
    Constant {
        #[serde(default = "one")]
        value: f64,
    },
    /// rho = exp(-a |x|^2).
    Gaussian { a: f64 },
    /// rho = (1 + |x|^2)^(-b/2).
    Power { b: f64 },
    /// rho = |x|^b, -d < b < d.
    PurePower { b: f64 },
}

fn one() -> f64 {
    1.0
}

/// A user-supplied density. Without a gradient, central differences with step
/// 1e-5 (1 + |x|) are used and `gradient_is_fd` is set.
#[derive(Clone)]
pub struct CustomDensity {
    pub rho: ScalarFn,
    pub grad: Option<VectorFn>,
    pub radial: Option<RadialFn>,
}

impl fmt::Debug for CustomDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDensity")
            .field("grad", &self.grad.is_some())
            .field("radial", &self.radial.is_some())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum DensityKind {
    Builtin(BuiltinDensity),
    Custom(CustomDensity),
}

/// Density rho on R^d with gradient access.
#[derive(Debug, Clone)]
pub struct DensityModel {
    pub dim: usize,
    pub kind: DensityKind,
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

impl DensityModel {
    pub fn builtin(dim: usize, d: BuiltinDensity) -> Result<Self> {
        if dim < 3 {
            return Err(Error::Validation(format!("dimension must be at least 3, got {dim}")));
        }
        match d {
            BuiltinDensity::Constant { value } if !(value > 0.0 && value.is_finite()) => {
                return Err(Error::Validation(format!("constant density must be positive, got {value}")))
            }
            BuiltinDensity::Gaussian { a } if !(a >= 0.0 && a.is_finite()) => {
                return Err(Error::Validation(format!("gaussian rate must be >= 0, got {a}")))
            }
            BuiltinDensity::Power { b } if !b.is_finite() => {
                return Err(Error::Validation("power exponent must be finite".into()))
            }
            BuiltinDensity::PurePower { b } if !(b.abs() < dim as f64) => {
                return Err(Error::Validation(format!(
                    "pure power exponent must satisfy -d < b < d, got {b} with d = {dim}"
                )))
            }
            _ => {}
        }
        Ok(Self {
            dim,
            kind: DensityKind::Builtin(d),
        })
    }

    pub fn constant(dim: usize) -> Self {
        Self::builtin(dim, BuiltinDensity::Constant { value: 1.0 }).expect("valid constant density")
    }

    pub fn custom(dim: usize, custom: CustomDensity) -> Result<Self> {
        if dim < 3 {
            return Err(Error::Validation(format!("dimension must be at least 3, got {dim}")));
        }
        Ok(Self {
            dim,
            kind: DensityKind::Custom(custom),
        })
    }

    /// True when gradients come from finite differences.
    pub fn gradient_is_fd(&self) -> bool {
        matches!(&self.kind, DensityKind::Custom(c) if c.grad.is_none())
    }

    pub fn rho(&self, x: &[f64]) -> f64 {
        match &self.kind {
            DensityKind::Builtin(b) => builtin_profile(b, norm2(x).sqrt()).0,
            DensityKind::Custom(c) => (c.rho)(x),
        }
    }

    pub fn grad_rho(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            DensityKind::Builtin(b) => {
                let r = norm2(x).sqrt();
                let (_, dv) = builtin_profile(b, r);
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = if r > 0.0 { dv * xi / r } else { 0.0 };
                }
            }
            DensityKind::Custom(c) => match &c.grad {
                Some(g) => g(x, out),
                None => fd_gradient(&*c.rho, x, out),
            },
        }
    }

    /// Radial profile (value, derivative) when rho is radially symmetric.
    pub fn radial_profile(&self, r: f64) -> Option<(f64, f64)> {
        match &self.kind {
            DensityKind::Builtin(b) => Some(builtin_profile(b, r)),
            DensityKind::Custom(c) => c.radial.as_ref().map(|p| p(r)),
        }
    }

    pub fn is_radial(&self) -> bool {
        match &self.kind {
            DensityKind::Builtin(_) => true,
            DensityKind::Custom(c) => c.radial.is_some(),
        }
    }

    /// rho'(r) / rho(r) for radial densities, computed without forming rho where possible.
    pub fn radial_log_derivative(&self, r: f64) -> Option<f64> {
        match &self.kind {
            DensityKind::Builtin(b) => Some(match *b {
                BuiltinDensity::Constant { .. } => 0.0,
                BuiltinDensity::Gaussian { a } => -2.0 * a * r,
                BuiltinDensity::Power { b } => -b * r / (1.0 + r * r),
                BuiltinDensity::PurePower { b } => b / r,
            }),
            DensityKind::Custom(c) => c.radial.as_ref().map(|p| {
                let (v, dv) = p(r);
                dv / v
            }),
        }
    }

    /// Writes grad(rho) / (2 rho) at `x` into `out`.
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if let DensityKind::Builtin(b) = &self.kind {
            let r2 = norm2(x);
            let factor = match *b {
                BuiltinDensity::Constant { .. } => 0.0,
                BuiltinDensity::Gaussian { a } => -a,
                BuiltinDensity::Power { b } => -0.5 * b / (1.0 + r2),
                BuiltinDensity::PurePower { b } => {
                    if r2 == 0.0 && b != 0.0 {
                        return Err(Error::eval(x, "pure power density is singular at the origin"));
                    }
                    if b == 0.0 {
                        0.0
                    } else {
                        0.5 * b / r2
                    }
                }
            };
            for (o, xi) in out.iter_mut().zip(x) {
                *o = factor * xi;
            }
            return Ok(());
        }
        let rho = self.rho(x);
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::eval(x, format!("density is not positive ({rho})")));
        }
        self.grad_rho(x, out);
        for o in out.iter_mut() {
            if !o.is_finite() {
                return Err(Error::eval(x, "non-finite density gradient"));
            }
            *o /= 2.0 * rho;
        }
        Ok(())
    }
}

fn builtin_profile(b: &BuiltinDensity, r: f64) -> (f64, f64) {
    match *b {
        BuiltinDensity::Constant { value } => (value, 0.0),
        BuiltinDensity::Gaussian { a } => {
            let v = (-a * r * r).exp();
            (v, -2.0 * a * r * v)
        }
        BuiltinDensity::Power { b } => {
            let v = (1.0 + r * r).powf(-0.5 * b);
            (v, -b * r * v / (1.0 + r * r))
        }
        BuiltinDensity::PurePower { b } => {
            if b == 0.0 {
                (1.0, 0.0)
            } else {
                let v = r.powf(b);
                (v, b * v / r)
            }
        }
    }
}

/// Central differences with step 1e-5 (1 + |x|).
pub fn fd_gradient(f: &(dyn Fn(&[f64]) -> f64 + Send + Sync), x: &[f64], out: &mut [f64]) {
    let h = 1e-5 * (1.0 + norm2(x).sqrt());
    let mut y = x.to_vec();
    for i in 0..x.len() {
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        y[i] = x[i];
        out[i] = (fp - fm) / (2.0 * h);
    }
}

/// grad(rho) / (2 rho) at `x`.
pub fn drift_ac(dm: &DensityModel, x: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x.len()];
    dm.drift_into(x, &mut out)?;
    Ok(out)
}
