use std::f64::consts::PI;

use approx::assert_relative_eq;

use super::*;
use crate::quadrature::adaptive;
use crate::weights::{BuiltinDensity, DensityModel, Membrane, MembraneSet, WeightField};

fn field(ms: MembraneSet, d: BuiltinDensity) -> WeightField {
    WeightField::new(ms, DensityModel::builtin(3, d).unwrap())
}

fn flat() -> WeightField {
    field(MembraneSet::constant(1.0, 1.0).unwrap(), BuiltinDensity::Constant { value: 1.0 })
}

/// Membrane at 0.5 with weight 1 inside and 2 outside.
fn one_membrane() -> WeightField {
    let ms = MembraneSet::explicit(1.0, vec![Membrane { radius: 0.5, weight: 1.0 }], 2.0, vec![], 2.0, 0.0).unwrap();
    field(ms, BuiltinDensity::Constant { value: 1.0 })
}

fn three_membranes() -> WeightField {
    let ms = MembraneSet::explicit(
        1.0,
        vec![Membrane { radius: 0.4, weight: 1.0 }, Membrane { radius: 0.7, weight: 2.0 }],
        1.5,
        vec![],
        3.0,
        0.0,
    )
    .unwrap();
    field(ms, BuiltinDensity::Gaussian { a: 1.0 })
}

fn shell(center: f64, width: f64) -> TestFunction {
    TestFunction::RadialBump { center, width }
}

/// F'(r) of the shell bump, written out independently of the catalog.
fn bump_slope(r: f64, c: f64, w: f64) -> f64 {
    let t = (r - c) / w;
    if t.abs() >= 1.0 {
        return 0.0;
    }
    let s = 1.0 - t * t;
    (-1.0 / s).exp() * (-2.0 * t / (s * s)) / w
}

fn bump_value(r: f64, c: f64, w: f64) -> f64 {
    let t = (r - c) / w;
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

#[test]
fn dirichlet_matches_one_dimensional_integral() {
    let f = shell(0.8, 0.6);
    let v = dirichlet_form(&f, &f, &flat(), &QuadratureConfig::default()).unwrap();
    let oracle = adaptive(|r| 0.5 * bump_slope(r, 0.8, 0.6).powi(2) * 4.0 * PI * r * r, 0.2, 1.4, 1e-13);
    assert_relative_eq!(v.value, oracle, max_relative = 1e-8);
    assert!(v.error_estimate < 1e-5, "{v:?}");
}

#[test]
fn dirichlet_splits_at_membrane() {
    let f = shell(0.5, 0.3);
    let v = dirichlet_form(&f, &f, &one_membrane(), &QuadratureConfig::default()).unwrap();
    let part = |a: f64, b: f64, w: f64| adaptive(|r| 0.5 * w * bump_slope(r, 0.5, 0.3).powi(2) * 4.0 * PI * r * r, a, b, 1e-13);
    let oracle = part(0.2, 0.5, 1.0) + part(0.5, 0.8, 2.0);
    assert_relative_eq!(v.value, oracle, max_relative = 1e-8);
}

#[test]
fn dirichlet_with_plateau_vanishes() {
    let f = shell(0.8, 0.3);
    let g = TestFunction::Plateau { inner: 1.5, outer: 2.0 };
    let v = dirichlet_form(&f, &g, &three_membranes(), &QuadratureConfig::default()).unwrap();
    assert!(v.value.abs() < 1e-12);
}

#[test]
fn dirichlet_is_symmetric_and_nonnegative() {
    let wf = three_membranes();
    let qc = QuadratureConfig::default();
    let f = shell(0.6, 0.5);
    let g = TestFunction::PolyBump {
        offset: 1.0,
        slope: vec![0.3, -0.2, 0.5],
        center: 0.0,
        width: 1.2,
    };
    let fg = dirichlet_form(&f, &g, &wf, &qc).unwrap().value;
    let gf = dirichlet_form(&g, &f, &wf, &qc).unwrap().value;
    assert!((fg - gf).abs() < 1e-12);
    assert!(dirichlet_form(&g, &g, &wf, &qc).unwrap().value >= 0.0);
    assert!(dirichlet_form(&f, &f, &wf, &qc).unwrap().value >= 0.0);
}

#[test]
fn green_identity_without_membranes() {
    let r = ibp_residual(&shell(0.8, 0.6), &shell(0.0, 1.2), &flat(), &QuadratureConfig::default()).unwrap();
    assert!(r.surface.is_empty());
    assert!(r.rel_residual < 1e-8, "{r:?}");
}

#[test]
fn surface_term_has_closed_form_for_radial_functions() {
    let f = shell(0.5, 0.3);
    let g = shell(0.0, 1.0);
    let r = ibp_residual(&f, &g, &one_membrane(), &QuadratureConfig::default()).unwrap();
    assert_eq!(r.surface.len(), 1);
    let s = &r.surface[0];
    assert_eq!(s.coefficient, 0.5);
    // flux = 4 pi a^2 F'(a) G(a); F'(0.5) = 0 at the bump centre, so move the membrane
    assert!(s.flux.abs() < 1e-12);
    let f = shell(0.6, 0.3);
    let r = ibp_residual(&f, &g, &one_membrane(), &QuadratureConfig::default()).unwrap();
    let expected = 4.0 * PI * 0.25 * bump_slope(0.5, 0.6, 0.3) * bump_value(0.5, 0.0, 1.0);
    assert_relative_eq!(r.surface[0].flux, expected, max_relative = 1e-12);
    assert!(r.rel_residual < 1e-6, "{r:?}");
}

#[test]
fn ibp_with_gaussian_density_and_three_membranes() {
    let wf = three_membranes();
    let f = shell(0.7, 0.6);
    let g = TestFunction::PolyBump {
        offset: 1.0,
        slope: vec![0.2, 0.1, -0.3],
        center: 0.0,
        width: 1.5,
    };
    let mut last = f64::INFINITY;
    for n in [8, 16, 32, 64] {
        let r = ibp_residual(&f, &g, &wf, &QuadratureConfig::default().with_radial_nodes(n)).unwrap();
        assert_eq!(r.surface.len(), 3);
        assert!(r.rel_residual <= last.max(1e-13), "n={n}: {} after {last}", r.rel_residual);
        last = r.rel_residual;
    }
    assert!(last < 1e-6);
}

#[test]
fn trace_constant_fails_for_constants() {
    let qc = QuadratureConfig::default();
    let zero = trace_inequality_check(&TestFunction::Constant { value: 0.0 }, 1.0, &flat(), &qc).unwrap();
    assert!(zero.pass && zero.pass_corrected);
    let one = trace_inequality_check(&TestFunction::Constant { value: 1.0 }, 1.0, &flat(), &qc).unwrap();
    assert_relative_eq!(one.lhs, 4.0 * PI, max_relative = 1e-13);
    assert_relative_eq!(one.rhs, 8f64.sqrt() * 4.0 * PI / 3.0, max_relative = 1e-12);
    assert!(!one.pass);
    assert!(one.pass_corrected);
    assert_relative_eq!(one.constant_corrected, 3.0 / 2f64.sqrt() * one.constant, max_relative = 1e-14);
}

#[test]
fn trace_holds_for_steep_bump() {
    let wf = three_membranes();
    let r = trace_inequality_check(&shell(1.0, 0.05), 1.0, &wf, &QuadratureConfig::default()).unwrap();
    assert!(r.pass_corrected && r.ratio < 1.0);
    assert!(r.lhs > 0.0);
}

#[test]
fn growth_exponents_and_volumes() {
    let qc = QuadratureConfig::default();
    let grid = log_grid(1e3, 10);
    let ms = || MembraneSet::constant(1.0, 1.0).unwrap();

    let lebesgue = growth_criteria(&flat(), &grid, &qc).unwrap();
    for (r, v) in grid.iter().zip(&lebesgue.volumes) {
        assert_relative_eq!(*v, 4.0 * PI * r.powi(3) / 3.0, max_relative = 1e-10);
    }
    assert_relative_eq!(lebesgue.fitted_exponent, 3.0, max_relative = 1e-9);
    assert!(lebesgue.conservative && !lebesgue.recurrent);

    let cauchy = growth_criteria(&field(ms(), BuiltinDensity::Power { b: 2.0 }), &grid, &qc).unwrap();
    for (r, v) in grid.iter().zip(&cauchy.volumes) {
        assert_relative_eq!(*v, 4.0 * PI * (r - r.atan()), max_relative = 1e-10);
    }
    assert!((cauchy.fitted_exponent - 1.0).abs() < 0.02);
    assert!(cauchy.recurrent && cauchy.conservative);

    let power = growth_criteria(&field(ms(), BuiltinDensity::PurePower { b: -2.0 }), &grid, &qc).unwrap();
    for (r, v) in grid.iter().zip(&power.volumes) {
        assert_relative_eq!(*v, 4.0 * PI * r, max_relative = 1e-10);
    }
    assert!(power.recurrent);
    assert!(power.volumes.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn annulus_mass_with_membrane() {
    let ms = MembraneSet::explicit(2.0, vec![], 1.0, vec![], 3.0, 0.0).unwrap();
    let wf = field(ms, BuiltinDensity::Constant { value: 1.0 });
    let m = annulus_mass(&wf, 1.0, 3.0, &QuadratureConfig::default()).unwrap();
    let expected = 4.0 * PI / 3.0 * ((8.0 - 1.0) + 3.0 * (27.0 - 8.0));
    assert_relative_eq!(m, expected, max_relative = 1e-12);
}

#[test]
fn bad_inputs() {
    let qc = QuadratureConfig::default();
    let c = TestFunction::Constant { value: 1.0 };
    assert!(dirichlet_form(&c, &c, &flat(), &qc).is_err());
    assert!(growth_criteria(&flat(), &[2.0, 1.0], &qc).is_err());
    assert!(dirichlet_form(&shell(1.0, 0.5), &c, &flat(), &qc.with_radial_nodes(1)).is_err());
}
