//! Acceptance suite. Each test prints one `criterion N ... PASS|FAIL` line to the
//! terminal (bypassing output capture) and then asserts its verdict.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skewmem::analysis::{growth_criteria, ibp_residual, log_grid, QuadratureConfig, TestFunction};
use skewmem::radial::{skew_coefficients, RadialModel, SkewEntry, SkewTable};
use skewmem::simulate::{
    simulate_full, simulate_line, simulate_radial, tanaka_residual, write_binary, write_csv, write_local_time_csv, SimConfig,
};
use skewmem::verify::{
    crossing_negative_control, crossing_probability_test, occupation_ratio_test, radial_consistency_negative_control,
    radial_consistency_test, reversibility_test, Shell,
};
use skewmem::weights::{BuiltinDensity, DensityModel, Membrane, MembraneSet, WeightField};

fn report(n: u32, name: &str, pass: bool, detail: String) {
    let line = format!(
        "\ncriterion {n:>2} {name:<28} {}  {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {detail}");
}

fn field(ms: MembraneSet, density: BuiltinDensity) -> WeightField {
    WeightField::new(ms, DensityModel::builtin(3, density).unwrap())
}

/// A single membrane at m0 = 1 with weight `inside` below and `outside` above.
fn one_at_m0(inside: f64, outside: f64, density: BuiltinDensity) -> WeightField {
    field(MembraneSet::explicit(1.0, vec![], inside, vec![], outside, 0.0).unwrap(), density)
}

const FLAT: BuiltinDensity = BuiltinDensity::Constant { value: 1.0 };

#[test]
fn criterion_01_skew_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut bit_identical = true;
    for _ in 0..20 {
        let w_in: f64 = rng.random_range(0.01..100.0);
        let w_out: f64 = rng.random_range(0.01..100.0);
        let e = SkewEntry::from_weights(1.0, w_in, w_out);
        let alpha = w_out / (w_in + w_out);
        worst = worst.max((e.alpha - alpha).abs()).max((e.coeff - (2.0 * alpha - 1.0)).abs());
        for c in [0.25, 2.0, 1024.0, 2f64.powi(-30)] {
            bit_identical &= SkewEntry::from_weights(1.0, c * w_in, c * w_out).alpha.to_bits() == e.alpha.to_bits();
        }
        let c: f64 = rng.random_range(0.1..10.0);
        worst = worst.max((SkewEntry::from_weights(1.0, c * w_in, c * w_out).alpha - e.alpha).abs());
    }
    report(
        1,
        "skew coefficients",
        worst <= 1e-15 && bit_identical,
        format!("max error {worst:.1e}, power-of-two rescaling bit-identical: {bit_identical}"),
    );
}

#[test]
fn criterion_02_crossing_probability() {
    let wf = one_at_m0(1.0, 2.0, FLAT);
    let rm = RadialModel::from_weight_field(&wf, (0.0, f64::INFINITY)).unwrap();
    let cfg = SimConfig::new(1, 1.0, 1e-5, 100_000, 2, vec![1.0]);
    let shell = Shell::symmetric(0.05);
    let r = crossing_probability_test(&rm, 1.0, shell, &cfg, 3.0).unwrap();
    let neg = crossing_negative_control(&rm, 1.0, shell, &cfg, 3.0).unwrap();
    report(
        2,
        "crossing probability",
        r.pass && !neg.pass,
        format!(
            "outer fraction {:.5} vs oracle {:.5} (se {:.5}); flipped alpha gives {:.5}, rejected: {}",
            r.estimate,
            r.target,
            r.stderr.unwrap(),
            neg.estimate,
            !neg.pass
        ),
    );
}

#[test]
fn criterion_03_integration_by_parts() {
    let none = field(MembraneSet::constant(1.0, 1.0).unwrap(), FLAT);
    let one = field(
        MembraneSet::explicit(1.0, vec![Membrane { radius: 0.5, weight: 1.0 }], 2.0, vec![], 2.0, 0.0).unwrap(),
        FLAT,
    );
    let three = field(
        MembraneSet::explicit(
            1.0,
            vec![Membrane { radius: 0.4, weight: 1.0 }, Membrane { radius: 0.7, weight: 2.0 }],
            1.5,
            vec![],
            3.0,
            0.0,
        )
        .unwrap(),
        BuiltinDensity::Gaussian { a: 1.0 },
    );
    let f = TestFunction::RadialBump { center: 0.7, width: 0.6 };
    let g = TestFunction::RadialBump { center: 0.0, width: 1.5 };
    let mut pass = true;
    let mut detail = vec![];
    for (name, wf) in [("none", &none), ("one", &one), ("three", &three)] {
        let mut prev = f64::INFINITY;
        let mut monotone = true;
        let mut last = 0.0;
        for n in [8, 16, 32, 64] {
            let r = ibp_residual(&f, &g, wf, &QuadratureConfig::default().with_radial_nodes(n)).unwrap();
            monotone &= r.rel_residual <= prev.max(1e-13);
            prev = r.rel_residual;
            last = r.rel_residual;
        }
        pass &= monotone && last < 1e-6;
        detail.push(format!("{name}: {last:.1e}"));
    }
    report(3, "integration by parts", pass, format!("relative residual at 64 nodes {}", detail.join(", ")));
}

#[test]
fn criterion_04_radial_consistency() {
    let wf = one_at_m0(1.0, 3.0, FLAT);
    let st = skew_coefficients(&wf.membranes);
    assert_eq!(st.get(1.0).unwrap().alpha, 0.75);
    let cfg = SimConfig::new(3, 1.0, 1e-3, 10_000, 4, vec![0.9, 0.0, 0.0]);
    let ok = radial_consistency_test(&wf, &st, &cfg, 0.01).unwrap();
    let bad = radial_consistency_negative_control(&wf, &st, &cfg, 0.01).unwrap();
    let (p, q) = (ok.p_value.unwrap(), bad.p_value.unwrap());
    report(
        4,
        "radial consistency",
        p >= 0.01 && q < 0.001,
        format!("KS p = {p:.3} (D = {:.4}); without Bessel term p = {q:.1e}", ok.estimate),
    );
}

/// Mean over paths of max_t |R_t| for a skew membrane at level 0.5 on the line.
fn tanaka_level(alpha: f64, h: f64, eps: f64, paths: usize) -> f64 {
    let st = if alpha == 0.5 {
        SkewTable::empty()
    } else {
        SkewTable::from_alphas(&[(0.5, alpha)]).unwrap()
    };
    let rm = RadialModel::driftless(st.clone(), (0.0, 1.0)).unwrap();
    let mut cfg = SimConfig::new(1, 1.0, h, paths, 5, vec![0.5]);
    cfg.keep_noise = true;
    cfg.shell_eps = eps;
    cfg.track_levels = vec![0.5];
    let trajs = simulate_line(&rm, &cfg).unwrap();
    let total: f64 = trajs
        .iter()
        .map(|t| {
            tanaka_residual(t, &st, 0.5)
                .unwrap()
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()))
        })
        .sum();
    total / trajs.len() as f64
}

#[test]
fn criterion_05_tanaka_residual() {
    let levels = [(1e-3, 0.05), (1e-4, 0.02), (1e-5, 0.01)];
    let mut pass = true;
    let mut detail = vec![];
    for alpha in [0.5, 2.0 / 3.0] {
        let m: Vec<f64> = levels.iter().map(|&(h, eps)| tanaka_level(alpha, h, eps, 1000)).collect();
        let ratio = 0.5 * (m[0] / m[1] + m[1] / m[2]);
        pass &= m[0] > m[1] && m[1] > m[2] && ratio >= 1.5;
        detail.push(format!(
            "alpha {alpha:.3}: {:.3} > {:.3} > {:.3}, mean ratio {ratio:.2}",
            m[0], m[1], m[2]
        ));
    }
    report(5, "tanaka residual", pass, detail.join("; "));
}

#[test]
fn criterion_06_reversibility() {
    let wf = one_at_m0(1.0, 2.0, FLAT);
    let st = skew_coefficients(&wf.membranes);
    let (x, y) = ([0.75, 0.0, 0.0], [1.0, 0.75, 0.0]);
    let cfg = SimConfig::new(3, 0.5, 5e-3, 1_000_000, 6, x.to_vec());
    let r = reversibility_test(&wf, &st, &cfg, &x, &y, None, 0.1).unwrap();
    report(
        6,
        "reversibility",
        r.pass,
        format!(
            "ratio {:.4} (bootstrap se {:.4}), bandwidth {:.4}",
            r.estimate,
            r.stderr.unwrap(),
            r.config["bandwidth"].as_f64().unwrap()
        ),
    );
}

#[test]
fn criterion_07_local_time_closed_form() {
    let rm = RadialModel::driftless(SkewTable::empty(), (0.0, 1.0)).unwrap();
    let mut cfg = SimConfig::new(1, 1.0, 1e-4, 100_000, 7, vec![0.0]);
    cfg.shell_eps = 0.02;
    cfg.track_levels = vec![0.0];
    cfg.record_every = cfg.n_steps();
    let mut sum = 0.0;
    let mut sq = 0.0;
    let batch = 20_000;
    for start in (0..cfg.n_paths as u64).step_by(batch) {
        let end = (start + batch as u64).min(cfg.n_paths as u64);
        for t in skewmem::simulate::simulate_line_paths(&rm, &cfg, start..end).unwrap() {
            let l = *t.local_time[0].values.last().unwrap();
            sum += l;
            sq += l * l;
        }
    }
    let n = cfg.n_paths as f64;
    let mean = sum / n;
    let se = ((sq / n - mean * mean) / n).sqrt();
    let exact = (2.0 / PI).sqrt();
    let rel = (mean / exact - 1.0).abs();
    report(
        7,
        "local time closed form",
        rel <= 0.05,
        format!("E[l_1^0] = {mean:.4} (se {se:.4}) vs {exact:.4}, relative error {rel:.3}"),
    );
}

#[test]
fn criterion_08_growth_criteria() {
    let qc = QuadratureConfig::default();
    let grid = log_grid(1e3, 10);
    let ms = || MembraneSet::constant(1.0, 1.0).unwrap();
    let cases = [
        ("lebesgue", BuiltinDensity::Constant { value: 1.0 }, 3.0, false),
        ("cauchy", BuiltinDensity::Power { b: 2.0 }, 1.0, true),
        ("power -2", BuiltinDensity::PurePower { b: -2.0 }, 1.0, true),
    ];
    let mut pass = true;
    let mut detail = vec![];
    for (name, d, exponent, recurrent) in cases {
        let g = growth_criteria(&field(ms(), d), &grid, &qc).unwrap();
        let ok = (g.fitted_exponent / exponent - 1.0).abs() <= 0.02 && g.recurrent == recurrent && g.conservative;
        pass &= ok;
        detail.push(format!(
            "{name}: {:.4} {}",
            g.fitted_exponent,
            if g.recurrent { "recurrent" } else { "transient" }
        ));
    }
    report(8, "growth criteria", pass, detail.join(", "));
}

#[test]
fn criterion_09_occupation_ratio() {
    let wf = field(MembraneSet::constant(1.0, 1.0).unwrap(), BuiltinDensity::Power { b: 2.0 });
    let st = skew_coefficients(&wf.membranes);
    let cfg = SimConfig::new(3, 1e3, 2e-2, 1_000, 9, vec![1.5, 0.0, 0.0]);
    let r = occupation_ratio_test(&wf, &st, &cfg, (1.0, 2.0), (2.0, 3.0), 0.25).unwrap();
    report(
        9,
        "occupation ratio",
        r.pass,
        format!(
            "ratio {:.4} vs quadrature {:.4} (se {:.4}), relative error {:.3}",
            r.estimate,
            r.target,
            r.stderr.unwrap(),
            (r.estimate / r.target - 1.0).abs()
        ),
    );
}

#[test]
fn criterion_10_determinism() {
    let wf = field(
        MembraneSet::explicit(1.0, vec![Membrane { radius: 0.5, weight: 1.0 }], 2.0, vec![], 3.0, 0.0).unwrap(),
        BuiltinDensity::Gaussian { a: 0.5 },
    );
    let st = skew_coefficients(&wf.membranes);
    let rm = RadialModel::from_weight_field(&wf, (0.0, f64::INFINITY)).unwrap();
    let artifacts = |workers: usize| {
        let mut full = SimConfig::new(3, 1.0, 1e-3, 257, 10, vec![0.45, 0.1, 0.0]);
        full.workers = Some(workers);
        full.record_every = 5;
        let mut radial = full.clone();
        radial.dim = 1;
        radial.start = vec![0.45];
        let trajs = [simulate_full(&wf, &st, &full).unwrap(), simulate_radial(&rm, &radial).unwrap()];
        let mut bytes = vec![];
        for t in &trajs {
            write_csv(&mut bytes, t, 1).unwrap();
            write_local_time_csv(&mut bytes, t, 1).unwrap();
            write_binary(&mut bytes, t).unwrap();
        }
        bytes
    };
    let reference = artifacts(1);
    let same = [2, 3, 8].iter().all(|&w| artifacts(w) == reference);
    report(
        10,
        "determinism",
        same,
        format!("{} artifact bytes identical for 1, 2, 3 and 8 workers: {same}", reference.len()),
    );
}
