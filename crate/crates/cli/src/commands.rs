use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use skewmem::analysis::{growth_criteria, ibp_residual, log_grid, trace_inequality_check, TestFunction};
use skewmem::radial::{skew_coefficients, RadialModel};
use skewmem::simulate::{simulate_full, simulate_radial, write_binary, write_csv, write_local_time_csv, SimConfig, Trajectory};
use skewmem::verify::{
    crossing_negative_control, crossing_probability_test, occupation_ratio_test, radial_consistency_negative_control,
    radial_consistency_test, render_table, reversibility_test, Shell, TestReport,
};
use skewmem::weights::{a2_estimate, check_h1, BallSampler, WeightField};

use crate::config::{Config, Geometry};
use crate::manifest::{Clock, RunManifest};
use crate::{CliError, Command, Common, Format, EXIT_OK, EXIT_TEST_FAILURE, EXIT_VALIDATION};

/// Result of a successful run.
#[derive(Debug)]
pub struct Outcome {
    pub exit_code: i32,
    /// Text for stdout.
    pub summary: String,
    pub manifest: RunManifest,
}

/// Artifacts written so far, relative to the output directory.
struct Artifacts<'a> {
    dir: &'a Path,
    names: Vec<String>,
}

impl Artifacts<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        self.names.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn write_str(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        w.write_all(text.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("reports serialize");
        self.write_str(name, &(text + "\n"))
    }
}

pub fn run(command: &Command) -> Result<Outcome, CliError> {
    let (name, common) = match command {
        Command::Simulate(c) => ("simulate", c),
        Command::Verify { common, .. } => ("verify", common),
        Command::Analyze(c) => ("analyze", c),
        Command::Coeffs(c) => ("coeffs", c),
        Command::Validate(c) => ("validate", c),
    };
    let clock = Clock::start();
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", common.config.display())))?;
    let mut cfg = Config::parse(&text).map_err(|e| match e {
        CliError::Parse(m) => CliError::Parse(format!("{}: {m}", common.config.display())),
        other => other,
    })?;
    let overrides = common.overrides();
    cfg.apply(&overrides);
    cfg.canonical()?;
    std::fs::create_dir_all(&common.out_dir)?;
    let mut art = Artifacts {
        dir: &common.out_dir,
        names: vec![],
    };
    let result = match command {
        Command::Simulate(c) => simulate(&cfg, c, &mut art),
        Command::Verify { test, membrane, common } => verify(&cfg, common, test, *membrane, &mut art),
        Command::Analyze(_) => analyze(&cfg, &mut art),
        Command::Coeffs(_) => coeffs(&cfg, &mut art),
        Command::Validate(_) => validate(&cfg, &mut art),
    };
    let (exit_code, summary, err) = match result {
        Ok((code, summary)) => (code, summary, None),
        Err(e) => (e.exit_code(), String::new(), Some(e)),
    };
    let manifest = RunManifest::new(name, &cfg, &overrides, art.names, exit_code, &clock)?;
    manifest.write(&common.out_dir)?;
    match err {
        Some(e) => Err(e),
        None => Ok(Outcome {
            exit_code,
            summary,
            manifest,
        }),
    }
}

type Step = Result<(i32, String), CliError>;

fn sim_config(cfg: &Config, dim: usize, start: Vec<f64>) -> SimConfig {
    let s = &cfg.simulation;
    let mut c = SimConfig::new(dim, s.horizon, s.step, s.paths, s.seed, start);
    c.shell_eps = s.shell_eps;
    c.workers = s.workers;
    c
}

fn simulate(cfg: &Config, common: &Common, art: &mut Artifacts) -> Step {
    let wf = cfg.weight_field()?;
    let st = skew_coefficients(&wf.membranes);
    let s = &cfg.simulation;
    let trajs: Vec<Trajectory> = match s.geometry {
        Geometry::Full => {
            let start = if s.start.is_empty() { cfg.default_start() } else { s.start.clone() };
            let mut c = sim_config(cfg, cfg.dim, start);
            c.record_every = s.record_every;
            c.track_levels = s.track_levels.clone();
            c.occupation_bands = s.occupation_bands.clone();
            simulate_full(&wf, &st, &c)?
        }
        Geometry::Radial => {
            let start = if s.start.is_empty() {
                vec![cfg.default_start()[0]]
            } else {
                s.start.clone()
            };
            let mut c = sim_config(cfg, 1, start);
            c.record_every = s.record_every;
            c.track_levels = s.track_levels.clone();
            c.occupation_bands = s.occupation_bands.clone();
            let rm = RadialModel::from_weight_field(&wf, (0.0, f64::INFINITY))?;
            simulate_radial(&rm, &c)?
        }
    };
    match common.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut w = art.create("trajectories.csv")?;
            write_csv(&mut w, &trajs, 1)?;
            w.flush()?;
        }
        Format::Bin => {
            let mut w = art.create("trajectories.bin")?;
            write_binary(&mut w, &trajs)?;
            w.flush()?;
        }
        Format::Json => {
            let mut w = art.create("trajectories.jsonl")?;
            for t in &trajs {
                serde_json::to_writer(&mut w, t).expect("trajectories serialize");
                writeln!(w)?;
            }
            w.flush()?;
        }
    }
    if trajs.first().is_some_and(|t| !t.local_time.is_empty()) {
        let mut w = art.create("local_times.csv")?;
        write_local_time_csv(&mut w, &trajs, 1)?;
        w.flush()?;
    }
    let summary = format!(
        "simulated {} paths of {} steps; wrote {}\n",
        trajs.len(),
        (s.horizon / s.step).round(),
        art.names.join(", ")
    );
    Ok((EXIT_OK, summary))
}

const TEST_NAMES: [&str; 7] = [
    "crossing",
    "crossing_negative",
    "radial",
    "radial_negative",
    "reversibility",
    "occupation",
    "all",
];

fn verify(cfg: &Config, common: &Common, test: &str, membrane: Option<f64>, art: &mut Artifacts) -> Step {
    if !TEST_NAMES.contains(&test) {
        return Err(CliError::Usage(format!(
            "unknown test {test:?}; expected one of {}",
            TEST_NAMES.join(", ")
        )));
    }
    let format = common.format.unwrap_or(Format::Json);
    if format == Format::Bin {
        return Err(CliError::Usage("verify writes csv or json reports".into()));
    }
    let wf = cfg.weight_field()?;
    let st = skew_coefficients(&wf.membranes);
    let seed = cfg.simulation.seed;
    let t = &cfg.tests;
    let mut reports: Vec<TestReport> = vec![];
    let mut notes = String::new();
    let want = |name: &str| test == name || (test == "all" && !name.ends_with("_negative"));

    if want("crossing") || test == "crossing_negative" {
        let rm = RadialModel::from_weight_field(&wf, (0.0, f64::INFINITY))?;
        let a = match membrane.or(t.crossing.membrane) {
            Some(a) => a,
            None => {
                rm.skew
                    .active()
                    .next()
                    .ok_or_else(|| CliError::Validation("no active membrane to test".into()))?
                    .radius
            }
        };
        let p = &t.crossing;
        let c = SimConfig::new(1, p.horizon, p.step, p.paths, seed, vec![a]);
        let shell = Shell::symmetric(p.eps);
        reports.push(if test == "crossing_negative" {
            crossing_negative_control(&rm, a, shell, &c, p.k)?
        } else {
            crossing_probability_test(&rm, a, shell, &c, p.k)?
        });
    }
    if want("radial") || test == "radial_negative" {
        let p = &t.radial;
        let start = if p.start.is_empty() { cfg.default_start() } else { p.start.clone() };
        let c = SimConfig::new(cfg.dim, p.horizon, p.step, p.paths, seed, start);
        reports.push(if test == "radial_negative" {
            radial_consistency_negative_control(&wf, &st, &c, p.p_threshold)?
        } else {
            radial_consistency_test(&wf, &st, &c, p.p_threshold)?
        });
    }
    if want("reversibility") {
        let p = &t.reversibility;
        let x = if p.x.is_empty() { cfg.default_start() } else { p.x.clone() };
        let y = if p.y.is_empty() {
            let mut y = vec![0.0; cfg.dim];
            y[1] = 1.2 * x.iter().map(|v| v * v).sum::<f64>().sqrt();
            y
        } else {
            p.y.clone()
        };
        let c = SimConfig::new(cfg.dim, p.horizon, p.step, p.paths, seed, x.clone());
        reports.push(reversibility_test(&wf, &st, &c, &x, &y, p.bandwidth, p.tol)?);
    }
    if want("occupation") {
        let p = &t.occupation;
        let start = if p.start.is_empty() { cfg.default_start() } else { p.start.clone() };
        let c = SimConfig::new(cfg.dim, p.horizon, p.step, p.paths, seed, start);
        match occupation_ratio_test(&wf, &st, &c, p.inner_band, p.outer_band, p.tol) {
            Ok(r) => reports.push(r),
            Err(skewmem::Error::Hypothesis(m)) if test == "all" => {
                notes.push_str(&format!("occupation skipped: {m}\n"));
            }
            Err(e) => return Err(e.into()),
        }
    }

    match format {
        Format::Json => {
            let mut w = art.create("reports.jsonl")?;
            skewmem::verify::write_json_lines(&mut w, &reports)?;
            w.flush()?;
        }
        _ => {
            let mut s = String::from("name,estimate,target,stderr,p_value,n,pass\n");
            for r in &reports {
                let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
                s.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.name,
                    r.estimate,
                    r.target,
                    opt(r.stderr),
                    opt(r.p_value),
                    r.n,
                    r.pass
                ));
            }
            art.write_str("reports.csv", &s)?;
        }
    }
    let all_pass = reports.iter().all(|r| r.pass);
    let code = if all_pass { EXIT_OK } else { EXIT_TEST_FAILURE };
    Ok((code, render_table(&reports) + &notes))
}

/// Default test functions: a shell bump around m0 against a ball bump covering it.
fn default_pair(m0: f64) -> (TestFunction, TestFunction) {
    (
        TestFunction::RadialBump {
            center: m0,
            width: 0.5 * m0,
        },
        TestFunction::RadialBump {
            center: 0.0,
            width: 2.0 * m0,
        },
    )
}

const IBP_TOLERANCE: f64 = 1e-6;

fn analyze(cfg: &Config, art: &mut Artifacts) -> Step {
    let wf = cfg.weight_field()?;
    let a = &cfg.analysis;
    let qc = &a.quadrature;
    let m0 = wf.membranes.m0;
    let pairs = if a.pairs.is_empty() { vec![default_pair(m0)] } else { a.pairs.clone() };
    let trace = if a.trace.is_empty() {
        vec![(default_pair(m0).0, m0)]
    } else {
        a.trace.clone()
    };
    for f in pairs.iter().flat_map(|(f, g)| [f, g]).chain(trace.iter().map(|t| &t.0)) {
        f.validate(cfg.dim)?;
    }
    let ibp = pairs
        .iter()
        .map(|(f, g)| ibp_residual(f, g, &wf, qc))
        .collect::<Result<Vec<_>, _>>()?;
    let traces = trace
        .iter()
        .map(|(f, l)| trace_inequality_check(f, *l, &wf, qc))
        .collect::<Result<Vec<_>, _>>()?;
    let growth = growth_criteria(&wf, &log_grid(a.growth_r_max, a.growth_per_decade), qc)?;
    art.write_json("analysis.json", &json!({ "ibp": ibp, "trace": traces, "growth": growth }))?;

    let mut s = String::new();
    let mut ok = true;
    for r in &ibp {
        let pass = r.rel_residual < IBP_TOLERANCE;
        ok &= pass;
        s.push_str(&format!(
            "ibp      lhs {:+.6e}  rhs {:+.6e}  rel {:.2e}  {}\n",
            r.lhs,
            r.rhs,
            r.rel_residual,
            verdict(pass)
        ));
    }
    for r in &traces {
        ok &= r.pass_corrected;
        s.push_str(&format!(
            "trace    l {}  lhs {:.6e}  bound {:.6e}  {}\n",
            r.radius,
            r.lhs,
            r.rhs_corrected,
            verdict(r.pass_corrected)
        ));
    }
    s.push_str(&format!(
        "growth   exponent {:.4}  conservative {}  recurrent {}\n",
        growth.fitted_exponent, growth.conservative, growth.recurrent
    ));
    Ok((if ok { EXIT_OK } else { EXIT_TEST_FAILURE }, s))
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn coeffs(cfg: &Config, art: &mut Artifacts) -> Step {
    let st = skew_coefficients(&cfg.membranes()?);
    let csv = st.to_csv();
    art.write_str("coeffs.csv", &csv)?;
    Ok((EXIT_OK, csv))
}

fn validate(cfg: &Config, art: &mut Artifacts) -> Step {
    let wf: WeightField = cfg.weight_field()?;
    let a = &cfg.analysis;
    let h1 = check_h1(&wf.membranes, &a.probe_radii);
    let a2 = if a.a2_balls.is_empty() {
        None
    } else {
        Some(a2_estimate(&wf, &BallSampler::new(a.a2_balls.clone()))?)
    };
    art.write_json("validation.json", &json!({ "h1": h1, "a2": a2 }))?;
    let mut s = format!(
        "h1       sum_inner {:.6e}  sum_outer {:.6e}  tail {:.2e}  {}\n",
        h1.sum_inner,
        h1.sum_outer,
        h1.tail_bound,
        verdict(h1.pass)
    );
    for (r, d) in &h1.delta {
        s.push_str(&format!("  min weight on B_{r}: {d}\n"));
    }
    if let Some(e) = &a2 {
        s.push_str(&format!("a2       sampled sup ratio {:.6}\n", e.sup_ratio));
    }
    Ok((if h1.pass { EXIT_OK } else { EXIT_VALIDATION }, s))
}
