//! The four verbs. Each returns a process exit code.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::Context;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use elc::analysis::{assess, observer_errors, stacked_norm, tracking_errors};
use elc::observer::{dual_form_gap, ObserverState};
use elc::plant::properties::{certify_bounds, regression_identity, skew_symmetry, SampleRanges};
use elc::scenario::{builtin_example, Severity, DEFAULT_SEED};
use elc::{simulate, Error, Scenario};

use crate::config::{apply_overrides, parse_value, ConfigDocument, ConfigError};
use crate::output::{fmt_f64, svg_log_plot, write_trajectory_csv};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

/// Where a scenario comes from and what to change on top of it.
#[derive(Debug, Clone, Default)]
pub struct Source {
    pub config: Option<PathBuf>,
    pub builtin: bool,
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
    pub horizon: Option<f64>,
}

impl Source {
    pub fn builtin() -> Self {
        Self {
            builtin: true,
            ..Self::default()
        }
    }

    /// Document tree after overrides, before schema checks.
    fn value(&self) -> Result<toml::Value, ConfigError> {
        let mut overrides = Vec::new();
        let mut value = match (&self.config, self.builtin) {
            (Some(_), true) => {
                return Err(ConfigError {
                    message: "give either a config file or --builtin-example, not both".into(),
                    location: None,
                })
            }
            (None, false) => {
                return Err(ConfigError {
                    message: "no scenario: pass a config file or --builtin-example".into(),
                    location: None,
                })
            }
            (None, true) => {
                ConfigDocument::from_scenario(&builtin_example(self.seed.unwrap_or(DEFAULT_SEED))).to_value()
            }
            (Some(path), false) => {
                let text = fs::read_to_string(path).map_err(|e| ConfigError {
                    message: format!("cannot read {}: {e}", path.display()),
                    location: None,
                })?;
                if let Some(seed) = self.seed {
                    overrides.push(format!("initial.seed={seed}"));
                }
                // Reject schema errors with their source location before overrides blur it.
                ConfigDocument::parse(&text)?;
                parse_value(&text)?
            }
        };
        if let Some(h) = self.horizon {
            overrides.push(format!("integrator.horizon={h:?}"));
        }
        overrides.extend(self.overrides.iter().cloned());
        apply_overrides(&mut value, &overrides)?;
        Ok(value)
    }

    pub fn document(&self) -> Result<ConfigDocument, ConfigError> {
        ConfigDocument::from_value(self.value()?)
    }

    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        self.document()?.to_scenario()
    }

    fn with_extra(&self, extra: &[String]) -> Self {
        let mut s = self.clone();
        s.overrides.extend(extra.iter().cloned());
        s
    }
}

fn config_error(e: impl std::fmt::Display) -> u8 {
    eprintln!("config error: {e}");
    EXIT_CONFIG
}

/// Loads and validates; warnings are logged, errors end the command.
fn runnable(source: &Source) -> Result<Scenario, u8> {
    let scenario = source.scenario().map_err(config_error)?;
    let mut fatal = false;
    for v in scenario.validate() {
        match v.severity {
            Severity::Error => {
                eprintln!("invalid scenario: {}", v.message);
                fatal = true;
            }
            Severity::Warning => log::warn!("{}", v.message),
        }
    }
    if fatal {
        Err(EXIT_CONFIG)
    } else {
        Ok(scenario)
    }
}

fn simulation_error(e: Error) -> u8 {
    match e {
        Error::Diverged { t, component } => {
            eprintln!("diverged at t = {t}: non-finite {component}");
            EXIT_DIVERGED
        }
        other => config_error(other),
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub source: Source,
    pub out: PathBuf,
    pub plot: bool,
}

pub fn run(opts: &RunOptions) -> u8 {
    let scenario = match runnable(&opts.source) {
        Ok(s) => s,
        Err(code) => return code,
    };
    log::info!(
        "running {} followers for {} s at h = {}",
        scenario.followers(),
        scenario.integrator.horizon,
        scenario.integrator.h
    );
    let log = match simulate(&scenario) {
        Ok(log) => log,
        Err(e) => return simulation_error(e),
    };
    let report = assess(&log, &scenario);
    let written = (|| -> anyhow::Result<()> {
        fs::create_dir_all(&opts.out).with_context(|| format!("creating {}", opts.out.display()))?;
        let csv = opts.out.join("trajectory.csv");
        let file = fs::File::create(&csv).with_context(|| format!("creating {}", csv.display()))?;
        write_trajectory_csv(BufWriter::new(file), &log, &scenario)?;
        fs::write(opts.out.join("report.txt"), report.to_table())?;
        fs::write(opts.out.join("report.kv"), report.to_kv())?;
        if opts.plot {
            write_plots(&opts.out, &log, &scenario)?;
        }
        Ok(())
    })();
    if let Err(e) = written {
        eprintln!("cannot write outputs: {e:#}");
        return EXIT_CONFIG;
    }
    print!("{}", report.to_table());
    if report.passed() {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

fn write_plots(dir: &Path, log: &elc::TrajectoryLog, scenario: &Scenario) -> anyhow::Result<()> {
    let (pos, vel) = tracking_errors(log, &scenario.leader);
    let (s_err, eta_err) = observer_errors(log, &scenario.leader);
    let named = |label: &str, chans: Vec<Vec<f64>>| -> Vec<(String, Vec<f64>)> {
        chans
            .into_iter()
            .enumerate()
            .map(|(i, c)| (format!("{label} {}", i + 1), c))
            .collect()
    };
    let mut tracking = named("|q-q0|", pos);
    tracking.extend(named("|qd-qd0|", vel));
    fs::write(
        dir.join("tracking.svg"),
        svg_log_plot("tracking errors", &log.times, &tracking),
    )?;
    let observer = vec![
        ("|S_hat|_F".to_string(), stacked_norm(&s_err)),
        ("|eta_hat|".to_string(), stacked_norm(&eta_err)),
    ];
    fs::write(
        dir.join("observer.svg"),
        svg_log_plot("observer errors", &log.times, &observer),
    )?;
    Ok(())
}

pub fn check_graph(source: &Source, eps: Option<f64>) -> u8 {
    let scenario = match source.scenario() {
        Ok(s) => s,
        Err(e) => return config_error(e),
    };
    let eps = eps.unwrap_or(scenario.epsilon);
    if !(eps > 0.0) {
        return config_error(format!("window length must be positive, got {eps}"));
    }
    let horizon = if scenario.integrator.horizon > 0.0 {
        scenario.integrator.horizon
    } else {
        scenario.network.signal().period()
    };
    let report = scenario.network.check_jointly_connected(horizon, eps);
    println!("{report}");
    if report.passed {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            samples: 10_000,
            seed: DEFAULT_SEED,
        }
    }
}

/// Largest dual-form gap tolerated by `verify`.
pub const DUAL_FORM_TOL: f64 = 1e-10;

pub fn verify(source: &Source, opts: VerifyOptions) -> u8 {
    let scenario = match source.scenario() {
        Ok(s) => s,
        Err(e) => return config_error(e),
    };
    let ranges = SampleRanges::default();
    let mut all = true;
    for (i, plant) in scenario.plants.iter().enumerate() {
        let dynamics = plant.dynamics().as_ref();
        let theta = plant.true_params();
        let seed = opts.seed.wrapping_add(i as u64);
        let skew = skew_symmetry(dynamics, theta, opts.samples, ranges, seed);
        println!("follower {}: {skew}", i + 1);
        all &= skew.passed;
        match regression_identity(dynamics, theta, opts.samples, ranges, seed) {
            Ok(check) => {
                println!("follower {}: {check}", i + 1);
                all &= check.passed;
            }
            Err(e) => {
                println!("follower {}: regression identity unavailable: {e}", i + 1);
                all = false;
            }
        }
        let bounds = certify_bounds(dynamics, theta, 256, seed);
        let ok = bounds.positive_definite();
        println!(
            "follower {}: mass bounds [{:.4}, {:.4}], k_c {:.4}, k_g {:.4}: {}",
            i + 1,
            bounds.k_m_lower,
            bounds.k_m_upper,
            bounds.k_c,
            bounds.k_g,
            if ok { "pass" } else { "FAIL" }
        );
        all &= ok;
    }

    let s = scenario.leader.system_matrix();
    let m = scenario.leader.state_dim();
    let followers = scenario.followers();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst: f64 = 0.0;
    for (g, graph) in scenario.network.graphs().iter().enumerate() {
        for trial in 0..25 {
            let state = ObserverState::random(followers, m, 2.0, opts.seed ^ ((g as u64) << 32 | trial));
            let v = DVector::from_fn(m, |_, _| rng.random_range(-2.0..=2.0));
            match dual_form_gap(&state, s, &v, graph, scenario.observer_gains) {
                Ok(gap) => worst = worst.max(gap),
                Err(e) => {
                    println!("graph {}: dual form unavailable: {e}", g + 1);
                    all = false;
                }
            }
        }
    }
    let ok = worst < DUAL_FORM_TOL;
    println!(
        "observer dual form: worst gap {worst:.3e} (tol {DUAL_FORM_TOL:.0e}): {}",
        if ok { "pass" } else { "FAIL" }
    );
    all &= ok;
    println!("overall: {}", if all { "PASS" } else { "FAIL" });
    if all {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

/// One `key=v1,v2,...` axis of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<String>,
}

impl std::str::FromStr for GridAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (key, values) = s
            .split_once('=')
            .ok_or_else(|| format!("grid axis `{s}` is not key=v1,v2"))?;
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
        if key.trim().is_empty() || values.iter().any(String::is_empty) {
            return Err(format!("grid axis `{s}` has an empty key or value"));
        }
        Ok(Self {
            key: key.trim().to_string(),
            values,
        })
    }
}

/// Cartesian product in row-major order (first axis slowest). No axes, no cells.
pub fn grid_cells(axes: &[GridAxis]) -> Vec<Vec<String>> {
    if axes.is_empty() {
        return Vec::new();
    }
    let mut cells = vec![Vec::new()];
    for axis in axes {
        cells = cells
            .into_iter()
            .flat_map(|prefix: Vec<String>| {
                axis.values.iter().map(move |v| {
                    let mut c = prefix.clone();
                    c.push(v.clone());
                    c
                })
            })
            .collect();
    }
    cells
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub values: Vec<String>,
    pub status: String,
    pub passed: bool,
    /// Settle times of the tracking and observer channels, in report order.
    pub settle: Vec<Option<f64>>,
}

pub const SWEEP_CHANNELS: [&str; 4] = ["tracking_position", "tracking_velocity", "observer_S", "observer_eta"];

fn sweep_cell(source: &Source, axes: &[GridAxis], values: &[String]) -> SweepRow {
    let assignments: Vec<String> = axes.iter().zip(values).map(|(a, v)| format!("{}={v}", a.key)).collect();
    let mut row = SweepRow {
        values: values.to_vec(),
        status: String::new(),
        passed: false,
        settle: vec![None; SWEEP_CHANNELS.len()],
    };
    let scenario = match source.with_extra(&assignments).scenario() {
        Ok(s) => s,
        Err(e) => {
            row.status = format!("config error: {e}");
            return row;
        }
    };
    if let Some(v) = scenario.validate().into_iter().find(|v| v.severity == Severity::Error) {
        row.status = format!("invalid: {}", v.message);
        return row;
    }
    match simulate(&scenario) {
        Ok(log) => {
            let report = assess(&log, &scenario);
            row.passed = report.passed();
            row.status = "ok".into();
            for (slot, name) in row.settle.iter_mut().zip(SWEEP_CHANNELS) {
                *slot = report.channel(name).and_then(|c| c.settle_time);
            }
        }
        Err(Error::Diverged { t, component }) => row.status = format!("diverged at t = {t} ({component})"),
        Err(e) => row.status = format!("error: {e}"),
    }
    row
}

pub fn sweep_csv(axes: &[GridAxis], rows: &[SweepRow]) -> String {
    let quote = |s: &str| {
        if s.contains([',', '"', '\n']) {
            format!("\"{}\"", s.replace('"', "\"\""))
        } else {
            s.to_string()
        }
    };
    let mut header = vec!["cell".to_string()];
    header.extend(axes.iter().map(|a| quote(&a.key)));
    header.extend(["status".to_string(), "passed".to_string()]);
    header.extend(SWEEP_CHANNELS.iter().map(|c| format!("settle_{c}")));
    let mut out = header.join(",");
    out.push('\n');
    for (k, row) in rows.iter().enumerate() {
        let mut fields = vec![k.to_string()];
        fields.extend(row.values.iter().map(|v| quote(v)));
        fields.push(quote(&row.status));
        fields.push(row.passed.to_string());
        fields.extend(row.settle.iter().map(|s| s.map_or(String::new(), fmt_f64)));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub source: Source,
    pub axes: Vec<GridAxis>,
    pub jobs: Option<usize>,
    pub out: PathBuf,
}

pub fn sweep(opts: &SweepOptions) -> u8 {
    // Fail fast on a broken base document.
    if let Err(e) = opts.source.document() {
        return config_error(e);
    }
    let cells = grid_cells(&opts.axes);
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => return config_error(e),
    };
    let rows: Vec<SweepRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|c| sweep_cell(&opts.source, &opts.axes, c))
            .collect()
    });
    let csv = sweep_csv(&opts.axes, &rows);
    let written = fs::create_dir_all(&opts.out).and_then(|_| fs::write(opts.out.join("sweep.csv"), &csv));
    if let Err(e) = written {
        eprintln!("cannot write sweep.csv: {e}");
        return EXIT_CONFIG;
    }
    print!("{csv}");
    if rows.iter().all(|r| r.passed) {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}
