//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use elc::analysis::{
    error_form_residual, fit_exponential_rate, lyapunov_v, max_increase, observer_errors, settle_time, stacked_norm,
    tracking_errors,
};
use elc::graph::WeightedDigraph;
use elc::integrator::{rk4_step, steps_for};
use elc::plant::properties::{regression_identity, skew_symmetry, SampleRanges};
use elc::scenario::{builtin_example, Severity, ViolationKind, DEFAULT_SEED};
use elc::{simulate, LeaderSystem, Scenario, TrajectoryLog};

const TRACKING_TOL: f64 = 1e-2;
const HORIZON: f64 = 60.0;
const STEP: f64 = 1e-3;
const WALL_CLOCK_LIMIT: Duration = Duration::from_secs(60);
const FIT_WINDOW: (f64, f64) = (2.0, 20.0);
const MIN_R_SQUARED: f64 = 0.9;
const ETA_TOL: f64 = 1e-3;
const ETA_DEADLINE: f64 = 30.0;
const LYAPUNOV_SLACK: f64 = 1e-6;
const PROPERTY_SAMPLES: usize = 10_000;
const SKEW_TOL: f64 = 1e-6;
const REGRESSION_TOL: f64 = 1e-10;
const RANDOM_DIGRAPHS: usize = 500;
const MAX_NODES: usize = 6;
const LEADER_HORIZON: f64 = 20.0;
const LEADER_TOL: f64 = 1e-8;
const HALVING_RANGE: (f64, f64) = (12.0, 20.0);
const ERROR_FORM_TOL: f64 = 1e-4;
const OBSERVER_TOL: f64 = 1e-3;

struct Outcome {
    passed: bool,
    detail: String,
}

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

struct BuiltinRun {
    scenario: Scenario,
    log: TrajectoryLog,
    elapsed: Duration,
}

fn builtin_run() -> BuiltinRun {
    let mut scenario = builtin_example(DEFAULT_SEED);
    scenario.integrator.h = STEP;
    scenario.integrator.horizon = HORIZON;
    scenario.integrator.record_every = 1;
    let start = Instant::now();
    let log = simulate(&scenario).expect("builtin run");
    BuiltinRun {
        scenario,
        log,
        elapsed: start.elapsed(),
    }
}

fn consensus(run: &BuiltinRun) -> Outcome {
    let (pos, vel) = tracking_errors(&run.log, &run.scenario.leader);
    let mut latest: f64 = 0.0;
    let mut unsettled = Vec::new();
    for (label, chans) in [("position", &pos), ("velocity", &vel)] {
        for (i, c) in chans.iter().enumerate() {
            match settle_time(&run.log.times, c, TRACKING_TOL) {
                Some(t) if t <= HORIZON => latest = latest.max(t),
                _ => unsettled.push(format!("{label} of follower {}", i + 1)),
            }
        }
    }
    let fast = run.elapsed < WALL_CLOCK_LIMIT;
    outcome(
        unsettled.is_empty() && fast,
        format!(
            "all tracking errors below {TRACKING_TOL:e} from t = {latest:.3} s on{}; simulation took {:.2?}",
            if unsettled.is_empty() {
                String::new()
            } else {
                format!(" except {}", unsettled.join(", "))
            },
            run.elapsed
        ),
    )
}

fn observer_rate(run: &BuiltinRun) -> Outcome {
    let (s_err, eta_err) = observer_errors(&run.log, &run.scenario.leader);
    let s_hat = stacked_norm(&s_err);
    let eta_hat = stacked_norm(&eta_err);
    let fit = fit_exponential_rate(&run.log.times, &s_hat, FIT_WINDOW).expect("fit window has samples");
    let eta_settle = settle_time(&run.log.times, &eta_hat, ETA_TOL);
    let passed = fit.rate > 0.0 && fit.r_squared > MIN_R_SQUARED && eta_settle.is_some_and(|t| t <= ETA_DEADLINE);
    outcome(
        passed,
        format!(
            "|S_hat|_F decays at {:.4} 1/s (R^2 = {:.4}) on [{}, {}] s; |eta_hat| < {ETA_TOL:e} from t = {}",
            fit.rate,
            fit.r_squared,
            FIT_WINDOW.0,
            FIT_WINDOW.1,
            eta_settle.map_or("never".into(), |t| format!("{t:.3} s"))
        ),
    )
}

fn lyapunov(run: &BuiltinRun) -> Outcome {
    let v = lyapunov_v(&run.log, &run.scenario);
    let rise = max_increase(&v);
    outcome(
        rise <= LYAPUNOV_SLACK,
        format!(
            "largest V(t_k+1) - V(t_k) over {} samples is {rise:.3e} (V from {:.4e} to {:.4e})",
            v.len(),
            v[0],
            v[v.len() - 1]
        ),
    )
}

fn plant_properties() -> Outcome {
    let sc = builtin_example(DEFAULT_SEED);
    let ranges = SampleRanges::default();
    let mut worst_skew: f64 = 0.0;
    let mut worst_reg: f64 = 0.0;
    for (i, plant) in sc.plants.iter().enumerate() {
        let dynamics = plant.dynamics().as_ref();
        let seed = 1000 + i as u64;
        let skew = skew_symmetry(dynamics, plant.true_params(), PROPERTY_SAMPLES, ranges, seed);
        let reg =
            regression_identity(dynamics, plant.true_params(), PROPERTY_SAMPLES, ranges, seed).expect("linear plant");
        worst_skew = worst_skew.max(skew.worst);
        worst_reg = worst_reg.max(reg.worst);
    }
    outcome(
        worst_skew < SKEW_TOL && worst_reg < REGRESSION_TOL,
        format!(
            "{PROPERTY_SAMPLES} states per arm: worst |x^T(M' - 2C)x| = {worst_skew:.3e}, worst |Y theta - (Mx + Cy + G)| = {worst_reg:.3e}"
        ),
    )
}

/// Every simple path out of `from`, by depth-first enumeration.
fn reached_by_paths(adj: &[Vec<bool>], from: usize) -> Vec<bool> {
    fn walk(adj: &[Vec<bool>], node: usize, on_path: &mut Vec<bool>, reached: &mut Vec<bool>) {
        reached[node] = true;
        for next in 0..adj.len() {
            if adj[node][next] && !on_path[next] {
                on_path[next] = true;
                walk(adj, next, on_path, reached);
                on_path[next] = false;
            }
        }
    }
    let n = adj.len();
    let mut on_path = vec![false; n];
    let mut reached = vec![false; n];
    on_path[from] = true;
    walk(adj, from, &mut on_path, &mut reached);
    reached
}

fn graph_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    let mut pairs = 0;
    for _ in 0..RANDOM_DIGRAPHS {
        let n = rng.random_range(1..=MAX_NODES);
        let density = rng.random_range(0.0..0.6);
        let mut adj = vec![vec![false; n]; n];
        let mut edges = Vec::new();
        for (from, row) in adj.iter_mut().enumerate() {
            for (to, cell) in row.iter_mut().enumerate() {
                if from != to && rng.random_bool(density) {
                    *cell = true;
                    edges.push((from, to, rng.random_range(0.1..2.0)));
                }
            }
        }
        let g = WeightedDigraph::from_edges(n, &edges).expect("valid edges");
        for from in 0..n {
            let oracle = reached_by_paths(&adj, from);
            for (to, &expected) in oracle.iter().enumerate() {
                pairs += 1;
                if g.is_reachable(from, to).expect("in range") != expected {
                    mismatches += 1;
                }
            }
        }
    }
    let network = builtin_example(DEFAULT_SEED).network;
    let wide = network.check_jointly_connected(HORIZON, 2.0);
    let narrow = network.check_jointly_connected(HORIZON, 0.5);
    outcome(
        mismatches == 0 && wide.passed && !narrow.passed,
        format!(
            "{mismatches} reachability mismatches over {pairs} pairs in {RANDOM_DIGRAPHS} digraphs; eps = 2: {}; eps = 0.5: {}",
            if wide.passed { "connected" } else { "NOT connected" },
            match narrow.first_failure {
                Some(w) => format!("fails on [{}, {})", w.start, w.end),
                None => "unexpectedly connected".into(),
            }
        ),
    )
}

fn leader_error(h: f64) -> f64 {
    let leader = LeaderSystem::ramp_and_oscillator();
    let steps = steps_for(LEADER_HORIZON, h);
    let dt = LEADER_HORIZON / steps as f64;
    let mut x = leader.initial_state().clone();
    for k in 0..steps {
        x = rk4_step(|_, v: &DVector<f64>| leader.derivative(v), k as f64 * dt, &x, dt).expect("finite");
    }
    let t = LEADER_HORIZON;
    let exact = DVector::from_vec(vec![1.0 + t, 1.0, t.cos() + t.sin(), t.cos() - t.sin()]);
    (x - exact).amax()
}

fn integrator_order() -> Outcome {
    let at_step = leader_error(STEP);
    // Halving is measured where truncation error dominates; near h = 1e-3 the
    // error is already at the rounding floor.
    let ratio = leader_error(0.1) / leader_error(0.05);
    let floor_ratio = at_step / leader_error(STEP / 2.0);
    outcome(
        at_step < LEADER_TOL && (HALVING_RANGE.0..=HALVING_RANGE.1).contains(&ratio),
        format!(
            "error at h = {STEP:e} over {LEADER_HORIZON} s is {at_step:.3e}; halving 0.1 -> 0.05 gains {ratio:.3}x (order {:.3}); at h = {STEP:e} the gain is {floor_ratio:.3}x",
            ratio.log2()
        ),
    )
}

fn error_form(run: &BuiltinRun) -> Outcome {
    let form = error_form_residual(&run.log, &run.scenario).expect("valid scenario");
    let (t, worst) = form.worst();
    outcome(
        worst < ERROR_FORM_TOL,
        format!(
            "worst |M s' + C s + K s - Y theta_tilde| = {worst:.3e} at t = {t:.3} s over {} samples; below {ERROR_FORM_TOL:e} from t = {}",
            form.samples_checked(),
            form.holds_after(ERROR_FORM_TOL)
                .map_or("never".into(), |t| format!("{t:.3} s"))
        ),
    )
}

fn negative_controls() -> Outcome {
    let mut cut = builtin_example(DEFAULT_SEED);
    cut.disconnect();
    cut.integrator.horizon = HORIZON;
    let log = simulate(&cut).expect("disconnected run stays finite");
    let (s_err, eta_err) = observer_errors(&log, &cut.leader);
    let s_settle = settle_time(&log.times, &stacked_norm(&s_err), OBSERVER_TOL);
    let eta_settle = settle_time(&log.times, &stacked_norm(&eta_err), OBSERVER_TOL);

    let mut unstable = builtin_example(DEFAULT_SEED);
    let mut s = unstable.leader.system_matrix().clone();
    s[(1, 1)] = 0.5;
    unstable.leader = LeaderSystem::new(
        s,
        unstable.leader.output_matrix().clone(),
        DVector::from_element(4, 1.0),
    )
    .expect("dimensions");
    let flagged = unstable
        .validate()
        .into_iter()
        .find(|v| v.kind == ViolationKind::UnstableLeader && v.severity == Severity::Error);
    outcome(
        s_settle.is_none() && eta_settle.is_none() && flagged.is_some(),
        format!(
            "empty network: |S_hat| settles {}, |eta_hat| settles {}; leader eigenvalue 0.5: {}",
            s_settle.map_or("never".into(), |t| format!("at {t} s")),
            eta_settle.map_or("never".into(), |t| format!("at {t} s")),
            flagged.map_or("not flagged".into(), |v| format!("flagged ({})", v.message))
        ),
    )
}

fn cli_run(out: &Path) -> std::process::ExitStatus {
    Command::new(env!("CARGO_BIN_EXE_elc"))
        .args(["run", "--builtin-example", "--seed", "42", "--out"])
        .arg(out)
        .env("ELC_LOG_LEVEL", "error")
        .stdout(std::process::Stdio::null())
        .status()
        .expect("spawn elc")
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let (sa, sb) = (cli_run(&a), cli_run(&b));
    let read = |p: &Path| std::fs::read(p.join("trajectory.csv")).unwrap_or_default();
    let (ca, cb) = (read(&a), read(&b));
    outcome(
        !ca.is_empty() && ca == cb,
        format!(
            "two runs exited {:?}/{:?}, trajectory.csv {} bytes vs {} bytes, {}",
            sa.code(),
            sb.code(),
            ca.len(),
            cb.len(),
            if ca == cb { "identical" } else { "DIFFERENT" }
        ),
    )
}

fn main() {
    let run = builtin_run();
    let criteria: Vec<(&str, Check)> = vec![
        ("closed-loop consensus", Box::new(|| consensus(&run))),
        ("observer exponential convergence", Box::new(|| observer_rate(&run))),
        ("Lyapunov monotonicity", Box::new(|| lyapunov(&run))),
        ("plant properties", Box::new(plant_properties)),
        ("graph oracles", Box::new(graph_oracles)),
        ("integrator order", Box::new(integrator_order)),
        ("error-form identity", Box::new(|| error_form(&run))),
        ("negative controls", Box::new(negative_controls)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.passed {
            failed += 1;
        }
        println!(
            "criterion {} [{name}]: {} - {}",
            k + 1,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
