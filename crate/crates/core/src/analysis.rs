//! Post-run diagnostics over a [`TrajectoryLog`].
//!
//! Everything here may use simulation-side knowledge (the leader state, the
//! true plant parameters) that the controller never sees.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::integrator::{ClosedLoop, FullState, TrajectoryLog};
use crate::leader::LeaderSystem;
use crate::scenario::Scenario;

/// Values below this are clamped before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConfig {
    pub tracking_tol: f64,
    pub observer_tol: f64,
    pub lyapunov_tol: f64,
    /// Window `[start, end]` for the observer decay-rate fit.
    pub fit_window: (f64, f64),
    pub min_r_squared: f64,
    pub check_tracking: bool,
    pub check_observer: bool,
    pub check_lyapunov: bool,
    pub check_observer_rate: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            tracking_tol: 1e-2,
            observer_tol: 1e-3,
            lyapunov_tol: 1e-6,
            fit_window: (2.0, 20.0),
            min_r_squared: 0.9,
            check_tracking: true,
            check_observer: true,
            check_lyapunov: true,
            check_observer_rate: true,
        }
    }
}

/// Per-follower channels: `channels[i][k]` is follower `i` at sample `k`.
pub type FollowerChannels = Vec<Vec<f64>>;

fn per_follower<F>(log: &TrajectoryLog, mut f: F) -> (FollowerChannels, FollowerChannels)
where
    F: FnMut(&FullState, usize) -> (f64, f64),
{
    let n = log.layout.followers;
    let mut a = vec![Vec::with_capacity(log.len()); n];
    let mut b = vec![Vec::with_capacity(log.len()); n];
    for x in &log.states {
        let state = log.layout.unflatten(x.as_slice());
        for i in 0..n {
            let (ea, eb) = f(&state, i);
            a[i].push(ea);
            b[i].push(eb);
        }
    }
    (a, b)
}

/// `(|q_i - q0|, |q_i' - q0'|)` per follower.
pub fn tracking_errors(log: &TrajectoryLog, leader: &LeaderSystem) -> (FollowerChannels, FollowerChannels) {
    let c = leader.output_matrix();
    let cs = c * leader.system_matrix();
    per_follower(log, |state, i| {
        let q0 = c * &state.v;
        let q0_dot = &cs * &state.v;
        ((&state.q[i] - q0).norm(), (&state.qd[i] - q0_dot).norm())
    })
}

/// `(|S_i - S|_F, |eta_i - v|)` per follower.
pub fn observer_errors(log: &TrajectoryLog, leader: &LeaderSystem) -> (FollowerChannels, FollowerChannels) {
    let s = leader.system_matrix();
    per_follower(log, |state, i| {
        (
            (&state.observer.s_est[i] - s).norm(),
            (&state.observer.eta[i] - &state.v).norm(),
        )
    })
}

/// Sliding variable of follower `i`, from state alone.
fn sliding(scenario: &Scenario, state: &FullState, i: usize) -> DVector<f64> {
    let c = scenario.leader.output_matrix();
    let (qd_r, _) = crate::controller::reference_velocity(
        c,
        &state.observer.s_est[i],
        &state.observer.eta[i],
        &state.q[i],
        scenario.controller_gains.alpha,
    );
    &state.qd[i] - qd_r
}

/// `V = 1/2 sum_i (s_i^T M_i(q_i) s_i + theta_tilde_i^T Lambda_i theta_tilde_i)`.
pub fn lyapunov_value(scenario: &Scenario, state: &FullState) -> f64 {
    let mut v = 0.0;
    for (i, plant) in scenario.plants.iter().enumerate() {
        let s = sliding(scenario, state, i);
        let tilde = &state.controller.theta_hat[i] - plant.true_params();
        v += 0.5
            * (s.dot(&(plant.mass_matrix(&state.q[i]) * &s))
                + tilde.dot(&(&scenario.controller_gains.lambda[i] * &tilde)));
    }
    v
}

pub fn lyapunov_v(log: &TrajectoryLog, scenario: &Scenario) -> Vec<f64> {
    log.states
        .iter()
        .map(|x| lyapunov_value(scenario, &log.layout.unflatten(x.as_slice())))
        .collect()
}

/// Largest `values[k+1] - values[k]`.
pub fn max_increase(values: &[f64]) -> f64 {
    values.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
}

/// First time after which `values` stays strictly below `tol`.
pub fn settle_time(times: &[f64], values: &[f64], tol: f64) -> Option<f64> {
    match values.iter().rposition(|&v| !(v < tol)) {
        None => times.first().copied(),
        Some(k) => times.get(k + 1).copied(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// `-slope` of `ln(channel)`; infinite for a channel that is identically 0.
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Least-squares fit of `ln(max(channel, LOG_FLOOR))` against time on
/// `[window.0, window.1]`.
pub fn fit_exponential_rate(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<RateFit> {
    let points: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(&t, &v)| (t, v))
        .collect();
    if points.len() < 2 {
        return Err(Error::Invalid {
            what: "rate fit window",
            reason: format!(
                "[{}, {}] holds {} samples, need at least 2",
                window.0,
                window.1,
                points.len()
            ),
        });
    }
    if points.iter().all(|&(_, v)| v == 0.0) {
        return Ok(RateFit {
            rate: f64::INFINITY,
            intercept: f64::NEG_INFINITY,
            r_squared: 1.0,
            samples: points.len(),
        });
    }
    let n = points.len() as f64;
    let logs: Vec<f64> = points.iter().map(|&(_, v)| v.max(LOG_FLOOR).ln()).collect();
    let t_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = logs.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&(t, _), &y) in points.iter().zip(&logs) {
        sxx += (t - t_mean) * (t - t_mean);
        sxy += (t - t_mean) * (y - y_mean);
        syy += (y - y_mean) * (y - y_mean);
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * t_mean;
    let ss_res: f64 = points
        .iter()
        .zip(&logs)
        .map(|(&(t, _), &y)| (y - intercept - slope * t).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(RateFit {
        rate: -slope,
        intercept,
        r_squared,
        samples: points.len(),
    })
}

/// Input `u_i = s_i - C eta_di` of the first-order system
/// `(q_i' - xi_i') + alpha (q_i - xi_i) = u_i`, plus the residual of that
/// identity evaluated from the logged state and its exact derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct Eq25Decomposition {
    /// `|u_i|` per follower and sample.
    pub u_norms: FollowerChannels,
    /// `|eta_di|` per follower and sample.
    pub eta_di_norms: FollowerChannels,
    pub max_residual: f64,
}

pub fn eq25_decomposition(log: &TrajectoryLog, scenario: &Scenario) -> Result<Eq25Decomposition> {
    let system = ClosedLoop::new(scenario)?;
    let c = scenario.leader.output_matrix();
    let alpha = scenario.controller_gains.alpha;
    let n = log.layout.followers;
    let mut out = Eq25Decomposition {
        u_norms: vec![Vec::with_capacity(log.len()); n],
        eta_di_norms: vec![Vec::with_capacity(log.len()); n],
        max_residual: 0.0,
    };
    for k in 0..log.len() {
        let state = log.state(k);
        let eval = system.evaluate(&state, scenario.network.graph(log.graphs[k]), log.times[k])?;
        for (i, f) in eval.followers.iter().enumerate() {
            let u = &f.control.s - c * &f.observer.eta_coupling;
            let xi = c * &state.observer.eta[i];
            let xi_dot = c * &eval.derivative.observer.eta[i];
            let lhs = (&state.qd[i] - xi_dot) + (&state.q[i] - xi) * alpha;
            out.max_residual = out.max_residual.max((lhs - &u).amax());
            out.u_norms[i].push(u.norm());
            out.eta_di_norms[i].push(f.observer.eta_coupling.norm());
        }
    }
    Ok(out)
}

/// `|M s' + C s + K s - Y theta_tilde|` along the log, with `s'` from central
/// differences of logged samples: five-point where the whole stencil lies in
/// one switching segment with uniform spacing, three-point otherwise. Samples
/// whose three-point stencil straddles a switching instant are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorFormResidual {
    /// Sample times at which the identity was checked.
    pub times: Vec<f64>,
    /// Worst residual over followers at each checked time.
    pub residuals: Vec<f64>,
}

impl ErrorFormResidual {
    pub fn samples_checked(&self) -> usize {
        self.times.len()
    }

    /// `(time, value)` of the largest residual.
    pub fn worst(&self) -> (f64, f64) {
        self.times
            .iter()
            .zip(&self.residuals)
            .fold((f64::NAN, 0.0), |acc, (&t, &r)| if r > acc.1 { (t, r) } else { acc })
    }

    pub fn max_residual(&self) -> f64 {
        self.worst().1
    }

    /// First checked time after which every residual stays below `tol`.
    pub fn holds_after(&self, tol: f64) -> Option<f64> {
        settle_time(&self.times, &self.residuals, tol)
    }
}

fn uniform_stencil(log: &TrajectoryLog, k: usize, half: usize) -> bool {
    if k < half || k + half >= log.len() {
        return false;
    }
    let (lo, hi) = (log.times[k - half], log.times[k + half]);
    if log.switching_instants.iter().any(|&s| s > lo && s < hi) {
        return false;
    }
    let dt = log.times[k + 1] - log.times[k];
    (k - half..k + half).all(|j| ((log.times[j + 1] - log.times[j]) - dt).abs() <= 1e-9 * dt)
}

pub fn error_form_residual(log: &TrajectoryLog, scenario: &Scenario) -> Result<ErrorFormResidual> {
    let system = ClosedLoop::new(scenario)?;
    let n = log.layout.followers;
    let states: Vec<FullState> = (0..log.len()).map(|k| log.state(k)).collect();
    let slides: Vec<Vec<DVector<f64>>> = states
        .iter()
        .map(|st| (0..n).map(|i| sliding(scenario, st, i)).collect())
        .collect();
    let mut out = ErrorFormResidual {
        times: Vec::new(),
        residuals: Vec::new(),
    };
    for k in 1..log.len().saturating_sub(1) {
        let five = uniform_stencil(log, k, 2);
        if !five && !uniform_stencil(log, k, 1) {
            continue;
        }
        let dt = log.times[k + 1] - log.times[k];
        let state = &states[k];
        let eval = system.evaluate(state, scenario.network.graph(log.graphs[k]), log.times[k])?;
        let mut worst: f64 = 0.0;
        for (i, plant) in scenario.plants.iter().enumerate() {
            let s = &slides[k][i];
            let s_dot = if five {
                (&slides[k - 2][i] - &slides[k - 1][i] * 8.0 + &slides[k + 1][i] * 8.0 - &slides[k + 2][i])
                    / (12.0 * dt)
            } else {
                (&slides[k + 1][i] - &slides[k - 1][i]) / (2.0 * dt)
            };
            let tilde = &state.controller.theta_hat[i] - plant.true_params();
            let residual = plant.mass_matrix(&state.q[i]) * s_dot
                + plant.coriolis_matrix(&state.q[i], &state.qd[i]) * s
                + &scenario.controller_gains.k[i] * s
                - &eval.followers[i].control.regressor * tilde;
            worst = worst.max(residual.norm());
        }
        out.times.push(log.times[k]);
        out.residuals.push(worst);
    }
    Ok(out)
}

/// Largest violation of `|q_i - q0| <= |q_i - xi_i| + |C|_2 |eta_i - v|`
/// (non-positive when the decomposition holds everywhere).
pub fn decomposition_slack(log: &TrajectoryLog, leader: &LeaderSystem) -> f64 {
    let c = leader.output_matrix();
    let c_norm = c.clone().singular_values().max();
    let mut worst = f64::NEG_INFINITY;
    for x in &log.states {
        let state = log.layout.unflatten(x.as_slice());
        let q0 = c * &state.v;
        for i in 0..log.layout.followers {
            let lhs = (&state.q[i] - &q0).norm();
            let rhs =
                (&state.q[i] - c * &state.observer.eta[i]).norm() + c_norm * (&state.observer.eta[i] - &state.v).norm();
            worst = worst.max(lhs - rhs);
        }
    }
    worst
}

/// Pointwise maximum over followers.
pub fn worst_over_followers(channels: &FollowerChannels) -> Vec<f64> {
    let len = channels.first().map_or(0, Vec::len);
    (0..len)
        .map(|k| channels.iter().map(|c| c[k]).fold(0.0, f64::max))
        .collect()
}

/// Pointwise Euclidean combination over followers.
pub fn stacked_norm(channels: &FollowerChannels) -> Vec<f64> {
    let len = channels.first().map_or(0, Vec::len);
    (0..len)
        .map(|k| channels.iter().map(|c| c[k] * c[k]).sum::<f64>().sqrt())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelReport {
    pub name: String,
    pub tolerance: f64,
    pub settle_time: Option<f64>,
    pub final_value: f64,
    pub peak: f64,
    pub rate: Option<RateFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub horizon: f64,
    pub channels: Vec<ChannelReport>,
    pub criteria: Vec<CriterionResult>,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn channel(&self, name: &str) -> Option<&ChannelReport> {
        self.channels.iter().find(|c| c.name == name)
    }

    /// Human-readable table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "horizon: {} s", self.horizon);
        let _ = writeln!(
            out,
            "{:<20} {:>10} {:>12} {:>12} {:>12} {:>10} {:>8}",
            "channel", "tol", "settle [s]", "final", "peak", "rate", "R^2"
        );
        for c in &self.channels {
            let settle = c.settle_time.map_or("-".to_string(), |t| format!("{t:.3}"));
            let (rate, r2) = c.rate.map_or(("-".to_string(), "-".to_string()), |f| {
                (format!("{:.4}", f.rate), format!("{:.4}", f.r_squared))
            });
            let _ = writeln!(
                out,
                "{:<20} {:>10.1e} {:>12} {:>12.4e} {:>12.4e} {:>10} {:>8}",
                c.name, c.tolerance, settle, c.final_value, c.peak, rate, r2
            );
        }
        let _ = writeln!(out);
        for c in &self.criteria {
            let _ = writeln!(
                out,
                "[{}] {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            );
        }
        let _ = writeln!(out, "overall: {}", if self.passed() { "PASS" } else { "FAIL" });
        out
    }

    /// `key = value` lines, one fact per line.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "horizon = {:.17e}", self.horizon);
        for c in &self.channels {
            let _ = writeln!(out, "channel.{}.tolerance = {:.17e}", c.name, c.tolerance);
            match c.settle_time {
                Some(t) => {
                    let _ = writeln!(out, "channel.{}.settle_time = {:.17e}", c.name, t);
                }
                None => {
                    let _ = writeln!(out, "channel.{}.settle_time = none", c.name);
                }
            }
            let _ = writeln!(out, "channel.{}.final = {:.17e}", c.name, c.final_value);
            let _ = writeln!(out, "channel.{}.peak = {:.17e}", c.name, c.peak);
            if let Some(f) = c.rate {
                let _ = writeln!(out, "channel.{}.rate = {:.17e}", c.name, f.rate);
                let _ = writeln!(out, "channel.{}.r_squared = {:.17e}", c.name, f.r_squared);
            }
        }
        for c in &self.criteria {
            let _ = writeln!(out, "criterion.{}.passed = {}", c.name, c.passed);
        }
        let _ = writeln!(out, "passed = {}", self.passed());
        out
    }
}

fn channel_report(name: &str, times: &[f64], values: &[f64], tol: f64) -> ChannelReport {
    ChannelReport {
        name: name.to_string(),
        tolerance: tol,
        settle_time: settle_time(times, values, tol),
        final_value: values.last().copied().unwrap_or(f64::NAN),
        peak: values.iter().copied().fold(0.0, f64::max),
        rate: None,
    }
}

/// Named time series derived from a log.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedChannels {
    pub names: Vec<String>,
    /// `values[j][k]` is channel `j` at sample `k`.
    pub values: Vec<Vec<f64>>,
}

/// Per-follower error norms and `V`, in a fixed column order.
pub fn derived_channels(log: &TrajectoryLog, scenario: &Scenario) -> DerivedChannels {
    let (pos, vel) = tracking_errors(log, &scenario.leader);
    let (s_err, eta_err) = observer_errors(log, &scenario.leader);
    let mut names = Vec::new();
    let mut values = Vec::new();
    for (label, chans) in [
        ("pos_err", pos),
        ("vel_err", vel),
        ("S_err", s_err),
        ("eta_err", eta_err),
    ] {
        for (i, c) in chans.into_iter().enumerate() {
            names.push(format!("{label}{}", i + 1));
            values.push(c);
        }
    }
    names.push("V".into());
    values.push(lyapunov_v(log, scenario));
    DerivedChannels { names, values }
}

/// Evaluates the enabled convergence criteria on a finished run.
pub fn assess(log: &TrajectoryLog, scenario: &Scenario) -> ConvergenceReport {
    let cfg = &scenario.analysis;
    let times = &log.times;
    let (pos, vel) = tracking_errors(log, &scenario.leader);
    let (s_err, eta_err) = observer_errors(log, &scenario.leader);
    let pos = worst_over_followers(&pos);
    let vel = worst_over_followers(&vel);
    let s_hat = stacked_norm(&s_err);
    let eta_hat = stacked_norm(&eta_err);
    let v = lyapunov_v(log, scenario);

    let mut s_report = channel_report("observer_S", times, &s_hat, cfg.observer_tol);
    let fit = fit_exponential_rate(times, &s_hat, cfg.fit_window).ok();
    s_report.rate = fit;
    let channels = vec![
        channel_report("tracking_position", times, &pos, cfg.tracking_tol),
        channel_report("tracking_velocity", times, &vel, cfg.tracking_tol),
        s_report,
        channel_report("observer_eta", times, &eta_hat, cfg.observer_tol),
        channel_report("lyapunov_V", times, &v, f64::INFINITY),
    ];

    let mut criteria = Vec::new();
    let settled = |c: &ChannelReport| match c.settle_time {
        Some(t) => format!("{} settles below {:.1e} at t = {t:.3} s", c.name, c.tolerance),
        None => format!(
            "{} ends at {:.3e}, not below {:.1e}",
            c.name, c.final_value, c.tolerance
        ),
    };
    if cfg.check_tracking {
        let (p, q) = (&channels[0], &channels[1]);
        criteria.push(CriterionResult {
            name: "tracking".into(),
            passed: p.settle_time.is_some() && q.settle_time.is_some(),
            detail: format!("{}; {}", settled(p), settled(q)),
        });
    }
    if cfg.check_observer {
        let (s, e) = (&channels[2], &channels[3]);
        criteria.push(CriterionResult {
            name: "observer".into(),
            passed: s.settle_time.is_some() && e.settle_time.is_some(),
            detail: format!("{}; {}", settled(s), settled(e)),
        });
    }
    if cfg.check_lyapunov {
        let rise = max_increase(&v);
        criteria.push(CriterionResult {
            name: "lyapunov_monotone".into(),
            passed: !(rise > cfg.lyapunov_tol),
            detail: format!("largest sample-to-sample increase of V: {rise:.3e}"),
        });
    }
    if cfg.check_observer_rate && log.final_time() >= cfg.fit_window.1 {
        let (passed, detail) = match fit {
            Some(f) => (
                f.rate > 0.0 && f.r_squared > cfg.min_r_squared,
                format!(
                    "fitted decay rate {:.4} 1/s with R^2 = {:.4} on [{}, {}] s",
                    f.rate, f.r_squared, cfg.fit_window.0, cfg.fit_window.1
                ),
            ),
            None => (false, "fit window holds too few samples".into()),
        };
        criteria.push(CriterionResult {
            name: "observer_rate".into(),
            passed,
            detail,
        });
    }
    ConvergenceReport {
        horizon: log.final_time(),
        channels,
        criteria,
    }
}

/// Column-stacked helper used by callers that want `|C|` with the leader.
pub fn output_gain(leader: &LeaderSystem) -> f64 {
    let c: DMatrix<f64> = leader.output_matrix().clone();
    c.singular_values().max()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::ControllerState;
    use crate::integrator::{simulate, StateLayout};
    use crate::observer::ObserverState;
    use crate::scenario::{builtin_example, DEFAULT_SEED};

    #[test]
    fn settle_time_cases() {
        let t = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(settle_time(&t, &[5.0, 0.5, 2.0, 0.1], 1.0), Some(3.0));
        assert_eq!(settle_time(&t, &[0.1, 0.1, 0.1, 0.1], 1.0), Some(0.0));
        assert_eq!(settle_time(&t, &[0.1, 0.1, 0.1, 1.0], 1.0), None);
    }

    #[test]
    fn rate_fit_cases() {
        let times: Vec<f64> = (0..=400).map(|k| k as f64 * 0.05).collect();
        let decay: Vec<f64> = times.iter().map(|t| 3.0 * (-2.0 * t).exp()).collect();
        let fit = fit_exponential_rate(&times, &decay, (0.0, 10.0)).unwrap();
        assert!((fit.rate - 2.0).abs() < 1e-6);
        assert!(fit.r_squared > 0.999_999);

        let flat = vec![0.7; times.len()];
        let fit = fit_exponential_rate(&times, &flat, (0.0, 20.0)).unwrap();
        assert!(fit.rate.abs() < 1e-12);

        let zero = vec![0.0; times.len()];
        assert_eq!(
            fit_exponential_rate(&times, &zero, (1.0, 2.0)).unwrap().rate,
            f64::INFINITY
        );
        assert!(fit_exponential_rate(&times, &decay, (30.0, 40.0)).is_err());
    }

    #[test]
    fn planted_rates_recovered_to_three_figures() {
        let times: Vec<f64> = (0..=1000).map(|k| k as f64 * 0.01).collect();
        for rate in [0.0123, 0.5, 1.75, 4.2, 9.99] {
            let ch: Vec<f64> = times.iter().map(|t| 0.3 * (-rate * t).exp()).collect();
            let fit = fit_exponential_rate(&times, &ch, (0.0, 3.0)).unwrap();
            assert!(((fit.rate - rate) / rate).abs() < 5e-4, "{rate} vs {}", fit.rate);
        }
    }

    #[test]
    fn lyapunov_scalar_example() {
        // 1/2 (s^T M s + theta_tilde^T Lambda theta_tilde) with s=2, M=3, theta_tilde=1, Lambda=4
        let s = DVector::from_element(1, 2.0);
        let m = DMatrix::from_element(1, 1, 3.0);
        let tilde = DVector::from_element(1, 1.0);
        let lambda = DMatrix::from_element(1, 1, 4.0);
        let v = 0.5 * (s.dot(&(&m * &s)) + tilde.dot(&(&lambda * &tilde)));
        assert_eq!(v, 8.0);
    }

    fn perfect_log(scenario: &Scenario, times: &[f64]) -> TrajectoryLog {
        let layout = StateLayout::of(scenario);
        let leader = &scenario.leader;
        let states = times
            .iter()
            .map(|&t| {
                let v = leader.state_at(t);
                let (q0, q0_dot) = leader.output(&v).unwrap();
                layout.flatten(&FullState {
                    v: v.clone(),
                    q: vec![q0; 4],
                    qd: vec![q0_dot; 4],
                    observer: ObserverState {
                        s_est: vec![leader.system_matrix().clone(); 4],
                        eta: vec![v; 4],
                    },
                    controller: ControllerState {
                        theta_hat: scenario.plants.iter().map(|p| p.true_params().clone()).collect(),
                    },
                })
            })
            .collect();
        TrajectoryLog {
            layout,
            times: times.to_vec(),
            states,
            graphs: vec![1; times.len()],
            switching_instants: vec![],
            steps: times.len(),
        }
    }

    #[test]
    fn perfect_tracking_log_has_zero_errors() {
        let sc = builtin_example(DEFAULT_SEED);
        let log = perfect_log(&sc, &[0.0, 0.1, 0.2, 0.3]);
        let (pos, vel) = tracking_errors(&log, &sc.leader);
        let (s_err, eta_err) = observer_errors(&log, &sc.leader);
        for ch in [pos, vel, s_err, eta_err] {
            assert!(ch.iter().flatten().all(|&e| e < 1e-12));
        }
        assert!(lyapunov_v(&log, &sc).iter().all(|&v| v.abs() < 1e-20));
        let eq25 = eq25_decomposition(&log, &sc).unwrap();
        assert!(eq25.max_residual < 1e-12);
        assert!(eq25.u_norms.iter().flatten().all(|&u| u < 1e-12));
    }

    #[test]
    fn short_run_diagnostics() {
        let mut sc = builtin_example(DEFAULT_SEED);
        sc.integrator.horizon = 1.0;
        sc.integrator.record_every = 1;
        let log = simulate(&sc).unwrap();
        let v = lyapunov_v(&log, &sc);
        assert!(max_increase(&v) <= 1e-6);
        assert!(decomposition_slack(&log, &sc.leader) <= 1e-12);
        let eq25 = eq25_decomposition(&log, &sc).unwrap();
        assert!(eq25.max_residual < 1e-8, "{}", eq25.max_residual);
        let form = error_form_residual(&log, &sc).unwrap();
        assert!(form.samples_checked() > 900);
        let report = assess(&log, &sc);
        assert!(report.to_table().contains("lyapunov_monotone"));
        assert!(report.to_kv().contains("passed = "));
    }
}
