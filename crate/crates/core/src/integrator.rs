//! Fixed-step integration of the coupled leader / observer / plant / controller
//! system.
//!
//! Steps never straddle a switching instant: each constant-graph segment is cut
//! into an integer number of equal steps no longer than `h`, and every stage of
//! a step sees the graph active at the step's start.
//!
//! Flattened state layout (stable across versions): `v` first, then for each
//! follower in index order `q_i`, `q_i'`, `S_i` (row-major), `eta_i`,
//! `theta_hat_i`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::controller::{follower_control, ControlOutput, ControllerState, FollowerGains, LocalState};
use crate::error::{Error, Result};
use crate::graph::WeightedDigraph;
use crate::observer::{inbox, local_observer_rate, LocalObserverRate, ObserverState};
use crate::scenario::{Scenario, Severity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    /// Upper bound on the step; refined per segment so steps tile it exactly.
    pub h: f64,
    pub method: Method,
    pub horizon: f64,
    /// Log every `record_every`-th step boundary (the final state is always logged).
    pub record_every: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            h: 1e-3,
            method: Method::Rk4,
            horizon: 60.0,
            record_every: 10,
        }
    }
}

/// Sizes behind the flattened state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub followers: usize,
    /// Joints per follower.
    pub n: usize,
    /// Leader state dimension.
    pub m: usize,
    /// Parameters per follower.
    pub p: usize,
}

impl StateLayout {
    pub fn of(scenario: &Scenario) -> Self {
        Self {
            followers: scenario.followers(),
            n: scenario.dof(),
            m: scenario.leader.state_dim(),
            p: scenario.plants.first().map_or(0, |pl| pl.num_params()),
        }
    }

    fn block(&self) -> usize {
        2 * self.n + self.m * self.m + self.m + self.p
    }

    pub fn dim(&self) -> usize {
        self.m + self.followers * self.block()
    }

    /// Offset of follower `i`'s block (0-based follower index).
    pub fn follower_offset(&self, i: usize) -> usize {
        self.m + i * self.block()
    }

    /// Column names in layout order, 1-based.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        names.extend((1..=self.m).map(|k| format!("v[{k}]")));
        for i in 1..=self.followers {
            names.extend((1..=self.n).map(|k| format!("q{i}[{k}]")));
            names.extend((1..=self.n).map(|k| format!("qd{i}[{k}]")));
            for r in 1..=self.m {
                names.extend((1..=self.m).map(|c| format!("S{i}[{r}][{c}]")));
            }
            names.extend((1..=self.m).map(|k| format!("eta{i}[{k}]")));
            names.extend((1..=self.p).map(|k| format!("theta_hat{i}[{k}]")));
        }
        names
    }

    pub fn flatten(&self, state: &FullState) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend(state.v.iter());
        for i in 0..self.followers {
            out.extend(state.q[i].iter());
            out.extend(state.qd[i].iter());
            let s = &state.observer.s_est[i];
            for r in 0..self.m {
                out.extend(s.row(r).iter());
            }
            out.extend(state.observer.eta[i].iter());
            out.extend(state.controller.theta_hat[i].iter());
        }
        DVector::from_vec(out)
    }

    pub fn unflatten(&self, x: &[f64]) -> FullState {
        debug_assert_eq!(x.len(), self.dim());
        let (n, m, p) = (self.n, self.m, self.p);
        let mut state = FullState {
            v: DVector::from_row_slice(&x[..m]),
            q: Vec::with_capacity(self.followers),
            qd: Vec::with_capacity(self.followers),
            observer: ObserverState {
                s_est: Vec::with_capacity(self.followers),
                eta: Vec::with_capacity(self.followers),
            },
            controller: ControllerState {
                theta_hat: Vec::with_capacity(self.followers),
            },
        };
        for i in 0..self.followers {
            let mut at = self.follower_offset(i);
            let mut take = |len: usize| {
                let slice = &x[at..at + len];
                at += len;
                slice
            };
            state.q.push(DVector::from_row_slice(take(n)));
            state.qd.push(DVector::from_row_slice(take(n)));
            state.observer.s_est.push(DMatrix::from_row_slice(m, m, take(m * m)));
            state.observer.eta.push(DVector::from_row_slice(take(m)));
            state.controller.theta_hat.push(DVector::from_row_slice(take(p)));
        }
        state
    }
}

/// Complete simulation state (or its time derivative, with the same shape).
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub v: DVector<f64>,
    pub q: Vec<DVector<f64>>,
    pub qd: Vec<DVector<f64>>,
    pub observer: ObserverState,
    pub controller: ControllerState,
}

impl FullState {
    pub fn initial(scenario: &Scenario) -> Self {
        Self {
            v: scenario.leader.initial_state().clone(),
            q: scenario.initial.q.clone(),
            qd: scenario.initial.qd.clone(),
            observer: scenario.initial.observer.clone(),
            controller: scenario.initial.controller.clone(),
        }
    }
}

/// Per-follower byproducts of one right-hand-side evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerDiagnostics {
    pub observer: LocalObserverRate,
    pub control: ControlOutput,
    /// Joint acceleration produced by the applied torque.
    pub qdd: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub derivative: FullState,
    pub followers: Vec<FollowerDiagnostics>,
}

/// The closed-loop vector field of a validated scenario.
#[derive(Debug, Clone)]
pub struct ClosedLoop<'a> {
    scenario: &'a Scenario,
    layout: StateLayout,
    gains: Vec<FollowerGains>,
}

impl<'a> ClosedLoop<'a> {
    /// Fails if the scenario has error-severity violations.
    pub fn new(scenario: &'a Scenario) -> Result<Self> {
        if let Some(v) = scenario.validate().into_iter().find(|v| v.severity == Severity::Error) {
            return Err(Error::Invalid {
                what: "scenario",
                reason: v.message,
            });
        }
        let gains = (0..scenario.followers())
            .map(|i| scenario.controller_gains.follower(i))
            .collect::<Result<_>>()?;
        Ok(Self {
            scenario,
            layout: StateLayout::of(scenario),
            gains,
        })
    }

    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    pub fn scenario(&self) -> &Scenario {
        self.scenario
    }

    /// Right-hand side with an explicitly supplied active graph.
    ///
    /// Order per follower: observer update, reference velocity and
    /// acceleration, sliding variable, regressor, torque, adaptation, plant
    /// acceleration.
    pub fn evaluate(&self, state: &FullState, graph: &WeightedDigraph, t: f64) -> Result<Evaluation> {
        let sc = self.scenario;
        let leader_s = sc.leader.system_matrix();
        let c = sc.leader.output_matrix();
        let v_dot = sc.leader.derivative(&state.v)?;
        let mut derivative = FullState {
            v: v_dot,
            q: Vec::with_capacity(self.layout.followers),
            qd: Vec::with_capacity(self.layout.followers),
            observer: ObserverState {
                s_est: Vec::with_capacity(self.layout.followers),
                eta: Vec::with_capacity(self.layout.followers),
            },
            controller: ControllerState {
                theta_hat: Vec::with_capacity(self.layout.followers),
            },
        };
        let mut followers = Vec::with_capacity(self.layout.followers);
        for i in 0..self.layout.followers {
            let observer = local_observer_rate(
                &state.observer.s_est[i],
                &state.observer.eta[i],
                inbox(i + 1, graph, &state.observer, leader_s, &state.v),
                sc.observer_gains,
            );
            let local = LocalState {
                q: &state.q[i],
                qd: &state.qd[i],
                s_est: &state.observer.s_est[i],
                eta: &state.observer.eta[i],
                theta_hat: &state.controller.theta_hat[i],
            };
            let plant = &sc.plants[i];
            let control = follower_control(local, &observer, c, &self.gains[i], plant.dynamics().as_ref())?;
            let mut torque = control.torque.clone();
            if let Some(limit) = sc.torque_limit {
                torque.apply(|x| *x = x.clamp(-limit, limit));
            }
            let qdd = plant
                .forward_dynamics(&state.q[i], &state.qd[i], &torque)
                .map_err(|_| Error::Diverged {
                    t,
                    component: format!("torque of follower {}", i + 1),
                })?;

            derivative.q.push(state.qd[i].clone());
            derivative.qd.push(qdd.clone());
            derivative.observer.s_est.push(observer.s_dot.clone());
            derivative.observer.eta.push(observer.eta_dot.clone());
            derivative.controller.theta_hat.push(control.theta_hat_dot.clone());
            followers.push(FollowerDiagnostics { observer, control, qdd });
        }
        Ok(Evaluation { derivative, followers })
    }

    /// Right-hand side with the graph selected by the switching signal at `t`.
    pub fn derivative_at(&self, state: &FullState, t: f64) -> Result<FullState> {
        let graph = self.scenario.network.active_graph(t)?;
        Ok(self.evaluate(state, graph, t)?.derivative)
    }

    fn rhs(&self, x: &DVector<f64>, graph: &WeightedDigraph, t: f64) -> Result<DVector<f64>> {
        let state = self.layout.unflatten(x.as_slice());
        let d = self.layout.flatten(&self.evaluate(&state, graph, t)?.derivative);
        self.check_finite(&d, t)?;
        Ok(d)
    }

    fn check_finite(&self, x: &DVector<f64>, t: f64) -> Result<()> {
        match x.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(k) => Err(Error::Diverged {
                t,
                component: self.layout.column_names().swap_remove(k),
            }),
        }
    }
}

/// Closed-loop time derivative of `state` at time `t`.
pub fn full_derivative(state: &FullState, t: f64, scenario: &Scenario) -> Result<FullState> {
    ClosedLoop::new(scenario)?.derivative_at(state, t)
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<F>(mut f: F, t: f64, x: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = f(t, x)?;
    let k2 = f(t + 0.5 * h, &(x + &k1 * (0.5 * h)))?;
    let k3 = f(t + 0.5 * h, &(x + &k2 * (0.5 * h)))?;
    let k4 = f(t + h, &(x + &k3 * h))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

pub fn euler_step<F>(mut f: F, t: f64, x: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    Ok(x + f(t, x)? * h)
}

/// Number of equal steps, each at most `h`, that tile a segment of `length`.
pub fn steps_for(length: f64, h: f64) -> usize {
    ((length / h) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// Logged samples of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub layout: StateLayout,
    pub times: Vec<f64>,
    /// Flattened states, one per time.
    pub states: Vec<DVector<f64>>,
    /// Graph (1-based) governing the motion just after each sample.
    pub graphs: Vec<usize>,
    /// Switching instants inside the horizon, excluding `t = 0`.
    pub switching_instants: Vec<f64>,
    /// Total integration steps taken.
    pub steps: usize,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> FullState {
        self.layout.unflatten(self.states[k].as_slice())
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

/// Integrates `scenario` with its own integrator settings.
pub fn simulate(scenario: &Scenario) -> Result<TrajectoryLog> {
    integrate(scenario, &scenario.integrator)
}

pub fn integrate(scenario: &Scenario, config: &IntegratorConfig) -> Result<TrajectoryLog> {
    if !(config.h > 0.0) || config.record_every == 0 || !(config.horizon >= 0.0) {
        return Err(Error::Invalid {
            what: "integrator config",
            reason: format!(
                "h = {}, horizon = {}, record_every = {}",
                config.h, config.horizon, config.record_every
            ),
        });
    }
    let system = ClosedLoop::new(scenario)?;
    let layout = system.layout();
    let network = &scenario.network;
    let segments = network.signal().segments(config.horizon)?;

    let mut x = layout.flatten(&FullState::initial(scenario));
    let mut log = TrajectoryLog {
        layout,
        times: Vec::new(),
        states: Vec::new(),
        graphs: Vec::new(),
        switching_instants: segments.iter().skip(1).map(|s| s.start).collect(),
        steps: 0,
    };
    let mut t_end = 0.0;
    for seg in &segments {
        let graph = network.graph(seg.graph);
        let steps = steps_for(seg.end - seg.start, config.h);
        let dt = (seg.end - seg.start) / steps as f64;
        for k in 0..steps {
            let t = seg.start + k as f64 * dt;
            if log.steps.is_multiple_of(config.record_every) {
                log.times.push(t);
                log.states.push(x.clone());
                log.graphs.push(seg.graph);
            }
            let f = |tt: f64, xx: &DVector<f64>| system.rhs(xx, graph, tt);
            x = match config.method {
                Method::Rk4 => rk4_step(f, t, &x, dt)?,
                Method::Euler => euler_step(f, t, &x, dt)?,
            };
            system.check_finite(&x, t + dt)?;
            log.steps += 1;
        }
        t_end = seg.end;
    }
    let final_graph = network
        .signal()
        .evaluate(t_end)
        .unwrap_or_else(|_| segments.last().map_or(1, |s| s.graph));
    if log.times.last() != Some(&t_end) {
        log.times.push(t_end);
        log.states.push(x);
        log.graphs.push(final_graph);
    }
    log::debug!(
        "integrated {} steps over [0, {}], {} samples",
        log.steps,
        t_end,
        log.len()
    );
    Ok(log)
}
