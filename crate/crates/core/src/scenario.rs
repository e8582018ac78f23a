//! Scenario assembly and validation.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::AnalysisConfig;
use crate::controller::{ControllerGains, ControllerState};
use crate::graph::{Piece, SwitchingNetwork, SwitchingSignal, WeightedDigraph};
use crate::integrator::IntegratorConfig;
use crate::leader::{BoundednessCheck, LeaderSystem};
use crate::observer::{ObserverGains, ObserverState};
use crate::plant::{ElDynamics, PlantModel, PlantOptions, TwoLinkArm};

/// Default seed of the built-in example's random initial conditions.
pub const DEFAULT_SEED: u64 = 42;

/// Half-width of the uniform distribution for random `q_i(0)` and `q_i'(0)`.
pub const INITIAL_SPREAD: f64 = 1.0;

/// True parameters of the four arms in the built-in example.
pub const EXAMPLE_THETAS: [[f64; 5]; 4] = [
    [0.64, 1.10, 0.08, 0.64, 0.32],
    [0.76, 1.17, 0.14, 0.93, 0.44],
    [0.91, 1.26, 0.22, 1.27, 0.58],
    [1.10, 1.36, 0.32, 1.67, 0.73],
];

#[derive(Debug, Clone, PartialEq)]
pub struct InitialConditions {
    pub q: Vec<DVector<f64>>,
    pub qd: Vec<DVector<f64>>,
    pub observer: ObserverState,
    pub controller: ControllerState,
}

impl InitialConditions {
    /// `q_i(0)`, `q_i'(0)` uniform in `[-INITIAL_SPREAD, INITIAL_SPREAD]` drawn
    /// follower by follower (`q` then `q'`); observer and estimates start at 0.
    pub fn seeded(followers: usize, n: usize, m: usize, p: usize, seed: u64) -> Self {
        let (q, qd) = random_motion(followers, n, seed);
        Self {
            q,
            qd,
            observer: ObserverState::zeros(followers, m),
            controller: ControllerState::zeros(followers, p),
        }
    }
}

/// Uniform `q_i(0)`, `q_i'(0)` draws in the order used by [`InitialConditions::seeded`].
pub fn random_motion(followers: usize, n: usize, seed: u64) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = Vec::with_capacity(followers);
    let mut qd = Vec::with_capacity(followers);
    for _ in 0..followers {
        q.push(DVector::from_fn(n, |_, _| {
            rng.random_range(-INITIAL_SPREAD..=INITIAL_SPREAD)
        }));
        qd.push(DVector::from_fn(n, |_, _| {
            rng.random_range(-INITIAL_SPREAD..=INITIAL_SPREAD)
        }));
    }
    (q, qd)
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub network: SwitchingNetwork,
    /// Window length used when auditing joint connectivity.
    pub epsilon: f64,
    pub leader: LeaderSystem,
    /// Downgrades leader-assumption violations to warnings.
    pub allow_unstable_leader: bool,
    pub boundedness: BoundednessCheck,
    pub plant_options: PlantOptions,
    pub plants: Vec<PlantModel>,
    pub observer_gains: ObserverGains,
    pub controller_gains: ControllerGains,
    pub initial: InitialConditions,
    pub integrator: IntegratorConfig,
    pub analysis: AnalysisConfig,
    /// Optional per-joint torque clamp; `None` leaves the law untouched.
    pub torque_limit: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Dimension,
    Gain,
    Observability,
    UnstableLeader,
    UnboundedLeaderRate,
    Connectivity,
    Integrator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {:?}: {}", self.kind, self.message)
    }
}

/// The four-arm example: chain substitute topology, ramp + oscillator leader.
///
/// The four graphs are single edges `0->1`, `1->2`, `2->3`, `3->4`, each
/// active for a quarter of a 2 s period. No single graph connects the
/// followers to the leader; their union over any period does. This topology is
/// a stand-in chosen to have that property, not a reproduction of a published
/// figure.
pub fn builtin_example(seed: u64) -> Scenario {
    let followers = EXAMPLE_THETAS.len();
    let graphs = (0..followers)
        .map(|k| WeightedDigraph::from_edges(followers + 1, &[(k, k + 1, 1.0)]).expect("chain edge"))
        .collect();
    let pieces = (1..=followers).map(|graph| Piece { duration: 0.5, graph }).collect();
    let signal = SwitchingSignal::new(pieces, true, 0.5).expect("quarter schedule");
    let network = SwitchingNetwork::new(graphs, signal).expect("chain network");

    let plant_options = PlantOptions::default();
    let arm: Arc<dyn ElDynamics> = Arc::new(TwoLinkArm::new(plant_options.gravity));
    let plants = EXAMPLE_THETAS
        .iter()
        .map(|theta| PlantModel::new(arm.clone(), DVector::from_row_slice(theta)).expect("5 parameters"))
        .collect();

    Scenario {
        network,
        epsilon: 2.0,
        leader: LeaderSystem::ramp_and_oscillator(),
        allow_unstable_leader: false,
        boundedness: BoundednessCheck::default(),
        plant_options,
        plants,
        observer_gains: ObserverGains::new(10.0, 10.0).expect("positive"),
        controller_gains: ControllerGains::uniform(followers, 2, 5, 10.0, 20.0, 0.2).expect("positive"),
        initial: InitialConditions::seeded(followers, 2, 4, 5, seed),
        integrator: IntegratorConfig::default(),
        analysis: AnalysisConfig::default(),
        torque_limit: None,
        seed,
    }
}

impl Scenario {
    pub fn followers(&self) -> usize {
        self.plants.len()
    }

    /// Configuration dimension shared by all plants.
    pub fn dof(&self) -> usize {
        self.leader.output_dim()
    }

    /// Replaces the random parts of the initial conditions with draws from `seed`.
    pub fn reseed(&mut self, seed: u64) {
        let (q, qd) = random_motion(self.followers(), self.dof(), seed);
        self.initial.q = q;
        self.initial.qd = qd;
        self.seed = seed;
    }

    /// Replaces the network by a single empty graph (no communication at all).
    pub fn disconnect(&mut self) {
        let nodes = self.network.num_nodes();
        self.network = SwitchingNetwork::new(
            vec![WeightedDigraph::empty(nodes)],
            SwitchingSignal::constant(1, self.network.signal().period()).expect("positive period"),
        )
        .expect("single graph");
    }

    /// Every problem that would make the scenario ill-posed (errors) or fall
    /// outside the convergence guarantees (warnings). Empty means runnable
    /// with all assumptions met.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |kind, severity, message: String| {
            out.push(Violation {
                kind,
                severity,
                message,
            })
        };
        use Severity::{Error as E, Warning as W};

        let n_followers = self.followers();
        let n = self.dof();
        let m = self.leader.state_dim();

        if n_followers == 0 {
            push(ViolationKind::Dimension, E, "no followers".into());
        }
        if self.network.num_followers() != n_followers {
            push(
                ViolationKind::Dimension,
                E,
                format!(
                    "network has {} followers but {} plants are configured",
                    self.network.num_followers(),
                    n_followers
                ),
            );
        }
        for (i, plant) in self.plants.iter().enumerate() {
            if plant.dof() != n {
                push(
                    ViolationKind::Dimension,
                    E,
                    format!(
                        "plant {} has {} joints but the leader output has {}",
                        i + 1,
                        plant.dof(),
                        n
                    ),
                );
            }
        }
        let counts = [
            ("K", self.controller_gains.k.len()),
            ("Lambda", self.controller_gains.lambda.len()),
            ("q(0)", self.initial.q.len()),
            ("q_dot(0)", self.initial.qd.len()),
            ("S_i(0)", self.initial.observer.s_est.len()),
            ("eta_i(0)", self.initial.observer.eta.len()),
            ("theta_hat(0)", self.initial.controller.theta_hat.len()),
        ];
        for (what, count) in counts {
            if count != n_followers {
                push(
                    ViolationKind::Dimension,
                    E,
                    format!("{count} entries for {what}, expected one per follower ({n_followers})"),
                );
            }
        }
        for i in 0..n_followers {
            let p = self.plants[i].num_params();
            let checks = [
                ("q(0)", self.initial.q.get(i).map(|x| x.len()), n),
                ("q_dot(0)", self.initial.qd.get(i).map(|x| x.len()), n),
                ("eta_i(0)", self.initial.observer.eta.get(i).map(|x| x.len()), m),
                ("S_i(0) rows", self.initial.observer.s_est.get(i).map(|x| x.nrows()), m),
                ("S_i(0) cols", self.initial.observer.s_est.get(i).map(|x| x.ncols()), m),
                (
                    "theta_hat(0)",
                    self.initial.controller.theta_hat.get(i).map(|x| x.len()),
                    p,
                ),
                ("K rows", self.controller_gains.k.get(i).map(|x| x.nrows()), n),
                ("Lambda rows", self.controller_gains.lambda.get(i).map(|x| x.nrows()), p),
            ];
            for (what, got, want) in checks {
                if let Some(got) = got {
                    if got != want {
                        push(
                            ViolationKind::Dimension,
                            E,
                            format!("follower {}: {what} has size {got}, expected {want}", i + 1),
                        );
                    }
                }
            }
        }

        for (what, value) in [("mu1", self.observer_gains.mu1), ("mu2", self.observer_gains.mu2)] {
            if !(value.is_finite() && value > 0.0) {
                push(
                    ViolationKind::Gain,
                    E,
                    format!("{what} = {value} must be strictly positive"),
                );
            }
        }
        for msg in self.controller_gains.violations() {
            push(ViolationKind::Gain, E, msg);
        }
        if let Some(limit) = self.torque_limit {
            if !(limit > 0.0) {
                push(ViolationKind::Gain, E, format!("torque limit {limit} must be positive"));
            }
        }

        let leader_severity = if self.allow_unstable_leader { W } else { E };
        let report = self.leader.check_assumptions(&self.boundedness);
        if !report.observable {
            push(
                ViolationKind::Observability,
                leader_severity,
                "(C, S) is not observable".into(),
            );
        }
        if !report.no_unstable_eigenvalues {
            push(
                ViolationKind::UnstableLeader,
                leader_severity,
                format!(
                    "S has an eigenvalue with positive real part ({:.6})",
                    report.max_eigen_real
                ),
            );
        } else if !report.output_rate_bounded {
            push(
                ViolationKind::UnboundedLeaderRate,
                leader_severity,
                format!(
                    "leader output rate grows to {:.3e}, above the bound {:.3e}",
                    report.output_rate_peak, report.output_rate_bound
                ),
            );
        }

        let cfg = &self.integrator;
        if !(cfg.h.is_finite() && cfg.h > 0.0) {
            push(
                ViolationKind::Integrator,
                E,
                format!("step h = {} must be positive", cfg.h),
            );
        }
        if !(cfg.horizon.is_finite() && cfg.horizon >= 0.0) {
            push(
                ViolationKind::Integrator,
                E,
                format!("horizon {} must be nonnegative", cfg.horizon),
            );
        }
        if cfg.record_every == 0 {
            push(ViolationKind::Integrator, E, "record_every must be at least 1".into());
        }
        if !self.network.signal().repeats() && cfg.horizon > self.network.signal().period() {
            push(
                ViolationKind::Integrator,
                E,
                format!(
                    "horizon {} outlasts the non-repeating schedule ({} s)",
                    cfg.horizon,
                    self.network.signal().period()
                ),
            );
        }

        let audit_horizon = cfg.horizon.max(self.epsilon);
        let joint = self.network.check_jointly_connected(audit_horizon, self.epsilon);
        if !joint.passed {
            push(ViolationKind::Connectivity, W, joint.to_string());
        }
        out
    }

    /// No error-severity violations.
    pub fn is_runnable(&self) -> bool {
        self.validate().iter().all(|v| v.severity != Severity::Error)
    }
}
