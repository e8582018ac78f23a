use nalgebra::{DMatrix, DVector};

use elc::analysis::{eq25_decomposition, error_form_residual, lyapunov_value};
use elc::controller::ControllerState;
use elc::graph::{Piece, SwitchingNetwork, SwitchingSignal, WeightedDigraph};
use elc::integrator::{ClosedLoop, FullState, StateLayout};
use elc::observer::ObserverState;
use elc::scenario::{builtin_example, DEFAULT_SEED};
use elc::{simulate, Scenario};

fn on_manifold(sc: &Scenario, t: f64) -> FullState {
    let v = sc.leader.state_at(t);
    let (q0, q0_dot) = sc.leader.output(&v).unwrap();
    let followers = sc.followers();
    FullState {
        v: v.clone(),
        q: vec![q0; followers],
        qd: vec![q0_dot; followers],
        observer: ObserverState {
            s_est: vec![sc.leader.system_matrix().clone(); followers],
            eta: vec![v; followers],
        },
        controller: ControllerState {
            theta_hat: sc.plants.iter().map(|p| p.true_params().clone()).collect(),
        },
    }
}

#[test]
fn consensus_manifold_is_invariant() {
    let mut sc = builtin_example(DEFAULT_SEED);
    sc.integrator.horizon = 10.0;
    let start = on_manifold(&sc, 0.0);
    sc.initial.q = start.q.clone();
    sc.initial.qd = start.qd.clone();
    sc.initial.observer = start.observer.clone();
    sc.initial.controller = start.controller.clone();
    let log = simulate(&sc).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..log.len() {
        let x = &log.states[k];
        let exact = StateLayout::of(&sc).flatten(&on_manifold(&sc, log.times[k]));
        worst = worst.max((x - exact).amax());
    }
    assert!(worst < 1e-8, "left the manifold by {worst:e}");
}

#[test]
fn manifold_is_a_fixed_point_of_the_error_system() {
    let sc = builtin_example(DEFAULT_SEED);
    let system = ClosedLoop::new(&sc).unwrap();
    for t in [0.0, 0.3, 1.7] {
        let state = on_manifold(&sc, t);
        let d = system.derivative_at(&state, t).unwrap();
        let v_dot = sc.leader.derivative(&state.v).unwrap();
        let (_, q0_dot) = sc.leader.output(&state.v).unwrap();
        let q0_ddot = sc.leader.output_matrix() * sc.leader.system_matrix() * &v_dot;
        for i in 0..sc.followers() {
            assert!(d.observer.s_est[i].amax() < 1e-12);
            assert!((&d.observer.eta[i] - &v_dot).amax() < 1e-12);
            assert!((&d.q[i] - &q0_dot).amax() < 1e-12);
            assert!((&d.qd[i] - &q0_ddot).amax() < 1e-10);
            assert!(d.controller.theta_hat[i].amax() < 1e-12);
        }
        assert!(lyapunov_value(&sc, &state).abs() < 1e-20);
    }
}

/// Only follower 2 hears the leader; follower 1 hears follower 2.
fn sparse_scenario() -> Scenario {
    let mut sc = builtin_example(DEFAULT_SEED);
    let graph = WeightedDigraph::from_edges(5, &[(0, 2, 1.0), (2, 1, 0.7), (1, 3, 1.0), (3, 4, 1.0)]).unwrap();
    sc.network = SwitchingNetwork::new(
        vec![graph],
        SwitchingSignal::new(
            vec![Piece {
                duration: 1.0,
                graph: 1,
            }],
            true,
            1.0,
        )
        .unwrap(),
    )
    .unwrap();
    sc
}

fn random_state(sc: &Scenario, seed: u64) -> FullState {
    let layout = StateLayout::of(sc);
    let mut x = DVector::zeros(layout.dim());
    let mut s = seed;
    for v in x.iter_mut() {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        *v = ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0;
    }
    layout.unflatten(x.as_slice())
}

#[test]
fn torque_ignores_leader_state_without_a_leader_edge() {
    let sc = sparse_scenario();
    let system = ClosedLoop::new(&sc).unwrap();
    let graph = sc.network.graph(1);
    let state = random_state(&sc, 3);
    let base = system.evaluate(&state, graph, 0.0).unwrap();
    let mut moved = state.clone();
    moved.v = DVector::from_vec(vec![50.0, -3.0, 7.0, 0.25]);
    let other = system.evaluate(&moved, graph, 0.0).unwrap();
    // Followers 1, 3, 4 have no edge from node 0.
    for i in [0, 2, 3] {
        assert_eq!(base.followers[i].control.torque, other.followers[i].control.torque);
    }
    assert_ne!(base.followers[1].control.torque, other.followers[1].control.torque);
}

#[test]
fn torque_ignores_true_parameters() {
    let sc = sparse_scenario();
    let state = random_state(&sc, 11);
    let graph = sc.network.graph(1).clone();
    let base = ClosedLoop::new(&sc).unwrap().evaluate(&state, &graph, 0.0).unwrap();
    let mut altered = sc.clone();
    for plant in altered.plants.iter_mut() {
        *plant = elc::plant::PlantModel::new(plant.dynamics().clone(), plant.true_params() * 1.5).unwrap();
    }
    let other = ClosedLoop::new(&altered)
        .unwrap()
        .evaluate(&state, &graph, 0.0)
        .unwrap();
    for i in 0..sc.followers() {
        assert_eq!(base.followers[i].control.torque, other.followers[i].control.torque);
        assert_eq!(
            base.followers[i].control.theta_hat_dot,
            other.followers[i].control.theta_hat_dot
        );
        // The plant response does depend on them.
        assert_ne!(base.followers[i].qdd, other.followers[i].qdd);
    }
}

#[test]
fn error_form_holds_with_exact_sliding_rate() {
    let mut sc = builtin_example(DEFAULT_SEED);
    sc.integrator.horizon = 3.0;
    sc.integrator.record_every = 7;
    let log = simulate(&sc).unwrap();
    let system = ClosedLoop::new(&sc).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..log.len() {
        let state = log.state(k);
        let eval = system
            .evaluate(&state, sc.network.graph(log.graphs[k]), log.times[k])
            .unwrap();
        for (i, plant) in sc.plants.iter().enumerate() {
            let f = &eval.followers[i];
            let s_dot = &f.qdd - &f.control.qdd_r;
            let tilde = &state.controller.theta_hat[i] - plant.true_params();
            let r = plant.mass_matrix(&state.q[i]) * s_dot
                + plant.coriolis_matrix(&state.q[i], &state.qd[i]) * &f.control.s
                + &sc.controller_gains.k[i] * &f.control.s
                - &f.control.regressor * tilde;
            worst = worst.max(r.amax() / (1.0 + f.control.regressor.amax()));
        }
    }
    assert!(worst < 1e-10, "{worst:e}");
}

#[test]
fn finite_difference_residual_shrinks_with_spacing() {
    // Past the initial transients the sampled residual is discretization error.
    let mut sc = builtin_example(DEFAULT_SEED);
    sc.integrator.horizon = 8.0;
    let mut tails = Vec::new();
    for h in [1e-3, 5e-4] {
        sc.integrator.h = h;
        sc.integrator.record_every = 1;
        let form = error_form_residual(&simulate(&sc).unwrap(), &sc).unwrap();
        let tail = form
            .times
            .iter()
            .zip(&form.residuals)
            .filter(|(t, _)| **t > 6.0)
            .map(|(_, r)| *r)
            .fold(0.0, f64::max);
        tails.push(tail);
    }
    assert!(tails[1] < tails[0] / 2.0, "{tails:?}");
    assert!(tails[0] < 1e-4, "{tails:?}");
}

#[test]
fn decomposition_input_vanishes() {
    let mut sc = builtin_example(DEFAULT_SEED);
    sc.integrator.horizon = 30.0;
    let log = simulate(&sc).unwrap();
    let eq25 = eq25_decomposition(&log, &sc).unwrap();
    assert!(eq25.max_residual < 1e-9, "{}", eq25.max_residual);
    let last = log.len() - 1;
    for i in 0..sc.followers() {
        assert!(eq25.eta_di_norms[i][last] < 1e-3);
        assert!(eq25.u_norms[i][last] < eq25.u_norms[i].iter().copied().fold(0.0, f64::max));
    }
    // eta_i' - v' -> 0 as well.
    let system = ClosedLoop::new(&sc).unwrap();
    let state = log.state(last);
    let d = system.derivative_at(&state, log.final_time()).unwrap();
    for i in 0..sc.followers() {
        assert!((&d.observer.eta[i] - &d.v).norm() < 1e-3);
    }
}

#[test]
fn estimates_stay_bounded() {
    let sc = builtin_example(DEFAULT_SEED);
    let log = simulate(&sc).unwrap();
    let mut peak: f64 = 0.0;
    for k in 0..log.len() {
        for th in log.state(k).controller.theta_hat {
            peak = peak.max(th.norm());
        }
    }
    assert!(peak < 100.0, "{peak}");
}

#[test]
fn leader_is_linear_in_its_initial_state() {
    let base = builtin_example(DEFAULT_SEED).leader;
    let s = base.system_matrix().clone();
    let c = base.output_matrix().clone();
    let a = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
    let b = DVector::from_vec(vec![-0.3, 0.1, 2.0, -1.0]);
    let at = |v0: DVector<f64>, t| elc::LeaderSystem::new(s.clone(), c.clone(), v0).unwrap().state_at(t);
    for t in [0.0, 0.7, 5.0, 19.3] {
        let lhs = at(&a * 2.0 + &b * -1.5, t);
        let rhs = at(a.clone(), t) * 2.0 + at(b.clone(), t) * -1.5;
        assert!((lhs - rhs).amax() < 1e-11);
    }
}

#[test]
fn empty_network_never_informs_followers() {
    let mut sc = builtin_example(DEFAULT_SEED);
    sc.disconnect();
    sc.integrator.horizon = 5.0;
    let log = simulate(&sc).unwrap();
    let last = log.state(log.len() - 1);
    for i in 0..sc.followers() {
        assert_eq!(last.observer.s_est[i], DMatrix::zeros(4, 4));
        assert_eq!(last.observer.eta[i], DVector::zeros(4));
    }
}
