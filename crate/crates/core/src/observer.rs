//! Adaptive distributed observer.
//!
//! Every follower keeps an estimate `S_i` of the leader's system matrix and an
//! estimate `eta_i` of the leader state, and updates both from its in-neighbours
//! only:
//!
//! ```text
//! S_i'   = mu1 * sum_j a_ij (S_j - S_i)
//! eta_i' = S_i eta_i + mu2 * sum_j a_ij (eta_j - eta_i)
//! ```
//!
//! with node 0 contributing the true `S` and `v`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::graph::WeightedDigraph;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverGains {
    pub mu1: f64,
    pub mu2: f64,
}

impl ObserverGains {
    pub fn new(mu1: f64, mu2: f64) -> Result<Self> {
        for (what, value) in [("mu1", mu1), ("mu2", mu2)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Invalid {
                    what: "observer gain",
                    reason: format!("{what} = {value} must be strictly positive"),
                });
            }
        }
        Ok(Self { mu1, mu2 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub s_est: Vec<DMatrix<f64>>,
    pub eta: Vec<DVector<f64>>,
}

impl ObserverState {
    pub fn zeros(followers: usize, m: usize) -> Self {
        Self {
            s_est: vec![DMatrix::zeros(m, m); followers],
            eta: vec![DVector::zeros(m); followers],
        }
    }

    /// Entries uniform in `[-scale, scale]`, reproducible from `seed`.
    pub fn random(followers: usize, m: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = move || rng.random_range(-scale..=scale);
        let s_est = (0..followers).map(|_| DMatrix::from_fn(m, m, |_, _| draw())).collect();
        let eta = (0..followers).map(|_| DVector::from_fn(m, |_, _| draw())).collect();
        Self { s_est, eta }
    }

    pub fn followers(&self) -> usize {
        self.eta.len()
    }

    pub fn check_dims(&self, followers: usize, m: usize) -> Result<()> {
        check_dim("observer follower count", followers, self.s_est.len())?;
        check_dim("observer follower count", followers, self.eta.len())?;
        for (s, eta) in self.s_est.iter().zip(&self.eta) {
            check_dim("observer S_i rows", m, s.nrows())?;
            check_dim("observer S_i cols", m, s.ncols())?;
            check_dim("observer eta_i", m, eta.len())?;
        }
        Ok(())
    }
}

/// What a follower hears from one in-neighbour: the edge weight and the
/// neighbour's current estimates.
#[derive(Debug, Clone, Copy)]
pub struct NeighborMessage<'a> {
    pub weight: f64,
    pub s_est: &'a DMatrix<f64>,
    pub eta: &'a DVector<f64>,
}

/// Observer update of one follower.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalObserverRate {
    pub s_dot: DMatrix<f64>,
    pub eta_dot: DVector<f64>,
    /// Diffusive coupling `mu2 * sum_j a_ij (eta_j - eta_i)`.
    pub eta_coupling: DVector<f64>,
}

pub fn local_observer_rate<'a>(
    s_own: &DMatrix<f64>,
    eta_own: &DVector<f64>,
    neighbors: impl IntoIterator<Item = NeighborMessage<'a>>,
    gains: ObserverGains,
) -> LocalObserverRate {
    let m = eta_own.len();
    let mut s_sum = DMatrix::zeros(m, m);
    let mut eta_sum = DVector::zeros(m);
    for msg in neighbors {
        s_sum += (msg.s_est - s_own) * msg.weight;
        eta_sum += (msg.eta - eta_own) * msg.weight;
    }
    let eta_coupling = eta_sum * gains.mu2;
    LocalObserverRate {
        s_dot: s_sum * gains.mu1,
        eta_dot: s_own * eta_own + &eta_coupling,
        eta_coupling,
    }
}

/// Messages reaching follower `i` (1-based node index) over `graph`.
pub fn inbox<'a>(
    node: usize,
    graph: &'a WeightedDigraph,
    state: &'a ObserverState,
    leader_s: &'a DMatrix<f64>,
    v: &'a DVector<f64>,
) -> impl Iterator<Item = NeighborMessage<'a>> + 'a {
    (0..graph.num_nodes()).filter_map(move |j| {
        let weight = graph.weight(node, j);
        if weight == 0.0 || j == node {
            return None;
        }
        Some(if j == 0 {
            NeighborMessage {
                weight,
                s_est: leader_s,
                eta: v,
            }
        } else {
            NeighborMessage {
                weight,
                s_est: &state.s_est[j - 1],
                eta: &state.eta[j - 1],
            }
        })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverRates {
    pub s_dot: Vec<DMatrix<f64>>,
    pub eta_dot: Vec<DVector<f64>>,
    pub eta_coupling: Vec<DVector<f64>>,
}

/// Observer right-hand side for all followers at once.
pub fn observer_derivative(
    state: &ObserverState,
    leader_s: &DMatrix<f64>,
    v: &DVector<f64>,
    graph: &WeightedDigraph,
    gains: ObserverGains,
) -> Result<ObserverRates> {
    let n = state.followers();
    check_dim("graph followers", n, graph.num_followers())?;
    state.check_dims(n, v.len())?;
    check_dim("leader S", v.len(), leader_s.nrows())?;
    let mut rates = ObserverRates {
        s_dot: Vec::with_capacity(n),
        eta_dot: Vec::with_capacity(n),
        eta_coupling: Vec::with_capacity(n),
    };
    for i in 0..n {
        let local = local_observer_rate(
            &state.s_est[i],
            &state.eta[i],
            inbox(i + 1, graph, state, leader_s, v),
            gains,
        );
        rates.s_dot.push(local.s_dot);
        rates.eta_dot.push(local.eta_dot);
        rates.eta_coupling.push(local.eta_coupling);
    }
    Ok(rates)
}

/// `eta_di = mu2 * sum_j a_ij (eta_j - eta_i)` for every follower.
pub fn eta_di(
    state: &ObserverState,
    leader_s: &DMatrix<f64>,
    v: &DVector<f64>,
    graph: &WeightedDigraph,
    mu2: f64,
) -> Result<Vec<DVector<f64>>> {
    let gains = ObserverGains { mu1: 1.0, mu2 };
    Ok(observer_derivative(state, leader_s, v, graph, gains)?.eta_coupling)
}

/// Observer errors in stacked form.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactErrors {
    /// `col(S_1 - S, ..., S_N - S)`, shape `(N m) x m`.
    pub s_hat: DMatrix<f64>,
    /// `eta - 1_N (x) v`.
    pub eta_hat: DVector<f64>,
    /// `blockdiag(S_1 - S, ..., S_N - S)`.
    pub s_hat_diag: DMatrix<f64>,
    /// `col(eta_1, ..., eta_N)`.
    pub eta: DVector<f64>,
}

impl CompactErrors {
    pub fn new(state: &ObserverState, leader_s: &DMatrix<f64>, v: &DVector<f64>) -> Self {
        let n = state.followers();
        let m = v.len();
        let mut s_hat = DMatrix::zeros(n * m, m);
        let mut s_hat_diag = DMatrix::zeros(n * m, n * m);
        let mut eta_hat = DVector::zeros(n * m);
        let mut eta = DVector::zeros(n * m);
        for i in 0..n {
            let diff = &state.s_est[i] - leader_s;
            s_hat.view_mut((i * m, 0), (m, m)).copy_from(&diff);
            s_hat_diag.view_mut((i * m, i * m), (m, m)).copy_from(&diff);
            eta_hat.rows_mut(i * m, m).copy_from(&(&state.eta[i] - v));
            eta.rows_mut(i * m, m).copy_from(&state.eta[i]);
        }
        Self {
            s_hat,
            eta_hat,
            s_hat_diag,
            eta,
        }
    }

    /// Error rates from the stacked linear form:
    /// `S_hat' = -mu1 (H (x) I) S_hat`,
    /// `eta_hat' = (I (x) S - mu2 (H (x) I)) eta_hat + S_hat_d eta`.
    pub fn rates(
        &self,
        leader_s: &DMatrix<f64>,
        graph: &WeightedDigraph,
        gains: ObserverGains,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let m = leader_s.nrows();
        let n = self.eta.len() / m;
        let h_kron = graph.h_matrix().kronecker(&DMatrix::<f64>::identity(m, m));
        let s_hat_dot = &h_kron * &self.s_hat * -gains.mu1;
        let drift = DMatrix::<f64>::identity(n, n).kronecker(leader_s) - &h_kron * gains.mu2;
        let eta_hat_dot = drift * &self.eta_hat + &self.s_hat_diag * &self.eta;
        (s_hat_dot, eta_hat_dot)
    }

    pub fn s_hat_norm(&self) -> f64 {
        self.s_hat.norm()
    }

    pub fn eta_hat_norm(&self) -> f64 {
        self.eta_hat.norm()
    }
}

/// Largest entrywise gap between the error rates implied by the per-follower
/// update and by the stacked linear form.
pub fn dual_form_gap(
    state: &ObserverState,
    leader_s: &DMatrix<f64>,
    v: &DVector<f64>,
    graph: &WeightedDigraph,
    gains: ObserverGains,
) -> Result<f64> {
    let rates = observer_derivative(state, leader_s, v, graph, gains)?;
    let v_dot = leader_s * v;
    let (s_hat_dot, eta_hat_dot) = CompactErrors::new(state, leader_s, v).rates(leader_s, graph, gains);
    let m = v.len();
    let mut gap: f64 = 0.0;
    for i in 0..state.followers() {
        let s_block = s_hat_dot.view((i * m, 0), (m, m));
        gap = gap.max((&rates.s_dot[i] - s_block).amax());
        let eta_block = eta_hat_dot.rows(i * m, m);
        gap = gap.max((&rates.eta_dot[i] - &v_dot - eta_block).amax());
    }
    Ok(gap)
}
