//! Per-follower adaptive control law.
//!
//! Each follower turns its observer estimates into a reference motion
//! (`xi_i = C eta_i`, `q_ri' = C S_i eta_i - alpha (q_i - xi_i)`), forms the
//! sliding variable `s_i = q_i' - q_ri'`, applies the certainty-equivalence
//! torque `tau_i = -K_i s_i + Y_i theta_hat_i` and adapts
//! `theta_hat_i' = -Lambda_i^{-1} Y_i^T s_i`.
//!
//! Nothing here takes the leader state, the leader output or another agent's
//! plant parameters as input.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::observer::LocalObserverRate;
use crate::plant::{regression_matrix, ElDynamics};

fn spd_violation(what: &str, m: &DMatrix<f64>) -> Option<String> {
    if m.nrows() != m.ncols() {
        return Some(format!("{what}: {}x{} matrix is not square", m.nrows(), m.ncols()));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Some(format!("{what}: non-finite entry"));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Some(format!("{what}: matrix is not symmetric"));
    }
    let min_eig = m.symmetric_eigenvalues().min();
    if !(min_eig > 0.0) {
        return Some(format!(
            "{what}: matrix is not positive definite (smallest eigenvalue {min_eig})"
        ));
    }
    None
}

/// Controller gains for all followers. Plain data; see [`ControllerGains::violations`].
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    pub alpha: f64,
    pub k: Vec<DMatrix<f64>>,
    pub lambda: Vec<DMatrix<f64>>,
}

impl ControllerGains {
    /// Checked constructor.
    pub fn new(alpha: f64, k: Vec<DMatrix<f64>>, lambda: Vec<DMatrix<f64>>) -> Result<Self> {
        let gains = Self { alpha, k, lambda };
        match gains.violations().into_iter().next() {
            None => Ok(gains),
            Some(reason) => Err(Error::Invalid {
                what: "controller gains",
                reason,
            }),
        }
    }

    /// Same `alpha`, `K = k I_n` and `Lambda = lambda I_p` for every follower.
    pub fn uniform(followers: usize, n: usize, p: usize, alpha: f64, k: f64, lambda: f64) -> Result<Self> {
        Self::new(
            alpha,
            vec![DMatrix::identity(n, n) * k; followers],
            vec![DMatrix::identity(p, p) * lambda; followers],
        )
    }

    /// Every broken positivity / definiteness requirement, as messages.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            out.push(format!("alpha = {} must be strictly positive", self.alpha));
        }
        if self.k.len() != self.lambda.len() {
            out.push(format!(
                "{} K matrices but {} Lambda matrices",
                self.k.len(),
                self.lambda.len()
            ));
        }
        for (i, k) in self.k.iter().enumerate() {
            out.extend(spd_violation(&format!("K[{}]", i + 1), k));
        }
        for (i, l) in self.lambda.iter().enumerate() {
            out.extend(spd_violation(&format!("Lambda[{}]", i + 1), l));
        }
        out
    }

    pub fn followers(&self) -> usize {
        self.k.len()
    }

    /// Gains of follower `i` (0-based) with `Lambda^{-1}` precomputed.
    pub fn follower(&self, i: usize) -> Result<FollowerGains> {
        let lambda_inv = self.lambda[i]
            .clone()
            .cholesky()
            .ok_or(Error::Invalid {
                what: "Lambda",
                reason: format!("Lambda[{}] is not positive definite", i + 1),
            })?
            .inverse();
        Ok(FollowerGains {
            alpha: self.alpha,
            k: self.k[i].clone(),
            lambda_inv,
        })
    }
}

/// Gains used by one follower's control law.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerGains {
    pub alpha: f64,
    pub k: DMatrix<f64>,
    pub lambda_inv: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub theta_hat: Vec<DVector<f64>>,
}

impl ControllerState {
    pub fn zeros(followers: usize, p: usize) -> Self {
        Self {
            theta_hat: vec![DVector::zeros(p); followers],
        }
    }
}

/// Returns `(q_r', xi)` with `xi = C eta_i`.
pub fn reference_velocity(
    c: &DMatrix<f64>,
    s_est: &DMatrix<f64>,
    eta: &DVector<f64>,
    q: &DVector<f64>,
    alpha: f64,
) -> (DVector<f64>, DVector<f64>) {
    let xi = c * eta;
    let qd_r = c * (s_est * eta) - (q - &xi) * alpha;
    (qd_r, xi)
}

/// `q_r'' = C (S_i' eta_i + S_i eta_i') - alpha (q_i' - xi_i')`.
#[allow(clippy::too_many_arguments)]
pub fn reference_acceleration(
    c: &DMatrix<f64>,
    s_dot: &DMatrix<f64>,
    s_est: &DMatrix<f64>,
    eta: &DVector<f64>,
    eta_dot: &DVector<f64>,
    qd: &DVector<f64>,
    xi_dot: &DVector<f64>,
    alpha: f64,
) -> DVector<f64> {
    c * (s_dot * eta + s_est * eta_dot) - (qd - xi_dot) * alpha
}

pub fn sliding_variable(qd: &DVector<f64>, qd_r: &DVector<f64>) -> DVector<f64> {
    qd - qd_r
}

/// `tau = -K s + Y theta_hat`.
pub fn control_torque(k: &DMatrix<f64>, s: &DVector<f64>, y: &DMatrix<f64>, theta_hat: &DVector<f64>) -> DVector<f64> {
    y * theta_hat - k * s
}

/// `theta_hat' = -Lambda^{-1} Y^T s`.
pub fn adaptation_derivative(lambda: &DMatrix<f64>, y: &DMatrix<f64>, s: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = lambda.clone().cholesky().ok_or(Error::Invalid {
        what: "Lambda",
        reason: "not positive definite".into(),
    })?;
    Ok(-chol.solve(&(y.transpose() * s)))
}

/// Everything a follower measures or stores itself.
#[derive(Debug, Clone, Copy)]
pub struct LocalState<'a> {
    pub q: &'a DVector<f64>,
    pub qd: &'a DVector<f64>,
    pub s_est: &'a DMatrix<f64>,
    pub eta: &'a DVector<f64>,
    pub theta_hat: &'a DVector<f64>,
}

/// Intermediate and output quantities of one control evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub xi: DVector<f64>,
    pub xi_dot: DVector<f64>,
    pub qd_r: DVector<f64>,
    pub qdd_r: DVector<f64>,
    pub s: DVector<f64>,
    pub regressor: DMatrix<f64>,
    pub torque: DVector<f64>,
    pub theta_hat_dot: DVector<f64>,
}

/// Evaluates one follower's control law.
///
/// `observer` must be the follower's observer update at the same instant; it is
/// the only channel through which neighbour information enters.
pub fn follower_control(
    local: LocalState<'_>,
    observer: &LocalObserverRate,
    c: &DMatrix<f64>,
    gains: &FollowerGains,
    dynamics: &dyn ElDynamics,
) -> Result<ControlOutput> {
    let alpha = gains.alpha;
    let (qd_r, xi) = reference_velocity(c, local.s_est, local.eta, local.q, alpha);
    let xi_dot = c * &observer.eta_dot;
    let qdd_r = reference_acceleration(
        c,
        &observer.s_dot,
        local.s_est,
        local.eta,
        &observer.eta_dot,
        local.qd,
        &xi_dot,
        alpha,
    );
    let s = sliding_variable(local.qd, &qd_r);
    let regressor = regression_matrix(dynamics, local.q, local.qd, &qdd_r, &qd_r)?;
    let torque = control_torque(&gains.k, &s, &regressor, local.theta_hat);
    let theta_hat_dot = -(&gains.lambda_inv * (regressor.transpose() * &s));
    Ok(ControlOutput {
        xi,
        xi_dot,
        qd_r,
        qdd_r,
        s,
        regressor,
        torque,
        theta_hat_dot,
    })
}
