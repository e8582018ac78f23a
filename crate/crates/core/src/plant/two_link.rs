use nalgebra::{DMatrix, DVector};

use super::ElDynamics;

/// Planar two-link arm with lumped parameters `theta = (a1, a2, a3, a4, a5)`.
///
/// Joint angles are `q = (theta1, theta2)` with `theta2` relative to link 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLinkArm {
    gravity: f64,
}

impl TwoLinkArm {
    pub const NAME: &'static str = "two-link";

    pub fn new(gravity: f64) -> Self {
        Self { gravity }
    }

    pub fn gravity_constant(&self) -> f64 {
        self.gravity
    }

    /// `(a4 + 2 a5) g`, an upper bound on `|G(q)|` for nonnegative parameters.
    pub fn gravity_bound(&self, theta: &DVector<f64>) -> f64 {
        (theta[3] + 2.0 * theta[4]) * self.gravity.abs()
    }
}

impl ElDynamics for TwoLinkArm {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn dof(&self) -> usize {
        2
    }

    fn num_params(&self) -> usize {
        5
    }

    fn mass_matrix(&self, theta: &DVector<f64>, q: &DVector<f64>) -> DMatrix<f64> {
        let c2 = q[1].cos();
        let off = theta[1] + theta[2] * c2;
        DMatrix::from_row_slice(2, 2, &[theta[0] + theta[1] + 2.0 * theta[2] * c2, off, off, theta[1]])
    }

    fn coriolis_matrix(&self, theta: &DVector<f64>, q: &DVector<f64>, qd: &DVector<f64>) -> DMatrix<f64> {
        let k = theta[2] * q[1].sin();
        DMatrix::from_row_slice(2, 2, &[-k * qd[1], -k * (qd[0] + qd[1]), k * qd[0], 0.0])
    }

    fn gravity(&self, theta: &DVector<f64>, q: &DVector<f64>) -> DVector<f64> {
        let outer = theta[4] * self.gravity * (q[0] + q[1]).cos();
        DVector::from_vec(vec![theta[3] * self.gravity * q[0].cos() + outer, outer])
    }

    /// Inertia depends on the elbow angle only.
    fn certification_grid(&self, points: usize) -> Vec<DVector<f64>> {
        let pi = std::f64::consts::PI;
        (0..points)
            .map(|k| {
                let elbow = -pi + 2.0 * pi * k as f64 / (points.max(2) - 1) as f64;
                DVector::from_vec(vec![0.0, elbow])
            })
            .collect()
    }
}
