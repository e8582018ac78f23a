//! Randomised audits of the structural plant properties the controller relies
//! on: skew symmetry of `M' - 2C`, the regression identity, and the
//! inertia / Coriolis / gravity bounds.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{regression_matrix, ElDynamics};
use crate::error::Result;

/// Tolerance on `|x^T (M'_fd - 2C) x|`.
pub const SKEW_TOL: f64 = 1e-6;
/// Tolerance on `|Y theta - (M x + C y + G)|`.
pub const REGRESSION_TOL: f64 = 1e-10;
/// Step of the central difference used for `M'` along the flow.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRanges {
    pub position: f64,
    pub velocity: f64,
}

impl Default for SampleRanges {
    fn default() -> Self {
        Self {
            position: std::f64::consts::PI,
            velocity: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub samples: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl PropertyCheck {
    fn new(name: &'static str, samples: usize, worst: f64, tolerance: f64) -> Self {
        Self {
            name,
            samples,
            worst,
            tolerance,
            passed: worst.is_finite() && worst < tolerance,
        }
    }
}

impl std::fmt::Display for PropertyCheck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<28} {} worst = {:.3e} (tol {:.0e}, {} samples)",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.worst,
            self.tolerance,
            self.samples
        )
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-half_width..=half_width))
}

/// Worst `|x^T (M'(q) - 2 C(q, q')) x|` over random states, with `M'` taken as
/// a central difference of `M` along `q'`.
///
/// `velocity_scale = 0` samples only resting states.
pub fn skew_symmetry(
    dynamics: &dyn ElDynamics,
    theta: &DVector<f64>,
    samples: usize,
    ranges: SampleRanges,
    seed: u64,
) -> PropertyCheck {
    let n = dynamics.dof();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let q = random_vec(&mut rng, n, ranges.position);
        let qd = random_vec(&mut rng, n, ranges.velocity);
        let x = random_vec(&mut rng, n, 1.0);
        let m_dot = (dynamics.mass_matrix(theta, &(&q + &qd * FD_STEP))
            - dynamics.mass_matrix(theta, &(&q - &qd * FD_STEP)))
            / (2.0 * FD_STEP);
        let n_mat = m_dot - dynamics.coriolis_matrix(theta, &q, &qd) * 2.0;
        let value = x.dot(&(n_mat * &x)).abs();
        worst = if value.is_nan() { f64::NAN } else { worst.max(value) };
    }
    PropertyCheck::new("skew symmetry (M' - 2C)", samples, worst, SKEW_TOL)
}

/// Worst `|Y(q, q', x, y) theta - (M x + C y + G)|` over random arguments.
pub fn regression_identity(
    dynamics: &dyn ElDynamics,
    theta: &DVector<f64>,
    samples: usize,
    ranges: SampleRanges,
    seed: u64,
) -> Result<PropertyCheck> {
    let n = dynamics.dof();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let q = random_vec(&mut rng, n, ranges.position);
        let qd = random_vec(&mut rng, n, ranges.velocity);
        let x = random_vec(&mut rng, n, ranges.velocity);
        let y = random_vec(&mut rng, n, ranges.velocity);
        let direct = dynamics.mass_matrix(theta, &q) * &x
            + dynamics.coriolis_matrix(theta, &q, &qd) * &y
            + dynamics.gravity(theta, &q);
        let regressed = regression_matrix(dynamics, &q, &qd, &x, &y)? * theta;
        worst = worst.max((regressed - direct).amax());
    }
    Ok(PropertyCheck::new(
        "regression identity",
        samples,
        worst,
        REGRESSION_TOL,
    ))
}

/// Empirical constants behind the inertia, Coriolis and gravity bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantBounds {
    /// Smallest eigenvalue of `M` seen on the grid.
    pub k_m_lower: f64,
    /// Largest eigenvalue of `M` seen on the grid.
    pub k_m_upper: f64,
    /// Largest `|C(q, q')|_2 / |q'|` over sampled velocities.
    pub k_c: f64,
    /// Largest `|G(q)|`.
    pub k_g: f64,
    /// Largest asymmetry `|M - M^T|` seen.
    pub asymmetry: f64,
}

impl PlantBounds {
    pub fn positive_definite(&self) -> bool {
        self.k_m_lower > 0.0 && self.asymmetry < 1e-12
    }
}

pub fn certify_bounds(dynamics: &dyn ElDynamics, theta: &DVector<f64>, grid_points: usize, seed: u64) -> PlantBounds {
    let n = dynamics.dof();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bounds = PlantBounds {
        k_m_lower: f64::INFINITY,
        k_m_upper: 0.0,
        k_c: 0.0,
        k_g: 0.0,
        asymmetry: 0.0,
    };
    for q in dynamics.certification_grid(grid_points) {
        let m = dynamics.mass_matrix(theta, &q);
        bounds.asymmetry = bounds.asymmetry.max((&m - m.transpose()).amax());
        let eig = m.symmetric_eigenvalues();
        bounds.k_m_lower = bounds.k_m_lower.min(eig.min());
        bounds.k_m_upper = bounds.k_m_upper.max(eig.max());
        bounds.k_g = bounds.k_g.max(dynamics.gravity(theta, &q).norm());
        let qd = random_vec(&mut rng, n, 1.0);
        let speed = qd.norm();
        if speed > 1e-9 {
            let c = dynamics.coriolis_matrix(theta, &q, &qd);
            let spectral = c.singular_values().max();
            bounds.k_c = bounds.k_c.max(spectral / speed);
        }
    }
    bounds
}
