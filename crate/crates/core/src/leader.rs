//! The leader exosystem `v' = S v`, `q0 = C v`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Real-part slack when deciding whether an eigenvalue of `S` is unstable.
pub const EIGEN_REAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderSystem {
    s: DMatrix<f64>,
    c: DMatrix<f64>,
    v0: DVector<f64>,
}

impl LeaderSystem {
    pub fn new(s: DMatrix<f64>, c: DMatrix<f64>, v0: DVector<f64>) -> Result<Self> {
        let m = s.nrows();
        check_dim("leader S (square)", m, s.ncols())?;
        check_dim("leader C columns", m, c.ncols())?;
        check_dim("leader v0", m, v0.len())?;
        if m == 0 || c.nrows() == 0 {
            return Err(Error::Invalid {
                what: "leader system",
                reason: "state and output dimensions must be positive".into(),
            });
        }
        if s.iter().chain(c.iter()).chain(v0.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "leader system",
            });
        }
        Ok(Self { s, c, v0 })
    }

    /// The two-link example leader: `q0(t) = (1 + t + cos t + sin t, 1 + t + cos t - sin t)`.
    pub fn ramp_and_oscillator() -> Self {
        #[rustfmt::skip]
        let s = DMatrix::from_row_slice(4, 4, &[
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
            0.0, 0.0, -1.0, 0.0,
        ]);
        #[rustfmt::skip]
        let c = DMatrix::from_row_slice(2, 4, &[
            1.0, 0.0, 1.0, 0.0,
            1.0, 0.0, 0.0, 1.0,
        ]);
        Self::new(s, c, DVector::from_element(4, 1.0)).expect("example leader is well formed")
    }

    pub fn system_matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn output_matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn initial_state(&self) -> &DVector<f64> {
        &self.v0
    }

    /// Leader state dimension `m`.
    pub fn state_dim(&self) -> usize {
        self.s.nrows()
    }

    /// Output dimension `n`.
    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn derivative(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("leader state", self.state_dim(), v.len())?;
        Ok(&self.s * v)
    }

    /// Returns `(q0, q0_dot) = (C v, C S v)`.
    pub fn output(&self, v: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        check_dim("leader state", self.state_dim(), v.len())?;
        Ok((&self.c * v, &self.c * (&self.s * v)))
    }

    /// Exact state `e^{S t} v0`.
    pub fn state_at(&self, t: f64) -> DVector<f64> {
        (&self.s * t).exp() * &self.v0
    }

    pub fn check_assumptions(&self, opts: &BoundednessCheck) -> LeaderReport {
        let m = self.state_dim();
        let mut obs = DMatrix::zeros(self.output_dim() * m, m);
        let mut block = self.c.clone();
        for k in 0..m {
            obs.rows_mut(k * self.output_dim(), self.output_dim()).copy_from(&block);
            block = &block * &self.s;
        }
        let observable = obs.clone().svd(false, false).rank(1e-9 * obs.amax().max(1.0)) == m;

        let max_real = self
            .s
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        let no_unstable_eigenvalues = max_real <= EIGEN_REAL_TOL;

        let (peak, bound) = self.output_rate_peak(opts);
        LeaderReport {
            observable,
            no_unstable_eigenvalues,
            max_eigen_real: max_real,
            output_rate_bounded: no_unstable_eigenvalues && peak <= bound,
            output_rate_peak: peak,
            output_rate_bound: bound,
        }
    }

    /// Largest `|C S e^{S t} v0|` over a sampled horizon, and the bound it is
    /// compared against.
    fn output_rate_peak(&self, opts: &BoundednessCheck) -> (f64, f64) {
        let cs = &self.c * &self.s;
        let initial = (&cs * &self.v0).norm();
        let bound = opts.bound_multiplier * initial.max(1.0);
        let dt = opts.horizon / opts.samples as f64;
        let step = (&self.s * dt).exp();
        let mut v = self.v0.clone();
        let mut peak = initial;
        for _ in 0..opts.samples {
            v = &step * v;
            let rate = (&cs * &v).norm();
            if !rate.is_finite() {
                return (f64::INFINITY, bound);
            }
            peak = peak.max(rate);
        }
        (peak, bound)
    }
}

/// Settings for the semi-numerical check that `q0_dot` stays bounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundednessCheck {
    pub horizon: f64,
    pub bound_multiplier: f64,
    pub samples: usize,
}

impl Default for BoundednessCheck {
    fn default() -> Self {
        Self {
            horizon: 100.0,
            bound_multiplier: 10.0,
            samples: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderReport {
    /// `(C, S)` observable.
    pub observable: bool,
    /// No eigenvalue of `S` has positive real part.
    pub no_unstable_eigenvalues: bool,
    pub max_eigen_real: f64,
    /// `q0_dot` stays bounded along the leader trajectory.
    pub output_rate_bounded: bool,
    pub output_rate_peak: f64,
    pub output_rate_bound: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closed_form(t: f64) -> DVector<f64> {
        DVector::from_vec(vec![1.0 + t, 1.0, t.cos() + t.sin(), t.cos() - t.sin()])
    }

    #[test]
    fn derivative_examples() {
        let leader = LeaderSystem::ramp_and_oscillator();
        let d = leader.derivative(&DVector::from_element(4, 1.0)).unwrap();
        assert_eq!(d.as_slice(), &[1.0, 0.0, 1.0, -1.0]);
        assert_eq!(leader.derivative(&DVector::zeros(4)).unwrap(), DVector::zeros(4));

        let zero = LeaderSystem::new(DMatrix::zeros(2, 2), DMatrix::identity(1, 2), DVector::zeros(2)).unwrap();
        assert_eq!(
            zero.derivative(&DVector::from_element(2, 3.0)).unwrap(),
            DVector::zeros(2)
        );
        assert!(matches!(
            leader.derivative(&DVector::zeros(3)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn output_examples() {
        let leader = LeaderSystem::ramp_and_oscillator();
        let (q0, q0_dot) = leader.output(leader.initial_state()).unwrap();
        // q0(t) = (1 + t + cos t + sin t, 1 + t + cos t - sin t)
        assert_eq!(q0.as_slice(), &[2.0, 2.0]);
        assert_eq!(q0_dot.as_slice(), &[2.0, 0.0]);

        let blind = LeaderSystem::new(
            leader.system_matrix().clone(),
            DMatrix::zeros(2, 4),
            DVector::from_element(4, 1.0),
        )
        .unwrap();
        assert_eq!(blind.output(blind.initial_state()).unwrap().0, DVector::zeros(2));
    }

    #[test]
    fn exact_state_matches_closed_form() {
        let leader = LeaderSystem::ramp_and_oscillator();
        for t in [0.0, 0.7, 3.0, 12.5] {
            assert!((leader.state_at(t) - closed_form(t)).amax() < 1e-12);
            let (q0, _) = leader.output(&leader.state_at(t)).unwrap();
            let printed = [1.0 + t + t.cos() + t.sin(), 1.0 + t + t.cos() - t.sin()];
            assert!((q0[0] - printed[0]).abs() < 1e-12 && (q0[1] - printed[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn example_leader_satisfies_assumptions() {
        let report = LeaderSystem::ramp_and_oscillator().check_assumptions(&BoundednessCheck::default());
        assert!(report.observable);
        assert!(report.no_unstable_eigenvalues);
        assert!(report.output_rate_bounded, "{report:?}");
    }

    #[test]
    fn unstable_eigenvalue_detected() {
        let leader = LeaderSystem::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let report = leader.check_assumptions(&BoundednessCheck::default());
        assert!(!report.no_unstable_eigenvalues);
        assert!(!report.output_rate_bounded);
    }

    #[test]
    fn ramp_velocity_violates_boundedness() {
        // Triple integrator: q0 = t^2 / 2, so q0_dot = t grows without bound.
        #[rustfmt::skip]
        let s = DMatrix::from_row_slice(3, 3, &[
            0.0, 1.0, 0.0,
            0.0, 0.0, 1.0,
            0.0, 0.0, 0.0,
        ]);
        let c = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let leader = LeaderSystem::new(s, c, DVector::from_vec(vec![0.0, 0.0, 1.0])).unwrap();
        let report = leader.check_assumptions(&BoundednessCheck::default());
        assert!(report.observable);
        assert!(report.no_unstable_eigenvalues);
        assert!(!report.output_rate_bounded);
        assert!(report.output_rate_peak > 99.0);
    }

    #[test]
    fn unobservable_pair_detected() {
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let leader = LeaderSystem::new(s, c, DVector::zeros(2)).unwrap();
        assert!(!leader.check_assumptions(&BoundednessCheck::default()).observable);
    }
}
