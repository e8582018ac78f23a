//! Euler-Lagrange plants `M(q) q'' + C(q, q') q' + G(q) = tau`.
//!
//! Dynamics are written against an explicit parameter vector so that the same
//! model serves two callers: the simulator, which evaluates it at the hidden
//! true parameters, and the controller, which only ever sees the parameter-free
//! regression matrix.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

pub mod properties;
mod two_link;

pub use two_link::TwoLinkArm;

/// Parameterised Euler-Lagrange dynamics.
pub trait ElDynamics: fmt::Debug + Send + Sync {
    fn name(&self) -> &str;

    /// Configuration dimension `n`.
    fn dof(&self) -> usize;

    /// Parameter dimension `p`.
    fn num_params(&self) -> usize;

    fn mass_matrix(&self, theta: &DVector<f64>, q: &DVector<f64>) -> DMatrix<f64>;

    fn coriolis_matrix(&self, theta: &DVector<f64>, q: &DVector<f64>, qd: &DVector<f64>) -> DMatrix<f64>;

    fn gravity(&self, theta: &DVector<f64>, q: &DVector<f64>) -> DVector<f64>;

    /// Whether `M`, `C` and `G` are linear in the parameters with no
    /// parameter-free part. Regression extraction needs this.
    fn linear_in_parameters(&self) -> bool {
        true
    }

    /// Configurations over which inertia and gravity bounds are certified.
    fn certification_grid(&self, points: usize) -> Vec<DVector<f64>> {
        let n = self.dof();
        (0..points)
            .map(|k| {
                DVector::from_fn(n, |i, _| {
                    // low-discrepancy sweep of [-pi, pi]^n
                    let frac = ((k as f64 + 0.5) * (0.618_033_988_749_895 * (i + 1) as f64)).fract();
                    std::f64::consts::PI * (2.0 * frac - 1.0)
                })
            })
            .collect()
    }
}

/// `Y(q, q', x, y)` with `Y theta = M(q) x + C(q, q') y + G(q)` for every `theta`.
///
/// Built by evaluating the dynamics at each unit parameter vector, which is
/// exact for models that are linear in their parameters.
pub fn regression_matrix(
    dynamics: &dyn ElDynamics,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    if !dynamics.linear_in_parameters() {
        return Err(Error::Capability {
            model: dynamics.name().to_string(),
            capability: "regression matrix extraction",
        });
    }
    let n = dynamics.dof();
    for (ctx, v) in [("q", q), ("q_dot", qd), ("regressor x", x), ("regressor y", y)] {
        check_dim(ctx, n, v.len())?;
    }
    let p = dynamics.num_params();
    let mut out = DMatrix::zeros(n, p);
    let mut basis = DVector::zeros(p);
    for k in 0..p {
        basis[k] = 1.0;
        let column = dynamics.mass_matrix(&basis, q) * x
            + dynamics.coriolis_matrix(&basis, q, qd) * y
            + dynamics.gravity(&basis, q);
        out.set_column(k, &column);
        basis[k] = 0.0;
    }
    Ok(out)
}

/// A plant instance: dynamics plus its true (hidden) parameters.
#[derive(Debug, Clone)]
pub struct PlantModel {
    dynamics: Arc<dyn ElDynamics>,
    theta: DVector<f64>,
}

impl PlantModel {
    pub fn new(dynamics: Arc<dyn ElDynamics>, theta: DVector<f64>) -> Result<Self> {
        check_dim("plant parameters", dynamics.num_params(), theta.len())?;
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "plant parameters",
            });
        }
        Ok(Self { dynamics, theta })
    }

    pub fn dynamics(&self) -> &Arc<dyn ElDynamics> {
        &self.dynamics
    }

    pub fn true_params(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn dof(&self) -> usize {
        self.dynamics.dof()
    }

    pub fn num_params(&self) -> usize {
        self.dynamics.num_params()
    }

    pub fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        self.dynamics.mass_matrix(&self.theta, q)
    }

    pub fn coriolis_matrix(&self, q: &DVector<f64>, qd: &DVector<f64>) -> DMatrix<f64> {
        self.dynamics.coriolis_matrix(&self.theta, q, qd)
    }

    pub fn gravity(&self, q: &DVector<f64>) -> DVector<f64> {
        self.dynamics.gravity(&self.theta, q)
    }

    /// `M q'' + C q' + G`.
    pub fn inverse_dynamics(&self, q: &DVector<f64>, qd: &DVector<f64>, qdd: &DVector<f64>) -> DVector<f64> {
        self.mass_matrix(q) * qdd + self.coriolis_matrix(q, qd) * qd + self.gravity(q)
    }

    /// `q'' = M^{-1} (tau - C q' - G)`.
    pub fn forward_dynamics(&self, q: &DVector<f64>, qd: &DVector<f64>, tau: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dof();
        check_dim("q", n, q.len())?;
        check_dim("q_dot", n, qd.len())?;
        check_dim("torque", n, tau.len())?;
        if q.iter().chain(qd.iter()).chain(tau.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "forward dynamics",
            });
        }
        let rhs = tau - self.coriolis_matrix(q, qd) * qd - self.gravity(q);
        let chol = self.mass_matrix(q).cholesky().ok_or(Error::Invalid {
            what: "inertia matrix",
            reason: "not positive definite at the current configuration".into(),
        })?;
        Ok(chol.solve(&rhs))
    }
}

/// Options shared by plant constructors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantOptions {
    pub gravity: f64,
}

impl Default for PlantOptions {
    fn default() -> Self {
        Self { gravity: 9.8 }
    }
}

pub type PlantConstructor = fn(&PlantOptions) -> Arc<dyn ElDynamics>;

/// Name -> constructor table used when loading scenarios.
#[derive(Debug, Clone)]
pub struct PlantRegistry {
    constructors: BTreeMap<String, PlantConstructor>,
}

impl Default for PlantRegistry {
    fn default() -> Self {
        let mut registry = Self {
            constructors: BTreeMap::new(),
        };
        registry.register(TwoLinkArm::NAME, |opts| Arc::new(TwoLinkArm::new(opts.gravity)));
        registry
    }
}

impl PlantRegistry {
    pub fn register(&mut self, name: &str, constructor: PlantConstructor) {
        self.constructors.insert(name.to_string(), constructor);
    }

    pub fn build(&self, name: &str, opts: &PlantOptions) -> Result<Arc<dyn ElDynamics>> {
        self.constructors
            .get(name)
            .map(|ctor| ctor(opts))
            .ok_or_else(|| Error::Invalid {
                what: "plant model",
                reason: format!(
                    "unknown model '{name}' (known: {})",
                    self.constructors.keys().cloned().collect::<Vec<_>>().join(", ")
                ),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.constructors.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug)]
    struct Pendulum;

    impl ElDynamics for Pendulum {
        fn name(&self) -> &str {
            "pendulum-with-offset"
        }
        fn dof(&self) -> usize {
            1
        }
        fn num_params(&self) -> usize {
            1
        }
        fn mass_matrix(&self, theta: &DVector<f64>, _q: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_element(1, 1, theta[0] + 1.0)
        }
        fn coriolis_matrix(&self, _: &DVector<f64>, _: &DVector<f64>, _: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::zeros(1, 1)
        }
        fn gravity(&self, _: &DVector<f64>, q: &DVector<f64>) -> DVector<f64> {
            DVector::from_element(1, q[0].sin())
        }
        fn linear_in_parameters(&self) -> bool {
            false
        }
    }

    #[test]
    fn non_linear_plant_has_no_regressor() {
        let z = DVector::zeros(1);
        assert!(matches!(
            regression_matrix(&Pendulum, &z, &z, &z, &z),
            Err(Error::Capability { .. })
        ));
    }

    #[test]
    fn registry_builds_and_rejects() {
        let mut registry = PlantRegistry::default();
        assert!(registry.build("two-link", &PlantOptions::default()).is_ok());
        assert!(registry.build("scara", &PlantOptions::default()).is_err());
        registry.register("pendulum", |_| Arc::new(Pendulum));
        assert_eq!(registry.names().collect::<Vec<_>>(), ["pendulum", "two-link"]);
    }

    #[test]
    fn forward_dynamics_rejects_non_finite() {
        let plant = PlantModel::new(Arc::new(Pendulum), DVector::from_element(1, 1.0)).unwrap();
        let bad = DVector::from_element(1, f64::NAN);
        let z = DVector::zeros(1);
        assert!(matches!(
            plant.forward_dynamics(&bad, &z, &z),
            Err(Error::NonFinite { .. })
        ));
        assert!(plant.forward_dynamics(&z, &z, &DVector::zeros(2)).is_err());
    }
}
