//! TOML scenario documents.
//!
//! Every section is optional except `[network]`, `[leader]`, `[plants]` and
//! `[gains]`; unknown keys anywhere are rejected. Matrices are arrays of rows.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use toml::Value;

use elc::analysis::AnalysisConfig;
use elc::controller::{ControllerGains, ControllerState};
use elc::graph::{Piece, SwitchingNetwork, SwitchingSignal, WeightedDigraph};
use elc::integrator::{IntegratorConfig, Method};
use elc::leader::{BoundednessCheck, LeaderSystem};
use elc::observer::{ObserverGains, ObserverState};
use elc::plant::{PlantModel, PlantOptions, PlantRegistry};
use elc::scenario::{random_motion, InitialConditions, Scenario};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub message: String,
    /// 1-based `(line, column)` in the source text, when known.
    pub location: Option<(usize, usize)>,
}

impl ConfigError {
    fn msg(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            location: None,
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.location {
            Some((line, col)) => write!(f, "line {line}, column {col}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub network: NetworkSection,
    pub leader: LeaderSection,
    pub plants: PlantsSection,
    pub gains: GainsSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    /// Node count including the leader (node 0).
    pub nodes: usize,
    /// One edge list per graph; each edge is `[from, to, weight]`.
    pub graphs: Vec<Vec<(usize, usize, f64)>>,
    /// `[duration, graph]` pairs; graph indices are 1-based.
    pub schedule: Vec<(f64, usize)>,
    #[serde(default = "yes")]
    pub repeat: bool,
    /// Defaults to the shortest piece.
    #[serde(default)]
    pub dwell_time: Option<f64>,
    /// Window length for the joint-connectivity audit.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderSection {
    pub s: Rows,
    pub c: Rows,
    pub v0: Vec<f64>,
    #[serde(default)]
    pub allow_unstable: bool,
    #[serde(default = "default_bound_horizon")]
    pub boundedness_horizon: f64,
    #[serde(default = "default_bound_multiplier")]
    pub boundedness_multiplier: f64,
    #[serde(default = "default_bound_samples")]
    pub boundedness_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantsSection {
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    /// True parameters, one row per follower.
    pub theta: Rows,
}

/// `k` or `[[..]]` (applied to every follower) or one matrix per follower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Scalar(f64),
    Matrix(Rows),
    PerFollower(Vec<Rows>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    pub mu1: f64,
    pub mu2: f64,
    pub alpha: f64,
    pub k: GainSpec,
    pub lambda: GainSpec,
    #[serde(default)]
    pub torque_limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// Seed for `q` and `qd` when they are not listed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub q: Option<Rows>,
    #[serde(default)]
    pub qd: Option<Rows>,
    /// One `m x m` matrix per follower; zero when omitted.
    #[serde(default)]
    pub s_est: Option<Vec<Rows>>,
    #[serde(default)]
    pub eta: Option<Rows>,
    #[serde(default)]
    pub theta_hat: Option<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub h: f64,
    pub method: Method,
    pub horizon: f64,
    pub record_every: usize,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let d = IntegratorConfig::default();
        Self {
            h: d.h,
            method: d.method,
            horizon: d.horizon,
            record_every: d.record_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub tracking_tol: f64,
    pub observer_tol: f64,
    pub lyapunov_tol: f64,
    pub fit_window: (f64, f64),
    pub min_r_squared: f64,
    pub check_tracking: bool,
    pub check_observer: bool,
    pub check_lyapunov: bool,
    pub check_observer_rate: bool,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisConfig::default().into()
    }
}

impl From<AnalysisConfig> for AnalysisSection {
    fn from(a: AnalysisConfig) -> Self {
        Self {
            tracking_tol: a.tracking_tol,
            observer_tol: a.observer_tol,
            lyapunov_tol: a.lyapunov_tol,
            fit_window: a.fit_window,
            min_r_squared: a.min_r_squared,
            check_tracking: a.check_tracking,
            check_observer: a.check_observer,
            check_lyapunov: a.check_lyapunov,
            check_observer_rate: a.check_observer_rate,
        }
    }
}

impl From<&AnalysisSection> for AnalysisConfig {
    fn from(a: &AnalysisSection) -> Self {
        Self {
            tracking_tol: a.tracking_tol,
            observer_tol: a.observer_tol,
            lyapunov_tol: a.lyapunov_tol,
            fit_window: a.fit_window,
            min_r_squared: a.min_r_squared,
            check_tracking: a.check_tracking,
            check_observer: a.check_observer,
            check_lyapunov: a.check_lyapunov,
            check_observer_rate: a.check_observer_rate,
        }
    }
}

fn yes() -> bool {
    true
}
fn default_epsilon() -> f64 {
    2.0
}
fn default_bound_horizon() -> f64 {
    BoundednessCheck::default().horizon
}
fn default_bound_multiplier() -> f64 {
    BoundednessCheck::default().bound_multiplier
}
fn default_bound_samples() -> usize {
    BoundednessCheck::default().samples
}
fn default_model() -> String {
    "two-link".into()
}
fn default_gravity() -> f64 {
    PlantOptions::default().gravity
}

/// 1-based line and column of byte `offset` in `source`.
pub fn line_column(source: &str, offset: usize) -> (usize, usize) {
    let before = &source[..offset.min(source.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, col)
}

fn located(source: &str, e: toml::de::Error) -> ConfigError {
    ConfigError {
        message: e.message().to_string(),
        location: e.span().map(|s| line_column(source, s.start)),
    }
}

/// Parses the raw document tree, without schema checks.
pub fn parse_value(source: &str) -> Result<Value> {
    source
        .parse::<toml::Table>()
        .map(Value::Table)
        .map_err(|e| located(source, e))
}

impl ConfigDocument {
    pub fn parse(source: &str) -> Result<Self> {
        toml::from_str(source).map_err(|e| located(source, e))
    }

    pub fn from_value(value: Value) -> Result<Self> {
        value
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::msg(e.message()))
    }

    pub fn to_value(&self) -> Value {
        Value::try_from(self).expect("document serializes")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("document serializes")
    }

    /// Reads a file, applies `key=value` overrides, and checks the schema.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let source = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::msg(format!("cannot read {}: {e}", path.display())))?;
        if overrides.is_empty() {
            return Self::parse(&source);
        }
        let mut value = parse_value(&source)?;
        apply_overrides(&mut value, overrides)?;
        Self::from_value(value)
    }

    pub fn from_scenario(sc: &Scenario) -> Self {
        let net = &sc.network;
        let signal = net.signal();
        let rows = |m: &DMatrix<f64>| -> Rows { m.row_iter().map(|r| r.iter().copied().collect()).collect() };
        let vec_rows = |vs: &[DVector<f64>]| -> Rows { vs.iter().map(|v| v.iter().copied().collect()).collect() };
        let per_follower = |ms: &[DMatrix<f64>]| GainSpec::PerFollower(ms.iter().map(rows).collect());
        let theta: Vec<DVector<f64>> = sc.plants.iter().map(|p| p.true_params().clone()).collect();
        Self {
            network: NetworkSection {
                nodes: net.num_nodes(),
                graphs: net.graphs().iter().map(WeightedDigraph::edges).collect(),
                schedule: signal.pieces().iter().map(|p| (p.duration, p.graph)).collect(),
                repeat: signal.repeats(),
                dwell_time: Some(signal.dwell_time()),
                epsilon: sc.epsilon,
            },
            leader: LeaderSection {
                s: rows(sc.leader.system_matrix()),
                c: rows(sc.leader.output_matrix()),
                v0: sc.leader.initial_state().iter().copied().collect(),
                allow_unstable: sc.allow_unstable_leader,
                boundedness_horizon: sc.boundedness.horizon,
                boundedness_multiplier: sc.boundedness.bound_multiplier,
                boundedness_samples: sc.boundedness.samples,
            },
            plants: PlantsSection {
                model: sc
                    .plants
                    .first()
                    .map_or_else(default_model, |p| p.dynamics().name().to_string()),
                gravity: sc.plant_options.gravity,
                theta: vec_rows(&theta),
            },
            gains: GainsSection {
                mu1: sc.observer_gains.mu1,
                mu2: sc.observer_gains.mu2,
                alpha: sc.controller_gains.alpha,
                k: per_follower(&sc.controller_gains.k),
                lambda: per_follower(&sc.controller_gains.lambda),
                torque_limit: sc.torque_limit,
            },
            initial: InitialSection {
                seed: Some(sc.seed),
                q: Some(vec_rows(&sc.initial.q)),
                qd: Some(vec_rows(&sc.initial.qd)),
                s_est: Some(sc.initial.observer.s_est.iter().map(rows).collect()),
                eta: Some(vec_rows(&sc.initial.observer.eta)),
                theta_hat: Some(vec_rows(&sc.initial.controller.theta_hat)),
            },
            integrator: IntegratorSection {
                h: sc.integrator.h,
                method: sc.integrator.method,
                horizon: sc.integrator.horizon,
                record_every: sc.integrator.record_every,
            },
            analysis: sc.analysis.into(),
        }
    }

    /// Builds the scenario. Structural problems (ragged matrices, bad graph
    /// indices, unknown plant model) fail here; gain signs and leader
    /// assumptions are left for [`Scenario::validate`].
    pub fn to_scenario(&self) -> Result<Scenario> {
        fn wrap(what: &'static str) -> impl Fn(elc::Error) -> ConfigError {
            move |e| ConfigError::msg(format!("{what}: {e}"))
        }

        let net = &self.network;
        let graphs = net
            .graphs
            .iter()
            .map(|edges| WeightedDigraph::from_edges(net.nodes, edges))
            .collect::<elc::Result<Vec<_>>>()
            .map_err(wrap("network.graphs"))?;
        let pieces: Vec<Piece> = net
            .schedule
            .iter()
            .map(|&(duration, graph)| Piece { duration, graph })
            .collect();
        let dwell = net
            .dwell_time
            .unwrap_or_else(|| pieces.iter().map(|p| p.duration).fold(f64::INFINITY, f64::min));
        let signal = SwitchingSignal::new(pieces, net.repeat, dwell).map_err(wrap("network.schedule"))?;
        let network = SwitchingNetwork::new(graphs, signal).map_err(wrap("network"))?;

        let l = &self.leader;
        let leader = LeaderSystem::new(
            matrix("leader.s", &l.s)?,
            matrix("leader.c", &l.c)?,
            DVector::from_column_slice(&l.v0),
        )
        .map_err(wrap("leader"))?;
        let (n, m) = (leader.output_dim(), leader.state_dim());

        let plant_options = PlantOptions {
            gravity: self.plants.gravity,
        };
        let dynamics = PlantRegistry::default()
            .build(&self.plants.model, &plant_options)
            .map_err(wrap("plants.model"))?;
        let plants = self
            .plants
            .theta
            .iter()
            .map(|t| PlantModel::new(dynamics.clone(), DVector::from_column_slice(t)))
            .collect::<elc::Result<Vec<_>>>()
            .map_err(wrap("plants.theta"))?;
        let followers = plants.len();
        if followers != network.num_followers() {
            return Err(ConfigError::msg(format!(
                "plants.theta lists {followers} followers but the network has {}",
                network.num_followers()
            )));
        }
        let p = dynamics.num_params();

        let g = &self.gains;
        let controller_gains = ControllerGains {
            alpha: g.alpha,
            k: expand_gain("gains.k", &g.k, followers, n)?,
            lambda: expand_gain("gains.lambda", &g.lambda, followers, p)?,
        };
        let observer_gains = ObserverGains { mu1: g.mu1, mu2: g.mu2 };

        let init = &self.initial;
        let seed = init.seed.unwrap_or(elc::scenario::DEFAULT_SEED);
        let (rq, rqd) = random_motion(followers, n, seed);
        let pick = |key: &str, given: &Option<Rows>, fallback: Vec<DVector<f64>>, len: usize| match given {
            Some(rows) => vectors(key, rows, followers, len),
            None => Ok(fallback),
        };
        let initial = InitialConditions {
            q: pick("initial.q", &init.q, rq, n)?,
            qd: pick("initial.qd", &init.qd, rqd, n)?,
            observer: ObserverState {
                s_est: match &init.s_est {
                    Some(ms) => {
                        check_count("initial.s_est", ms.len(), followers)?;
                        ms.iter().map(|r| matrix("initial.s_est", r)).collect::<Result<_>>()?
                    }
                    None => vec![DMatrix::zeros(m, m); followers],
                },
                eta: pick("initial.eta", &init.eta, vec![DVector::zeros(m); followers], m)?,
            },
            controller: ControllerState {
                theta_hat: pick(
                    "initial.theta_hat",
                    &init.theta_hat,
                    vec![DVector::zeros(p); followers],
                    p,
                )?,
            },
        };

        let it = &self.integrator;
        Ok(Scenario {
            network,
            epsilon: net.epsilon,
            leader,
            allow_unstable_leader: l.allow_unstable,
            boundedness: BoundednessCheck {
                horizon: l.boundedness_horizon,
                bound_multiplier: l.boundedness_multiplier,
                samples: l.boundedness_samples,
            },
            plant_options,
            plants,
            observer_gains,
            controller_gains,
            initial,
            integrator: IntegratorConfig {
                h: it.h,
                method: it.method,
                horizon: it.horizon,
                record_every: it.record_every,
            },
            analysis: (&self.analysis).into(),
            torque_limit: g.torque_limit,
            seed,
        })
    }
}

fn check_count(key: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(ConfigError::msg(format!("{key}: expected {want} entries, found {got}")))
    }
}

fn matrix(key: &str, rows: &Rows) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(ConfigError::msg(format!("{key}: empty matrix")));
    }
    if let Some(r) = rows.iter().position(|r| r.len() != ncols) {
        return Err(ConfigError::msg(format!(
            "{key}: row {} has {} entries, row 1 has {ncols}",
            r + 1,
            rows[r].len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn vectors(key: &str, rows: &Rows, count: usize, len: usize) -> Result<Vec<DVector<f64>>> {
    check_count(key, rows.len(), count)?;
    rows.iter()
        .map(|r| {
            check_count(key, r.len(), len)?;
            Ok(DVector::from_column_slice(r))
        })
        .collect()
}

fn expand_gain(key: &str, spec: &GainSpec, followers: usize, dim: usize) -> Result<Vec<DMatrix<f64>>> {
    let shaped = |m: DMatrix<f64>| {
        if m.shape() == (dim, dim) {
            Ok(m)
        } else {
            Err(ConfigError::msg(format!(
                "{key}: expected {dim}x{dim}, found {}x{}",
                m.nrows(),
                m.ncols()
            )))
        }
    };
    match spec {
        GainSpec::Scalar(k) => Ok(vec![DMatrix::identity(dim, dim) * *k; followers]),
        GainSpec::Matrix(rows) => Ok(vec![shaped(matrix(key, rows)?)?; followers]),
        GainSpec::PerFollower(ms) => {
            check_count(key, ms.len(), followers)?;
            ms.iter().map(|r| shaped(matrix(key, r)?)).collect()
        }
    }
}

/// Applies `a.b.c=value` assignments. The value is read as a TOML literal,
/// falling back to a bare string.
pub fn apply_overrides(doc: &mut Value, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (path, raw) = item
            .split_once('=')
            .ok_or_else(|| ConfigError::msg(format!("override `{item}` is not key=value")))?;
        let path: Vec<&str> = path.trim().split('.').collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(ConfigError::msg(format!("override `{item}` has an empty key segment")));
        }
        let value = parse_literal(raw.trim());
        let mut node = &mut *doc;
        for (depth, key) in path.iter().enumerate() {
            let table = node.as_table_mut().ok_or_else(|| {
                ConfigError::msg(format!(
                    "override `{item}`: `{}` is not a table",
                    path[..depth].join(".")
                ))
            })?;
            if depth + 1 == path.len() {
                table.insert((*key).to_string(), value.clone());
                break;
            }
            node = table
                .entry((*key).to_string())
                .or_insert_with(|| Value::Table(toml::Table::new()));
        }
    }
    Ok(())
}

fn parse_literal(raw: &str) -> Value {
    format!("x = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("x"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}
