//! Weighted digraphs over the leader + follower node set, the piecewise-constant
//! switching signal that selects among them, and the joint-connectivity check.
//!
//! Node 0 is always the leader; followers are nodes `1..=N`. The weight matrix
//! is stored receiver-major: entry `(i, j)` is the weight `a_ij` of the edge
//! `j -> i`, i.e. how much node `i` listens to node `j`.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    weights: DMatrix<f64>,
}

impl WeightedDigraph {
    /// Builds a digraph from its adjacency matrix. Rejects negative, non-finite
    /// or self-loop weights.
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        check_dim("adjacency matrix (square)", weights.nrows(), weights.ncols())?;
        if weights.nrows() == 0 {
            return Err(Error::Invalid {
                what: "digraph",
                reason: "a digraph needs at least one node".into(),
            });
        }
        for i in 0..weights.nrows() {
            for j in 0..weights.ncols() {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::Invalid {
                        what: "edge weight",
                        reason: format!("a[{i}][{j}] = {w} must be finite and nonnegative"),
                    });
                }
                if i == j && w != 0.0 {
                    return Err(Error::Invalid {
                        what: "edge weight",
                        reason: format!("self-loop at node {i}"),
                    });
                }
            }
        }
        Ok(Self { weights })
    }

    pub fn empty(num_nodes: usize) -> Self {
        Self {
            weights: DMatrix::zeros(num_nodes, num_nodes),
        }
    }

    /// Builds a digraph from `(from, to, weight)` triples. Repeated edges keep
    /// the last weight.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut weights = DMatrix::zeros(num_nodes, num_nodes);
        for &(from, to, w) in edges {
            for index in [from, to] {
                if index >= num_nodes {
                    return Err(Error::NodeIndex {
                        index,
                        nodes: num_nodes,
                    });
                }
            }
            weights[(to, from)] = w;
        }
        Self::new(weights)
    }

    pub fn num_nodes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_followers(&self) -> usize {
        self.num_nodes() - 1
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Weight `a_ij` with which node `i` listens to node `j`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.weights[(to, from)] > 0.0
    }

    /// All edges as `(from, to, weight)`, ordered by receiver then sender.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.num_nodes();
        let mut out = Vec::new();
        for to in 0..n {
            for from in 0..n {
                let w = self.weights[(to, from)];
                if w > 0.0 {
                    out.push((from, to, w));
                }
            }
        }
        out
    }

    /// Laplacian `L = D - A`. With `follower_only`, node 0 and all of its edges
    /// are removed first, giving the `N x N` Laplacian of the follower subgraph.
    pub fn laplacian(&self, follower_only: bool) -> DMatrix<f64> {
        let offset = usize::from(follower_only);
        let n = self.num_nodes() - offset;
        let mut lap = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut degree = 0.0;
            for j in 0..n {
                if i != j {
                    let w = self.weights[(i + offset, j + offset)];
                    lap[(i, j)] = -w;
                    degree += w;
                }
            }
            lap[(i, i)] = degree;
        }
        lap
    }

    /// `H = L(follower subgraph) + diag(a_10, ..., a_N0)`.
    pub fn h_matrix(&self) -> DMatrix<f64> {
        let mut h = self.laplacian(true);
        for i in 0..h.nrows() {
            h[(i, i)] += self.weights[(i + 1, 0)];
        }
        h
    }

    /// Edge-set union. Weights of the result are the entrywise maximum.
    pub fn union<'a, I>(graphs: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a WeightedDigraph>,
    {
        let mut iter = graphs.into_iter();
        let first = iter.next().ok_or(Error::Invalid {
            what: "graph union",
            reason: "needs at least one graph".into(),
        })?;
        let mut weights = first.weights.clone();
        for g in iter {
            check_dim("graph union node count", weights.nrows(), g.num_nodes())?;
            weights.zip_apply(&g.weights, |a, b| *a = a.max(b));
        }
        Ok(Self { weights })
    }

    fn check_node(&self, index: usize) -> Result<()> {
        if index < self.num_nodes() {
            Ok(())
        } else {
            Err(Error::NodeIndex {
                index,
                nodes: self.num_nodes(),
            })
        }
    }

    /// Nodes reachable from `from` by a directed path (including `from`).
    pub fn reachable_set(&self, from: usize) -> Result<Vec<bool>> {
        self.check_node(from)?;
        let n = self.num_nodes();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(u) = queue.pop_front() {
            for (v, visited) in seen.iter_mut().enumerate() {
                if !*visited && self.weights[(v, u)] > 0.0 {
                    *visited = true;
                    queue.push_back(v);
                }
            }
        }
        Ok(seen)
    }

    pub fn is_reachable(&self, from: usize, to: usize) -> Result<bool> {
        self.check_node(to)?;
        Ok(self.reachable_set(from)?[to])
    }

    /// True when every follower is reachable from the leader node 0.
    pub fn leader_reaches_all(&self) -> bool {
        self.reachable_set(0)
            .map(|seen| seen.iter().all(|&s| s))
            .unwrap_or(false)
    }
}

/// One constant stretch of the switching signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub duration: f64,
    /// 1-based index into the network's graph list.
    pub graph: usize,
}

/// A maximal interval `[start, end)` on which one graph is active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub graph: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSignal {
    pieces: Vec<Piece>,
    repeat: bool,
    dwell_time: f64,
    offsets: Vec<f64>,
}

impl SwitchingSignal {
    pub fn new(pieces: Vec<Piece>, repeat: bool, dwell_time: f64) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Invalid {
                what: "switching signal",
                reason: "needs at least one piece".into(),
            });
        }
        if !(dwell_time.is_finite() && dwell_time > 0.0) {
            return Err(Error::Invalid {
                what: "dwell time",
                reason: format!("{dwell_time} must be positive"),
            });
        }
        let mut offsets = Vec::with_capacity(pieces.len() + 1);
        let mut acc = 0.0;
        offsets.push(acc);
        for (k, piece) in pieces.iter().enumerate() {
            if !piece.duration.is_finite() || piece.duration < dwell_time {
                return Err(Error::Invalid {
                    what: "piece duration",
                    reason: format!(
                        "piece {k} lasts {} s, shorter than the dwell time {dwell_time} s",
                        piece.duration
                    ),
                });
            }
            if piece.graph == 0 {
                return Err(Error::Invalid {
                    what: "graph index",
                    reason: "graph indices are 1-based".into(),
                });
            }
            acc += piece.duration;
            offsets.push(acc);
        }
        Ok(Self {
            pieces,
            repeat,
            dwell_time,
            offsets,
        })
    }

    /// A signal that holds one graph forever.
    pub fn constant(graph: usize, duration: f64) -> Result<Self> {
        Self::new(vec![Piece { duration, graph }], true, duration)
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn repeats(&self) -> bool {
        self.repeat
    }

    pub fn dwell_time(&self) -> f64 {
        self.dwell_time
    }

    pub fn period(&self) -> f64 {
        self.offsets[self.pieces.len()]
    }

    pub fn min_duration(&self) -> f64 {
        self.pieces.iter().map(|p| p.duration).fold(f64::INFINITY, f64::min)
    }

    fn exhausted(&self, t: f64) -> Error {
        Error::ScheduleExhausted { t, end: self.period() }
    }

    /// Locates `t` as `(cycle, piece)`. Boundaries are resolved to the later
    /// piece; a relative slack of 1e-12 absorbs rounding in accumulated times.
    fn locate(&self, t: f64) -> Result<(u64, usize)> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Invalid {
                what: "signal time",
                reason: format!("t = {t} must be finite and nonnegative"),
            });
        }
        let period = self.period();
        let slack = 1e-12 * (1.0 + t);
        let mut cycle = if self.repeat { (t / period).floor() as u64 } else { 0 };
        let mut rem = t - cycle as f64 * period;
        if rem + slack >= period {
            if self.repeat {
                cycle += 1;
                rem = (t - cycle as f64 * period).max(0.0);
            } else {
                return Err(self.exhausted(t));
            }
        }
        let piece = self.offsets[..self.pieces.len()]
            .iter()
            .rposition(|&o| o <= rem + slack)
            .unwrap_or(0);
        Ok((cycle, piece))
    }

    /// Index (1-based) of the graph active at time `t`; right-continuous.
    pub fn evaluate(&self, t: f64) -> Result<usize> {
        let (_, piece) = self.locate(t)?;
        Ok(self.pieces[piece].graph)
    }

    /// Consecutive constant segments starting at `t = 0`, clipped to `horizon`.
    pub fn segments(&self, horizon: f64) -> Result<Vec<Segment>> {
        if !self.repeat && horizon > self.period() * (1.0 + 1e-12) {
            return Err(self.exhausted(horizon));
        }
        let mut out = Vec::new();
        for seg in self.segment_iter() {
            if seg.start >= horizon {
                break;
            }
            let end = if seg.end >= horizon { horizon } else { seg.end };
            out.push(Segment { end, ..seg });
        }
        Ok(out)
    }

    /// Unclipped segments from `t = 0`; infinite for repeating signals.
    pub fn segment_iter(&self) -> impl Iterator<Item = Segment> + '_ {
        let n = self.pieces.len();
        let period = self.period();
        let cycles = if self.repeat { u64::MAX } else { 1 };
        (0..cycles).flat_map(move |c| {
            let base = c as f64 * period;
            (0..n).map(move |k| Segment {
                start: base + self.offsets[k],
                end: base + self.offsets[k + 1],
                graph: self.pieces[k].graph,
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingNetwork {
    graphs: Vec<WeightedDigraph>,
    signal: SwitchingSignal,
}

impl SwitchingNetwork {
    pub fn new(graphs: Vec<WeightedDigraph>, signal: SwitchingSignal) -> Result<Self> {
        let first = graphs.first().ok_or(Error::Invalid {
            what: "switching network",
            reason: "needs at least one graph".into(),
        })?;
        let nodes = first.num_nodes();
        for g in &graphs {
            check_dim("switching network node count", nodes, g.num_nodes())?;
        }
        for piece in signal.pieces() {
            if piece.graph > graphs.len() {
                return Err(Error::Invalid {
                    what: "graph index",
                    reason: format!(
                        "signal references graph {} but only {} graphs exist",
                        piece.graph,
                        graphs.len()
                    ),
                });
            }
        }
        Ok(Self { graphs, signal })
    }

    pub fn graphs(&self) -> &[WeightedDigraph] {
        &self.graphs
    }

    pub fn signal(&self) -> &SwitchingSignal {
        &self.signal
    }

    pub fn num_nodes(&self) -> usize {
        self.graphs[0].num_nodes()
    }

    pub fn num_followers(&self) -> usize {
        self.num_nodes() - 1
    }

    /// Graph by 1-based index.
    pub fn graph(&self, index: usize) -> &WeightedDigraph {
        &self.graphs[index - 1]
    }

    pub fn active_graph(&self, t: f64) -> Result<&WeightedDigraph> {
        Ok(self.graph(self.signal.evaluate(t)?))
    }

    /// Joint-connectivity audit over `[0, horizon)`.
    ///
    /// Windows start at switching instants. Each window absorbs consecutive
    /// segments while its length stays within `eps`, stopping as soon as the
    /// union graph lets node 0 reach every follower; the next window starts at
    /// the following instant. A window that exhausts its budget without
    /// connecting is reported as `[start, start + eps)`.
    pub fn check_jointly_connected(&self, horizon: f64, eps: f64) -> JointConnectivityReport {
        let mut report = JointConnectivityReport {
            eps,
            horizon,
            passed: true,
            windows_checked: 0,
            first_failure: None,
        };
        if !(eps > 0.0 && horizon > 0.0) {
            report.passed = false;
            report.first_failure = Some(Window {
                start: 0.0,
                end: eps.max(0.0),
            });
            return report;
        }
        let horizon = if self.signal.repeats() {
            horizon
        } else {
            horizon.min(self.signal.period())
        };
        let slack = 1e-12 * (1.0 + horizon);
        let mut segments = self.signal.segment_iter().peekable();
        while let Some(first) = segments.next() {
            if first.start >= horizon - slack {
                break;
            }
            report.windows_checked += 1;
            let start = first.start;
            let mut fits = first.end - start <= eps + slack;
            let mut union = self.graph(first.graph).clone();
            let mut end = first.end;
            while fits && !union.leader_reaches_all() {
                match segments.peek() {
                    Some(next) if next.end - start <= eps + slack => {
                        union = WeightedDigraph::union([&union, self.graph(next.graph)])
                            .expect("network graphs share a node count");
                        end = next.end;
                        segments.next();
                    }
                    _ => fits = false,
                }
            }
            if !fits {
                report.passed = false;
                report.first_failure = Some(Window {
                    start,
                    end: start + eps,
                });
                return report;
            }
            log::trace!("connected window [{start}, {end})");
        }
        report
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointConnectivityReport {
    pub eps: f64,
    pub horizon: f64,
    pub passed: bool,
    pub windows_checked: usize,
    pub first_failure: Option<Window>,
}

impl std::fmt::Display for JointConnectivityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.passed, self.first_failure) {
            (true, _) => write!(
                f,
                "jointly connected: PASS ({} windows within eps = {} over [0, {}))",
                self.windows_checked, self.eps, self.horizon
            ),
            (false, Some(w)) => write!(
                f,
                "jointly connected: FAIL (window [{}, {}) never lets node 0 reach every follower)",
                w.start, w.end
            ),
            (false, None) => write!(f, "jointly connected: FAIL"),
        }
    }
}
