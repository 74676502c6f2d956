//! Communication graph and gossip mixing matrix.
//!
//! The network is a fixed undirected graph over agents `1..=n`. Gossip
//! weights are doubly stochastic, symmetric, and respect the graph's
//! sparsity; the cached spectral quantity `beta = max{|lambda_2|, |lambda_n|}`
//! governs the consensus contraction rate and must satisfy `beta < 1`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use thiserror::Error;

use crate::rng::{derive_stream, tag};

/// Row/column stochasticity tolerance for weight validation.
pub const STOCHASTICITY_TOL: f64 = 1e-12;
/// Tolerance on the leading eigenvalue check `lambda_1 = 1`.
pub const SPECTRAL_TOL: f64 = 1e-10;
/// Connected-draw retry budget for random graphs.
pub const RANDOM_GRAPH_RETRIES: usize = 100;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid edge ({i}, {j}): {reason}")]
    InvalidEdge { i: usize, j: usize, reason: String },
    #[error("graph is not connected")]
    NotConnected,
    #[error("no connected draw within {attempts} attempts (n={n}, p={p})")]
    DisconnectedAfterRetries { attempts: usize, n: usize, p: f64 },
    #[error("mixing matrix violates the spectral assumption: beta = {beta} >= 1")]
    AssumptionViolated { beta: f64 },
    #[error("invalid mixing weights: {0}")]
    InvalidWeights(String),
    #[error("bad graph text format: {0}")]
    BadFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fixed undirected graph over agents `1..=n_agents`.
///
/// Edges are unordered pairs with 1-based endpoints, no self-loops, no
/// duplicates. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n_agents: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    /// Builds a validated graph. Endpoints are 1-based; self-loops and
    /// duplicate edges (in either orientation) are rejected.
    pub fn new(n_agents: usize, edge_list: &[(usize, usize)]) -> Result<Graph, NetworkError> {
        if n_agents < 1 {
            return Err(NetworkError::InvalidEdge {
                i: 0,
                j: 0,
                reason: "graph needs at least one agent".into(),
            });
        }
        let mut edges = BTreeSet::new();
        for &(i, j) in edge_list {
            if i < 1 || i > n_agents || j < 1 || j > n_agents {
                return Err(NetworkError::InvalidEdge {
                    i,
                    j,
                    reason: format!("endpoint out of range 1..={n_agents}"),
                });
            }
            if i == j {
                return Err(NetworkError::InvalidEdge { i, j, reason: "self-loop".into() });
            }
            let key = (i.min(j), i.max(j));
            if !edges.insert(key) {
                return Err(NetworkError::InvalidEdge { i, j, reason: "duplicate edge".into() });
            }
        }
        Ok(Graph { n_agents, edges })
    }

    /// Erdos-Renyi draw: each unordered pair is an edge with probability
    /// `edge_probability`, deterministically from `seed`. Redraws (up to
    /// [`RANDOM_GRAPH_RETRIES`] times) until the result is connected.
    pub fn random(
        n_agents: usize,
        edge_probability: f64,
        seed: u64,
    ) -> Result<Graph, NetworkError> {
        if !(0.0..=1.0).contains(&edge_probability) {
            return Err(NetworkError::InvalidEdge {
                i: 0,
                j: 0,
                reason: format!("edge probability {edge_probability} outside [0, 1]"),
            });
        }
        let mut rng = derive_stream(seed, &[tag::GRAPH]);
        for _ in 0..RANDOM_GRAPH_RETRIES {
            let mut edge_list = Vec::new();
            for i in 1..=n_agents {
                for j in (i + 1)..=n_agents {
                    if rng.random::<f64>() < edge_probability {
                        edge_list.push((i, j));
                    }
                }
            }
            let graph = Graph::new(n_agents, &edge_list)?;
            if graph.is_connected() {
                return Ok(graph);
            }
        }
        Err(NetworkError::DisconnectedAfterRetries {
            attempts: RANDOM_GRAPH_RETRIES,
            n: n_agents,
            p: edge_probability,
        })
    }

    /// Path graph `1 - 2 - ... - n`.
    pub fn path(n_agents: usize) -> Result<Graph, NetworkError> {
        let edges: Vec<_> = (1..n_agents).map(|i| (i, i + 1)).collect();
        Graph::new(n_agents, &edges)
    }

    /// Complete graph on `n_agents` agents.
    pub fn complete(n_agents: usize) -> Result<Graph, NetworkError> {
        let mut edges = Vec::new();
        for i in 1..=n_agents {
            for j in (i + 1)..=n_agents {
                edges.push((i, j));
            }
        }
        Graph::new(n_agents, &edges)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges as sorted `(i, j)` pairs with `i < j`, 1-based.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn contains_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.edges.contains(&(i.min(j), i.max(j)))
    }

    /// Degree of agent `i` (1-based).
    pub fn degree(&self, i: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == i || b == i).count()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n_agents;
        if n == 1 {
            return true;
        }
        let mut adjacency = vec![Vec::new(); n + 1];
        for &(i, j) in &self.edges {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        let mut seen = vec![false; n + 1];
        let mut stack = vec![1usize];
        seen[1] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == n
    }

    /// Plain-text form: `n m` on the first line, then one `i j` line per edge.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.n_agents, self.edges.len());
        for &(i, j) in &self.edges {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    /// Parses the plain-text format; weight rows, when present, are returned
    /// alongside the graph.
    pub fn from_text(text: &str) -> Result<(Graph, Option<DMatrix<f64>>), NetworkError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| NetworkError::BadFormat("empty input".into()))?;
        let mut parts = header.split_whitespace();
        let n: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| NetworkError::BadFormat("expected `n m` header".into()))?;
        let m: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| NetworkError::BadFormat("expected `n m` header".into()))?;
        let mut edge_list = Vec::with_capacity(m);
        for _ in 0..m {
            let line = lines.next().ok_or_else(|| NetworkError::BadFormat("missing edge line".into()))?;
            let mut it = line.split_whitespace();
            let i: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| NetworkError::BadFormat(format!("bad edge line: {line}")))?;
            let j: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| NetworkError::BadFormat(format!("bad edge line: {line}")))?;
            edge_list.push((i, j));
        }
        let graph = Graph::new(n, &edge_list)?;
        let rest: Vec<&str> = lines.collect();
        if rest.is_empty() {
            return Ok((graph, None));
        }
        if rest.len() != n {
            return Err(NetworkError::BadFormat(format!(
                "expected {n} weight rows, found {}",
                rest.len()
            )));
        }
        let mut weights = DMatrix::zeros(n, n);
        for (r, line) in rest.iter().enumerate() {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| NetworkError::BadFormat(format!("bad weight row {}: {e}", r + 1)))?;
            if row.len() != n {
                return Err(NetworkError::BadFormat(format!(
                    "weight row {} has {} entries, expected {n}",
                    r + 1,
                    row.len()
                )));
            }
            for (c, v) in row.into_iter().enumerate() {
                weights[(r, c)] = v;
            }
        }
        Ok((graph, Some(weights)))
    }
}

/// Spectral quantity `beta = max{|lambda_2|, |lambda_n|}` of a symmetric
/// doubly stochastic matrix, with eigenvalues sorted nonincreasing.
///
/// Validates symmetry and stochasticity, asserts `lambda_1 = 1` within
/// [`SPECTRAL_TOL`], and signals [`NetworkError::AssumptionViolated`]
/// (carrying the computed value) when `beta >= 1`, leaving the caller free
/// to proceed.
pub fn spectral_beta(weights: &DMatrix<f64>) -> Result<f64, NetworkError> {
    let n = weights.nrows();
    if n == 0 || weights.ncols() != n {
        return Err(NetworkError::InvalidWeights("matrix must be square and nonempty".into()));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (weights[(i, j)] - weights[(j, i)]).abs() > STOCHASTICITY_TOL {
                return Err(NetworkError::InvalidWeights(format!(
                    "not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    for i in 0..n {
        let row: f64 = weights.row(i).iter().sum();
        let col: f64 = weights.column(i).iter().sum();
        if (row - 1.0).abs() > STOCHASTICITY_TOL || (col - 1.0).abs() > STOCHASTICITY_TOL {
            return Err(NetworkError::InvalidWeights(format!(
                "row/column {i} sums ({row}, {col}) deviate from 1"
            )));
        }
    }
    let eig = SymmetricEigen::new(weights.clone());
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if (values[0] - 1.0).abs() > SPECTRAL_TOL {
        return Err(NetworkError::InvalidWeights(format!(
            "leading eigenvalue {} deviates from 1",
            values[0]
        )));
    }
    let beta = if n == 1 {
        0.0
    } else {
        values[1].abs().max(values[n - 1].abs())
    };
    if beta >= 1.0 {
        return Err(NetworkError::AssumptionViolated { beta });
    }
    Ok(beta)
}

/// Weight construction scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MixingScheme {
    /// Metropolis-Hastings weights `w_ij = 1 / (1 + max(deg_i, deg_j))`.
    #[default]
    Metropolis,
    /// `(I + W_metropolis) / 2`; keeps all eigenvalues nonnegative.
    LazyMetropolis,
}

/// Validated doubly stochastic gossip weights with cached `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    weights: DMatrix<f64>,
    beta: f64,
}

impl MixingMatrix {
    /// Wraps explicit weights after validating every type invariant against
    /// the graph: nonnegativity, graph-respecting sparsity, symmetry, double
    /// stochasticity, and `beta < 1`.
    pub fn from_weights(graph: &Graph, weights: DMatrix<f64>) -> Result<MixingMatrix, NetworkError> {
        let n = graph.n_agents();
        if weights.nrows() != n || weights.ncols() != n {
            return Err(NetworkError::InvalidWeights(format!(
                "weights are {}x{}, graph has {n} agents",
                weights.nrows(),
                weights.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let w = weights[(i, j)];
                if w < 0.0 {
                    return Err(NetworkError::InvalidWeights(format!(
                        "negative weight at ({i}, {j})"
                    )));
                }
                if i != j && w > 0.0 && !graph.contains_edge(i + 1, j + 1) {
                    return Err(NetworkError::InvalidWeights(format!(
                        "weight at ({i}, {j}) has no supporting edge"
                    )));
                }
            }
        }
        let beta = spectral_beta(&weights)?;
        Ok(MixingMatrix { weights, beta })
    }

    pub fn n_agents(&self) -> usize {
        self.weights.nrows()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Applies `(W (x) I)` to stacked agent vectors: output row `i` is
    /// `sum_j w_ij x_j`, accumulated in ascending `j` for reproducibility.
    pub fn mix(&self, stacked: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let n = self.n_agents();
        assert_eq!(stacked.len(), n, "stacked vector count must match agents");
        let dim = stacked[0].len();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc = DVector::zeros(dim);
            for (j, x) in stacked.iter().enumerate() {
                let w = self.weights[(i, j)];
                if w != 0.0 {
                    acc.axpy(w, x, 1.0);
                }
            }
            out.push(acc);
        }
        out
    }

    /// Graph + weights in the plain-text exchange format.
    pub fn to_text(&self, graph: &Graph) -> String {
        let mut out = graph.to_text();
        let n = self.n_agents();
        for i in 0..n {
            let row: Vec<String> =
                (0..n).map(|j| format!("{:.16e}", self.weights[(i, j)])).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }
}

/// Metropolis-Hastings weights for a connected graph:
/// `w_ij = 1 / (1 + max(deg_i, deg_j))` on edges, diagonal absorbing the
/// remainder. Always doubly stochastic and symmetric, with strictly positive
/// self-weights, hence `beta < 1` on connected graphs.
pub fn metropolis_weights(graph: &Graph) -> Result<MixingMatrix, NetworkError> {
    if !graph.is_connected() {
        return Err(NetworkError::NotConnected);
    }
    let n = graph.n_agents();
    let degrees: Vec<usize> = (1..=n).map(|i| graph.degree(i)).collect();
    let mut weights = DMatrix::zeros(n, n);
    for (i, j) in graph.edges() {
        let w = 1.0 / (1.0 + degrees[i - 1].max(degrees[j - 1]) as f64);
        weights[(i - 1, j - 1)] = w;
        weights[(j - 1, i - 1)] = w;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| weights[(i, j)]).sum();
        weights[(i, i)] = 1.0 - off;
    }
    MixingMatrix::from_weights(graph, weights)
}

/// Lazy variant `(I + W) / 2` of the Metropolis weights; all eigenvalues
/// nonnegative, so `beta = lambda_2`.
pub fn lazy_metropolis_weights(graph: &Graph) -> Result<MixingMatrix, NetworkError> {
    let base = metropolis_weights(graph)?;
    let n = base.n_agents();
    let mut weights = base.weights().map(|w| 0.5 * w);
    for i in 0..n {
        weights[(i, i)] += 0.5;
    }
    MixingMatrix::from_weights(graph, weights)
}

/// Builds weights for a graph under the chosen scheme.
pub fn build_mixing(graph: &Graph, scheme: MixingScheme) -> Result<MixingMatrix, NetworkError> {
    match scheme {
        MixingScheme::Metropolis => metropolis_weights(graph),
        MixingScheme::LazyMetropolis => lazy_metropolis_weights(graph),
    }
}

/// Agent-average of stacked vectors, summed in ascending agent order.
pub fn agent_average(stacked: &[DVector<f64>]) -> DVector<f64> {
    assert!(!stacked.is_empty());
    let mut acc = DVector::zeros(stacked[0].len());
    for x in stacked {
        acc += x;
    }
    acc / stacked.len() as f64
}

/// Stacked consensus residual `||x - 1 (x) x_bar||` (Frobenius over agents).
pub fn consensus_residual(stacked: &[DVector<f64>]) -> f64 {
    let mean = agent_average(stacked);
    stacked.iter().map(|x| (x - &mean).norm_squared()).sum::<f64>().sqrt()
}
