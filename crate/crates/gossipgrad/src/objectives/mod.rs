//! Per-agent nonsmooth objectives in max-of-smooth form.
//!
//! An agent objective is a sum of *terms*, each the pointwise maximum of a
//! family of smooth branches. Explicit small maxima carry their components
//! as closures; ReLU-network sample losses index their (exponentially many)
//! smooth branches implicitly by activation pattern. Both expose the same
//! branch interface, which is what the solver, oracle, and diagnostics
//! consume: values, active branches within a tolerance band, Clarke
//! subgradient selections, and branch gradients re-evaluated at other points.

pub mod catalog;
mod relu;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::numerics::{central_diff_gradient, min_norm_in_hull, relative_error};
pub use relu::ReluSampleTerm;

/// Hard cap on enumerated active branches per term; beyond this the
/// enumeration is truncated and flagged.
pub const MAX_ACTIVE_ENUMERATION: usize = 64;

/// Cap on exact hull enumeration inside [`stationarity_measure`]; larger
/// active-set products fall back to the convex-average element.
pub const STATIONARITY_COMBO_CAP: usize = 16;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("dimension mismatch: objective expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown catalog problem `{0}`")]
    UnknownProblem(String),
    #[error("bad catalog parameters: {0}")]
    BadParams(String),
}

/// Tolerance band deciding which branches count as active at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActiveTolerance {
    /// Fixed band.
    Absolute(f64),
    /// Band `c * (1 + |f(x)|)`; exact floating-point ties are rare, a
    /// relative band makes kink behavior reproducible.
    Relative(f64),
}

impl ActiveTolerance {
    pub fn band(&self, value: f64) -> f64 {
        match *self {
            ActiveTolerance::Absolute(t) => t,
            ActiveTolerance::Relative(c) => c * (1.0 + value.abs()),
        }
    }
}

impl Default for ActiveTolerance {
    fn default() -> Self {
        ActiveTolerance::Relative(1e-9)
    }
}

pub type ValueFn = Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type GradientFn = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// One smooth branch: value, gradient, and a bound on the gradient's
/// Lipschitz constant.
pub struct SmoothComponent {
    value: ValueFn,
    gradient: GradientFn,
    lipschitz_grad_bound: f64,
}

impl SmoothComponent {
    pub fn new(value: ValueFn, gradient: GradientFn, lipschitz_grad_bound: f64) -> Self {
        assert!(lipschitz_grad_bound >= 0.0);
        SmoothComponent { value, gradient, lipschitz_grad_bound }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(x)
    }

    pub fn lipschitz_grad_bound(&self) -> f64 {
        self.lipschitz_grad_bound
    }

    /// Relative error between the analytic gradient and central finite
    /// differences at `x`.
    pub fn gradient_check_error(&self, x: &DVector<f64>) -> f64 {
        let fd = central_diff_gradient(|p| self.value(p), x);
        relative_error(&fd, &self.gradient(x))
    }
}

impl std::fmt::Debug for SmoothComponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothComponent")
            .field("lipschitz_grad_bound", &self.lipschitz_grad_bound)
            .finish_non_exhaustive()
    }
}

/// Identifies one smooth branch of a term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchKey {
    /// Index into an explicit component list.
    Component(usize),
    /// Branch of a ReLU-network sample loss: sign of the residual and the
    /// hidden-unit activation pattern (bit `k` set = unit `k` passes).
    Relu { positive_residual: bool, pattern: u64 },
}

/// Active branches of a term at a point, in canonical (lowest-index) order.
#[derive(Debug, Clone)]
pub struct ActiveBranches {
    pub keys: Vec<BranchKey>,
    /// Enumeration hit the cap; `keys` is a prefix of the active set.
    pub truncated: bool,
}

/// Tie-breaking rule for Clarke subgradient selection at kinks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieRule {
    /// First active branch in canonical order; fully deterministic.
    #[default]
    LowestIndex,
    /// Uniformly random active branch from the caller-supplied stream.
    UniformRandom,
    /// Average of the active-branch gradients (also a Clarke element).
    ConvexAverage,
}

/// Explicit maximum of smooth components.
pub struct MaxOfSmoothObjective {
    dim: usize,
    components: Vec<SmoothComponent>,
    tolerance: ActiveTolerance,
}

impl MaxOfSmoothObjective {
    pub fn new(
        dim: usize,
        components: Vec<SmoothComponent>,
        tolerance: ActiveTolerance,
    ) -> Result<Self, ObjectiveError> {
        if components.is_empty() {
            return Err(ObjectiveError::BadParams("component list must be nonempty".into()));
        }
        Ok(MaxOfSmoothObjective { dim, components, tolerance })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, j: usize) -> &SmoothComponent {
        &self.components[j]
    }

    pub fn tolerance(&self) -> ActiveTolerance {
        self.tolerance
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<(), ObjectiveError> {
        if x.len() != self.dim {
            return Err(ObjectiveError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    /// Exact maximum of the component values.
    pub fn value(&self, x: &DVector<f64>) -> Result<f64, ObjectiveError> {
        self.check_dim(x)?;
        Ok(self
            .components
            .iter()
            .map(|c| c.value(x))
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// Indices of components within the tolerance band of the maximum,
    /// ascending; never empty.
    pub fn active_set(&self, x: &DVector<f64>) -> Result<Vec<usize>, ObjectiveError> {
        self.check_dim(x)?;
        let values: Vec<f64> = self.components.iter().map(|c| c.value(x)).collect();
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let band = self.tolerance.band(max);
        Ok((0..values.len()).filter(|&j| values[j] >= max - band).collect())
    }

    /// A Clarke subdifferential element at `x` under the given tie rule.
    pub fn clarke_element(
        &self,
        x: &DVector<f64>,
        rule: TieRule,
        rng: &mut ChaCha8Rng,
    ) -> Result<DVector<f64>, ObjectiveError> {
        let active = self.active_set(x)?;
        Ok(match rule {
            TieRule::LowestIndex => self.components[active[0]].gradient(x),
            TieRule::UniformRandom => {
                let j = active[rng.random_range(0..active.len())];
                self.components[j].gradient(x)
            }
            TieRule::ConvexAverage => {
                let mut acc = DVector::zeros(self.dim);
                for &j in &active {
                    acc += self.components[j].gradient(x);
                }
                acc / active.len() as f64
            }
        })
    }
}

impl std::fmt::Debug for MaxOfSmoothObjective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MaxOfSmoothObjective")
            .field("dim", &self.dim)
            .field("n_components", &self.components.len())
            .finish_non_exhaustive()
    }
}

/// One max-of-smooth term of an agent objective.
#[derive(Debug)]
pub enum ObjectiveTerm {
    Max(MaxOfSmoothObjective),
    ReluSample(ReluSampleTerm),
}

impl ObjectiveTerm {
    pub fn dim(&self) -> usize {
        match self {
            ObjectiveTerm::Max(m) => m.dim(),
            ObjectiveTerm::ReluSample(r) => r.dim(),
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            ObjectiveTerm::Max(m) => m.value(x).expect("dimension validated upstream"),
            ObjectiveTerm::ReluSample(r) => r.value(x),
        }
    }

    pub fn active_branches(&self, x: &DVector<f64>, cap: usize) -> ActiveBranches {
        match self {
            ObjectiveTerm::Max(m) => {
                let active = m.active_set(x).expect("dimension validated upstream");
                let truncated = active.len() > cap;
                ActiveBranches {
                    keys: active.into_iter().take(cap).map(BranchKey::Component).collect(),
                    truncated,
                }
            }
            ObjectiveTerm::ReluSample(r) => r.active_branches(x, cap),
        }
    }

    pub fn branch_value(&self, key: BranchKey, y: &DVector<f64>) -> f64 {
        match (self, key) {
            (ObjectiveTerm::Max(m), BranchKey::Component(j)) => m.component(j).value(y),
            (ObjectiveTerm::ReluSample(r), key) => r.branch_value(key, y),
            _ => panic!("branch key does not belong to this term"),
        }
    }

    /// Gradient of the named branch at `y`. Branches are globally smooth, so
    /// this is defined at every point, not only where the branch is active.
    pub fn branch_gradient(&self, key: BranchKey, y: &DVector<f64>) -> DVector<f64> {
        match (self, key) {
            (ObjectiveTerm::Max(m), BranchKey::Component(j)) => m.component(j).gradient(y),
            (ObjectiveTerm::ReluSample(r), key) => r.branch_gradient(key, y),
            _ => panic!("branch key does not belong to this term"),
        }
    }

    pub fn lipschitz_grad_bound(&self) -> f64 {
        match self {
            ObjectiveTerm::Max(m) => {
                m.components.iter().map(|c| c.lipschitz_grad_bound()).fold(0.0, f64::max)
            }
            ObjectiveTerm::ReluSample(r) => r.lipschitz_grad_bound(),
        }
    }
}

/// Chosen branches (with convex weights) of one term, plus the resulting
/// weighted gradient at the selection point.
#[derive(Debug, Clone)]
pub struct TermChoice {
    pub branches: Vec<(BranchKey, f64)>,
    pub gradient: DVector<f64>,
}

/// A Clarke subgradient selection: the element itself and, per term, which
/// branches produced it. Retaining the branches lets diagnostics re-evaluate
/// the *same* selection at a different point (e.g. the mean iterate).
#[derive(Debug, Clone)]
pub struct SubgradientSelection {
    pub gradient: DVector<f64>,
    pub choices: Vec<TermChoice>,
}

/// Per-agent objective: a sum of max-of-smooth terms. `data_terms` are
/// subsampled by minibatch oracles; `fixed_terms` (e.g. regularizers) always
/// enter in full.
#[derive(Debug)]
pub struct AgentObjective {
    dim: usize,
    data_terms: Vec<ObjectiveTerm>,
    fixed_terms: Vec<ObjectiveTerm>,
}

impl AgentObjective {
    pub fn new(
        dim: usize,
        data_terms: Vec<ObjectiveTerm>,
        fixed_terms: Vec<ObjectiveTerm>,
    ) -> Result<Self, ObjectiveError> {
        if data_terms.is_empty() && fixed_terms.is_empty() {
            return Err(ObjectiveError::BadParams("objective needs at least one term".into()));
        }
        for t in data_terms.iter().chain(fixed_terms.iter()) {
            if t.dim() != dim {
                return Err(ObjectiveError::DimensionMismatch { expected: dim, got: t.dim() });
            }
        }
        Ok(AgentObjective { dim, data_terms, fixed_terms })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_data_terms(&self) -> usize {
        self.data_terms.len()
    }

    /// All terms, data first then fixed; indices into this order are what
    /// [`TermChoice`]s refer to.
    pub fn terms(&self) -> impl Iterator<Item = &ObjectiveTerm> {
        self.data_terms.iter().chain(self.fixed_terms.iter())
    }

    fn term(&self, index: usize) -> &ObjectiveTerm {
        if index < self.data_terms.len() {
            &self.data_terms[index]
        } else {
            &self.fixed_terms[index - self.data_terms.len()]
        }
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<(), ObjectiveError> {
        if x.len() != self.dim {
            return Err(ObjectiveError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64, ObjectiveError> {
        self.check_dim(x)?;
        Ok(self.terms().map(|t| t.value(x)).sum())
    }

    /// Selects a Clarke subgradient element at `x`: per term, active branches
    /// are enumerated in canonical order and the tie rule picks among them.
    pub fn select_subgradient(
        &self,
        x: &DVector<f64>,
        rule: TieRule,
        rng: &mut ChaCha8Rng,
    ) -> Result<SubgradientSelection, ObjectiveError> {
        self.check_dim(x)?;
        let mut gradient = DVector::zeros(self.dim);
        let mut choices = Vec::with_capacity(self.data_terms.len() + self.fixed_terms.len());
        for term in self.terms() {
            let active = term.active_branches(x, MAX_ACTIVE_ENUMERATION);
            let branches: Vec<(BranchKey, f64)> = match rule {
                TieRule::LowestIndex => vec![(active.keys[0], 1.0)],
                TieRule::UniformRandom => {
                    let k = active.keys[rng.random_range(0..active.keys.len())];
                    vec![(k, 1.0)]
                }
                TieRule::ConvexAverage => {
                    let w = 1.0 / active.keys.len() as f64;
                    active.keys.iter().map(|&k| (k, w)).collect()
                }
            };
            let mut term_grad = DVector::zeros(self.dim);
            for &(key, w) in &branches {
                term_grad.axpy(w, &term.branch_gradient(key, x), 1.0);
            }
            gradient += &term_grad;
            choices.push(TermChoice { branches, gradient: term_grad });
        }
        Ok(SubgradientSelection { gradient, choices })
    }

    /// A Clarke subdifferential element at `x`.
    pub fn clarke_element(
        &self,
        x: &DVector<f64>,
        rule: TieRule,
        rng: &mut ChaCha8Rng,
    ) -> Result<DVector<f64>, ObjectiveError> {
        Ok(self.select_subgradient(x, rule, rng)?.gradient)
    }

    /// Re-evaluates a recorded selection (same branches, same weights) at a
    /// different point. Branches are globally smooth, so this is total.
    pub fn selection_gradient_at(
        &self,
        selection: &SubgradientSelection,
        y: &DVector<f64>,
    ) -> Result<DVector<f64>, ObjectiveError> {
        self.check_dim(y)?;
        let mut acc = DVector::zeros(self.dim);
        for (index, choice) in selection.choices.iter().enumerate() {
            let term = self.term(index);
            for &(key, w) in &choice.branches {
                acc.axpy(w, &term.branch_gradient(key, y), 1.0);
            }
        }
        Ok(acc)
    }

    /// Gradient of the recorded selection restricted to a subset of data
    /// terms, scaled by `scale`, plus the full fixed-term part. This is the
    /// debiased minibatch estimate when `scale = n_data / batch_size`.
    pub fn minibatch_gradient_from_selection(
        &self,
        selection: &SubgradientSelection,
        batch: &[usize],
        scale: f64,
    ) -> DVector<f64> {
        let mut acc = DVector::zeros(self.dim);
        for &t in batch {
            debug_assert!(t < self.data_terms.len());
            acc.axpy(scale, &selection.choices[t].gradient, 1.0);
        }
        for t in self.data_terms.len()..selection.choices.len() {
            acc += &selection.choices[t].gradient;
        }
        acc
    }

    /// Convex-average Clarke element: per term, the average of the
    /// enumerated active-branch gradients.
    pub fn convex_average_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>, ObjectiveError> {
        self.check_dim(x)?;
        let mut acc = DVector::zeros(self.dim);
        for term in self.terms() {
            let active = term.active_branches(x, MAX_ACTIVE_ENUMERATION);
            let w = 1.0 / active.keys.len() as f64;
            for &key in &active.keys {
                acc.axpy(w, &term.branch_gradient(key, x), 1.0);
            }
        }
        Ok(acc)
    }

    /// Enumerates the subgradients generated by all combinations of active
    /// branches across terms (the vertices spanning `conv ∂f(x)`), up to
    /// `cap` points. Returns `(points, exact)`; on overflow or truncation the
    /// single convex-average element is returned with `exact = false`.
    pub fn active_gradient_products(
        &self,
        x: &DVector<f64>,
        cap: usize,
    ) -> Result<(Vec<DVector<f64>>, bool), ObjectiveError> {
        self.check_dim(x)?;
        let mut per_term: Vec<Vec<DVector<f64>>> = Vec::new();
        let mut exact = true;
        let mut combos: usize = 1;
        for term in self.terms() {
            let active = term.active_branches(x, cap.max(2));
            if active.truncated {
                exact = false;
                break;
            }
            combos = combos.saturating_mul(active.keys.len());
            if combos > cap {
                exact = false;
                break;
            }
            per_term
                .push(active.keys.iter().map(|&k| term.branch_gradient(k, x)).collect());
        }
        if !exact {
            return Ok((vec![self.convex_average_gradient(x)?], false));
        }
        let mut points = vec![DVector::zeros(self.dim)];
        for grads in &per_term {
            let mut next = Vec::with_capacity(points.len() * grads.len());
            for p in &points {
                for g in grads {
                    next.push(p + g);
                }
            }
            points = next;
        }
        Ok((points, true))
    }

    /// Largest Lipschitz bound over the branch gradients of all terms.
    pub fn lipschitz_grad_bound(&self) -> f64 {
        self.terms().map(|t| t.lipschitz_grad_bound()).fold(0.0, f64::max)
    }
}

/// The problem `min F = sum_i f_i` distributed over agents sharing one
/// variable dimension.
#[derive(Debug)]
pub struct DistributedProblem {
    agents: Vec<AgentObjective>,
    dim: usize,
}

impl DistributedProblem {
    pub fn new(agents: Vec<AgentObjective>) -> Result<Self, ObjectiveError> {
        if agents.is_empty() {
            return Err(ObjectiveError::BadParams("problem needs at least one agent".into()));
        }
        let dim = agents[0].dim();
        for a in &agents {
            if a.dim() != dim {
                return Err(ObjectiveError::DimensionMismatch { expected: dim, got: a.dim() });
            }
        }
        Ok(DistributedProblem { agents, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agent(&self, i: usize) -> &AgentObjective {
        &self.agents[i]
    }

    pub fn agents(&self) -> &[AgentObjective] {
        &self.agents
    }

    /// `F(x) = sum_i f_i(x)`.
    pub fn value(&self, x: &DVector<f64>) -> Result<f64, ObjectiveError> {
        let mut total = 0.0;
        for a in &self.agents {
            total += a.value(x)?;
        }
        Ok(total)
    }

    /// Collapses all agents into a single objective holding every term; the
    /// centralized baseline runs on this.
    pub fn into_merged(self) -> AgentObjective {
        let dim = self.dim;
        let mut data = Vec::new();
        let mut fixed = Vec::new();
        for a in self.agents {
            data.extend(a.data_terms);
            fixed.extend(a.fixed_terms);
        }
        AgentObjective::new(dim, data, fixed).expect("merged objective is nonempty")
    }

    /// Agent-averaged largest branch-gradient Lipschitz bound.
    pub fn lipschitz_grad_bound(&self) -> f64 {
        self.agents.iter().map(|a| a.lipschitz_grad_bound()).fold(0.0, f64::max)
    }
}

/// Result of the stationarity measure: the minimal-norm value and whether it
/// came from exact hull enumeration or the convex-average fallback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stationarity {
    pub value: f64,
    pub exact: bool,
}

/// Norm of the minimal-norm element of `conv{(1/n) sum_i g_i}` where each
/// `g_i` ranges over the agent's active-branch gradient combinations:
/// zero exactly at Clarke-critical points of `F` (the mean-field driving
/// Eq.-(9)-style dynamics carries the `1/n`).
///
/// Active-set products up to [`STATIONARITY_COMBO_CAP`] are solved exactly
/// by the small hull QP; larger products fall back to the norm of the
/// agent-averaged convex-average element, flagged via `exact = false`.
pub fn stationarity_measure(
    problem: &DistributedProblem,
    x: &DVector<f64>,
) -> Result<Stationarity, ObjectiveError> {
    let n = problem.n_agents() as f64;
    let mut per_agent: Vec<Vec<DVector<f64>>> = Vec::with_capacity(problem.n_agents());
    let mut exact = true;
    let mut combos: usize = 1;
    for agent in problem.agents() {
        let (points, agent_exact) = agent.active_gradient_products(x, STATIONARITY_COMBO_CAP)?;
        if !agent_exact {
            exact = false;
            break;
        }
        combos = combos.saturating_mul(points.len());
        if combos > STATIONARITY_COMBO_CAP {
            exact = false;
            break;
        }
        per_agent.push(points);
    }
    if !exact {
        let mut acc = DVector::zeros(problem.dim());
        for agent in problem.agents() {
            acc += agent.convex_average_gradient(x)?;
        }
        return Ok(Stationarity { value: (acc / n).norm(), exact: false });
    }
    let mut sums = vec![DVector::zeros(problem.dim())];
    for agent_points in &per_agent {
        let mut next = Vec::with_capacity(sums.len() * agent_points.len());
        for s in &sums {
            for p in agent_points {
                next.push(s + p);
            }
        }
        sums = next;
    }
    for s in &mut sums {
        *s /= n;
    }
    Ok(Stationarity { value: min_norm_in_hull(&sums).norm, exact: true })
}

/// Checks the selected Clarke element against central finite differences of
/// the full objective at `x`. Returns `None` when some term has a tie (the
/// objective is not differentiable there); otherwise the relative error.
pub fn finite_difference_check(
    agent: &AgentObjective,
    x: &DVector<f64>,
) -> Result<Option<f64>, ObjectiveError> {
    agent.check_dim(x)?;
    for term in agent.terms() {
        let active = term.active_branches(x, 2);
        if active.truncated || active.keys.len() > 1 {
            return Ok(None);
        }
    }
    let mut throwaway = crate::rng::derive_stream(0, &[]);
    let analytic = agent.clarke_element(x, TieRule::LowestIndex, &mut throwaway)?;
    let fd = central_diff_gradient(|p| agent.value(p).expect("same dimension"), x);
    Ok(Some(relative_error(&fd, &analytic)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    /// f(x) = max(x, -x) = |x| on R^1.
    fn abs_objective() -> MaxOfSmoothObjective {
        abs_objective_with_tol(ActiveTolerance::Absolute(0.0))
    }

    fn abs_objective_with_tol(tol: ActiveTolerance) -> MaxOfSmoothObjective {
        let plus = SmoothComponent::new(
            Box::new(|x: &DVector<f64>| x[0]),
            Box::new(|_: &DVector<f64>| DVector::from_vec(vec![1.0])),
            0.0,
        );
        let minus = SmoothComponent::new(
            Box::new(|x: &DVector<f64>| -x[0]),
            Box::new(|_: &DVector<f64>| DVector::from_vec(vec![-1.0])),
            0.0,
        );
        MaxOfSmoothObjective::new(1, vec![plus, minus], tol).unwrap()
    }

    fn point(v: f64) -> DVector<f64> {
        DVector::from_vec(vec![v])
    }

    #[test]
    fn value_of_abs() {
        let f = abs_objective();
        assert_eq!(f.value(&point(3.0)).unwrap(), 3.0);
        assert_eq!(f.value(&point(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn value_of_quadratic_max() {
        // max(x^2 - 1, -x^2) at 0.5 = max(-0.75, -0.25) = -0.25.
        let a = SmoothComponent::new(
            Box::new(|x: &DVector<f64>| x[0] * x[0] - 1.0),
            Box::new(|x: &DVector<f64>| DVector::from_vec(vec![2.0 * x[0]])),
            2.0,
        );
        let b = SmoothComponent::new(
            Box::new(|x: &DVector<f64>| -x[0] * x[0]),
            Box::new(|x: &DVector<f64>| DVector::from_vec(vec![-2.0 * x[0]])),
            2.0,
        );
        let f = MaxOfSmoothObjective::new(1, vec![a, b], ActiveTolerance::default()).unwrap();
        assert_eq!(f.value(&point(0.5)).unwrap(), -0.25);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let f = abs_objective();
        let bad = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(
            f.value(&bad),
            Err(ObjectiveError::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn active_set_cases() {
        let f = abs_objective();
        assert_eq!(f.active_set(&point(2.0)).unwrap(), vec![0]);
        assert_eq!(f.active_set(&point(0.0)).unwrap(), vec![0, 1]);
        let banded = abs_objective_with_tol(ActiveTolerance::Absolute(1e-9));
        assert_eq!(banded.active_set(&point(1e-12)).unwrap(), vec![0, 1]);
    }

    #[test]
    fn active_set_monotone_in_tolerance() {
        let tols = [0.0, 1e-9, 1e-3, 1.0];
        for window in tols.windows(2) {
            let small = abs_objective_with_tol(ActiveTolerance::Absolute(window[0]));
            let large = abs_objective_with_tol(ActiveTolerance::Absolute(window[1]));
            for v in [-0.5, 0.0, 1e-10, 0.3] {
                let a = small.active_set(&point(v)).unwrap();
                let b = large.active_set(&point(v)).unwrap();
                assert!(a.iter().all(|j| b.contains(j)), "tol monotonicity at {v}");
            }
        }
    }

    #[test]
    fn clarke_element_tie_rules() {
        let f = abs_objective();
        let mut rng = derive_stream(1, &[]);
        assert_eq!(f.clarke_element(&point(2.0), TieRule::LowestIndex, &mut rng).unwrap()[0], 1.0);
        assert_eq!(f.clarke_element(&point(0.0), TieRule::LowestIndex, &mut rng).unwrap()[0], 1.0);
        assert_eq!(f.clarke_element(&point(0.0), TieRule::ConvexAverage, &mut rng).unwrap()[0], 0.0);
        let g = f.clarke_element(&point(0.0), TieRule::UniformRandom, &mut rng).unwrap()[0];
        assert!(g == 1.0 || g == -1.0);
    }

    #[test]
    fn value_is_permutation_invariant() {
        let make = |flip: bool| {
            let mut comps = vec![
                SmoothComponent::new(
                    Box::new(|x: &DVector<f64>| x[0].sin()),
                    Box::new(|x: &DVector<f64>| DVector::from_vec(vec![x[0].cos()])),
                    1.0,
                ),
                SmoothComponent::new(
                    Box::new(|x: &DVector<f64>| 0.3 * x[0] * x[0] - 0.4),
                    Box::new(|x: &DVector<f64>| DVector::from_vec(vec![0.6 * x[0]])),
                    0.6,
                ),
            ];
            if flip {
                comps.reverse();
            }
            MaxOfSmoothObjective::new(1, comps, ActiveTolerance::default()).unwrap()
        };
        let a = make(false);
        let b = make(true);
        for v in [-2.0, -0.3, 0.0, 0.9, 3.4] {
            assert_eq!(a.value(&point(v)).unwrap(), b.value(&point(v)).unwrap());
        }
    }

    fn single_agent_abs_problem() -> DistributedProblem {
        let agent =
            AgentObjective::new(1, vec![ObjectiveTerm::Max(abs_objective())], vec![]).unwrap();
        DistributedProblem::new(vec![agent]).unwrap()
    }

    #[test]
    fn stationarity_of_abs() {
        let p = single_agent_abs_problem();
        let at_kink = stationarity_measure(&p, &point(0.0)).unwrap();
        assert!(at_kink.exact);
        assert!(at_kink.value < 1e-12);
        let smooth = stationarity_measure(&p, &point(2.0)).unwrap();
        assert!(smooth.exact);
        assert!((smooth.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stationarity_of_three_agent_median() {
        // Subgradients at x = 0 are {+1}, {+1, -1}, {-1}; the summed hull
        // contains 0.
        let agents: Vec<AgentObjective> = [-1.0f64, 0.0, 4.0]
            .iter()
            .map(|&c| {
                let plus = SmoothComponent::new(
                    Box::new(move |x: &DVector<f64>| x[0] - c),
                    Box::new(|_: &DVector<f64>| DVector::from_vec(vec![1.0])),
                    0.0,
                );
                let minus = SmoothComponent::new(
                    Box::new(move |x: &DVector<f64>| c - x[0]),
                    Box::new(|_: &DVector<f64>| DVector::from_vec(vec![-1.0])),
                    0.0,
                );
                let max = MaxOfSmoothObjective::new(
                    1,
                    vec![plus, minus],
                    ActiveTolerance::default(),
                )
                .unwrap();
                AgentObjective::new(1, vec![ObjectiveTerm::Max(max)], vec![]).unwrap()
            })
            .collect();
        let p = DistributedProblem::new(agents).unwrap();
        let s = stationarity_measure(&p, &point(0.0)).unwrap();
        assert!(s.exact);
        assert!(s.value < 1e-12);
    }

    #[test]
    fn selection_reevaluation_matches_branch() {
        let f = abs_objective();
        let agent = AgentObjective::new(1, vec![ObjectiveTerm::Max(f)], vec![]).unwrap();
        let mut rng = derive_stream(3, &[]);
        let sel = agent.select_subgradient(&point(2.0), TieRule::LowestIndex, &mut rng).unwrap();
        // Same branch (component 0, gradient +1) re-evaluated elsewhere.
        let g = agent.selection_gradient_at(&sel, &point(-5.0)).unwrap();
        assert_eq!(g[0], 1.0);
    }

    #[test]
    fn fd_check_passes_at_smooth_point_and_skips_kink() {
        let agent =
            AgentObjective::new(1, vec![ObjectiveTerm::Max(abs_objective())], vec![]).unwrap();
        let err = finite_difference_check(&agent, &point(1.7)).unwrap().unwrap();
        assert!(err < 1e-7, "fd error {err}");
        assert!(finite_difference_check(&agent, &point(0.0)).unwrap().is_none());
    }
}
