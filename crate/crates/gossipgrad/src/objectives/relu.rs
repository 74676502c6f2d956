//! Per-sample loss of a one-hidden-layer ReLU network with sigmoid output
//! under absolute error: `|sigmoid(w . relu(V a + c) + b) - y|`.
//!
//! Each choice of residual sign and hidden activation pattern is a smooth
//! branch; the term never materializes the `2^(H+1)` branches, it indexes
//! them by pattern. Parameters are packed as `[V row-major, c, w, b]`.

use nalgebra::DVector;

use super::{ActiveBranches, ActiveTolerance, BranchKey};

/// Upper limit on hidden width so an activation pattern fits one `u64`.
pub const MAX_HIDDEN: usize = 64;

#[derive(Debug, Clone)]
pub struct ReluSampleTerm {
    input: DVector<f64>,
    label: f64,
    hidden: usize,
    tolerance: ActiveTolerance,
    /// Radius on which `lipschitz_grad_bound` is valid (branch Hessians are
    /// only bounded on bounded parameter sets).
    grad_bound_radius: f64,
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

impl ReluSampleTerm {
    pub fn new(input: DVector<f64>, label: f64, hidden: usize, grad_bound_radius: f64) -> Self {
        assert!(hidden >= 1 && hidden <= MAX_HIDDEN, "hidden width must be in 1..={MAX_HIDDEN}");
        assert!(grad_bound_radius > 0.0);
        ReluSampleTerm {
            input,
            label,
            hidden,
            tolerance: ActiveTolerance::default(),
            grad_bound_radius,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input.len()
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Parameter dimension: `V` is `hidden x input_dim`, plus `c`, `w`, `b`.
    pub fn dim(&self) -> usize {
        self.hidden * self.input.len() + 2 * self.hidden + 1
    }

    fn preactivations(&self, theta: &DVector<f64>) -> Vec<f64> {
        let d = self.input.len();
        (0..self.hidden)
            .map(|k| {
                let mut z = theta[self.hidden * d + k]; // c_k
                for l in 0..d {
                    z += theta[k * d + l] * self.input[l];
                }
                z
            })
            .collect()
    }

    fn output_from_hidden(&self, theta: &DVector<f64>, psi: &[f64]) -> f64 {
        let d = self.input.len();
        let w_off = self.hidden * d + self.hidden;
        let mut u = theta[w_off + self.hidden]; // b
        for k in 0..self.hidden {
            u += theta[w_off + k] * psi[k];
        }
        sigmoid(u)
    }

    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        let z = self.preactivations(theta);
        let psi: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
        (self.output_from_hidden(theta, &psi) - self.label).abs()
    }

    /// The smooth branch selected by `key`, evaluated anywhere: the pattern
    /// gates `z_k` regardless of its sign there.
    pub fn branch_value(&self, key: BranchKey, theta: &DVector<f64>) -> f64 {
        let BranchKey::Relu { positive_residual, pattern } = key else {
            panic!("relu term addressed with a non-relu branch key");
        };
        let z = self.preactivations(theta);
        let psi: Vec<f64> =
            (0..self.hidden).map(|k| if pattern & (1 << k) != 0 { z[k] } else { 0.0 }).collect();
        let r = self.output_from_hidden(theta, &psi) - self.label;
        if positive_residual {
            r
        } else {
            -r
        }
    }

    pub fn branch_gradient(&self, key: BranchKey, theta: &DVector<f64>) -> DVector<f64> {
        let BranchKey::Relu { positive_residual, pattern } = key else {
            panic!("relu term addressed with a non-relu branch key");
        };
        let d = self.input.len();
        let w_off = self.hidden * d + self.hidden;
        let z = self.preactivations(theta);
        let psi: Vec<f64> =
            (0..self.hidden).map(|k| if pattern & (1 << k) != 0 { z[k] } else { 0.0 }).collect();
        let out = self.output_from_hidden(theta, &psi);
        let sign = if positive_residual { 1.0 } else { -1.0 };
        let factor = sign * out * (1.0 - out); // d sigma / du
        let mut grad = DVector::zeros(self.dim());
        for k in 0..self.hidden {
            let wk = theta[w_off + k];
            grad[w_off + k] = factor * psi[k];
            if pattern & (1 << k) != 0 {
                let through = factor * wk;
                for l in 0..d {
                    grad[k * d + l] = through * self.input[l];
                }
                grad[self.hidden * d + k] = through;
            }
        }
        grad[w_off + self.hidden] = factor;
        grad
    }

    /// Branches within the tolerance band of the max at `theta`, canonical
    /// order: the observed branch first, then residual-sign and pattern
    /// flips for tied units, each candidate checked against the band.
    pub fn active_branches(&self, theta: &DVector<f64>, cap: usize) -> ActiveBranches {
        let z = self.preactivations(theta);
        let psi: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
        let r = self.output_from_hidden(theta, &psi) - self.label;
        let value = r.abs();
        let band = self.tolerance.band(value);

        let base_pattern: u64 =
            (0..self.hidden).filter(|&k| z[k] > 0.0).map(|k| 1u64 << k).sum();
        let tied_units: Vec<usize> =
            (0..self.hidden).filter(|&k| z[k].abs() <= band).collect();
        let base_sign = r >= 0.0;
        let signs: Vec<bool> =
            if r.abs() <= band { vec![base_sign, !base_sign] } else { vec![base_sign] };

        let mut keys = Vec::new();
        let mut truncated = false;
        let flip_bits = tied_units.len().min(16);
        let flips = 1u64 << flip_bits;
        let mut budget = 4 * cap.max(16) as u64;
        if tied_units.len() > flip_bits {
            truncated = true; // flip space itself is truncated
        }
        'outer: for &sign in &signs {
            for flip_mask in 0..flips {
                if budget == 0 {
                    truncated = true;
                    break 'outer;
                }
                budget -= 1;
                let mut pattern = base_pattern;
                for (bit, &unit) in tied_units.iter().enumerate().take(flip_bits) {
                    if flip_mask & (1 << bit) != 0 {
                        pattern ^= 1 << unit;
                    }
                }
                let key = BranchKey::Relu { positive_residual: sign, pattern };
                if self.branch_value(key, theta) >= value - band {
                    if keys.len() == cap {
                        truncated = true;
                        break 'outer;
                    }
                    keys.push(key);
                }
            }
        }
        debug_assert!(!keys.is_empty());
        ActiveBranches { keys, truncated }
    }

    /// Bound on the branch-gradient Lipschitz constant, valid for parameters
    /// with `||theta|| <= grad_bound_radius` (coarse: sigmoid derivative
    /// bounds times polynomial growth of the composition).
    pub fn lipschitz_grad_bound(&self) -> f64 {
        let rho = self.grad_bound_radius;
        let alpha = self.input.norm();
        let h = self.hidden as f64;
        let grad_u_sq = h * rho * rho * (alpha + 1.0) * (alpha + 1.0)
            + 1.0
            + rho * rho * (alpha * alpha + 1.0);
        let hess_u = (h * (alpha * alpha + 1.0)).sqrt();
        0.1 * grad_u_sq + 0.25 * hess_u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{central_diff_gradient, relative_error};
    use rand::Rng;

    fn term() -> ReluSampleTerm {
        let input = DVector::from_vec(vec![0.8, -0.5, 0.3]);
        ReluSampleTerm::new(input, 1.0, 4, 100.0)
    }

    fn random_theta(rng: &mut impl Rng, dim: usize) -> DVector<f64> {
        DVector::from_fn(dim, |_, _| rng.random_range(-1.5..1.5))
    }

    #[test]
    fn dimension_layout() {
        let t = term();
        assert_eq!(t.dim(), 4 * 3 + 4 + 4 + 1);
    }

    #[test]
    fn value_matches_active_branch() {
        let mut rng = crate::rng::derive_stream(5, &[1]);
        let t = term();
        for _ in 0..50 {
            let theta = random_theta(&mut rng, t.dim());
            let active = t.active_branches(&theta, 8);
            let v = t.value(&theta);
            assert!((t.branch_value(active.keys[0], &theta) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn branch_gradient_matches_finite_differences() {
        let mut rng = crate::rng::derive_stream(6, &[2]);
        let t = term();
        for _ in 0..30 {
            let theta = random_theta(&mut rng, t.dim());
            let active = t.active_branches(&theta, 8);
            if active.keys.len() != 1 {
                continue; // kink; branch != objective nearby
            }
            let key = active.keys[0];
            let g = t.branch_gradient(key, &theta);
            let fd = central_diff_gradient(|p| t.branch_value(key, p), &theta);
            assert!(relative_error(&fd, &g) < 1e-6);
        }
    }

    #[test]
    fn tied_unit_doubles_active_branches() {
        let t = term();
        let mut theta = random_theta(&mut crate::rng::derive_stream(7, &[]), t.dim());
        // Force z_0 = 0: c_0 = -v_0 . a.
        let d = t.input_dim();
        let mut z0 = 0.0;
        for l in 0..d {
            z0 += theta[l] * t.input[l];
        }
        theta[t.hidden() * d] = -z0;
        let active = t.active_branches(&theta, 16);
        assert!(active.keys.len() >= 2, "expected pattern tie, got {:?}", active.keys);
    }
}
