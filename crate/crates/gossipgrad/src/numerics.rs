//! Small dense numerical kernels shared across modules: the minimal-norm
//! point of a convex hull (the workhorse behind the stationarity measure and
//! hull-membership checks) and central finite differences.

use nalgebra::{DMatrix, DVector};

/// Result of a minimal-norm-point computation.
#[derive(Debug, Clone)]
pub struct MinNormPoint {
    /// The minimizing point `sum_j lambda_j p_j`.
    pub point: DVector<f64>,
    /// Euclidean norm of `point`.
    pub norm: f64,
    /// Simplex weights over the input points (zeros off the support).
    pub weights: Vec<f64>,
}

/// Minimal-norm point of `conv{points}`.
///
/// Solves `min ||sum_j lambda_j p_j||` over the simplex exactly by
/// enumerating candidate supports: by Caratheodory the optimum lives in the
/// relative interior of the simplex spanned by some affinely independent
/// subset of at most `dim + 1` points, where it satisfies the
/// equality-constrained KKT system. Intended for small point sets (the
/// callers cap at 16); cost is `O(2^k)` small solves.
///
/// Panics if `points` is empty or dimensions disagree.
pub fn min_norm_in_hull(points: &[DVector<f64>]) -> MinNormPoint {
    let k = points.len();
    assert!(k >= 1, "min_norm_in_hull needs at least one point");
    assert!(k <= 24, "min_norm_in_hull is an exact small-set solver (k <= 24)");
    let dim = points[0].len();
    for p in points {
        assert_eq!(p.len(), dim, "hull points must share a dimension");
    }

    // Gram matrix; squared norms sit on the diagonal.
    let gram = DMatrix::from_fn(k, k, |i, j| points[i].dot(&points[j]));

    let mut best: Option<(f64, Vec<f64>)> = None;
    let max_support = dim + 1;

    for mask in 1u32..(1u32 << k) {
        let support: Vec<usize> = (0..k).filter(|j| mask & (1 << j) != 0).collect();
        if support.len() > max_support {
            continue;
        }
        let s = support.len();
        // KKT system of min lambda' G lambda s.t. 1' lambda = 1 on the support:
        // [ G_S  1 ] [lambda]   [0]
        // [ 1'   0 ] [ -mu  ] = [1]
        let mut kkt = DMatrix::zeros(s + 1, s + 1);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                kkt[(a, b)] = gram[(i, j)];
            }
            kkt[(a, s)] = 1.0;
            kkt[(s, a)] = 1.0;
        }
        let mut rhs = DVector::zeros(s + 1);
        rhs[s] = 1.0;
        let Some(sol) = kkt.full_piv_lu().solve(&rhs) else {
            continue; // affinely dependent support; a smaller one covers it
        };
        let lambda = sol.rows(0, s);
        if lambda.iter().any(|&l| !(l >= -1e-12) || !l.is_finite()) {
            continue;
        }
        // Guard against ill-conditioned solves slipping through.
        let residual = (&kkt * &sol - &rhs).norm();
        if residual > 1e-8 * (1.0 + rhs.norm()) {
            continue;
        }
        let mut sq = 0.0;
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                sq += lambda[a] * lambda[b] * gram[(i, j)];
            }
        }
        let sq = sq.max(0.0);
        if best.as_ref().is_none_or(|(b, _)| sq < *b) {
            let mut weights = vec![0.0; k];
            for (a, &i) in support.iter().enumerate() {
                weights[i] = lambda[a].max(0.0);
            }
            best = Some((sq, weights));
        }
    }

    let (sq, weights) = best.expect("singleton supports always yield a candidate");
    let mut point = DVector::zeros(dim);
    for (j, &w) in weights.iter().enumerate() {
        if w != 0.0 {
            point.axpy(w, &points[j], 1.0);
        }
    }
    MinNormPoint { point, norm: sq.sqrt(), weights }
}

/// Euclidean distance from `target` to `conv{points}`.
pub fn distance_to_hull(target: &DVector<f64>, points: &[DVector<f64>]) -> f64 {
    let shifted: Vec<DVector<f64>> = points.iter().map(|p| p - target).collect();
    min_norm_in_hull(&shifted).norm
}

/// Central-difference gradient with step `1e-6 * (1 + ||x||)`.
pub fn central_diff_gradient<F>(f: F, x: &DVector<f64>) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let h = 1e-6 * (1.0 + x.norm());
    let mut grad = DVector::zeros(x.len());
    let mut probe = x.clone();
    for d in 0..x.len() {
        let orig = probe[d];
        probe[d] = orig + h;
        let plus = f(&probe);
        probe[d] = orig - h;
        let minus = f(&probe);
        probe[d] = orig;
        grad[d] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Relative error between two vectors: `||a - b|| / max(1, ||b||)`.
pub fn relative_error(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    /// Closed form for two points: minimize over a segment.
    fn two_point_oracle(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let d = b - a;
        let dd = d.dot(&d);
        let t = if dd == 0.0 { 0.0 } else { (-a.dot(&d) / dd).clamp(0.0, 1.0) };
        (a + d * t).norm()
    }

    #[test]
    fn singleton_is_identity() {
        let p = vec2(3.0, -4.0);
        let r = min_norm_in_hull(&[p.clone()]);
        assert_eq!(r.point, p);
        assert!((r.norm - 5.0).abs() < 1e-12);
    }

    #[test]
    fn opposite_points_contain_zero() {
        let r = min_norm_in_hull(&[vec2(1.0, 0.0), vec2(-1.0, 0.0)]);
        assert!(r.norm < 1e-12);
    }

    #[test]
    fn segment_matches_closed_form() {
        let a = vec2(2.0, 1.0);
        let b = vec2(0.5, -3.0);
        let r = min_norm_in_hull(&[a.clone(), b.clone()]);
        assert!((r.norm - two_point_oracle(&a, &b)).abs() < 1e-10);
    }

    #[test]
    fn triangle_away_from_origin_picks_vertex_or_edge() {
        // Triangle entirely in x > 1; nearest point is on the edge between
        // (1,2) and (1,-1), namely (1,0).
        let pts = [vec2(1.0, 2.0), vec2(1.0, -1.0), vec2(3.0, 0.5)];
        let r = min_norm_in_hull(&pts);
        assert!((r.norm - 1.0).abs() < 1e-10);
        assert!((r.point[0] - 1.0).abs() < 1e-10);
        assert!(r.point[1].abs() < 1e-10);
    }

    #[test]
    fn optimality_certificate_holds_on_random_sets() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let k = rng.random_range(1..=6);
            let dim = rng.random_range(1..=4);
            let pts: Vec<DVector<f64>> = (0..k)
                .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0)))
                .collect();
            let r = min_norm_in_hull(&pts);
            // Variational inequality: p_j . x* >= ||x*||^2 for all vertices.
            let sq = r.norm * r.norm;
            for p in &pts {
                assert!(p.dot(&r.point) >= sq - 1e-8, "certificate failed");
            }
            // Weights form a simplex element reproducing the point.
            let wsum: f64 = r.weights.iter().sum();
            assert!((wsum - 1.0).abs() < 1e-8);
            let mut rebuilt = DVector::zeros(dim);
            for (j, &w) in r.weights.iter().enumerate() {
                rebuilt.axpy(w, &pts[j], 1.0);
            }
            assert!((rebuilt - &r.point).norm() < 1e-8);
        }
    }

    #[test]
    fn hull_distance_of_member_is_zero() {
        let pts = [vec2(0.0, 0.0), vec2(2.0, 0.0), vec2(0.0, 2.0)];
        let inside = vec2(0.5, 0.5);
        assert!(distance_to_hull(&inside, &pts) < 1e-10);
        let outside = vec2(-1.0, -1.0);
        assert!((distance_to_hull(&outside, &pts) - 2.0f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn central_diff_matches_analytic_gradient() {
        let f = |x: &DVector<f64>| x[0].powi(2) + 3.0 * x[0] * x[1] + x[1].sin();
        let x = vec2(0.7, -1.3);
        let g = central_diff_gradient(f, &x);
        let exact = vec2(2.0 * 0.7 + 3.0 * -1.3, 3.0 * 0.7 + (-1.3f64).cos());
        assert!(relative_error(&g, &exact) < 1e-8);
    }
}
