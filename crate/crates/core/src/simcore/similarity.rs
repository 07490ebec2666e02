use crate::sparse::SparseVec;

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub vector: SparseVec,
    /// `xᵀΛx` was zero; the vector is returned unchanged.
    pub degenerate: bool,
}

/// Scales `x` so that `xᵀΛx = 1`.
pub fn normalize(x: &SparseVec, lambda: &[f64]) -> Normalized {
    let norm_sq = x.weighted_norm_sq(lambda);
    if norm_sq > 0.0 {
        Normalized {
            vector: x.scaled(1.0 / norm_sq.sqrt()),
            degenerate: false,
        }
    } else {
        Normalized {
            vector: x.clone(),
            degenerate: true,
        }
    }
}

/// Weighted cosine `xᵀΛy / (√(xᵀΛx) √(yᵀΛy))`, zero when either norm is zero.
pub fn weighted_similarity(x: &[f64], y: &[f64], lambda: &[f64]) -> f64 {
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for ((a, b), l) in x.iter().zip(y).zip(lambda) {
        xy += a * l * b;
        xx += a * l * a;
        yy += b * l * b;
    }
    cosine_from_parts(xy, xx, yy)
}

pub fn weighted_similarity_sparse(x: &SparseVec, y: &SparseVec, lambda: &[f64]) -> f64 {
    cosine_from_parts(
        x.weighted_dot(y, lambda),
        x.weighted_norm_sq(lambda),
        y.weighted_norm_sq(lambda),
    )
}

fn cosine_from_parts(xy: f64, xx: f64, yy: f64) -> f64 {
    if xx <= 0.0 || yy <= 0.0 {
        return 0.0;
    }
    xy / (xx.sqrt() * yy.sqrt())
}

/// `xᵀΛM_kθ_k = Σ_l θ_k^l xᵀΛμ_{l,k}` for a normalized `x`.
pub fn hierarchical_similarity(
    x: &SparseVec,
    branch: &[&[f64]],
    theta: &[f64],
    lambda: &[f64],
) -> f64 {
    assert_eq!(
        branch.len(),
        theta.len(),
        "branch matrix and theta disagree"
    );
    branch
        .iter()
        .zip(theta)
        .map(|(mu, t)| t * x.weighted_dot_dense(mu, lambda))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn normalize_cases() {
        let x = SparseVec::from_pairs([(0, 2.0)]);
        let n = normalize(&x, &[1.0]);
        assert_eq!(n.vector.get(0), 1.0);

        let zero = SparseVec::new();
        let n = normalize(&zero, &[1.0]);
        assert!(n.degenerate && n.vector.is_empty());

        let x = SparseVec::from_pairs([(0, 1.0), (1, 1.0)]);
        let n = normalize(&x, &[1.0, 3.0]);
        assert_eq!(n.vector.values(), [0.5, 0.5]);
        assert_abs_diff_eq!(n.vector.weighted_norm_sq(&[1.0, 3.0]), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn similarity_cases() {
        assert_abs_diff_eq!(
            weighted_similarity(&[1.0, 2.0], &[1.0, 2.0], &[3.0, 0.5]),
            1.0,
            epsilon = 1e-15
        );
        assert_eq!(
            weighted_similarity(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]),
            0.0
        );
        assert_abs_diff_eq!(
            weighted_similarity(&[1.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-15
        );
        assert_eq!(
            weighted_similarity(&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0]),
            0.0
        );
    }

    #[test]
    fn hierarchical_cases() {
        let x = SparseVec::from_pairs([(0, 1.0)]);
        let root = [0.2, 0.0];
        let leaf = [0.6, 0.1];
        let lambda = [1.0, 1.0];
        let branch: [&[f64]; 2] = [&root, &leaf];
        assert_abs_diff_eq!(
            hierarchical_similarity(&x, &branch, &[0.0, 1.0], &lambda),
            0.6
        );
        assert_eq!(
            hierarchical_similarity(&x, &branch, &[0.0, 0.0], &lambda),
            0.0
        );
        assert_abs_diff_eq!(
            hierarchical_similarity(&x, &branch, &[0.5, 0.5], &lambda),
            0.4,
            epsilon = 1e-15
        );
    }

    fn vec_and_lambda() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..12).prop_flat_map(|n| {
            (
                prop::collection::vec(0.0f64..5.0, n),
                prop::collection::vec(0.0f64..5.0, n),
                prop::collection::vec(0.01f64..4.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded((x, y, l) in vec_and_lambda()) {
            let a = weighted_similarity(&x, &y, &l);
            let b = weighted_similarity(&y, &x, &l);
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&a));
        }

        #[test]
        fn scale_invariant((x, y, l) in vec_and_lambda(), a in 0.01f64..100.0, b in 0.01f64..100.0) {
            let xs: Vec<f64> = x.iter().map(|v| v * a).collect();
            let ys: Vec<f64> = y.iter().map(|v| v * b).collect();
            let s0 = weighted_similarity(&x, &y, &l);
            let s1 = weighted_similarity(&xs, &ys, &l);
            prop_assert!((s0 - s1).abs() < 1e-9);
        }

        #[test]
        fn unit_lambda_is_plain_cosine((x, y, _l) in vec_and_lambda()) {
            let ones = vec![1.0; x.len()];
            let dot: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            let nx: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            let ny: f64 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
            let plain = if nx == 0.0 || ny == 0.0 { 0.0 } else { dot / (nx * ny) };
            prop_assert!((weighted_similarity(&x, &y, &ones) - plain).abs() < 1e-12);
        }

        #[test]
        fn sparse_matches_dense((x, y, l) in vec_and_lambda()) {
            let sx = SparseVec::from_dense(&x);
            let sy = SparseVec::from_dense(&y);
            let d = weighted_similarity(&x, &y, &l);
            prop_assert!((weighted_similarity_sparse(&sx, &sy, &l) - d).abs() < 1e-12);
        }
    }
}
