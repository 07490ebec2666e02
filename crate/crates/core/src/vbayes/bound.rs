//! Softmax, its log-likelihood, and the tangent bound on `1/g(x)` with
//! `g(x) = Σ_k exp(x_k)`.

/// `ln g(x)` with a max shift.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax_prob(s: &[f64]) -> Vec<f64> {
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// `Σ_n ln softmax(s_n)_{k_n}` over labeled documents.
pub fn log_likelihood(labels: &[usize], sims: &[Vec<f64>]) -> f64 {
    labels
        .iter()
        .zip(sims)
        .map(|(&k, s)| s[k] - log_sum_exp(s))
        .sum()
}

/// Upper bound `(1/g(ξ))·exp(Σ_k π_k(ξ)(ξ_k − x_k))` on `1/g(x)`, where
/// `π(ξ)` is the softmax of `ξ`; tight at `x = ξ`.
pub fn softmax_denominator_bound(x: &[f64], xi: &[f64]) -> f64 {
    log_denominator_bound(x, xi).exp()
}

/// Logarithm of [`softmax_denominator_bound`].
pub fn log_denominator_bound(x: &[f64], xi: &[f64]) -> f64 {
    assert_eq!(x.len(), xi.len(), "x and xi disagree in length");
    let pi = softmax_prob(xi);
    let lin: f64 = pi
        .iter()
        .zip(xi)
        .zip(x)
        .map(|((p, a), b)| p * (a - b))
        .sum();
    -log_sum_exp(xi) + lin
}

/// `−ln g(ξ) + π(ξ)ᵀξ`, the part of the tangent plane that does not depend
/// on the point where it is evaluated.
pub fn tangent_offset(xi: &[f64]) -> f64 {
    let pi = softmax_prob(xi);
    -log_sum_exp(xi) + pi.iter().zip(xi).map(|(p, v)| p * v).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax_prob(&[0.3; 4]), [0.25; 4]);
        let p = softmax_prob(&[2f64.ln(), 0.0]);
        assert_abs_diff_eq!(p[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 1.0 / 3.0, epsilon = 1e-15);
        let q = softmax_prob(&[2f64.ln() + 100.0, 100.0]);
        assert_abs_diff_eq!(q[0], p[0], epsilon = 1e-14);
        assert_eq!(softmax_prob(&[1000.0, 0.0]), [1.0, 0.0]);
    }

    #[test]
    fn likelihood_cases() {
        let uniform = vec![vec![0.2; 3]; 5];
        assert_abs_diff_eq!(
            log_likelihood(&[0, 1, 2, 0, 1], &uniform),
            -5.0 * 3f64.ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            log_likelihood(&[0], &[vec![2f64.ln(), 0.0]]),
            (2.0f64 / 3.0).ln(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(log_likelihood(&[0], &[vec![800.0, 0.0]]), 0.0);
    }

    #[test]
    fn bound_is_tight_at_xi() {
        let x = [0.3, -1.2, 2.0];
        assert_eq!(softmax_denominator_bound(&x, &x), (-log_sum_exp(&x)).exp());
    }

    #[test]
    fn single_class_bound_is_exact() {
        for (x, xi) in [(0.7, -3.0), (-2.0, 5.0), (0.0, 0.0)] {
            assert_abs_diff_eq!(
                softmax_denominator_bound(&[x], &[xi]),
                (-x).exp(),
                epsilon = 1e-12
            );
        }
    }
}
