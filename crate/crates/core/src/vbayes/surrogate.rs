//! The lower bound `L̂(q, ξ)` optimized by the EM loop, split by source.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use super::{
    label_residuals, linalg, log_sum_exp, scores_for, softmax_prob, VbHyperparams, VbProblem,
    VbState,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateTerms {
    /// Tangent-bounded log-likelihood of the labeled documents.
    pub labeled: f64,
    /// Same for the unlabeled documents, weighted by `p`.
    pub unlabeled: f64,
    /// Entropy of the Bernoulli indicators.
    pub indicator_entropy: f64,
    /// Prior and entropy of `α`.
    pub alpha: f64,
    /// Priors and entropies of `θ_k`, `m_k` and `V_k`, summed over leaves.
    pub branches: f64,
}

impl SurrogateTerms {
    pub fn total(&self) -> f64 {
        self.labeled + self.unlabeled + self.indicator_entropy + self.alpha + self.branches
    }
}

/// `ln Γ_h(x)`.
fn ln_multigamma(h: usize, x: f64) -> f64 {
    let hf = h as f64;
    hf * (hf - 1.0) / 4.0 * PI.ln()
        + (1..=h)
            .map(|i| ln_gamma(x + (1.0 - i as f64) / 2.0))
            .sum::<f64>()
}

/// Log normalizer of a Wishart with log-determinant `ln|W|`.
fn ln_wishart_norm(h: usize, ln_det_w: f64, nu: f64) -> f64 {
    let hf = h as f64;
    -nu / 2.0 * ln_det_w - nu * hf / 2.0 * 2f64.ln() - ln_multigamma(h, nu / 2.0)
}

fn bernoulli_entropy(p: f64) -> f64 {
    let t = |v: f64| if v > 0.0 { -v * v.ln() } else { 0.0 };
    t(p) + t(1.0 - p)
}

/// Evaluates `L̂(q, ξ)` for the current state.
pub fn surrogate(problem: &VbProblem, state: &VbState, hyper: &VbHyperparams) -> SurrogateTerms {
    let h = problem.height();
    let hf = h as f64;
    let ln2pi = (2.0 * PI).ln();

    let es_lab = scores_for(problem, state, &problem.labeled);
    let es_unl = scores_for(problem, state, &problem.unlabeled);
    let (zhat, zz) = label_residuals(problem, state);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    // Σ_k z_k E s_k − ln g(ξ) − π(ξ)ᵀ(E s − ξ) = ẑᵀE s + [π(ξ)ᵀξ − ln g(ξ)]
    let labeled = es_lab
        .iter()
        .zip(&zhat)
        .zip(&state.xi)
        .map(|((es, zh), xi)| dot(zh, es) + dot(&softmax_prob(xi), xi) - log_sum_exp(xi))
        .sum();
    let unlabeled = es_unl
        .iter()
        .zip(&zz)
        .zip(state.xi_tilde.iter().zip(&state.p))
        .map(|((es, zh), (xi, p))| {
            let total: f64 = p.iter().sum();
            dot(zh, es) + total * (dot(&softmax_prob(xi), xi) - log_sum_exp(xi))
        })
        .sum();
    let indicator_entropy = state
        .p
        .iter()
        .flatten()
        .map(|&p| bernoulli_entropy(p))
        .sum();

    let a = hyper.a;
    let alpha_sq: f64 = state.alpha0.iter().map(|v| v * v).sum();
    let alpha = hf / 2.0 * (a / (2.0 * PI)).ln() - a / 2.0 * (alpha_sq + hf / a)
        + hf / 2.0 * (2.0 * PI * std::f64::consts::E / a).ln();

    let w_prior = linalg::to_matrix(&hyper.w_prior);
    let ln_det_prior = linalg::log_det_spd(&w_prior).unwrap_or(f64::NAN);
    let w_prior_inv = linalg::spd_inverse(&w_prior);
    let m0 = DVector::from_vec(hyper.m0.clone());
    let (b, nu) = (hyper.b, hyper.nu);
    let (bp, nup) = (state.b_prime, state.nu_prime);

    let mut branches = 0.0;
    for f in &state.leaves {
        let w = linalg::to_matrix(&f.w);
        let s = linalg::to_matrix(&f.theta_cov);
        let (Some(ln_det_w), Some(ln_det_s), Some(w_prior_inv)) = (
            linalg::log_det_spd(&w),
            linalg::log_det_spd(&s),
            w_prior_inv.as_ref(),
        ) else {
            return SurrogateTerms {
                labeled,
                unlabeled,
                indicator_entropy,
                alpha,
                branches: f64::NAN,
            };
        };
        let e_ln_v: f64 = (1..=h)
            .map(|i| digamma((nup + 1.0 - i as f64) / 2.0))
            .sum::<f64>()
            + hf * 2f64.ln()
            + ln_det_w;
        let ev = &w * nup;
        let d = DVector::from_vec(f.m_prime.clone()) - DVector::from_vec(f.m0k.clone());
        let dm = DVector::from_vec(f.m0k.clone()) - &m0;

        let theta_prior = 0.5 * e_ln_v
            - hf / 2.0 * ln2pi
            - 0.5 * ((&ev * (&s + &d * d.transpose())).trace() + hf / bp);
        let mean_prior = 0.5 * (hf * b.ln() + e_ln_v)
            - hf / 2.0 * ln2pi
            - b / 2.0 * ((dm.transpose() * &ev * &dm)[(0, 0)] + hf / bp);
        let prec_prior = ln_wishart_norm(h, ln_det_prior, nu) + (nu - hf - 1.0) / 2.0 * e_ln_v
            - 0.5 * (w_prior_inv * &ev).trace();
        let mean_entropy = -(0.5 * (hf * bp.ln() + e_ln_v) - hf / 2.0 * ln2pi - hf / 2.0);
        let prec_entropy =
            -ln_wishart_norm(h, ln_det_w, nup) - (nup - hf - 1.0) / 2.0 * e_ln_v + nup * hf / 2.0;
        let theta_entropy = 0.5 * ln_det_s + hf / 2.0 * (1.0 + ln2pi);
        branches +=
            theta_prior + mean_prior + prec_prior + mean_entropy + prec_entropy + theta_entropy;
    }

    SurrogateTerms {
        labeled,
        unlabeled,
        indicator_entropy,
        alpha,
        branches,
    }
}
