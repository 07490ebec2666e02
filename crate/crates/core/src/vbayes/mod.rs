//! Variational-Bayes training of the branch weights and entropy model.
//!
//! The class of a labeled document follows a softmax over its hierarchical
//! similarities; `α` has a Gaussian prior, every `θ_k` a Gaussian prior whose
//! mean and precision carry a Normal–Wishart hyperprior, and unlabeled
//! documents contribute Bernoulli class indicators. The posterior is
//! approximated by a factorized `q`, and the log-sum-exp in the likelihood is
//! replaced by its tangent plane at variational points `ξ`, which makes every
//! factor update closed form.
//!
//! Documents and centroids are taken at unit `Λ` (plain L2 normalization)
//! and stay fixed during the fit, so scores are bilinear in `α` and `θ_k`.

mod bound;
mod linalg;
mod surrogate;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bound::{
    log_denominator_bound, log_likelihood, log_sum_exp, softmax_denominator_bound, softmax_prob,
    tangent_offset,
};
pub use linalg::{repair_spd, SPD_FLOOR};
pub use surrogate::{surrogate, SurrogateTerms};

use crate::corpus::{Dictionary, TopicTree};
use crate::error::{Error, Result};
use crate::simcore::{lambda_weights, normalize, BranchWeights, HsimModel, WeightModel};
use crate::sparse::SparseVec;

/// How the Wishart scale is recombined from the `θ_k` moments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WishartUpdate {
    /// `W_k⁻¹ = W⁻¹ + E[θθᵀ] + b·m₀m₀ᵀ − b′·m₀ₖm₀ₖᵀ`, the conjugate update.
    #[default]
    Subtract,
    /// Same with `+ b′·m₀ₖm₀ₖᵀ`.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VbHyperparams {
    /// Precision of the `α` prior.
    pub a: f64,
    /// Scaling of the prior on the `θ_k` means.
    pub b: f64,
    /// Wishart degrees of freedom.
    pub nu: f64,
    /// Wishart scale matrix, `h × h`.
    pub w_prior: Vec<Vec<f64>>,
    /// Prior mean of every `θ_k`.
    pub m0: Vec<f64>,
    pub wishart_update: WishartUpdate,
}

impl VbHyperparams {
    /// `a = b = 1`, `ν = h + 1`, `m₀ = 1/h`, and a unit-diagonal `W` with
    /// off-diagonal `−1/(2h)` so that branch weights are negatively
    /// correlated a priori.
    pub fn defaults(height: usize) -> Self {
        let off = -1.0 / (2.0 * height as f64);
        let w_prior = (0..height)
            .map(|i| {
                (0..height)
                    .map(|j| if i == j { 1.0 } else { off })
                    .collect()
            })
            .collect();
        Self {
            a: 1.0,
            b: 1.0,
            nu: height as f64 + 1.0,
            w_prior,
            m0: vec![1.0 / height as f64; height],
            wishart_update: WishartUpdate::Subtract,
        }
    }

    /// Defaults with `a` and `ν` raised to the number of labeled documents.
    /// The tangent bound leaves the surrogate linear in the scores, so each
    /// `α` and `θ` update is a gradient step of length set by these
    /// precisions alone; at `a = 1` it overshoots once the sums run over
    /// hundreds of documents.
    pub fn scaled(height: usize, labeled: usize) -> Self {
        let n = labeled as f64;
        Self {
            a: n.max(1.0),
            nu: n.max(height as f64 + 1.0),
            ..Self::defaults(height)
        }
    }

    pub fn height(&self) -> usize {
        self.m0.len()
    }

    pub fn validate(&self, height: usize) -> Result<()> {
        if !(self.a > 0.0 && self.b > 0.0) {
            return Err(Error::invalid("a and b must be positive"));
        }
        if self.nu.is_nan() || self.nu <= height as f64 - 1.0 {
            return Err(Error::invalid(format!(
                "nu must exceed h - 1 = {}",
                height - 1
            )));
        }
        if self.m0.len() != height
            || self.w_prior.len() != height
            || self.w_prior.iter().any(|r| r.len() != height)
        {
            return Err(Error::Dimension(format!(
                "hyperparameters are not {height}-dimensional"
            )));
        }
        let w = linalg::to_matrix(&self.w_prior);
        if (&w - w.transpose()).abs().max() > 1e-12 || w.cholesky().is_none() {
            return Err(Error::invalid("W must be symmetric positive definite"));
        }
        Ok(())
    }
}

/// Fixed inputs of the fit: a model at `α = 0` supplying centroids and
/// entropy features, unit-normalized labeled and unlabeled documents.
#[derive(Debug, Clone)]
pub struct VbProblem {
    pub model: HsimModel,
    pub labeled: Vec<SparseVec>,
    pub labels: Vec<usize>,
    pub unlabeled: Vec<SparseVec>,
}

impl VbProblem {
    /// Centroids and entropies come from the labeled documents at `Λ = I`.
    pub fn new(
        dictionary: Dictionary,
        tree: TopicTree,
        labeled: &[(&SparseVec, usize)],
        unlabeled: &[&SparseVec],
    ) -> Result<Self> {
        let h = tree.height();
        let k = tree.leaf_count();
        let model = HsimModel::fit(
            dictionary,
            tree,
            labeled,
            vec![0.0; h],
            BranchWeights::uniform(h, k),
        )?;
        Self::with_model(model, labeled, unlabeled)
    }

    pub fn with_model(
        model: HsimModel,
        labeled: &[(&SparseVec, usize)],
        unlabeled: &[&SparseVec],
    ) -> Result<Self> {
        if labeled.is_empty() {
            return Err(Error::InsufficientData("no labeled documents".into()));
        }
        let k = model.leaf_count();
        if let Some((_, bad)) = labeled.iter().find(|(_, leaf)| *leaf >= k) {
            return Err(Error::OutOfRange {
                what: "leaf",
                value: *bad,
                limit: k,
            });
        }
        let unit = |x: &SparseVec| unit_normalize(x);
        Ok(Self {
            labeled: labeled.iter().map(|(x, _)| unit(x)).collect(),
            labels: labeled.iter().map(|(_, k)| *k).collect(),
            unlabeled: unlabeled.iter().map(|x| unit(x)).collect(),
            model,
        })
    }

    pub fn height(&self) -> usize {
        self.model.height()
    }

    pub fn leaves(&self) -> usize {
        self.model.leaf_count()
    }

    pub fn dim(&self) -> usize {
        self.model.dictionary.len()
    }

    /// `λ′_m = 1 + α₀ᵀι_m`, clamped like every other `Λ`.
    pub fn lambda(&self, alpha0: &[f64]) -> Vec<f64> {
        lambda_weights(alpha0, self.model.iota())
    }
}

fn unit_normalize(x: &SparseVec) -> SparseVec {
    let ones = vec![1.0; x.max_index().map_or(0, |m| m + 1)];
    normalize(x, &ones).vector
}

/// `xᵀΛμ_{ℓ,k}` for every leaf `k` and level `ℓ`, `x` used as given.
pub fn branch_sims(model: &HsimModel, x: &SparseVec, lambda: &[f64]) -> Vec<Vec<f64>> {
    let nodes: Vec<Vec<f64>> = (0..model.height())
        .map(|l| {
            model
                .centroids
                .level(l)
                .iter()
                .map(|mu| x.weighted_dot_dense(mu, lambda))
                .collect()
        })
        .collect();
    (0..model.leaf_count())
        .map(|k| {
            model
                .tree
                .branch(k)
                .iter()
                .enumerate()
                .map(|(l, &i)| nodes[l][i])
                .collect()
        })
        .collect()
}

/// `E s_k = xᵀΛ̃M_kE θ_k` for every leaf.
pub fn expected_scores(
    model: &HsimModel,
    x: &SparseVec,
    lambda: &[f64],
    means: &[Vec<f64>],
) -> Vec<f64> {
    branch_sims(model, x, lambda)
        .iter()
        .zip(means)
        .map(|(b, m)| b.iter().zip(m).map(|(u, v)| u * v).sum())
        .collect()
}

/// Parameters of one branch's factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafFactor {
    /// Mean of `q(m_k | V_k)`.
    pub m0k: Vec<f64>,
    /// Scale `W_k` of `q(V_k)`.
    pub w: Vec<Vec<f64>>,
    /// Mean of `q(θ_k)`.
    pub m_prime: Vec<f64>,
    /// Covariance of `q(θ_k)`: `(ν′W_k)⁻¹` at the last `θ` update.
    pub theta_cov: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VbState {
    /// Mean of `q(α)`; its covariance stays `a⁻¹I`.
    pub alpha0: Vec<f64>,
    pub leaves: Vec<LeafFactor>,
    pub nu_prime: f64,
    pub b_prime: f64,
    /// Variational points of the labeled documents, `N × K_h`.
    pub xi: Vec<Vec<f64>>,
    /// Variational points of the unlabeled documents, `T × K_h`.
    pub xi_tilde: Vec<Vec<f64>>,
    /// Bernoulli parameters `p_tk` of the unlabeled class indicators.
    pub p: Vec<Vec<f64>>,
    pub wishart_update: WishartUpdate,
}

impl VbState {
    pub fn theta_means(&self) -> Vec<Vec<f64>> {
        self.leaves.iter().map(|f| f.m_prime.clone()).collect()
    }

    /// The model with `α = α₀` and `θ_k = E θ_k`, scoring documents the way
    /// the fit did.
    pub fn to_model(&self, base: &HsimModel) -> Result<HsimModel> {
        let weights = WeightModel::new(self.alpha0.clone(), base.iota().clone());
        HsimModel::new(
            base.dictionary.clone(),
            base.tree.clone(),
            weights,
            base.centroids.clone(),
            BranchWeights(self.theta_means()),
        )
    }
}

/// Step 1: every factor at its prior, `ξ` at the prior-mean scores, `p`
/// uniform.
pub fn init_state(problem: &VbProblem, hyper: &VbHyperparams) -> Result<VbState> {
    let (h, k) = (problem.height(), problem.leaves());
    hyper.validate(h)?;
    let nu_prime = hyper.nu + 1.0;
    let w = linalg::to_matrix(&hyper.w_prior);
    let cov =
        linalg::spd_inverse(&(w.clone() * nu_prime)).ok_or(Error::SingularPrecision { leaf: 0 })?;
    let leaf = LeafFactor {
        m0k: hyper.m0.clone(),
        w: hyper.w_prior.clone(),
        m_prime: hyper.m0.clone(),
        theta_cov: linalg::from_matrix(&cov),
    };
    let mut state = VbState {
        alpha0: vec![0.0; h],
        leaves: vec![leaf; k],
        nu_prime,
        b_prime: hyper.b + 1.0,
        xi: Vec::new(),
        xi_tilde: Vec::new(),
        p: vec![vec![1.0 / k as f64; k]; problem.unlabeled.len()],
        wishart_update: hyper.wishart_update,
    };
    update_xi(problem, &mut state);
    Ok(state)
}

/// `(E θ_k, E[θ_kθ_kᵀ])` from `q(θ_k)`.
pub fn theta_moments(state: &VbState, leaf: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let f = &state.leaves[leaf];
    if linalg::to_matrix(&f.w).cholesky().is_none() {
        return Err(Error::SingularPrecision { leaf });
    }
    let mean = DVector::from_vec(f.m_prime.clone());
    let second = linalg::to_matrix(&f.theta_cov) + &mean * mean.transpose();
    Ok((mean, second))
}

/// `ẑ_nk = z_nk − π_k(ξ_n)` and `ẑẑ_tk = p_tk − π_k(ξ̃_t)·Σ_k′ p_tk′`.
pub fn label_residuals(problem: &VbProblem, state: &VbState) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let zhat = problem
        .labels
        .iter()
        .zip(&state.xi)
        .map(|(&k, xi)| {
            let mut r: Vec<f64> = softmax_prob(xi).into_iter().map(|p| -p).collect();
            r[k] += 1.0;
            r
        })
        .collect();
    let zz = state
        .p
        .iter()
        .zip(&state.xi_tilde)
        .map(|(p, xi)| {
            let total: f64 = p.iter().sum();
            p.iter()
                .zip(softmax_prob(xi))
                .map(|(pk, pi)| pk - pi * total)
                .collect()
        })
        .collect();
    (zhat, zz)
}

/// `R_k = Σ_n x_n ẑ_nk + Σ_t x̃_t ẑẑ_tk` as dense `|W|`-vectors.
fn residual_sums(problem: &VbProblem, state: &VbState) -> Vec<Vec<f64>> {
    let (zhat, zz) = label_residuals(problem, state);
    let mut r = vec![vec![0.0; problem.dim()]; problem.leaves()];
    let pairs = problem
        .labeled
        .iter()
        .zip(&zhat)
        .chain(problem.unlabeled.iter().zip(&zz));
    for (x, weights) in pairs {
        for (rk, w) in r.iter_mut().zip(weights) {
            x.add_into(rk, *w);
        }
    }
    r
}

/// `M_k E θ_k` as a dense `|W|`-vector.
fn branch_mean(problem: &VbProblem, leaf: usize, theta: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; problem.dim()];
    let cols = problem
        .model
        .centroids
        .branch_matrix(&problem.model.tree, leaf);
    for (mu, t) in cols.iter().zip(theta) {
        out.iter_mut().zip(mu.iter()).for_each(|(o, m)| *o += t * m);
    }
    out
}

/// Step 2: `q(m_k, V_k)` and `q(α)` from the current `q(θ)`, `ξ` and `p`.
/// Returns how many `W_k⁻¹` needed eigenvalue flooring.
pub fn update_hyper_factors(
    problem: &VbProblem,
    state: &mut VbState,
    hyper: &VbHyperparams,
) -> Result<usize> {
    let r = residual_sums(problem, state);
    let b_prime = state.b_prime;
    let m0 = DVector::from_vec(hyper.m0.clone());
    let w_inv = linalg::spd_inverse(&linalg::to_matrix(&hyper.w_prior))
        .ok_or_else(|| Error::invalid("W is not invertible"))?;
    let sign = match state.wishart_update {
        WishartUpdate::Subtract => -1.0,
        WishartUpdate::Literal => 1.0,
    };
    let mut repairs = 0;
    for leaf in 0..problem.leaves() {
        let (mean, second) = theta_moments(state, leaf)?;
        let m0k = (&mean + &m0 * hyper.b) / b_prime;
        let scale_inv = &w_inv
            + second
            + &m0 * m0.transpose() * hyper.b
            + &m0k * m0k.transpose() * (sign * b_prime);
        let (repaired, floored) = repair_spd(&scale_inv);
        if floored {
            repairs += 1;
            log::warn!(
                "leaf {leaf}: W_k^-1 lost definiteness, eigenvalues floored at {SPD_FLOOR:e}"
            );
        }
        let w = linalg::spd_inverse(&repaired).ok_or(Error::SingularPrecision { leaf })?;
        let f = &mut state.leaves[leaf];
        f.m0k = m0k.iter().copied().collect();
        f.w = linalg::from_matrix(&w);
    }

    let iota = problem.model.iota();
    let mut alpha0 = vec![0.0; problem.height()];
    for (leaf, rk) in r.iter().enumerate() {
        let mt = branch_mean(problem, leaf, &state.leaves[leaf].m_prime);
        for (m, (u, v)) in mt.iter().zip(rk).enumerate() {
            let uv = u * v;
            if uv != 0.0 {
                alpha0
                    .iter_mut()
                    .zip(iota.row(m))
                    .for_each(|(a, i)| *a += i * uv);
            }
        }
    }
    state.alpha0 = alpha0.into_iter().map(|v| v / hyper.a).collect();
    Ok(repairs)
}

/// Step 3: `q(θ_k)` with `E_αΛ = Λ(α₀)`:
/// `m′_k = m₀ₖ + (ν′W_k)⁻¹M_kᵀΛ̃R_k`.
pub fn update_theta_factor(problem: &VbProblem, state: &mut VbState) -> Result<()> {
    let r = residual_sums(problem, state);
    let lambda = problem.lambda(&state.alpha0);
    let nu_prime = state.nu_prime;
    for (leaf, rk) in r.iter().enumerate() {
        let cols = problem
            .model
            .centroids
            .branch_matrix(&problem.model.tree, leaf);
        let proj = DVector::from_iterator(
            cols.len(),
            cols.iter().map(|mu| {
                mu.iter()
                    .zip(&lambda)
                    .zip(rk)
                    .map(|((a, l), b)| a * l * b)
                    .sum::<f64>()
            }),
        );
        let f = &mut state.leaves[leaf];
        let w = linalg::to_matrix(&f.w);
        let cov = linalg::spd_inverse(&(w * nu_prime)).ok_or(Error::SingularPrecision { leaf })?;
        let m_prime = DVector::from_vec(f.m0k.clone()) + &cov * proj;
        f.m_prime = m_prime.iter().copied().collect();
        f.theta_cov = linalg::from_matrix(&cov);
    }
    Ok(())
}

fn scores_for(problem: &VbProblem, state: &VbState, docs: &[SparseVec]) -> Vec<Vec<f64>> {
    let lambda = problem.lambda(&state.alpha0);
    let means = state.theta_means();
    docs.par_iter()
        .map(|x| expected_scores(&problem.model, x, &lambda, &means))
        .collect()
}

/// `ζ_tk = E s_tk + Σ_k′ π_k′(ξ̃_t)(ξ̃_tk′ − E s_tk′)`.
pub fn zeta(expected: &[f64], xi_tilde: &[f64]) -> Vec<f64> {
    let pi = softmax_prob(xi_tilde);
    let shift: f64 = pi
        .iter()
        .zip(xi_tilde)
        .zip(expected)
        .map(|((p, x), e)| p * (x - e))
        .sum();
    expected.iter().map(|e| e + shift).collect()
}

/// `p_tk = exp(ζ_tk) / (exp(ζ_tk) + g(ξ̃_t))`.
pub fn bernoulli_from_zeta(zeta: &[f64], xi_tilde: &[f64]) -> Vec<f64> {
    let lg = log_sum_exp(xi_tilde);
    zeta.iter().map(|z| 1.0 / (1.0 + (lg - z).exp())).collect()
}

pub fn update_labels(problem: &VbProblem, state: &mut VbState) {
    let es = scores_for(problem, state, &problem.unlabeled);
    state.p = es
        .iter()
        .zip(&state.xi_tilde)
        .map(|(e, xi)| bernoulli_from_zeta(&zeta(e, xi), xi))
        .collect();
}

/// Step 4: `ξ_nk = x_nᵀΛ̃M_k m′_k`, likewise for `ξ̃`.
pub fn update_xi(problem: &VbProblem, state: &mut VbState) {
    state.xi = scores_for(problem, state, &problem.labeled);
    state.xi_tilde = scores_for(problem, state, &problem.unlabeled);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmRecord {
    pub iteration: usize,
    /// `L̂(q, ξ)` after the variational points were moved to the new scores.
    pub surrogate: f64,
    /// `L̂(q, ξ)` after the factor updates, before `ξ` moved.
    pub after_factors: f64,
    /// Largest absolute change of `α₀`, any `m′_k` or any `p_tk`.
    pub change: f64,
    pub alpha0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmFit {
    pub state: VbState,
    pub iterations: usize,
    pub last_change: f64,
    pub converged: bool,
    /// `L̂` at the initial state.
    pub initial_surrogate: f64,
    pub trace: Vec<EmRecord>,
    pub spd_repairs: usize,
}

fn max_change(before: &VbState, after: &VbState) -> f64 {
    let d = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    let mut c = d(&before.alpha0, &after.alpha0);
    for (x, y) in before.leaves.iter().zip(&after.leaves) {
        c = c.max(d(&x.m_prime, &y.m_prime));
    }
    for (x, y) in before.p.iter().zip(&after.p) {
        c = c.max(d(x, y));
    }
    c
}

/// One pass of steps 2–4; returns the record and the number of SPD repairs.
pub fn em_step(
    problem: &VbProblem,
    state: &mut VbState,
    hyper: &VbHyperparams,
    iteration: usize,
) -> Result<(EmRecord, usize)> {
    let before = state.clone();
    let repairs = update_hyper_factors(problem, state, hyper)?;
    update_theta_factor(problem, state)?;
    update_labels(problem, state);
    let after_factors = surrogate(problem, state, hyper).total();
    update_xi(problem, state);
    let record = EmRecord {
        iteration,
        surrogate: surrogate(problem, state, hyper).total(),
        after_factors,
        change: max_change(&before, state),
        alpha0: state.alpha0.clone(),
    };
    Ok((record, repairs))
}

/// Iterates steps 2–4 until the largest parameter change drops below `tol`.
/// Running out of iterations yields [`Error::NotConverged`] carrying the fit.
pub fn fit_em(problem: &VbProblem, hyper: &VbHyperparams, config: EmConfig) -> Result<EmFit> {
    let mut state = init_state(problem, hyper)?;
    let initial_surrogate = surrogate(problem, &state, hyper).total();
    let mut trace = Vec::new();
    let mut spd_repairs = 0;
    let mut last_change = f64::INFINITY;
    for iteration in 1..=config.max_iters {
        let (record, repairs) = em_step(problem, &mut state, hyper, iteration)?;
        spd_repairs += repairs;
        last_change = record.change;
        log::debug!(
            "EM iteration {iteration}: surrogate {:.6}, change {:.3e}",
            record.surrogate,
            record.change
        );
        trace.push(record);
        if last_change < config.tol {
            return Ok(EmFit {
                state,
                iterations: iteration,
                last_change,
                converged: true,
                initial_surrogate,
                trace,
                spd_repairs,
            });
        }
    }
    Err(Error::NotConverged(Box::new(EmFit {
        state,
        iterations: config.max_iters,
        last_change,
        converged: false,
        initial_surrogate,
        trace,
        spd_repairs,
    })))
}

/// Softmax of the scores at `α = α₀`, `θ_k = m′_k`.
pub fn predict_map(model: &HsimModel, state: &VbState, x: &SparseVec) -> Vec<f64> {
    let lambda = lambda_weights(&state.alpha0, model.iota());
    softmax_prob(&expected_scores(
        model,
        &unit_normalize(x),
        &lambda,
        &state.theta_means(),
    ))
}

/// Bernoulli parameters `p_k` for a document outside the fit: `ξ̃` is set to
/// the expected scores, where `ζ_k` reduces to `E s_k`.
pub fn predict_evidence(model: &HsimModel, state: &VbState, x: &SparseVec) -> Vec<f64> {
    let lambda = lambda_weights(&state.alpha0, model.iota());
    let es = expected_scores(model, &unit_normalize(x), &lambda, &state.theta_means());
    bernoulli_from_zeta(&zeta(&es, &es), &es)
}

/// Scales a row of `p_tk` to sum to one for display.
pub fn normalize_row(p: &[f64]) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    if s > 0.0 {
        p.iter().map(|v| v / s).collect()
    } else {
        vec![1.0 / p.len() as f64; p.len()]
    }
}
