//! The per-branch weight problem
//! `max cᵀθ − ψ‖θ − h‖²` over the probability simplex.
//!
//! The objective is a negated squared distance to `h + c/(2ψ)` plus a
//! constant, so the maximizer is the Euclidean projection of that point onto
//! the simplex.

/// Euclidean projection onto `{θ : θ ≥ 0, Σθ = 1}` (sort-and-threshold).
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut tau = 0.0;
    for (i, ui) in u.iter().enumerate() {
        acc += ui;
        let t = (acc - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            tau = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|x| (x - tau).max(0.0)).collect();
    renormalize(&mut out);
    out
}

fn renormalize(theta: &mut [f64]) {
    let s: f64 = theta.iter().sum();
    if s > 0.0 {
        theta.iter_mut().for_each(|t| *t /= s);
    }
}

/// `cᵀθ + sign·ψ‖θ − h‖²`, where `sign = −1` is the regularized problem.
pub fn objective(c: &[f64], theta: &[f64], psi: f64, penalty_sign: f64) -> f64 {
    let h = 1.0 / theta.len() as f64;
    let lin: f64 = c.iter().zip(theta).map(|(a, b)| a * b).sum();
    let dist: f64 = theta.iter().map(|t| (t - h) * (t - h)).sum();
    lin + penalty_sign * psi * dist
}

/// Largest violation of the optimality conditions of the regularized problem:
/// with gradient `g = c − 2ψ(θ − h)` and multiplier `ν = max_{θ_l>0} g_l`,
/// every active coordinate must have `g_l = ν` and every inactive one
/// `g_l ≤ ν`; the simplex constraints must hold.
pub fn kkt_residual(c: &[f64], theta: &[f64], psi: f64) -> f64 {
    let h = 1.0 / theta.len() as f64;
    let g: Vec<f64> = c
        .iter()
        .zip(theta)
        .map(|(ci, t)| ci - 2.0 * psi * (t - h))
        .collect();
    let active = |t: f64| t > 1e-12;
    let nu = theta
        .iter()
        .zip(&g)
        .filter(|(t, _)| active(**t))
        .map(|(_, g)| *g)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut r = (theta.iter().sum::<f64>() - 1.0).abs();
    for (t, gl) in theta.iter().zip(&g) {
        r = r.max((-t).max(0.0));
        r = r.max(if active(*t) {
            (gl - nu).abs()
        } else {
            (gl - nu).max(0.0)
        });
    }
    r
}

/// Maximizer of `cᵀθ − ψ‖θ − h‖²` on the simplex.
pub fn solve_regularized(c: &[f64], psi: f64) -> Vec<f64> {
    let h = 1.0 / c.len() as f64;
    let target: Vec<f64> = c.iter().map(|ci| h + ci / (2.0 * psi)).collect();
    project_to_simplex(&target)
}

/// Maximizer of `cᵀθ + ψ‖θ − h‖²` on the simplex. The objective is convex,
/// so the maximum sits at a vertex; ties go to the lowest level.
pub fn solve_literal(c: &[f64], psi: f64) -> Vec<f64> {
    let n = c.len();
    let vertex = |l: usize| {
        let mut v = vec![0.0; n];
        v[l] = 1.0;
        v
    };
    let best = (0..n)
        .map(|l| (l, objective(c, &vertex(l), psi, 1.0)))
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (l, v)| if v > acc.1 { (l, v) } else { acc },
        );
    vertex(best.0)
}
