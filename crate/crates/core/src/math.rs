//! Special functions used throughout the crate.
//!
//! Hermite polynomials follow the **probabilists'** convention
//! `H_q(x) = (-1)^q e^{x^2/2} d^q/dx^q e^{-x^2/2}`, so that `H_0 = 1`,
//! `H_1 = x`, `H_2 = x^2 - 1`, `H_3 = x^3 - 3x` and
//! `E[H_p(Z) H_q(Z)] = q! 1{p = q}` for a standard normal `Z`. Every chaos
//! projection in [`crate::dslt`] depends on this normalisation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Evaluates probabilists' Hermite polynomials up to a fixed degree with the
/// three-term recurrence `H_{q+1}(x) = x H_q(x) - q H_{q-1}(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HermiteEvaluator {
    max_degree: usize,
}

impl HermiteEvaluator {
    pub fn new(max_degree: usize) -> Self {
        Self { max_degree }
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Fills `out[k] = H_k(x)` for `k = 0..=max_degree`.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        debug_assert!(out.len() > self.max_degree);
        out[0] = 1.0;
        if self.max_degree == 0 {
            return;
        }
        out[1] = x;
        for k in 1..self.max_degree {
            out[k + 1] = x * out[k] - k as f64 * out[k - 1];
        }
    }

    pub fn eval_all(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.max_degree + 1];
        self.eval_into(x, &mut out);
        out
    }

    pub fn eval(&self, q: usize, x: f64) -> Result<f64> {
        if q > self.max_degree {
            return Err(Error::domain(format!(
                "degree {q} exceeds evaluator maximum {}",
                self.max_degree
            )));
        }
        hermite(q, x)
    }
}

/// Probabilists' Hermite polynomial `H_q(x)`.
pub fn hermite(q: usize, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain(format!("hermite argument must be finite, got {x}")));
    }
    Ok(hermite_unchecked(q, x))
}

#[inline]
pub(crate) fn hermite_unchecked(q: usize, x: f64) -> f64 {
    if q == 0 {
        return 1.0;
    }
    let (mut prev, mut cur) = (1.0, x);
    for k in 1..q {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

fn check_variance(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("heat kernel variance must be positive, got {eps}")))
    }
}

/// Centered Gaussian density with variance `eps`.
pub fn heat_kernel(eps: f64, x: f64) -> Result<f64> {
    check_variance(eps)?;
    Ok((2.0 * PI * eps).powf(-0.5) * (-x * x / (2.0 * eps)).exp())
}

/// Spatial derivative of [`heat_kernel`]: `-(x/eps) p_eps(x)`.
pub fn heat_kernel_deriv(eps: f64, x: f64) -> Result<f64> {
    let p = heat_kernel(eps, x)?;
    Ok(-(x / eps) * p)
}

/// Beta function `B(a, b)` through log-Gamma.
pub fn beta_fn(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::domain(format!("beta arguments must be positive, got ({a}, {b})")));
    }
    Ok(ln_beta(a, b).exp())
}

pub(crate) fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Closed form of `∫_0^∞ a^alpha (c + a^beta)^gamma da`.
///
/// Requires `c, beta > 0`, `alpha > -1` and `1 + alpha + gamma*beta < 0`; outside
/// that region the integral diverges and an error is returned.
pub fn lemma_beta_integral(c: f64, beta: f64, alpha: f64, gamma: f64) -> Result<f64> {
    if !(c > 0.0 && beta > 0.0) {
        return Err(Error::domain(format!("need c > 0 and beta > 0, got c = {c}, beta = {beta}")));
    }
    if !(alpha > -1.0) {
        return Err(Error::Divergent(format!("alpha = {alpha} <= -1: divergent at the origin")));
    }
    let tail = 1.0 + alpha + gamma * beta;
    if !(tail < 0.0) {
        return Err(Error::Divergent(format!(
            "1 + alpha + gamma*beta = {tail} >= 0: divergent at infinity"
        )));
    }
    let ln_val = -beta.ln() + (tail / beta) * c.ln() + ln_beta((alpha + 1.0) / beta, -tail / beta);
    Ok(ln_val.exp())
}

/// Standard normal cumulative distribution function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `n`-point Gauss–Hermite rule for the standard normal measure.
///
/// Returns `(nodes, weights)` with `Σ w_i f(x_i) ≈ E[f(Z)]`, exact for
/// polynomials of degree `< 2n`. Nodes come from the Golub–Welsch eigenproblem
/// and are polished by Newton steps on the orthonormal recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_hermite needs at least one node");
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let off = (k as f64).sqrt();
        jacobi[(k, k - 1)] = off;
        jacobi[(k - 1, k)] = off;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.total_cmp(b));

    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (psi_n, psi_nm1) = orthonormal_hermite_pair(n, *x);
            // ψ_n' = sqrt(n) ψ_{n-1}
            let step = psi_n / ((n as f64).sqrt() * psi_nm1);
            *x -= step;
            if step.abs() < 1e-15 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, psi_nm1) = orthonormal_hermite_pair(n, *x);
        weights.push(1.0 / (n as f64 * psi_nm1 * psi_nm1));
    }
    (nodes, weights)
}

/// `(ψ_n(x), ψ_{n-1}(x))` with `ψ_k = H_k / sqrt(k!)`.
fn orthonormal_hermite_pair(n: usize, x: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..n {
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    #[test]
    fn hermite_low_degrees() {
        assert_eq!(hermite(0, 5.3).unwrap(), 1.0);
        assert_eq!(hermite(1, -2.5).unwrap(), -2.5);
        assert_eq!(hermite(3, 2.0).unwrap(), 2.0);
        assert_eq!(hermite(2, 3.0).unwrap(), 8.0);
        assert!(hermite(2, f64::NAN).is_err());
        assert!(hermite(2, f64::INFINITY).is_err());
    }

    #[test]
    fn hermite_recurrence_holds() {
        for q in 1..=15usize {
            for xi in -3..=3 {
                let x = xi as f64;
                let r = hermite(q + 1, x).unwrap() - x * hermite(q, x).unwrap()
                    + q as f64 * hermite(q - 1, x).unwrap();
                let scale = hermite(q + 1, x).unwrap().abs().max(1.0);
                assert!(r.abs() <= 1e-15 * scale, "q={q} x={x} residual {r}");
            }
        }
    }

    #[test]
    fn evaluator_matches_scalar() {
        let ev = HermiteEvaluator::new(9);
        let all = ev.eval_all(0.37);
        for (q, v) in all.iter().enumerate() {
            assert_eq!(*v, hermite(q, 0.37).unwrap());
        }
        assert!(ev.eval(10, 0.1).is_err());
    }

    #[test]
    fn hermite_orthogonality_by_gauss_hermite() {
        let (x, w) = gauss_hermite(40);
        for p in 0..=7 {
            for q in 0..=7 {
                let ip: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(&xi, &wi)| wi * hermite(p, xi).unwrap() * hermite(q, xi).unwrap())
                    .sum();
                let expected = if p == q { factorial(q) } else { 0.0 };
                assert!((ip - expected).abs() < 1e-10 * factorial(q).max(1.0), "p={p} q={q} {ip}");
            }
        }
    }

    #[test]
    fn gauss_hermite_moments() {
        let (x, w) = gauss_hermite(20);
        let m0: f64 = w.iter().sum();
        let m4: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(4)).sum();
        assert!((m0 - 1.0).abs() < 1e-13);
        assert!((m4 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn heat_kernel_values() {
        let p = heat_kernel(1.0, 0.0).unwrap();
        assert!((p - 0.398_942_280_401_432_7).abs() < 1e-15);
        // (π/2)^{-1/2} e^{-1/2}, frozen from a 50-digit evaluation
        let p = heat_kernel(0.25, 0.5).unwrap();
        assert!((p - 0.483_941_449_038_286_7).abs() < 1e-15);
        assert_eq!(heat_kernel(0.3, 1.7).unwrap(), heat_kernel(0.3, -1.7).unwrap());
        assert!(heat_kernel(0.0, 1.0).is_err());
        assert!(heat_kernel(-1.0, 1.0).is_err());
    }

    #[test]
    fn heat_kernel_derivative() {
        assert_eq!(heat_kernel_deriv(0.7, 0.0).unwrap(), 0.0);
        let d = heat_kernel_deriv(1.0, 1.0).unwrap();
        assert!((d + 0.241_970_724_519_143_37).abs() < 1e-15);
        let h = 1e-5;
        for &(eps, x) in &[(0.1, 0.2), (1.0, -0.7), (0.01, 0.05)] {
            let fd = (heat_kernel(eps, x + h).unwrap() - heat_kernel(eps, x - h).unwrap()) / (2.0 * h);
            let an = heat_kernel_deriv(eps, x).unwrap();
            let bound = 1e-6 * an.abs().max(1.0) / eps;
            assert!((fd - an).abs() < bound, "eps={eps} x={x}: {fd} vs {an}");
        }
        assert!(heat_kernel_deriv(0.0, 1.0).is_err());
    }

    #[test]
    fn heat_kernel_integrates_to_one() {
        for &eps in &[1e-4f64, 1e-2, 1.0] {
            let s = eps.sqrt();
            let n = 4000;
            let (a, b) = (-20.0 * s, 20.0 * s);
            let h = (b - a) / n as f64;
            // composite Simpson
            let mut acc = heat_kernel(eps, a).unwrap() + heat_kernel(eps, b).unwrap();
            for i in 1..n {
                let c = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += c * heat_kernel(eps, a + i as f64 * h).unwrap();
            }
            let total = acc * h / 3.0;
            assert!((total - 1.0).abs() < 1e-10, "eps={eps}: {total}");
        }
    }

    #[test]
    fn beta_values() {
        assert!((beta_fn(1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        // B(2, 0.4) = 1 / (0.4 * 1.4), exact
        let b = beta_fn(2.0, 0.4).unwrap();
        assert!((b - 1.785_714_285_714_285_7).abs() < 1e-13);
        assert!(beta_fn(0.0, 1.0).is_err());
        assert!(beta_fn(1.0, -2.0).is_err());
    }

    #[test]
    fn power_integral_elementary_cases() {
        assert!((lemma_beta_integral(1.0, 1.0, 0.0, -2.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((lemma_beta_integral(2.0, 1.0, 0.0, -2.0).unwrap() - 0.5).abs() < 1e-14);
        assert!(matches!(
            lemma_beta_integral(1.0, 1.0, 0.0, -1.0),
            Err(Error::Divergent(_))
        ));
        assert!(matches!(
            lemma_beta_integral(1.0, 1.0, -1.5, -3.0),
            Err(Error::Divergent(_))
        ));
        assert!(lemma_beta_integral(0.0, 1.0, 0.0, -2.0).is_err());
    }

    #[test]
    fn normal_cdf_reference_points() {
        assert!((std_normal_cdf(0.0) - 0.5).abs() < 1e-16);
        let v = std_normal_cdf(1.959_963_984_540_054);
        assert!((v - 0.975).abs() < 1e-14, "{v:.17}");
        assert!((std_normal_cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-14);
    }
}
