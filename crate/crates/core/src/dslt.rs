//! Pathwise evaluation of `α_ε = ∫∫_{0<s<t<T} p'_ε(B_t - B_s) ds dt` and of its
//! Wiener chaos components.
//!
//! Double integrals over the triangle use the cell-midpoint rule: cell `(i, l)`
//! with `i < l` contributes `f(B_{c_l} - B_{c_i}) dt²` and diagonal cells are
//! dropped. Increments between cell centres have the same joint law as
//! increments between grid nodes, so the sum runs over node pairs `j < k` of
//! `t_0, ..., t_{n-1}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{alpha_scaling_exponent, beta_q, chaos_scaling_exponent, ChaosKernelSpec, HurstModel};
use crate::sim::{FbmPath, GridSpec};

/// Highest chaos index evaluated by [`chaos_projections`].
pub const MAX_PROJECTION_Q: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DsltEstimate {
    pub raw: f64,
    /// `ε^{3/2 - 1/H} raw`
    pub scaled: f64,
    pub eps: f64,
    pub grid: GridSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaosProjectionEstimate {
    pub q: u32,
    pub raw: f64,
    /// `ε^{1 - 3/(4H)} raw`
    pub scaled: f64,
    pub eps: f64,
}

/// `ε^{3/2 - 1/H} raw`.
pub fn scale_alpha(model: &HurstModel, eps: f64, raw: f64) -> f64 {
    raw * eps.powf(alpha_scaling_exponent(model.hurst()))
}

/// `ε^{1 - 3/(4H)} raw`.
pub fn scale_chaos(model: &HurstModel, eps: f64, raw: f64) -> f64 {
    raw * eps.powf(chaos_scaling_exponent(model.hurst()))
}

fn check_eps(eps: f64, grid: &GridSpec) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::domain(format!("epsilon must be positive, got {eps}")));
    }
    if grid.dt() > eps.sqrt() {
        log::warn!(
            "grid step {} exceeds the kernel width sqrt(eps) = {}; the heat kernel is under-resolved",
            grid.dt(),
            eps.sqrt()
        );
    }
    Ok(())
}

/// `α_ε` on one path.
pub fn alpha_eps(path: &FbmPath, eps: f64) -> Result<DsltEstimate> {
    Ok(alpha_eps_multi(path, &[eps])?.remove(0))
}

/// `α_ε` for several `ε` in a single sweep over the pairs.
pub fn alpha_eps_multi(path: &FbmPath, eps: &[f64]) -> Result<Vec<DsltEstimate>> {
    for &e in eps {
        check_eps(e, &path.grid)?;
    }
    let v = &path.values[..path.grid.n()];
    // p'_ε(x) = -x exp(-x²/(2ε)) / (ε sqrt(2πε))
    let amp: Vec<f64> = eps.iter().map(|&e| -1.0 / (e * (2.0 * std::f64::consts::PI * e).sqrt())).collect();
    let rate: Vec<f64> = eps.iter().map(|&e| -0.5 / e).collect();
    let mut sums = vec![0.0; eps.len()];
    let mut acc = vec![0.0; eps.len()];
    for j in 0..v.len() {
        acc.iter_mut().for_each(|a| *a = 0.0);
        let bj = v[j];
        for &bk in &v[j + 1..] {
            let d = bk - bj;
            let d2 = d * d;
            for (a, &r) in acc.iter_mut().zip(&rate) {
                *a += d * (r * d2).exp();
            }
        }
        for (s, a) in sums.iter_mut().zip(&acc) {
            *s += a;
        }
    }
    let dt2 = path.grid.dt().powi(2);
    Ok(eps
        .iter()
        .zip(sums.iter().zip(&amp))
        .map(|(&e, (&s, &a))| {
            let raw = s * a * dt2;
            DsltEstimate { raw, scaled: scale_alpha(&path.model, e, raw), eps: e, grid: path.grid }
        })
        .collect())
}

/// `J_{2q-1}[α_ε]`, the component of `α_ε` in the chaos of order `2q - 1`.
///
/// Evaluated as the Riemann sum of
/// `(-1)^q β_q (ε + (t-s)^{2H})^{-q-1/2} (t-s)^{(2q-1)H} H_{2q-1}((B_t - B_s)/(t-s)^H)`.
pub fn chaos_projection(path: &FbmPath, spec: &ChaosKernelSpec) -> Result<ChaosProjectionEstimate> {
    let all = chaos_projections(path, spec.eps(), spec.q())?;
    Ok(all[spec.q() as usize - 1])
}

/// Components `q = 1, ..., max_q` in one sweep.
pub fn chaos_projections(path: &FbmPath, eps: f64, max_q: u32) -> Result<Vec<ChaosProjectionEstimate>> {
    if max_q == 0 || max_q > MAX_PROJECTION_Q {
        return Err(Error::domain(format!("chaos index must be in 1..={MAX_PROJECTION_Q}, got {max_q}")));
    }
    check_eps(eps, &path.grid)?;
    let n = path.grid.n();
    let h = path.model.hurst();
    let dt = path.grid.dt();
    let nq = max_q as usize;
    let top = 2 * nq - 1;
    // weights[m * nq + (q-1)] and inv_sd[m] for lag m dt
    let mut weights = vec![0.0; n * nq];
    let mut inv_sd = vec![0.0; n];
    for m in 1..n {
        let u = m as f64 * dt;
        let sd = u.powf(h);
        inv_sd[m] = 1.0 / sd;
        let base = eps + sd * sd;
        for q in 1..=nq {
            let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
            weights[m * nq + q - 1] =
                sign * beta_q(q as u32) * base.powf(-(q as f64) - 0.5) * sd.powi(2 * q as i32 - 1);
        }
    }
    let v = &path.values[..n];
    let mut sums = vec![0.0; nq];
    let mut herm = vec![0.0; top + 1];
    for j in 0..n {
        for k in j + 1..n {
            let m = k - j;
            let z = (v[k] - v[j]) * inv_sd[m];
            herm[0] = 1.0;
            herm[1] = z;
            for d in 1..top {
                herm[d + 1] = z * herm[d] - d as f64 * herm[d - 1];
            }
            let w = &weights[m * nq..(m + 1) * nq];
            for q in 0..nq {
                sums[q] += w[q] * herm[2 * q + 1];
            }
        }
    }
    let dt2 = dt * dt;
    Ok((1..=max_q)
        .map(|q| {
            let raw = sums[q as usize - 1] * dt2;
            ChaosProjectionEstimate { q, raw, scaled: scale_chaos(&path.model, eps, raw), eps }
        })
        .collect())
}

/// `Σ_{j<k} H_degree((B_{t_k} - B_{t_j}) / ((k-j) dt)^H) dt²`, the Hermite functional of
/// normalised increments with unit weights. Even degrees probe the even chaoses.
pub fn hermite_functional(path: &FbmPath, degree: usize) -> f64 {
    let n = path.grid.n();
    let h = path.model.hurst();
    let dt = path.grid.dt();
    let inv_sd: Vec<f64> = (0..n).map(|m| if m == 0 { 0.0 } else { (m as f64 * dt).powf(-h) }).collect();
    let v = &path.values[..n];
    let mut herm = vec![0.0; degree + 1];
    let mut sum = 0.0;
    for j in 0..n {
        for k in j + 1..n {
            let z = (v[k] - v[j]) * inv_sd[k - j];
            herm[0] = 1.0;
            if degree > 0 {
                herm[1] = z;
            }
            for d in 1..degree {
                herm[d + 1] = z * herm[d] - d as f64 * herm[d - 1];
            }
            sum += herm[degree];
        }
    }
    sum * dt * dt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::heat_kernel_deriv;

    fn flat(h: f64, n: usize) -> FbmPath {
        let m = HurstModel::new(h, 1.0).unwrap();
        let g = GridSpec::new(n, 1.0).unwrap();
        FbmPath::from_values(m, g, vec![0.0; n + 1]).unwrap()
    }

    fn wiggly(h: f64, n: usize) -> FbmPath {
        let m = HurstModel::new(h, 1.0).unwrap();
        let g = GridSpec::new(n, 1.0).unwrap();
        let values = (0..=n).map(|k| (0.37 * k as f64).sin() * 0.2).collect();
        FbmPath::from_values(m, g, values).unwrap()
    }

    #[test]
    fn constant_path_gives_zero() {
        let p = flat(0.7, 32);
        assert_eq!(alpha_eps(&p, 0.01).unwrap().raw, 0.0);
        for est in chaos_projections(&p, 0.01, 4).unwrap() {
            assert_eq!(est.raw, 0.0);
        }
    }

    #[test]
    fn odd_in_the_path() {
        let p = wiggly(0.7, 40);
        let mut neg = p.clone();
        neg.values.iter_mut().for_each(|v| *v = -*v);
        let a = alpha_eps(&p, 0.05).unwrap().raw;
        let b = alpha_eps(&neg, 0.05).unwrap().raw;
        assert!(a != 0.0);
        assert_eq!(a, -b);
    }

    #[test]
    fn matches_direct_pair_sum() {
        let p = wiggly(0.7, 30);
        let eps = 0.02;
        let dt = p.grid.dt();
        let mut direct = 0.0;
        for j in 0..30 {
            for k in j + 1..30 {
                direct += heat_kernel_deriv(eps, p.values[k] - p.values[j]).unwrap() * dt * dt;
            }
        }
        let est = alpha_eps(&p, eps).unwrap();
        assert!((est.raw - direct).abs() < 1e-12 * direct.abs());
        assert_eq!(est.scaled, scale_alpha(&p.model, eps, est.raw));
        let multi = alpha_eps_multi(&p, &[0.5, eps]).unwrap();
        assert_eq!(multi[1].raw, est.raw);
    }

    #[test]
    fn first_chaos_closed_form() {
        let p = wiggly(0.8, 30);
        let eps = 0.03;
        let dt = p.grid.dt();
        let mut direct = 0.0;
        for j in 0..30 {
            for k in j + 1..30 {
                let u = (k - j) as f64 * dt;
                direct += (eps + u.powf(1.6)).powf(-1.5) * (p.values[k] - p.values[j]);
            }
        }
        direct *= -dt * dt / (2.0 * std::f64::consts::PI).sqrt();
        let spec = ChaosKernelSpec::new(1, eps, p.model).unwrap();
        let est = chaos_projection(&p, &spec).unwrap();
        assert!((est.raw - direct).abs() < 1e-12 * direct.abs());
    }

    #[test]
    fn argument_checks() {
        let p = flat(0.7, 8);
        assert!(alpha_eps(&p, 0.0).is_err());
        assert!(chaos_projections(&p, 0.1, 0).is_err());
        assert!(chaos_projections(&p, -0.1, 1).is_err());
    }

    #[test]
    fn scaling_factors() {
        let m = HurstModel::new(0.7, 1.0).unwrap();
        assert_eq!(scale_alpha(&m, 1.0, 3.5), 3.5);
        assert_eq!(scale_chaos(&m, 1.0, 3.5), 3.5);
        let f = scale_alpha(&m, 1e-3, 1.0);
        assert!((f - 1e-3f64.powf(1.0 / 14.0)).abs() < 1e-15);
    }
}
