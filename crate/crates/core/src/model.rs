//! Closed-form covariance machinery of fractional Brownian motion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used to decide that a Hurst value sits on a critical boundary.
pub const CRITICAL_TOL: f64 = 1e-12;

/// Hurst parameter and time horizon of an fBm on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurstModel {
    hurst: f64,
    horizon: f64,
}

/// Position of `H` relative to the thresholds that govern the chaos components
/// of order `2q - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChaosRegime {
    /// `H < 2/3`: outside the theory handled here.
    Subcritical,
    /// `2/3 < H < 3/4`: chaos components converge in L².
    L2Convergent,
    /// `3/4 < H < (4q-3)/(4q-2)`: scaled chaos components satisfy a CLT.
    ScaledClt,
    /// `H > (4q-3)/(4q-2)`.
    BeyondWindow,
}

impl HurstModel {
    pub fn new(hurst: f64, horizon: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(Error::domain(format!("Hurst parameter must lie in (0, 1), got {hurst}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { hurst, horizon })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `(4q-3)/(4q-2)`, the upper edge of the CLT window for chaos order `2q-1`.
    pub fn chaos_upper_edge(q: u32) -> f64 {
        let q = q as f64;
        (4.0 * q - 3.0) / (4.0 * q - 2.0)
    }

    /// Rejects `H` equal to 2/3, to 3/4, or (when `q >= 2` is given) to `(4q-3)/(4q-2)`.
    pub fn ensure_not_critical(&self, q: Option<u32>) -> Result<()> {
        let h = self.hurst;
        let mut edges = vec![(2.0 / 3.0, "2/3".to_string()), (0.75, "3/4".to_string())];
        if let Some(q) = q.filter(|&q| q >= 2) {
            edges.push((Self::chaos_upper_edge(q), format!("(4q-3)/(4q-2) with q = {q}")));
        }
        for (edge, name) in edges {
            if (h - edge).abs() < CRITICAL_TOL {
                return Err(Error::CriticalHurst { hurst: h, which: name });
            }
        }
        Ok(())
    }

    /// Classifies `H` for chaos index `q`; critical values are rejected.
    pub fn regime(&self, q: u32) -> Result<ChaosRegime> {
        self.ensure_not_critical(Some(q))?;
        let h = self.hurst;
        Ok(if h < 2.0 / 3.0 {
            ChaosRegime::Subcritical
        } else if h < 0.75 {
            ChaosRegime::L2Convergent
        } else if q >= 2 && h < Self::chaos_upper_edge(q) {
            ChaosRegime::ScaledClt
        } else if q >= 2 {
            ChaosRegime::BeyondWindow
        } else {
            ChaosRegime::ScaledClt
        })
    }

    /// `E[B_t B_s] = (t^{2H} + s^{2H} - |t-s|^{2H}) / 2`.
    pub fn covariance(&self, t: f64, s: f64) -> Result<f64> {
        if t < 0.0 || s < 0.0 {
            return Err(Error::domain(format!("times must be nonnegative, got ({t}, {s})")));
        }
        Ok(covariance_raw(2.0 * self.hurst, t, s))
    }

    /// `μ(x, u1, u2) = E[B_{u1} (B_{x+u2} - B_x)]`.
    pub fn mu(&self, x: f64, u1: f64, u2: f64) -> Result<f64> {
        if x < 0.0 || u1 < 0.0 || u2 < 0.0 {
            return Err(Error::domain(format!(
                "mu arguments must be nonnegative, got ({x}, {u1}, {u2})"
            )));
        }
        Ok(mu_raw(2.0 * self.hurst, x, u1, u2))
    }

    pub fn increment_cross_cov(&self, pair: &IncrementPair) -> f64 {
        let (x, u1, u2) = pair.lag_lengths();
        mu_raw(2.0 * self.hurst, x, u1, u2)
    }

    /// Covariance matrix of `(B_{t1} - B_{s1}, B_{t2} - B_{s2})`.
    pub fn sigma_matrix(&self, pair: &IncrementPair) -> Sym2 {
        let h2 = 2.0 * self.hurst;
        let (x, u1, u2) = pair.lag_lengths();
        Sym2 {
            a11: u1.powf(h2),
            a12: mu_raw(h2, x, u1, u2),
            a22: u2.powf(h2),
        }
    }
}

#[inline]
fn apow(x: f64, h2: f64) -> f64 {
    x.abs().powf(h2)
}

#[inline]
pub(crate) fn covariance_raw(h2: f64, t: f64, s: f64) -> f64 {
    0.5 * (apow(t, h2) + apow(s, h2) - apow(t - s, h2))
}

#[inline]
pub(crate) fn mu_raw(h2: f64, x: f64, u1: f64, u2: f64) -> f64 {
    0.5 * (apow(x + u2, h2) - apow(x + u2 - u1, h2) - apow(x, h2) + apow(x - u1, h2))
}

/// Symmetric 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl Sym2 {
    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a12
    }

    /// `self + shift * I`.
    pub fn shifted(&self, shift: f64) -> Sym2 {
        Sym2 { a11: self.a11 + shift, a12: self.a12, a22: self.a22 + shift }
    }
}

/// Which of the three ordered configurations a pair of intervals falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// `s1 <= s2 <= t1 <= t2`
    S1,
    /// `s1 <= s2 <= t2 <= t1`
    S2,
    /// `s1 <= t1 <= s2 <= t2`
    S3,
}

/// Two intervals `[s1, t1]`, `[s2, t2]` with `s1 <= s2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementPair {
    pub s1: f64,
    pub t1: f64,
    pub s2: f64,
    pub t2: f64,
}

impl IncrementPair {
    pub fn new(s1: f64, t1: f64, s2: f64, t2: f64) -> Result<Self> {
        let ok = [s1, t1, s2, t2].iter().all(|v| v.is_finite() && *v >= 0.0)
            && s1 <= t1
            && s2 <= t2
            && s1 <= s2;
        if !ok {
            return Err(Error::domain(format!(
                "malformed increment pair (s1={s1}, t1={t1}, s2={s2}, t2={t2})"
            )));
        }
        Ok(Self { s1, t1, s2, t2 })
    }

    /// `(s2 - s1, t1 - s1, t2 - s2)`, the arguments of `μ`.
    pub fn lag_lengths(&self) -> (f64, f64, f64) {
        (self.s2 - self.s1, self.t1 - self.s1, self.t2 - self.s2)
    }

    /// Ties go to the lowest-index region.
    pub fn classify(&self) -> Region {
        if self.s2 <= self.t1 && self.t1 <= self.t2 {
            Region::S1
        } else if self.s2 <= self.t2 && self.t2 <= self.t1 {
            Region::S2
        } else {
            Region::S3
        }
    }
}

/// Chaos index `q` (chaos order `2q - 1`), regularisation `ε` and the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaosKernelSpec {
    q: u32,
    eps: f64,
    model: HurstModel,
}

impl ChaosKernelSpec {
    pub fn new(q: u32, eps: f64, model: HurstModel) -> Result<Self> {
        if q == 0 {
            return Err(Error::domain("chaos index q must be at least 1"));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::domain(format!("epsilon must be positive, got {eps}")));
        }
        Ok(Self { q, eps, model })
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn model(&self) -> &HurstModel {
        &self.model
    }

    pub fn chaos_order(&self) -> usize {
        2 * self.q as usize - 1
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.q, eps, self.model)
    }

    /// `β_q = 1 / (2^{q-1/2} (q-1)! sqrt(π))`.
    pub fn beta_q(&self) -> f64 {
        beta_q(self.q)
    }

    /// Exponent of the renormalisation `ε^{3/2 - 1/H}` applied to `α_ε`.
    pub fn scaling_exponent_alpha(&self) -> f64 {
        alpha_scaling_exponent(self.model.hurst)
    }

    /// Exponent of the renormalisation `ε^{1 - 3/(4H)}` applied to chaos components.
    pub fn scaling_exponent_chaos(&self) -> f64 {
        chaos_scaling_exponent(self.model.hurst)
    }

    /// `(2q-1)! β_q²`, the squared norm factor shared by every chaos variance.
    pub fn norm_factor(&self) -> f64 {
        let order = self.chaos_order() as f64;
        // ln((2q-1)!) - (2q-1) ln 2 - 2 ln((q-1)!) - ln π
        let q = self.q as f64;
        let ln = statrs::function::gamma::ln_gamma(order + 1.0)
            - (2.0 * q - 1.0) * std::f64::consts::LN_2
            - 2.0 * statrs::function::gamma::ln_gamma(q)
            - std::f64::consts::PI.ln();
        ln.exp()
    }
}

pub fn beta_q(q: u32) -> f64 {
    assert!(q >= 1);
    let q = q as f64;
    let ln_fact = statrs::function::gamma::ln_gamma(q);
    (-(q - 0.5) * std::f64::consts::LN_2 - ln_fact - 0.5 * std::f64::consts::PI.ln()).exp()
}

pub fn alpha_scaling_exponent(hurst: f64) -> f64 {
    1.5 - 1.0 / hurst
}

pub fn chaos_scaling_exponent(hurst: f64) -> f64 {
    1.0 - 0.75 / hurst
}

/// `G^{(q)}_{ε,x}(u1, u2) = (ε + u1^{2H})^{-1/2-q} (ε + u2^{2H})^{-1/2-q} μ(x, u1, u2)^{2q-1}`.
///
/// `eps` may be zero, in which case both lengths must be strictly positive.
pub fn g_function(spec: &ChaosKernelSpec, x: f64, u1: f64, u2: f64, eps: f64) -> Result<f64> {
    if x < 0.0 || u1 < 0.0 || u2 < 0.0 || eps < 0.0 {
        return Err(Error::domain(format!(
            "G arguments must be nonnegative, got x={x}, u1={u1}, u2={u2}, eps={eps}"
        )));
    }
    if eps == 0.0 && (u1 == 0.0 || u2 == 0.0) {
        return Err(Error::Singular(format!(
            "G with eps = 0 is singular at u1 = {u1}, u2 = {u2}"
        )));
    }
    let h2 = 2.0 * spec.model.hurst;
    let p = spec.q as f64 + 0.5;
    let m = mu_raw(h2, x, u1, u2);
    Ok((eps + u1.powf(h2)).powf(-p) * (eps + u2.powf(h2)).powf(-p) * m.powi(spec.chaos_order() as i32))
}

/// Sup over `v >= 0` of `((1 + (v+1)^{2H}) / (1 + v^{2H}))^{q+1/2}`, squared over the
/// two coordinates: an explicit constant `K` for the monotonicity bound
/// `G_{1,x}(v1, v2) <= K G_{1,x}(w1, w2)` when `v_i <= w_i <= v_i + 1`.
pub fn g_monotonicity_constant(model: &HurstModel, q: u32) -> f64 {
    let h2 = 2.0 * model.hurst;
    let p = q as f64 + 0.5;
    // The ratio is decreasing for large v; a dense scan on a log grid finds its supremum.
    let mut best: f64 = 1.0;
    for i in 0..=4000 {
        let v = if i == 0 { 0.0 } else { 10f64.powf(-6.0 + 12.0 * i as f64 / 4000.0) };
        let r = (1.0 + (v + 1.0).powf(h2)) / (1.0 + v.powf(h2));
        best = best.max(r);
    }
    best.powf(2.0 * p) * (1.0 + 1e-9)
}

/// Configuration class for [`local_nondeterminism_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LndClass {
    /// `s1 < s2 < t1 < t2`
    S1Overlap,
    /// `s1 < s2 < t2 < t1`
    S2Nested,
    /// `s1 < t1 < s2 < t2`
    S3Disjoint,
}

impl LndClass {
    fn contains(&self, p: &IncrementPair) -> bool {
        match self {
            LndClass::S1Overlap => p.s1 < p.s2 && p.s2 < p.t1 && p.t1 < p.t2,
            LndClass::S2Nested => p.s1 < p.s2 && p.s2 < p.t2 && p.t2 < p.t1,
            LndClass::S3Disjoint => p.s1 < p.t1 && p.t1 < p.s2 && p.s2 < p.t2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LndReport {
    pub class: LndClass,
    pub n_pairs: usize,
    /// Min of `det Σ / ((t1-s1)^{2H} (t2-s2)^{2H})` over the sample.
    pub min_ratio: f64,
    /// Min of `det Σ / ((a+b)^{2H} c^{2H} + (b+c)^{2H} a^{2H})` where `a` is the
    /// leading gap, `b` the overlap and `c` the trailing gap. Only for overlapping classes.
    pub min_gap_ratio: Option<f64>,
    /// Empirical lower bound for `δ`: the smallest of the reported ratios.
    pub estimated_delta: f64,
    /// Pairs whose ratio was not strictly positive.
    pub violations: usize,
}

/// Scans a sample of pairs for the local nondeterminism lower bound of `det Σ`.
pub fn local_nondeterminism_check(
    model: &HurstModel,
    pairs: &[IncrementPair],
    class: LndClass,
) -> Result<LndReport> {
    if pairs.is_empty() {
        return Err(Error::domain("local nondeterminism check needs at least one pair"));
    }
    let h2 = 2.0 * model.hurst;
    let mut min_ratio = f64::INFINITY;
    let mut min_gap = f64::INFINITY;
    let mut violations = 0;
    for p in pairs {
        if !class.contains(p) {
            return Err(Error::domain(format!("pair {p:?} is not in configuration {class:?}")));
        }
        let sigma = model.sigma_matrix(p);
        let det = sigma.det();
        let ratio = det / (sigma.a11 * sigma.a22);
        if !(ratio > 0.0) {
            violations += 1;
        }
        min_ratio = min_ratio.min(ratio);
        let gaps = match class {
            LndClass::S1Overlap => Some((p.s2 - p.s1, p.t1 - p.s2, p.t2 - p.t1)),
            LndClass::S2Nested => Some((p.s2 - p.s1, p.t2 - p.s2, p.t1 - p.t2)),
            LndClass::S3Disjoint => None,
        };
        if let Some((a, b, c)) = gaps {
            let denom = (a + b).powf(h2) * c.powf(h2) + (b + c).powf(h2) * a.powf(h2);
            let r = det / denom;
            if !(r > 0.0) {
                violations += 1;
            }
            min_gap = min_gap.min(r);
        }
    }
    let min_gap_ratio = (class != LndClass::S3Disjoint).then_some(min_gap);
    let estimated_delta = min_gap_ratio.map_or(min_ratio, |g| g.min(min_ratio));
    Ok(LndReport {
        class,
        n_pairs: pairs.len(),
        min_ratio,
        min_gap_ratio,
        estimated_delta,
        violations,
    })
}
