//! Second moments of `α_ε` and of its chaos components, and their limits.
//!
//! All integrals over `{(x, u1, u2)}` are evaluated after the scaling change of
//! variables `(x, u1, u2) = λ (ξ, 1, η)`. Since `μ` is homogeneous of degree
//! `2H`, the kernels factor into `μ(ξ, 1, η)` and a one-dimensional integral in
//! `λ` that carries the weight `(T - λ max(1, ξ + η))₊` and the regularisation.
//! For the `ε → 0` limits the `λ` integral is available in closed form, which
//! leaves two-dimensional integrals over `(ξ, η) ∈ [0, ∞)²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{integrate, integrate_scalar, QuadratureOptions, QuadratureResult, Segment};
use crate::math::{beta_fn, lemma_beta_integral};
use crate::model::{ChaosKernelSpec, HurstModel};

/// `σ² = T^{2H} (2H-1)/(4Hπ) B(1/H, (3H-2)/(2H))² B(2, 2H-1)`, for `2/3 < H < 1`.
pub fn sigma_squared(model: &HurstModel) -> Result<f64> {
    let h = check_alpha_range(model)?;
    let t2h = model.horizon().powf(2.0 * h);
    let b1 = beta_fn(1.0 / h, (3.0 * h - 2.0) / (2.0 * h))?;
    let b2 = beta_fn(2.0, 2.0 * h - 1.0)?;
    Ok(t2h * (2.0 * h - 1.0) / (4.0 * h * std::f64::consts::PI) * b1 * b1 * b2)
}

/// `σ²` assembled as `H(2H-1)/π · T^{2H} ∫_0^1 (1-x) x^{2H-2} dx · (∫_0^∞ a (1+a^{2H})^{-3/2} da)²`.
pub fn sigma_squared_factored(model: &HurstModel) -> Result<f64> {
    let h = check_alpha_range(model)?;
    let inner = 1.0 / ((2.0 * h - 1.0) * 2.0 * h);
    let outer = lemma_beta_integral(1.0, 2.0 * h, 1.0, -1.5)?;
    Ok(h * (2.0 * h - 1.0) / std::f64::consts::PI
        * model.horizon().powf(2.0 * h)
        * inner
        * outer
        * outer)
}

fn check_alpha_range(model: &HurstModel) -> Result<f64> {
    let h = model.hurst();
    if !(h > 2.0 / 3.0) {
        return Err(Error::domain(format!("sigma squared requires 2/3 < H < 1, got H = {h}")));
    }
    Ok(h)
}

/// `μ(ξ, 1, η)` evaluated without catastrophic cancellation.
pub(crate) fn mu_hat(h2: f64, xi: f64, eta: f64) -> f64 {
    if xi > 8.0 * eta.max(1.0) {
        mu_hat_series(h2, xi, eta)
    } else if eta > 1.0 {
        0.5 * (pair_diff(h2, xi + eta) - pair_diff(h2, xi))
    } else {
        0.5 * (increment(h2, xi, eta) - abs_increment(h2, xi - 1.0, eta))
    }
}

/// `y^{2H} - |y-1|^{2H}`.
fn pair_diff(h2: f64, y: f64) -> f64 {
    if y >= 2.0 {
        -y.powf(h2) * (h2 * (-1.0 / y).ln_1p()).exp_m1()
    } else {
        y.powf(h2) - (y - 1.0).abs().powf(h2)
    }
}

/// `(y+d)^{2H} - y^{2H}` for `y, d >= 0`.
fn increment(h2: f64, y: f64, d: f64) -> f64 {
    if y == 0.0 {
        d.powf(h2)
    } else {
        y.powf(h2) * (h2 * (d / y).ln_1p()).exp_m1()
    }
}

/// `|c+d|^{2H} - |c|^{2H}` for `d >= 0`.
fn abs_increment(h2: f64, c: f64, d: f64) -> f64 {
    if c >= 0.0 {
        increment(h2, c, d)
    } else if c + d <= 0.0 {
        -increment(h2, -c - d, d)
    } else {
        (c + d).powf(h2) - (-c).powf(h2)
    }
}

/// Binomial expansion in `1/ξ`, valid for `ξ > 8 max(1, η)`:
/// `μ = ½ Σ_{k≥2} C(2H, k) ξ^{2H-k} (η^k - (η-1)^k + (-1)^k)`, with each bracket
/// written as a sum of same-signed terms.
fn mu_hat_series(h2: f64, xi: f64, eta: f64) -> f64 {
    let mut binom = h2 * (h2 - 1.0) / 2.0;
    let mut xi_pow = xi.powf(h2 - 2.0);
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    for k in 2..80usize {
        let term = binom * xi_pow * bracket(k, eta);
        sum += term;
        let small = term.abs() <= 1e-17 * sum.abs();
        if small && prev <= 1e-17 * sum.abs() {
            break;
        }
        prev = term.abs();
        binom *= (h2 - k as f64) / (k as f64 + 1.0);
        xi_pow /= xi;
    }
    0.5 * sum
}

fn bracket(k: usize, eta: f64) -> f64 {
    if eta >= 1.0 {
        let d = eta - 1.0;
        let mut c = 1.0;
        let mut dp = 1.0;
        let mut s = 0.0;
        for j in 1..k {
            c *= (k - j + 1) as f64 / j as f64;
            dp *= d;
            s += c * dp;
        }
        if k % 2 == 0 {
            s + 2.0
        } else {
            s
        }
    } else {
        let e = 1.0 - eta;
        let geo = |r: f64, from: usize, to: usize| -> f64 {
            let mut p = r.powi(from as i32);
            let mut s = 0.0;
            for _ in from..=to {
                s += p;
                p *= r;
            }
            s
        };
        if k % 2 == 0 {
            eta.powi(k as i32) + eta * geo(e, 0, k - 1)
        } else {
            -eta * (e * geo(eta, 0, k - 2) + geo(e, 1, k - 1))
        }
    }
}

/// Regularisation scale `ε^{1/(2H)}` at which `ε` and `λ^{2H}` balance.
fn crossover(h2: f64, eps: f64) -> f64 {
    eps.powf(1.0 / h2)
}

/// Log-spaced segments covering `[lo, hi]` and split at the given interior points.
fn log_segments(lo: f64, hi: f64, breaks: &[f64]) -> Vec<Segment> {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&b| b > lo && b < hi).collect();
    pts.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(pts.len() + 1);
    let mut a = lo;
    for b in pts.into_iter().chain(std::iter::once(hi)) {
        out.push(Segment::Log { lo: a, hi: b });
        a = b;
    }
    out
}

/// Which part of the `ξ` axis to integrate, for a given `η`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum XiRange {
    /// `ξ ∈ [0, ∞)`
    All,
    /// `ξ ≤ 1 ≤ ξ + η`: overlapping intervals.
    S1,
    /// `ξ + η ≤ 1`: nested intervals.
    S2,
    /// `ξ ≥ 1`: disjoint intervals.
    S3,
}

/// Segments of the `ξ` axis, split at the kinks `ξ = 1 - η` and `ξ = 1`.
fn xi_segments(range: XiRange, eta: f64, far: f64, decay: f64) -> Vec<Segment> {
    let k1 = (1.0 - eta).max(0.0);
    let mut out = Vec::new();
    if matches!(range, XiRange::All | XiRange::S2) && k1 > 0.0 {
        out.push(Segment::Linear { lo: 0.0, hi: k1 });
    }
    if matches!(range, XiRange::All | XiRange::S1) {
        out.push(Segment::Linear { lo: k1, hi: 1.0 });
    }
    if matches!(range, XiRange::All | XiRange::S3) {
        out.push(Segment::Linear { lo: 1.0, hi: 2.0 });
        let far = far.max(4.0);
        out.push(Segment::Log { lo: 2.0, hi: far });
        out.push(Segment::Tail { start: far, decay });
    }
    out
}

/// `η` axis for integrals with `ε > 0`: regular at 0, decaying like `η^{-1-decay}`.
fn eta_segments_regularised(lam_c: f64, t: f64, decay: f64) -> Vec<Segment> {
    let near = 1e-2 * (lam_c / t).min(1.0);
    let far = 1e2 * (t / lam_c).max(1.0);
    let mut out = vec![Segment::Linear { lo: 0.0, hi: near }];
    out.extend(log_segments(near, far, &[1.0]));
    out.push(Segment::Tail { start: far, decay });
    out
}

/// `η` axis for the `ε = 0` limits: `η^{head}` at 0 and `η^{-1-decay}` at infinity.
fn eta_segments_limit(head: f64, decay: f64) -> Vec<Segment> {
    vec![
        Segment::Head { end: 1.0, exponent: head },
        Segment::Log { lo: 1.0, hi: 16.0 },
        Segment::Tail { start: 16.0, decay },
    ]
}

/// Parameters of the chaos kernel in scaled coordinates.
#[derive(Debug, Clone, Copy)]
struct ChaosShape {
    h: f64,
    h2: f64,
    order: i32,
    /// `q + 1/2`
    p: f64,
    /// `2 + 2H(2q-1)`: power of `λ` collected from the Jacobian and `μ^{2q-1}`.
    a: f64,
    /// `2(2q-1)! β_q²`
    norm: f64,
}

impl ChaosShape {
    fn new(spec: &ChaosKernelSpec) -> Self {
        let h = spec.model().hurst();
        let q = spec.q() as f64;
        Self {
            h,
            h2: 2.0 * h,
            order: spec.chaos_order() as i32,
            p: q + 0.5,
            a: 2.0 + 2.0 * h * (2.0 * q - 1.0),
            norm: 2.0 * spec.norm_factor(),
        }
    }

    fn mu_power(&self, xi: f64, eta: f64) -> f64 {
        mu_hat(self.h2, xi, eta).powi(self.order)
    }
}

/// `∫_0^{T/m} (T - λm) λ^a k(λ) dλ` with `k = ((ε₁ + λ^{2H})(ε₂ + η^{2H} λ^{2H}))^{-p}`,
/// symmetrised over `ε₁ ↔ ε₂` when they differ.
fn chaos_lambda_integral(
    s: &ChaosShape,
    (e1, e2): (f64, f64),
    t: f64,
    m: f64,
    eta: f64,
    opts: &QuadratureOptions,
) -> QuadratureResult {
    let top = t / m;
    let (c1, c2) = (crossover(s.h2, e1), crossover(s.h2, e2));
    let lam_c = c1.min(c2);
    let lo = lam_c.min(lam_c / eta).min(top) * (-40.0 / (s.a + 1.0)).exp();
    let eta_h = eta.powf(s.h2);
    let mut breaks = vec![c1, c1 / eta];
    if e1 != e2 {
        breaks.extend([c2, c2 / eta]);
    }
    let segs = log_segments(lo, top, &breaks);
    integrate_scalar(
        |lam| {
            let l2h = lam.powf(s.h2);
            let k = if e1 == e2 {
                ((e1 + l2h) * (e1 + eta_h * l2h)).powf(-s.p)
            } else {
                0.5 * (((e1 + l2h) * (e2 + eta_h * l2h)).powf(-s.p) + ((e2 + l2h) * (e1 + eta_h * l2h)).powf(-s.p))
            };
            (t - lam * m) * lam.powf(s.a) * k
        },
        &segs,
        opts,
    )
}

/// `E[I_{2q-1}(f_{2q-1,ε})²]`, the second moment of the chaos component of order `2q-1`.
pub fn exact_chaos_variance(spec: &ChaosKernelSpec) -> Result<QuadratureResult> {
    exact_chaos_variance_with(spec, &QuadratureOptions::default())
}

pub fn exact_chaos_variance_with(
    spec: &ChaosKernelSpec,
    opts: &QuadratureOptions,
) -> Result<QuadratureResult> {
    Ok(chaos_second_moment(spec, spec.eps(), opts))
}

/// `E[I_{2q-1}(f_{2q-1,ε}) I_{2q-1}(f_{2q-1,ε'})]` for `ε = spec.eps()` and `ε' = other_eps`.
///
/// With the variances this gives the exact `E[(J(ε) - J(ε'))²]` on common paths.
pub fn exact_chaos_cross_moment(spec: &ChaosKernelSpec, other_eps: f64) -> Result<QuadratureResult> {
    exact_chaos_cross_moment_with(spec, other_eps, &QuadratureOptions::default())
}

pub fn exact_chaos_cross_moment_with(
    spec: &ChaosKernelSpec,
    other_eps: f64,
    opts: &QuadratureOptions,
) -> Result<QuadratureResult> {
    spec.with_eps(other_eps)?;
    Ok(chaos_second_moment(spec, other_eps, opts))
}

fn chaos_second_moment(spec: &ChaosKernelSpec, other_eps: f64, opts: &QuadratureOptions) -> QuadratureResult {
    let s = ChaosShape::new(spec);
    let t = spec.model().horizon();
    let eps = (spec.eps(), other_eps);
    let lam_c = crossover(s.h2, eps.0.min(eps.1));
    let scale = (t / lam_c).max(1.0);
    let xi_decay = (2.0 - s.h2) * s.order as f64 + s.a;
    let eta_decay = 2.0 * spec.q() as f64;
    let o_xi = opts.inner();
    let o_lam = o_xi.inner();
    let r = integrate(
        |eta| {
            let segs = xi_segments(XiRange::All, eta, 1e2 * eta.max(1.0) * scale, xi_decay);
            integrate(
                |xi| {
                    let m = (xi + eta).max(1.0);
                    chaos_lambda_integral(&s, eps, t, m, eta, &o_lam).scale(s.mu_power(xi, eta))
                },
                &segs,
                &o_xi,
            )
        },
        &eta_segments_regularised(lam_c, t, eta_decay),
        opts,
    );
    r.scale(s.norm)
}

/// `E[I_1(f_{1,ε})²]`, the first-chaos case of [`exact_chaos_variance`], for `2/3 < H < 1`.
pub fn exact_first_chaos_variance(model: &HurstModel, eps: f64) -> Result<QuadratureResult> {
    exact_first_chaos_variance_with(model, eps, &QuadratureOptions::default())
}

pub fn exact_first_chaos_variance_with(
    model: &HurstModel,
    eps: f64,
    opts: &QuadratureOptions,
) -> Result<QuadratureResult> {
    check_alpha_range(model)?;
    exact_chaos_variance_with(&ChaosKernelSpec::new(1, eps, *model)?, opts)
}

/// `E[α_ε²]` split over the three interval configurations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaVariance {
    /// Overlapping intervals.
    pub v1: QuadratureResult,
    /// Nested intervals.
    pub v2: QuadratureResult,
    /// Disjoint intervals.
    pub v3: QuadratureResult,
    pub total: QuadratureResult,
}

/// `V_i = (1/π) ∫_{S_i} |εI + Σ|^{-3/2} Σ_12` and their sum `E[α_ε²]`.
pub fn exact_alpha_variance(model: &HurstModel, eps: f64) -> Result<AlphaVariance> {
    exact_alpha_variance_with(model, eps, &QuadratureOptions::default())
}

pub fn exact_alpha_variance_with(
    model: &HurstModel,
    eps: f64,
    opts: &QuadratureOptions,
) -> Result<AlphaVariance> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::domain(format!("epsilon must be positive, got {eps}")));
    }
    let v1 = alpha_region(model, eps, XiRange::S1, opts);
    let v2 = alpha_region(model, eps, XiRange::S2, opts);
    let v3 = alpha_region(model, eps, XiRange::S3, opts);
    let total = QuadratureResult::sum([&v1, &v2, &v3]);
    Ok(AlphaVariance { v1, v2, v3, total })
}

fn alpha_region(model: &HurstModel, eps: f64, range: XiRange, opts: &QuadratureOptions) -> QuadratureResult {
    let h2 = 2.0 * model.hurst();
    let t = model.horizon();
    let lam_c = crossover(h2, eps);
    let scale = (t / lam_c).max(1.0);
    let o_xi = opts.inner();
    let o_lam = o_xi.inner();
    let r = integrate(
        |eta| {
            let segs = xi_segments(range, eta, 1e2 * eta.max(1.0) * scale, 4.0);
            if segs.is_empty() || (range == XiRange::S2 && eta >= 1.0) {
                return QuadratureResult::exact(0.0);
            }
            let eta_h = eta.powf(h2);
            integrate(
                |xi| {
                    let mu = mu_hat(h2, xi, eta);
                    let d = (eta_h - mu * mu).max(0.0);
                    let m = (xi + eta).max(1.0);
                    alpha_lambda_integral(h2, eps, t, m, eta_h, d, &o_lam).scale(mu)
                },
                &segs,
                &o_xi,
            )
        },
        &eta_segments_regularised(lam_c, t, 2.0),
        opts,
    );
    r.scale(1.0 / std::f64::consts::PI)
}

/// `∫_0^{T/m} (T - λm) λ^{2+2H} [ε² + ε λ^{2H} (1 + η^{2H}) + λ^{4H} D]^{-3/2} dλ`.
fn alpha_lambda_integral(
    h2: f64,
    eps: f64,
    t: f64,
    m: f64,
    eta_h: f64,
    d: f64,
    opts: &QuadratureOptions,
) -> QuadratureResult {
    let top = t / m;
    let s = 1.0 + eta_h;
    let b1 = (eps / s).powf(1.0 / h2);
    let mut breaks = vec![b1];
    if d > 0.0 {
        breaks.push((eps * s / d).powf(1.0 / h2));
    }
    let lo = b1.min(top) * (-40.0 / (3.0 + h2)).exp();
    integrate_scalar(
        |lam| {
            let l2h = lam.powf(h2);
            let det = eps * eps + eps * l2h * s + l2h * l2h * d;
            (t - lam * m) * lam.powf(2.0 + h2) * det.powf(-1.5)
        },
        &log_segments(lo, top, &breaks),
        opts,
    )
}

fn check_clt_window(spec: &ChaosKernelSpec) -> Result<()> {
    let h = spec.model().hurst();
    let q = spec.q();
    let upper = HurstModel::chaos_upper_edge(q);
    if q < 2 || !(h > 0.75 && h < upper) {
        return Err(Error::Window {
            hurst: h,
            q,
            window: format!(
                "(3/4, {}/{}) for q >= 2, where the integral of G_1 over R_+^3 is finite",
                4 * q.max(2) - 3,
                4 * q.max(2) - 2
            ),
        });
    }
    Ok(())
}

fn check_l2_window(spec: &ChaosKernelSpec) -> Result<()> {
    let h = spec.model().hurst();
    let q = spec.q();
    if q < 2 || !(h > 2.0 / 3.0 && h < 0.75) {
        return Err(Error::Window {
            hurst: h,
            q,
            window: "(2/3, 3/4) for q >= 2, where the integral of G_0 over [0,T]^3 is finite".into(),
        });
    }
    Ok(())
}

/// `Φ(η) = ∫_0^∞ ν^a (1 + ν^{2H})^{-p} (1 + η^{2H} ν^{2H})^{-p} dν`, finite for `H > 3/4`.
fn unit_lambda_integral(s: &ChaosShape, eta: f64, opts: &QuadratureOptions) -> QuadratureResult {
    let knee = 1.0f64.max(1.0 / eta);
    let lo = 1.0f64.min(1.0 / eta) * (-40.0 / (s.a + 1.0)).exp();
    let far = 8.0 * knee;
    let eta_h = eta.powf(s.h2);
    let mut segs = log_segments(lo, far, &[1.0, 1.0 / eta]);
    segs.push(Segment::Tail { start: far, decay: 2.0 * s.h2 - 3.0 });
    integrate_scalar(
        |nu| {
            let n2h = nu.powf(s.h2);
            nu.powf(s.a) * ((1.0 + n2h) * (1.0 + eta_h * n2h)).powf(-s.p)
        },
        &segs,
        opts,
    )
}

/// `σ_q² = 2(2q-1)! β_q² T ∫_{R_+^3} G_1(x, u1, u2) dx du1 du2`, the limit of the
/// scaled chaos variance for `3/4 < H < (4q-3)/(4q-2)`.
pub fn sigma_q_squared(spec: &ChaosKernelSpec) -> Result<QuadratureResult> {
    sigma_q_squared_with(spec, &QuadratureOptions::default())
}

pub fn sigma_q_squared_with(spec: &ChaosKernelSpec, opts: &QuadratureOptions) -> Result<QuadratureResult> {
    check_clt_window(spec)?;
    let s = ChaosShape::new(spec);
    let q = spec.q() as f64;
    let order = s.order as f64;
    let xi_decay = (2.0 - s.h2) * order - 1.0;
    let eta_head = order - 3.0 - s.h2 * q + 3.0 * s.h;
    let eta_decay = 2.0 * q - s.h2 * q + 3.0 * s.h - 3.0;
    let o_xi = opts.inner();
    let r = integrate(
        |eta| {
            let phi = unit_lambda_integral(&s, eta, &o_xi);
            let segs = xi_segments(XiRange::All, eta, 16.0 * eta.max(1.0), xi_decay);
            let inner = integrate_scalar(|xi| s.mu_power(xi, eta), &segs, &o_xi);
            QuadratureResult {
                value: phi.value * inner.value,
                abs_err_est: phi.abs_err_est * inner.value.abs() + inner.abs_err_est * phi.value.abs(),
                evaluations: phi.evaluations + inner.evaluations,
                converged: phi.converged && inner.converged,
            }
        },
        &eta_segments_limit(eta_head, eta_decay),
        opts,
    );
    Ok(r.scale(s.norm * spec.model().horizon()))
}

/// `σ̄_q² = 2(2q-1)! β_q² ∫_S G_0`, the L² limit of the chaos variance for `2/3 < H < 3/4`.
pub fn sigma_q_bar_squared(spec: &ChaosKernelSpec) -> Result<QuadratureResult> {
    sigma_q_bar_squared_with(spec, &QuadratureOptions::default())
}

pub fn sigma_q_bar_squared_with(
    spec: &ChaosKernelSpec,
    opts: &QuadratureOptions,
) -> Result<QuadratureResult> {
    check_l2_window(spec)?;
    let s = ChaosShape::new(spec);
    let q = spec.q() as f64;
    let order = s.order as f64;
    let h = s.h;
    let t = spec.model().horizon();
    let m_pow = 4.0 * h - 3.0;
    let lam_factor = t.powf(4.0 - 4.0 * h) / ((3.0 - 4.0 * h) * (4.0 - 4.0 * h));
    let xi_decay = (2.0 - s.h2) * order + 2.0 - 4.0 * h;
    let eta_head = order - s.h2 * s.p;
    let eta_decay = 2.0 * q - s.h2 * q - h;
    let o_xi = opts.inner();
    let r = integrate(
        |eta| {
            let segs = xi_segments(XiRange::All, eta, 16.0 * eta.max(1.0), xi_decay);
            integrate_scalar(|xi| s.mu_power(xi, eta) * (xi + eta).max(1.0).powf(m_pow), &segs, &o_xi)
                .scale(eta.powf(-s.h2 * s.p))
        },
        &eta_segments_limit(eta_head, eta_decay),
        opts,
    );
    Ok(r.scale(s.norm * lam_factor))
}

/// One row of the constants table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantRow {
    pub name: String,
    pub hurst: f64,
    pub horizon: f64,
    pub eps: Option<f64>,
    pub q: Option<u32>,
    pub value: f64,
    pub abs_err_est: f64,
    pub converged: bool,
}

impl ConstantRow {
    fn closed(name: &str, model: &HurstModel, value: f64) -> Self {
        Self {
            name: name.into(),
            hurst: model.hurst(),
            horizon: model.horizon(),
            eps: None,
            q: None,
            value,
            abs_err_est: 0.0,
            converged: true,
        }
    }

    fn numeric(name: &str, model: &HurstModel, eps: Option<f64>, q: Option<u32>, r: &QuadratureResult) -> Self {
        Self {
            name: name.into(),
            hurst: model.hurst(),
            horizon: model.horizon(),
            eps,
            q,
            value: r.value,
            abs_err_est: r.abs_err_est,
            converged: r.converged,
        }
    }
}

/// Limit constants and exact variances keyed by `(H, T, ε, q)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstantsTable {
    pub rows: Vec<ConstantRow>,
}

impl ConstantsTable {
    /// Every constant that applies to `model`, chaos index `q` and the listed `ε`.
    ///
    /// For `q >= 2` the chaos limit constant of the matching regime is required:
    /// `σ_q²` when `H > 3/4` and `\bar σ_q²` when `H < 3/4`. A window error is
    /// returned when `(H, q)` lies in neither window.
    pub fn build(model: &HurstModel, q: u32, eps: &[f64], opts: &QuadratureOptions) -> Result<Self> {
        let mut rows = Vec::new();
        if model.hurst() > 2.0 / 3.0 {
            rows.push(ConstantRow::closed("sigma_squared", model, sigma_squared(model)?));
        }
        let unit = ChaosKernelSpec::new(q, 1.0, *model)?;
        if q >= 2 {
            model.ensure_not_critical(Some(q))?;
            if model.hurst() > 0.75 {
                let r = sigma_q_squared_with(&unit, opts)?;
                rows.push(ConstantRow::numeric("sigma_q_squared", model, None, Some(q), &r));
            } else {
                let r = sigma_q_bar_squared_with(&unit, opts)?;
                rows.push(ConstantRow::numeric("sigma_q_bar_squared", model, None, Some(q), &r));
            }
        }
        for &e in eps {
            let alpha = exact_alpha_variance_with(model, e, opts)?;
            for (name, r) in [
                ("alpha_variance_v1", &alpha.v1),
                ("alpha_variance_v2", &alpha.v2),
                ("alpha_variance_v3", &alpha.v3),
                ("alpha_variance", &alpha.total),
            ] {
                rows.push(ConstantRow::numeric(name, model, Some(e), None, r));
            }
            let spec = ChaosKernelSpec::new(q, e, *model)?;
            let r = exact_chaos_variance_with(&spec, opts)?;
            rows.push(ConstantRow::numeric("chaos_variance", model, Some(e), Some(q), &r));
        }
        Ok(Self { rows })
    }

    pub fn get(&self, name: &str, eps: Option<f64>) -> Option<&ConstantRow> {
        self.rows.iter().find(|r| r.name == name && r.eps == eps)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(h: f64) -> HurstModel {
        HurstModel::new(h, 1.0).unwrap()
    }

    fn mu_direct(h2: f64, xi: f64, eta: f64) -> f64 {
        0.5 * ((xi + eta).powf(h2) - (xi + eta - 1.0).abs().powf(h2) - xi.powf(h2)
            + (xi - 1.0).abs().powf(h2))
    }

    #[test]
    fn sigma_squared_routes_agree() {
        for &h in &[0.70, 0.75, 0.80, 0.90] {
            let a = sigma_squared(&model(h)).unwrap();
            let b = sigma_squared_factored(&model(h)).unwrap();
            assert!(((a - b) / a).abs() < 1e-12, "H = {h}: {a} vs {b}");
        }
        let m2 = HurstModel::new(0.7, 2.5).unwrap();
        let ratio = sigma_squared(&m2).unwrap() / sigma_squared(&model(0.7)).unwrap();
        assert!((ratio - 2.5f64.powf(1.4)).abs() < 1e-12);
        assert!(sigma_squared(&model(0.6)).is_err());
    }

    #[test]
    fn sigma_squared_scan_is_finite() {
        for i in 0..=25 {
            let h = 0.70 + 0.01 * i as f64;
            let v = sigma_squared(&model(h)).unwrap();
            assert!(v.is_finite() && v > 0.0, "H = {h}");
        }
    }

    #[test]
    fn mu_hat_regimes_match_direct_form() {
        for &h in &[0.55, 0.7, 0.8, 0.95] {
            let h2 = 2.0 * h;
            for &xi in &[0.0, 0.2, 0.5, 0.99, 1.0, 1.3, 3.0, 7.9, 8.1, 12.0, 40.0] {
                for &eta in &[0.05, 0.3, 0.7, 1.0, 1.5, 4.0] {
                    let a = mu_hat(h2, xi, eta);
                    let b = mu_direct(h2, xi, eta);
                    let scale = (xi + eta + 1.0).powf(h2);
                    assert!((a - b).abs() <= 1e-14 * scale, "H={h} xi={xi} eta={eta}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn mu_hat_high_precision_references() {
        // 50-digit evaluations of the defining four-term formula
        let cases = [
            (0.8, 40.0, 0.05, 0.005_514_028_334_728_978_752_5),
            (0.7, 1e6, 0.3, 2.109_985_045_565_026_604_6e-5),
            (0.8, 1e12, 2.0, 1.521_497_464_762_368_689_9e-5),
            (0.7, 0.999, 1e-9, 7.438_869_213_754_639_060_4e-10),
            (0.8, 3.0, 1e-10, 3.339_723_827_343_686_998_7e-11),
            (0.7, 50.0, 60.0, 1.246_186_474_276_832_002_8),
        ];
        for (h, xi, eta, expect) in cases {
            let v = mu_hat(2.0 * h, xi, eta);
            assert!(((v - expect) / expect).abs() < 1e-13, "H={h} xi={xi} eta={eta}: {v}");
        }
    }

    #[test]
    fn mu_hat_far_field_asymptotics() {
        // μ(ξ, 1, η) ≈ H(2H-1) η ξ^{2H-2} for ξ ≫ max(1, η)
        let h = 0.8;
        for &(xi, eta) in &[(1e8, 0.5), (1e12, 3.0), (1e15, 1e-6)] {
            let lead = h * (2.0 * h - 1.0) * eta * f64::powf(xi, 2.0 * h - 2.0);
            let v = mu_hat(2.0 * h, xi, eta);
            assert!(((v - lead) / lead).abs() < 1e-6, "xi={xi} eta={eta}");
        }
    }

    #[test]
    fn unit_lambda_integral_matches_beta_closed_form() {
        let spec = ChaosKernelSpec::new(2, 1.0, model(0.8)).unwrap();
        let s = ChaosShape::new(&spec);
        let r = unit_lambda_integral(&s, 1.0, &QuadratureOptions::with_rel_tol(1e-10));
        let exact = lemma_beta_integral(1.0, s.h2, s.a, -2.0 * s.p).unwrap();
        assert!(r.converged);
        assert!(((r.value - exact) / exact).abs() < 1e-9, "{} vs {exact}", r.value);
    }

    #[test]
    fn windows_are_enforced() {
        let bad = ChaosKernelSpec::new(2, 1.0, model(0.85)).unwrap();
        assert!(matches!(sigma_q_squared(&bad), Err(Error::Window { .. })));
        let bad = ChaosKernelSpec::new(1, 1.0, model(0.8)).unwrap();
        assert!(matches!(sigma_q_squared(&bad), Err(Error::Window { .. })));
        let bad = ChaosKernelSpec::new(2, 1.0, model(0.8)).unwrap();
        assert!(matches!(sigma_q_bar_squared(&bad), Err(Error::Window { .. })));
        assert!(exact_alpha_variance(&model(0.7), 0.0).is_err());
    }
}
