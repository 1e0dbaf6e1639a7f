//! Monte Carlo experiments for the limit theorems of `α_ε` and its chaos
//! components, with reports whose pass flags are recomputable from the stored
//! numbers.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dslt::{alpha_eps_multi, chaos_projections, scale_alpha, scale_chaos};
use crate::error::{Error, Result};
use crate::integrate::QuadratureOptions;
use crate::math::std_normal_cdf;
use crate::model::{ChaosKernelSpec, HurstModel};
use crate::quadrature::{
    exact_alpha_variance_with, exact_chaos_variance_with, sigma_q_bar_squared_with, sigma_q_squared_with,
    sigma_squared,
};
use crate::sim::{GridSpec, Method, Sampler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Gaussian limit of `ε^{3/2-1/H} α_ε`.
    AlphaClt,
    /// L² convergence of chaos components for `2/3 < H < 3/4`.
    ChaosL2,
    /// Gaussian limit of scaled chaos components for `3/4 < H < (4q-3)/(4q-2)`.
    ChaosClt,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExperimentKind::AlphaClt => "alpha-clt",
            ExperimentKind::ChaosL2 => "chaos-l2",
            ExperimentKind::ChaosClt => "chaos-clt",
        })
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha-clt" => Ok(ExperimentKind::AlphaClt),
            "chaos-l2" => Ok(ExperimentKind::ChaosL2),
            "chaos-clt" => Ok(ExperimentKind::ChaosClt),
            _ => Err(Error::Config(format!("unknown experiment {s:?}"))),
        }
    }
}

/// Named thresholds used by the pass flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Allowed `|variance / target - 1|` at the smallest `ε`.
    pub variance_rel_tol: f64,
    /// Accepted band for `variance / target` in the chaos CLT.
    pub variance_ratio_band: (f64, f64),
    /// Significance level of the KS and JB tests.
    pub normality_alpha: f64,
    /// Successive L² differences must satisfy `D_{i+1} < factor · D_i`.
    pub cauchy_decrease_factor: f64,
    /// Allowed `|excess kurtosis|` at the smallest `ε`.
    pub kurtosis_tol: f64,
    /// Width, in standard errors, of Monte Carlo agreement checks.
    pub se_multiplier: f64,
}

impl Tolerances {
    pub fn for_kind(kind: ExperimentKind) -> Self {
        Self {
            variance_rel_tol: match kind {
                ExperimentKind::ChaosL2 => 0.1,
                _ => 0.2,
            },
            variance_ratio_band: (0.8, 1.25),
            normality_alpha: 0.01,
            cauchy_decrease_factor: 1.0,
            kurtosis_tol: 0.3,
            se_multiplier: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub model: HurstModel,
    pub grid: GridSpec,
    /// Strictly decreasing.
    pub eps_schedule: Vec<f64>,
    pub n_paths: usize,
    /// Chaos indices; ignored by the `α_ε` experiment.
    pub q_list: Vec<u32>,
    pub master_seed: u64,
    pub method: Method,
    pub tolerances: Tolerances,
    /// Accept `dt > sqrt(ε)` for some `ε` in the schedule.
    pub allow_underresolved: bool,
    pub quadrature_rel_tol: f64,
}

impl ExperimentConfig {
    /// Defaults: `T = 1`, `n = 2048`, 2000 paths, `ε ∈ {1e-1, 1e-2, 1e-3}`, `q = 2`.
    pub fn new(kind: ExperimentKind, hurst: f64) -> Result<Self> {
        Ok(Self {
            kind,
            model: HurstModel::new(hurst, 1.0)?,
            grid: GridSpec::new(2048, 1.0)?,
            eps_schedule: vec![1e-1, 1e-2, 1e-3],
            n_paths: 2000,
            q_list: vec![2],
            master_seed: 20_151_014,
            method: Method::Circulant,
            tolerances: Tolerances::for_kind(kind),
            allow_underresolved: false,
            quadrature_rel_tol: 1e-6,
        })
    }

    pub fn validate(&self) -> Result<()> {
        HurstModel::new(self.model.hurst(), self.model.horizon())?;
        GridSpec::new(self.grid.n(), self.grid.horizon())?;
        if self.grid.horizon() != self.model.horizon() {
            return Err(Error::Config("grid and model horizons differ".into()));
        }
        if self.eps_schedule.is_empty() {
            return Err(Error::Config("epsilon schedule is empty".into()));
        }
        if self.eps_schedule.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::Config("epsilon values must be positive".into()));
        }
        if self.eps_schedule.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config("epsilon schedule must be strictly decreasing".into()));
        }
        if self.n_paths < 100 {
            return Err(Error::Config(format!("need at least 100 paths, got {}", self.n_paths)));
        }
        let dt = self.grid.dt();
        if !self.allow_underresolved {
            if let Some(e) = self.eps_schedule.iter().find(|&&e| dt > e.sqrt()) {
                return Err(Error::Config(format!(
                    "dt = {dt} exceeds sqrt(eps) = {} at eps = {e}; refine the grid or allow under-resolution",
                    e.sqrt()
                )));
            }
        }
        let h = self.model.hurst();
        match self.kind {
            ExperimentKind::AlphaClt => {
                self.model.ensure_not_critical(None)?;
                if !(h > 2.0 / 3.0) {
                    return Err(Error::domain(format!("the alpha CLT requires 2/3 < H < 1, got H = {h}")));
                }
            }
            ExperimentKind::ChaosL2 | ExperimentKind::ChaosClt => {
                if self.q_list.is_empty() {
                    return Err(Error::Config("chaos experiments need at least one q".into()));
                }
                for &q in &self.q_list {
                    self.model.ensure_not_critical(Some(q))?;
                    ChaosKernelSpec::new(q, 1.0, self.model)?;
                    let ok = q >= 2
                        && if self.kind == ExperimentKind::ChaosL2 {
                            h > 2.0 / 3.0 && h < 0.75
                        } else {
                            h > 0.75 && h < HurstModel::chaos_upper_edge(q)
                        };
                    if !ok {
                        let window = if self.kind == ExperimentKind::ChaosL2 {
                            "(2/3, 3/4) for q >= 2".to_string()
                        } else {
                            format!("(3/4, {}/{}) for q >= 2", 4 * q.max(2) - 3, 4 * q.max(2) - 2)
                        };
                        return Err(Error::Window { hurst: h, q, window });
                    }
                }
            }
        }
        Ok(())
    }

    fn quadrature_options(&self) -> QuadratureOptions {
        QuadratureOptions::with_rel_tol(self.quadrature_rel_tol)
    }
}

/// Moments and normality statistics of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityStats {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub ks_stat: f64,
    pub ks_p: f64,
    pub jb_stat: f64,
    pub jb_p: f64,
}

/// Sample moments with KS and Jarque–Bera tests against a normal law.
///
/// KS uses the normal with the sample mean and variance plugged in; with
/// estimated parameters the Kolmogorov p-value is conservative (Lilliefors).
pub fn normality_stats(samples: &[f64]) -> Result<NormalityStats> {
    let n = samples.len();
    if n < 8 {
        return Err(Error::domain(format!("normality statistics need at least 8 samples, got {n}")));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("samples must be finite"));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in samples {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if !(m2 > 0.0) {
        return Err(Error::domain("sample has zero variance"));
    }
    let skewness = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;
    let jb_stat = nf / 6.0 * (skewness * skewness + 0.25 * excess_kurtosis * excess_kurtosis);
    let jb_p = ChiSquared::new(2.0).expect("two degrees of freedom").sf(jb_stat);
    let variance = m2 * nf / (nf - 1.0);
    let sd = variance.sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ks_stat: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = std_normal_cdf((x - mean) / sd);
        ks_stat = ks_stat.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    let ks_p = kolmogorov_sf((nf.sqrt() + 0.12 + 0.11 / nf.sqrt()) * ks_stat);
    Ok(NormalityStats { n, mean, variance, skewness, excess_kurtosis, ks_stat, ks_p, jb_stat, jb_p })
}

/// `P(K > λ) = 2 Σ_{k≥1} (-1)^{k-1} exp(-2k²λ²)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Standard errors of the sample mean and of the unbiased sample variance.
fn standard_errors(samples: &[f64], mean: f64, variance: f64) -> (f64, f64) {
    let n = samples.len() as f64;
    let m4 = samples.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let var_of_var = (m4 - variance * variance * (n - 3.0) / (n - 1.0)) / n;
    ((variance / n).sqrt(), var_of_var.max(0.0).sqrt())
}

/// Summary of one sampled random variable at one `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsRow {
    /// `alpha`, `first_chaos` or `chaos_q{q}`.
    pub series: String,
    pub q: Option<u32>,
    pub eps: f64,
    pub stats: NormalityStats,
    pub mean_se: f64,
    pub variance_se: f64,
    /// Normal-approximation 95% interval for the variance.
    pub variance_ci95: (f64, f64),
    /// Exact variance of the same (scaled) variable from quadrature.
    pub exact_variance: f64,
    pub exact_converged: bool,
    /// Limit constant the variance should approach as `ε → 0`.
    pub target: f64,
    pub target_name: String,
}

/// `E[(X_i - X_{i+1})²]` between consecutive `ε` on common paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffRow {
    pub q: u32,
    pub eps_from: f64,
    pub eps_to: f64,
    pub mean_square: f64,
    pub se: f64,
}

/// One pass/fail decision with the numbers it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: String, value: f64, threshold: f64) -> Self {
        Self { name, value, threshold, pass: value <= threshold }
    }

    fn above(name: String, value: f64, threshold: f64) -> Self {
        Self { name, value, threshold, pass: value > threshold }
    }

    fn below(name: String, value: f64, threshold: f64) -> Self {
        Self { name, value, threshold, pass: value < threshold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<EpsRow>,
    pub differences: Vec<DiffRow>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl ExperimentReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One line per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "series,q,eps,n,mean,mean_se,variance,variance_se,variance_ci_lo,variance_ci_hi,skewness,excess_kurtosis,ks_stat,ks_p,jb_stat,jb_p,exact_variance,target,target_name\n",
        );
        for r in &self.rows {
            let s = &r.stats;
            let _ = writeln!(
                out,
                "{},{},{:e},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                r.series,
                r.q.map(|q| q.to_string()).unwrap_or_default(),
                r.eps,
                s.n,
                s.mean,
                r.mean_se,
                s.variance,
                r.variance_se,
                r.variance_ci95.0,
                r.variance_ci95.1,
                s.skewness,
                s.excess_kurtosis,
                s.ks_stat,
                s.ks_p,
                s.jb_stat,
                s.jb_p,
                r.exact_variance,
                r.target,
                r.target_name
            );
        }
        out
    }

    /// Sample variance against `ε` on logarithmic axes, with quadrature values and the limit.
    pub fn to_svg(&self) -> String {
        let (w, h, pad) = (640.0, 420.0, 60.0);
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for r in &self.rows {
            pts.push((r.eps, r.stats.variance));
            pts.push((r.eps, r.exact_variance));
            pts.push((r.eps, r.target));
        }
        let pos: Vec<&(f64, f64)> = pts.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0).collect();
        let lx = |v: f64| v.log10();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &pos {
            x0 = x0.min(lx(p.0));
            x1 = x1.max(lx(p.0));
            y0 = y0.min(lx(p.1));
            y1 = y1.max(lx(p.1));
        }
        if pos.is_empty() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        let (x0, x1) = (x0 - 0.2, x1 + 0.2);
        let (y0, y1) = (y0 - 0.2, y1 + 0.2);
        let sx = |v: f64| pad + (lx(v) - x0) / (x1 - x0) * (w - 2.0 * pad);
        let sy = |v: f64| h - pad - (lx(v) - y0) / (y1 - y0) * (h - 2.0 * pad);
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <text x=\"{}\" y=\"20\" text-anchor=\"middle\">{} (H = {}): variance vs eps</text>\n\
             <line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
             <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">log10 eps</text>\n\
             <text x=\"15\" y=\"{}\" transform=\"rotate(-90 15 {})\" text-anchor=\"middle\">log10 variance</text>\n",
            w / 2.0,
            self.config.kind,
            self.config.model.hurst(),
            h - pad,
            w - pad,
            h - pad,
            h - pad,
            w / 2.0,
            h - 15.0,
            h / 2.0,
            h / 2.0
        );
        let mut series: Vec<(String, Option<u32>)> = Vec::new();
        for r in &self.rows {
            if !series.contains(&(r.series.clone(), r.q)) {
                series.push((r.series.clone(), r.q));
            }
        }
        let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
        for (i, (name, q)) in series.iter().enumerate() {
            let color = colors[i % colors.len()];
            let rows: Vec<&EpsRow> = self.rows.iter().filter(|r| &r.series == name && r.q == *q).collect();
            let line = |f: &dyn Fn(&EpsRow) -> f64| -> String {
                rows.iter()
                    .filter(|r| f(r) > 0.0)
                    .map(|r| format!("{:.2},{:.2}", sx(r.eps), sy(f(r))))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            let _ = writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
                line(&|r: &EpsRow| r.stats.variance)
            );
            let _ = writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-dasharray=\"4 3\"/>",
                line(&|r: &EpsRow| r.exact_variance)
            );
            if let Some(r) = rows.first().filter(|r| r.target > 0.0) {
                let y = sy(r.target);
                let _ = writeln!(
                    svg,
                    "<line x1=\"{pad}\" y1=\"{y:.2}\" x2=\"{}\" y2=\"{y:.2}\" stroke=\"{color}\" stroke-dasharray=\"1 3\"/>",
                    w - pad
                );
            }
            for r in &rows {
                if r.stats.variance > 0.0 {
                    let _ = writeln!(
                        svg,
                        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                        sx(r.eps),
                        sy(r.stats.variance)
                    );
                }
            }
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}: sample (solid), exact (dashed), limit (dotted)</text>",
                pad + 10.0,
                pad + 15.0 * i as f64,
                name
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Runs the experiment on a pool of `workers` threads (rayon's default when `None`).
///
/// The report does not depend on `workers`.
pub fn run_experiment(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match cfg.kind {
        ExperimentKind::AlphaClt => clt_alpha_experiment(cfg),
        ExperimentKind::ChaosL2 => chaos_l2_experiment(cfg),
        ExperimentKind::ChaosClt => clt_chaos_experiment(cfg),
    })
}

fn make_row(
    series: &str,
    q: Option<u32>,
    eps: f64,
    samples: &[f64],
    exact: (f64, bool),
    target: f64,
    target_name: &str,
) -> Result<EpsRow> {
    let stats = normality_stats(samples)?;
    let (mean_se, variance_se) = standard_errors(samples, stats.mean, stats.variance);
    Ok(EpsRow {
        series: series.into(),
        q,
        eps,
        stats,
        mean_se,
        variance_se,
        variance_ci95: (stats.variance - 1.96 * variance_se, stats.variance + 1.96 * variance_se),
        exact_variance: exact.0,
        exact_converged: exact.1,
        target,
        target_name: target_name.into(),
    })
}

fn row_label(r: &EpsRow) -> String {
    format!("{} eps={:e}", r.series, r.eps)
}

fn mean_and_closure_checks(r: &EpsRow, tol: &Tolerances, checks: &mut Vec<Check>) {
    let label = row_label(r);
    checks.push(Check::at_most(
        format!("{label}: |mean| / SE"),
        r.stats.mean.abs() / r.mean_se,
        tol.se_multiplier,
    ));
    checks.push(Check::at_most(
        format!("{label}: |variance - exact| / SE"),
        (r.stats.variance - r.exact_variance).abs() / r.variance_se,
        tol.se_multiplier,
    ));
}

fn normality_checks(r: &EpsRow, tol: &Tolerances, checks: &mut Vec<Check>) {
    let label = row_label(r);
    checks.push(Check::above(format!("{label}: JB p-value"), r.stats.jb_p, tol.normality_alpha));
    checks.push(Check::above(format!("{label}: KS p-value"), r.stats.ks_p, tol.normality_alpha));
}

fn finish(cfg: &ExperimentConfig, rows: Vec<EpsRow>, differences: Vec<DiffRow>, checks: Vec<Check>) -> ExperimentReport {
    let passed = checks.iter().all(|c| c.pass);
    ExperimentReport { config: cfg.clone(), rows, differences, checks, passed }
}

/// Per path and per `ε`: `(α_ε, J_1[α_ε])`.
fn alpha_and_first_chaos(cfg: &ExperimentConfig) -> Result<Vec<Vec<(f64, f64)>>> {
    let sampler = Sampler::new(&cfg.model, &cfg.grid, cfg.method)?;
    let per_path = sampler.map_paths(cfg.master_seed, cfg.n_paths, |path| -> Result<Vec<(f64, f64)>> {
        let alpha = alpha_eps_multi(path, &cfg.eps_schedule)?;
        cfg.eps_schedule
            .iter()
            .zip(alpha)
            .map(|(&e, a)| Ok((a.raw, chaos_projections(path, e, 1)?[0].raw)))
            .collect()
    });
    per_path.into_iter().collect()
}

/// Check of `ε^{3/2-1/H} α_ε → N(0, σ²)`, with the exactly Gaussian
/// first chaos component as a control series.
pub fn clt_alpha_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let model = cfg.model;
    let tol = cfg.tolerances;
    let opts = cfg.quadrature_options();
    let sigma2 = sigma_squared(&model)?;
    let data = alpha_and_first_chaos(cfg)?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for (i, &eps) in cfg.eps_schedule.iter().enumerate() {
        let f2 = scale_alpha(&model, eps, 1.0).powi(2);
        let alpha: Vec<f64> = data.iter().map(|p| scale_alpha(&model, eps, p[i].0)).collect();
        let first: Vec<f64> = data.iter().map(|p| scale_alpha(&model, eps, p[i].1)).collect();
        let exact_alpha = exact_alpha_variance_with(&model, eps, &opts)?.total;
        let spec = ChaosKernelSpec::new(1, eps, model)?;
        let exact_first = exact_chaos_variance_with(&spec, &opts)?;
        let ra = make_row(
            "alpha",
            None,
            eps,
            &alpha,
            (exact_alpha.value * f2, exact_alpha.converged),
            sigma2,
            "sigma_squared",
        )?;
        let rf = make_row(
            "first_chaos",
            Some(1),
            eps,
            &first,
            (exact_first.value * f2, exact_first.converged),
            sigma2,
            "sigma_squared",
        )?;
        mean_and_closure_checks(&ra, &tol, &mut checks);
        mean_and_closure_checks(&rf, &tol, &mut checks);
        checks.push(Check::above(
            format!("{}: KS p-value", row_label(&rf)),
            rf.stats.ks_p,
            tol.normality_alpha,
        ));
        rows.push(ra);
        rows.push(rf);
    }
    let last = rows.iter().rev().find(|r| r.series == "alpha").expect("at least one eps");
    checks.push(Check::at_most(
        format!("{}: |variance / sigma_squared - 1|", row_label(last)),
        (last.stats.variance / sigma2 - 1.0).abs(),
        tol.variance_rel_tol,
    ));
    let last = last.clone();
    normality_checks(&last, &tol, &mut checks);
    Ok(finish(cfg, rows, Vec::new(), checks))
}

/// Per path, per `ε`, per `q` in the config: the raw chaos component.
fn chaos_samples(cfg: &ExperimentConfig) -> Result<Vec<Vec<Vec<f64>>>> {
    let sampler = Sampler::new(&cfg.model, &cfg.grid, cfg.method)?;
    let max_q = *cfg.q_list.iter().max().expect("validated");
    let per_path = sampler.map_paths(cfg.master_seed, cfg.n_paths, |path| -> Result<Vec<Vec<f64>>> {
        cfg.eps_schedule
            .iter()
            .map(|&e| {
                let all = chaos_projections(path, e, max_q)?;
                Ok(cfg.q_list.iter().map(|&q| all[q as usize - 1].raw).collect())
            })
            .collect()
    });
    per_path.into_iter().collect()
}

/// `E[(X - Y)²]` and its standard error, for samples on common paths.
pub fn l2_difference(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sq: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).collect();
    let mean = sq.iter().sum::<f64>() / n;
    let var = sq.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Cauchy-in-L² check of chaos components on common random numbers, `2/3 < H < 3/4`.
pub fn chaos_l2_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let model = cfg.model;
    let tol = cfg.tolerances;
    let opts = cfg.quadrature_options();
    let data = chaos_samples(cfg)?;
    let mut rows = Vec::new();
    let mut differences = Vec::new();
    let mut checks = Vec::new();
    for (qi, &q) in cfg.q_list.iter().enumerate() {
        let bar = sigma_q_bar_squared_with(&ChaosKernelSpec::new(q, 1.0, model)?, &opts)?;
        let series = format!("chaos_q{q}");
        let column = |i: usize| -> Vec<f64> { data.iter().map(|p| p[i][qi]).collect() };
        for (i, &eps) in cfg.eps_schedule.iter().enumerate() {
            let exact = exact_chaos_variance_with(&ChaosKernelSpec::new(q, eps, model)?, &opts)?;
            let r = make_row(
                &series,
                Some(q),
                eps,
                &column(i),
                (exact.value, exact.converged),
                bar.value,
                "sigma_q_bar_squared",
            )?;
            mean_and_closure_checks(&r, &tol, &mut checks);
            rows.push(r);
        }
        for i in 0..cfg.eps_schedule.len().saturating_sub(1) {
            let (mean_square, se) = l2_difference(&column(i), &column(i + 1));
            differences.push(DiffRow {
                q,
                eps_from: cfg.eps_schedule[i],
                eps_to: cfg.eps_schedule[i + 1],
                mean_square,
                se,
            });
        }
        let diffs: Vec<&DiffRow> = differences.iter().filter(|d| d.q == q).collect();
        for w in diffs.windows(2) {
            checks.push(Check::below(
                format!(
                    "{series}: L2 difference ratio ({:e}->{:e}) / ({:e}->{:e})",
                    w[1].eps_from, w[1].eps_to, w[0].eps_from, w[0].eps_to
                ),
                w[1].mean_square / w[0].mean_square,
                tol.cauchy_decrease_factor,
            ));
        }
        let last = rows.iter().rev().find(|r| r.q == Some(q)).expect("at least one eps");
        checks.push(Check::at_most(
            format!("{}: |exact variance / sigma_q_bar_squared - 1|", row_label(last)),
            (last.exact_variance / bar.value - 1.0).abs(),
            tol.variance_rel_tol,
        ));
    }
    Ok(finish(cfg, rows, differences, checks))
}

/// Gaussian limit of `ε^{1-3/(4H)} J_{2q-1}[α_ε]` for `3/4 < H < (4q-3)/(4q-2)`.
pub fn clt_chaos_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let model = cfg.model;
    let tol = cfg.tolerances;
    let opts = cfg.quadrature_options();
    let data = chaos_samples(cfg)?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for (qi, &q) in cfg.q_list.iter().enumerate() {
        let sq = sigma_q_squared_with(&ChaosKernelSpec::new(q, 1.0, model)?, &opts)?;
        let series = format!("chaos_q{q}");
        for (i, &eps) in cfg.eps_schedule.iter().enumerate() {
            let f = scale_chaos(&model, eps, 1.0);
            let samples: Vec<f64> = data.iter().map(|p| p[i][qi] * f).collect();
            let exact = exact_chaos_variance_with(&ChaosKernelSpec::new(q, eps, model)?, &opts)?;
            let r = make_row(
                &series,
                Some(q),
                eps,
                &samples,
                (exact.value * f * f, exact.converged),
                sq.value,
                "sigma_q_squared",
            )?;
            mean_and_closure_checks(&r, &tol, &mut checks);
            rows.push(r);
        }
        let qrows: Vec<&EpsRow> = rows.iter().filter(|r| r.q == Some(q)).collect();
        for w in qrows.windows(2) {
            checks.push(Check::below(
                format!("{series}: |kurtosis| ratio eps={:e} / eps={:e}", w[1].eps, w[0].eps),
                w[1].stats.excess_kurtosis.abs() / w[0].stats.excess_kurtosis.abs(),
                1.0,
            ));
        }
        let last = (*qrows.last().expect("at least one eps")).clone();
        checks.push(Check::below(
            format!("{}: |excess kurtosis|", row_label(&last)),
            last.stats.excess_kurtosis.abs(),
            tol.kurtosis_tol,
        ));
        let ratio = last.stats.variance / sq.value;
        let (lo, hi) = tol.variance_ratio_band;
        checks.push(Check {
            name: format!("{}: variance / sigma_q_squared in [{lo}, {hi}]", row_label(&last)),
            value: ratio,
            threshold: lo,
            pass: ratio >= lo && ratio <= hi,
        });
        normality_checks(&last, &tol, &mut checks);
    }
    Ok(finish(cfg, rows, Vec::new(), checks))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal_quantiles(n: usize) -> Vec<f64> {
        // inverse normal CDF by bisection on std_normal_cdf
        (0..n)
            .map(|i| {
                let p = (i as f64 + 0.5) / n as f64;
                let (mut lo, mut hi) = (-10.0, 10.0);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if std_normal_cdf(mid) < p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect()
    }

    #[test]
    fn normal_grid_passes() {
        let s = normality_stats(&normal_quantiles(10_000)).unwrap();
        assert!(s.ks_stat < 0.02);
        assert!(s.jb_p > 0.5);
        assert!(s.mean.abs() < 1e-12);
    }

    #[test]
    fn uniform_grid_fails_jb() {
        let u: Vec<f64> = (0..10_000).map(|i| (i as f64 + 0.5) / 10_000.0).collect();
        let s = normality_stats(&u).unwrap();
        assert!(s.jb_p < 1e-3);
        assert!((s.excess_kurtosis + 1.2).abs() < 1e-3);
    }

    #[test]
    fn guards() {
        assert!(normality_stats(&[1.0; 7]).is_err());
        assert!(normality_stats(&[2.0; 20]).is_err());
    }

    #[test]
    fn kolmogorov_tail_reference() {
        // P(K > 1.36) ≈ 0.049 and P(K > 1.63) ≈ 0.0098
        assert!((kolmogorov_sf(1.36) - 0.0494).abs() < 5e-4);
        assert!((kolmogorov_sf(1.63) - 0.0098).abs() < 3e-4);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn l2_difference_of_identical_samples_is_zero() {
        let x = [1.0, -2.0, 3.5, 0.25];
        assert_eq!(l2_difference(&x, &x), (0.0, 0.0));
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::AlphaClt, 0.7).unwrap();
        assert!(cfg.validate().is_ok());
        cfg.eps_schedule = vec![1e-2, 1e-1];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.eps_schedule = vec![1e-1];
        cfg.n_paths = 99;
        assert!(cfg.validate().is_err());
        cfg.n_paths = 100;
        cfg.grid = GridSpec::new(2, 1.0).unwrap();
        assert!(cfg.validate().is_err());
        cfg.allow_underresolved = true;
        assert!(cfg.validate().is_ok());

        let cfg = ExperimentConfig::new(ExperimentKind::ChaosClt, 0.7).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Window { .. })));
        let cfg = ExperimentConfig::new(ExperimentKind::ChaosClt, 0.85).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Window { .. })));
        let cfg = ExperimentConfig::new(ExperimentKind::ChaosL2, 0.8).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Window { .. })));
        let cfg = ExperimentConfig::new(ExperimentKind::ChaosClt, 0.75).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::CriticalHurst { .. })));
    }
}
