//! Estimators on deterministic and simulated paths against independent oracles.

use fbm_dslt::dslt::{alpha_eps, chaos_projections, hermite_functional};
use fbm_dslt::integrate::{integrate_scalar, QuadratureOptions, Segment};
use fbm_dslt::math::heat_kernel;
use fbm_dslt::model::{ChaosKernelSpec, HurstModel};
use fbm_dslt::quadrature::{exact_alpha_variance, exact_chaos_cross_moment, exact_chaos_variance};
use fbm_dslt::sim::{FbmPath, GridSpec, Method, Sampler};

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample mean of `x_i y_i` and its standard error.
fn product_moment(x: &[f64], y: &[f64]) -> (f64, f64) {
    let p: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let m = mean(&p);
    let var = p.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (p.len() - 1) as f64;
    (m, (var / p.len() as f64).sqrt())
}

#[test]
fn ramp_path_matches_one_dimensional_integral() {
    let n = 2048;
    let eps = 1e-2;
    let m = HurstModel::new(0.7, 1.0).unwrap();
    let g = GridSpec::new(n, 1.0).unwrap();
    let path = FbmPath::from_values(m, g, (0..=n).map(|k| g.time(k)).collect()).unwrap();
    let est = alpha_eps(&path, eps).unwrap().raw;
    let p0 = heat_kernel(eps, 0.0).unwrap();
    let oracle = integrate_scalar(
        |t| heat_kernel(eps, t).unwrap() - p0,
        &[Segment::Linear { lo: 0.0, hi: 1.0 }],
        &QuadratureOptions::with_rel_tol(1e-12),
    );
    assert!(oracle.converged);
    let rel = (est - oracle.value).abs() / oracle.value.abs();
    assert!(rel < 0.01, "riemann {est} vs integral {} (rel {rel})", oracle.value);
}

struct Draws {
    alpha: Vec<f64>,
    chaos: [Vec<f64>; 4],
    h2: Vec<f64>,
}

fn draws(h: f64, n: usize, eps: f64, paths: usize, seed: u64) -> Draws {
    let m = HurstModel::new(h, 1.0).unwrap();
    let g = GridSpec::new(n, 1.0).unwrap();
    let sampler = Sampler::new(&m, &g, Method::Circulant).unwrap();
    let rows = sampler.map_paths(seed, paths, |p| {
        let j = chaos_projections(p, eps, 4).unwrap();
        (alpha_eps(p, eps).unwrap().raw, [j[0].raw, j[1].raw, j[2].raw, j[3].raw], hermite_functional(p, 2))
    });
    Draws {
        alpha: rows.iter().map(|r| r.0).collect(),
        chaos: std::array::from_fn(|q| rows.iter().map(|r| r.1[q]).collect()),
        h2: rows.iter().map(|r| r.2).collect(),
    }
}

#[test]
fn chaos_structure_of_alpha() {
    let (h, eps) = (0.7, 1e-2);
    let d = draws(h, 512, eps, 5000, 7);
    let m = HurstModel::new(h, 1.0).unwrap();

    // distinct chaoses are orthogonal
    let (c13, se13) = product_moment(&d.chaos[0], &d.chaos[1]);
    assert!(c13.abs() <= 4.0 * se13, "E[J1 J3] = {c13} (SE {se13})");

    // no second-chaos component: regression slope on the H_2 functional is zero
    let mf = mean(&d.h2);
    let fc: Vec<f64> = d.h2.iter().map(|f| f - mf).collect();
    let sxx = fc.iter().map(|f| f * f).sum::<f64>();
    let slope = fc.iter().zip(&d.alpha).map(|(f, a)| f * a).sum::<f64>() / sxx;
    let ma = mean(&d.alpha);
    let resid: f64 = fc.iter().zip(&d.alpha).map(|(f, a)| (a - ma - slope * f).powi(2)).sum();
    let se_slope = (resid / (d.alpha.len() - 2) as f64 / sxx).sqrt();
    assert!(slope.abs() <= 4.0 * se_slope, "slope {slope} (SE {se_slope})");

    // the first four chaoses carry their exact variances, and the remainder carries the rest
    let exact: Vec<f64> = (1..=4)
        .map(|q| exact_chaos_variance(&ChaosKernelSpec::new(q, eps, m).unwrap()).unwrap().value)
        .collect();
    let s4: Vec<f64> = (0..d.alpha.len()).map(|i| d.chaos.iter().map(|c| c[i]).sum()).collect();
    let (v4, se4) = product_moment(&s4, &s4);
    let e4: f64 = exact.iter().sum();
    assert!((v4 - e4).abs() <= 4.0 * se4, "Var(S4) {v4} vs {e4} (SE {se4})");
    let rem: Vec<f64> = d.alpha.iter().zip(&s4).map(|(a, s)| a - s).collect();
    let (vr, ser) = product_moment(&rem, &rem);
    let total = exact_alpha_variance(&m, eps).unwrap().total.value;
    assert!((vr - (total - e4)).abs() <= 4.0 * ser, "E[(alpha - S4)^2] {vr} vs {} (SE {ser})", total - e4);
}

#[test]
fn refining_the_grid_keeps_the_variance() {
    let eps = 1e-2;
    let var_at = |n: usize, seed: u64| {
        let d: Vec<f64> = {
            let m = HurstModel::new(0.7, 1.0).unwrap();
            let g = GridSpec::new(n, 1.0).unwrap();
            let s = Sampler::new(&m, &g, Method::Circulant).unwrap();
            s.map_paths(seed, 2000, |p| alpha_eps(p, eps).unwrap().raw)
        };
        product_moment(&d, &d)
    };
    let (v1, s1) = var_at(256, 11);
    let (v2, s2) = var_at(512, 12);
    assert!((v1 - v2).abs() <= 4.0 * (s1 * s1 + s2 * s2).sqrt(), "{v1} vs {v2}");
}

#[test]
fn third_chaos_variance_matches_quadrature() {
    let (h, eps) = (0.8, 1e-2);
    let m = HurstModel::new(h, 1.0).unwrap();
    let g = GridSpec::new(256, 1.0).unwrap();
    let s = Sampler::new(&m, &g, Method::Circulant).unwrap();
    let j3 = s.map_paths(5, 10_000, |p| chaos_projections(p, eps, 2).unwrap()[1].raw);
    let (v, se) = product_moment(&j3, &j3);
    let exact = exact_chaos_variance(&ChaosKernelSpec::new(2, eps, m).unwrap()).unwrap().value;
    assert!((v - exact).abs() <= 4.0 * se, "MC {v} vs quadrature {exact} (SE {se})");
}

#[test]
fn common_path_differences_match_quadrature() {
    let (e1, e2) = (1e-1, 1e-2);
    let m = HurstModel::new(0.7, 1.0).unwrap();
    let g = GridSpec::new(256, 1.0).unwrap();
    let s = Sampler::new(&m, &g, Method::Circulant).unwrap();
    let d = s.map_paths(13, 4000, |p| {
        chaos_projections(p, e1, 2).unwrap()[1].raw - chaos_projections(p, e2, 2).unwrap()[1].raw
    });
    let (v, se) = product_moment(&d, &d);
    let spec = |e: f64| ChaosKernelSpec::new(2, e, m).unwrap();
    let exact = exact_chaos_variance(&spec(e1)).unwrap().value + exact_chaos_variance(&spec(e2)).unwrap().value
        - 2.0 * exact_chaos_cross_moment(&spec(e1), e2).unwrap().value;
    assert!((v - exact).abs() <= 4.0 * se, "MC {v} vs quadrature {exact} (SE {se})");
}
