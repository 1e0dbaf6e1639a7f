//! Small experiment runs: report structure, recomputable flags and scheduling invariance.

use fbm_dslt::experiments::{run_experiment, ExperimentConfig, ExperimentKind};
use fbm_dslt::sim::GridSpec;

fn small(kind: ExperimentKind, h: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(kind, h).unwrap();
    cfg.grid = GridSpec::new(128, 1.0).unwrap();
    cfg.eps_schedule = vec![1e-1, 1e-2];
    cfg.n_paths = 150;
    cfg
}

#[test]
fn alpha_report_is_consistent() {
    let cfg = small(ExperimentKind::AlphaClt, 0.7);
    let r = run_experiment(&cfg, Some(2)).unwrap();
    assert_eq!(r.rows.len(), 4);
    assert_eq!(r.passed, r.checks.iter().all(|c| c.pass));
    for row in &r.rows {
        assert_eq!(row.stats.n, 150);
        assert!(row.variance_ci95.0 < row.stats.variance && row.stats.variance < row.variance_ci95.1);
        assert!(row.exact_converged);
    }
    for c in &r.checks {
        let recomputed = if c.name.contains("p-value") || c.name.contains("ratio") {
            if c.name.contains("p-value") {
                c.value > c.threshold
            } else {
                c.value < c.threshold
            }
        } else {
            c.value <= c.threshold
        };
        assert_eq!(recomputed, c.pass, "{}", c.name);
    }
    let csv = r.to_csv();
    assert_eq!(csv.lines().count(), 1 + r.rows.len());
    let svg = r.to_svg();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
    let back: fbm_dslt::experiments::ExperimentReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert_eq!(back, r);
}

#[test]
fn worker_count_does_not_change_reports() {
    for (kind, h) in [(ExperimentKind::ChaosL2, 0.7), (ExperimentKind::ChaosClt, 0.8)] {
        let mut cfg = small(kind, h);
        cfg.q_list = vec![2, 3];
        if kind == ExperimentKind::ChaosClt {
            cfg.q_list = vec![2];
        }
        let a = run_experiment(&cfg, Some(1)).unwrap();
        let b = run_experiment(&cfg, Some(4)).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        if kind == ExperimentKind::ChaosL2 {
            assert_eq!(a.differences.len(), 2);
        }
    }
}
