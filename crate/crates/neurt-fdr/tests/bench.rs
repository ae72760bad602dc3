use neurt_fdr::bench::{aggregate, emit_plot_data, mean_ci, run_benchmark, BenchConfig, Failure, Metric, Scenario};
use neurt_fdr_core::pipeline::Method;
use neurt_fdr_core::simgen::{AltKind, PriorKind};

fn small() -> BenchConfig {
    let mut c = BenchConfig {
        methods: vec![Method::Bh, Method::Sbh, Method::TwoGroups, Method::NeurtA],
        scenarios: vec![
            Scenario { prior: PriorKind::Linear, alt: AltKind::WellSeparated },
            Scenario { prior: PriorKind::Nonlinear, alt: AltKind::PoorlySeparated },
        ],
        alphas: vec![0.1, 0.2],
        trials: 2,
        n: 300,
        k: 4,
        q: 2,
        ..BenchConfig::default()
    };
    c.pipeline.train.max_epochs = 12;
    c.pipeline.train.lambda_grid_nodes = 48;
    c
}

#[test]
fn rows_aggregates_and_panels_agree() {
    let config = small();
    let out = run_benchmark(&config, Some(2)).unwrap();
    let r = &out.report;
    assert!(r.failures.is_empty(), "{:?}", r.failures);
    assert_eq!(r.rows.len(), 2 * 4 * 2 * 2);
    assert_eq!(r.aggregates.len(), 2 * 4 * 2 * 2);

    for a in &r.aggregates {
        let values: Vec<f64> = r
            .rows
            .iter()
            .filter(|t| t.method == a.method && t.scenario == a.scenario && t.alt == a.alt && t.alpha == a.alpha)
            .map(|t| if a.metric == Metric::Fdp { t.fdp } else { t.power })
            .collect();
        assert_eq!(values.len(), 2);
        let mean = (values[0] + values[1]) / 2.0;
        let sd = ((values[0] - mean).powi(2) + (values[1] - mean).powi(2)).sqrt();
        let half = 1.96 * sd / 2f64.sqrt();
        assert!((a.mean - mean).abs() <= 1e-12);
        assert!((a.ci_half_width.unwrap() - half).abs() <= 1e-12);
        assert!((a.ci_lo.unwrap() - (mean - half)).abs() <= 1e-12);
    }

    // one network per trial; the selected epoch never scores worse than the start
    assert_eq!(r.training.len(), 4);
    for t in &r.training {
        assert!(t.selected_loss <= t.initial_loss, "{t:?}");
    }

    let dir = tempfile::tempdir().unwrap();
    let files = emit_plot_data(r, dir.path()).unwrap();
    assert_eq!(files.len(), 6);
    for f in files.iter().filter(|f| f.extension().is_some_and(|e| e == "svg")) {
        let text = std::fs::read_to_string(f).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        let lines = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
        assert_eq!(lines, 4, "{}", f.display());
    }
    let csv = std::fs::read_to_string(dir.path().join("linear_ws.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "method,scenario,alt,alpha,metric,mean,ci_lo,ci_hi");
    assert_eq!(lines.count(), 4 * 2 * 2);
}

#[test]
fn single_trial_has_no_interval() {
    assert_eq!(mean_ci(&[0.3]), (0.3, None));
    let mut config = small();
    config.trials = 1;
    config.methods = vec![Method::Bh];
    config.scenarios.truncate(1);
    let out = run_benchmark(&config, Some(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_plot_data(&out.report, dir.path()).unwrap();
    assert!(out.report.aggregates.iter().all(|a| a.ci_lo.is_none() && a.ci_hi.is_none()));
    let csv = std::fs::read_to_string(dir.path().join("linear_ws.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",,")), "{csv}");
}

#[test]
fn failed_cells_are_dropped_and_logged() {
    let config = small();
    let mut out = run_benchmark(&config, Some(2)).unwrap();
    let failure = Failure {
        method: Method::NeurtA,
        scenario: PriorKind::Linear,
        alt: AltKind::WellSeparated,
        trial: 1,
        error: "synthetic failure".into(),
    };
    out.report.rows.retain(|r| !(r.method == Method::NeurtA && r.scenario == PriorKind::Linear && r.trial == 1));
    out.report.failures.push(failure);
    let (aggregates, failed) = aggregate(&config, &out.report.rows, &out.report.failures);
    assert_eq!(failed.len(), 1);
    assert_eq!(aggregates.len(), (2 * 4 - 1) * 2 * 2);
    out.report.aggregates = aggregates;
    out.report.failed_cells = failed;
    let dir = tempfile::tempdir().unwrap();
    emit_plot_data(&out.report, dir.path()).unwrap();
    let log = std::fs::read_to_string(dir.path().join("warnings.log")).unwrap();
    assert!(log.contains("neurt-a") && log.contains("synthetic failure"), "{log}");
    let svg = std::fs::read_to_string(dir.path().join("linear_ws_fdp.svg")).unwrap();
    assert!(!svg.contains(">neurt-a<"));
}
