use hpband::adapt::run_hp;
use hpband::config::RunConfig;
use hpband::harness::{convergence_study, error_report, ReferenceGrid};
use hpband::interp::GlobalInterpolant;
use hpband::WaveVector;

#[test]
fn synthetic_run_from_json_and_dump_reload() {
    let cfg = RunConfig::from_json(
        r#"{"L": 3, "nMax": 5,
            "provider": {"kind": "synthetic", "model": {"type": "crossingPoint"}, "bands": 3},
            "grid": 40}"#,
    )
    .unwrap();
    let provider = cfg.build_provider().unwrap();
    let run = run_hp(&provider, &cfg.adapt).unwrap();
    assert_eq!(run.interpolants.len(), 2);
    assert_eq!(run.adapt.log.len(), 5);
    assert_eq!(run.adapt.log.last().unwrap().n, run.n);
    assert!(run.adapt.log.windows(2).all(|w| w[0].n_elems <= w[1].n_elems));

    let grid = ReferenceGrid::new(cfg.adapt.domain, cfg.grid).unwrap();
    let report = error_report(&run.interpolants[..1], &provider, &grid).unwrap();
    assert!(report.error_inf < 0.05, "{}", report.error_inf);

    let reloaded = GlobalInterpolant::from_text(&run.interpolants[0].to_text()).unwrap();
    for &k in grid.points.iter().step_by(7) {
        let a = run.interpolants[0].band_value(k).unwrap();
        let b = reloaded.band_value(k).unwrap();
        assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
    }
}

#[test]
fn error_decreases_over_loops() {
    let cfg = RunConfig::from_json(
        r#"{"L": 3, "nMax": 6,
            "provider": {"kind": "synthetic", "model": {"type": "crossingLine"}, "bands": 3}}"#,
    )
    .unwrap();
    let provider = cfg.build_provider().unwrap();
    let grid = ReferenceGrid::new(cfg.adapt.domain, 60).unwrap();
    let study = convergence_study(&provider, &cfg.adapt, 6, &grid, 2).unwrap();
    let first = study.rows.first().unwrap();
    let last = study.rows.last().unwrap();
    assert!(last.n > first.n);
    assert!(last.error_inf < 0.5 * first.error_inf);
}

#[test]
fn fem_provider_end_to_end() {
    let cfg = RunConfig::from_json(
        r#"{"L": 4, "nMax": 3,
            "provider": {"kind": "fem", "cellMeshN": 8, "L": 4}}"#,
    )
    .unwrap();
    let provider = cfg.build_provider().unwrap();
    let run = run_hp(&provider, &cfg.adapt).unwrap();
    assert_eq!(run.interpolants.len(), 3);
    let k = WaveVector::new(2.0, 0.7);
    let exact = provider.omega(k).unwrap();
    for (q, gi) in run.interpolants.iter().enumerate() {
        let approx = gi.band_value(k).unwrap();
        assert!((approx - exact[q]).abs() < 0.05 * exact[q], "band {q}: {approx} vs {}", exact[q]);
    }
}
