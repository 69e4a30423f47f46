use super::*;

fn small(seeds: Vec<u64>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { seeds, ..ExperimentConfig::default() };
    cfg.system.n_elements = 2;
    cfg.system.ao.randomization_count = 20;
    cfg.system.ao.max_iters = 5;
    cfg
}

#[test]
fn config_rejects_bad_input() {
    assert!(matches!(ExperimentConfig::from_json(r#"{"seeds": []}"#), Err(Error::Config(_))));
    assert!(ExperimentConfig::from_json(r#"{"seed": [1]}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"system": {"n_elemnts": 4}}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"sweep": {"axis": "p_max_dbm", "values": [10, 10]}}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"sweep": {"axis": "n_elements", "values": [4, 8.5]}}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"schemes": ["ris"]}"#).is_err());
    assert!(ExperimentConfig::from_json("{").is_err());
}

#[test]
fn config_parses_partial_json() {
    let cfg = ExperimentConfig::from_json(
        r#"{"system": {"n_elements": 8, "ao": {"max_iters": 10}},
            "sweep": {"axis": "p_max_dbm", "values": [20, 30]},
            "schemes": ["ris-robust"], "seeds": [3, 4],
            "impairments": [{"mu_t": 0.01, "mu_r": 0.02}]}"#,
    )
    .unwrap();
    assert_eq!(cfg.system.n_antennas, 4);
    assert_eq!(cfg.system.ao.max_iters, 10);
    assert_eq!(cfg.system.ao.epsilon, 1e-4);
    let jobs = cfg.jobs();
    assert_eq!(jobs.len(), 4);
    assert_eq!(jobs[1].seed, 4);
    assert_eq!(jobs[2].system.p_max_dbm, 30.0);
    assert_eq!(jobs[0].system.hardware.mu_r, 0.02);
}

#[test]
fn mean_ci_cases() {
    assert_eq!(mean_ci(&[2.0, 2.0, 2.0]), (2.0, Some(0.0)));
    assert_eq!(mean_ci(&[1.0, 3.0]).0, 2.0);
    assert_eq!(mean_ci(&[5.0]), (5.0, None));
    // CONFIDENCE.NORM(0.05, STDEV.S(...), 10) worked by hand
    let xs = [1.2, 3.4, 2.2, 5.1, 0.7, 2.9, 3.3, 4.0, 1.8, 2.6];
    let (m, h) = mean_ci(&xs);
    assert!((m - 2.72).abs() < 1e-12);
    let sd = (15.656 / 9.0_f64).sqrt();
    assert!((h.unwrap() - 1.959964 * sd / 10f64.sqrt()).abs() < 1e-6);
}

#[test]
fn aggregate_groups_cells() {
    let row = |scheme, seed, p, rate| ResultRow {
        scheme,
        seed,
        p_max_dbm: p,
        m: 4,
        mu_t: 0.01,
        mu_r: 0.01,
        secrecy_rate: rate,
        iterations: 1,
        rank1_ratio_final: None,
        status: "converged".into(),
        runtime_ms: 0,
    };
    let rows = vec![
        row(SchemeId::RisRobust, 0, 30.0, 1.0),
        row(SchemeId::RisRobust, 1, 30.0, 3.0),
        row(SchemeId::NonRisRobust, 0, 30.0, 0.5),
        row(SchemeId::RisRobust, 0, 40.0, 2.0),
    ];
    let cells = aggregate(&rows);
    assert_eq!(cells.len(), 3);
    assert_eq!((cells[0].n, cells[0].mean), (2, 2.0));
    assert_eq!(cells[1].ci95, None);
    let mut buf = Vec::new();
    write_summary_csv(&cells, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.lines().nth(2).unwrap().ends_with(",n/a"));
}

#[test]
fn experiment_is_reproducible_and_ordered() {
    let cfg = small(vec![2, 0, 1]);
    let a = run_experiment(&cfg, Some(1)).unwrap();
    let b = run_experiment(&cfg, Some(2)).unwrap();
    assert_eq!(a.len(), 12);
    assert_eq!(to_csv_string(&a).unwrap(), to_csv_string(&b).unwrap());
    let seeds: Vec<u64> = a.iter().take(3).map(|r| r.seed).collect();
    assert_eq!(seeds, [2, 0, 1]);
    assert!(a.iter().all(|r| r.secrecy_rate >= 0.0 && r.runtime_ms == 0));
    assert!(a.iter().filter(|r| !r.scheme.uses_ris()).all(|r| r.rank1_ratio_final.is_none()));
}

#[test]
fn csv_round_trips_and_rows_replay() {
    let cfg = small(vec![5]);
    let rows = run_experiment(&cfg, Some(1)).unwrap();
    let text = to_csv_string(&rows).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    let back = read_csv(text.as_bytes()).unwrap();
    assert_eq!(back, rows);
    for (job, row) in cfg.jobs().iter().zip(&rows) {
        assert_eq!(run_job(job, false).secrecy_rate, row.secrecy_rate);
    }
}

#[test]
fn failed_runs_become_rows() {
    let mut cfg = small(vec![0]);
    cfg.schemes = vec![SchemeId::RisRobust];
    let mut job = cfg.jobs().remove(0);
    job.system.hardware.mu_t = -1.0;
    let row = run_job(&job, false);
    assert!(row.status.starts_with("failed:"), "{}", row.status);
    assert_eq!(row.secrecy_rate, 0.0);
}

#[test]
fn m_sweep_points() {
    let mut cfg = small(vec![0]);
    cfg.sweep = Some(Sweep { axis: SweepAxis::NElements, values: vec![0.0, 3.0] });
    let ms: Vec<usize> = cfg.points().iter().map(|p| p.n_elements).collect();
    assert_eq!(ms, [0, 3]);
}
