use super::*;
use crate::scenario::{sample, ChannelModel};
use crate::unrolled::{wmmse_equivalent_params, write_params};

fn scenario() -> ScenarioConfig {
    ScenarioConfig::homogeneous(2, 3, 2, 2, 1.0, 0.1, ChannelModel::IidRayleigh { variance: 1.0 })
}

fn method(id: &str, kind: MethodKind) -> MethodSpec {
    MethodSpec { id: id.into(), kind }
}

fn baseline_config(count: usize) -> ExperimentConfig {
    ExperimentConfig {
        name: "unit".into(),
        scenario: ScenarioSpec::Generate { config: scenario(), count },
        seed: 4,
        methods: vec![
            method("mrc", MethodKind::Wmmse { init: InitKind::Mrc, iterations: 20, repetitions: 1 }),
            method("tr3", MethodKind::Wmmse { init: InitKind::Mrc, iterations: 3, repetitions: 1 }),
            method("ri", MethodKind::Wmmse { init: InitKind::Random, iterations: 20, repetitions: 3 }),
            method("best", MethodKind::WmmseBest { iterations: 20, count: 4 }),
        ],
        reference: None,
        substeps: MU_SUBSTEPS,
        confidence: 0.99,
    }
}

#[test]
fn significant_digit_formatting() {
    assert_eq!(format_sig(1234567.0), "1.23457e6");
    assert_eq!(format_sig(0.000123456789), "0.000123457");
    assert_eq!(format_sig(12.5), "12.5");
    assert_eq!(format_sig(100.0), "100");
    assert_eq!(format_sig(-2.0e-7), "-2e-7");
    assert_eq!(format_sig(0.0), "0");
    assert_eq!(format_sig(f64::NAN), "NaN");
    assert_eq!(round_sig(std::f64::consts::PI), 3.14159);
}

#[test]
fn single_method_matches_direct_solver() {
    let cfg = ExperimentConfig {
        methods: vec![method("mrc", MethodKind::Wmmse { init: InitKind::Mrc, iterations: 10, repetitions: 1 })],
        ..baseline_config(1)
    };
    let report = run_experiment(&cfg, 1).unwrap();
    let s: Realization = sample(&scenario(), 4, 0).unwrap();
    let direct = wmmse::run(&s, &init_mrc(&s), 10, MU_SUBSTEPS).unwrap();
    let row = report.row("mrc").unwrap();
    assert_eq!(row.mean_wsr, direct.final_wsr().unwrap());
    assert_eq!(row.curve, direct.wsr);
    assert_eq!(row.rounds, 10);
    assert_eq!(row.ci_half_width, 0.0);
    assert!(row.relative_wsr_pct.is_none());
}

#[test]
fn baseline_relations_hold_per_realization() {
    let report = run_experiment(&baseline_config(6), 2).unwrap();
    assert_eq!(report.reference.as_deref(), Some("best"));
    let by = |m: &str| report.realization_rows(m).map(|r| r.wsr).collect::<Vec<_>>();
    let (mrc, tr, ri, best) = (by("mrc"), by("tr3"), by("ri"), by("best"));
    for n in 0..6 {
        assert!(tr[n] <= mrc[n] * (1.0 + 1e-7));
        assert!(best[n] >= ri[n]);
    }
    // the truncated run is the prefix of the full one
    assert_eq!(report.row("tr3").unwrap().curve[..], report.row("mrc").unwrap().curve[..3]);
    let rel = report.row("best").unwrap().relative_wsr_pct.unwrap();
    assert!((rel - 100.0).abs() < 1e-12);
    assert!(report.rows.iter().all(|r| r.feasibility_violations == 0));
}

#[test]
fn round_accounting_counts_layers_and_iterations() {
    let s: Realization = sample(&scenario(), 1, 0).unwrap();
    let gcn = gcnwmmse_forward(&s, &wmmse_equivalent_params(7, 1, 1), MU_SUBSTEPS).unwrap();
    assert_eq!(round_accounting(&gcn), 7);
    let classical = wmmse::run(&s, &init_mrc(&s), 63, MU_SUBSTEPS).unwrap();
    assert_eq!(round_accounting(&classical), 63);
    assert_eq!(round_accounting(&SolverTrajectory::<f64>::new()), 0);
}

#[test]
fn learned_method_needs_params_file() {
    let mut cfg = baseline_config(1);
    cfg.methods.push(method("gcn", MethodKind::GcnWmmse { params: "/nonexistent/params.json".into() }));
    assert!(matches!(run_experiment(&cfg, 1), Err(Error::Config(_))));
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = baseline_config(1);
    cfg.reference = Some("missing".into());
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    cfg.reference = None;
    cfg.methods.clear();
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    let mut dup = baseline_config(1);
    dup.methods[1].id = "mrc".into();
    assert!(matches!(dup.validate(), Err(Error::Config(_))));
}

#[test]
fn equivalent_network_reproduces_mrc_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eq.json");
    write_params(&path, &wmmse_equivalent_params(5, 1, 1)).unwrap();
    let mut cfg = baseline_config(3);
    cfg.methods = vec![
        method("mrc5", MethodKind::Wmmse { init: InitKind::Mrc, iterations: 5, repetitions: 1 }),
        method("gcn", MethodKind::GcnWmmse { params: path }),
    ];
    let report = run_experiment(&cfg, 2).unwrap();
    let (a, b) = (report.row("mrc5").unwrap(), report.row("gcn").unwrap());
    assert_eq!(b.rounds, 5);
    for (x, y) in a.curve.iter().zip(&b.curve) {
        assert!((x - y).abs() < 1e-8);
    }
}

#[test]
fn emitted_files_are_reproducible_and_consistent() {
    let cfg = baseline_config(4);
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    emit(&run_experiment(&cfg, 1).unwrap(), d1.path()).unwrap();
    emit(&run_experiment(&cfg, 3).unwrap(), d2.path()).unwrap();
    for f in ["aggregate.csv", "aggregate.json", "per_realization.csv", "curves.csv"] {
        let a = std::fs::read(d1.path().join(f)).unwrap();
        assert_eq!(a, std::fs::read(d2.path().join(f)).unwrap(), "{f} differs");
    }

    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(d1.path().join("aggregate.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["seed"], 4);
    let mut rdr = csv::Reader::from_path(d1.path().join("aggregate.csv")).unwrap();
    for (rec, row) in rdr.records().zip(json["rows"].as_array().unwrap()) {
        let rec = rec.unwrap();
        assert_eq!(&rec[0], row["method"].as_str().unwrap());
        assert_eq!(rec[2].parse::<f64>().unwrap(), row["mean_wsr"].as_f64().unwrap());
    }

    let mut curves = csv::Reader::from_path(d1.path().join("curves.csv")).unwrap();
    assert_eq!(curves.headers().unwrap(), vec!["method", "iter", "wsr"]);
    let rows: Vec<(String, usize, f64)> = curves.deserialize().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 20 + 3 + 20 + 20);
    assert_eq!(rows[0].1, 1);
}
