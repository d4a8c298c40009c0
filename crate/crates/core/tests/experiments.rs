use std::fs;

use shockstab::experiments::{self, ExperimentSpec, Mode, PlotFormat, ResultRecord};
use shockstab::riemann::RiemannSolverKind;
use shockstab::stability::LocalizationCase;

fn small_spec() -> ExperimentSpec {
    let mut s = ExperimentSpec::default();
    s.name = "small".into();
    s.mode = Mode::Both;
    s.m0 = vec![5.0];
    s.epsilon = vec![0.5, 0.9];
    s.solvers = vec![RiemannSolverKind::Roe, RiemannSolverKind::Hll];
    s.t_end = 40.0;
    s.exports.spectra = true;
    s.exports.histories = true;
    s.exports.fields = true;
    s
}

/// Everything but the wall-time column.
fn strip_wall(csv: &str) -> String {
    csv.lines().map(|l| l.rsplit_once(',').map_or(l, |(a, _)| a)).collect::<Vec<_>>().join("\n")
}

#[test]
fn identical_specs_give_identical_records() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut s = small_spec();
    s.output = Some(a.path().to_path_buf());
    let ra = experiments::run_experiment(&s).unwrap();
    s.output = Some(b.path().to_path_buf());
    let rb = experiments::run_experiment(&s).unwrap();
    assert_eq!(ra.records.len(), 4);
    assert_eq!(ra.failures(), 0, "{:?}", ra.records.iter().map(|r| &r.error).collect::<Vec<_>>());
    let read = |d: &tempfile::TempDir, f: &str| fs::read_to_string(d.path().join(f)).unwrap();
    assert_eq!(strip_wall(&read(&a, "results.csv")), strip_wall(&read(&b, "results.csv")));
    assert_eq!(read(&a, "sweep.csv"), read(&b, "sweep.csv"));
    for (fa, fb) in ra.files.iter().zip(&rb.files) {
        let name = fa.file_name().unwrap();
        assert_eq!(name, fb.file_name().unwrap());
        if name != "results.csv" && name != "results.json" {
            assert_eq!(fs::read(fa).unwrap(), fs::read(fb).unwrap(), "{}", fa.display());
        }
    }
}

#[test]
fn records_are_sorted_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = small_spec();
    s.output = Some(dir.path().to_path_buf());
    let res = experiments::run_experiment(&s).unwrap();
    for (k, r) in res.records.iter().enumerate() {
        assert_eq!(r.index, k);
        assert!(r.max_real.is_some() && r.lambda_num.is_some() && r.sim_steps.is_some(), "{}", r.key);
    }
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), ResultRecord::CSV_HEADER);
    assert_eq!(lines.count(), 4);
    assert!(!csv.contains('\r'));
    let sweep = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(sweep.starts_with("m0,epsilon,solver,limiter,order,max_real,lambda_num\n"));
    let json: Vec<ResultRecord> =
        serde_json::from_str(&fs::read_to_string(dir.path().join("results.json")).unwrap()).unwrap();
    assert_eq!(json.len(), 4);
    assert_eq!(json[2].key, res.records[2].key);
    for sub in ["spectra", "histories", "fields"] {
        assert_eq!(fs::read_dir(dir.path().join(sub)).unwrap().count(), 4, "{sub}");
    }
    let spectrum = fs::read_to_string(fs::read_dir(dir.path().join("spectra")).unwrap().next().unwrap().unwrap().path())
        .unwrap();
    assert!(spectrum.starts_with("re,im\n"));
    assert_eq!(spectrum.lines().count(), 1 + 4 * 121);
}

#[test]
fn emit_is_independent_of_record_order() {
    let s = ExperimentSpec::default();
    let mut recs = experiments::run_experiment(&ExperimentSpec { epsilon: vec![0.3, 0.7], ..s }).unwrap().records;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    experiments::emit_plotdata(&recs, a.path(), PlotFormat::Csv).unwrap();
    recs.reverse();
    experiments::emit_plotdata(&recs, b.path(), PlotFormat::Csv).unwrap();
    let read = |d: &tempfile::TempDir| fs::read_to_string(d.path().join("sweep.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn fig9_yields_ten_spectra_within_budget() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = ExperimentSpec::named("fig9").unwrap();
    s.output = Some(dir.path().to_path_buf());
    let res = experiments::run_experiment(&s).unwrap();
    assert!(res.within_budget(), "{}s", res.wall_s);
    assert_eq!(res.failures(), 0);
    assert_eq!(fs::read_dir(dir.path().join("spectra")).unwrap().count(), 10);
    let roe: Vec<&ResultRecord> = res.records.iter().filter(|r| r.solver == "roe").collect();
    assert_eq!(roe.len(), 2);
    assert!(roe.iter().all(|r| r.max_real.unwrap() > 0.0));
    let ausm = res.records.iter().find(|r| r.solver == "ausm+").unwrap();
    assert!(ausm.solver_params.contains("alpha="));
}

#[test]
fn fig17_exports_modes_for_every_case() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = ExperimentSpec::named("fig17").unwrap();
    s.output = Some(dir.path().to_path_buf());
    let res = experiments::run_experiment(&s).unwrap();
    assert_eq!(res.failures(), 0);
    assert_eq!(res.records.len(), 4);
    let by_case = |c: LocalizationCase| res.records.iter().find(|r| r.case == c.to_string()).unwrap().max_real.unwrap();
    assert!(by_case(LocalizationCase::Upstream) < 0.0);
    assert!(by_case(LocalizationCase::ShockStructure) > 0.0);
    assert_eq!(fs::read_dir(dir.path().join("modes")).unwrap().count(), 4);
}
