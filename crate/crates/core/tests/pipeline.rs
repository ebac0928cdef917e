mod common;

use cryptostack::classifiers::Family;
use cryptostack::pipeline::{
    emit_report, run_pipeline, stage_limit, window_label, FrameAccess, Pipeline, PipelineError, RunConfig,
    RunManifest, Stage, METRIC_ROWS,
};
use cryptostack::DateRange;
use std::sync::Mutex;

const FAMILIES: [Family; 5] = [Family::Xgb, Family::Rf, Family::Knn, Family::Lda, Family::Nb];

fn run_with_threads(config: &RunConfig, threads: usize) -> RunManifest {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| run_pipeline(config.clone())).unwrap()
}

#[test]
fn runs_are_byte_identical_across_pool_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = common::synthetic_config(dir.path(), &FAMILIES, 4, 11);
    let mut b = a.clone();
    a.out_dir = dir.path().join("one");
    b.out_dir = dir.path().join("four");
    let ma = run_with_threads(&a, 1);
    let mb = run_with_threads(&b, 4);
    let fa = common::artifact_bytes(&a.out_dir);
    let fb = common::artifact_bytes(&b.out_dir);
    assert!(fa.len() > 20, "{} artifacts", fa.len());
    assert_eq!(fa.iter().map(|f| &f.0).collect::<Vec<_>>(), fb.iter().map(|f| &f.0).collect::<Vec<_>>());
    for ((name, x), (_, y)) in fa.iter().zip(&fb) {
        assert!(x == y, "{name} differs");
    }
    // Manifest hashes agree too; only wall times may differ.
    for (sa, sb) in ma.stages.iter().zip(&mb.stages) {
        assert_eq!(sa.artifacts, sb.artifacts);
    }
    assert_eq!(ma.seeds, mb.seeds);
    assert_eq!(ma.access_log, mb.access_log);

    check_chronology(&ma);
    check_report(&a, &ma);
}

fn check_chronology(m: &RunManifest) {
    let w = &m.config.windows;
    assert!(!m.access_log.is_empty());
    for rec in &m.access_log {
        let limit = stage_limit(&m.config, rec.stage);
        assert!(rec.requested.end <= limit, "{rec:?}");
        if let Some(last) = rec.last_row {
            assert!(last <= limit, "{rec:?}");
        }
        if matches!(rec.stage, Stage::Cv | Stage::Train) {
            assert!(rec.last_row.unwrap() <= w.level0.end);
        }
        if rec.stage == Stage::Stack {
            assert!(rec.first_row.unwrap() >= w.level1.start);
        }
    }
    // Every trained model's window ends before the level-one window.
    for f in &m.config.search.families {
        let path = m.config.out_dir.join(format!("models/{}.json", f.as_str()));
        let model = cryptostack::classifiers::TrainedClassifier::from_json(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert!(model.training_window.unwrap().end < w.level1.start);
    }
}

fn check_report(c: &RunConfig, m: &RunManifest) {
    let saved = std::fs::read_to_string(c.out_dir.join("report.txt")).unwrap();
    assert_eq!(emit_report(&c.out_dir).unwrap(), saved);
    let labels = [window_label(&c.windows.level1), window_label(&c.windows.evaluation)];
    assert_eq!(labels, ["Apr-May 2018".to_string(), "Jun-Jul 2018".to_string()]);
    let lines: Vec<&str> = saved.lines().collect();
    let mut tables = 0;
    for (i, l) in lines.iter().enumerate() {
        if !l.starts_with("Model: ") {
            continue;
        }
        tables += 1;
        let header: Vec<&str> = lines[i + 1].split("  ").map(str::trim).filter(|s| !s.is_empty()).collect();
        assert_eq!(header, ["Parameter", labels[0].as_str(), labels[1].as_str()]);
        for (k, row) in METRIC_ROWS.iter().enumerate() {
            let cells: Vec<&str> = lines[i + 2 + k].split_whitespace().collect();
            assert_eq!(cells[0], *row);
            assert_eq!(cells.len(), 3, "{}", lines[i + 2 + k]);
        }
        assert!(lines[i + 2 + METRIC_ROWS.len()].is_empty());
    }
    assert_eq!(tables, m.config.search.families.len() + 1);
    assert!(saved.contains("Model: stacked"));
}

#[test]
fn single_model_skips_stacking_with_a_notice() {
    let dir = tempfile::tempdir().unwrap();
    let c = common::synthetic_config(dir.path(), &[Family::Lda], 2, 5);
    let m = run_pipeline(c.clone()).unwrap();
    assert!(m.notices.iter().any(|n| n.starts_with("[stack] stacking skipped")), "{:?}", m.notices);
    assert!(!c.out_dir.join("meta.json").exists());
    let report = std::fs::read_to_string(c.out_dir.join("report.txt")).unwrap();
    assert!(!report.contains("Model: stacked"));
    assert!(report.contains("Model: lda"));
    let imp: cryptostack::importance::ImportanceReport =
        serde_json::from_str(&std::fs::read_to_string(c.out_dir.join("importance.json")).unwrap()).unwrap();
    assert_eq!(imp.models.len(), 1);
    assert_eq!(imp.models[0].weight, 1.0);
    let per: Vec<f64> = imp.per_model.iter().map(|s| s.score).collect();
    let comb: Vec<f64> = imp.combined.iter().map(|s| s.score).collect();
    assert_eq!(per, comb);
}

#[test]
fn stages_run_one_at_a_time_and_tag_failures() {
    let dir = tempfile::tempdir().unwrap();
    let c = common::synthetic_config(dir.path(), &[Family::Lda, Family::Nb], 2, 9);
    // Training before search has no parameters to read.
    let mut p = Pipeline::new(c.clone()).unwrap();
    p.run_stage(Stage::Ingest).unwrap();
    p.run_stage(Stage::Features).unwrap();
    let err = p.run_stage(Stage::Train).unwrap_err();
    assert_eq!(err.stage, Stage::Train);
    assert!(matches!(err.error, PipelineError::MissingArtifact(_)), "{err}");
    assert!(err.to_string().starts_with("stage `train` failed"));
    let m = RunManifest::load(&c.out_dir).unwrap();
    assert_eq!(m.failed_stage, Some(Stage::Train));

    let mut p = Pipeline::resume(c.clone()).unwrap();
    for s in [Stage::Cv, Stage::Train, Stage::Stack, Stage::Evaluate, Stage::Importance, Stage::Report] {
        p.run_stage(s).unwrap();
    }
    let m = RunManifest::load(&c.out_dir).unwrap();
    assert_eq!(m.failed_stage, None);
    assert_eq!(m.stages.len(), Stage::ALL.len());
    for rec in &m.stages {
        for a in &rec.artifacts {
            let bytes = std::fs::read(c.out_dir.join(&a.path)).unwrap();
            assert_eq!(bytes.len() as u64, a.bytes);
        }
    }
}

#[test]
fn frame_access_refuses_future_rows() {
    let dir = tempfile::tempdir().unwrap();
    let c = common::synthetic_config(dir.path(), &[Family::Lda, Family::Nb], 2, 3);
    let mut p = Pipeline::new(c.clone()).unwrap();
    p.run_stage(Stage::Ingest).unwrap();
    p.run_stage(Stage::Features).unwrap();
    let frame = cryptostack::indicators::FeatureFrame::read_csv(std::fs::File::open(c.out_dir.join("features.csv")).unwrap()).unwrap();
    let log = Mutex::new(Vec::new());
    let limit = stage_limit(&c, Stage::Cv);
    let access = FrameAccess::new(&frame, Stage::Cv, limit, &log);
    assert!(access.rows(&c.windows.level0, "ok").is_ok());
    let err = access.rows(&DateRange::new(c.windows.level0.start, c.windows.level1.start), "peek").unwrap_err();
    assert!(matches!(err, PipelineError::Chronology { stage: Stage::Cv, .. }));
    assert_eq!(log.lock().unwrap().len(), 1);
}

#[test]
fn bad_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = common::synthetic_config(dir.path(), &[Family::Lda, Family::Nb], 2, 3);
    c.windows.level1.start = c.windows.level0.end;
    assert!(Pipeline::new(c.clone()).is_err());
    let toml = "seed = 1\nunknown_key = 3\n";
    assert!(RunConfig::from_toml(toml).is_err());
    let c = common::synthetic_config(dir.path(), &[Family::Lda], 2, 3);
    let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
    assert_eq!(back, c);
}
