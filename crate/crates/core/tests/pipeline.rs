//! Full pipeline on a two-dataset toy corpus with capped learners.

use std::fmt::Write as _;
use std::path::Path;

use autopriv::pipeline::{self, PipelineConfig, RecommendOptions, BASELINE_ID};
use autopriv::synth::Technique;
use rand::Rng;

const GRID_NATIVE: usize = 45;

fn write_dataset(path: &Path, seed: u64, rows: usize) {
    let mut rng = autopriv::seed::rng(seed);
    let mut s = String::from("age,income,hours,score,region,class\n");
    for i in 0..rows {
        let age: i32 = rng.random_range(18..70);
        let income: i32 = rng.random_range(10..90);
        let hours: i32 = rng.random_range(10..60);
        let region = ["n", "s", "e"][rng.random_range(0..3)];
        let score: i32 = rng.random_range(0..100);
        let z = (age - 44) as f64 / 15.0 + (income - 50) as f64 / 25.0 + rng.random_range(-1.0..1.0);
        // both classes are guaranteed by the first two rows
        let class = if i < 2 {
            ["yes", "no"][i]
        } else if z > 0.0 {
            "yes"
        } else {
            "no"
        };
        writeln!(s, "{age},{income},{hours},{score},{region},{class}").unwrap();
    }
    std::fs::write(path, s).unwrap();
}

fn config(corpus: &Path, out: &Path) -> PipelineConfig {
    PipelineConfig {
        corpus_dir: corpus.to_path_buf(),
        out_dir: out.to_path_buf(),
        master_seed: 7,
        qi_count: 1,
        folds: 2,
        repeats: 1,
        max_trees: Some(5),
        max_epochs: Some(5),
        n_targets: Some(30),
        top_n: 10,
        ..PipelineConfig::default()
    }
}

fn run_all(cfg: &PipelineConfig) {
    pipeline::run_protect(cfg).unwrap();
    pipeline::run_evaluate(cfg).unwrap();
    pipeline::run_attack(cfg).unwrap();
    pipeline::build_metadataset(cfg).unwrap();
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<csv::StringRecord>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    (header, r.records().map(Result::unwrap).collect())
}

#[test]
fn pipeline_end_to_end_on_toy_corpus() {
    let corpus = tempfile::tempdir().unwrap();
    write_dataset(&corpus.path().join("alpha.csv"), 1, 90);
    write_dataset(&corpus.path().join("beta.csv"), 2, 110);
    let out = tempfile::tempdir().unwrap();
    let cfg = config(corpus.path(), out.path());
    run_all(&cfg);

    // one native variant per PrivateSMOTE configuration
    for ds in ["alpha", "beta"] {
        let dir = out.path().join(ds).join("0");
        let n = std::fs::read_dir(&dir)
            .unwrap()
            .filter(|e| {
                let p = e.as_ref().unwrap().path();
                p.extension().is_some_and(|x| x == "csv") && !p.to_string_lossy().ends_with(".ledger.csv")
            })
            .count();
        assert_eq!(n, GRID_NATIVE, "{ds}");
    }

    let (header, evals) = csv_rows(&out.path().join(pipeline::EVALUATIONS_CSV));
    assert_eq!(header, pipeline::EVALUATION_HEADER);
    assert_eq!(evals.len(), 2 * GRID_NATIVE + 2);
    let baselines: Vec<_> = evals.iter().filter(|r| &r[2] == BASELINE_ID).collect();
    assert_eq!(baselines.len(), 2);
    assert!(baselines.iter().all(|r| r[1].is_empty()));

    let (header, links) = csv_rows(&out.path().join(pipeline::LINKABILITY_CSV));
    assert_eq!(header, pipeline::LINK_HEADER);
    assert_eq!(links.len(), 2 * GRID_NATIVE);

    let (header, meta) = csv_rows(&out.path().join(pipeline::META_CSV));
    assert_eq!(header.len(), 3 + 34 + 2);
    let (_, excluded) = csv_rows(&out.path().join(pipeline::META_EXCLUDED_CSV));
    assert_eq!(meta.len() + excluded.len(), 2 * GRID_NATIVE);

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.path().join(pipeline::MANIFEST_JSON)).unwrap()).unwrap();
    for phase in ["protect", "evaluate", "attack"] {
        assert!(manifest["phases"][phase].is_object(), "{phase} missing from manifest");
    }

    let opts = RecommendOptions {
        exclude_dataset: Some("alpha".into()),
        ..RecommendOptions::default()
    };
    let rec = pipeline::cmd_recommend(&cfg, &corpus.path().join("alpha.csv"), &opts).unwrap();
    assert_eq!(rec.ranked.len(), 10);
    assert!(rec.ranked.iter().all(|r| r.config.technique == Technique::PrivateSMOTE));
    assert!(rec.ranked.windows(2).all(|w| w[0].avg_rank >= w[1].avg_rank));
    assert!(out.path().join("recommendations/alpha.json").exists());

    let evals_path = out.path().join(pipeline::EVALUATIONS_CSV);
    let same = pipeline::compare_evaluations(&evals_path, &evals_path, "cv_auc_mean", 3).unwrap();
    assert_eq!(same.counts.0 + same.counts.2, 0);
    assert_eq!(same.n_pairs, same.counts.1);
    assert!(same.p_draw > 0.9);
    assert_eq!(same.unmatched, 0);

    // reruns into a fresh directory reproduce the meta-dataset byte for byte
    let again = tempfile::tempdir().unwrap();
    run_all(&config(corpus.path(), again.path()));
    assert_eq!(
        std::fs::read(out.path().join(pipeline::META_CSV)).unwrap(),
        std::fs::read(again.path().join(pipeline::META_CSV)).unwrap()
    );
}

#[test]
fn evaluate_before_protect_fails() {
    let corpus = tempfile::tempdir().unwrap();
    write_dataset(&corpus.path().join("alpha.csv"), 1, 40);
    let out = tempfile::tempdir().unwrap();
    assert!(pipeline::run_evaluate(&config(corpus.path(), out.path())).is_err());
}
