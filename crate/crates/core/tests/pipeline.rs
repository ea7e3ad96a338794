mod common;

use std::collections::BTreeMap;
use std::io::Write;

use storyflat::pipeline::{self, PipelineError, RunConfig, TABLE_IDS};

#[test]
fn bundled_run_writes_every_table() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, cfg) = common::bundled_fixture(dir.path());
    let cfg = common::quick(cfg);
    let (report, manifest) = pipeline::run(&cfg).unwrap();

    for id in TABLE_IDS {
        for ext in ["csv", "json"] {
            let name = format!("{id}.{ext}");
            let path = cfg.output.join(&name);
            let text = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("{name} missing"));
            assert!(text.lines().count() > 1, "{name} has no rows");
            assert!(manifest.outputs.contains_key(&name), "{name} not in manifest");
        }
    }
    for name in ["results.json", "summary.md", "manifest.json"] {
        assert!(cfg.output.join(name).exists(), "{name} missing");
    }

    // Every domain and source pair has a cross-domain theme row.
    let cross = report.table("cross_domain").unwrap();
    let domains = ["professional", "prompt_guided", "public_platform"];
    for d in domains {
        for s in &cfg.stage_order {
            assert!(cross.get(&[d, s], "theme_cv").is_some(), "no theme_cv for {d}/{s}");
        }
    }
    assert_eq!(report.validation.n_continuations, corpus.continuations.len());
    assert!(report.warnings.is_empty(), "{:?}", report.warnings);
}

#[test]
fn manifest_hashes_match_files() {
    use sha2::{Digest, Sha256};
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = common::bundled_fixture(dir.path());
    let mut cfg = common::quick(cfg);
    cfg.metrics.lmm = false;
    cfg.metrics.manifold = false;
    let (_, manifest) = pipeline::run(&cfg).unwrap();
    for (name, digest) in &manifest.outputs {
        let bytes = std::fs::read(cfg.output.join(name)).unwrap();
        assert_eq!(&hex::encode(Sha256::digest(&bytes)), digest, "{name}");
    }
    assert_eq!(manifest.config_hash, cfg.hash());
}

#[test]
fn missing_input_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mut cfg) = common::bundled_fixture(dir.path());
    cfg.inputs.style_embeddings = None;
    let err = pipeline::run(&cfg).unwrap_err();
    assert!(matches!(err, PipelineError::Config(_)));
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("style_embeddings"), "{err}");
    assert!(!cfg.output.exists());
}

#[test]
fn disabled_metric_needs_no_input() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mut cfg) = common::bundled_fixture(dir.path());
    cfg.inputs.style_embeddings = None;
    cfg.metrics.style = false;
    cfg.metrics.fixed_k = false;
    cfg.metrics.manifold = false;
    cfg.metrics.pca = false;
    cfg.metrics.lmm = false;
    let report = pipeline::analyze(&common::quick(cfg.clone()), &pipeline::load_inputs(&cfg).unwrap()).unwrap();
    assert!(report
        .table("cross_domain")
        .unwrap()
        .rows
        .iter()
        .all(|r| !r.metric.starts_with("style")));
}

#[test]
fn facet_mismatch_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mut cfg) = common::bundled_fixture(dir.path());
    cfg.inputs.theme_embeddings = cfg.inputs.style_embeddings.clone();
    let err = pipeline::run(&cfg).unwrap_err();
    assert!(matches!(err, PipelineError::Input(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn config_round_trips_through_toml() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = common::bundled_fixture(dir.path());
    let loaded = RunConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(loaded.hash(), cfg.hash());
    assert!(matches!(
        RunConfig::from_toml("seed = 1\nunknown_key = 2\n"),
        Err(PipelineError::Config(_))
    ));
}

/// Drop the theme rows of one continuation and add an empty one, then check
/// that every continuation is accounted for in the exclusion table.
#[test]
fn exclusions_account_for_every_continuation() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, cfg) = common::bundled_fixture(dir.path());
    let cfg = common::quick(cfg);

    let victim = &corpus.continuations[5].key;
    let theme_path = cfg.inputs.theme_embeddings.clone().unwrap();
    let theme = std::fs::read_to_string(&theme_path).unwrap();
    let needle = format!(
        "\"story_id\":\"{}\",\"domain\":\"{}\",\"source\":\"{}\",\"cut\":{},\"sample_id\":{},",
        victim.story_id,
        victim.domain,
        victim.source,
        victim.cut.percent(),
        victim.sample_id
    );
    let kept: Vec<&str> = theme.lines().filter(|l| !l.contains(&needle)).collect();
    assert!(kept.len() < theme.lines().count());
    std::fs::write(&theme_path, kept.join("\n")).unwrap();

    let empty = serde_json::json!({
        "story_id": corpus.stories[0].story_id, "domain": corpus.stories[0].domain,
        "source": "Base", "cut": 40, "sample_id": 99, "sentences": [],
    });
    let cont_path = cfg.inputs.continuations.clone().unwrap();
    let mut f = std::fs::OpenOptions::new().append(true).open(&cont_path).unwrap();
    writeln!(f, "{empty}").unwrap();

    let inputs = pipeline::load_inputs(&cfg).unwrap();
    let report = pipeline::analyze(&cfg, &inputs).unwrap();
    let n = inputs.dataset.continuations().len();
    assert_eq!(n, corpus.continuations.len() + 1);

    let mut by_metric: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();
    for row in &report.exclusions {
        *by_metric
            .entry(&row.metric)
            .or_default()
            .entry(&row.status)
            .or_insert(0) += row.count;
    }
    for metric in ["theme_cv", "affect", "style"] {
        let counts = &by_metric[metric];
        assert_eq!(counts.values().sum::<usize>(), n, "{metric}: {counts:?}");
        assert_eq!(counts.get("empty_continuation"), Some(&1), "{metric}: {counts:?}");
    }
    assert_eq!(by_metric["theme_cv"].get("missing_embedding"), Some(&1));
    assert_eq!(by_metric["affect"].get("missing_embedding"), None);
}

#[test]
fn seed_changes_intervals_but_not_points() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, cfg) = common::bundled_fixture(dir.path());
    let mut cfg = common::quick(cfg);
    cfg.metrics.lmm = false;
    cfg.metrics.manifold = false;
    cfg.metrics.fixed_k = false;
    let inputs = corpus.inputs();
    let a = pipeline::analyze(&cfg, &inputs).unwrap();
    cfg.seed += 1;
    let b = pipeline::analyze(&cfg, &inputs).unwrap();
    let g = ["professional", "SFT"];
    let (ea, eb) = (
        a.table("cross_domain").unwrap().get(&g, "theme_cv").unwrap(),
        b.table("cross_domain").unwrap().get(&g, "theme_cv").unwrap(),
    );
    assert_eq!(ea.value, eb.value);
    assert_ne!((ea.ci_low, ea.ci_high), (eb.ci_low, eb.ci_high));
}
