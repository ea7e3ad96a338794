#![allow(dead_code)]

use std::path::Path;

use storyflat::pipeline::RunConfig;
use storyflat::synth::{self, SynthConfig, SynthCorpus};

/// The bundled synthetic corpus written to `dir`, with its run config.
pub fn bundled_fixture(dir: &Path) -> (SynthCorpus, RunConfig) {
    let cfg = SynthConfig::bundled();
    let corpus = synth::generate(&cfg);
    let mut run = corpus.write(dir, cfg.stage_order()).expect("fixture writes");
    run.resolve_relative(dir);
    (corpus, run)
}

/// A lighter config for tests that only need the tables to exist.
pub fn quick(mut cfg: RunConfig) -> RunConfig {
    cfg.bootstrap.replicates = 200;
    cfg.mmd.replicates = 50;
    cfg.fixed_k.resamples = 8;
    cfg
}

/// Every file under `dir` with its bytes, sorted by relative path.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .expect("output dir exists")
        .map(|e| {
            let p = e.expect("dir entry").path();
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read(&p).expect("output readable"))
        })
        .collect();
    out.sort();
    out
}
