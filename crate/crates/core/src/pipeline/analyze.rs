//! Group-level metrics, comparisons against the human reference and the
//! assembly of report tables.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::aggregate::{aggregate, ExclusionReason, GroupAggregate};
use super::config::{LmmModel, RunConfig};
use super::emit::{emit, EstimateTable, ExclusionRow, LmmRow, Manifest, PcaOutput, PcaPoint, Report, Scale};
use super::metrics::{continuation_metrics, AffectSummary, ContinuationMetrics};
use super::PipelineError;
use crate::affect::{ChargeVariant, Family, FamilyScheme};
use crate::corpus::{load_dataset, Dataset, ValidationReport};
use crate::formats::{load_affect, load_embeddings, AffectStore, EmbeddingStore};
use crate::numeric;
use crate::seed;
use crate::stats::{
    grouped_mean, holm_bonferroni, lmm_fit, range_reduction, story_bootstrap_ci, BootstrapConfig, DomainUnits,
    LmmObservation, LmmOptions, LmmSpec, MetricEstimate,
};
use crate::style::{
    across_story_variance, fixed_k_ratio, manifold_precision, mmd2_unbiased, mmd2_with_ci, pca_view, subsample,
    variance_ratio_ci, FixedKConfig, KernelConfig, Standardization,
};
use crate::theme::Facet;

/// Loaded and cross-validated inputs of a run.
#[derive(Debug, Clone)]
pub struct RunInputs {
    pub dataset: Dataset,
    pub validation: ValidationReport,
    pub theme: Option<EmbeddingStore>,
    pub style: Option<EmbeddingStore>,
    pub affect: Option<AffectStore>,
}

fn load_store(path: Option<&std::path::Path>, facet: Facet) -> Result<Option<EmbeddingStore>, PipelineError> {
    let Some(path) = path else { return Ok(None) };
    let store = load_embeddings(path)?;
    if store.facet() != facet {
        return Err(PipelineError::Input(format!(
            "{} holds {} embeddings, expected {}",
            path.display(),
            store.facet().as_str(),
            facet.as_str()
        )));
    }
    Ok(Some(store))
}

/// Validate the config, then load every input the enabled metrics need.
pub fn load_inputs(cfg: &RunConfig) -> Result<RunInputs, PipelineError> {
    cfg.validate()?;
    let i = &cfg.inputs;
    let m = cfg.metrics;
    let stories = i.stories.as_deref().expect("validated");
    let (dataset, validation) = load_dataset(stories, i.continuations.as_deref())?;
    let style_on = m.style || m.fixed_k || m.manifold || m.pca;
    let theme = load_store(i.theme_embeddings.as_deref().filter(|_| m.theme), Facet::Theme)?;
    let style = load_store(i.style_embeddings.as_deref().filter(|_| style_on), Facet::Style)?;
    let affect = match i.affect.as_deref().filter(|_| m.affect) {
        Some(p) => Some(load_affect(p)?),
        None => None,
    };
    Ok(RunInputs {
        dataset,
        validation,
        theme,
        style,
        affect,
    })
}

/// Load, analyze and emit to the configured output directory.
pub fn run(cfg: &RunConfig) -> Result<(Report, Manifest), PipelineError> {
    let inputs = load_inputs(cfg)?;
    let report = analyze(cfg, &inputs)?;
    let manifest = emit(&report, &cfg.output)?;
    Ok((report, manifest))
}

/// A continuation-level scalar that can be pooled into a group mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    ThemeCv,
    Main4(Family),
    Robust7(Family),
    Charge(ChargeVariant),
    StyleAxis,
}

impl Scalar {
    fn name(self) -> String {
        match self {
            Scalar::ThemeCv => "theme_cv".into(),
            Scalar::Main4(f) => f.as_str().into(),
            Scalar::Robust7(f) => format!("robust7_{}", f.as_str()),
            Scalar::Charge(v) => v.as_str().into(),
            Scalar::StyleAxis => "style_axis".into(),
        }
    }

    fn scale(self) -> Scale {
        match self {
            Scalar::ThemeCv | Scalar::StyleAxis => Scale::Raw,
            _ => Scale::Percent,
        }
    }
}

const MAIN_AFFECT: [Scalar; 4] = [
    Scalar::Charge(ChargeVariant::Main),
    Scalar::Main4(Family::Conflict),
    Scalar::Main4(Family::SurpriseCuriosity),
    Scalar::Main4(Family::Neutral),
];

struct Ctx<'a> {
    cfg: &'a RunConfig,
    metrics: &'a [ContinuationMetrics<'a>],
    centroids: Vec<Option<Result<Vec<f64>, ExclusionReason>>>,
    pc1: Option<Vec<Result<f64, ExclusionReason>>>,
    /// `domain/story_id` per continuation.
    story_keys: Vec<String>,
    human: String,
}

fn lift<T: Clone>(x: &Option<Result<T, ExclusionReason>>) -> Option<Result<T, ExclusionReason>> {
    x.clone()
}

impl<'a> Ctx<'a> {
    fn boot(&self, label: &str) -> BootstrapConfig {
        BootstrapConfig {
            replicates: self.cfg.bootstrap.replicates,
            level: self.cfg.bootstrap.level,
            seed: seed::derive(self.cfg.seed, label),
        }
    }

    fn scalar(&self, i: usize, s: Scalar) -> Option<Result<f64, ExclusionReason>> {
        let m = &self.metrics[i];
        let affect = |f: &dyn Fn(&AffectSummary) -> f64| m.affect.as_ref().map(|a| a.as_ref().map(f).map_err(|e| *e));
        match s {
            Scalar::ThemeCv => lift(&m.theme_cv),
            Scalar::Main4(fam) => affect(&|a| a.share(fam)),
            Scalar::Robust7(fam) => affect(&|a| a.robust7.iter().find(|(f, _)| *f == fam).map_or(0.0, |(_, x)| *x)),
            Scalar::Charge(v) => affect(&|a| a.charge(v)),
            Scalar::StyleAxis => self.pc1.as_ref().map(|p| p[i]),
        }
    }

    fn enabled(&self, s: Scalar) -> bool {
        let m = self.cfg.metrics;
        match s {
            Scalar::ThemeCv => m.theme,
            Scalar::StyleAxis => m.pca && self.pc1.is_some(),
            _ => m.affect,
        }
    }

    fn aggregate(&self, label: &str, members: &[usize], s: Scalar) -> Option<Result<GroupAggregate, PipelineError>> {
        if !self.enabled(s) {
            return None;
        }
        let values: Vec<(&str, Result<f64, ExclusionReason>)> = members
            .iter()
            .filter_map(|&i| self.scalar(i, s).map(|v| (self.story_keys[i].as_str(), v)))
            .collect();
        Some(aggregate(&format!("{label}/{}", s.name()), values, self.cfg.weighting))
    }

    fn mean_ci(&self, label: &str, agg: &GroupAggregate, metric: &str) -> MetricEstimate {
        let w = self.cfg.weighting;
        story_bootstrap_ci(
            agg.stories.len(),
            |idx| grouped_mean(&agg.stories, idx, w),
            &self.boot(&format!("{label}/{metric}")),
        )
    }

    fn is_human(&self, source: &str) -> bool {
        source == self.human
    }

    fn source_order(&self, source: &str) -> (usize, String) {
        let pos = self.cfg.stage_order.iter().position(|s| s == source);
        (pos.unwrap_or(usize::MAX), source.to_string())
    }
}

/// Pooled values of one (domain, source) group, or of one source across
/// all domains when `domain` is `ALL`.
/// One cutpoint-robustness row: domain, source, cut, metric, scale, estimate.
type CutRow = (String, String, u8, String, Scale, MetricEstimate);

struct Group<'a> {
    domain: String,
    source: String,
    label: String,
    members: Vec<usize>,
    scalars: Vec<(Scalar, GroupAggregate, MetricEstimate)>,
    /// Included centroids grouped by story.
    centroids: Vec<Vec<Vec<f64>>>,
    /// Sentence style vectors of every included continuation.
    continuations: Vec<Vec<&'a [f64]>>,
}

const ALL: &str = "all";

impl Group<'_> {
    fn scalar(&self, s: Scalar) -> Option<(&GroupAggregate, &MetricEstimate)> {
        self.scalars.iter().find(|(x, _, _)| *x == s).map(|(_, a, e)| (a, e))
    }

    fn sentences(&self) -> Vec<&[f64]> {
        self.continuations.iter().flatten().copied().collect()
    }

    fn flat_centroids(&self) -> Vec<&[f64]> {
        self.centroids.iter().flatten().map(Vec::as_slice).collect()
    }
}

fn build_group<'a>(
    ctx: &Ctx<'a>,
    domain: &str,
    source: &str,
    members: Vec<usize>,
    scalars: &[Scalar],
    warnings: &mut Vec<String>,
) -> Group<'a> {
    let label = format!("{domain}/{source}");
    let mut out = Vec::new();
    for &s in scalars {
        match ctx.aggregate(&label, &members, s) {
            None => {}
            Some(Ok(agg)) => {
                let est = ctx.mean_ci(&label, &agg, &s.name());
                out.push((s, agg, est));
            }
            Some(Err(e)) => warnings.push(e.to_string()),
        }
    }
    let mut by_story: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
    let mut continuations = Vec::new();
    for &i in &members {
        if let (Some(Ok(c)), Some(Ok(s))) = (&ctx.centroids[i], &ctx.metrics[i].style) {
            by_story.entry(ctx.story_keys[i].as_str()).or_default().push(c.clone());
            continuations.push(s.clone());
        }
    }
    Group {
        domain: domain.into(),
        source: source.into(),
        label,
        members,
        scalars: out,
        centroids: by_story.into_values().collect(),
        continuations,
    }
}

/// Style comparisons of one model group against its human reference.
#[derive(Default)]
struct StyleComparison {
    mmd2: Option<MetricEstimate>,
    var_ratio: Option<MetricEstimate>,
    fixed_k_ratio: Option<MetricEstimate>,
    manifold: Option<MetricEstimate>,
}

fn compare_style(ctx: &Ctx<'_>, g: &Group<'_>, h: &Group<'_>, warnings: &mut Vec<String>) -> StyleComparison {
    let cfg = ctx.cfg;
    let m = cfg.metrics;
    let mut out = StyleComparison::default();
    let mut warn = |what: &str, e: &dyn std::fmt::Display| warnings.push(format!("{} {what}: {e}", g.label));
    let human_variance = if h.centroids.is_empty() {
        None
    } else {
        across_story_variance(&h.flat_centroids()).ok()
    };

    if m.style && !g.continuations.is_empty() {
        if let Some(vh) = human_variance {
            match variance_ratio_ci(&g.centroids, vh, &ctx.boot(&format!("{}/style_var_ratio", g.label))) {
                Ok(e) => out.var_ratio = Some(e),
                Err(e) => warn("style_var_ratio", &e),
            }
        }
        if g.source != h.source {
            let kernel = KernelConfig {
                bandwidth: cfg.mmd.bandwidth,
                subsample_cap: cfg.mmd.subsample_cap,
                seed: seed::derive(cfg.seed, "mmd/subsample"),
            };
            let boot = BootstrapConfig {
                replicates: cfg.mmd.replicates,
                ..ctx.boot(&format!("{}/style_mmd2", g.label))
            };
            match mmd2_with_ci(&h.sentences(), &g.sentences(), &kernel, &boot) {
                Ok((e, _)) => out.mmd2 = Some(e),
                Err(e) => warn("style_mmd2", &e),
            }
        }
    }
    if g.source != h.source && !g.continuations.is_empty() {
        if m.fixed_k {
            let fk = FixedKConfig {
                k: cfg.fixed_k.k,
                resamples: cfg.fixed_k.resamples,
                seed: seed::derive(cfg.seed, &format!("{}/fixed_k", g.label)),
            };
            match fixed_k_ratio(&g.continuations, &h.continuations, &fk) {
                Ok((r, me, _)) => out.fixed_k_ratio = Some(MetricEstimate::point(r, me.resamples)),
                Err(e) => warn("style_var_ratio_fixed_k", &e),
            }
        }
        if m.manifold {
            let cap = cfg.manifold.subsample_cap;
            let hs = subsample(&h.sentences(), cap, seed::derive(cfg.seed, "manifold/human"));
            let ms = subsample(&g.sentences(), cap, seed::derive(cfg.seed, "manifold/model"));
            match manifold_precision(&hs, &ms, &cfg.manifold.to_config()) {
                Ok(r) => out.manifold = Some(MetricEstimate::point(r.precision, r.n_model)),
                Err(e) => warn("manifold_precision", &e),
            }
        }
    }
    out
}

/// Story-paired bootstrap of a statistic of the model and human means over
/// the stories present in both groups.
fn paired(
    ctx: &Ctx<'_>,
    label: &str,
    model: &GroupAggregate,
    human: &GroupAggregate,
    f: impl Fn(f64, f64) -> f64 + Sync,
) -> Option<MetricEstimate> {
    let h_index: BTreeMap<&str, usize> = human
        .story_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let (mut ms, mut hs) = (Vec::new(), Vec::new());
    for (i, s) in model.story_ids.iter().enumerate() {
        if let Some(&j) = h_index.get(s.as_str()) {
            ms.push(model.stories[i].clone());
            hs.push(human.stories[j].clone());
        }
    }
    if ms.is_empty() {
        return None;
    }
    let w = ctx.cfg.weighting;
    Some(story_bootstrap_ci(
        ms.len(),
        |idx| f(grouped_mean(&ms, idx, w), grouped_mean(&hs, idx, w)),
        &ctx.boot(label),
    ))
}

fn decisions(cfg: &RunConfig) -> BTreeMap<String, String> {
    let mut d = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        d.insert(k.to_string(), v);
    };
    put("cut_rounding", "floor, clamped to [1, T-1]".into());
    put(
        "sentence_splitter",
        "rule-based; . ! ? followed by whitespace and an uppercase letter".into(),
    );
    put("jump_metric", cfg.theme.metric.as_str().into());
    put(
        "jump_cv_sd_divisor",
        format!("{:?}", cfg.theme.sd_divisor).to_lowercase(),
    );
    put("weighting", format!("{:?}", cfg.weighting).to_lowercase());
    put(
        "affect_assignment",
        "top-1 label; main4 and robust7 family schemes".into(),
    );
    put(
        "bootstrap",
        format!(
            "percentile; B={}; level={}",
            cfg.bootstrap.replicates, cfg.bootstrap.level
        ),
    );
    put(
        "mmd",
        format!(
            "unbiased; rbf on cosine distance; bandwidth={}; cap={}; sentence bootstrap B={} with fixed bandwidth",
            cfg.mmd.bandwidth.map_or("median heuristic".into(), |b| b.to_string()),
            cfg.mmd.subsample_cap,
            cfg.mmd.replicates
        ),
    );
    put(
        "var_ratio_ci",
        "story bootstrap of model stories; human variance held fixed".into(),
    );
    put(
        "fixed_k",
        format!(
            "K={}; R={}; sentences drawn with replacement",
            cfg.fixed_k.k, cfg.fixed_k.resamples
        ),
    );
    put(
        "manifold",
        format!(
            "pca_dims={}; k={}; quantile={}; standardize={}; query={:?}; cap={}",
            cfg.manifold.pca_dims,
            cfg.manifold.neighbor_k,
            cfg.manifold.radius_quantile,
            cfg.manifold.standardize,
            cfg.manifold.query,
            cfg.manifold.subsample_cap
        ),
    );
    put(
        "style_pca",
        format!("z-scored human centroids; {} components", cfg.pca.components),
    );
    put(
        "lmm",
        format!(
            "method={:?}; random intercept by story; normal reference; holm over contrast effects per fit; alpha={}; length_covariate={}",
            cfg.lmm.method, cfg.lmm.alpha, cfg.lmm.length_covariate
        )
        .to_lowercase(),
    );
    put("stage_order", cfg.stage_order.join(","));
    put("endpoints", format!("{},{}", cfg.endpoints.0, cfg.endpoints.1));
    d
}

/// Compute every enabled table from loaded inputs.
pub fn analyze(cfg: &RunConfig, inputs: &RunInputs) -> Result<Report, PipelineError> {
    cfg.validate_settings()?;
    let metrics = continuation_metrics(
        &inputs.dataset,
        inputs.theme.as_ref(),
        inputs.style.as_ref(),
        inputs.affect.as_ref(),
        cfg,
    );
    let centroids: Vec<_> = metrics.iter().map(ContinuationMetrics::style_centroid).collect();
    let story_keys: Vec<String> = metrics
        .iter()
        .map(|m| format!("{}/{}", m.record.key.domain, m.record.key.story_id))
        .collect();
    let mut ctx = Ctx {
        cfg,
        metrics: &metrics,
        centroids,
        pc1: None,
        story_keys,
        human: cfg.human().to_string(),
    };
    let mut warnings = Vec::new();

    let style_pca = if cfg.metrics.pca && inputs.style.is_some() {
        match style_pca(&mut ctx) {
            Ok(p) => Some(p),
            Err(e) => {
                warnings.push(format!("style_pca: {e}"));
                None
            }
        }
    } else {
        None
    };

    // Group membership.
    let mut pooled: BTreeMap<(String, (usize, String)), Vec<usize>> = BTreeMap::new();
    let mut per_cut: BTreeMap<(String, (usize, String), u8), Vec<usize>> = BTreeMap::new();
    for (i, m) in metrics.iter().enumerate() {
        let k = &m.record.key;
        let src = ctx.source_order(k.source.as_str());
        pooled.entry((k.domain.to_string(), src.clone())).or_default().push(i);
        pooled.entry((ALL.to_string(), src.clone())).or_default().push(i);
        per_cut
            .entry((k.domain.to_string(), src, k.cut.percent()))
            .or_default()
            .push(i);
    }
    let domains: Vec<String> = {
        let mut d: Vec<String> = pooled.keys().map(|(d, _)| d.clone()).filter(|d| d != ALL).collect();
        d.dedup();
        d
    };
    let sources: Vec<String> = {
        let mut s: Vec<(usize, String)> = pooled.keys().map(|(_, s)| s.clone()).collect();
        s.sort();
        s.dedup();
        s.into_iter().map(|(_, s)| s).collect()
    };

    let pooled_scalars: Vec<Scalar> = [Scalar::ThemeCv]
        .into_iter()
        .chain(MAIN_AFFECT)
        .chain([Scalar::Main4(Family::Other)])
        .chain(FamilyScheme::Robust7.families().iter().map(|f| Scalar::Robust7(*f)))
        .chain([
            Scalar::Charge(ChargeVariant::ThreatInclusive),
            Scalar::Charge(ChargeVariant::Expanded),
        ])
        .chain([Scalar::StyleAxis])
        .collect();
    let ctx = &ctx;
    let built: Vec<(Group<'_>, Vec<String>)> = pooled
        .into_iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|((domain, (_, source)), members)| {
            let mut w = Vec::new();
            let g = build_group(ctx, &domain, &source, members, &pooled_scalars, &mut w);
            (g, w)
        })
        .collect();
    let mut groups = Vec::with_capacity(built.len());
    for (g, w) in built {
        warnings.extend(w);
        groups.push(g);
    }
    let find = |domain: &str, source: &str| groups.iter().find(|g| g.domain == domain && g.source == source);

    // Style comparisons against the human group of the same domain.
    let comparisons: Vec<(StyleComparison, Vec<String>)> = groups
        .par_iter()
        .map(|g| {
            let mut w = Vec::new();
            let c = match find(&g.domain, &ctx.human) {
                Some(h) => compare_style(ctx, g, h, &mut w),
                None => StyleComparison::default(),
            };
            (c, w)
        })
        .collect();
    let mut style = Vec::with_capacity(comparisons.len());
    for (c, w) in comparisons {
        warnings.extend(w);
        style.push(c);
    }
    let style_of = |g: &Group<'_>| -> &StyleComparison {
        let i = groups.iter().position(|x| std::ptr::eq(x, g)).expect("group is listed");
        &style[i]
    };

    let mut tables = Vec::new();

    // cross_domain: one row per (domain, source) present in the data.
    let mut cross = EstimateTable::new("cross_domain", &["domain", "source"]);
    for g in groups.iter().filter(|g| g.domain != ALL) {
        let key = [g.domain.as_str(), g.source.as_str()];
        cross.push(
            &key,
            "n_continuations",
            Scale::Raw,
            MetricEstimate::point(g.members.len() as f64, g.members.len()),
        );
        for s in [Scalar::ThemeCv].into_iter().chain(MAIN_AFFECT) {
            if let Some((_, e)) = g.scalar(s) {
                cross.push(&key, &s.name(), s.scale(), *e);
            }
        }
        let sc = style_of(g);
        for (name, e) in [
            ("style_mmd2", sc.mmd2),
            ("style_var_ratio", sc.var_ratio),
            ("style_var_ratio_fixed_k", sc.fixed_k_ratio),
            ("manifold_precision", sc.manifold),
        ] {
            if let Some(e) = e {
                let scale = if name == "manifold_precision" {
                    Scale::Percent
                } else {
                    Scale::Raw
                };
                cross.push(&key, name, scale, e);
            }
        }
        if let Some((_, e)) = g.scalar(Scalar::StyleAxis) {
            cross.push(&key, "style_axis", Scale::Raw, *e);
        }
    }
    tables.push(cross);

    // human_contrasts: paired story bootstrap against the matched human group.
    let mut contrasts = EstimateTable::new("human_contrasts", &["domain", "source"]);
    let mut stage = EstimateTable::new("stage_progression", &["domain", "source"]);
    for g in &groups {
        let key = [g.domain.as_str(), g.source.as_str()];
        let human = find(&g.domain, &ctx.human);
        if let Some((agg, e)) = g.scalar(Scalar::ThemeCv) {
            let vals: Vec<f64> = agg.stories.iter().flatten().copied().collect();
            stage.push(&key, "theme_cv", Scale::Raw, *e);
            stage.push(
                &key,
                "theme_cv_p05",
                Scale::Raw,
                MetricEstimate::point(numeric::quantile(&vals, 0.05), vals.len()),
            );
            stage.push(
                &key,
                "theme_cv_p95",
                Scale::Raw,
                MetricEstimate::point(numeric::quantile(&vals, 0.95), vals.len()),
            );
            if let Some((hagg, _)) = human
                .filter(|_| !ctx.is_human(&g.source))
                .and_then(|h| h.scalar(Scalar::ThemeCv))
            {
                let label = format!("{}/theme_cv_ratio", g.label);
                if let Some(r) = paired(ctx, &label, agg, hagg, |m, h| m / h) {
                    if g.domain != ALL {
                        contrasts.push(&key, "theme_cv_ratio", Scale::Raw, r);
                    }
                    let loss = paired(ctx, &format!("{}/theme_cv_loss", g.label), agg, hagg, |m, h| {
                        1.0 - m / h
                    });
                    if let Some(l) = loss {
                        stage.push(&key, "theme_cv_loss", Scale::Percent, l);
                    }
                }
            }
        }
        let sc = style_of(g);
        if let Some(e) = sc.mmd2 {
            stage.push(&key, "style_mmd2", Scale::Raw, e);
        }
        if let Some(e) = sc.var_ratio {
            stage.push(&key, "style_var_ratio", Scale::Raw, e);
        }
        if let Some((_, e)) = g.scalar(Scalar::Charge(ChargeVariant::Main)) {
            stage.push(&key, "affective_charge", Scale::Percent, *e);
        }
        if g.domain == ALL || ctx.is_human(&g.source) {
            continue;
        }
        for s in [Scalar::Main4(Family::Neutral), Scalar::Charge(ChargeVariant::Main)] {
            let (Some((m, _)), Some((h, _))) = (g.scalar(s), human.and_then(|h| h.scalar(s))) else {
                continue;
            };
            let label = format!("{}/{}_shift", g.label, s.name());
            if let Some(e) = paired(ctx, &label, m, h, |m, h| m - h) {
                contrasts.push(&key, &format!("{}_shift", s.name()), Scale::Percent, e);
            }
        }
        if let Some(e) = sc.var_ratio {
            contrasts.push(&key, "style_var_ratio", Scale::Raw, e);
        }
    }
    tables.push(contrasts);
    tables.push(stage);

    // affect_families: seven-family shares and charge variants.
    let mut families = EstimateTable::new("affect_families", &["domain", "source"]);
    for g in groups.iter().filter(|g| g.domain != ALL) {
        let key = [g.domain.as_str(), g.source.as_str()];
        for (s, _, e) in &g.scalars {
            if matches!(s, Scalar::Robust7(_) | Scalar::Charge(_)) {
                families.push(&key, &s.name(), s.scale(), *e);
            }
        }
    }
    tables.push(families);

    // cutpoint_robustness: per-cut means and MMD² against the same-cut human group.
    let cut_scalars = [
        Scalar::ThemeCv,
        Scalar::Charge(ChargeVariant::Main),
        Scalar::Main4(Family::Neutral),
    ];
    let cut_rows: Vec<(Vec<CutRow>, Vec<String>)> = per_cut
        .iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|((domain, (_, source), cut), members)| {
            let mut w = Vec::new();
            let mut rows = Vec::new();
            let label = format!("{domain}/{source}/cut{cut}");
            for s in cut_scalars {
                match ctx.aggregate(&label, members, s) {
                    None => {}
                    Some(Ok(agg)) => {
                        let e = ctx.mean_ci(&label, &agg, &s.name());
                        rows.push((domain.clone(), source.clone(), *cut, s.name(), s.scale(), e));
                    }
                    Some(Err(e)) => w.push(e.to_string()),
                }
            }
            if ctx.cfg.metrics.style && !ctx.is_human(source) {
                let human = per_cut
                    .iter()
                    .find(|((d, (_, s), c), _)| d == domain && *s == ctx.human && c == cut);
                if let Some((_, hm)) = human {
                    let sents = |ms: &[usize]| -> Vec<&[f64]> {
                        ms.iter()
                            .filter_map(|&i| ctx.metrics[i].style.as_ref().and_then(|s| s.as_ref().ok()))
                            .flatten()
                            .copied()
                            .collect()
                    };
                    let kernel = KernelConfig {
                        bandwidth: ctx.cfg.mmd.bandwidth,
                        subsample_cap: ctx.cfg.mmd.subsample_cap,
                        seed: seed::derive(ctx.cfg.seed, "mmd/subsample"),
                    };
                    match mmd2_unbiased(&sents(hm), &sents(members), &kernel) {
                        Ok(e) => rows.push((
                            domain.clone(),
                            source.clone(),
                            *cut,
                            "style_mmd2".into(),
                            Scale::Raw,
                            MetricEstimate::point(e.value, e.n_h + e.n_m),
                        )),
                        Err(e) => w.push(format!("{label} style_mmd2: {e}")),
                    }
                }
            }
            (rows, w)
        })
        .collect();
    let mut cuts = EstimateTable::new("cutpoint_robustness", &["domain", "source", "cut"]);
    for (rows, w) in cut_rows {
        warnings.extend(w);
        for (d, s, c, m, scale, e) in rows {
            cuts.push(&[&d, &s, &c.to_string()], &m, scale, e);
        }
    }
    tables.push(cuts);

    // endpoint_ranges: spread of domain means at the two endpoints.
    let mut ranges = EstimateTable::new("endpoint_ranges", &["measure", "endpoint"]);
    let (ea, eb) = (&cfg.endpoints.0, &cfg.endpoints.1);
    for s in [
        Scalar::ThemeCv,
        Scalar::Charge(ChargeVariant::Main),
        Scalar::Main4(Family::Neutral),
    ] {
        let units = |source: &str| -> Vec<DomainUnits> {
            domains
                .iter()
                .filter_map(|d| {
                    let (agg, _) = find(d, source)?.scalar(s)?;
                    Some(DomainUnits {
                        domain: d.clone(),
                        stories: agg.stories.clone(),
                    })
                })
                .collect()
        };
        let (ua, ub) = (units(ea), units(eb));
        if ua.is_empty() && ub.is_empty() {
            continue;
        }
        let name = s.name();
        match range_reduction(&ua, &ub, cfg.weighting, &ctx.boot(&format!("endpoint_ranges/{name}"))) {
            Ok(r) => {
                ranges.push(&[&name, ea], "range", s.scale(), r.range_a);
                ranges.push(&[&name, eb], "range", s.scale(), r.range_b);
                if let Some(x) = r.reduction {
                    ranges.push(
                        &[&name, "reduction"],
                        "reduction",
                        Scale::Percent,
                        MetricEstimate::point(x, ua.len()),
                    );
                }
                for (ep, means) in [(ea, &r.means_a), (eb, &r.means_b)] {
                    for (d, m) in means {
                        ranges.push(
                            &[&name, ep],
                            &format!("mean[{d}]"),
                            s.scale(),
                            MetricEstimate::point(*m, 1),
                        );
                    }
                }
            }
            Err(e) => warnings.push(format!("endpoint_ranges/{name}: {e}")),
        }
    }
    tables.push(ranges);

    // cross_domain_mmd: pairwise domain distances within each source.
    let mut pairs_mmd = EstimateTable::new("cross_domain_mmd", &["source", "domain_a", "domain_b"]);
    if cfg.metrics.style {
        let mut jobs: Vec<(&String, &String, &String)> = Vec::new();
        for s in &sources {
            for (i, a) in domains.iter().enumerate() {
                for b in &domains[i + 1..] {
                    jobs.push((s, a, b));
                }
            }
        }
        let results: Vec<_> = jobs
            .par_iter()
            .map(|(s, a, b)| {
                let (ga, gb) = (find(a, s)?, find(b, s)?);
                let kernel = KernelConfig {
                    bandwidth: cfg.mmd.bandwidth,
                    subsample_cap: cfg.mmd.subsample_cap,
                    seed: seed::derive(cfg.seed, "mmd/subsample"),
                };
                Some(mmd2_unbiased(&ga.sentences(), &gb.sentences(), &kernel).map_err(|e| format!("{s} {a}-{b}: {e}")))
            })
            .collect();
        for ((s, a, b), r) in jobs.iter().zip(results) {
            match r {
                Some(Ok(e)) => pairs_mmd.push(
                    &[s, a, b],
                    "style_mmd2",
                    Scale::Raw,
                    MetricEstimate::point(e.value, e.n_h + e.n_m),
                ),
                Some(Err(w)) => warnings.push(format!("cross_domain_mmd {w}")),
                None => {}
            }
        }
    }
    tables.push(pairs_mmd);

    let lmm = if cfg.metrics.lmm {
        fit_lmms(ctx, &sources, &mut warnings)
    } else {
        Vec::new()
    };

    Ok(Report {
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        decisions: decisions(cfg),
        validation: inputs.validation.clone(),
        tables,
        lmm,
        exclusions: exclusions(ctx),
        style_pca,
        warnings,
    })
}

/// Fit PCA to the human centroids, project every centroid and record each
/// continuation's first-component score.
fn style_pca(ctx: &mut Ctx<'_>) -> Result<PcaOutput, String> {
    let human: Vec<&[f64]> = ctx
        .metrics
        .iter()
        .zip(&ctx.centroids)
        .filter(|(m, _)| m.record.key.source.as_str() == ctx.human)
        .filter_map(|(_, c)| c.as_ref().and_then(|c| c.as_ref().ok()).map(Vec::as_slice))
        .collect();
    let dim = human.first().map_or(0, |c| c.len());
    let n = ctx.cfg.pca.components.min(dim);
    let view = pca_view(&human, n.max(1), Standardization::ZScoreSelf).map_err(|e| e.to_string())?;
    let model = view.model;
    let mut points = Vec::new();
    let mut pc1 = Vec::with_capacity(ctx.metrics.len());
    for (m, c) in ctx.metrics.iter().zip(&ctx.centroids) {
        match c {
            Some(Ok(c)) => {
                let coords = model.transform(c);
                pc1.push(Ok(coords[0]));
                let k = &m.record.key;
                points.push(PcaPoint {
                    domain: k.domain.to_string(),
                    source: k.source.to_string(),
                    story_id: k.story_id.clone(),
                    cut: k.cut.percent(),
                    sample_id: k.sample_id,
                    coords,
                });
            }
            Some(Err(r)) => pc1.push(Err(*r)),
            None => pc1.push(Err(ExclusionReason::MissingEmbedding)),
        }
    }
    ctx.pc1 = Some(pc1);
    Ok(PcaOutput {
        shares: model.shares.clone(),
        eigenvalues: model.eigenvalues.clone(),
        rank: model.rank,
        rank_deficient: model.rank_deficient(),
        points,
    })
}

fn fit_lmms(ctx: &Ctx<'_>, sources: &[String], warnings: &mut Vec<String>) -> Vec<LmmRow> {
    let cfg = ctx.cfg;
    let levels: Vec<String> = sources
        .iter()
        .filter(|s| cfg.stage_order.contains(s))
        .cloned()
        .collect();
    let generated: Vec<String> = levels.iter().filter(|s| !ctx.is_human(s)).cloned().collect();
    let responses: Vec<Scalar> = [
        Scalar::ThemeCv,
        Scalar::Charge(ChargeVariant::Main),
        Scalar::Main4(Family::Neutral),
    ]
    .into_iter()
    .filter(|s| ctx.enabled(*s))
    .collect();
    let mut jobs = Vec::new();
    for &r in &responses {
        for &model in &cfg.lmm.models {
            let lv = match model {
                LmmModel::GeneratedTrend => generated.clone(),
                _ => levels.clone(),
            };
            let mut spec = match model {
                LmmModel::StageContrast => LmmSpec::stage_contrast(lv),
                LmmModel::GeneratedTrend => LmmSpec::generated_trend(lv),
                LmmModel::DomainCompression => LmmSpec::domain_compression(lv),
            }
            .with_method(cfg.lmm.method);
            if cfg.lmm.length_covariate {
                spec = spec.with_length_covariate();
            }
            jobs.push((r, spec));
        }
    }
    let fits: Vec<_> = jobs
        .par_iter()
        .map(|(r, spec)| {
            let obs: Vec<LmmObservation> = ctx
                .metrics
                .iter()
                .enumerate()
                .filter(|(_, m)| spec.stage_levels.iter().any(|l| l == m.record.key.source.as_str()))
                .filter_map(|(i, m)| {
                    let v = ctx.scalar(i, *r)?.ok()?;
                    let k = &m.record.key;
                    Some(LmmObservation {
                        story: ctx.story_keys[i].clone(),
                        domain: k.domain.to_string(),
                        stage: k.source.to_string(),
                        cut: k.cut.percent(),
                        sample_id: k.sample_id,
                        n_sentences: m.record.len(),
                        response: v,
                    })
                })
                .collect();
            if spec.stage_levels.len() < 2 {
                return Err(format!(
                    "lmm {} {}: fewer than two stage levels present",
                    spec.name,
                    r.name()
                ));
            }
            lmm_fit(spec, &obs, &LmmOptions::default()).map_err(|e| format!("lmm {} {}: {e}", spec.name, r.name()))
        })
        .collect();
    let mut rows = Vec::new();
    for ((r, _), fit) in jobs.iter().zip(fits) {
        let fit = match fit {
            Ok(f) => f,
            Err(w) => {
                warnings.push(w);
                continue;
            }
        };
        let contrast_p: Vec<f64> = fit.effects.iter().filter(|e| e.is_contrast).map(|e| e.p).collect();
        let holm = holm_bonferroni(&contrast_p, cfg.lmm.alpha).ok();
        let mut next = 0;
        for e in &fit.effects {
            let (p_holm, reject) = if e.is_contrast {
                let out = holm.as_ref().map(|h| (h.adjusted[next], h.reject[next]));
                next += 1;
                (out.map(|o| o.0), out.map(|o| o.1))
            } else {
                (None, None)
            };
            rows.push(LmmRow {
                model: fit.spec.clone(),
                response: r.name(),
                effect: e.name.clone(),
                is_contrast: e.is_contrast,
                estimate: e.estimate,
                se: e.se,
                ci_low: e.ci_low,
                ci_high: e.ci_high,
                z: e.z,
                p: e.p,
                p_holm,
                reject,
                sigma2_u: fit.sigma2_u,
                sigma2_e: fit.sigma2_e,
                boundary: fit.boundary,
                n_obs: fit.n_obs,
                n_groups: fit.n_groups,
                method: format!("{:?}", fit.method).to_lowercase(),
                reference: fit.reference.clone(),
            });
        }
    }
    rows
}

/// Included and excluded counts per metric and (domain, source, cut).
type StatusOf = Box<dyn Fn(&ContinuationMetrics<'_>) -> Option<Result<(), ExclusionReason>>>;

fn exclusions(ctx: &Ctx<'_>) -> Vec<ExclusionRow> {
    type Key = (String, (usize, String), u8);
    let mut rows = Vec::new();
    let families: [(&str, StatusOf); 3] = [
        ("theme_cv", Box::new(|m| m.theme_cv.as_ref().map(|r| r.map(|_| ())))),
        (
            "affect",
            Box::new(|m| m.affect.as_ref().map(|r| r.as_ref().map(|_| ()).map_err(|e| *e))),
        ),
        (
            "style",
            Box::new(|m| m.style.as_ref().map(|r| r.as_ref().map(|_| ()).map_err(|e| *e))),
        ),
    ];
    for (name, f) in families {
        let mut counts: BTreeMap<Key, BTreeMap<String, usize>> = BTreeMap::new();
        for m in ctx.metrics {
            let Some(status) = f(m) else { continue };
            let k = &m.record.key;
            let status = match status {
                Ok(()) => "included".to_string(),
                Err(r) => r.as_str().to_string(),
            };
            *counts
                .entry((
                    k.domain.to_string(),
                    ctx.source_order(k.source.as_str()),
                    k.cut.percent(),
                ))
                .or_default()
                .entry(status)
                .or_insert(0) += 1;
        }
        for ((domain, (_, source), cut), by_status) in counts {
            for (status, count) in by_status {
                rows.push(ExclusionRow {
                    metric: name.into(),
                    domain: domain.clone(),
                    source: source.clone(),
                    cut,
                    status,
                    count,
                });
            }
        }
    }
    rows
}
