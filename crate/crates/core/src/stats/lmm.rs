//! Linear mixed model with a single story-level random intercept.
//!
//! `y = X b + u[story] + e`, `u ~ N(0, s2u)`, `e ~ N(0, s2e)`. With the
//! variance ratio `lambda = s2u / s2e` held fixed, each group's marginal
//! covariance is `s2e (I + lambda 11')`, whose inverse is
//! `(I - c 11') / s2e` with `c = lambda / (1 + lambda n_g)`. The GLS normal
//! equations therefore only need per-group column sums, so one likelihood
//! evaluation costs `O(groups * p^2)` after a single pass over the data.
//! `lambda` is found by a 1-d search on the profiled (RE)ML criterion.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::StatsError;

/// One continuation-level observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmObservation {
    pub story: String,
    pub domain: String,
    pub stage: String,
    pub cut: u8,
    pub sample_id: u32,
    pub n_sentences: usize,
    pub response: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Stage,
    Cut,
    Domain,
    SampleId,
}

impl Factor {
    fn name(self) -> &'static str {
        match self {
            Factor::Stage => "stage",
            Factor::Cut => "cut",
            Factor::Domain => "domain",
            Factor::SampleId => "sample",
        }
    }

    fn level(self, obs: &LmmObservation) -> String {
        match self {
            Factor::Stage => obs.stage.clone(),
            Factor::Cut => obs.cut.to_string(),
            Factor::Domain => obs.domain.clone(),
            Factor::SampleId => obs.sample_id.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    /// Position of the stage in the configured stage order (0-based).
    StageOrder,
    /// `ln(1 + realized sentence count)`.
    LogLength,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "of")]
pub enum Term {
    Categorical(Factor),
    Numeric(Covariate),
    Interaction(Factor, Factor),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LmmMethod {
    #[default]
    Ml,
    Reml,
}

/// Fixed-effect structure of a model. An intercept is always included and
/// the random intercept is always by story.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmSpec {
    pub name: String,
    pub terms: Vec<Term>,
    /// Stage levels in order; the first is the reference level and the index
    /// is the stage-order covariate.
    pub stage_levels: Vec<String>,
    #[serde(default)]
    pub method: LmmMethod,
}

impl LmmSpec {
    /// Stage contrasts against the first stage level, with cut effects.
    pub fn stage_contrast(stage_levels: Vec<String>) -> Self {
        LmmSpec {
            name: "stage_contrast".into(),
            terms: vec![Term::Categorical(Factor::Stage), Term::Categorical(Factor::Cut)],
            stage_levels,
            method: LmmMethod::Ml,
        }
    }

    /// Generated-only trend over ordered stages with sample-id nuisance effects.
    pub fn generated_trend(stage_levels: Vec<String>) -> Self {
        LmmSpec {
            name: "generated_trend".into(),
            terms: vec![
                Term::Numeric(Covariate::StageOrder),
                Term::Categorical(Factor::Cut),
                Term::Categorical(Factor::SampleId),
            ],
            stage_levels,
            method: LmmMethod::Ml,
        }
    }

    /// Stage, domain and stage-by-domain effects with cut effects.
    pub fn domain_compression(stage_levels: Vec<String>) -> Self {
        LmmSpec {
            name: "domain_compression".into(),
            terms: vec![
                Term::Categorical(Factor::Stage),
                Term::Categorical(Factor::Domain),
                Term::Interaction(Factor::Stage, Factor::Domain),
                Term::Categorical(Factor::Cut),
            ],
            stage_levels,
            method: LmmMethod::Ml,
        }
    }

    pub fn with_length_covariate(mut self) -> Self {
        self.terms.push(Term::Numeric(Covariate::LogLength));
        self.name.push_str("+log_length");
        self
    }

    pub fn with_method(mut self, method: LmmMethod) -> Self {
        self.method = method;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedEffect {
    pub name: String,
    /// Whether the column belongs to a stage, stage-order or interaction term.
    pub is_contrast: bool,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub z: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmFit {
    pub spec: String,
    pub method: LmmMethod,
    pub effects: Vec<FixedEffect>,
    pub sigma2_u: f64,
    pub sigma2_e: f64,
    pub ratio: f64,
    /// The variance ratio sits at zero.
    pub boundary: bool,
    pub log_likelihood: f64,
    pub n_obs: usize,
    pub n_groups: usize,
    /// Reference distribution for p-values and intervals.
    pub reference: String,
}

impl LmmFit {
    pub fn effect(&self, name: &str) -> Option<&FixedEffect> {
        self.effects.iter().find(|e| e.name == name)
    }
}

#[derive(Debug, Clone, Default)]
pub struct LmmOptions {
    /// Hold the variance ratio fixed instead of estimating it.
    pub fixed_ratio: Option<f64>,
}

/// Column layout derived from a spec and a data set.
struct Design {
    names: Vec<String>,
    contrast: Vec<bool>,
    x: DMatrix<f64>,
}

fn levels_of(factor: Factor, spec: &LmmSpec, data: &[LmmObservation]) -> Result<Vec<String>, StatsError> {
    let present: BTreeSet<String> = data.iter().map(|o| factor.level(o)).collect();
    if factor == Factor::Stage && !spec.stage_levels.is_empty() {
        if let Some(unknown) = present.iter().find(|l| !spec.stage_levels.contains(l)) {
            return Err(StatsError::UnknownLevel(unknown.clone()));
        }
        return Ok(spec
            .stage_levels
            .iter()
            .filter(|l| present.contains(*l))
            .cloned()
            .collect());
    }
    if factor == Factor::Cut || factor == Factor::SampleId {
        let mut v: Vec<String> = present.into_iter().collect();
        v.sort_by_key(|s| s.parse::<u64>().unwrap_or(u64::MAX));
        return Ok(v);
    }
    Ok(present.into_iter().collect())
}

fn build_design(spec: &LmmSpec, data: &[LmmObservation]) -> Result<Design, StatsError> {
    let mut levels: BTreeMap<&'static str, Vec<String>> = BTreeMap::new();
    for term in &spec.terms {
        let factors: Vec<Factor> = match term {
            Term::Categorical(f) => vec![*f],
            Term::Interaction(a, b) => vec![*a, *b],
            Term::Numeric(Covariate::StageOrder) => vec![Factor::Stage],
            Term::Numeric(_) => vec![],
        };
        for f in factors {
            if !levels.contains_key(f.name()) {
                levels.insert(f.name(), levels_of(f, spec, data)?);
            }
        }
    }

    type Column = Box<dyn Fn(&LmmObservation) -> f64>;
    let mut names = vec!["(Intercept)".to_string()];
    let mut contrast = vec![false];
    let mut columns: Vec<Column> = vec![Box::new(|_| 1.0)];

    for term in &spec.terms {
        match *term {
            Term::Categorical(f) => {
                for lvl in levels[f.name()].iter().skip(1) {
                    names.push(format!("{}[{}]", f.name(), lvl));
                    contrast.push(f == Factor::Stage);
                    let lvl = lvl.clone();
                    columns.push(Box::new(move |o| f64::from(u8::from(f.level(o) == lvl))));
                }
            }
            Term::Interaction(a, b) => {
                for la in levels[a.name()].iter().skip(1) {
                    for lb in levels[b.name()].iter().skip(1) {
                        names.push(format!("{}[{}]:{}[{}]", a.name(), la, b.name(), lb));
                        contrast.push(true);
                        let (la, lb) = (la.clone(), lb.clone());
                        columns.push(Box::new(move |o| {
                            f64::from(u8::from(a.level(o) == la && b.level(o) == lb))
                        }));
                    }
                }
            }
            Term::Numeric(Covariate::StageOrder) => {
                names.push("stage_order".into());
                contrast.push(true);
                let order = spec.stage_levels.clone();
                columns.push(Box::new(move |o| {
                    order.iter().position(|s| *s == o.stage).unwrap_or(0) as f64
                }));
            }
            Term::Numeric(Covariate::LogLength) => {
                names.push("log1p_length".into());
                contrast.push(false);
                columns.push(Box::new(|o| (o.n_sentences as f64).ln_1p()));
            }
        }
    }

    let x = DMatrix::from_fn(data.len(), columns.len(), |i, j| columns[j](&data[i]));
    Ok(Design { names, contrast, x })
}

fn check_rank(x: &DMatrix<f64>, names: &[String]) -> Result<(), StatsError> {
    let p = x.ncols();
    if x.nrows() <= p {
        return Err(StatsError::RankDeficientDesign(format!(
            "{} observations for {} fixed effects",
            x.nrows(),
            p
        )));
    }
    let mut scaled = x.clone();
    for mut col in scaled.column_iter_mut() {
        let n = col.norm();
        if n == 0.0 {
            continue;
        }
        col /= n;
    }
    let gram = scaled.transpose() * &scaled;
    let eig = gram.symmetric_eigen();
    let max = eig.eigenvalues.max();
    for (i, ev) in eig.eigenvalues.iter().enumerate() {
        if *ev <= max * 1e-10 {
            let v = eig.eigenvectors.column(i);
            let worst = v.iamax();
            return Err(StatsError::RankDeficientDesign(format!(
                "column {} is collinear with others",
                names[worst]
            )));
        }
    }
    Ok(())
}

/// Sufficient statistics for the profiled likelihood.
struct Profile {
    n: usize,
    p: usize,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    groups: Vec<(f64, DVector<f64>, f64)>,
    method: LmmMethod,
}

struct ProfilePoint {
    loglik: f64,
    beta: DVector<f64>,
    a_inv: DMatrix<f64>,
    sigma2: f64,
}

impl Profile {
    fn new(x: &DMatrix<f64>, y: &DVector<f64>, group_of: &[usize], n_groups: usize, method: LmmMethod) -> Self {
        let p = x.ncols();
        let mut groups = vec![(0.0, DVector::zeros(p), 0.0); n_groups];
        for (i, &g) in group_of.iter().enumerate() {
            let entry = &mut groups[g];
            entry.0 += 1.0;
            entry.1 += x.row(i).transpose();
            entry.2 += y[i];
        }
        Profile {
            n: x.nrows(),
            p,
            xtx: x.transpose() * x,
            xty: x.transpose() * y,
            yty: y.dot(y),
            groups,
            method,
        }
    }

    fn eval(&self, ratio: f64) -> Option<ProfilePoint> {
        let mut a = self.xtx.clone();
        let mut b = self.xty.clone();
        let mut q = self.yty;
        let mut logdet_v = 0.0;
        if ratio > 0.0 {
            for (n_g, s, t) in &self.groups {
                let c = ratio / (1.0 + ratio * n_g);
                a.ger(-c, s, s, 1.0);
                b.axpy(-c * t, s, 1.0);
                q -= c * t * t;
                logdet_v += (ratio * n_g).ln_1p();
            }
        }
        let chol = a.clone().cholesky()?;
        let beta = chol.solve(&b);
        let rss = (q - b.dot(&beta)).max(f64::MIN_POSITIVE);
        let n = self.n as f64;
        let (sigma2, loglik) = match self.method {
            LmmMethod::Ml => {
                let s2 = rss / n;
                (s2, -0.5 * (n * (2.0 * std::f64::consts::PI * s2).ln() + logdet_v + n))
            }
            LmmMethod::Reml => {
                let dof = n - self.p as f64;
                let s2 = rss / dof;
                let logdet_a: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
                (
                    s2,
                    -0.5 * (dof * (2.0 * std::f64::consts::PI * s2).ln() + logdet_v + logdet_a + dof),
                )
            }
        };
        Some(ProfilePoint {
            loglik,
            beta,
            a_inv: chol.inverse(),
            sigma2,
        })
    }
}

fn loglik_at(profile: &Profile, log_ratio: f64) -> f64 {
    profile.eval(log_ratio.exp()).map_or(f64::NEG_INFINITY, |pt| pt.loglik)
}

/// Maximize the profiled criterion over `ln(lambda)`, then compare with the
/// boundary `lambda = 0`.
fn search_ratio(profile: &Profile) -> f64 {
    const LO: f64 = -18.0;
    const HI: f64 = 10.0;
    const STEP: f64 = 0.5;
    let grid: Vec<f64> = (0..=((HI - LO) / STEP) as usize)
        .map(|i| LO + STEP * i as f64)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&t| loglik_at(profile, t)).collect();
    let best = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();

    // Golden-section refinement on the bracketing interval.
    let (mut a, mut b) = (grid[best] - STEP, grid[best] + STEP);
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let mut fc = loglik_at(profile, c);
    let mut fd = loglik_at(profile, d);
    while (b - a).abs() > 1e-9 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = loglik_at(profile, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = loglik_at(profile, d);
        }
    }
    let t = (a + b) / 2.0;
    let at_zero = profile.eval(0.0).map_or(f64::NEG_INFINITY, |pt| pt.loglik);
    if at_zero >= loglik_at(profile, t) || t <= LO + STEP {
        0.0
    } else {
        t.exp()
    }
}

/// Standard-normal two-sided p-value, floored at the smallest positive double.
pub fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).max(f64::from_bits(1))
}

const Z_975: f64 = 1.959_963_984_540_054;

/// Fit `spec` to `data` with a random intercept per story.
pub fn lmm_fit(spec: &LmmSpec, data: &[LmmObservation], options: &LmmOptions) -> Result<LmmFit, StatsError> {
    let story_index: BTreeMap<&str, usize> = data
        .iter()
        .map(|o| o.story.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect();
    if story_index.len() < 2 {
        return Err(StatsError::TooFewGroups(story_index.len()));
    }
    if data.iter().any(|o| !o.response.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let design = build_design(spec, data)?;
    check_rank(&design.x, &design.names)?;

    let y = DVector::from_iterator(data.len(), data.iter().map(|o| o.response));
    let group_of: Vec<usize> = data.iter().map(|o| story_index[o.story.as_str()]).collect();
    let profile = Profile::new(&design.x, &y, &group_of, story_index.len(), spec.method);

    let ratio = match options.fixed_ratio {
        Some(r) if r >= 0.0 => r,
        Some(r) => return Err(StatsError::InvalidArgument(format!("variance ratio {r} < 0"))),
        None => search_ratio(&profile),
    };
    let pt = profile
        .eval(ratio)
        .ok_or_else(|| StatsError::RankDeficientDesign("GLS system is not positive definite".into()))?;

    let effects = design
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let est = pt.beta[j];
            let se = (pt.sigma2 * pt.a_inv[(j, j)]).max(0.0).sqrt();
            let z = est / se;
            FixedEffect {
                name: name.clone(),
                is_contrast: design.contrast[j],
                estimate: est,
                se,
                ci_low: est - Z_975 * se,
                ci_high: est + Z_975 * se,
                z,
                p: two_sided_p(z),
            }
        })
        .collect();

    Ok(LmmFit {
        spec: spec.name.clone(),
        method: spec.method,
        effects,
        sigma2_u: ratio * pt.sigma2,
        sigma2_e: pt.sigma2,
        ratio,
        boundary: ratio == 0.0,
        log_likelihood: pt.loglik,
        n_obs: data.len(),
        n_groups: story_index.len(),
        reference: "normal (Wald)".into(),
    })
}
