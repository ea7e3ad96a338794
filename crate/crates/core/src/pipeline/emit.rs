//! Report tables, their CSV/JSON emission and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::corpus::ValidationReport;
use crate::stats::MetricEstimate;

/// Table ids written by every run, in emission order.
pub const TABLE_IDS: [&str; 10] = [
    "cross_domain",
    "human_contrasts",
    "stage_progression",
    "affect_families",
    "cutpoint_robustness",
    "endpoint_ranges",
    "cross_domain_mmd",
    "lmm",
    "exclusions",
    "style_pca",
];

/// Display scale of an estimate. Proportions are stored as fractions and
/// multiplied by 100 only when emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Raw,
    Percent,
}

impl Scale {
    fn factor(self) -> f64 {
        match self {
            Scale::Raw => 1.0,
            Scale::Percent => 100.0,
        }
    }

    fn unit(self) -> &'static str {
        match self {
            Scale::Raw => "",
            Scale::Percent => "%",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    /// Values of the table's group columns.
    pub group: Vec<String>,
    pub metric: String,
    pub scale: Scale,
    pub estimate: MetricEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateTable {
    pub id: String,
    pub group_columns: Vec<String>,
    pub rows: Vec<EstimateRow>,
}

impl EstimateTable {
    pub fn new(id: &str, group_columns: &[&str]) -> Self {
        EstimateTable {
            id: id.into(),
            group_columns: group_columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, group: &[&str], metric: &str, scale: Scale, estimate: MetricEstimate) {
        self.rows.push(EstimateRow {
            group: group.iter().map(|g| g.to_string()).collect(),
            metric: metric.into(),
            scale,
            estimate,
        });
    }

    pub fn get(&self, group: &[&str], metric: &str) -> Option<&MetricEstimate> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.group.iter().map(String::as_str).eq(group.iter().copied()))
            .map(|r| &r.estimate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmRow {
    pub model: String,
    pub response: String,
    pub effect: String,
    pub is_contrast: bool,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub z: f64,
    pub p: f64,
    /// Holm-adjusted p over the contrast effects of the same fit.
    pub p_holm: Option<f64>,
    pub reject: Option<bool>,
    pub sigma2_u: f64,
    pub sigma2_e: f64,
    pub boundary: bool,
    pub n_obs: usize,
    pub n_groups: usize,
    pub method: String,
    pub reference: String,
}

/// Continuation counts by inclusion status for one metric and group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionRow {
    pub metric: String,
    pub domain: String,
    pub source: String,
    pub cut: u8,
    /// `included` or an exclusion reason.
    pub status: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaPoint {
    pub domain: String,
    pub source: String,
    pub story_id: String,
    pub cut: u8,
    pub sample_id: u32,
    pub coords: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaOutput {
    pub shares: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub rank: usize,
    pub rank_deficient: bool,
    pub points: Vec<PcaPoint>,
}

/// Everything a run computes, before any display scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub decisions: BTreeMap<String, String>,
    pub validation: ValidationReport,
    pub tables: Vec<EstimateTable>,
    pub lmm: Vec<LmmRow>,
    pub exclusions: Vec<ExclusionRow>,
    pub style_pca: Option<PcaOutput>,
    /// Group computations that failed and were skipped.
    pub warnings: Vec<String>,
}

impl Report {
    pub fn table(&self, id: &str) -> Option<&EstimateTable> {
        self.tables.iter().find(|t| t.id == id)
    }

    fn provenance(&self) -> Value {
        json!({
            "config_hash": self.config_hash,
            "seed": self.seed,
            "version": self.version,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub decisions: BTreeMap<String, String>,
    /// SHA-256 of each emitted file, by file name.
    pub outputs: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

/// Round to 12 significant digits so that display scaling does not leak
/// binary noise such as `41.00000000000001`.
fn tidy(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn num(x: f64) -> String {
    let t = tidy(x);
    if t.is_finite() {
        format!("{t:?}")
    } else {
        "NA".into()
    }
}

fn json_num(x: f64) -> Value {
    let t = tidy(x);
    if t.is_finite() {
        json!(t)
    } else {
        Value::Null
    }
}

/// Display form of a p-value: `<.001` below one in a thousand, otherwise
/// three decimals without the leading zero.
pub fn format_p(p: f64) -> String {
    if !p.is_finite() {
        return "NA".into();
    }
    if p < 0.001 {
        return "<.001".into();
    }
    let s = format!("{p:.3}");
    s.strip_prefix('0').map_or(s.clone(), str::to_string)
}

/// Cells of one table, as CSV strings and JSON values in column order.
struct Rendered {
    columns: Vec<String>,
    rows: Vec<Vec<(String, Value)>>,
}

fn text(s: &str) -> (String, Value) {
    (s.to_string(), json!(s))
}

fn number(x: f64) -> (String, Value) {
    (num(x), json_num(x))
}

fn int(n: impl Into<u64> + Copy) -> (String, Value) {
    let n: u64 = n.into();
    (n.to_string(), json!(n))
}

fn boolean(b: bool) -> (String, Value) {
    (b.to_string(), json!(b))
}

fn empty() -> (String, Value) {
    (String::new(), Value::Null)
}

fn render_estimates(t: &EstimateTable) -> Rendered {
    let mut columns = t.group_columns.clone();
    columns.extend(
        [
            "metric",
            "unit",
            "value",
            "ci_low",
            "ci_high",
            "method",
            "replicates",
            "seed",
            "n_units",
        ]
        .map(String::from),
    );
    let rows = t
        .rows
        .iter()
        .map(|r| {
            let e = &r.estimate;
            let f = r.scale.factor();
            let mut cells: Vec<(String, Value)> = r.group.iter().map(|g| text(g)).collect();
            cells.push(text(&r.metric));
            cells.push(text(r.scale.unit()));
            cells.push(number(e.value * f));
            if e.has_interval() {
                cells.push(number(e.ci_low * f));
                cells.push(number(e.ci_high * f));
            } else {
                cells.push(empty());
                cells.push(empty());
            }
            cells.push(text(e.method.as_str()));
            cells.push(int(e.replicates as u64));
            cells.push(e.seed.map_or_else(empty, int));
            cells.push(int(e.n_units as u64));
            cells
        })
        .collect();
    Rendered { columns, rows }
}

fn render_lmm(rows: &[LmmRow]) -> Rendered {
    let columns = [
        "model",
        "response",
        "effect",
        "contrast",
        "estimate",
        "se",
        "ci_low",
        "ci_high",
        "z",
        "p",
        "p_display",
        "p_holm",
        "p_holm_display",
        "reject",
        "sigma2_u",
        "sigma2_e",
        "boundary",
        "n_obs",
        "n_groups",
        "method",
        "reference",
    ]
    .map(String::from)
    .to_vec();
    let rows = rows
        .iter()
        .map(|r| {
            vec![
                text(&r.model),
                text(&r.response),
                text(&r.effect),
                boolean(r.is_contrast),
                number(r.estimate),
                number(r.se),
                number(r.ci_low),
                number(r.ci_high),
                number(r.z),
                (num(r.p), json!(r.p)),
                text(&format_p(r.p)),
                r.p_holm.map_or_else(empty, |p| (num(p), json!(p))),
                r.p_holm.map_or_else(empty, |p| text(&format_p(p))),
                r.reject.map_or_else(empty, boolean),
                number(r.sigma2_u),
                number(r.sigma2_e),
                boolean(r.boundary),
                int(r.n_obs as u64),
                int(r.n_groups as u64),
                text(&r.method),
                text(&r.reference),
            ]
        })
        .collect();
    Rendered { columns, rows }
}

fn render_exclusions(rows: &[ExclusionRow]) -> Rendered {
    let columns = ["metric", "domain", "source", "cut", "status", "count"]
        .map(String::from)
        .to_vec();
    let rows = rows
        .iter()
        .map(|r| {
            vec![
                text(&r.metric),
                text(&r.domain),
                text(&r.source),
                int(r.cut),
                text(&r.status),
                int(r.count as u64),
            ]
        })
        .collect();
    Rendered { columns, rows }
}

fn render_pca(pca: Option<&PcaOutput>) -> Rendered {
    let n = pca.map_or(0, |p| p.shares.len());
    let mut columns: Vec<String> = ["domain", "source", "story_id", "cut", "sample_id"]
        .map(String::from)
        .to_vec();
    columns.extend((1..=n).map(|i| format!("pc{i}")));
    let rows = pca.map_or_else(Vec::new, |p| {
        p.points
            .iter()
            .map(|pt| {
                let mut cells = vec![
                    text(&pt.domain),
                    text(&pt.source),
                    text(&pt.story_id),
                    int(pt.cut),
                    int(pt.sample_id),
                ];
                cells.extend(pt.coords.iter().map(|c| number(*c)));
                cells
            })
            .collect()
    });
    Rendered { columns, rows }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_bytes(r: &Rendered) -> Result<Vec<u8>, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let write = |w: &mut csv::Writer<Vec<u8>>, rec: Vec<&str>| {
        w.write_record(rec).map_err(|e| PipelineError::Io {
            path: "<csv buffer>".into(),
            source: e.into(),
        })
    };
    write(&mut w, r.columns.iter().map(String::as_str).collect())?;
    for row in &r.rows {
        write(&mut w, row.iter().map(|(s, _)| s.as_str()).collect())?;
    }
    w.into_inner().map_err(|e| PipelineError::Io {
        path: "<csv buffer>".into(),
        source: e.into_error(),
    })
}

fn json_bytes(value: &impl Serialize) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report values serialize");
    out.push(b'\n');
    out
}

fn mirror(id: &str, r: &Rendered, provenance: &Value, extra: Option<Value>) -> Value {
    let rows: Vec<Value> = r
        .rows
        .iter()
        .map(|row| {
            Value::Object(
                r.columns
                    .iter()
                    .zip(row)
                    .map(|(c, (_, v))| (c.clone(), v.clone()))
                    .collect(),
            )
        })
        .collect();
    let mut obj = json!({
        "table": id,
        "columns": r.columns,
        "provenance": provenance,
        "rows": rows,
    });
    if let Some(extra) = extra {
        obj["summary"] = extra;
    }
    obj
}

/// Write every table as CSV plus a JSON mirror, the full report as
/// `results.json`, and finally `manifest.json` with the hash of every file.
pub fn emit(report: &Report, dir: &Path) -> Result<Manifest, PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut outputs = BTreeMap::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<(), PipelineError> {
        let path = dir.join(&name);
        fs::write(&path, &bytes).map_err(io_err(&path))?;
        outputs.insert(name, hex::encode(Sha256::digest(&bytes)));
        Ok(())
    };
    let provenance = report.provenance();
    for id in TABLE_IDS {
        let (rendered, extra) = match id {
            "lmm" => (render_lmm(&report.lmm), None),
            "exclusions" => (render_exclusions(&report.exclusions), None),
            "style_pca" => (
                render_pca(report.style_pca.as_ref()),
                report.style_pca.as_ref().map(|p| {
                    json!({
                        "shares": p.shares,
                        "eigenvalues": p.eigenvalues,
                        "rank": p.rank,
                        "rank_deficient": p.rank_deficient,
                    })
                }),
            ),
            _ => {
                let empty_table;
                let t = match report.table(id) {
                    Some(t) => t,
                    None => {
                        empty_table = EstimateTable::new(id, &[]);
                        &empty_table
                    }
                };
                (render_estimates(t), None)
            }
        };
        put(format!("{id}.csv"), csv_bytes(&rendered)?)?;
        put(
            format!("{id}.json"),
            json_bytes(&mirror(id, &rendered, &provenance, extra)),
        )?;
    }
    put("results.json".into(), json_bytes(report))?;
    put("summary.md".into(), render_markdown(report).into_bytes())?;

    let manifest = Manifest {
        version: report.version.clone(),
        config_hash: report.config_hash.clone(),
        seed: report.seed,
        decisions: report.decisions.clone(),
        outputs,
        warnings: report.warnings.clone(),
    };
    let final_path = dir.join("manifest.json");
    let tmp: PathBuf = dir.join(".manifest.json.tmp");
    fs::write(&tmp, json_bytes(&manifest)).map_err(io_err(&tmp))?;
    fs::rename(&tmp, &final_path).map_err(io_err(&final_path))?;
    Ok(manifest)
}

fn cell(e: &MetricEstimate, scale: Scale) -> String {
    let f = scale.factor();
    let v = |x: f64| {
        if scale == Scale::Percent {
            format!("{:.1}", x * f)
        } else {
            format!("{x:.3}")
        }
    };
    if e.has_interval() {
        format!("{} [{}, {}]", v(e.value), v(e.ci_low), v(e.ci_high))
    } else {
        v(e.value)
    }
}

/// Human-readable summary: one pivoted Markdown table per estimate table.
pub fn render_markdown(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Analysis summary\n");
    let _ = writeln!(
        out,
        "config `{}` | seed {} | version {}\n",
        &report.config_hash[..report.config_hash.len().min(12)],
        report.seed,
        report.version
    );
    for t in &report.tables {
        let mut metrics: Vec<&str> = Vec::new();
        let mut groups: Vec<&[String]> = Vec::new();
        for r in &t.rows {
            if !metrics.contains(&r.metric.as_str()) {
                metrics.push(&r.metric);
            }
            if !groups.contains(&r.group.as_slice()) {
                groups.push(&r.group);
            }
        }
        let _ = writeln!(out, "## {}\n", t.id);
        if t.rows.is_empty() {
            let _ = writeln!(out, "(no rows)\n");
            continue;
        }
        let header: Vec<&str> = t
            .group_columns
            .iter()
            .map(String::as_str)
            .chain(metrics.iter().copied())
            .collect();
        let _ = writeln!(out, "| {} |", header.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
        for g in groups {
            let mut cells: Vec<String> = g.to_vec();
            for m in &metrics {
                let found = t.rows.iter().find(|r| r.group.as_slice() == g && r.metric == *m);
                cells.push(found.map_or_else(String::new, |r| cell(&r.estimate, r.scale)));
            }
            let _ = writeln!(out, "| {} |", cells.join(" | "));
        }
        out.push('\n');
    }
    if !report.lmm.is_empty() {
        let _ = writeln!(out, "## lmm\n");
        let _ = writeln!(out, "| model | response | effect | estimate | se | p | p (Holm) |");
        let _ = writeln!(out, "|---|---|---|---|---|---|---|");
        for r in report.lmm.iter().filter(|r| r.is_contrast) {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {:.4} | {:.4} | {} | {} |",
                r.model,
                r.response,
                r.effect,
                r.estimate,
                r.se,
                format_p(r.p),
                r.p_holm.map_or_else(String::new, format_p)
            );
        }
        out.push('\n');
    }
    if !report.warnings.is_empty() {
        let _ = writeln!(out, "## warnings\n");
        for w in &report.warnings {
            let _ = writeln!(out, "- {w}");
        }
    }
    out
}
