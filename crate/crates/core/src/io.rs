//! Tab-separated file formats.
//!
//! Every table starts with `#` comment lines recording the tool version, the
//! resolved configuration and the seed; readers skip them. Count matrices
//! carry one column per sample named `t<index>_r<replicate>` and come with a
//! metadata sidecar (`<stem>.meta.tsv`) mapping each column to its time
//! value, condition and replicate.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::bayes_factor::{BfReport, Estimator, GeneBf};
use crate::error::{GmnbError, Result};
use crate::evaluation::{CurveKind, CurveResult};
use crate::model::{CountTensor, PosteriorSamples, SampleMeta};
use crate::synthetic::{GeneParams, LabeledDataset};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// What produced a file: written as the leading comment block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: Value,
}

impl Provenance {
    pub fn new(command: &str, seed: u64, config: Value) -> Self {
        Self {
            tool: "gmnb".into(),
            version: TOOL_VERSION.into(),
            command: command.into(),
            seed,
            config,
        }
    }

    pub fn header(&self) -> String {
        format!(
            "# {} {} {}\n# seed: {}\n# config: {}\n",
            self.tool, self.version, self.command, self.seed, self.config
        )
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| GmnbError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| GmnbError::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| GmnbError::io(path, e))
}

fn parse_err(path: &Path, line: usize, detail: impl Into<String>) -> GmnbError {
    GmnbError::Parse {
        path: path.to_path_buf(),
        line,
        detail: detail.into(),
    }
}

/// Header and data rows of a tab-separated table, with 1-based line numbers.
struct Table<'a> {
    path: &'a Path,
    header: Vec<&'a str>,
    header_line: usize,
    rows: Vec<(usize, Vec<&'a str>)>,
}

impl<'a> Table<'a> {
    fn parse(path: &'a Path, text: &'a str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
            .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
        let (header_line, header) = lines
            .next()
            .ok_or_else(|| parse_err(path, 1, "missing header row"))?;
        let header: Vec<&str> = header.split('\t').collect();
        let mut rows = Vec::new();
        for (n, line) in lines {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != header.len() {
                return Err(parse_err(
                    path,
                    n,
                    format!("{} fields, header has {}", fields.len(), header.len()),
                ));
            }
            if let Some(i) = fields.iter().position(|f| f.trim().is_empty()) {
                return Err(parse_err(path, n, format!("missing value in column '{}'", header[i])));
            }
            rows.push((n, fields));
        }
        Ok(Self {
            path,
            header,
            header_line,
            rows,
        })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| parse_err(self.path, self.header_line, format!("missing column '{name}'")))
    }

    fn value<T: std::str::FromStr>(&self, line: usize, field: &str, what: &str) -> Result<T> {
        field
            .trim()
            .parse()
            .map_err(|_| parse_err(self.path, line, format!("bad {what} '{field}'")))
    }
}

/// Sidecar path for a count file: `dir/cond1.tsv` -> `dir/cond1.meta.tsv`.
pub fn meta_path(counts: &Path) -> PathBuf {
    let stem = counts.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    counts.with_file_name(format!("{stem}.meta.tsv"))
}

/// Writes a count matrix and its metadata sidecar.
pub fn write_counts(path: &Path, data: &CountTensor, prov: &Provenance) -> Result<()> {
    let mut out = prov.header();
    out.push_str("gene_id");
    for t in 0..data.n_times() {
        for s in data.samples_at(t) {
            out.push('\t');
            out.push_str(&s.name);
        }
    }
    out.push('\n');
    for k in 0..data.n_genes() {
        out.push_str(&data.gene_ids()[k]);
        for n in data.gene_counts(k) {
            let _ = write!(out, "\t{n}");
        }
        out.push('\n');
    }
    write_file(path, &out)?;

    let mut meta = prov.header();
    meta.push_str("column_name\ttime_value\tcondition\treplicate\n");
    for t in 0..data.n_times() {
        for s in data.samples_at(t) {
            let _ = writeln!(
                meta,
                "{}\t{}\t{}\t{}",
                s.name,
                data.time_labels()[t],
                s.condition,
                s.replicate
            );
        }
    }
    write_file(&meta_path(path), &meta)
}

/// Reads a count matrix with its sidecar at [`meta_path`].
pub fn read_counts(path: &Path) -> Result<CountTensor> {
    read_counts_with_meta(path, &meta_path(path))
}

pub fn read_counts_with_meta(path: &Path, meta: &Path) -> Result<CountTensor> {
    let meta_text = read_file(meta)?;
    let mt = Table::parse(meta, &meta_text)?;
    let (c_name, c_time, c_cond, c_rep) = (
        mt.column("column_name")?,
        mt.column("time_value")?,
        mt.column("condition")?,
        mt.column("replicate")?,
    );
    let mut by_name: HashMap<&str, (f64, u8, u32)> = HashMap::new();
    for (n, row) in &mt.rows {
        let time: f64 = mt.value(*n, row[c_time], "time value")?;
        if !time.is_finite() {
            return Err(parse_err(meta, *n, format!("non-finite time value '{}'", row[c_time])));
        }
        let cond: u8 = mt.value(*n, row[c_cond], "condition")?;
        let rep: u32 = mt.value(*n, row[c_rep], "replicate")?;
        if by_name.insert(row[c_name], (time, cond, rep)).is_some() {
            return Err(parse_err(meta, *n, format!("duplicate column '{}'", row[c_name])));
        }
    }

    let text = read_file(path)?;
    let table = Table::parse(path, &text)?;
    if table.header.first() != Some(&"gene_id") {
        return Err(parse_err(path, table.header_line, "first column must be 'gene_id'"));
    }
    let columns = &table.header[1..];
    if columns.is_empty() {
        return Err(parse_err(path, table.header_line, "no sample columns"));
    }
    let mut seen = HashSet::new();
    // Group columns by time value (ascending), then by replicate.
    let mut groups: BTreeMap<u64, (f64, Vec<(u32, usize, SampleMeta)>)> = BTreeMap::new();
    for (i, name) in columns.iter().enumerate() {
        if !seen.insert(*name) {
            return Err(parse_err(path, table.header_line, format!("duplicate column '{name}'")));
        }
        let &(time, condition, replicate) = by_name.get(name).ok_or_else(|| {
            parse_err(
                path,
                table.header_line,
                format!("column '{name}' missing from {}", meta.display()),
            )
        })?;
        groups
            .entry(order_key(time))
            .or_insert_with(|| (time, Vec::new()))
            .1
            .push((
                replicate,
                i,
                SampleMeta {
                    name: name.to_string(),
                    condition,
                    replicate,
                },
            ));
    }
    let mut time_labels = Vec::new();
    let mut samples = Vec::new();
    let mut order = Vec::new();
    for (_, (time, mut cols)) in groups {
        cols.sort_by_key(|(rep, i, _)| (*rep, *i));
        time_labels.push(time);
        order.extend(cols.iter().map(|(_, i, _)| *i));
        samples.push(cols.into_iter().map(|(_, _, s)| s).collect());
    }

    let mut gene_ids = Vec::with_capacity(table.rows.len());
    let mut ids = HashSet::new();
    let mut counts = Vec::with_capacity(table.rows.len() * order.len());
    for (n, row) in &table.rows {
        if !ids.insert(row[0]) {
            return Err(parse_err(path, *n, format!("duplicate gene id '{}'", row[0])));
        }
        gene_ids.push(row[0].to_string());
        for &i in &order {
            counts.push(table.value::<u64>(*n, row[i + 1], "count")?);
        }
    }
    CountTensor::new(gene_ids, time_labels, samples, counts)
}

/// Total order on finite floats that sorts like the numbers themselves.
fn order_key(x: f64) -> u64 {
    let bits = x.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

const REPORT_COLUMNS: [&str; 9] = [
    "gene_id",
    "rank",
    "log_bf",
    "log_ml_m0",
    "log_ml_m1",
    "log_ml_m2",
    "estimator",
    "alt_log_bf",
    "all_zero",
];

pub fn write_report(path: &Path, report: &BfReport, prov: &Provenance) -> Result<()> {
    let mut out = prov.header();
    out.push_str(&REPORT_COLUMNS.join("\t"));
    out.push('\n');
    for g in &report.genes {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            g.gene_id,
            g.rank,
            g.log_bf,
            g.log_ml_m0,
            g.log_ml_m1,
            g.log_ml_m2,
            report.estimator,
            g.alt_log_bf,
            g.all_zero
        );
    }
    write_file(path, &out)
}

pub fn read_report(path: &Path) -> Result<BfReport> {
    let text = read_file(path)?;
    let t = Table::parse(path, &text)?;
    let cols: Vec<usize> = REPORT_COLUMNS.iter().map(|c| t.column(c)).collect::<Result<_>>()?;
    let mut estimator: Option<Estimator> = None;
    let mut genes = Vec::with_capacity(t.rows.len());
    for (n, row) in &t.rows {
        let f = |i: usize| row[cols[i]];
        let est: Estimator = t.value(*n, f(6), "estimator")?;
        if estimator.is_some_and(|e| e != est) {
            return Err(parse_err(path, *n, "report mixes estimators"));
        }
        estimator = Some(est);
        genes.push(GeneBf {
            gene_id: f(0).to_string(),
            rank: t.value(*n, f(1), "rank")?,
            log_bf: t.value(*n, f(2), "log_bf")?,
            log_ml_m0: t.value(*n, f(3), "log_ml_m0")?,
            log_ml_m1: t.value(*n, f(4), "log_ml_m1")?,
            log_ml_m2: t.value(*n, f(5), "log_ml_m2")?,
            alt_log_bf: t.value(*n, f(7), "alt_log_bf")?,
            all_zero: t.value(*n, f(8), "all_zero")?,
        });
    }
    Ok(BfReport {
        estimator: estimator.unwrap_or_default(),
        genes,
    })
}

fn param_names(p: &GeneParams) -> &'static [&'static str] {
    match p {
        GeneParams::Gmnb { .. } => &["c", "e"],
        GeneParams::Gp { .. } => &["mean", "variance", "length"],
        GeneParams::Nbar1 { .. } => &["beta", "phi"],
    }
}

/// Truth sidecar: `gene_id`, `is_de`, then each generator parameter for
/// condition 1 and condition 2.
pub fn write_truth(path: &Path, ds: &LabeledDataset, prov: &Provenance) -> Result<()> {
    let mut out = prov.header();
    out.push_str("gene_id\tis_de");
    if let Some(p) = ds.params.first() {
        for cond in ["cond1", "cond2"] {
            for name in param_names(p) {
                let _ = write!(out, "\t{cond}_{name}");
            }
        }
    }
    out.push('\n');
    for (k, id) in ds.data_cond1.gene_ids().iter().enumerate() {
        let _ = write!(out, "{id}\t{}", ds.truth[k]);
        let (p1, p2) = ds.params[k].condition_params();
        for v in p1.iter().chain(&p2) {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
    }
    write_file(path, &out)
}

/// Gene ids and DE labels from a truth sidecar, in file order.
pub fn read_truth(path: &Path) -> Result<(Vec<String>, Vec<bool>)> {
    let text = read_file(path)?;
    let t = Table::parse(path, &text)?;
    let (c_id, c_de) = (t.column("gene_id")?, t.column("is_de")?);
    let mut ids = Vec::with_capacity(t.rows.len());
    let mut labels = Vec::with_capacity(t.rows.len());
    for (n, row) in &t.rows {
        ids.push(row[c_id].to_string());
        labels.push(t.value(*n, row[c_de], "is_de flag")?);
    }
    Ok((ids, labels))
}

/// Full generator record (spec, per-gene parameters, size factors) as JSON.
pub fn write_params(path: &Path, ds: &LabeledDataset, prov: &Provenance) -> Result<()> {
    #[derive(Serialize)]
    struct Record<'a> {
        provenance: &'a Provenance,
        spec: &'a crate::synthetic::SimSpec,
        gene_ids: &'a [String],
        truth: &'a [bool],
        size_factors: &'a [Vec<Vec<f64>>; 2],
        params: &'a [GeneParams],
    }
    let rec = Record {
        provenance: prov,
        spec: &ds.spec,
        gene_ids: ds.data_cond1.gene_ids(),
        truth: &ds.truth,
        size_factors: &ds.size_factors,
        params: &ds.params,
    };
    let mut json = serde_json::to_string_pretty(&rec)
        .map_err(|e| GmnbError::Validation(format!("cannot serialize parameters: {e}")))?;
    json.push('\n');
    write_file(path, &json)
}

pub fn write_curve(path: &Path, curve: &CurveResult, prov: &Provenance) -> Result<()> {
    let mut out = prov.header();
    let _ = writeln!(out, "# auc: {}", curve.auc);
    out.push_str(match curve.kind {
        CurveKind::Roc => "fpr\ttpr\n",
        CurveKind::Pr => "recall\tprecision\n",
    });
    for (x, y) in &curve.points {
        let _ = writeln!(out, "{x}\t{y}");
    }
    write_file(path, &out)
}

/// One row of an AUC summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AucSummary {
    pub method: String,
    pub generator: String,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub n_runs: usize,
}

pub fn write_auc_summary(path: &Path, rows: &[AucSummary], prov: &Provenance) -> Result<()> {
    let mut out = prov.header();
    out.push_str("method\tgenerator\tmetric\tmean\tsd\tn_runs\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.method, r.generator, r.metric, r.mean, r.sd, r.n_runs
        );
    }
    write_file(path, &out)
}

/// Linear-interpolation quantile of sorted values.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Posterior mean and 99% credible interval of every `r_k^(t)`, plus the
/// posterior mean of `c_k`.
pub fn write_posterior_summary(
    path: &Path,
    data: &CountTensor,
    samples: &PosteriorSamples,
    prov: &Provenance,
) -> Result<()> {
    if samples.draws.is_empty() {
        return Err(GmnbError::Validation("posterior summary needs stored draws".into()));
    }
    let s = samples.draws.len() as f64;
    let mut out = prov.header();
    out.push_str("gene_id\ttime_index\ttime_value\tr_mean\tr_ci_lo\tr_ci_hi\tc_mean\n");
    let mut buf = Vec::with_capacity(samples.draws.len());
    for k in 0..data.n_genes() {
        let c_mean = samples.draws.iter().map(|d| d.c[k]).sum::<f64>() / s;
        for t in 0..data.n_times() {
            buf.clear();
            buf.extend(samples.draws.iter().map(|d| d.r[k][t]));
            let mean = buf.iter().sum::<f64>() / s;
            buf.sort_by(f64::total_cmp);
            let _ = writeln!(
                out,
                "{}\t{t}\t{}\t{mean}\t{}\t{}\t{c_mean}",
                data.gene_ids()[k],
                data.time_labels()[t],
                quantile_sorted(&buf, 0.005),
                quantile_sorted(&buf, 0.995)
            );
        }
    }
    write_file(path, &out)
}
