//! Experiment orchestration: configuration loading, matrix / label file
//! formats, the multi-seed run protocol (method plus single-modality and
//! concatenated-feature baselines), and report emission.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::admm::{fit, AdmmConfig, FitConfig, IterTrace};
use crate::data::ModalityData;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::GraphConfig;
use crate::metrics::MetricReport;
use crate::pretrain::PretrainConfig;
use crate::spectral::{spectral_cluster, SpectralConfig};
use crate::synth::{generate, SynthSpec};

// ---------------------------------------------------------------------------
// matrix / label file formats

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    SamplesAsRows,
    SamplesAsColumns,
}

/// Parses a comma-separated numeric file into a d x n matrix with samples
/// as columns. An optional header line is auto-detected (non-numeric first
/// row). Ragged rows and non-numeric cells are parse errors that name the
/// offending location.
pub fn load_matrix(path: &Path, orientation: Orientation) -> Result<DenseMatrix<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = cells
            .iter()
            .map(|c| c.parse::<f64>())
            .collect();
        match parsed {
            Ok(vals) => {
                if let Some(w) = width {
                    if vals.len() != w {
                        return Err(Error::Parse(format!(
                            "{}: line {}: {} cells, expected {}",
                            path.display(),
                            lineno + 1,
                            vals.len(),
                            w
                        )));
                    }
                } else {
                    width = Some(vals.len());
                }
                rows.push(vals);
            }
            Err(_) => {
                if rows.is_empty() && width.is_none() {
                    continue; // header line
                }
                let col = cells
                    .iter()
                    .position(|c| c.parse::<f64>().is_err())
                    .unwrap_or(0);
                return Err(Error::Parse(format!(
                    "{}: line {}, column {}: non-numeric cell '{}'",
                    path.display(),
                    lineno + 1,
                    col + 1,
                    cells[col]
                )));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse(format!("{}: no numeric rows", path.display())));
    }
    let r = rows.len();
    let c = rows[0].len();
    let m = DenseMatrix::from_fn(r, c, |i, j| rows[i][j]);
    Ok(match orientation {
        Orientation::SamplesAsRows => m.transpose(),
        Orientation::SamplesAsColumns => m,
    })
}

/// Writes a matrix as comma-separated text at 17 significant digits, which
/// round-trips f64 exactly. The in-memory convention is samples-as-columns;
/// `orientation` picks the on-disk layout.
pub fn format_matrix(m: &DenseMatrix<f64>, orientation: Orientation) -> String {
    let out = match orientation {
        Orientation::SamplesAsRows => m.transpose(),
        Orientation::SamplesAsColumns => m.clone(),
    };
    let mut s = String::new();
    for i in 0..out.rows() {
        for j in 0..out.cols() {
            if j > 0 {
                s.push(',');
            }
            let _ = write!(s, "{:.16e}", out.get(i, j));
        }
        s.push('\n');
    }
    s
}

pub fn save_matrix(path: &Path, m: &DenseMatrix<f64>, orientation: Orientation) -> Result<()> {
    std::fs::write(path, format_matrix(m, orientation))
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// One integer label per line, aligned with sample order.
pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(line.parse::<usize>().map_err(|_| {
            Error::Parse(format!(
                "{}: line {}: invalid label '{}'",
                path.display(),
                lineno + 1,
                line
            ))
        })?);
    }
    if labels.is_empty() {
        return Err(Error::Parse(format!("{}: no labels", path.display())));
    }
    Ok(labels)
}

pub fn save_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut s = String::new();
    for l in labels {
        let _ = writeln!(s, "{l}");
    }
    std::fs::write(path, s).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// configuration

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSource {
    /// Per-modality feature matrix paths.
    pub modalities: Vec<PathBuf>,
    /// Ground-truth labels, one integer per line; optional (metrics skipped
    /// when absent).
    #[serde(default)]
    pub labels: Option<PathBuf>,
    pub orientation: Orientation,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum DataSource {
    Files(FileSource),
    Synth(SynthSpec),
}

/// Component toggles mirroring the ablation study: encoder term off, graph
/// regularization off (beta = 0), consensus regularization off (lambda = 0).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationSwitches {
    pub use_ae_encoder_term: bool,
    pub use_graph_reg: bool,
    pub use_consensus_reg: bool,
}

impl Default for AblationSwitches {
    fn default() -> Self {
        Self {
            use_ae_encoder_term: true,
            use_graph_reg: true,
            use_consensus_reg: true,
        }
    }
}

impl AblationSwitches {
    pub fn method_name(&self) -> &'static str {
        match (
            self.use_ae_encoder_term,
            self.use_graph_reg,
            self.use_consensus_reg,
        ) {
            (true, true, true) => "ours",
            (false, false, false) => "none",
            (true, false, false) => "ae_only",
            (false, true, false) => "gr_only",
            (false, false, true) => "cr_only",
            _ => "custom",
        }
    }

    pub fn apply(&self, base: &AdmmConfig) -> AdmmConfig {
        let mut cfg = *base;
        if !self.use_graph_reg {
            cfg.beta = 0.0;
        }
        if !self.use_consensus_reg {
            cfg.lambda = 0.0;
        }
        cfg.encoder_term = self.use_ae_encoder_term;
        cfg
    }
}

fn default_n_runs() -> usize {
    10
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub layer_sizes: Vec<usize>,
    /// Number of clusters.
    pub k: usize,
    #[serde(default)]
    pub admm: AdmmConfig,
    #[serde(default)]
    pub graph: GraphConfig,
    #[serde(default)]
    pub pretrain: PretrainConfig,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default = "default_n_runs")]
    pub n_runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub ablation: AblationSwitches,
    /// Also run the per-modality and concatenated-feature spectral baselines.
    #[serde(default = "default_true")]
    pub baselines: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(Error::Config("n_runs must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if self.layer_sizes.is_empty() {
            return Err(Error::Config("layer_sizes must be non-empty".into()));
        }
        self.admm.validate()?;
        match &self.data {
            DataSource::Synth(spec) => spec.validate()?,
            DataSource::Files(src) => {
                if src.modalities.is_empty() {
                    return Err(Error::Config("no modality files given".into()));
                }
                for p in src
                    .modalities
                    .iter()
                    .chain(src.labels.as_ref().into_iter())
                {
                    if !p.exists() {
                        return Err(Error::Config(format!(
                            "referenced file does not exist: {}",
                            p.display()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            admm: self.ablation.apply(&self.admm),
            graph: self.graph,
            pretrain: self.pretrain,
        }
    }
}

// ---------------------------------------------------------------------------
// report structures

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunOutcome {
    pub seed: u64,
    pub metrics: Option<MetricReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<IterTrace>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MethodResult {
    pub name: String,
    pub runs: Vec<RunOutcome>,
    /// Mean / population standard deviation of each metric over successful
    /// runs; absent when every run failed or no truth labels were given.
    pub mean: Option<MetricReport>,
    pub std: Option<MetricReport>,
    pub n_failed: usize,
}

impl MethodResult {
    fn aggregate(name: String, runs: Vec<RunOutcome>) -> Self {
        let ok: Vec<[f64; 6]> = runs
            .iter()
            .filter_map(|r| r.metrics.as_ref().map(MetricReport::as_array))
            .collect();
        let n_failed = runs.iter().filter(|r| r.error.is_some()).count();
        let (mean, std) = if ok.is_empty() {
            (None, None)
        } else {
            let n = ok.len() as f64;
            let mut mu = [0.0f64; 6];
            for row in &ok {
                for (m, v) in mu.iter_mut().zip(row.iter()) {
                    *m += v / n;
                }
            }
            let mut var = [0.0f64; 6];
            for row in &ok {
                for i in 0..6 {
                    var[i] += (row[i] - mu[i]).powi(2) / n;
                }
            }
            let to_report = |a: [f64; 6]| MetricReport {
                acc: a[0],
                nmi: a[1],
                ari: a[2],
                f_score: a[3],
                precision: a[4],
                recall: a[5],
            };
            (
                Some(to_report(mu)),
                Some(to_report([
                    var[0].sqrt(),
                    var[1].sqrt(),
                    var[2].sqrt(),
                    var[3].sqrt(),
                    var[4].sqrt(),
                    var[5].sqrt(),
                ])),
            )
        };
        Self {
            name,
            runs,
            mean,
            std,
            n_failed,
        }
    }

    pub fn mean_acc(&self) -> Option<f64> {
        self.mean.as_ref().map(|m| m.acc)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    /// Fully resolved configuration (defaults materialized).
    pub config: ExperimentConfig,
    pub methods: Vec<MethodResult>,
    /// Wall-clock seconds per method; excluded from the serialized report so
    /// identical configurations produce identical report bytes. Emitted to a
    /// separate timings file instead.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

impl RunReport {
    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.name == name)
    }
}

// ---------------------------------------------------------------------------
// experiment driver

fn load_dataset(config: &ExperimentConfig) -> Result<(Vec<ModalityData<f64>>, Option<Vec<usize>>)> {
    match &config.data {
        DataSource::Synth(spec) => {
            let (ms, truth) = generate(spec)?;
            Ok((ms, Some(truth)))
        }
        DataSource::Files(src) => {
            let mut ms = Vec::with_capacity(src.modalities.len());
            for (v, path) in src.modalities.iter().enumerate() {
                let x = load_matrix(path, src.orientation)?;
                let stem = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| format!("modality{v}"));
                ms.push(ModalityData::new(stem, x));
            }
            let truth = match &src.labels {
                Some(p) => Some(load_labels(p)?),
                None => None,
            };
            if let Some(t) = &truth {
                let n = ms[0].n_samples();
                if t.len() != n {
                    return Err(Error::Config(format!(
                        "label count {} does not match sample count {n}",
                        t.len()
                    )));
                }
            }
            Ok((ms, truth))
        }
    }
}

fn score(truth: Option<&Vec<usize>>, pred: &[usize]) -> Result<Option<MetricReport>> {
    match truth {
        Some(t) => Ok(Some(MetricReport::compute(t, pred)?)),
        None => Ok(None),
    }
}

/// Runs the configured method for `n_runs` seeds (seed = base_seed + r),
/// plus the per-modality and concatenated-feature spectral baselines when
/// enabled. Per-run failures are recorded in the report, not raised.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let (modalities, truth) = load_dataset(config)?;
    let fit_cfg = config.fit_config();
    let mut methods = Vec::new();
    let mut timings = Vec::new();

    // the method under test
    let t0 = Instant::now();
    let mut runs = Vec::with_capacity(config.n_runs);
    for r in 0..config.n_runs {
        let seed = config.base_seed.wrapping_add(r as u64);
        let outcome = (|| -> Result<RunOutcome> {
            let result = fit(&modalities, &config.layer_sizes, &fit_cfg, seed)?;
            let assign = spectral_cluster(&result.hstar, config.k, seed, &config.spectral)?;
            Ok(RunOutcome {
                seed,
                metrics: score(truth.as_ref(), &assign.labels)?,
                error: None,
                trace: result.traces,
            })
        })();
        runs.push(outcome.unwrap_or_else(|e| RunOutcome {
            seed,
            metrics: None,
            error: Some(e.to_string()),
            trace: Vec::new(),
        }));
        log::info!("{}: run {}/{} done", config.ablation.method_name(), r + 1, config.n_runs);
    }
    let name = config.ablation.method_name().to_string();
    timings.push((name.clone(), t0.elapsed().as_secs_f64()));
    methods.push(MethodResult::aggregate(name, runs));

    if config.baselines {
        // single-modality spectral baselines
        for md in &modalities {
            let t0 = Instant::now();
            let runs = baseline_runs(&md.x, config, &truth);
            timings.push((md.name.clone(), t0.elapsed().as_secs_f64()));
            methods.push(MethodResult::aggregate(md.name.clone(), runs));
        }
        // concatenated features
        let t0 = Instant::now();
        let concat = modalities
            .iter()
            .skip(1)
            .try_fold(modalities[0].x.clone(), |acc, md| acc.vstack(&md.x))?;
        let runs = baseline_runs(&concat, config, &truth);
        timings.push(("concat_fea".into(), t0.elapsed().as_secs_f64()));
        methods.push(MethodResult::aggregate("concat_fea".into(), runs));
    }

    Ok(RunReport {
        config: config.clone(),
        methods,
        timings,
    })
}

fn baseline_runs(
    x: &DenseMatrix<f64>,
    config: &ExperimentConfig,
    truth: &Option<Vec<usize>>,
) -> Vec<RunOutcome> {
    (0..config.n_runs)
        .map(|r| {
            let seed = config.base_seed.wrapping_add(r as u64);
            match spectral_cluster(x, config.k, seed, &config.spectral)
                .and_then(|a| score(truth.as_ref(), &a.labels))
            {
                Ok(metrics) => RunOutcome {
                    seed,
                    metrics,
                    error: None,
                    trace: Vec::new(),
                },
                Err(e) => RunOutcome {
                    seed,
                    metrics: None,
                    error: Some(e.to_string()),
                    trace: Vec::new(),
                },
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// report emission

fn fmt_cell(mean: f64, std: f64) -> String {
    format!("{mean:.4}±{std:.4}")
}

/// Writes report.json (full per-run detail), summary.csv (one row per
/// method, six metrics as mean±std), per-run trace CSVs, and a separate
/// timings.csv (the only non-deterministic artifact).
pub fn emit_report(report: &RunReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;
    let write = |name: &str, content: &str| -> Result<()> {
        let p = out_dir.join(name);
        std::fs::write(&p, content).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
    };

    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Io(format!("report serialization: {e}")))?;
    write("report.json", &(json + "\n"))?;

    let mut summary = String::from("method");
    for m in MetricReport::NAMES {
        let _ = write!(summary, ",{m}");
    }
    summary.push_str(",n_runs,n_failed\n");
    for m in &report.methods {
        let _ = write!(summary, "{}", m.name);
        match (&m.mean, &m.std) {
            (Some(mu), Some(sd)) => {
                for (a, b) in mu.as_array().iter().zip(sd.as_array().iter()) {
                    let _ = write!(summary, ",{}", fmt_cell(*a, *b));
                }
            }
            _ => summary.push_str(&",".repeat(6)),
        }
        let _ = writeln!(summary, ",{},{}", m.runs.len(), m.n_failed);
    }
    write("summary.csv", &summary)?;

    for m in &report.methods {
        for run in &m.runs {
            if m.name != report.methods[0].name {
                continue; // only the method under test carries traces
            }
            let mut csv = String::from(
                "iter,objective,residual_m1,residual_m2,residual_s,max_update_delta,min_nonneg\n",
            );
            for t in &run.trace {
                let _ = writeln!(
                    csv,
                    "{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
                    t.iter,
                    t.objective,
                    t.residual_m1,
                    t.residual_m2,
                    t.residual_s,
                    t.max_update_delta,
                    t.min_nonneg
                );
            }
            write(&format!("trace_{}_seed{}.csv", m.name, run.seed), &csv)?;
        }
    }

    let mut timing = String::from("stage,seconds\n");
    for (name, secs) in &report.timings {
        let _ = writeln!(timing, "{name},{secs:.3}");
    }
    write("timings.csv", &timing)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tmpdir(tag: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("mvnmf-test-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn load_matrix_basic_and_header() {
        let d = tmpdir("loadmat");
        let p = d.join("m.csv");
        std::fs::write(&p, "1,2\n3,4\n").unwrap();
        let m = load_matrix(&p, Orientation::SamplesAsRows).unwrap();
        assert_eq!(m.shape(), (2, 2)); // transposed: features x samples
        assert_eq!(m.get(0, 1), 3.0);

        std::fs::write(&p, "f1,f2\n1,2\n3,4\n").unwrap();
        let m = load_matrix(&p, Orientation::SamplesAsColumns).unwrap();
        assert_eq!(m.shape(), (2, 2));
        assert_eq!(m.get(0, 0), 1.0);
    }

    #[test]
    fn load_matrix_errors_name_locations() {
        let d = tmpdir("loadmat-err");
        let p = d.join("bad.csv");
        std::fs::write(&p, "1,2\n3,4,5\n").unwrap();
        let err = load_matrix(&p, Orientation::SamplesAsRows).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");

        std::fs::write(&p, "1,2\n3,x\n").unwrap();
        let err = load_matrix(&p, Orientation::SamplesAsRows).unwrap_err();
        assert!(err.to_string().contains("column 2"), "{err}");
    }

    #[test]
    fn matrix_round_trip_is_exact() {
        let d = tmpdir("roundtrip");
        let p = d.join("m.csv");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = DenseMatrix::<f64>::from_fn(7, 5, |_, _| rng.random::<f64>() * 1e3 - 500.0)
            .map(f64::abs);
        save_matrix(&p, &m, Orientation::SamplesAsColumns).unwrap();
        let m2 = load_matrix(&p, Orientation::SamplesAsColumns).unwrap();
        assert_eq!(m.as_slice(), m2.as_slice());
        // and the text itself is stable
        let t1 = std::fs::read_to_string(&p).unwrap();
        save_matrix(&p, &m2, Orientation::SamplesAsColumns).unwrap();
        assert_eq!(t1, std::fs::read_to_string(&p).unwrap());
    }

    #[test]
    fn labels_round_trip() {
        let d = tmpdir("labels");
        let p = d.join("y.txt");
        save_labels(&p, &[0, 2, 1, 1]).unwrap();
        assert_eq!(load_labels(&p).unwrap(), vec![0, 2, 1, 1]);
        std::fs::write(&p, "0\n-1\n").unwrap();
        assert!(load_labels(&p).is_err());
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        let ok = r#"{
            "data": {"synth": {"n_clusters": 2, "samples_per_cluster": 5,
                     "modality_dims": [6], "noise_sigma": 0.1, "seed": 0}},
            "layer_sizes": [3], "k": 2
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(ok).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_runs, 10);
        assert_eq!(cfg.ablation.method_name(), "ours");

        let bad = ok.replace("\"k\": 2", "\"k\": 2, \"kk\": 3");
        assert!(serde_json::from_str::<ExperimentConfig>(&bad).is_err());

        let bad = ok.replace("\"layer_sizes\": [3]", "\"layer_sizes\": []");
        let cfg: ExperimentConfig = serde_json::from_str(&bad).unwrap();
        assert!(cfg.validate().is_err());
    }

    fn tiny_config(n_runs: usize) -> ExperimentConfig {
        ExperimentConfig {
            data: DataSource::Synth(SynthSpec {
                n_clusters: 2,
                samples_per_cluster: 10,
                modality_dims: vec![8, 6],
                merge_map: None,
                noise_sigma: 0.05,
                outlier_fraction: 0.0,
                seed: 5,
            }),
            layer_sizes: vec![4],
            k: 2,
            admm: AdmmConfig {
                max_iters: 8,
                ..Default::default()
            },
            graph: GraphConfig::default(),
            pretrain: PretrainConfig {
                per_layer_iters: 40,
                ..Default::default()
            },
            spectral: SpectralConfig::default(),
            n_runs,
            base_seed: 1,
            ablation: AblationSwitches::default(),
            baselines: true,
        }
    }

    #[test]
    fn single_run_report_aggregate_equals_run() {
        let report = run_experiment(&tiny_config(1)).unwrap();
        let ours = report.method("ours").unwrap();
        assert_eq!(ours.runs.len(), 1);
        let run = ours.runs[0].metrics.unwrap();
        let mean = ours.mean.unwrap();
        for (a, b) in run.as_array().iter().zip(mean.as_array().iter()) {
            assert_eq!(a, b);
        }
        let std = ours.std.unwrap();
        assert!(std.as_array().iter().all(|&s| s == 0.0));
        // baselines present: 2 modalities + concat
        assert_eq!(report.methods.len(), 4);
        assert!(report.method("concat_fea").is_some());
    }

    #[test]
    fn emitted_files_deterministic() {
        let cfg = tiny_config(2);
        let r1 = run_experiment(&cfg).unwrap();
        let r2 = run_experiment(&cfg).unwrap();
        let d1 = tmpdir("emit1");
        let d2 = tmpdir("emit2");
        emit_report(&r1, &d1).unwrap();
        emit_report(&r2, &d2).unwrap();
        for f in ["report.json", "summary.csv", "trace_ours_seed1.csv"] {
            let a = std::fs::read(d1.join(f)).unwrap();
            let b = std::fs::read(d2.join(f)).unwrap();
            assert_eq!(a, b, "{f} differs");
        }
        let summary = std::fs::read_to_string(d1.join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 1 + r1.methods.len());
    }

    #[test]
    fn per_run_failure_is_flagged_not_fatal() {
        let mut cfg = tiny_config(1);
        cfg.layer_sizes = vec![4, 2];
        cfg.k = 25; // k > n makes spectral_cluster fail per run
        let report = run_experiment(&cfg).unwrap();
        let ours = &report.methods[0];
        assert_eq!(ours.n_failed, 1);
        assert!(ours.mean.is_none());
        assert!(ours.runs[0].error.is_some());
    }
}
