//! Format sweep: train one reference model per dataset, quantize it into every grid
//! format, and measure test accuracy of the EMAC-based inference engine.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{dynamic_range, format_extrema, FormatKind, FormatSpec};
use crate::data::{load_preset, DataError, Dataset};
use crate::network::{classify, quantize_input, NetworkError, NetworkModel};
use crate::trainer::{quantize, train, FloatModel, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Training hyperparameters for one dataset; the seed comes from the config root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl TrainSettings {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            hidden: self.hidden.clone(),
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub preset: String,
    pub train: TrainSettings,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub bits: Vec<u32>,
    pub posit_es: Vec<u32>,
    pub float_we: Vec<u32>,
    /// Fixed-point fraction bits; `null` means every q in `0..n`.
    #[serde(default)]
    pub fixed_q: Option<Vec<u32>>,
}

impl SweepGrid {
    /// Every valid format in the grid, grouped by width; combinations that violate a
    /// format's parameter bounds are skipped.
    pub fn formats(&self) -> Vec<FormatSpec> {
        let mut out = Vec::new();
        for &n in &self.bits {
            out.extend(self.posit_es.iter().filter_map(|&es| FormatSpec::posit(n, es).ok()));
            out.extend(self.float_we.iter().filter_map(|&we| FormatSpec::float(n, we).ok()));
            let qs: Vec<u32> = match &self.fixed_q {
                Some(qs) => qs.clone(),
                None => (0..n).collect(),
            };
            out.extend(qs.iter().filter_map(|&q| FormatSpec::fixed(n, q).ok()));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data_dir: PathBuf,
    pub output_dir: PathBuf,
    pub datasets: Vec<DatasetEntry>,
    pub grid: SweepGrid,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ExperimentError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    fn check(&self) -> Result<(), ExperimentError> {
        if self.datasets.is_empty() {
            return Err(ExperimentError::Config("no datasets".into()));
        }
        for d in &self.datasets {
            crate::data::preset(&d.preset)?;
        }
        Ok(())
    }

    /// Resolves relative directories against `base`.
    pub fn rebase(mut self, base: &Path) -> Self {
        if self.data_dir.is_relative() {
            self.data_dir = base.join(&self.data_dir);
        }
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
        self
    }

    /// SHA-256 of the canonical JSON of seed, datasets and grid, first 16 hex digits.
    /// Directories are left out so relocating the config keeps its hash.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&(self.seed, &self.datasets, &self.grid)).expect("config serializes");
        Sha256::digest(canonical.as_bytes()).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub format: String,
    pub n: u32,
    pub param: u32,
    pub accuracy: f64,
    pub baseline: f64,
    /// Percentage points lost against the baseline.
    pub degradation: f64,
}

pub const BASELINE_FORMAT: &str = "real";
pub const CSV_HEADER: &str = "dataset,format,n,param,accuracy,baseline,degradation";

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub seed: u64,
    pub config_hash: String,
    pub rows: Vec<ResultRow>,
}

/// Test accuracy of a quantized model.
pub fn evaluate(model: &NetworkModel, ds: &Dataset, idx: &[usize]) -> Result<f64, NetworkError> {
    if idx.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for &i in idx {
        let x = quantize_input(&ds.features[i], model.spec);
        if classify(model, &x)? == ds.labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / idx.len() as f64)
}

/// Loads and splits a dataset, then trains its reference model.
pub fn prepare(entry: &DatasetEntry, cfg: &ExperimentConfig) -> Result<(Dataset, FloatModel), ExperimentError> {
    let ds = load_preset(&entry.preset, &cfg.data_dir, cfg.seed)?;
    let (xs, ys) = ds.rows(&ds.train);
    let model = train(&xs, &ys, ds.num_classes(), &entry.train.with_seed(cfg.seed))?;
    Ok((ds, model))
}

fn degradation(baseline: f64, accuracy: f64) -> f64 {
    ((baseline - accuracy) * 1000.0).round() / 10.0
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepReport, ExperimentError> {
    let prepared: Vec<(Dataset, FloatModel)> =
        cfg.datasets.par_iter().map(|e| prepare(e, cfg)).collect::<Result<_, _>>()?;
    let formats = cfg.grid.formats();
    let cells: Vec<(usize, FormatSpec)> =
        (0..prepared.len()).flat_map(|d| formats.iter().map(move |&f| (d, f))).collect();
    let accuracies: Vec<f64> = cells
        .par_iter()
        .map(|&(d, spec)| {
            let (ds, model) = &prepared[d];
            evaluate(&quantize(model, spec), ds, &ds.test)
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    for (d, (ds, model)) in prepared.iter().enumerate() {
        let (xs, ys) = ds.rows(&ds.test);
        let baseline = model.accuracy(&xs, &ys);
        rows.push(ResultRow {
            dataset: ds.name.clone(),
            format: BASELINE_FORMAT.into(),
            n: 64,
            param: 0,
            accuracy: baseline,
            baseline,
            degradation: 0.0,
        });
        for ((cd, spec), &acc) in cells.iter().zip(&accuracies) {
            if *cd != d {
                continue;
            }
            rows.push(ResultRow {
                dataset: ds.name.clone(),
                format: spec.tag(),
                n: spec.n(),
                param: spec.param(),
                accuracy: acc,
                baseline,
                degradation: degradation(baseline, acc),
            });
        }
    }
    Ok(SweepReport { seed: cfg.seed, config_hash: cfg.hash(), rows })
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{:.4},{:.4},{:.1}",
                r.dataset, r.format, r.n, r.param, r.accuracy, r.baseline, r.degradation
            )
            .unwrap();
        }
        out
    }

    pub fn datasets(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.dataset) {
                seen.push(r.dataset.clone());
            }
        }
        seen
    }

    pub fn baseline(&self, dataset: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.dataset == dataset).map(|r| r.baseline)
    }

    /// Best row of one kind at width `n`; earlier grid entries win ties.
    pub fn best(&self, dataset: &str, kind: FormatKind, n: u32) -> Option<&ResultRow> {
        self.rows
            .iter()
            .filter(|r| r.dataset == dataset && r.n == n && kind_of(r) == Some(kind))
            .fold(None, |best: Option<&ResultRow>, r| match best {
                Some(b) if b.accuracy >= r.accuracy => Some(b),
                _ => Some(r),
            })
    }

    /// Degradation of the best configuration of `kind` at width `n`, averaged over datasets.
    pub fn mean_best_degradation(&self, kind: FormatKind, n: u32) -> Option<f64> {
        let vals: Vec<f64> =
            self.datasets().iter().filter_map(|d| self.best(d, kind, n)).map(|r| r.degradation).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Per-dataset best-of-format table and average degradation per width.
    pub fn render(&self) -> String {
        let kinds = [FormatKind::Posit, FormatKind::Float, FormatKind::Fixed];
        let mut widths: Vec<u32> = self.rows.iter().filter(|r| kind_of(r).is_some()).map(|r| r.n).collect();
        widths.sort_unstable_by(|a, b| b.cmp(a));
        widths.dedup();

        let mut out = String::new();
        writeln!(out, "seed: {}  config: {}", self.seed, self.config_hash).unwrap();
        writeln!(out).unwrap();
        let cell = |r: Option<&ResultRow>| {
            r.map_or("-".to_string(), |r| format!("{:.1}% ({})", 100.0 * r.accuracy, r.format))
        };
        for d in self.datasets() {
            writeln!(out, "{d}: baseline {:.1}%", 100.0 * self.baseline(&d).unwrap_or(0.0)).unwrap();
            writeln!(out, "  {:>3}  {:<24}{:<24}{:<24}", "n", "posit", "float", "fixed").unwrap();
            for &n in &widths {
                let cols: Vec<String> = kinds.iter().map(|&k| cell(self.best(&d, k, n))).collect();
                writeln!(out, "  {:>3}  {:<24}{:<24}{:<24}", n, cols[0], cols[1], cols[2]).unwrap();
            }
            writeln!(out).unwrap();
        }
        writeln!(out, "average degradation of best configuration (percentage points)").unwrap();
        writeln!(out, "  {:>3}  {:>8}{:>8}{:>8}", "n", "posit", "float", "fixed").unwrap();
        for &n in &widths {
            let cols: Vec<String> = kinds
                .iter()
                .map(|&k| self.mean_best_degradation(k, n).map_or("-".into(), |v| format!("{v:.1}")))
                .collect();
            writeln!(out, "  {:>3}  {:>8}{:>8}{:>8}", n, cols[0], cols[1], cols[2]).unwrap();
        }
        out
    }

    /// Writes `report.csv` and `report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf), ExperimentError> {
        let io = |path: &Path, source| ExperimentError::Io { path: path.display().to_string(), source };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let csv = dir.join("report.csv");
        let txt = dir.join("report.txt");
        std::fs::write(&csv, self.to_csv()).map_err(|e| io(&csv, e))?;
        std::fs::write(&txt, self.render()).map_err(|e| io(&txt, e))?;
        Ok((csv, txt))
    }
}

fn kind_of(r: &ResultRow) -> Option<FormatKind> {
    r.format.parse::<FormatSpec>().ok().map(|s| s.kind())
}

/// Table of extrema and dynamic range per format.
pub fn dynamic_range_table(specs: &[FormatSpec]) -> String {
    let mut out = format!("{:<12}{:>14}{:>14}{:>10}\n", "format", "max", "min", "log10");
    for &s in specs {
        let (max, min) = format_extrema(s);
        writeln!(out, "{:<12}{:>14}{:>14}{:>10.3}", s.tag(), sci(max.to_f64()), sci(min.to_f64()), dynamic_range(s))
            .unwrap();
    }
    out
}

fn sci(v: f64) -> String {
    if (1e-3..1e5).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:.4e}")
    }
}
