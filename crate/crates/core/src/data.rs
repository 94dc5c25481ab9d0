//! CSV ingestion, encoding, normalization and deterministic splitting.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: line {line}, column `{column}`: {message}")]
    Schema { path: String, line: usize, column: String, message: String },
    #[error("{0}")]
    InvalidSplit(String),
    #[error("unknown dataset preset `{0}` (known: iris, wdbc, mushroom, wbc-original)")]
    UnknownPreset(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingPolicy {
    /// Drop every row containing the marker.
    #[default]
    DropRows,
    /// Drop every column containing the marker.
    DropColumn,
}

fn default_marker() -> String {
    "?".into()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub label: String,
    /// Columns one-hot encoded instead of parsed as numbers.
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Treat every feature column as categorical.
    #[serde(default)]
    pub all_categorical: bool,
    #[serde(default)]
    pub drop: Vec<String>,
    #[serde(default = "default_marker")]
    pub missing_marker: String,
    #[serde(default)]
    pub missing: MissingPolicy,
}

impl Schema {
    pub fn numeric(label: &str) -> Self {
        Schema {
            label: label.into(),
            categorical: vec![],
            all_categorical: false,
            drop: vec![],
            missing_marker: default_marker(),
            missing: MissingPolicy::DropRows,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Rescales each feature column to [0, 1]; constant columns become 0.
    pub fn normalize(&mut self) {
        for j in 0..self.num_features() {
            let (lo, hi) = self
                .features
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[j]), hi.max(r[j])));
            for row in &mut self.features {
                row[j] = if hi > lo { (row[j] - lo) / (hi - lo) } else { 0.0 };
            }
        }
    }

    /// Subset of rows as `(features, labels)`.
    pub fn rows(&self, idx: &[usize]) -> (Vec<Vec<f64>>, Vec<usize>) {
        (idx.iter().map(|&i| self.features[i].clone()).collect(), idx.iter().map(|&i| self.labels[i]).collect())
    }
}

/// Reads a comma-separated file with a header row and applies `schema`.
pub fn load_csv(path: &Path, name: &str, schema: &Schema) -> Result<Dataset, DataError> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io { path: p.clone(), source })?;
    parse_csv(&text, &p, name, schema)
}

pub fn parse_csv(text: &str, origin: &str, name: &str, schema: &Schema) -> Result<Dataset, DataError> {
    let err = |line: usize, column: &str, message: String| DataError::Schema {
        path: origin.into(),
        line,
        column: column.into(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| err(1, "", e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let col = |c: &str| header.iter().position(|h| h == c).ok_or_else(|| err(1, c, "no such column".into()));
    let label_col = col(&schema.label)?;
    let mut dropped: BTreeSet<usize> = schema.drop.iter().map(|c| col(c)).collect::<Result<_, _>>()?;
    let categorical: BTreeSet<usize> = schema.categorical.iter().map(|c| col(c)).collect::<Result<_, _>>()?;

    let mut records: Vec<(usize, Vec<String>)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| err(line, "", e.to_string()))?;
        if rec.len() != header.len() {
            return Err(err(line, "", format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        records.push((line, rec.iter().map(str::to_string).collect()));
    }

    let marker = schema.missing_marker.as_str();
    match schema.missing {
        MissingPolicy::DropColumn => {
            for (_, rec) in &records {
                for (j, v) in rec.iter().enumerate() {
                    if v == marker && j != label_col {
                        dropped.insert(j);
                    }
                }
            }
        }
        MissingPolicy::DropRows => {
            records.retain(|(_, rec)| !rec.iter().enumerate().any(|(j, v)| v == marker && !dropped.contains(&j)));
        }
    }
    if let Some((line, _)) = records.iter().find(|(_, r)| r[label_col] == marker) {
        return Err(err(*line, &schema.label, "missing label".into()));
    }

    let class_names: Vec<String> =
        records.iter().map(|(_, r)| r[label_col].clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let labels = records.iter().map(|(_, r)| class_names.binary_search(&r[label_col]).unwrap()).collect();

    // per source column: None for numeric, Some(levels) for one-hot
    let feature_cols: Vec<usize> = (0..header.len()).filter(|j| *j != label_col && !dropped.contains(j)).collect();
    let mut encodings: Vec<Option<Vec<String>>> = Vec::new();
    let mut feature_names = Vec::new();
    for &j in &feature_cols {
        if schema.all_categorical || categorical.contains(&j) {
            let levels: Vec<String> =
                records.iter().map(|(_, r)| r[j].clone()).collect::<BTreeSet<_>>().into_iter().collect();
            feature_names.extend(levels.iter().map(|l| format!("{}={l}", header[j])));
            encodings.push(Some(levels));
        } else {
            feature_names.push(header[j].clone());
            encodings.push(None);
        }
    }

    let mut features = Vec::with_capacity(records.len());
    for (line, rec) in &records {
        let mut row = Vec::with_capacity(feature_names.len());
        for (&j, enc) in feature_cols.iter().zip(&encodings) {
            match enc {
                Some(levels) => row.extend(levels.iter().map(|l| if *l == rec[j] { 1.0 } else { 0.0 })),
                None => {
                    let v: f64 = rec[j]
                        .parse()
                        .map_err(|_| err(*line, &header[j], format!("`{}` is not a number", rec[j])))?;
                    if !v.is_finite() {
                        return Err(err(*line, &header[j], "non-finite value".into()));
                    }
                    row.push(v);
                }
            }
        }
        features.push(row);
    }

    let n = records.len();
    Ok(Dataset {
        name: name.into(),
        features,
        labels,
        feature_names,
        class_names,
        train: (0..n).collect(),
        test: vec![],
    })
}

/// Seeded shuffle; the first `test_size` shuffled rows form the test set.
pub fn split(mut dataset: Dataset, test_size: usize, seed: u64) -> Result<Dataset, DataError> {
    let n = dataset.len();
    if test_size > 0 && test_size >= n {
        return Err(DataError::InvalidSplit(format!("test size {test_size} leaves no training rows out of {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = idx[..test_size].to_vec();
    let mut train = idx[test_size..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    dataset.train = train;
    dataset.test = test;
    Ok(dataset)
}

/// Built-in dataset description: file name under the data directory, schema and
/// canonical test-set size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub file: String,
    pub schema: Schema,
    pub test_size: usize,
}

pub fn preset(name: &str) -> Result<Preset, DataError> {
    let p = |file: &str, schema: Schema, test_size| Preset { name: name.into(), file: file.into(), schema, test_size };
    Ok(match name {
        "iris" => p("iris.csv", Schema::numeric("class"), 50),
        "wdbc" | "breast-cancer" => p("wdbc.csv", Schema::numeric("diagnosis"), 190),
        "mushroom" => p(
            "mushroom.csv",
            Schema { all_categorical: true, missing: MissingPolicy::DropColumn, ..Schema::numeric("class") },
            2708,
        ),
        "wbc-original" => p(
            "breast_cancer_wisconsin.csv",
            Schema { drop: vec!["id".into()], ..Schema::numeric("class") },
            190,
        ),
        other => return Err(DataError::UnknownPreset(other.into())),
    })
}

/// Loads, normalizes and splits a preset from `data_dir`.
pub fn load_preset(name: &str, data_dir: &Path, seed: u64) -> Result<Dataset, DataError> {
    let pr = preset(name)?;
    let mut ds = load_csv(&data_dir.join(&pr.file), &pr.name, &pr.schema)?;
    ds.normalize();
    split(ds, pr.test_size, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "a,b,color,label\n1,2,red,x\n3,?,blue,y\n5,6,red,x\n";

    #[test]
    fn parses_and_encodes() {
        let s = Schema { categorical: vec!["color".into()], ..Schema::numeric("label") };
        let ds = parse_csv(TOY, "toy", "toy", &s).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.feature_names, ["a", "b", "color=red"]);
        assert_eq!(ds.features[1], vec![5.0, 6.0, 1.0]);
        assert_eq!(ds.class_names, ["x"]);
    }

    #[test]
    fn drop_column_policy() {
        let s = Schema { categorical: vec!["color".into()], missing: MissingPolicy::DropColumn, ..Schema::numeric("label") };
        let ds = parse_csv(TOY, "toy", "toy", &s).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.feature_names, ["a", "color=blue", "color=red"]);
        assert_eq!(ds.labels, [0, 1, 0]);
    }

    #[test]
    fn reports_row_and_column() {
        let bad = "a,label\n1,x\n2\n";
        let e = parse_csv(bad, "f.csv", "t", &Schema::numeric("label")).unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        let bad = "a,label\n1,x\nzz,y\n";
        let e = parse_csv(bad, "f.csv", "t", &Schema::numeric("label")).unwrap_err();
        assert!(matches!(e, DataError::Schema { line: 3, ref column, .. } if column == "a"), "{e}");
        let e = parse_csv(bad, "f.csv", "t", &Schema::numeric("nope")).unwrap_err();
        assert!(e.to_string().contains("nope"));
    }

    #[test]
    fn normalization_bounds() {
        let text = "a,b,label\n1,7,x\n3,7,y\n2,7,x\n";
        let mut ds = parse_csv(text, "t", "t", &Schema::numeric("label")).unwrap();
        ds.normalize();
        assert_eq!(ds.features, vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 0.0]]);
    }

    #[test]
    fn splits_deterministically() {
        let text: String = std::iter::once("a,label\n".to_string())
            .chain((0..20).map(|i| format!("{i},{}\n", i % 2)))
            .collect();
        let ds = parse_csv(&text, "t", "t", &Schema::numeric("label")).unwrap();
        let a = split(ds.clone(), 5, 3).unwrap();
        let b = split(ds.clone(), 5, 3).unwrap();
        assert_eq!((a.train.len(), a.test.len()), (15, 5));
        assert_eq!(a.test, b.test);
        assert!(a.test.iter().all(|i| !a.train.contains(i)));
        let all = split(ds.clone(), 0, 3).unwrap();
        assert_eq!((all.train.len(), all.test.len()), (20, 0));
        assert!(split(ds, 20, 0).is_err());
    }
}
