//! Synthetic benchmark datasets: the shifted-relu regression task and the
//! concentric-ellipse ("onion slice") four-class task.
//!
//! Both generators draw inputs uniformly from `[-1, 1]^d` and are fully
//! determined by their seed. Input draws and target noise / label flips
//! live on separate RNG streams, so the same seed yields identical inputs
//! regardless of the noise settings.
//!
//! Datasets persist as CSV (`x1..xd` then `y` or `label`) plus a JSON
//! sidecar carrying the generator parameters, the seed, and — for a split
//! part — the split fraction and seed, so every file is self-describing.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Noiseless shifted-relu target `max(0, x + shift)`.
pub fn shifted_relu_target(x: f64, shift: f64) -> f64 {
    (x + shift).max(0.0)
}

/// Elliptical radius `0.5 (x1 - 0.3)^2 + 1.2 (x2 + 0.5)^2` whose level
/// sets define the onion classes.
pub fn onion_value(x1: f64, x2: f64) -> f64 {
    0.5 * (x1 - 0.3) * (x1 - 0.3) + 1.2 * (x2 + 0.5) * (x2 + 0.5)
}

/// Radius thresholds separating the four onion classes.
pub const ONION_BOUNDARIES: [f64; 3] = [0.2, 0.5, 0.7];

/// Number of onion classes.
pub const ONION_CLASSES: usize = 4;

/// Bins a radius against [`ONION_BOUNDARIES`]; each bin is half-open with
/// the boundary belonging to the class above it (`0.2 -> class 1`).
pub fn onion_class(value: f64) -> usize {
    ONION_BOUNDARIES.iter().filter(|&&b| value >= b).count()
}

/// Targets of a dataset: a real matrix for regression, labels for
/// classification.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// `k x N` matrix of target values.
    Regression(Array2<f64>),
    /// Per-sample class labels in `0..num_classes`.
    Classification {
        labels: Vec<usize>,
        num_classes: usize,
    },
}

/// Generator parameters, stored verbatim in the sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum GeneratorSpec {
    ShiftedRelu {
        n: usize,
        shift: f64,
        noise_sd: f64,
        seed: u64,
    },
    Onion {
        n: usize,
        flip_prob: f64,
        seed: u64,
    },
}

impl GeneratorSpec {
    fn is_classification(&self) -> bool {
        matches!(self, GeneratorSpec::Onion { .. })
    }
}

/// Which side of a split a persisted dataset came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPart {
    Train,
    Test,
}

/// Split parameters recorded alongside a split part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub test_fraction: f64,
    pub seed: u64,
    pub part: SplitPart,
}

/// Everything needed to regenerate a dataset: generator parameters plus
/// the split applied to it, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetProvenance {
    #[serde(flatten)]
    pub generator: GeneratorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitRecord>,
}

/// A design matrix with targets and the record of how it was made.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `d x N`, one sample per column, entries in `[-1, 1]`.
    pub inputs: Array2<f64>,
    pub targets: Targets,
    pub provenance: DatasetProvenance,
}

impl Dataset {
    /// Number of samples.
    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.nrows()
    }

    /// Rows a network must output to fit this dataset: the target rows
    /// for regression, the class count for classification.
    pub fn target_dim(&self) -> usize {
        match &self.targets {
            Targets::Regression(y) => y.nrows(),
            Targets::Classification { num_classes, .. } => *num_classes,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self.targets, Targets::Classification { .. })
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Regression(_) => None,
            Targets::Classification { labels, .. } => Some(labels),
        }
    }

    /// Targets as a `k x N` matrix; classification labels become one-hot
    /// columns.
    pub fn targets_matrix(&self) -> Array2<f64> {
        match &self.targets {
            Targets::Regression(y) => y.clone(),
            Targets::Classification {
                labels,
                num_classes,
            } => {
                let mut y = Array2::zeros((*num_classes, labels.len()));
                for (i, &c) in labels.iter().enumerate() {
                    y[[c, i]] = 1.0;
                }
                y
            }
        }
    }

    /// Gathers the given sample columns into an input batch and a target
    /// batch (one-hot for classification) — the minibatch primitive.
    pub fn gather(&self, indices: &[usize]) -> (Array2<f64>, Array2<f64>) {
        let d = self.input_dim();
        let k = self.target_dim();
        let mut x = Array2::zeros((d, indices.len()));
        let mut y = Array2::zeros((k, indices.len()));
        for (out_col, &i) in indices.iter().enumerate() {
            x.column_mut(out_col).assign(&self.inputs.column(i));
            match &self.targets {
                Targets::Regression(t) => y.column_mut(out_col).assign(&t.column(i)),
                Targets::Classification { labels, .. } => y[[labels[i], out_col]] = 1.0,
            }
        }
        (x, y)
    }

    /// Copies the given sample columns into a new dataset with the same
    /// provenance.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut inputs = Array2::zeros((self.input_dim(), indices.len()));
        for (out_col, &i) in indices.iter().enumerate() {
            inputs.column_mut(out_col).assign(&self.inputs.column(i));
        }
        let targets = match &self.targets {
            Targets::Regression(y) => {
                let mut t = Array2::zeros((y.nrows(), indices.len()));
                for (out_col, &i) in indices.iter().enumerate() {
                    t.column_mut(out_col).assign(&y.column(i));
                }
                Targets::Regression(t)
            }
            Targets::Classification {
                labels,
                num_classes,
            } => Targets::Classification {
                labels: indices.iter().map(|&i| labels[i]).collect(),
                num_classes: *num_classes,
            },
        };
        Dataset {
            inputs,
            targets,
            provenance: self.provenance.clone(),
        }
    }

    /// Writes the samples to `path` as CSV and the provenance to
    /// `path.json` next to it.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let d = self.input_dim();
        let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
        match &self.targets {
            Targets::Regression(y) => {
                if y.nrows() == 1 {
                    header.push("y".to_string());
                } else {
                    header.extend((1..=y.nrows()).map(|j| format!("y{j}")));
                }
            }
            Targets::Classification { .. } => header.push("label".to_string()),
        }
        writer.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> =
                self.inputs.column(i).iter().map(|v| v.to_string()).collect();
            match &self.targets {
                Targets::Regression(y) => {
                    row.extend(y.column(i).iter().map(|v| v.to_string()));
                }
                Targets::Classification { labels, .. } => row.push(labels[i].to_string()),
            }
            writer.write_record(&row)?;
        }
        writer.flush().map_err(std::io::Error::from)?;
        let json = serde_json::to_string_pretty(&self.provenance)?;
        std::fs::write(sidecar_path(path), json)?;
        Ok(())
    }

    /// Reads a dataset written by [`Dataset::save_csv`]; the sidecar is
    /// required (it decides regression vs classification and carries the
    /// provenance).
    pub fn load_csv(path: &Path) -> Result<Dataset> {
        let sidecar = sidecar_path(path);
        let json = std::fs::read_to_string(&sidecar).map_err(|e| {
            Error::config(format!(
                "missing dataset sidecar {}: {e}",
                sidecar.display()
            ))
        })?;
        let provenance: DatasetProvenance = serde_json::from_str(&json)?;
        let classification = provenance.generator.is_classification();

        let mut reader = csv::Reader::from_path(path)?;
        let header = reader.headers()?.clone();
        let d = header.iter().filter(|h| h.starts_with('x')).count();
        let target_cols = header.len() - d;
        if d == 0 || target_cols == 0 {
            return Err(Error::config(format!(
                "malformed dataset header in {}",
                path.display()
            )));
        }
        let mut columns: Vec<Vec<f64>> = Vec::new();
        let mut labels: Vec<usize> = Vec::new();
        let mut values: Vec<Vec<f64>> = Vec::new();
        for record in reader.records() {
            let record = record?;
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::config(format!("bad number {s:?} in CSV: {e}")))
            };
            let mut col = Vec::with_capacity(d);
            for j in 0..d {
                col.push(parse(&record[j])?);
            }
            columns.push(col);
            if classification {
                labels.push(record[d].parse::<usize>().map_err(|e| {
                    Error::config(format!("bad label {:?} in CSV: {e}", &record[d]))
                })?);
            } else {
                let mut row = Vec::with_capacity(target_cols);
                for j in d..header.len() {
                    row.push(parse(&record[j])?);
                }
                values.push(row);
            }
        }
        let n = columns.len();
        let mut inputs = Array2::zeros((d, n));
        for (i, col) in columns.iter().enumerate() {
            for (j, &v) in col.iter().enumerate() {
                inputs[[j, i]] = v;
            }
        }
        let targets = if classification {
            Targets::Classification {
                labels,
                num_classes: ONION_CLASSES,
            }
        } else {
            let mut y = Array2::zeros((target_cols, n));
            for (i, row) in values.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    y[[j, i]] = v;
                }
            }
            Targets::Regression(y)
        };
        Ok(Dataset {
            inputs,
            targets,
            provenance,
        })
    }
}

/// Sidecar lives next to the CSV with `.json` appended to the full name.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.as_os_str().to_os_string();
    name.push(".json");
    PathBuf::from(name)
}

fn input_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

fn noise_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Scalar regression task `y = max(0, x + shift) + noise`, inputs uniform
/// on `[-1, 1]`, independent Gaussian noise on every target (train and
/// test alike).
pub fn gen_shifted_relu(n: usize, shift: f64, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::config("dataset size must be at least 1"));
    }
    if noise_sd < 0.0 {
        return Err(Error::config(format!(
            "noise standard deviation must be nonnegative, got {noise_sd}"
        )));
    }
    let mut xs = input_rng(seed);
    let mut ns = noise_rng(seed);
    let mut inputs = Array2::zeros((1, n));
    let mut targets = Array2::zeros((1, n));
    for i in 0..n {
        let x = xs.random::<f64>() * 2.0 - 1.0;
        let noise: f64 = ns.sample(StandardNormal);
        inputs[[0, i]] = x;
        targets[[0, i]] = shifted_relu_target(x, shift) + noise_sd * noise;
    }
    Ok(Dataset {
        inputs,
        targets: Targets::Regression(targets),
        provenance: DatasetProvenance {
            generator: GeneratorSpec::ShiftedRelu {
                n,
                shift,
                noise_sd,
                seed,
            },
            split: None,
        },
    })
}

/// Four-class task on `[-1, 1]^2`: the class is the elliptical shell the
/// point falls in; with probability `flip_prob` the label jumps to a
/// uniformly chosen neighboring class (the edge classes have a single
/// neighbor).
pub fn gen_onion(n: usize, flip_prob: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::config("dataset size must be at least 1"));
    }
    if !(0.0..=1.0).contains(&flip_prob) {
        return Err(Error::config(format!(
            "flip probability must lie in [0, 1], got {flip_prob}"
        )));
    }
    let mut xs = input_rng(seed);
    let mut fs = noise_rng(seed);
    let mut inputs = Array2::zeros((2, n));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let x1 = xs.random::<f64>() * 2.0 - 1.0;
        let x2 = xs.random::<f64>() * 2.0 - 1.0;
        inputs[[0, i]] = x1;
        inputs[[1, i]] = x2;
        let mut class = onion_class(onion_value(x1, x2));
        if fs.random::<f64>() < flip_prob {
            class = if class == 0 {
                1
            } else if class == ONION_CLASSES - 1 {
                ONION_CLASSES - 2
            } else if fs.random::<bool>() {
                class + 1
            } else {
                class - 1
            };
        }
        labels.push(class);
    }
    Ok(Dataset {
        inputs,
        targets: Targets::Classification {
            labels,
            num_classes: ONION_CLASSES,
        },
        provenance: DatasetProvenance {
            generator: GeneratorSpec::Onion { n, flip_prob, seed },
            split: None,
        },
    })
}

/// Disjoint uniform shuffle split; the test side gets
/// `round(N * test_fraction)` samples. Both parts keep the generator
/// provenance and record the split they came from.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&test_fraction) || test_fraction <= 0.0 {
        return Err(Error::config(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = ds.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::config(format!(
            "degenerate split: {n} samples at test fraction {test_fraction} \
             leave {n_test} test samples"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let mut test_idx = indices[..n_test].to_vec();
    let mut train_idx = indices[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    let mut train = ds.subset(&train_idx);
    let mut test = ds.subset(&test_idx);
    train.provenance.split = Some(SplitRecord {
        test_fraction,
        seed,
        part: SplitPart::Train,
    });
    test.provenance.split = Some(SplitRecord {
        test_fraction,
        seed,
        part: SplitPart::Test,
    });
    Ok((train, test))
}
