//! Filling in missing anthropometric parameters from a complete training
//! matrix: chained-equation imputation plus mean and nearest-neighbour
//! baselines, and a benchmark harness comparing them.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anthropometry::{ColumnStats, ParameterMatrix, ParameterVector, PARAM_COUNT, SCHEMA};
use crate::error::{Error, Result};
use crate::regression::lstsq_min_norm;

pub const MIN_IMPUTE_ROWS: usize = 20;
/// Imputed values are clamped to the training range widened by this share
/// of the range on each side.
pub const RANGE_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImputeMethod {
    Mice,
    Mean,
    Knn,
}

impl ImputeMethod {
    pub const ALL: [ImputeMethod; 3] = [ImputeMethod::Mice, ImputeMethod::Mean, ImputeMethod::Knn];

    pub fn name(self) -> &'static str {
        match self {
            ImputeMethod::Mice => "mice",
            ImputeMethod::Mean => "mean",
            ImputeMethod::Knn => "knn",
        }
    }
}

impl std::str::FromStr for ImputeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mice" => Ok(ImputeMethod::Mice),
            "mean" => Ok(ImputeMethod::Mean),
            "knn" => Ok(ImputeMethod::Knn),
            other => Err(Error::InvalidConfig(format!(
                "unknown imputation method {other:?}; valid: mice, mean, knn"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImputerConfig {
    pub method: ImputeMethod,
    pub sweeps: usize,
    pub chains: usize,
    pub neighbours: usize,
    pub seed: u64,
}

impl Default for ImputerConfig {
    fn default() -> Self {
        ImputerConfig {
            method: ImputeMethod::Mice,
            sweeps: 10,
            chains: 5,
            neighbours: 5,
            seed: 0,
        }
    }
}

impl ImputerConfig {
    pub fn with_method(method: ImputeMethod) -> Self {
        ImputerConfig {
            method,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.sweeps == 0 || self.chains == 0 || self.neighbours == 0 {
            return Err(Error::InvalidConfig(
                "sweeps, chains and neighbours must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Fully populated vector plus which entries were filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Imputation {
    pub values: ParameterVector,
    pub imputed: [bool; PARAM_COUNT],
}

pub fn impute(
    partial: &ParameterVector,
    data: &ParameterMatrix,
    config: &ImputerConfig,
) -> Result<ParameterVector> {
    Ok(impute_with_flags(partial, data, config)?.values)
}

pub fn impute_with_flags(
    partial: &ParameterVector,
    data: &ParameterMatrix,
    config: &ImputerConfig,
) -> Result<Imputation> {
    Imputer::new(data, config)?.impute(partial)
}

/// Training-side state, reusable across many imputations.
#[derive(Debug, Clone)]
pub struct Imputer<'a> {
    data: &'a ParameterMatrix,
    config: ImputerConfig,
    stats: ColumnStats,
    /// Per column: regression of that column on the other 18 over z-scored
    /// training data, computed lazily only for columns that go missing.
    regressions: std::sync::OnceLock<Vec<DVector<f64>>>,
}

impl<'a> Imputer<'a> {
    pub fn new(data: &'a ParameterMatrix, config: &ImputerConfig) -> Result<Self> {
        config.validate()?;
        if data.len() < MIN_IMPUTE_ROWS {
            return Err(Error::InsufficientData(format!(
                "imputation needs at least {MIN_IMPUTE_ROWS} training rows, got {}",
                data.len()
            )));
        }
        Ok(Imputer {
            data,
            config: *config,
            stats: data.stats(),
            regressions: std::sync::OnceLock::new(),
        })
    }

    pub fn impute(&self, partial: &ParameterVector) -> Result<Imputation> {
        if partial.present_count() == 0 {
            return Err(Error::InvalidParameter(
                "at least one parameter required".into(),
            ));
        }
        for i in 0..PARAM_COUNT {
            if let Some(v) = partial.get(i) {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("input {}", SCHEMA[i].key)));
                }
            }
        }
        let missing: Vec<usize> = (0..PARAM_COUNT).filter(|&i| !partial.present[i]).collect();
        let mut imputed = [false; PARAM_COUNT];
        for &j in &missing {
            imputed[j] = true;
        }
        if missing.is_empty() {
            return Ok(Imputation {
                values: *partial,
                imputed,
            });
        }
        let filled = match self.config.method {
            ImputeMethod::Mean => self.stats.mean,
            ImputeMethod::Mice => self.mice(partial, &missing),
            ImputeMethod::Knn => self.knn(partial),
        };
        let mut values = *partial;
        for &j in &missing {
            let v = self.clamp(j, filled[j]);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("imputed {}", SCHEMA[j].key)));
            }
            values.set(j, v);
        }
        Ok(Imputation { values, imputed })
    }

    fn clamp(&self, j: usize, v: f64) -> f64 {
        let (lo, hi) = (self.stats.min[j], self.stats.max[j]);
        let margin = RANGE_MARGIN * (hi - lo);
        v.clamp(lo - margin, hi + margin)
    }

    fn regressions(&self) -> &[DVector<f64>] {
        self.regressions.get_or_init(|| {
            let n = self.data.len();
            let z = DMatrix::from_fn(n, PARAM_COUNT, |i, j| self.stats.z(j, self.data.row(i)[j]));
            (0..PARAM_COUNT)
                .map(|target| {
                    // Columns: the other 18 z-scores, then a constant.
                    let a = DMatrix::from_fn(n, PARAM_COUNT, |i, c| {
                        if c == PARAM_COUNT - 1 {
                            1.0
                        } else {
                            z[(i, if c < target { c } else { c + 1 })]
                        }
                    });
                    let b = DVector::from_fn(n, |i, _| self.data.row(i)[target]);
                    lstsq_min_norm(&a, &b)
                })
                .collect()
        })
    }

    fn predict_column(&self, target: usize, current: &[f64; PARAM_COUNT]) -> f64 {
        let w = &self.regressions()[target];
        let mut acc = w[PARAM_COUNT - 1];
        for c in 0..PARAM_COUNT - 1 {
            let j = if c < target { c } else { c + 1 };
            acc += w[c] * self.stats.z(j, current[j]);
        }
        acc
    }

    /// Chain 0 visits missing columns in schema order; later chains use a
    /// seeded shuffle. The result averages the chains.
    fn mice(&self, partial: &ParameterVector, missing: &[usize]) -> [f64; PARAM_COUNT] {
        let mut total = [0.0; PARAM_COUNT];
        for chain in 0..self.config.chains {
            let mut order = missing.to_vec();
            if chain > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
                rng.set_stream(chain as u64);
                order.shuffle(&mut rng);
            }
            let mut current = partial.values;
            for &j in missing {
                current[j] = self.stats.mean[j];
            }
            for _ in 0..self.config.sweeps {
                for &j in &order {
                    current[j] = self.predict_column(j, &current);
                }
            }
            for &j in missing {
                total[j] += current[j];
            }
        }
        total.map(|t| t / self.config.chains as f64)
    }

    /// Average of the k training rows nearest in z-scored distance over the
    /// present columns; ties go to the earlier row.
    fn knn(&self, partial: &ParameterVector) -> [f64; PARAM_COUNT] {
        let present: Vec<usize> = (0..PARAM_COUNT).filter(|&i| partial.present[i]).collect();
        let mut dist: Vec<(f64, usize)> = self
            .data
            .rows()
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let d: f64 = present
                    .iter()
                    .map(|&j| (self.stats.z(j, row[j]) - self.stats.z(j, partial.values[j])).powi(2))
                    .sum();
                (d, r)
            })
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let k = self.config.neighbours.min(dist.len());
        let mut out = [0.0; PARAM_COUNT];
        for &(_, r) in &dist[..k] {
            for (o, v) in out.iter_mut().zip(self.data.row(r)) {
                *o += v / k as f64;
            }
        }
        out
    }
}

/// A fixed missingness scenario: only the listed schema ids are observed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingPattern {
    pub name: String,
    pub present: Vec<u8>,
}

impl MissingPattern {
    pub fn new(name: &str, present: &[u8]) -> Result<Self> {
        if present.is_empty() || present.iter().any(|&id| !(1..=PARAM_COUNT as u8).contains(&id)) {
            return Err(Error::InvalidConfig(format!(
                "pattern {name:?} must list schema ids in 1..=19"
            )));
        }
        Ok(MissingPattern {
            name: name.into(),
            present: present.to_vec(),
        })
    }

    /// Five fixed scenarios, from sparsest to richest input.
    pub fn defaults() -> Vec<MissingPattern> {
        [
            ("height+weight", &[2u8, 1][..]),
            ("height+weight+chest", &[2, 1, 4]),
            ("height+weight+girths", &[2, 1, 4, 5, 6]),
            ("lengths only", &[2, 7, 8, 10, 13, 14, 17]),
            ("circumferences only", &[3, 4, 5, 6, 11, 12, 15, 16, 18, 19]),
        ]
        .into_iter()
        .map(|(n, p)| MissingPattern::new(n, p).expect("valid default pattern"))
        .collect()
    }
}

/// Per-parameter RMSE of one method under one scenario. Entries with no
/// masked cells report 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: ImputeMethod,
    pub rmse: [f64; PARAM_COUNT],
    pub masked: [usize; PARAM_COUNT],
}

impl MethodScore {
    /// RMSE pooled over every masked cell, each column in its own unit
    /// weighted equally after division by the training std.
    pub fn pooled_standardized(&self, stats: &ColumnStats) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for j in 0..PARAM_COUNT {
            if self.masked[j] > 0 && stats.std[j] > 0.0 {
                sum += (self.rmse[j] / stats.std[j]).powi(2) * self.masked[j] as f64;
                count += self.masked[j];
            }
        }
        if count == 0 {
            0.0
        } else {
            (sum / count as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub scores: Vec<MethodScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub train_rows: usize,
    pub test_rows: usize,
    pub scenarios: Vec<ScenarioReport>,
}

impl BenchmarkReport {
    pub fn score(&self, scenario: &str, method: ImputeMethod) -> Option<&MethodScore> {
        self.scenarios
            .iter()
            .find(|s| s.scenario == scenario)?
            .scores
            .iter()
            .find(|m| m.method == method)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        for s in &self.scenarios {
            let _ = writeln!(out, "### {}\n", s.scenario);
            let _ = write!(out, "| parameter |");
            for m in &s.scores {
                let _ = write!(out, " {} |", m.method.name());
            }
            let _ = write!(out, "\n|---|");
            for _ in &s.scores {
                let _ = write!(out, "---:|");
            }
            out.push('\n');
            for (j, d) in SCHEMA.iter().enumerate() {
                if s.scores.iter().all(|m| m.masked[j] == 0) {
                    continue;
                }
                let _ = write!(out, "| {} |", d.name);
                for m in &s.scores {
                    let _ = write!(out, " {:.3} |", m.rmse[j]);
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }
}

/// Name of the completely-at-random scenario in benchmark reports.
pub const MCAR_SCENARIO: &str = "mcar";

/// Seeded 80/20 row split; the 80% trains every method, the 20% is masked
/// completely at random at `missing_rate` (each row keeps at least one
/// value) and under each fixed pattern.
pub fn benchmark_imputers(
    data: &ParameterMatrix,
    missing_rate: f64,
    patterns: &[MissingPattern],
    seed: u64,
) -> Result<BenchmarkReport> {
    if !(0.0..1.0).contains(&missing_rate) {
        return Err(Error::InvalidConfig(format!(
            "missing rate {missing_rate} not in [0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_test = (data.len() / 5).max(1);
    let (test_idx, train_idx) = order.split_at(n_test);
    let mut train_idx = train_idx.to_vec();
    train_idx.sort_unstable();
    let train = data.select_rows(&train_idx);
    let test: Vec<[f64; PARAM_COUNT]> = test_idx.iter().map(|&i| *data.row(i)).collect();

    let mut scenarios: Vec<(String, Vec<ParameterVector>)> = Vec::new();
    let mcar = test
        .iter()
        .map(|row| {
            let mut p = ParameterVector::complete(*row);
            for j in 0..PARAM_COUNT {
                if rng.random::<f64>() < missing_rate {
                    p.clear(j);
                }
            }
            if p.present_count() == 0 {
                let keep = rng.random_range(0..PARAM_COUNT);
                p.set(keep, row[keep]);
            }
            p
        })
        .collect();
    scenarios.push((MCAR_SCENARIO.into(), mcar));
    for pat in patterns {
        let inputs = test
            .iter()
            .map(|row| {
                let mut p = ParameterVector::empty();
                for &id in &pat.present {
                    let j = id as usize - 1;
                    p.set(j, row[j]);
                }
                p
            })
            .collect();
        scenarios.push((pat.name.clone(), inputs));
    }

    let mut reports = Vec::new();
    for (name, inputs) in scenarios {
        let mut scores = Vec::new();
        for method in ImputeMethod::ALL {
            let config = ImputerConfig {
                seed,
                ..ImputerConfig::with_method(method)
            };
            let imputer = Imputer::new(&train, &config)?;
            let mut sq = [0.0; PARAM_COUNT];
            let mut masked = [0usize; PARAM_COUNT];
            for (input, truth) in inputs.iter().zip(&test) {
                let out = imputer.impute(input)?;
                for j in 0..PARAM_COUNT {
                    if out.imputed[j] {
                        sq[j] += (out.values.values[j] - truth[j]).powi(2);
                        masked[j] += 1;
                    }
                }
            }
            let rmse = std::array::from_fn(|j| {
                if masked[j] == 0 {
                    0.0
                } else {
                    (sq[j] / masked[j] as f64).sqrt()
                }
            });
            scores.push(MethodScore {
                method,
                rmse,
                masked,
            });
        }
        reports.push(ScenarioReport {
            scenario: name,
            scores,
        });
    }
    Ok(BenchmarkReport {
        train_rows: train.len(),
        test_rows: test.len(),
        scenarios: reports,
    })
}
