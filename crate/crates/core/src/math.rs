//! Measurement-to-model math: slowdown ratios, region maps, the attention
//! alignment score and loss, interference matrices and code heatmaps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Weight of the alignment penalty in the total loss.
pub const DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum MathError {
    #[error("isolation time must be positive, got {0}")]
    NonPositiveIsolation(f64),
    #[error("interference time must be non-negative, got {0}")]
    NegativeInterference(f64),
    #[error("input is empty")]
    Empty,
    #[error("all values are zero; cannot normalize")]
    AllZero,
    #[error("value at position {index} is invalid: {value}")]
    InvalidValue { index: usize, value: f64 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("region map is not normalized")]
    NotNormalized,
    #[error("element {index} = {value} is not greater than -1")]
    LogDomain { index: usize, value: f64 },
    #[error("attention matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare {
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("partition has {len} entries for a {n}x{n} matrix")]
    PartitionSize { len: usize, n: usize },
    #[error("interference matrix is invalid: {0}")]
    InvalidMatrix(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("record pairs task `{0}` with itself")]
    SelfPair(String),
    #[error("no measurement covers pair ({0}, {1})")]
    MissingPair(String, String),
    #[error("malformed measurement input: {0}")]
    Parse(String),
}

/// One timed execution of a subject (task or code region) alone and under
/// contention from `pair`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub subject: String,
    /// The co-running task (empty for region-level records).
    #[serde(default)]
    pub pair: String,
    pub repetition: u32,
    pub t_isolation_ns: f64,
    pub t_interference_ns: f64,
}

impl MeasurementRecord {
    pub fn delta(&self) -> Result<SlowdownDelta, MathError> {
        compute_delta(self.t_isolation_ns, self.t_interference_ns)
    }
}

/// Parses records from CSV with header
/// `subject,pair,repetition,t_isolation_ns,t_interference_ns`.
pub fn parse_records_csv(text: &str) -> Result<Vec<MeasurementRecord>, MathError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let rec: MeasurementRecord = row.map_err(|e| MathError::Parse(e.to_string()))?;
        if !(rec.t_isolation_ns > 0.0) {
            return Err(MathError::NonPositiveIsolation(rec.t_isolation_ns));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Execution time under contention divided by execution time in isolation.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SlowdownDelta(pub f64);

impl SlowdownDelta {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_slowdown(self) -> bool {
        self.0 > 1.0
    }
}

pub fn compute_delta(t_isolation: f64, t_interference: f64) -> Result<SlowdownDelta, MathError> {
    if !(t_isolation > 0.0) || !t_isolation.is_finite() {
        return Err(MathError::NonPositiveIsolation(t_isolation));
    }
    if !(t_interference >= 0.0) || !t_interference.is_finite() {
        return Err(MathError::NegativeInterference(t_interference));
    }
    Ok(SlowdownDelta(t_interference / t_isolation))
}

/// Per-region vector of non-negative values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMap {
    values: Vec<f64>,
    normalized: bool,
}

impl RegionMap {
    pub fn new(values: Vec<f64>) -> Result<Self, MathError> {
        check_non_negative(&values)?;
        Ok(RegionMap {
            values,
            normalized: false,
        })
    }

    /// Wraps values already scaled into `[0, 1]`.
    pub fn normalized(values: Vec<f64>) -> Result<Self, MathError> {
        check_non_negative(&values)?;
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| **v > 1.0) {
            return Err(MathError::InvalidValue { index, value });
        }
        Ok(RegionMap {
            values,
            normalized: true,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_non_negative(values: &[f64]) -> Result<(), MathError> {
    if values.is_empty() {
        return Err(MathError::Empty);
    }
    match values
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
    {
        Some((index, &value)) => Err(MathError::InvalidValue { index, value }),
        None => Ok(()),
    }
}

/// Square attention matrix over trace positions plus the region of each position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMatrix {
    entries: Vec<Vec<f64>>,
    partition: Vec<usize>,
}

impl AttentionMatrix {
    pub fn new(entries: Vec<Vec<f64>>, partition: Vec<usize>) -> Result<Self, MathError> {
        let n = entries.len();
        if n == 0 {
            return Err(MathError::Empty);
        }
        for (row, r) in entries.iter().enumerate() {
            if r.len() != n {
                return Err(MathError::NotSquare {
                    row,
                    len: r.len(),
                    expected: n,
                });
            }
            check_non_negative(r)?;
        }
        if partition.len() != n {
            return Err(MathError::PartitionSize {
                len: partition.len(),
                n,
            });
        }
        Ok(AttentionMatrix { entries, partition })
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn region_count(&self) -> usize {
        self.partition.iter().max().map_or(0, |m| m + 1)
    }
}

/// Row sums of the attention matrix, accumulated per region.
pub fn reduce_attention(att: &AttentionMatrix) -> Result<RegionMap, MathError> {
    let mut out = vec![0.0; att.region_count()];
    for (row, &region) in att.entries.iter().zip(&att.partition) {
        out[region] += row.iter().sum::<f64>();
    }
    RegionMap::new(out)
}

/// Scales counts by their total, so the result sums to one.
pub fn normalize_l2_map(counts: &RegionMap) -> Result<RegionMap, MathError> {
    let total: f64 = counts.values.iter().sum();
    if total <= 0.0 {
        return Err(MathError::AllZero);
    }
    Ok(RegionMap {
        values: counts.values.iter().map(|v| v / total).collect(),
        normalized: true,
    })
}

/// Scales values by their maximum, so the largest element becomes one.
pub fn normalize_attention_map(v: &RegionMap) -> Result<RegionMap, MathError> {
    let max = v.values.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(MathError::AllZero);
    }
    Ok(RegionMap {
        values: v.values.iter().map(|x| x / max).collect(),
        normalized: true,
    })
}

/// Dot product of the two normalized maps.
pub fn correlation_score(att_map: &RegionMap, l2_map: &RegionMap) -> Result<f64, MathError> {
    if att_map.len() != l2_map.len() {
        return Err(MathError::LengthMismatch {
            left: att_map.len(),
            right: l2_map.len(),
        });
    }
    if !att_map.normalized || !l2_map.normalized {
        return Err(MathError::NotNormalized);
    }
    Ok(att_map
        .values
        .iter()
        .zip(&l2_map.values)
        .map(|(a, b)| a * b)
        .sum())
}

/// Distance of the score from its ideal value `n_obs`.
pub fn correlation_penalty(c: f64, n_obs: usize) -> f64 {
    n_obs as f64 - c
}

/// Root mean squared logarithmic error.
pub fn rmlse(predicted: &[f64], observed: &[f64]) -> Result<f64, MathError> {
    if predicted.len() != observed.len() {
        return Err(MathError::LengthMismatch {
            left: predicted.len(),
            right: observed.len(),
        });
    }
    if predicted.is_empty() {
        return Err(MathError::Empty);
    }
    for v in [predicted, observed] {
        if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| !(**x > -1.0)) {
            return Err(MathError::LogDomain { index, value });
        }
    }
    let sum: f64 = predicted
        .iter()
        .zip(observed)
        .map(|(p, o)| {
            let d = p.ln_1p() - o.ln_1p();
            d * d
        })
        .sum();
    Ok((sum / predicted.len() as f64).sqrt())
}

/// Breakdown of the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub rmlse: f64,
    pub correlation: f64,
    pub n_obs: usize,
    pub penalty: f64,
    pub lambda: f64,
    pub total: f64,
}

pub fn loss_breakdown(
    predicted: &[f64],
    observed: &[f64],
    att_map: &RegionMap,
    l2_map: &RegionMap,
    lambda: f64,
) -> Result<LossBreakdown, MathError> {
    let err = rmlse(predicted, observed)?;
    let c = correlation_score(att_map, l2_map)?;
    let n_obs = att_map.len();
    let penalty = correlation_penalty(c, n_obs);
    Ok(LossBreakdown {
        rmlse: err,
        correlation: c,
        n_obs,
        penalty,
        lambda,
        total: err + lambda * penalty,
    })
}

/// `rmlse(predicted, observed) + lambda * (n_obs - C)`.
pub fn total_loss(
    predicted: &[f64],
    observed: &[f64],
    att_map: &RegionMap,
    l2_map: &RegionMap,
    lambda: f64,
) -> Result<f64, MathError> {
    loss_breakdown(predicted, observed, att_map, l2_map, lambda).map(|b| b.total)
}

/// How repetitions of one task pair collapse into a matrix entry.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Worst case over every repetition and both orderings.
    #[default]
    Max,
    Mean,
    /// Nearest-rank 95th percentile.
    P95,
}

impl Aggregation {
    fn apply(self, values: &mut [f64]) -> f64 {
        match self {
            Aggregation::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Aggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Aggregation::P95 => {
                values.sort_by(f64::total_cmp);
                let rank = (0.95 * values.len() as f64).ceil() as usize;
                values[rank.clamp(1, values.len()) - 1]
            }
        }
    }
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "max" => Ok(Aggregation::Max),
            "mean" => Ok(Aggregation::Mean),
            "p95" => Ok(Aggregation::P95),
            _ => Err(format!("unknown aggregation `{s}` (max, mean, p95)")),
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Max => "max",
            Aggregation::Mean => "mean",
            Aggregation::P95 => "p95",
        })
    }
}

/// Symmetric task-pair slowdown matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterferenceMatrix {
    tasks: Vec<String>,
    entries: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct MatrixFile {
    tasks: Vec<String>,
    entries: Vec<Vec<f64>>,
}

impl<'de> Deserialize<'de> for InterferenceMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = MatrixFile::deserialize(d)?;
        InterferenceMatrix::new(raw.tasks, raw.entries).map_err(serde::de::Error::custom)
    }
}

impl InterferenceMatrix {
    pub fn new(tasks: Vec<String>, entries: Vec<Vec<f64>>) -> Result<Self, MathError> {
        let n = tasks.len();
        let unique: BTreeSet<&String> = tasks.iter().collect();
        if unique.len() != n {
            return Err(MathError::InvalidMatrix("duplicate task id".into()));
        }
        if entries.len() != n || entries.iter().any(|r| r.len() != n) {
            return Err(MathError::InvalidMatrix(format!(
                "entries must be {n}x{n} for {n} tasks"
            )));
        }
        for i in 0..n {
            if entries[i][i] != 1.0 {
                return Err(MathError::InvalidMatrix(format!(
                    "diagonal entry {i} is {}, expected 1",
                    entries[i][i]
                )));
            }
            for j in 0..n {
                let v = entries[i][j];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(MathError::InvalidMatrix(format!(
                        "entry ({i}, {j}) = {v} is not a finite non-negative value"
                    )));
                }
                if v != entries[j][i] {
                    return Err(MathError::InvalidMatrix(format!(
                        "entries ({i}, {j}) and ({j}, {i}) differ"
                    )));
                }
            }
        }
        Ok(InterferenceMatrix { tasks, entries })
    }

    /// Builds a matrix of ones and then sets the listed unordered pairs.
    pub fn from_pairs<'a>(
        tasks: Vec<String>,
        pairs: impl IntoIterator<Item = (&'a str, &'a str, f64)>,
    ) -> Result<Self, MathError> {
        let n = tasks.len();
        let mut entries = vec![vec![1.0; n]; n];
        for (a, b, v) in pairs {
            let i = index_of(&tasks, a)?;
            let j = index_of(&tasks, b)?;
            if i == j {
                return Err(MathError::SelfPair(a.to_string()));
            }
            entries[i][j] = v;
            entries[j][i] = v;
        }
        Self::new(tasks, entries)
    }

    pub fn from_json(text: &str) -> Result<Self, MathError> {
        serde_json::from_str(text).map_err(|e| MathError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrix serializes")
    }

    pub fn tasks(&self) -> &[String] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn index(&self, task: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t == task)
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.entries[self.index(a)?][self.index(b)?])
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.entries
    }
}

fn index_of(tasks: &[String], id: &str) -> Result<usize, MathError> {
    tasks
        .iter()
        .position(|t| t == id)
        .ok_or_else(|| MathError::UnknownTask(id.to_string()))
}

/// Collapses measurement records into an interference matrix. Every unordered
/// pair of tasks needs at least one record; both orderings are pooled.
pub fn build_interference_matrix(
    tasks: &[String],
    records: &[MeasurementRecord],
    aggregation: Aggregation,
) -> Result<InterferenceMatrix, MathError> {
    let mut pooled: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for r in records {
        let i = index_of(tasks, &r.subject)?;
        let j = index_of(tasks, &r.pair)?;
        if i == j {
            return Err(MathError::SelfPair(r.subject.clone()));
        }
        let key = (i.min(j), i.max(j));
        pooled.entry(key).or_default().push(r.delta()?.value());
    }
    let n = tasks.len();
    let mut entries = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let values = pooled
                .get_mut(&(i, j))
                .ok_or_else(|| MathError::MissingPair(tasks[i].clone(), tasks[j].clone()))?;
            let v = aggregation.apply(values);
            entries[i][j] = v;
            entries[j][i] = v;
        }
    }
    InterferenceMatrix::new(tasks.to_vec(), entries)
}

/// Per-region sensitivity weights in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeHeatmap {
    pub regions: Vec<String>,
    pub weights: Vec<f64>,
}

impl CodeHeatmap {
    /// Weight of a region is its excess slowdown `max(delta - 1, 0)`, rescaled
    /// so the hottest region has weight one.
    pub fn from_deltas(regions: Vec<String>, deltas: &[SlowdownDelta]) -> Result<Self, MathError> {
        if deltas.is_empty() {
            return Err(MathError::Empty);
        }
        if regions.len() != deltas.len() {
            return Err(MathError::LengthMismatch {
                left: regions.len(),
                right: deltas.len(),
            });
        }
        let excess: Vec<f64> = deltas.iter().map(|d| (d.0 - 1.0).max(0.0)).collect();
        let max = excess.iter().copied().fold(0.0, f64::max);
        let weights = if max > 0.0 {
            excess.iter().map(|e| e / max).collect()
        } else {
            excess
        };
        Ok(CodeHeatmap { regions, weights })
    }

    pub fn weight(&self, region: &str) -> Option<f64> {
        self.regions
            .iter()
            .position(|r| r == region)
            .map(|i| self.weights[i])
    }
}

/// Heatmap over regions named `0..n`.
pub fn heatmap_from_deltas(deltas: &[SlowdownDelta]) -> Result<CodeHeatmap, MathError> {
    let regions = (0..deltas.len()).map(|i| i.to_string()).collect();
    CodeHeatmap::from_deltas(regions, deltas)
}

/// Region-level heatmap from records whose `subject` is a region id. Deltas of
/// a region are aggregated across repetitions; regions keep first-seen order.
pub fn heatmap_from_records(
    records: &[MeasurementRecord],
    aggregation: Aggregation,
) -> Result<CodeHeatmap, MathError> {
    let mut order: Vec<String> = Vec::new();
    let mut pooled: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records {
        if !pooled.contains_key(r.subject.as_str()) {
            order.push(r.subject.clone());
        }
        pooled
            .entry(r.subject.as_str())
            .or_default()
            .push(r.delta()?.value());
    }
    let deltas: Vec<SlowdownDelta> = order
        .iter()
        .map(|r| SlowdownDelta(aggregation.apply(pooled.get_mut(r.as_str()).expect("pooled"))))
        .collect();
    CodeHeatmap::from_deltas(order, &deltas)
}
