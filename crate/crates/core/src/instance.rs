//! Problem data: points, metric, group labels, k and proportion bounds.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Execution};

/// Instances up to this many points get a precomputed distance matrix.
pub const DEFAULT_DENSE_THRESHOLD: usize = 4096;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}, column `{column}`: cannot parse `{value}` as a number")]
    Unparseable {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("input has no data rows")]
    Empty,
    #[error("k = {k} is outside 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("point id {id} out of range (n = {n})")]
    IdOutOfRange { id: usize, n: usize },
    #[error("point {id} has {got} features, expected {expected} (dimension must be at least 1)")]
    Dimension { id: usize, got: usize, expected: usize },
    #[error("point {id} has non-finite feature value")]
    NonFinite { id: usize },
    #[error("label {label} of point {id} is outside 0..{groups}")]
    Label {
        id: usize,
        label: usize,
        groups: usize,
    },
    #[error("{labels} group labels for {points} points")]
    LabelCount { labels: usize, points: usize },
    #[error("bounds describe {got} groups, instance has {expected}")]
    BoundsArity { got: usize, expected: usize },
    #[error("group {group}: need 0 < l <= u < 1, got l = {lower}, u = {upper}")]
    Bounds { group: usize, lower: f64, upper: f64 },
    #[error("proportion bounds have not been set")]
    BoundsUnset,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub id: usize,
    pub features: Vec<f64>,
}

/// The given coloring: one group label per point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    labels: Vec<usize>,
    group_count: usize,
    names: Vec<String>,
}

impl GroupAssignment {
    pub fn new(labels: Vec<usize>, group_count: usize) -> Result<Self, InstanceError> {
        let names = (0..group_count).map(|h| h.to_string()).collect();
        Self::with_names(labels, names)
    }

    pub fn with_names(labels: Vec<usize>, names: Vec<String>) -> Result<Self, InstanceError> {
        let group_count = names.len();
        if let Some((id, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= group_count) {
            return Err(InstanceError::Label {
                id,
                label,
                groups: group_count,
            });
        }
        Ok(Self {
            labels,
            group_count,
            names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, j: usize) -> usize {
        self.labels[j]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn group_count(&self) -> usize {
        self.group_count
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// n_h for every group.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.group_count];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// r_h = n_h / n.
    pub fn ratio(&self, h: usize) -> f64 {
        self.sizes()[h] as f64 / self.labels.len() as f64
    }
}

/// Per-group proportion bounds `0 < l_h <= u_h < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ProportionBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, InstanceError> {
        if lower.len() != upper.len() {
            return Err(InstanceError::BoundsArity {
                got: lower.len(),
                expected: upper.len(),
            });
        }
        for (group, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            let ok = l.is_finite() && u.is_finite() && 0.0 < l && l <= u && u < 1.0;
            if !ok {
                return Err(InstanceError::Bounds {
                    group,
                    lower: l,
                    upper: u,
                });
            }
        }
        Ok(Self { lower, upper })
    }

    /// Same `(l, u)` for all `groups`.
    pub fn uniform(groups: usize, lower: f64, upper: f64) -> Result<Self, InstanceError> {
        Self::new(vec![lower; groups], vec![upper; groups])
    }

    pub fn lower(&self, h: usize) -> f64 {
        self.lower[h]
    }

    pub fn upper(&self, h: usize) -> f64 {
        self.upper[h]
    }

    pub fn lowers(&self) -> &[f64] {
        &self.lower
    }

    pub fn uppers(&self) -> &[f64] {
        &self.upper
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }
}

/// Bounds as requested at load time.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundsSpec {
    /// Chosen later from the noise parameters (see [`crate::noise::auto_bounds`]).
    Auto,
    Explicit(ProportionBounds),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    #[default]
    MinMax,
    None,
}

/// Distance function over feature vectors.
#[derive(Clone, Copy, Default)]
pub enum Metric {
    #[default]
    Euclidean,
    Custom(fn(&[f64], &[f64]) -> f64),
}

impl std::fmt::Debug for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Metric::Euclidean => f.write_str("Euclidean"),
            Metric::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl Metric {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Custom(f) => f(a, b),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InstanceOptions {
    pub metric: Metric,
    pub dense_threshold: usize,
    pub exec: Execution,
}

impl Default for InstanceOptions {
    fn default() -> Self {
        Self {
            metric: Metric::Euclidean,
            dense_threshold: DEFAULT_DENSE_THRESHOLD,
            exec: Execution::available(),
        }
    }
}

#[derive(Debug, Clone)]
enum DistanceStore {
    /// Upper triangle, row-major, diagonal excluded.
    Dense(Vec<f64>),
    OnDemand,
}

/// Immutable problem instance `(P, chi, k, l, u)` with its metric.
#[derive(Debug, Clone)]
pub struct Instance {
    points: Vec<Point>,
    groups: GroupAssignment,
    bounds: Option<ProportionBounds>,
    k: usize,
    metric: Metric,
    exec: Execution,
    store: DistanceStore,
}

impl Instance {
    pub fn new(
        features: Vec<Vec<f64>>,
        groups: GroupAssignment,
        k: usize,
        bounds: Option<ProportionBounds>,
    ) -> Result<Self, InstanceError> {
        Self::with_options(features, groups, k, bounds, InstanceOptions::default())
    }

    pub fn with_options(
        features: Vec<Vec<f64>>,
        groups: GroupAssignment,
        k: usize,
        bounds: Option<ProportionBounds>,
        options: InstanceOptions,
    ) -> Result<Self, InstanceError> {
        let n = features.len();
        if n == 0 {
            return Err(InstanceError::Empty);
        }
        if groups.len() != n {
            return Err(InstanceError::LabelCount {
                labels: groups.len(),
                points: n,
            });
        }
        if k == 0 || k > n {
            return Err(InstanceError::KOutOfRange { k, n });
        }
        let dim = features[0].len();
        for (id, f) in features.iter().enumerate() {
            if f.len() != dim || dim == 0 {
                return Err(InstanceError::Dimension {
                    id,
                    got: f.len(),
                    expected: dim.max(1),
                });
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(InstanceError::NonFinite { id });
            }
        }
        if let Some(b) = &bounds {
            if b.len() != groups.group_count() {
                return Err(InstanceError::BoundsArity {
                    got: b.len(),
                    expected: groups.group_count(),
                });
            }
        }
        let points = features
            .into_iter()
            .enumerate()
            .map(|(id, features)| Point { id, features })
            .collect();
        let mut inst = Self {
            points,
            groups,
            bounds,
            k,
            metric: options.metric,
            exec: options.exec,
            store: DistanceStore::OnDemand,
        };
        if n <= options.dense_threshold {
            inst.store = DistanceStore::Dense(inst.dense_matrix(options.exec));
        }
        Ok(inst)
    }

    fn dense_matrix(&self, exec: Execution) -> Vec<f64> {
        let n = self.points.len();
        let rows: Vec<Vec<f64>> = exec::map_indices(exec, n, |i| {
            ((i + 1)..n).map(|j| self.compute(i, j)).collect()
        });
        rows.concat()
    }

    #[inline]
    fn compute(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.metric
            .eval(&self.points[a].features, &self.points[b].features)
    }

    #[inline]
    fn tri_index(&self, i: usize, j: usize) -> usize {
        // i < j
        let n = self.points.len();
        i * (2 * n - i - 1) / 2 + (j - i - 1)
    }

    /// Distance without a range check. Panics on bad ids.
    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        match &self.store {
            DistanceStore::Dense(m) => {
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                m[self.tri_index(a, b)]
            }
            DistanceStore::OnDemand => self.compute(i, j),
        }
    }

    pub fn distance(&self, i: usize, j: usize) -> Result<f64, InstanceError> {
        let n = self.len();
        for id in [i, j] {
            if id >= n {
                return Err(InstanceError::IdOutOfRange { id, n });
            }
        }
        Ok(self.dist(i, j))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn groups(&self) -> &GroupAssignment {
        &self.groups
    }

    pub fn group_count(&self) -> usize {
        self.groups.group_count()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn exec(&self) -> Execution {
        self.exec
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.store, DistanceStore::Dense(_))
    }

    pub fn bounds(&self) -> Option<&ProportionBounds> {
        self.bounds.as_ref()
    }

    pub fn require_bounds(&self) -> Result<&ProportionBounds, InstanceError> {
        self.bounds.as_ref().ok_or(InstanceError::BoundsUnset)
    }

    pub fn with_bounds(mut self, bounds: ProportionBounds) -> Result<Self, InstanceError> {
        self.set_bounds(bounds)?;
        Ok(self)
    }

    pub fn set_bounds(&mut self, bounds: ProportionBounds) -> Result<(), InstanceError> {
        if bounds.len() != self.group_count() {
            return Err(InstanceError::BoundsArity {
                got: bounds.len(),
                expected: self.group_count(),
            });
        }
        self.bounds = Some(bounds);
        Ok(())
    }

    pub fn with_k(mut self, k: usize) -> Result<Self, InstanceError> {
        if k == 0 || k > self.len() {
            return Err(InstanceError::KOutOfRange { k, n: self.len() });
        }
        self.k = k;
        Ok(self)
    }

    /// Largest pairwise distance.
    pub fn max_distance(&self) -> f64 {
        let n = self.len();
        exec::map_indices(self.exec, n, |i| {
            ((i + 1)..n).map(|j| self.dist(i, j)).fold(0.0, f64::max)
        })
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Every distinct pairwise distance, ascending, with 0 first.
pub fn candidate_radii(inst: &Instance) -> Vec<f64> {
    let n = inst.len();
    let mut all: Vec<f64> = match &inst.store {
        DistanceStore::Dense(m) => m.clone(),
        DistanceStore::OnDemand => exec::map_indices(inst.exec, n, |i| {
            ((i + 1)..n).map(|j| inst.dist(i, j)).collect::<Vec<_>>()
        })
        .concat(),
    };
    all.push(0.0);
    exec::sort_f64(inst.exec, &mut all);
    all.dedup();
    all
}

/// Column selection and preprocessing for [`load_csv`].
#[derive(Debug, Clone)]
pub struct CsvSpec {
    pub feature_columns: Vec<String>,
    pub group_column: String,
    pub k: usize,
    pub bounds: BoundsSpec,
    pub normalization: Normalization,
    pub options: InstanceOptions,
}

impl CsvSpec {
    pub fn new(feature_columns: &[&str], group_column: &str, k: usize) -> Self {
        Self {
            feature_columns: feature_columns.iter().map(|s| s.to_string()).collect(),
            group_column: group_column.to_string(),
            k,
            bounds: BoundsSpec::Auto,
            normalization: Normalization::MinMax,
            options: InstanceOptions::default(),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, spec: &CsvSpec) -> Result<Instance, InstanceError> {
    let file = std::fs::File::open(path)?;
    load_csv_reader(file, spec)
}

pub fn load_csv_reader<R: Read>(reader: R, spec: &CsvSpec) -> Result<Instance, InstanceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| InstanceError::MissingColumn(name.to_string()))
    };
    let feature_idx = spec
        .feature_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>, _>>()?;
    let group_idx = find(&spec.group_column)?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != headers.len() {
            return Err(InstanceError::RaggedRow {
                line,
                expected: headers.len(),
                found: record.len(),
            });
        }
        let row = feature_idx
            .iter()
            .zip(&spec.feature_columns)
            .map(|(&c, name)| {
                let raw = record[c].trim();
                raw.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| InstanceError::Unparseable {
                        line,
                        column: name.clone(),
                        value: raw.to_string(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let g = record[group_idx].trim().to_string();
        let next = index.len();
        let label = *index.entry(g.clone()).or_insert_with(|| {
            names.push(g);
            next
        });
        features.push(row);
        labels.push(label);
    }
    if features.is_empty() {
        return Err(InstanceError::Empty);
    }
    if spec.k == 0 || spec.k > features.len() {
        return Err(InstanceError::KOutOfRange {
            k: spec.k,
            n: features.len(),
        });
    }
    if spec.normalization == Normalization::MinMax {
        min_max_normalize(&mut features);
    }
    let groups = GroupAssignment::with_names(labels, names)?;
    let bounds = match &spec.bounds {
        BoundsSpec::Auto => None,
        BoundsSpec::Explicit(b) => Some(b.clone()),
    };
    Instance::with_options(features, groups, spec.k, bounds, spec.options)
}

/// Rescale each column to [0, 1]; constant columns become 0.
pub fn min_max_normalize(rows: &mut [Vec<f64>]) {
    let Some(dim) = rows.first().map(Vec::len) else {
        return;
    };
    for c in 0..dim {
        let (lo, hi) = rows
            .iter()
            .map(|r| r[c])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        let span = hi - lo;
        for r in rows.iter_mut() {
            r[c] = if span > 0.0 { (r[c] - lo) / span } else { 0.0 };
        }
    }
}
