//! Discrete tabular data model, empirical marginals, and seeded randomness.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("ingestion error at row {row}: {msg}")]
    Ingestion { row: usize, msg: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Ordered column layout of a discrete dataset: `(name, cardinality)` pairs
/// plus the index of the prediction target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    columns: Vec<(String, usize)>,
    target_index: usize,
}

impl Schema {
    pub fn new(columns: Vec<(String, usize)>, target_index: usize) -> Result<Self> {
        if target_index >= columns.len() {
            return Err(Error::Schema(format!(
                "target index {target_index} out of range for {} columns",
                columns.len()
            )));
        }
        if let Some((name, card)) = columns.iter().find(|(_, c)| *c < 1) {
            return Err(Error::Schema(format!("column {name} has cardinality {card}")));
        }
        if columns[target_index].1 < 2 {
            return Err(Error::Schema("target column needs at least two categories".into()));
        }
        Ok(Self { columns, target_index })
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }

    pub fn cardinality(&self, col: usize) -> usize {
        self.columns[col].1
    }

    pub fn name(&self, col: usize) -> &str {
        &self.columns[col].0
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|(n, _)| n == name)
    }

    /// Indices of every non-target column, ascending.
    pub fn feature_indices(&self) -> Vec<usize> {
        (0..self.ncols()).filter(|&c| c != self.target_index).collect()
    }
}

/// A table of category indices conforming to a [`Schema`].
#[derive(Debug, Clone)]
pub struct DiscreteDataset {
    schema: Schema,
    /// Row-major cell storage, `n * ncols` entries.
    data: Vec<u32>,
    n: usize,
}

impl DiscreteDataset {
    pub fn from_rows(schema: Schema, rows: &[Vec<u32>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Schema("dataset needs at least one row".into()));
        }
        let ncols = schema.ncols();
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(Error::Ingestion {
                    row: i,
                    msg: format!("expected {ncols} cells, got {}", row.len()),
                });
            }
            for (c, &v) in row.iter().enumerate() {
                if v as usize >= schema.cardinality(c) {
                    return Err(Error::Ingestion {
                        row: i,
                        msg: format!(
                            "value {v} exceeds cardinality {} of column {}",
                            schema.cardinality(c),
                            schema.name(c)
                        ),
                    });
                }
            }
            data.extend_from_slice(row);
        }
        Ok(Self { schema, n: rows.len(), data })
    }

    /// Construct from pre-validated flat storage; used by generators that
    /// guarantee cell ranges by construction.
    pub(crate) fn from_flat_unchecked(schema: Schema, data: Vec<u32>) -> Self {
        let n = data.len() / schema.ncols();
        Self { schema, data, n }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn value(&self, row: usize, col: usize) -> u32 {
        self.data[row * self.schema.ncols() + col]
    }

    pub fn row(&self, row: usize) -> &[u32] {
        let w = self.schema.ncols();
        &self.data[row * w..(row + 1) * w]
    }

    /// Values of one column as a fresh vector.
    pub fn column(&self, col: usize) -> Vec<u32> {
        (0..self.n).map(|r| self.value(r, col)).collect()
    }
}

/// A sorted, duplicate-free, nonempty set of column indices naming a marginal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Clique(Vec<usize>);

impl Clique {
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Parameter("clique must be nonempty".into()));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Parameter("clique contains duplicate columns".into()));
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, col: usize) -> bool {
        self.0.binary_search(&col).is_ok()
    }

    /// Render as `{a,b,c}` using schema column names.
    pub fn display(&self, schema: &Schema) -> String {
        let names: Vec<&str> = self.0.iter().map(|&c| schema.name(c)).collect();
        format!("{{{}}}", names.join(","))
    }
}

/// A probability vector over the product domain of a clique, linearized
/// row-major in ascending column-index order.
#[derive(Debug, Clone)]
pub struct MarginalTable {
    pub clique: Clique,
    pub probs: Vec<f64>,
}

impl MarginalTable {
    pub fn new(clique: Clique, probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|&p| p < 0.0) {
            return Err(Error::Contract("marginal has a negative entry".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!("marginal sums to {sum}, not 1")));
        }
        Ok(Self { clique, probs })
    }
}

/// Product of the cardinalities of the clique's columns.
pub fn domain_size(schema: &Schema, clique: &Clique) -> Result<usize> {
    let mut size = 1usize;
    for &c in clique.indices() {
        if c >= schema.ncols() {
            return Err(Error::Schema(format!("clique column {c} out of range")));
        }
        size *= schema.cardinality(c);
    }
    Ok(size)
}

/// Empirical marginal of `clique`: cell ω gets (matching rows)/n.
pub fn compute_marginal(dataset: &DiscreteDataset, clique: &Clique) -> Result<MarginalTable> {
    let schema = dataset.schema();
    let size = domain_size(schema, clique)?;
    let mut counts = vec![0u64; size];
    for r in 0..dataset.n() {
        let mut idx = 0usize;
        for &c in clique.indices() {
            idx = idx * schema.cardinality(c) + dataset.value(r, c) as usize;
        }
        counts[idx] += 1;
    }
    let n = dataset.n() as f64;
    let probs = counts.into_iter().map(|c| c as f64 / n).collect();
    MarginalTable::new(clique.clone(), probs)
}

/// Deterministic seeded generator with labeled sub-stream derivation, so that
/// adding one consumer never perturbs another's draws.
#[derive(Debug, Clone)]
pub struct RngHandle {
    seed: u64,
    rng: ChaCha12Rng,
}

impl RngHandle {
    pub fn new(seed: u64) -> Self {
        Self { seed, rng: ChaCha12Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child generator keyed by `(parent seed, label)` via SHA-256; the
    /// parent's draw position does not influence the child.
    pub fn derive(&self, label: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(label.as_bytes());
        let digest = hasher.finalize();
        let seed = u64::from_le_bytes(digest[..8].try_into().unwrap());
        Self::new(seed)
    }
}

impl RngCore for RngHandle {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema2() -> Schema {
        Schema::new(vec![("x".into(), 2), ("y".into(), 2)], 1).unwrap()
    }

    #[test]
    fn marginal_of_single_binary_column() {
        let ds = DiscreteDataset::from_rows(
            schema2(),
            &[vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]],
        )
        .unwrap();
        let m = compute_marginal(&ds, &Clique::new(vec![0]).unwrap()).unwrap();
        assert_eq!(m.probs, vec![0.5, 0.5]);
    }

    #[test]
    fn single_row_marginal_is_point_mass() {
        let ds = DiscreteDataset::from_rows(schema2(), &[vec![1, 0]]).unwrap();
        let m = compute_marginal(&ds, &Clique::new(vec![0, 1]).unwrap()).unwrap();
        assert_eq!(m.probs, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn marginal_matches_brute_force_contingency() {
        let schema =
            Schema::new(vec![("a".into(), 3), ("b".into(), 2), ("c".into(), 4)], 1).unwrap();
        let mut rng = RngHandle::new(7);
        let rows: Vec<Vec<u32>> = (0..20)
            .map(|_| vec![rng.next_u32() % 3, rng.next_u32() % 2, rng.next_u32() % 4])
            .collect();
        let ds = DiscreteDataset::from_rows(schema, &rows).unwrap();
        let clique = Clique::new(vec![0, 2]).unwrap();
        let m = compute_marginal(&ds, &clique).unwrap();
        for a in 0..3u32 {
            for c in 0..4u32 {
                let count = rows.iter().filter(|r| r[0] == a && r[2] == c).count();
                let cell = m.probs[(a as usize) * 4 + c as usize];
                assert!((cell - count as f64 / 20.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sub_clique_consistency_under_summation() {
        let schema =
            Schema::new(vec![("a".into(), 3), ("b".into(), 2), ("c".into(), 4)], 1).unwrap();
        let mut rng = RngHandle::new(11);
        let rows: Vec<Vec<u32>> = (0..50)
            .map(|_| vec![rng.next_u32() % 3, rng.next_u32() % 2, rng.next_u32() % 4])
            .collect();
        let ds = DiscreteDataset::from_rows(schema, &rows).unwrap();
        let joint = compute_marginal(&ds, &Clique::new(vec![0, 2]).unwrap()).unwrap();
        let direct = compute_marginal(&ds, &Clique::new(vec![0]).unwrap()).unwrap();
        for a in 0..3 {
            let summed: f64 = (0..4).map(|c| joint.probs[a * 4 + c]).sum();
            assert!((summed - direct.probs[a]).abs() < 1e-12);
        }
    }

    #[test]
    fn domain_size_is_cardinality_product() {
        let schema =
            Schema::new(vec![("a".into(), 3), ("b".into(), 3), ("y".into(), 2)], 2).unwrap();
        assert_eq!(domain_size(&schema, &Clique::new(vec![0, 1, 2]).unwrap()).unwrap(), 18);
        assert_eq!(domain_size(&schema, &Clique::new(vec![2]).unwrap()).unwrap(), 2);
    }

    #[test]
    fn schema_rejects_bad_target() {
        assert!(Schema::new(vec![("x".into(), 2), ("y".into(), 1)], 1).is_err());
        assert!(Schema::new(vec![("x".into(), 2)], 3).is_err());
    }

    #[test]
    fn dataset_rejects_out_of_range_cell() {
        let err = DiscreteDataset::from_rows(schema2(), &[vec![2, 0]]);
        assert!(matches!(err, Err(Error::Ingestion { row: 0, .. })));
    }

    #[test]
    fn clique_sorts_and_rejects_duplicates() {
        assert_eq!(Clique::new(vec![2, 0]).unwrap().indices(), &[0, 2]);
        assert!(Clique::new(vec![1, 1]).is_err());
        assert!(Clique::new(vec![]).is_err());
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = RngHandle::new(42);
        let mut b = RngHandle::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn derived_streams_are_label_keyed() {
        let root = RngHandle::new(42);
        let mut a = root.derive("task");
        let mut b = root.derive("background");
        let mut a2 = root.derive("task");
        assert_ne!(a.next_u64(), b.next_u64());
        assert_eq!(RngHandle::new(42).derive("task").next_u64(), a2.next_u64());
    }
}
