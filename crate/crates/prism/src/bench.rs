//! Benchmark generators (SCM shift suites, the allocation stress case) and
//! the Adult Income loader with quantile binning.

use std::path::Path;

use crate::core::{DiscreteDataset, Error, Result, RngHandle, Schema};
use crate::structure::Dag;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Which test-time shift an SCM benchmark applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftKind {
    /// Children flip heavily at test time; `P(Y | A, B)` is preserved.
    Spurious,
    /// Parent marginals move toward higher values; mechanisms are unchanged.
    Marginal,
}

#[derive(Debug, Clone)]
pub struct ScmConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub p_flip_train: f64,
    pub p_flip_test: f64,
    pub shift_kind: ShiftKind,
    pub seed: u64,
}

impl ScmConfig {
    pub fn spurious(seed: u64) -> Self {
        ScmConfig {
            n_train: 5000,
            n_test: 5000,
            p_flip_train: 0.10,
            p_flip_test: 0.50,
            shift_kind: ShiftKind::Spurious,
            seed,
        }
    }

    pub fn marginal(seed: u64) -> Self {
        ScmConfig {
            n_train: 5000,
            n_test: 5000,
            p_flip_train: 0.15,
            p_flip_test: 0.15,
            shift_kind: ShiftKind::Marginal,
            seed,
        }
    }
}

/// A train/test split plus whatever side information the benchmark grants:
/// a ground-truth structure graph and/or oracle task weights.
#[derive(Debug, Clone)]
pub struct BenchPair {
    pub train: DiscreteDataset,
    pub test: DiscreteDataset,
    pub dag: Option<Dag>,
    pub oracle_weights: Option<Vec<f64>>,
}

const SCM_CHILDREN: usize = 10;
const SCM_NOISE: usize = 10;

fn scm_schema() -> Schema {
    let mut columns = vec![("A".to_string(), 3), ("B".to_string(), 3)];
    for j in 1..=SCM_CHILDREN {
        columns.push((format!("S{j}"), 2));
    }
    for j in 1..=SCM_NOISE {
        columns.push((format!("N{j}"), 4));
    }
    columns.push(("Y".to_string(), 2));
    let target = columns.len() - 1;
    Schema::new(columns, target).expect("static schema is valid")
}

fn scm_dag(schema: &Schema) -> Dag {
    let target = schema.target_index();
    let mut edges = vec![(0, target), (1, target)];
    for j in 0..SCM_CHILDREN {
        edges.push((target, 2 + j));
    }
    Dag::new(schema.ncols(), edges).expect("static DAG is valid")
}

/// Test-time parent distribution for the marginal-shift configuration:
/// mass moves toward higher parent values while every mechanism stays fixed.
pub fn apply_marginal_shift(config: &ScmConfig) -> Result<[f64; 3]> {
    if config.shift_kind != ShiftKind::Marginal {
        return Err(Error::Parameter(
            "parent-shift distribution is defined only for marginal-shift configs".into(),
        ));
    }
    Ok([0.1, 0.2, 0.7])
}

fn draw_categorical3(probs: &[f64; 3], rng: &mut RngHandle) -> u32 {
    let draw: f64 = rng.random_range(0.0..1.0);
    if draw < probs[0] {
        0
    } else if draw < probs[0] + probs[1] {
        1
    } else {
        2
    }
}

fn sample_scm_phase(
    n: usize,
    p_flip: f64,
    parent_probs: [f64; 3],
    rng: &mut RngHandle,
) -> Vec<Vec<u32>> {
    let noise = Normal::new(0.0, 0.5).expect("valid normal parameters");
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let a = draw_categorical3(&parent_probs, rng);
        let b = draw_categorical3(&parent_probs, rng);
        let eta: f64 = noise.sample(rng);
        let logit = 0.9 * (a as f64 - 1.0) + 0.9 * (b as f64 - 1.0) + eta;
        let p_y = 1.0 / (1.0 + (-logit).exp());
        let y = u32::from(rng.random_range(0.0..1.0) < p_y);
        let mut row = Vec::with_capacity(2 + SCM_CHILDREN + SCM_NOISE + 1);
        row.push(a);
        row.push(b);
        for _ in 0..SCM_CHILDREN {
            row.push(y ^ u32::from(rng.random_range(0.0..1.0) < p_flip));
        }
        for _ in 0..SCM_NOISE {
            row.push(rng.random_range(0..4u32));
        }
        row.push(y);
        rows.push(row);
    }
    rows
}

/// Generate the SCM benchmark: parents A, B drive Y through a noisy logistic
/// mechanism, ten children copy Y through an XOR flip, ten uniform noise
/// columns are irrelevant. Train and test phases use independently derived
/// random streams.
pub fn gen_scm(config: &ScmConfig) -> Result<BenchPair> {
    for p in [config.p_flip_train, config.p_flip_test] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Parameter(format!("flip probability {p} outside [0,1]")));
        }
    }
    let schema = scm_schema();
    let uniform = [1.0 / 3.0; 3];
    let test_parents = match config.shift_kind {
        ShiftKind::Spurious => uniform,
        ShiftKind::Marginal => apply_marginal_shift(config)?,
    };
    let root = RngHandle::new(config.seed);
    let mut train_rng = root.derive("scm:train");
    let mut test_rng = root.derive("scm:test");
    let train_rows = sample_scm_phase(config.n_train, config.p_flip_train, uniform, &mut train_rng);
    let test_rows = sample_scm_phase(config.n_test, config.p_flip_test, test_parents, &mut test_rng);
    Ok(BenchPair {
        train: DiscreteDataset::from_rows(schema.clone(), &train_rows)?,
        test: DiscreteDataset::from_rows(schema.clone(), &test_rows)?,
        dag: Some(scm_dag(&schema)),
        oracle_weights: None,
    })
}

const ALLOC_STRONG: usize = 4;
const ALLOC_WEAK: usize = 16;
const ALLOC_N_TRAIN: usize = 400;
const ALLOC_N_TEST: usize = 2000;

fn alloc_schema() -> Schema {
    let mut columns: Vec<(String, usize)> =
        (1..=ALLOC_STRONG + ALLOC_WEAK).map(|j| (format!("X{j}"), 2)).collect();
    columns.push(("Y".to_string(), 2));
    let target = columns.len() - 1;
    Schema::new(columns, target).expect("static schema is valid")
}

/// `(P(X=1|Y=1), P(X=1|Y=0))` for feature j: four strong, sixteen weak.
fn alloc_feature_probs(j: usize) -> (f64, f64) {
    if j < ALLOC_STRONG {
        (0.9, 0.1)
    } else {
        (0.55, 0.45)
    }
}

fn sample_alloc_rows(n: usize, rng: &mut RngHandle) -> Vec<Vec<u32>> {
    let d = ALLOC_STRONG + ALLOC_WEAK;
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let y = u32::from(rng.random_range(0.0..1.0) < 0.5);
        let mut row = Vec::with_capacity(d + 1);
        for j in 0..d {
            let (p1, p0) = alloc_feature_probs(j);
            let p = if y == 1 { p1 } else { p0 };
            row.push(u32::from(rng.random_range(0.0..1.0) < p));
        }
        row.push(y);
        rows.push(row);
    }
    rows
}

/// The heterogeneous-weight allocation benchmark: a small train split, binary
/// features conditionally independent given Y, and oracle task weights
/// `(P(X=1|Y=1) − P(X=1|Y=0))²` — 0.64 for strong features, 0.01 for weak.
pub fn gen_alloc_bench(seed: u64) -> Result<BenchPair> {
    let schema = alloc_schema();
    let root = RngHandle::new(seed);
    let mut train_rng = root.derive("alloc:train");
    let mut test_rng = root.derive("alloc:test");
    let train_rows = sample_alloc_rows(ALLOC_N_TRAIN, &mut train_rng);
    let test_rows = sample_alloc_rows(ALLOC_N_TEST, &mut test_rng);
    let weights: Vec<f64> = (0..ALLOC_STRONG + ALLOC_WEAK)
        .map(|j| {
            let (p1, p0) = alloc_feature_probs(j);
            (p1 - p0) * (p1 - p0)
        })
        .collect();
    Ok(BenchPair {
        train: DiscreteDataset::from_rows(schema.clone(), &train_rows)?,
        test: DiscreteDataset::from_rows(schema, &test_rows)?,
        dag: None,
        oracle_weights: Some(weights),
    })
}

/// Quantile-bin `values` into at most `k` bins. Edges sit at the i/k empirical
/// quantiles (duplicates merged, the maximum never forms an edge), so sparse
/// or low-diversity columns collapse to fewer bins with none left empty.
/// Returns the bin index per value and the edges.
pub fn quantile_bin(values: &[f64], k: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    if k == 0 {
        return Err(Error::Parameter("bin count must be at least 1".into()));
    }
    if values.is_empty() {
        return Err(Error::Parameter("cannot bin an empty column".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let max = sorted[n - 1];
    let mut edges = Vec::new();
    for i in 1..k {
        let idx = ((i * n) / k).max(1) - 1;
        let edge = sorted[idx];
        if edge < max && edges.last() != Some(&edge) {
            edges.push(edge);
        }
    }
    Ok((apply_bins(values, &edges), edges))
}

/// Bin index of each value against precomputed edges: the count of edges
/// strictly below it. Out-of-range values land in the outermost bins.
pub fn apply_bins(values: &[f64], edges: &[f64]) -> Vec<usize> {
    values
        .iter()
        .map(|v| edges.partition_point(|e| e < v))
        .collect()
}

const ADULT_DROP: [&str; 3] = ["fnlwgt", "native-country", "education"];
const ADULT_CONTINUOUS: [&str; 4] = ["age", "capital-gain", "capital-loss", "hours-per-week"];
const ADULT_BINS: usize = 8;
const ADULT_RAW_COLUMNS: [&str; 15] = [
    "age",
    "workclass",
    "fnlwgt",
    "education",
    "education-num",
    "marital-status",
    "occupation",
    "relationship",
    "race",
    "sex",
    "capital-gain",
    "capital-loss",
    "hours-per-week",
    "native-country",
    "income",
];

/// Raw parsed column: continuous columns keep numeric values, categorical
/// columns keep their string codes until the whole file is seen.
enum RawColumn {
    Continuous(Vec<f64>),
    Categorical(Vec<String>),
}

fn csv_error(e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Ingestion { row: 0, msg: e.to_string() },
        _ => Error::Ingestion {
            row: e.position().map(|p| p.line() as usize).unwrap_or(0),
            msg: e.to_string(),
        },
    }
}

/// Load and preprocess Adult Income. The default format is the
/// numeric-encoded CSV (integer cells, header row, target column
/// `income>50K`); `raw_uci` switches to the headerless 15-column UCI file
/// with string categories and `<=50K`/`>50K` labels (mapped to 0/1, trailing
/// periods tolerated). Either way: `fnlwgt` and `native-country` are dropped
/// (plus the redundant `education` in raw mode), continuous columns are
/// discretized into 8 train-quantile bins, and an 80/20 target-stratified
/// split is drawn from the seed.
pub fn load_adult(path: &Path, seed: u64, raw_uci: bool) -> Result<BenchPair> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(!raw_uci)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error)?;

    let header: Vec<String> = if raw_uci {
        ADULT_RAW_COLUMNS.iter().map(|s| s.to_string()).collect()
    } else {
        reader.headers().map_err(csv_error)?.iter().map(str::to_string).collect()
    };
    let target_name = if raw_uci { "income" } else { "income>50K" };
    let target_pos = header
        .iter()
        .position(|h| h == target_name)
        .ok_or_else(|| Error::Schema(format!("missing target column '{target_name}'")))?;

    let keep: Vec<usize> = (0..header.len())
        .filter(|&i| i != target_pos && !ADULT_DROP.contains(&header[i].as_str()))
        .collect();
    let mut columns: Vec<(String, RawColumn)> = keep
        .iter()
        .map(|&i| {
            let name = header[i].clone();
            let col = if ADULT_CONTINUOUS.contains(&name.as_str()) {
                RawColumn::Continuous(Vec::new())
            } else {
                RawColumn::Categorical(Vec::new())
            };
            (name, col)
        })
        .collect();
    let mut labels: Vec<u32> = Vec::new();

    for (rec_idx, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let row_no = rec_idx + 1;
        if record.len() != header.len() {
            return Err(Error::Ingestion {
                row: row_no,
                msg: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let label_raw = record.get(target_pos).unwrap_or_default();
        let label = if raw_uci {
            match label_raw.trim_end_matches('.') {
                ">50K" => 1,
                "<=50K" => 0,
                other => {
                    return Err(Error::Ingestion {
                        row: row_no,
                        msg: format!("unrecognized income label '{other}'"),
                    })
                }
            }
        } else {
            match label_raw {
                "1" => 1,
                "0" => 0,
                other => {
                    return Err(Error::Ingestion {
                        row: row_no,
                        msg: format!("target must be 0 or 1, found '{other}'"),
                    })
                }
            }
        };
        labels.push(label);
        for (slot, &i) in columns.iter_mut().zip(&keep) {
            let field = record.get(i).unwrap_or_default();
            match &mut slot.1 {
                RawColumn::Continuous(v) => {
                    let parsed: f64 = field.parse().map_err(|_| Error::Ingestion {
                        row: row_no,
                        msg: format!("column '{}' has non-numeric value '{field}'", slot.0),
                    })?;
                    v.push(parsed);
                }
                RawColumn::Categorical(v) => v.push(field.to_string()),
            }
        }
    }
    let n = labels.len();
    if n < 2 {
        return Err(Error::Ingestion { row: 0, msg: "file contains fewer than 2 data rows".into() });
    }

    // Target-stratified 80/20 split, deterministic in the seed.
    let mut split_rng = RngHandle::new(seed).derive("adult:split");
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for class in [0u32, 1u32] {
        let mut members: Vec<usize> = (0..n).filter(|&r| labels[r] == class).collect();
        members.shuffle(&mut split_rng);
        let cut = (members.len() as f64 * 0.8).floor() as usize;
        train_idx.extend_from_slice(&members[..cut]);
        test_idx.extend_from_slice(&members[cut..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    // Encode each column: train-quantile bins for continuous, sorted distinct
    // codes for categorical (shared across splits so the schema matches).
    let mut schema_columns: Vec<(String, usize)> = Vec::new();
    let mut encoded: Vec<Vec<u32>> = Vec::new();
    for (name, col) in &columns {
        match col {
            RawColumn::Continuous(values) => {
                let train_values: Vec<f64> = train_idx.iter().map(|&r| values[r]).collect();
                let (_, edges) = quantile_bin(&train_values, ADULT_BINS)?;
                let codes: Vec<u32> =
                    apply_bins(values, &edges).into_iter().map(|b| b as u32).collect();
                schema_columns.push((name.clone(), edges.len() + 1));
                encoded.push(codes);
            }
            RawColumn::Categorical(values) => {
                let mut distinct: Vec<&String> = values.iter().collect();
                distinct.sort();
                distinct.dedup();
                let code_of = |v: &String| distinct.binary_search(&v).unwrap() as u32;
                schema_columns.push((name.clone(), distinct.len()));
                encoded.push(values.iter().map(code_of).collect());
            }
        }
    }
    schema_columns.push((target_name.to_string(), 2));
    let target_index = schema_columns.len() - 1;
    let schema = Schema::new(schema_columns, target_index)?;

    let build = |idx: &[usize]| -> Result<DiscreteDataset> {
        let rows: Vec<Vec<u32>> = idx
            .iter()
            .map(|&r| {
                let mut row: Vec<u32> = encoded.iter().map(|col| col[r]).collect();
                row.push(labels[r]);
                row
            })
            .collect();
        DiscreteDataset::from_rows(schema.clone(), &rows)
    };
    Ok(BenchPair {
        train: build(&train_idx)?,
        test: build(&test_idx)?,
        dag: None,
        oracle_weights: None,
    })
}
