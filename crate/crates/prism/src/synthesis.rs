//! DP measurement of a workload and record synthesis from factored models:
//! Naive-Bayes, tree, and independence-only backends.

use std::collections::BTreeMap;

use crate::core::{
    compute_marginal, Clique, DiscreteDataset, Error, MarginalTable, Result, RngHandle, Schema,
};
use crate::privacy::{gaussian_measure, gaussian_sigma, marginal_sensitivity, LedgerEntry};
use crate::structure::FeatureSubset;
use crate::workload::Workload;
use rand::Rng;

/// Noisy marginal tables keyed by clique, each with its ledger entry.
#[derive(Debug, Clone, Default)]
pub struct NoisyMeasurements {
    map: BTreeMap<Clique, (MarginalTable, LedgerEntry)>,
}

impl NoisyMeasurements {
    pub fn get(&self, clique: &Clique) -> Option<&MarginalTable> {
        self.map.get(clique).map(|(m, _)| m)
    }

    pub fn insert(&mut self, table: MarginalTable, entry: LedgerEntry) {
        self.map.insert(table.clique.clone(), (table, entry));
    }

    pub fn ledger(&self) -> Vec<LedgerEntry> {
        self.map.values().map(|(_, e)| e.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    fn require(&self, clique: &Clique) -> Result<&MarginalTable> {
        self.get(clique).ok_or_else(|| {
            Error::Contract(format!("missing measurement for clique {:?}", clique.indices()))
        })
    }
}

/// Measure every query in the workload with Gaussian noise calibrated to its
/// assigned `(ε_q, δ_q)`. Each query draws from a sub-stream keyed by its pool
/// and clique, so measurement order cannot perturb the noise.
pub fn measure_workload(
    dataset: &DiscreteDataset,
    workload: &Workload,
    rng: &RngHandle,
) -> Result<NoisyMeasurements> {
    let mut out = NoisyMeasurements::default();
    let sensitivity = marginal_sensitivity(dataset.n());
    for query in workload.queries() {
        let (eps, delta) = query.allocated.ok_or_else(|| {
            Error::Contract(format!(
                "query {:?} has no assigned budget",
                query.clique.indices()
            ))
        })?;
        let sigma = gaussian_sigma(sensitivity, eps, delta)?;
        let label = format!("{}:{}", query.pool, query.clique.display(dataset.schema()));
        let mut query_rng = rng.derive(&label);
        let empirical = compute_marginal(dataset, &query.clique)?;
        let noisy = gaussian_measure(&empirical, sigma, &mut query_rng);
        out.insert(noisy, LedgerEntry::new(label, eps, delta));
    }
    Ok(out)
}

/// A fitted synthesis model.
#[derive(Debug, Clone)]
pub enum SynthModel {
    /// `P(Y)·∏_j P(X_j|Y)` over the measured subset.
    NaiveBayes {
        target_prior: Vec<f64>,
        /// Per-feature table `t[x·|Y| + y] = P(X=x | Y=y)`, column-stochastic in x.
        conditionals: BTreeMap<usize, Vec<f64>>,
    },
    /// Root marginal plus child-given-parent tables along directed tree edges.
    Tree {
        root: usize,
        root_marginal: Vec<f64>,
        /// `(parent, child, t)` with `t[c·|parent| + p] = P(child=c | parent=p)`.
        edges: Vec<(usize, usize, Vec<f64>)>,
    },
    /// Every column sampled from its own 1-way marginal.
    Independent { marginals: BTreeMap<usize, Vec<f64>> },
}

impl SynthModel {
    /// Columns the model itself generates; the rest fall to background 1-ways.
    fn covered(&self, schema: &Schema) -> Vec<usize> {
        match self {
            SynthModel::NaiveBayes { conditionals, .. } => {
                let mut cols: Vec<usize> = conditionals.keys().cloned().collect();
                cols.push(schema.target_index());
                cols.sort_unstable();
                cols
            }
            SynthModel::Tree { root, edges, .. } => {
                let mut cols = vec![*root];
                for (p, c, _) in edges {
                    cols.push(*p);
                    cols.push(*c);
                }
                cols.sort_unstable();
                cols.dedup();
                cols
            }
            SynthModel::Independent { marginals } => marginals.keys().cloned().collect(),
        }
    }
}

/// `P(other | given)` table from a noisy pairwise marginal: entry
/// `[o·k_given + g]`; zero-mass slices of `given` fall back to uniform.
fn conditional_from_pair(
    joint: &MarginalTable,
    schema: &Schema,
    other: usize,
    given: usize,
) -> Result<Vec<f64>> {
    let cols = joint.clique.indices();
    if cols != [other.min(given), other.max(given)] {
        return Err(Error::Contract("pairwise table does not match requested columns".into()));
    }
    let k_other = schema.cardinality(other);
    let k_given = schema.cardinality(given);
    // Flat layout is row-major over (low, high) column order.
    let cell = |o: usize, g: usize| -> f64 {
        if other < given {
            joint.probs[o * k_given + g]
        } else {
            joint.probs[g * k_other + o]
        }
    };
    let mut table = vec![0.0; k_other * k_given];
    for g in 0..k_given {
        let mass: f64 = (0..k_other).map(|o| cell(o, g)).sum();
        for o in 0..k_other {
            table[o * k_given + g] =
                if mass > 0.0 { cell(o, g) / mass } else { 1.0 / k_other as f64 };
        }
    }
    Ok(table)
}

/// Fit the Naive-Bayes backend: conditionals from the `(X_j, Y)` pairwise
/// tables and the prior from the 1-way target table.
pub fn fit_naive_bayes(
    measurements: &NoisyMeasurements,
    subset: &FeatureSubset,
    schema: &Schema,
) -> Result<SynthModel> {
    let target = schema.target_index();
    let prior = measurements.require(&Clique::new(vec![target])?)?;
    let mut conditionals = BTreeMap::new();
    for &j in &subset.indices {
        let joint = measurements.require(&Clique::new(vec![j, target])?)?;
        conditionals.insert(j, conditional_from_pair(joint, schema, j, target)?);
    }
    Ok(SynthModel::NaiveBayes { target_prior: prior.probs.clone(), conditionals })
}

/// Fit the tree backend over explicit spanning-tree edges rooted at `root`.
pub fn fit_tree(
    measurements: &NoisyMeasurements,
    tree_edges: &[(usize, usize)],
    root: usize,
    schema: &Schema,
) -> Result<SynthModel> {
    let mut nodes: Vec<usize> = tree_edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    nodes.push(root);
    nodes.sort_unstable();
    nodes.dedup();
    if tree_edges.len() + 1 != nodes.len() {
        return Err(Error::Parameter("edges do not form a spanning tree".into()));
    }
    // Orient away from the root by breadth-first traversal.
    let mut adjacency: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(a, b) in tree_edges {
        adjacency.entry(a).or_default().push(b);
        adjacency.entry(b).or_default().push(a);
    }
    let mut order = vec![root];
    let mut seen: std::collections::BTreeSet<usize> = [root].into();
    let mut directed = Vec::with_capacity(tree_edges.len());
    let mut head = 0;
    while head < order.len() {
        let p = order[head];
        head += 1;
        for &c in adjacency.get(&p).into_iter().flatten() {
            if seen.insert(c) {
                directed.push((p, c));
                order.push(c);
            }
        }
    }
    if order.len() != nodes.len() {
        return Err(Error::Parameter("edge set is disconnected".into()));
    }
    let root_marginal = measurements.require(&Clique::new(vec![root])?)?.probs.clone();
    let mut edges = Vec::with_capacity(directed.len());
    for (p, c) in directed {
        let joint = measurements.require(&Clique::new(vec![p, c])?)?;
        edges.push((p, c, conditional_from_pair(joint, schema, c, p)?));
    }
    Ok(SynthModel::Tree { root, root_marginal, edges })
}

/// Fit the independence-only baseline from the 1-way tables of every column.
pub fn fit_independent(measurements: &NoisyMeasurements, schema: &Schema) -> Result<SynthModel> {
    let mut marginals = BTreeMap::new();
    for c in 0..schema.ncols() {
        let table = measurements.require(&Clique::new(vec![c])?)?;
        marginals.insert(c, table.probs.clone());
    }
    Ok(SynthModel::Independent { marginals })
}

fn sample_categorical(probs: &[f64], rng: &mut RngHandle) -> u32 {
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return rng.random_range(0..probs.len()) as u32;
    }
    let mut draw = rng.random_range(0.0..1.0) * total;
    for (i, &p) in probs.iter().enumerate() {
        draw -= p;
        if draw <= 0.0 {
            return i as u32;
        }
    }
    (probs.len() - 1) as u32
}

/// Ancestral sampling of `n_syn` records: the factored model covers its own
/// columns, every other feature draws independently from its noisy 1-way
/// background marginal.
pub fn sample_synthetic(
    model: &SynthModel,
    background: &NoisyMeasurements,
    schema: &Schema,
    n_syn: usize,
    rng: &mut RngHandle,
) -> Result<DiscreteDataset> {
    if n_syn == 0 {
        return Err(Error::Parameter("n_syn must be at least 1".into()));
    }
    let ncols = schema.ncols();
    let covered = model.covered(schema);
    let mut outside: Vec<(usize, Vec<f64>)> = Vec::new();
    for c in 0..ncols {
        if !covered.contains(&c) {
            let table = background.require(&Clique::new(vec![c])?)?;
            outside.push((c, table.probs.clone()));
        }
    }
    let mut data = vec![0u32; n_syn * ncols];
    for r in 0..n_syn {
        let row = &mut data[r * ncols..(r + 1) * ncols];
        match model {
            SynthModel::NaiveBayes { target_prior, conditionals } => {
                let target = schema.target_index();
                let y = sample_categorical(target_prior, rng);
                row[target] = y;
                let ky = schema.cardinality(target);
                for (&j, table) in conditionals {
                    let kx = schema.cardinality(j);
                    let column: Vec<f64> =
                        (0..kx).map(|x| table[x * ky + y as usize]).collect();
                    row[j] = sample_categorical(&column, rng);
                }
            }
            SynthModel::Tree { root, root_marginal, edges } => {
                row[*root] = sample_categorical(root_marginal, rng);
                for (p, c, table) in edges {
                    let kp = schema.cardinality(*p);
                    let kc = schema.cardinality(*c);
                    let pv = row[*p] as usize;
                    let column: Vec<f64> =
                        (0..kc).map(|cv| table[cv * kp + pv]).collect();
                    row[*c] = sample_categorical(&column, rng);
                }
            }
            SynthModel::Independent { marginals } => {
                for (&c, probs) in marginals {
                    row[c] = sample_categorical(probs, rng);
                }
            }
        }
        for (c, probs) in &outside {
            row[*c] = sample_categorical(probs, rng);
        }
    }
    Ok(DiscreteDataset::from_flat_unchecked(schema.clone(), data))
}
