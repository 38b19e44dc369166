//! Task and background query workloads with task weights.

use crate::core::{Clique, DiscreteDataset, Error, Result, RngHandle, Schema};
use crate::structure::{dp_mutual_information, max_spanning_tree, FeatureSubset};

/// Which budget pool a query is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pool {
    Task,
    Background,
}

impl std::fmt::Display for Pool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Pool::Task => "task",
            Pool::Background => "background",
        })
    }
}

/// One marginal to measure: a clique, its pool, its task weight, and (once
/// allocation has run) its `(epsilon, delta)` budget.
#[derive(Debug, Clone)]
pub struct Query {
    pub clique: Clique,
    pub pool: Pool,
    pub weight: f64,
    pub allocated: Option<(f64, f64)>,
}

impl Query {
    pub fn new(clique: Clique, pool: Pool, weight: f64) -> Result<Self> {
        if !(weight > 0.0) {
            return Err(Error::Parameter(format!("query weight must be positive, got {weight}")));
        }
        Ok(Self { clique, pool, weight, allocated: None })
    }
}

/// The full measurement plan.
#[derive(Debug, Clone)]
pub struct Workload {
    queries: Vec<Query>,
}

impl Workload {
    pub fn new(queries: Vec<Query>) -> Result<Self> {
        // Duplicate cliques are rejected within a pool, and a background query
        // may not repeat a task clique exactly: measuring the same marginal
        // twice would silently split its budget.
        for (i, q) in queries.iter().enumerate() {
            for other in &queries[i + 1..] {
                if q.clique == other.clique {
                    return Err(Error::Contract(format!(
                        "clique {:?} would be measured twice ({} and {})",
                        q.clique.indices(),
                        q.pool,
                        other.pool
                    )));
                }
            }
        }
        Ok(Self { queries })
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn queries_mut(&mut self) -> &mut [Query] {
        &mut self.queries
    }

    pub fn pool_queries(&self, pool: Pool) -> impl Iterator<Item = &Query> {
        self.queries.iter().filter(move |q| q.pool == pool)
    }
}

/// Refusal threshold for full-joint task queries.
pub const DEFAULT_FULL_JOINT_CAP: usize = 1 << 20;

/// Build the task pool: one `(X_j, Y)` pairwise query per selected feature at
/// weight 1, optionally the top-scoring `(X_j, X_j', Y)` triples weighted by
/// their scores (normalized to average 1), optionally the full joint over
/// `S ∪ {Y}` at weight `|S|`.
pub fn build_task_workload(
    subset: &FeatureSubset,
    schema: &Schema,
    max_3way: usize,
    mi_estimates: Option<&[((usize, usize), f64)]>,
    include_full_joint: bool,
    full_joint_cap: usize,
) -> Result<Vec<Query>> {
    if subset.indices.is_empty() {
        return Err(Error::Parameter("task workload needs a nonempty feature subset".into()));
    }
    let target = schema.target_index();
    let mut queries = Vec::new();
    for &j in &subset.indices {
        queries.push(Query::new(Clique::new(vec![j, target])?, Pool::Task, 1.0)?);
    }
    if max_3way > 0 {
        if let Some(scores) = mi_estimates {
            let mut ranked: Vec<&((usize, usize), f64)> = scores.iter().collect();
            ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let picked: Vec<&((usize, usize), f64)> =
                ranked.into_iter().take(max_3way).collect();
            if !picked.is_empty() {
                // Clip below, floor away from zero, then normalize to mean 1 so
                // the pool's budget shares stay comparable to the pairwise terms.
                let floored: Vec<f64> =
                    picked.iter().map(|(_, s)| s.max(0.0) + 1e-6).collect();
                let mean: f64 = floored.iter().sum::<f64>() / floored.len() as f64;
                for (((a, b), _), w) in picked.iter().zip(&floored) {
                    queries.push(Query::new(
                        Clique::new(vec![*a, *b, target])?,
                        Pool::Task,
                        w / mean,
                    )?);
                }
            }
        }
    }
    if include_full_joint {
        let mut cols = subset.indices.clone();
        cols.push(target);
        let clique = Clique::new(cols)?;
        let size = crate::core::domain_size(schema, &clique)?;
        if size > full_joint_cap {
            return Err(Error::Parameter(format!(
                "full joint over {} cells exceeds the configured cap of {full_joint_cap}",
                size
            )));
        }
        queries.push(Query::new(clique, Pool::Task, subset.indices.len() as f64)?);
    }
    Ok(queries)
}

/// Background pool: every column's 1-way marginal (target included), weight 1.
pub fn build_background_workload(schema: &Schema) -> Vec<Query> {
    (0..schema.ncols())
        .map(|c| {
            Query::new(Clique::new(vec![c]).unwrap(), Pool::Background, 1.0).unwrap()
        })
        .collect()
}

/// Optional spanning-tree background: all 1-ways plus the 2-way marginals of a
/// maximum spanning tree over noisy pairwise mutual information. The MI
/// scoring spends `(eps_slice, delta_slice)` split uniformly across feature
/// pairs; the caller must ledger that spend.
pub fn build_background_spanning(
    dataset: &DiscreteDataset,
    eps_slice: f64,
    delta_slice: f64,
    rng: &mut RngHandle,
) -> Result<Vec<Query>> {
    let schema = dataset.schema();
    let features = schema.feature_indices();
    let mut pairs = Vec::new();
    for (i, &a) in features.iter().enumerate() {
        for &b in &features[i + 1..] {
            pairs.push((a, b));
        }
    }
    if pairs.is_empty() {
        return Ok(build_background_workload(schema));
    }
    let eps_pair = eps_slice / pairs.len() as f64;
    let delta_pair = delta_slice / pairs.len() as f64;
    let mut scored = Vec::with_capacity(pairs.len());
    for &(a, b) in &pairs {
        let mut pair_rng = rng.derive(&format!("spanning-mi:{a}:{b}"));
        let mi = dp_mutual_information(dataset, a, b, false, eps_pair, delta_pair, &mut pair_rng)?;
        scored.push((a, b, mi));
    }
    let tree = max_spanning_tree(schema.ncols(), &scored);
    let mut queries = build_background_workload(schema);
    for (a, b) in tree {
        queries.push(Query::new(Clique::new(vec![a, b])?, Pool::Background, 1.0)?);
    }
    Ok(queries)
}
