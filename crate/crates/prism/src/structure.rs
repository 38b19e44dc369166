//! DAG structure, Markov-blanket extraction, and the regime-specific feature
//! selectors (zero-cost graph lookups, DP chi-square greedy selection, DP
//! mutual-information scoring).

use crate::core::{Clique, DiscreteDataset, Error, Result, RngHandle};
use crate::privacy::{exponential_select, measure_empirical_marginal, LedgerEntry};

/// Directed acyclic graph over `d` features plus the target.
#[derive(Debug, Clone)]
pub struct Dag {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl Dag {
    pub fn new(node_count: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut parents = vec![Vec::new(); node_count];
        let mut children = vec![Vec::new(); node_count];
        let mut seen = std::collections::HashSet::new();
        for &(u, v) in &edges {
            if u >= node_count || v >= node_count {
                return Err(Error::Parameter(format!("edge ({u},{v}) out of range")));
            }
            if u == v {
                return Err(Error::Parameter(format!("self-loop at node {u}")));
            }
            if !seen.insert((u, v)) {
                return Err(Error::Parameter(format!("duplicate edge ({u},{v})")));
            }
            parents[v].push(u);
            children[u].push(v);
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
        }
        let dag = Self { node_count, edges, parents, children };
        dag.check_acyclic()?;
        Ok(dag)
    }

    /// Kahn's algorithm; errors if some node never reaches in-degree zero.
    fn check_acyclic(&self) -> Result<()> {
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: Vec<usize> =
            (0..self.node_count).filter(|&v| indeg[v] == 0).collect();
        let mut visited = 0usize;
        while let Some(v) = queue.pop() {
            visited += 1;
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push(c);
                }
            }
        }
        if visited != self.node_count {
            return Err(Error::Parameter("graph contains a cycle".into()));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn parents(&self, node: usize) -> Result<&[usize]> {
        self.bounds(node)?;
        Ok(&self.parents[node])
    }

    pub fn children(&self, node: usize) -> Result<&[usize]> {
        self.bounds(node)?;
        Ok(&self.children[node])
    }

    /// Parents ∪ children ∪ co-parents of children, excluding the node.
    pub fn markov_blanket(&self, node: usize) -> Result<Vec<usize>> {
        self.bounds(node)?;
        let mut blanket: Vec<usize> = self.parents[node].clone();
        blanket.extend_from_slice(&self.children[node]);
        for &child in &self.children[node] {
            blanket.extend_from_slice(&self.parents[child]);
        }
        blanket.sort_unstable();
        blanket.dedup();
        blanket.retain(|&v| v != node);
        Ok(blanket)
    }

    fn bounds(&self, node: usize) -> Result<()> {
        if node >= self.node_count {
            return Err(Error::Parameter(format!("node {node} out of range")));
        }
        Ok(())
    }
}

/// Which feature-targeting regime drives subset resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Causal,
    Graphical,
    Predictive,
}

#[derive(Debug, Clone, Copy)]
pub struct RegimeChoice {
    pub regime: Regime,
    pub subset_size_k: Option<usize>,
}

impl RegimeChoice {
    pub fn new(regime: Regime, subset_size_k: Option<usize>) -> Result<Self> {
        if regime == Regime::Predictive && subset_size_k.is_none() {
            return Err(Error::Parameter("predictive regime requires k".into()));
        }
        Ok(Self { regime, subset_size_k })
    }
}

/// A resolved feature subset with the privacy cost its selection incurred.
#[derive(Debug, Clone)]
pub struct FeatureSubset {
    pub indices: Vec<usize>,
    pub selection_cost: LedgerEntry,
}

/// Clipped chi-square association score `min(χ²/n, clip_bound)` between a
/// feature and the target. Cells with zero expected count contribute nothing;
/// constant columns score zero.
pub fn chi2_score(dataset: &DiscreteDataset, feature: usize, clip_bound: f64) -> Result<f64> {
    let schema = dataset.schema();
    let target = schema.target_index();
    if feature == target {
        return Err(Error::Parameter("chi-square scores a feature against the target".into()));
    }
    if !(clip_bound > 0.0) {
        return Err(Error::Parameter("clip bound must be positive".into()));
    }
    let fx = schema.cardinality(feature);
    let fy = schema.cardinality(target);
    let n = dataset.n();
    let mut counts = vec![0f64; fx * fy];
    let mut row_tot = vec![0f64; fx];
    let mut col_tot = vec![0f64; fy];
    for r in 0..n {
        let x = dataset.value(r, feature) as usize;
        let y = dataset.value(r, target) as usize;
        counts[x * fy + y] += 1.0;
        row_tot[x] += 1.0;
        col_tot[y] += 1.0;
    }
    let n = n as f64;
    let mut chi2 = 0.0;
    for x in 0..fx {
        for y in 0..fy {
            let expected = row_tot[x] * col_tot[y] / n;
            if expected > 0.0 {
                let diff = counts[x * fy + y] - expected;
                chi2 += diff * diff / expected;
            }
        }
    }
    Ok((chi2 / n).min(clip_bound))
}

/// Utility clip bound for greedy selection.
pub const CHI2_CLIP: f64 = 1.0;

/// Greedy DP feature selection: `k` exponential-mechanism rounds over the
/// remaining features with per-round budget `eps_sel/k`. The clipped score
/// moves by at most `2·clip/n` when one record is replaced, which is the
/// sensitivity used here.
pub fn greedy_dp_select(
    dataset: &DiscreteDataset,
    k: usize,
    eps_sel: f64,
    rng: &mut RngHandle,
) -> Result<FeatureSubset> {
    let schema = dataset.schema();
    let features = schema.feature_indices();
    let d = features.len();
    if k == 0 || k > d {
        return Err(Error::Parameter(format!("k must lie in 1..={d}, got {k}")));
    }
    if !(eps_sel > 0.0) {
        return Err(Error::Parameter("selection budget must be positive".into()));
    }
    let scores: Vec<f64> = features
        .iter()
        .map(|&f| chi2_score(dataset, f, CHI2_CLIP))
        .collect::<Result<_>>()?;
    let sensitivity = 2.0 * CHI2_CLIP / dataset.n() as f64;
    let per_round = eps_sel / k as f64;
    let mut remaining: Vec<usize> = (0..d).collect();
    let mut chosen = Vec::with_capacity(k);
    for _ in 0..k {
        let utils: Vec<f64> = remaining.iter().map(|&i| scores[i]).collect();
        let pick = exponential_select(&utils, per_round, sensitivity, rng)?;
        chosen.push(features[remaining.remove(pick)]);
    }
    chosen.sort_unstable();
    Ok(FeatureSubset {
        indices: chosen,
        selection_cost: LedgerEntry::new("selection", eps_sel, 0.0),
    })
}

/// Plug-in (conditional) mutual information in nats from a Gaussian-noised,
/// simplex-projected joint marginal, clipped below at zero.
///
/// The noisy joint costs `(eps_share, delta_share)`; the caller ledgers it.
pub fn dp_mutual_information(
    dataset: &DiscreteDataset,
    a: usize,
    b: usize,
    conditional_on_target: bool,
    eps_share: f64,
    delta_share: f64,
    rng: &mut RngHandle,
) -> Result<f64> {
    let schema = dataset.schema();
    let target = schema.target_index();
    if a == b {
        return Err(Error::Parameter("mutual information needs distinct columns".into()));
    }
    if conditional_on_target && (a == target || b == target) {
        return Err(Error::Parameter(
            "conditional mutual information cannot condition on one of its arguments".into(),
        ));
    }
    let mut cols = vec![a, b];
    if conditional_on_target {
        cols.push(target);
    }
    let clique = Clique::new(cols)?;
    let joint = measure_empirical_marginal(dataset, &clique, eps_share, delta_share, rng)?;

    // Axis layout follows the sorted clique; locate each role.
    let idx_of = |col: usize| clique.indices().iter().position(|&c| c == col).unwrap();
    let cards: Vec<usize> =
        clique.indices().iter().map(|&c| schema.cardinality(c)).collect();
    let (ia, ib) = (idx_of(a), idx_of(b));
    let iy = conditional_on_target.then(|| idx_of(target));

    let ka = cards[ia];
    let kb = cards[ib];
    let ky = iy.map(|i| cards[i]).unwrap_or(1);
    // Re-bucket the flat joint into [y][a][b] for the plug-in formula.
    let mut p = vec![0.0; ky * ka * kb];
    let total_cells: usize = cards.iter().product();
    for flat in 0..total_cells {
        let mut rem = flat;
        let mut coord = vec![0usize; cards.len()];
        for (axis, &card) in cards.iter().enumerate().rev() {
            coord[axis] = rem % card;
            rem /= card;
        }
        let y = iy.map(|i| coord[i]).unwrap_or(0);
        p[(y * ka + coord[ia]) * kb + coord[ib]] += joint.probs[flat];
    }
    let mut mi = 0.0;
    for y in 0..ky {
        let slice = &p[y * ka * kb..(y + 1) * ka * kb];
        let py: f64 = slice.iter().sum();
        if py <= 0.0 {
            continue;
        }
        let mut pa = vec![0.0; ka];
        let mut pb = vec![0.0; kb];
        for x in 0..ka {
            for z in 0..kb {
                pa[x] += slice[x * kb + z];
                pb[z] += slice[x * kb + z];
            }
        }
        for x in 0..ka {
            for z in 0..kb {
                let pxy = slice[x * kb + z];
                if pxy > 0.0 && pa[x] > 0.0 && pb[z] > 0.0 {
                    mi += pxy * ((pxy * py) / (pa[x] * pb[z])).ln();
                }
            }
        }
    }
    Ok(mi.max(0.0))
}

/// Resolve the measured feature subset for a regime: graph lookups are free,
/// greedy selection spends `(eps_sel, 0)`.
pub fn resolve_subset(
    choice: RegimeChoice,
    dag: Option<&Dag>,
    dataset: &DiscreteDataset,
    eps_sel: f64,
    rng: &mut RngHandle,
) -> Result<FeatureSubset> {
    let target = dataset.schema().target_index();
    match choice.regime {
        Regime::Causal => {
            let dag = dag.ok_or_else(|| {
                Error::Parameter("causal regime requires a structure graph".into())
            })?;
            Ok(FeatureSubset {
                indices: dag.parents(target)?.to_vec(),
                selection_cost: LedgerEntry::new("selection", 0.0, 0.0),
            })
        }
        Regime::Graphical => {
            let dag = dag.ok_or_else(|| {
                Error::Parameter("graphical regime requires a structure graph".into())
            })?;
            Ok(FeatureSubset {
                indices: dag.markov_blanket(target)?,
                selection_cost: LedgerEntry::new("selection", 0.0, 0.0),
            })
        }
        Regime::Predictive => {
            let k = choice
                .subset_size_k
                .ok_or_else(|| Error::Parameter("predictive regime requires k".into()))?;
            greedy_dp_select(dataset, k, eps_sel, rng)
        }
    }
}

/// Maximum spanning tree over weighted undirected edges (Kruskal with a small
/// union-find), returned as `(u, v)` pairs. Used for tree-mode structure and
/// the optional spanning background.
pub fn max_spanning_tree(node_count: usize, scores: &[(usize, usize, f64)]) -> Vec<(usize, usize)> {
    let mut order: Vec<&(usize, usize, f64)> = scores.iter().collect();
    order.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut parent: Vec<usize> = (0..node_count).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut edges = Vec::with_capacity(node_count.saturating_sub(1));
    for &&(u, v, _) in &order {
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        if ru != rv {
            parent[ru] = rv;
            edges.push((u, v));
        }
    }
    edges
}
