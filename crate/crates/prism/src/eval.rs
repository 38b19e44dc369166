//! Train-on-synthetic / test-on-real evaluation: a self-contained logistic
//! regression, ROC-AUC and fidelity metrics, method configurations, and the
//! multi-seed sweep driver.

use std::io::Write as IoWrite;

use crate::allocation::{assign_budgets, split_pools, AllocationMode, PoolSplit};
use crate::bench::BenchPair;
use crate::core::{
    compute_marginal, Clique, DiscreteDataset, Error, Result, RngHandle, Schema,
};
use crate::par;
use crate::privacy::{default_delta, LedgerEntry, PrivacySpec};
use crate::structure::{resolve_subset, Dag, FeatureSubset, Regime, RegimeChoice};
use crate::synthesis::{
    fit_independent, fit_naive_bayes, measure_workload, sample_synthetic,
};
use crate::workload::{build_background_workload, build_task_workload, Pool, Query, Workload};

pub const DEFAULT_N_SYN: usize = 5000;
pub const DEFAULT_EPSILONS: [f64; 5] = [0.2, 0.5, 1.0, 2.0, 4.0];

pub fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

/// Hyperparameters for the downstream logistic regression. The defaults are
/// fixed repo-wide so every table is produced by the same learner.
#[derive(Debug, Clone, Copy)]
pub struct LogRegHyper {
    pub l2_lambda: f64,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for LogRegHyper {
    fn default() -> Self {
        LogRegHyper { l2_lambda: 1e-3, max_iters: 500, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct LogRegModel {
    /// One weight per one-hot indicator, feature columns in schema order.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub l2_lambda: f64,
    pub final_loss: f64,
}

/// Offsets of each feature column inside the one-hot encoding, plus the
/// total encoded dimension. The target column is excluded.
fn feature_layout(schema: &Schema) -> (Vec<(usize, usize)>, usize) {
    let mut layout = Vec::new();
    let mut dim = 0;
    for col in schema.feature_indices() {
        layout.push((col, dim));
        dim += schema.cardinality(col);
    }
    (layout, dim)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^{-m}) without overflow for large |m|.
fn softplus_neg(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// Regularized mean log-loss and its gradient at (weights, intercept):
/// `(1/n)·Σ log(1+exp(−y_i·z_i)) + λ‖w‖²` with the intercept unpenalized.
pub fn logreg_loss_grad(
    data: &DiscreteDataset,
    weights: &[f64],
    intercept: f64,
    l2_lambda: f64,
) -> Result<(f64, Vec<f64>, f64)> {
    let schema = data.schema();
    let target = schema.target_index();
    if schema.cardinality(target) != 2 {
        return Err(Error::Parameter("logistic regression requires a binary target".into()));
    }
    let (layout, dim) = feature_layout(schema);
    if weights.len() != dim {
        return Err(Error::Contract(format!(
            "weight vector has length {}, encoding needs {dim}",
            weights.len()
        )));
    }
    let n = data.n();
    if n == 0 {
        return Err(Error::Parameter("empty training set".into()));
    }
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; dim];
    let mut grad_b = 0.0;
    for r in 0..n {
        let row = data.row(r);
        let mut z = intercept;
        for &(col, offset) in &layout {
            z += weights[offset + row[col] as usize];
        }
        let y = row[target] as f64;
        let margin = if row[target] == 1 { z } else { -z };
        loss += softplus_neg(margin);
        let residual = sigmoid(z) - y;
        for &(col, offset) in &layout {
            grad_w[offset + row[col] as usize] += residual;
        }
        grad_b += residual;
    }
    loss *= inv_n;
    grad_b *= inv_n;
    for (g, &w) in grad_w.iter_mut().zip(weights) {
        *g = *g * inv_n + 2.0 * l2_lambda * w;
    }
    loss += l2_lambda * weights.iter().map(|w| w * w).sum::<f64>();
    Ok((loss, grad_w, grad_b))
}

/// Full-batch gradient descent with backtracking line search, stopping when
/// the gradient norm drops below the tolerance or iterations run out.
/// A single-class training set yields a prior-only model (zero weights,
/// intercept at the clipped class-rate logit).
pub fn train_logreg(train: &DiscreteDataset, hyper: LogRegHyper) -> Result<LogRegModel> {
    let schema = train.schema();
    let target = schema.target_index();
    if schema.cardinality(target) != 2 {
        return Err(Error::Parameter("logistic regression requires a binary target".into()));
    }
    if train.n() == 0 {
        return Err(Error::Parameter("empty training set".into()));
    }
    let (_, dim) = feature_layout(schema);
    let positives = (0..train.n()).filter(|&r| train.value(r, target) == 1).count();
    if positives == 0 || positives == train.n() {
        let rate = positives as f64 / train.n() as f64;
        let intercept = ((rate / (1.0 - rate)).ln()).clamp(-10.0, 10.0);
        let weights = vec![0.0; dim];
        let (final_loss, _, _) =
            logreg_loss_grad(train, &weights, intercept, hyper.l2_lambda)?;
        return Ok(LogRegModel {
            weights,
            intercept,
            l2_lambda: hyper.l2_lambda,
            final_loss,
        });
    }

    let mut weights = vec![0.0; dim];
    let mut intercept = 0.0;
    let (mut loss, mut grad_w, mut grad_b) =
        logreg_loss_grad(train, &weights, intercept, hyper.l2_lambda)?;
    let mut step = 1.0;
    for _ in 0..hyper.max_iters {
        let grad_sq: f64 = grad_w.iter().map(|g| g * g).sum::<f64>() + grad_b * grad_b;
        if grad_sq.sqrt() < hyper.tolerance {
            break;
        }
        // Armijo backtracking; warm-start the step from the last accepted one.
        step *= 2.0;
        let mut accepted = false;
        while step > 1e-12 {
            let cand_w: Vec<f64> =
                weights.iter().zip(&grad_w).map(|(w, g)| w - step * g).collect();
            let cand_b = intercept - step * grad_b;
            let (cand_loss, cand_gw, cand_gb) =
                logreg_loss_grad(train, &cand_w, cand_b, hyper.l2_lambda)?;
            if cand_loss <= loss - 1e-4 * step * grad_sq {
                weights = cand_w;
                intercept = cand_b;
                loss = cand_loss;
                grad_w = cand_gw;
                grad_b = cand_gb;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(LogRegModel { weights, intercept, l2_lambda: hyper.l2_lambda, final_loss: loss })
}

impl LogRegModel {
    /// Predicted probability of class 1 for every row.
    pub fn predict_proba(&self, data: &DiscreteDataset) -> Result<Vec<f64>> {
        let (layout, dim) = feature_layout(data.schema());
        if self.weights.len() != dim {
            return Err(Error::Contract(format!(
                "model dimension {} does not match encoding dimension {dim}",
                self.weights.len()
            )));
        }
        let mut out = Vec::with_capacity(data.n());
        for r in 0..data.n() {
            let row = data.row(r);
            let mut z = self.intercept;
            for &(col, offset) in &layout {
                z += self.weights[offset + row[col] as usize];
            }
            out.push(sigmoid(z));
        }
        Ok(out)
    }
}

/// Mann–Whitney ROC-AUC with midrank tie handling:
/// `P(score⁺ > score⁻) + ½·P(score⁺ = score⁻)`.
pub fn roc_auc(scores: &[f64], labels: &[u32]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Parameter("scores and labels differ in length".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Parameter("AUC needs both classes present".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based midrank shared by the tie group [i, j).
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Fraction of rows where thresholding the probability at 0.5 matches the label.
pub fn accuracy(scores: &[f64], labels: &[u32]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::Parameter("scores and labels must be nonempty and aligned".into()));
    }
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(p, &y)| (**p > 0.5) == (y == 1))
        .count();
    Ok(hits as f64 / scores.len() as f64)
}

/// Mean over all columns of the L1 distance between 1-way marginals.
pub fn oneway_l1(real: &DiscreteDataset, synth: &DiscreteDataset) -> Result<f64> {
    if real.schema() != synth.schema() {
        return Err(Error::Schema("datasets have different schemas".into()));
    }
    let ncols = real.schema().ncols();
    let mut total = 0.0;
    for c in 0..ncols {
        let clique = Clique::new(vec![c])?;
        let p = compute_marginal(real, &clique)?;
        let q = compute_marginal(synth, &clique)?;
        total += p
            .probs
            .iter()
            .zip(&q.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    }
    Ok(total / ncols as f64)
}

/// A synthesis method under evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodConfig {
    /// The main pipeline: regime-based subset, task+background workload.
    Prism { regime: Regime, allocation: AllocationMode, k: Option<usize> },
    /// Subset = every feature; otherwise the same workload shape.
    AllFeatures { allocation: AllocationMode },
    /// One-way marginals only, all budget on the background pool.
    IndependenceOnly,
    /// Non-private oracle baseline: top-k features by |corr(X_j, Y)|.
    CorrTopK { k: usize },
    /// Explicit task weights supplied by the benchmark; background = target only.
    OracleAlloc { allocation: AllocationMode },
}

fn regime_label(regime: Regime) -> &'static str {
    match regime {
        Regime::Causal => "causal",
        Regime::Graphical => "graphical",
        Regime::Predictive => "predictive",
    }
}

impl MethodConfig {
    pub fn name(&self) -> String {
        match self {
            MethodConfig::Prism { regime, allocation, .. } => {
                format!("prism-{}-{}", regime_label(*regime), allocation.label())
            }
            MethodConfig::AllFeatures { allocation } => {
                format!("all-features-{}", allocation.label())
            }
            MethodConfig::IndependenceOnly => "independence-only".into(),
            MethodConfig::CorrTopK { k } => format!("corr-top{k}"),
            MethodConfig::OracleAlloc { allocation } => {
                format!("oracle-{}", allocation.label())
            }
        }
    }

    /// Parse a method name as written in configs; `k` supplies the subset
    /// size for the predictive regime.
    pub fn parse(name: &str, k: Option<usize>) -> Result<MethodConfig> {
        let alloc = |s: &str| match s {
            "opt" => Ok(AllocationMode::Optimal),
            "unif" => Ok(AllocationMode::Uniform),
            other => Err(Error::Parameter(format!("unknown allocation suffix '{other}'"))),
        };
        if let Some(rest) = name.strip_prefix("prism-") {
            let (regime_s, alloc_s) = rest
                .rsplit_once('-')
                .ok_or_else(|| Error::Parameter(format!("malformed method name '{name}'")))?;
            let regime = match regime_s {
                "causal" => Regime::Causal,
                "graphical" => Regime::Graphical,
                "predictive" => Regime::Predictive,
                other => return Err(Error::Parameter(format!("unknown regime '{other}'"))),
            };
            if regime == Regime::Predictive && k.is_none() {
                return Err(Error::Parameter("predictive methods need k".into()));
            }
            let k = if regime == Regime::Predictive { k } else { None };
            return Ok(MethodConfig::Prism { regime, allocation: alloc(alloc_s)?, k });
        }
        if let Some(rest) = name.strip_prefix("all-features") {
            let allocation = match rest.strip_prefix('-') {
                None if rest.is_empty() => AllocationMode::Optimal,
                Some(s) => alloc(s)?,
                None => return Err(Error::Parameter(format!("malformed method name '{name}'"))),
            };
            return Ok(MethodConfig::AllFeatures { allocation });
        }
        if name == "independence-only" {
            return Ok(MethodConfig::IndependenceOnly);
        }
        if let Some(digits) = name.strip_prefix("corr-top") {
            let k: usize = digits
                .parse()
                .map_err(|_| Error::Parameter(format!("malformed method name '{name}'")))?;
            if k == 0 {
                return Err(Error::Parameter("corr-topk needs k ≥ 1".into()));
            }
            return Ok(MethodConfig::CorrTopK { k });
        }
        if let Some(rest) = name.strip_prefix("oracle-") {
            return Ok(MethodConfig::OracleAlloc { allocation: alloc(rest)? });
        }
        Err(Error::Parameter(format!("unknown method '{name}'")))
    }
}

/// Top-k features by absolute Pearson correlation with the target, computed
/// on the raw integer codes. Non-private by design (oracle baseline).
fn corr_topk_subset(train: &DiscreteDataset, k: usize) -> Result<FeatureSubset> {
    let schema = train.schema();
    let features = schema.feature_indices();
    if k == 0 || k > features.len() {
        return Err(Error::Parameter(format!(
            "k must lie in 1..={}, got {k}",
            features.len()
        )));
    }
    let n = train.n();
    if n < 2 {
        return Err(Error::Parameter("correlation needs at least 2 rows".into()));
    }
    let col_f64 = |c: usize| -> Vec<f64> {
        (0..n).map(|r| train.value(r, c) as f64).collect()
    };
    let y = col_f64(schema.target_index());
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let my = mean(&y);
    let sy = y.iter().map(|v| (v - my).powi(2)).sum::<f64>().sqrt();
    let mut scored: Vec<(f64, usize)> = features
        .iter()
        .map(|&j| {
            let x = col_f64(j);
            let mx = mean(&x);
            let sx = x.iter().map(|v| (v - mx).powi(2)).sum::<f64>().sqrt();
            let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
            let r = if sx > 0.0 && sy > 0.0 { (cov / (sx * sy)).abs() } else { 0.0 };
            (r, j)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut indices: Vec<usize> = scored[..k].iter().map(|&(_, j)| j).collect();
    indices.sort_unstable();
    Ok(FeatureSubset { indices, selection_cost: LedgerEntry::new("selection", 0.0, 0.0) })
}

fn all_features_subset(schema: &Schema) -> FeatureSubset {
    FeatureSubset {
        indices: schema.feature_indices(),
        selection_cost: LedgerEntry::new("selection", 0.0, 0.0),
    }
}

/// Synthetic output of one pipeline run together with its privacy ledger.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub synthetic: DiscreteDataset,
    pub ledger: Vec<LedgerEntry>,
}

/// Execute one full synthesis run: subset resolution, workload construction,
/// budget assignment, noisy measurement, model fit, and sampling.
pub fn run_pipeline(
    method: &MethodConfig,
    train: &DiscreteDataset,
    dag: Option<&Dag>,
    oracle_weights: Option<&[f64]>,
    epsilon: f64,
    n_syn: usize,
    seed: u64,
) -> Result<PipelineOutput> {
    let schema = train.schema().clone();
    let n = train.n();
    let spec = PrivacySpec::new(epsilon, default_delta(n))?;
    let root = RngHandle::new(seed).derive(&format!("run:{}:{}", method.name(), epsilon));

    if let MethodConfig::IndependenceOnly = method {
        let workload = Workload::new(build_background_workload(&schema))?;
        let pools = PoolSplit {
            eps_sel: 0.0,
            eps_mi: 0.0,
            eps_task: 0.0,
            eps_bg: spec.epsilon,
            delta_task: 0.0,
            delta_bg: spec.delta,
        };
        let workload = assign_budgets(workload, &schema, n, &pools, AllocationMode::Uniform)?;
        let measurements = measure_workload(train, &workload, &root)?;
        let model = fit_independent(&measurements, &schema)?;
        let mut sample_rng = root.derive("sample");
        let synthetic = sample_synthetic(&model, &measurements, &schema, n_syn, &mut sample_rng)?;
        return Ok(PipelineOutput { synthetic, ledger: measurements.ledger() });
    }

    if let MethodConfig::OracleAlloc { allocation } = method {
        let weights = oracle_weights.ok_or_else(|| {
            Error::Parameter("oracle allocation requires benchmark task weights".into())
        })?;
        let features = schema.feature_indices();
        if weights.len() != features.len() {
            return Err(Error::Parameter("one task weight per feature required".into()));
        }
        let target = schema.target_index();
        let mut queries = Vec::with_capacity(features.len() + 1);
        for (&j, &w) in features.iter().zip(weights) {
            queries.push(Query::new(Clique::new(vec![j, target])?, Pool::Task, w)?);
        }
        // The subset spans every feature, so the only distribution still
        // needed outside the task pool is the target prior.
        queries.push(Query::new(Clique::new(vec![target])?, Pool::Background, 1.0)?);
        let workload = Workload::new(queries)?;
        let choice = RegimeChoice { regime: Regime::Causal, subset_size_k: None };
        let pools = split_pools(spec, choice, false);
        let workload = assign_budgets(workload, &schema, n, &pools, *allocation)?;
        let measurements = measure_workload(train, &workload, &root)?;
        let subset = all_features_subset(&schema);
        let model = fit_naive_bayes(&measurements, &subset, &schema)?;
        let mut sample_rng = root.derive("sample");
        let synthetic = sample_synthetic(&model, &measurements, &schema, n_syn, &mut sample_rng)?;
        return Ok(PipelineOutput { synthetic, ledger: measurements.ledger() });
    }

    // Naive-Bayes pipeline over a resolved subset with full background.
    let (subset, pools, allocation) = match method {
        MethodConfig::Prism { regime, allocation, k } => {
            let choice = RegimeChoice::new(*regime, *k)?;
            let pools = split_pools(spec, choice, false);
            let mut select_rng = root.derive("select");
            let subset = resolve_subset(choice, dag, train, pools.eps_sel, &mut select_rng)?;
            (subset, pools, *allocation)
        }
        MethodConfig::AllFeatures { allocation } => {
            let choice = RegimeChoice { regime: Regime::Causal, subset_size_k: None };
            (all_features_subset(&schema), split_pools(spec, choice, false), *allocation)
        }
        MethodConfig::CorrTopK { k } => {
            let choice = RegimeChoice { regime: Regime::Causal, subset_size_k: None };
            (corr_topk_subset(train, *k)?, split_pools(spec, choice, false), AllocationMode::Uniform)
        }
        _ => unreachable!("remaining methods handled above"),
    };
    let mut queries = build_task_workload(&subset, &schema, 0, None, false, 0)?;
    queries.extend(build_background_workload(&schema));
    let workload = Workload::new(queries)?;
    let workload = assign_budgets(workload, &schema, n, &pools, allocation)?;
    let measurements = measure_workload(train, &workload, &root)?;
    let model = fit_naive_bayes(&measurements, &subset, &schema)?;
    let mut sample_rng = root.derive("sample");
    let synthetic = sample_synthetic(&model, &measurements, &schema, n_syn, &mut sample_rng)?;
    let mut ledger = vec![subset.selection_cost.clone()];
    ledger.extend(measurements.ledger());
    Ok(PipelineOutput { synthetic, ledger })
}

/// One (method, ε, seed) evaluation result.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub method: String,
    pub epsilon: f64,
    pub seed: u64,
    pub auc: f64,
    pub accuracy: f64,
    pub oneway_l1: f64,
}

/// Run the pipeline, train on the synthetic output, and score the real test
/// split. Deterministic in (method, ε, seed).
pub fn tstr_run(
    method: &MethodConfig,
    bench: &BenchPair,
    epsilon: f64,
    seed: u64,
) -> Result<RunReport> {
    tstr_run_with(method, bench, epsilon, DEFAULT_N_SYN, seed)
}

/// [`tstr_run`] with an explicit synthetic-sample budget.
pub fn tstr_run_with(
    method: &MethodConfig,
    bench: &BenchPair,
    epsilon: f64,
    n_syn: usize,
    seed: u64,
) -> Result<RunReport> {
    let output = run_pipeline(
        method,
        &bench.train,
        bench.dag.as_ref(),
        bench.oracle_weights.as_deref(),
        epsilon,
        n_syn,
        seed,
    )?;
    let model = train_logreg(&output.synthetic, LogRegHyper::default())?;
    let scores = model.predict_proba(&bench.test)?;
    let labels = bench.test.column(bench.test.schema().target_index());
    Ok(RunReport {
        method: method.name(),
        epsilon,
        seed,
        auc: roc_auc(&scores, &labels)?,
        accuracy: accuracy(&scores, &labels)?,
        oneway_l1: oneway_l1(&bench.train, &output.synthetic)?,
    })
}

/// Evaluate the full (method × ε × seed) grid, fanning runs out in parallel
/// when the `parallel` feature is enabled.
pub fn run_sweep(
    methods: &[MethodConfig],
    bench: &BenchPair,
    epsilons: &[f64],
    seeds: &[u64],
) -> Result<Vec<RunReport>> {
    let mut combos = Vec::new();
    for method in methods {
        for &eps in epsilons {
            for &seed in seeds {
                combos.push((method.clone(), eps, seed));
            }
        }
    }
    par::map_vec(&combos, |(method, eps, seed)| tstr_run(method, bench, *eps, *seed))
        .into_iter()
        .collect()
}

/// Sequential twin of [`run_sweep`], kept for speedup comparisons.
pub fn run_sweep_seq(
    methods: &[MethodConfig],
    bench: &BenchPair,
    epsilons: &[f64],
    seeds: &[u64],
) -> Result<Vec<RunReport>> {
    let mut out = Vec::new();
    for method in methods {
        for &eps in epsilons {
            for &seed in seeds {
                out.push(tstr_run(method, bench, eps, seed)?);
            }
        }
    }
    Ok(out)
}

/// Mean and 95% normal-approximation half-width per metric across seeds.
#[derive(Debug, Clone)]
pub struct AggregateReport {
    pub method: String,
    pub epsilon: f64,
    pub auc_mean: f64,
    pub auc_ci95: f64,
    pub accuracy_mean: f64,
    pub accuracy_ci95: f64,
    pub oneway_l1_mean: f64,
    pub oneway_l1_ci95: f64,
}

fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

pub fn aggregate(reports: &[RunReport]) -> Result<AggregateReport> {
    if reports.len() < 2 {
        return Err(Error::Parameter("aggregation needs at least 2 reports".into()));
    }
    let method = &reports[0].method;
    let epsilon = reports[0].epsilon;
    if reports.iter().any(|r| &r.method != method || r.epsilon != epsilon) {
        return Err(Error::Parameter("cannot aggregate mixed configurations".into()));
    }
    let pull = |f: fn(&RunReport) -> f64| -> Vec<f64> { reports.iter().map(f).collect() };
    let (auc_mean, auc_ci95) = mean_ci(&pull(|r| r.auc));
    let (accuracy_mean, accuracy_ci95) = mean_ci(&pull(|r| r.accuracy));
    let (oneway_l1_mean, oneway_l1_ci95) = mean_ci(&pull(|r| r.oneway_l1));
    Ok(AggregateReport {
        method: method.clone(),
        epsilon,
        auc_mean,
        auc_ci95,
        accuracy_mean,
        accuracy_ci95,
        oneway_l1_mean,
        oneway_l1_ci95,
    })
}

/// Group raw reports by (method, ε) — in first-appearance order — and
/// aggregate each group.
pub fn aggregate_all(reports: &[RunReport]) -> Result<Vec<AggregateReport>> {
    let mut keys: Vec<(String, u64)> = Vec::new();
    for r in reports {
        let key = (r.method.clone(), r.epsilon.to_bits());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.iter()
        .map(|(m, bits)| {
            let group: Vec<RunReport> = reports
                .iter()
                .filter(|r| &r.method == m && r.epsilon.to_bits() == *bits)
                .cloned()
                .collect();
            aggregate(&group)
        })
        .collect()
}

pub fn write_runs_csv<W: IoWrite>(mut w: W, reports: &[RunReport]) -> Result<()> {
    writeln!(w, "method,epsilon,seed,auc,accuracy,oneway_l1")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.method, r.epsilon, r.seed, r.auc, r.accuracy, r.oneway_l1
        )?;
    }
    Ok(())
}

pub fn write_aggregate_csv<W: IoWrite>(mut w: W, aggregates: &[AggregateReport]) -> Result<()> {
    writeln!(w, "method,epsilon,metric,mean,ci95")?;
    for a in aggregates {
        writeln!(w, "{},{},auc,{},{}", a.method, a.epsilon, a.auc_mean, a.auc_ci95)?;
        writeln!(
            w,
            "{},{},accuracy,{},{}",
            a.method, a.epsilon, a.accuracy_mean, a.accuracy_ci95
        )?;
        writeln!(
            w,
            "{},{},oneway_l1,{},{}",
            a.method, a.epsilon, a.oneway_l1_mean, a.oneway_l1_ci95
        )?;
    }
    Ok(())
}

/// Figure-axis data: ε vs. mean AUC with CI, one row per (method, ε).
pub fn write_figure_csv<W: IoWrite>(mut w: W, aggregates: &[AggregateReport]) -> Result<()> {
    writeln!(w, "method,epsilon,auc_mean,auc_ci95")?;
    for a in aggregates {
        writeln!(w, "{},{},{},{}", a.method, a.epsilon, a.auc_mean, a.auc_ci95)?;
    }
    Ok(())
}
