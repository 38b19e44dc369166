//! Budget pools and per-query allocation: the closed-form square-root rule
//! that minimizes the summed noise-to-budget objective, plus the uniform
//! ablation.

use crate::core::{domain_size, Error, Result, Schema};
use crate::privacy::{gaussian_sigma, marginal_sensitivity, PrivacySpec};
use crate::structure::{Regime, RegimeChoice};
use crate::workload::{Pool, Workload};

/// The four budget pools: selection, mutual-information scoring, task
/// measurement, background measurement. δ is carried only by the two
/// measurement pools.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolSplit {
    pub eps_sel: f64,
    pub eps_mi: f64,
    pub eps_task: f64,
    pub eps_bg: f64,
    pub delta_task: f64,
    pub delta_bg: f64,
}

impl PoolSplit {
    pub fn total_epsilon(&self) -> f64 {
        self.eps_sel + self.eps_mi + self.eps_task + self.eps_bg
    }

    pub fn total_delta(&self) -> f64 {
        self.delta_task + self.delta_bg
    }
}

/// Default pool fractions: selection 0.10 (predictive regime only), MI 0.05
/// (only when 3-way scoring is on), background 0.20, task the rest. Unused
/// selection/MI shares fold into the task pool. δ splits across the two
/// measurement pools proportionally to their ε.
pub fn split_pools(total: PrivacySpec, regime: RegimeChoice, uses_mi: bool) -> PoolSplit {
    let eps = total.epsilon;
    let eps_sel = if regime.regime == Regime::Predictive { 0.10 * eps } else { 0.0 };
    let eps_mi = if uses_mi { 0.05 * eps } else { 0.0 };
    let eps_bg = 0.20 * eps;
    let eps_task = eps - eps_sel - eps_mi - eps_bg;
    let meas = eps_task + eps_bg;
    let delta_task = total.delta * eps_task / meas;
    let delta_bg = total.delta * eps_bg / meas;
    PoolSplit { eps_sel, eps_mi, eps_task, eps_bg, delta_task, delta_bg }
}

/// Per-query budgets `ε_t = eps_pool·√a_t/Σ√a_s`, the minimizer of
/// `Σ a_t/ε_t` subject to `Σ ε_t = eps_pool`. The last coordinate absorbs
/// floating-point rounding so the sum is exact.
pub fn closed_form_allocation(a: &[f64], eps_pool: f64) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Err(Error::Parameter("allocation needs at least one query".into()));
    }
    if a.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Parameter("allocation inputs must be positive".into()));
    }
    if !(eps_pool > 0.0) {
        return Err(Error::Parameter("pool budget must be positive".into()));
    }
    let roots: Vec<f64> = a.iter().map(|&x| x.sqrt()).collect();
    let total: f64 = roots.iter().sum();
    let mut eps: Vec<f64> = roots.iter().map(|r| eps_pool * r / total).collect();
    let head: f64 = eps[..eps.len() - 1].iter().sum();
    let last = eps.len() - 1;
    eps[last] = eps_pool - head;
    Ok(eps)
}

/// The ablation: every query gets `eps_pool/m`.
pub fn uniform_allocation(m: usize, eps_pool: f64) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::Parameter("allocation needs at least one query".into()));
    }
    Ok(vec![eps_pool / m as f64; m])
}

/// Allocation mode for the measurement pools.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocationMode {
    Optimal,
    Uniform,
}

impl AllocationMode {
    pub fn label(self) -> &'static str {
        match self {
            AllocationMode::Optimal => "opt",
            AllocationMode::Uniform => "unif",
        }
    }
}

/// Assign `(ε_q, δ_q)` to every query: within each pool, δ_q is the pool δ
/// divided by the pool's query count, `c_q = Δ₂·√(2·ln(1.25/δ_q))`,
/// `a_q = w_q·|Ω_q|·c_q`, and ε_q follows the selected mode.
pub fn assign_budgets(
    mut workload: Workload,
    schema: &Schema,
    n: usize,
    pools: &PoolSplit,
    mode: AllocationMode,
) -> Result<Workload> {
    if workload.queries().iter().any(|q| q.allocated.is_some()) {
        return Err(Error::Contract("workload already has budgets assigned".into()));
    }
    let target = schema.target_index();
    if let Some(q) = workload
        .queries()
        .iter()
        .find(|q| q.pool == Pool::Task && !q.clique.contains(target))
    {
        return Err(Error::Contract(format!(
            "task clique {:?} omits the target column",
            q.clique.indices()
        )));
    }
    let sensitivity = marginal_sensitivity(n);
    for (pool, eps_pool, delta_pool) in [
        (Pool::Task, pools.eps_task, pools.delta_task),
        (Pool::Background, pools.eps_bg, pools.delta_bg),
    ] {
        let idx: Vec<usize> = workload
            .queries()
            .iter()
            .enumerate()
            .filter(|(_, q)| q.pool == pool)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            continue;
        }
        if !(eps_pool > 0.0) {
            return Err(Error::Contract(format!(
                "{pool} pool has queries but no budget"
            )));
        }
        let m = idx.len();
        let delta_q = delta_pool / m as f64;
        let c_q = sensitivity * (2.0 * (1.25 / delta_q).ln()).sqrt();
        let a: Vec<f64> = idx
            .iter()
            .map(|&i| {
                let q = &workload.queries()[i];
                Ok(q.weight * domain_size(schema, &q.clique)? as f64 * c_q)
            })
            .collect::<Result<_>>()?;
        let eps = match mode {
            AllocationMode::Optimal => closed_form_allocation(&a, eps_pool)?,
            AllocationMode::Uniform => uniform_allocation(m, eps_pool)?,
        };
        for (&i, &e) in idx.iter().zip(&eps) {
            workload.queries_mut()[i].allocated = Some((e, delta_q));
        }
    }
    // Budgets must be realizable as Gaussian noise scales.
    for q in workload.queries() {
        if let Some((e, d)) = q.allocated {
            gaussian_sigma(sensitivity, e, d)?;
        }
    }
    Ok(workload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::Clique;
    use crate::workload::Query;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn spec(eps: f64, delta: f64) -> PrivacySpec {
        PrivacySpec::new(eps, delta).unwrap()
    }

    fn choice(regime: Regime) -> RegimeChoice {
        RegimeChoice { regime, subset_size_k: (regime == Regime::Predictive).then_some(2) }
    }

    #[test]
    fn predictive_with_mi_uses_the_default_split() {
        let p = split_pools(spec(1.0, 1e-6), choice(Regime::Predictive), true);
        assert_abs_diff_eq!(p.eps_sel, 0.10, epsilon = 1e-15);
        assert_abs_diff_eq!(p.eps_mi, 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(p.eps_task, 0.65, epsilon = 1e-15);
        assert_abs_diff_eq!(p.eps_bg, 0.20, epsilon = 1e-15);
        assert_abs_diff_eq!(p.total_epsilon(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.total_delta(), 1e-6, epsilon = 1e-21);
    }

    #[test]
    fn unused_shares_fold_into_task() {
        let p = split_pools(spec(1.0, 1e-6), choice(Regime::Causal), false);
        assert_eq!(p.eps_sel, 0.0);
        assert_eq!(p.eps_mi, 0.0);
        assert_abs_diff_eq!(p.eps_task, 0.80, epsilon = 1e-15);
        assert_abs_diff_eq!(p.eps_bg, 0.20, epsilon = 1e-15);
        // delta splits 0.8/0.2 proportional to the measurement epsilons
        assert_abs_diff_eq!(p.delta_task, 8e-7, epsilon = 1e-21);
        assert_abs_diff_eq!(p.delta_bg, 2e-7, epsilon = 1e-21);
        let graphical_mi = split_pools(spec(1.0, 1e-6), choice(Regime::Graphical), true);
        assert_abs_diff_eq!(graphical_mi.eps_task, 0.75, epsilon = 1e-15);
    }

    #[test]
    fn pools_scale_linearly_in_epsilon() {
        let p1 = split_pools(spec(1.0, 1e-6), choice(Regime::Predictive), true);
        let p2 = split_pools(spec(2.0, 1e-6), choice(Regime::Predictive), true);
        assert_abs_diff_eq!(p2.eps_task, 2.0 * p1.eps_task, epsilon = 1e-12);
        assert_abs_diff_eq!(p2.eps_sel, 2.0 * p1.eps_sel, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_hand_example() {
        let eps = closed_form_allocation(&[1.0, 4.0], 3.0).unwrap();
        assert_abs_diff_eq!(eps[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eps[1], 2.0, epsilon = 1e-12);
        let objective: f64 = [1.0, 4.0].iter().zip(&eps).map(|(a, e)| a / e).sum();
        assert_abs_diff_eq!(objective, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn equal_inputs_reduce_to_uniform() {
        let eps = closed_form_allocation(&[2.5; 5], 1.0).unwrap();
        let unif = uniform_allocation(5, 1.0).unwrap();
        for (a, b) in eps.iter().zip(&unif) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn closed_form_beats_random_feasible_points(
            a in proptest::collection::vec(0.01f64..10.0, 2..7),
            seed in 0u64..1000,
        ) {
            let eps = closed_form_allocation(&a, 1.0).unwrap();
            let opt: f64 = a.iter().zip(&eps).map(|(ai, e)| ai / e).sum();
            prop_assert!((eps.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // Random feasible competitor via normalized positive draws.
            let mut rng = crate::core::RngHandle::new(seed);
            use rand::Rng;
            for _ in 0..50 {
                let raw: Vec<f64> = (0..a.len()).map(|_| rng.random_range(0.01..1.0)).collect();
                let tot: f64 = raw.iter().sum();
                let comp: f64 = a.iter().zip(&raw).map(|(ai, r)| ai / (r / tot)).sum();
                prop_assert!(opt <= comp + 1e-9);
            }
        }

        #[test]
        fn optimal_objective_never_exceeds_uniform(
            a in proptest::collection::vec(0.01f64..10.0, 1..8),
        ) {
            let opt_eps = closed_form_allocation(&a, 2.0).unwrap();
            let uni_eps = uniform_allocation(a.len(), 2.0).unwrap();
            let opt: f64 = a.iter().zip(&opt_eps).map(|(ai, e)| ai / e).sum();
            let uni: f64 = a.iter().zip(&uni_eps).map(|(ai, e)| ai / e).sum();
            prop_assert!(opt <= uni + 1e-9);
        }
    }

    fn two_query_workload() -> Workload {
        Workload::new(vec![
            Query::new(Clique::new(vec![0, 4]).unwrap(), Pool::Task, 1.0).unwrap(),
            Query::new(Clique::new(vec![1, 4]).unwrap(), Pool::Task, 1.0).unwrap(),
            Query::new(Clique::new(vec![2]).unwrap(), Pool::Background, 1.0).unwrap(),
        ])
        .unwrap()
    }

    fn wide_schema() -> Schema {
        Schema::new(
            vec![
                ("a".into(), 3),
                ("b".into(), 3),
                ("c".into(), 2),
                ("d".into(), 12),
                ("y".into(), 2),
            ],
            4,
        )
        .unwrap()
    }

    #[test]
    fn symmetric_queries_get_equal_epsilon_in_both_modes() {
        let pools = split_pools(spec(1.0, 1e-6), choice(Regime::Causal), false);
        for mode in [AllocationMode::Optimal, AllocationMode::Uniform] {
            let w = assign_budgets(two_query_workload(), &wide_schema(), 1000, &pools, mode)
                .unwrap();
            let (e0, d0) = w.queries()[0].allocated.unwrap();
            let (e1, d1) = w.queries()[1].allocated.unwrap();
            assert_abs_diff_eq!(e0, e1, epsilon = 1e-12);
            assert_abs_diff_eq!(e0, pools.eps_task / 2.0, epsilon = 1e-12);
            assert_eq!(d0, d1);
            assert_abs_diff_eq!(d0, pools.delta_task / 2.0, epsilon = 1e-21);
        }
    }

    #[test]
    fn optimal_epsilon_scales_with_sqrt_domain() {
        // task domains 6 and 24 → epsilon ratio 1:2
        let schema = wide_schema();
        let w = Workload::new(vec![
            Query::new(Clique::new(vec![0, 4]).unwrap(), Pool::Task, 1.0).unwrap(),
            Query::new(Clique::new(vec![3, 4]).unwrap(), Pool::Task, 1.0).unwrap(),
        ])
        .unwrap();
        let pools = split_pools(spec(1.0, 1e-6), choice(Regime::Causal), false);
        let w = assign_budgets(w, &schema, 1000, &pools, AllocationMode::Optimal).unwrap();
        let (e0, _) = w.queries()[0].allocated.unwrap();
        let (e1, _) = w.queries()[1].allocated.unwrap();
        assert_abs_diff_eq!(e1 / e0, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn kkt_ratio_is_constant_within_pool() {
        let schema = wide_schema();
        let w = Workload::new(vec![
            Query::new(Clique::new(vec![0, 4]).unwrap(), Pool::Task, 1.0).unwrap(),
            Query::new(Clique::new(vec![1, 4]).unwrap(), Pool::Task, 0.3).unwrap(),
            Query::new(Clique::new(vec![3, 4]).unwrap(), Pool::Task, 2.0).unwrap(),
        ])
        .unwrap();
        let pools = split_pools(spec(1.0, 1e-6), choice(Regime::Causal), false);
        let n = 500;
        let w = assign_budgets(w, &schema, n, &pools, AllocationMode::Optimal).unwrap();
        let delta_q = pools.delta_task / 3.0;
        let c = marginal_sensitivity(n) * (2.0 * (1.25f64 / delta_q).ln()).sqrt();
        let ratios: Vec<f64> = w
            .queries()
            .iter()
            .map(|q| {
                let (e, _) = q.allocated.unwrap();
                let a = q.weight * domain_size(&schema, &q.clique).unwrap() as f64 * c;
                a / (e * e)
            })
            .collect();
        for r in &ratios[1..] {
            assert!((r / ratios[0] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn double_assignment_is_rejected() {
        let schema = wide_schema();
        let pools = split_pools(spec(1.0, 1e-6), choice(Regime::Causal), false);
        let w = assign_budgets(
            two_query_workload(),
            &schema,
            1000,
            &pools,
            AllocationMode::Uniform,
        )
        .unwrap();
        assert!(matches!(
            assign_budgets(w, &schema, 1000, &pools, AllocationMode::Uniform),
            Err(Error::Contract(_))
        ));
    }
}
