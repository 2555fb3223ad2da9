//! Invariant suite run by the `validate` subcommand on small random
//! instances. Each check reports how many instances it looked at and how
//! many violated the property.

use d2d_cache::baselines::selfish_policy;
use d2d_cache::objectives::{
    cost_objective, hitrate_objective, throughput_objective, MetricConstants, Objective,
};
use d2d_cache::optimizer::{
    access_probabilities, best_response, evaluate_metrics, expected_utility, optimize, optimize_ee,
    utility_gradient, CachingPolicy, ClusterInstance, OptimizeOptions,
};
use d2d_cache::preference::{generate_preferences, GeneratorParams};
use d2d_cache::{LinkProbabilityMatrix, RadioParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub check: String,
    pub instances: usize,
    pub failures: usize,
    pub detail: String,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn random_instance(
    rng: &mut ChaCha8Rng,
    k: usize,
    m: usize,
    s: usize,
    mc: &MetricConstants,
) -> Result<ClusterInstance, HarnessError> {
    let ka = rng.gen_range(1..=k);
    let gp = GeneratorParams {
        seed: rng.gen(),
        ..Default::default()
    };
    let prefs = generate_preferences(k, m, &gp)?;
    let mut rows = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in 0..i {
            let p = rng.gen_range(0.05..1.0);
            rows[i][j] = p;
            rows[j][i] = p;
        }
    }
    Ok(ClusterInstance::new(
        prefs,
        (0..ka).collect(),
        LinkProbabilityMatrix::from_rows(rows)?,
        s,
        throughput_objective(mc)?,
    )?)
}

fn random_fractional_policy(
    rng: &mut ChaCha8Rng,
    k: usize,
    m: usize,
    s: usize,
) -> Result<CachingPolicy, HarnessError> {
    let rows = (0..k)
        .map(|_| {
            let raw: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
            let t: f64 = raw.iter().sum();
            // strictly inside the box so a small step stays feasible
            raw.iter()
                .map(|x| (0.9 * x / t * s as f64).min(0.95))
                .collect()
        })
        .collect();
    Ok(CachingPolicy::from_rows(m, rows)?)
}

fn combinations(m: usize, s: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, s: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == s {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, s, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, s, &mut Vec::new(), &mut out);
    out
}

fn with_row(p: &CachingPolicy, k: usize, files: &[usize]) -> Result<CachingPolicy, HarnessError> {
    let mut rows: Vec<Vec<f64>> = p.rows().map(|r| r.to_vec()).collect();
    rows[k] = vec![0.0; p.n_files()];
    for &f in files {
        rows[k][f] = 1.0;
    }
    Ok(CachingPolicy::from_rows(p.n_files(), rows)?)
}

/// Runs every check; `seed` makes the instance draws reproducible.
pub fn run_invariant_suite(seed: u64) -> Result<Vec<CheckResult>, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mc = MetricConstants::from_radio(&RadioParams::default());
    let mut out = Vec::new();

    // probability identity
    let mut fails = 0;
    for _ in 0..1000 {
        let (k, m) = (rng.gen_range(1..=5), rng.gen_range(2..=10));
        let s = rng.gen_range(1..m);
        let inst = random_instance(&mut rng, k, m, s, &mc)?;
        let p = random_fractional_policy(&mut rng, k, m, s)?;
        let sel = rng.gen_range(0..inst.n_active());
        let ind: Vec<bool> = (0..k).map(|l| l == sel || rng.gen_bool(0.5)).collect();
        let a = access_probabilities(&inst, &p, sel, &ind)?;
        let ok = (a.p_b + a.p_s) + a.p_d == 1.0
            && [a.p_b, a.p_s, a.p_d]
                .iter()
                .all(|x| (0.0..=1.0).contains(x));
        fails += usize::from(!ok);
    }
    out.push(CheckResult {
        check: "probability_identity".into(),
        instances: 1000,
        failures: fails,
        detail: String::new(),
    });

    // gradient against central differences
    let mut fails = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let inst = random_instance(&mut rng, 3, 5, 2, &mc)?;
        let p = random_fractional_policy(&mut rng, 3, 5, 2)?;
        let g = utility_gradient(&inst, &p)?;
        let (j, f) = (rng.gen_range(0..3), rng.gen_range(0..5));
        let h = 1e-6;
        let mut rows: Vec<Vec<f64>> = p.rows().map(|r| r.to_vec()).collect();
        let base = rows[j][f];
        rows[j][f] = base + h;
        let up = expected_utility(&inst, &CachingPolicy::from_rows(5, rows.clone())?)?;
        rows[j][f] = base - h;
        let dn = expected_utility(&inst, &CachingPolicy::from_rows(5, rows)?)?;
        let fd = (up - dn) / (2.0 * h);
        let rel = (fd - g[j][f]).abs() / g[j][f].abs().max(1e-300);
        worst = worst.max(rel);
        let negative = g.iter().flatten().any(|x| *x < -1e-12);
        fails += usize::from(rel > 1e-5 || negative);
    }
    out.push(CheckResult {
        check: "gradient_finite_difference".into(),
        instances: 50,
        failures: fails,
        detail: format!("worst relative error {worst:e}"),
    });

    // monotone traces, budget, integrality and the fixed point
    let (mut mono, mut budget, mut fixed, mut conv) = (0, 0, 0, 0);
    let runs = 100;
    for i in 0..runs {
        let (k, m) = (rng.gen_range(1..=6), rng.gen_range(3..=12));
        let s = rng.gen_range(1..m.min(4));
        let inst = random_instance(&mut rng, k, m, s, &mc)?;
        let objective = [
            Objective::Throughput,
            Objective::Cost,
            Objective::HitRate,
            Objective::Tradeoff(0.5),
        ][i % 4];
        let inst = inst
            .clone()
            .with_utility(objective.triple(&mc, inst.n_active())?);
        let r = optimize(
            &inst,
            &CachingPolicy::zeros(k, m),
            &OptimizeOptions::default(),
        )?;
        if r.utility_trace
            .windows(2)
            .any(|w| w[1] < w[0] - 1e-12 * w[0].abs().max(1.0))
        {
            mono += 1;
        }
        let rows_ok = (0..k).all(|u| r.policy.row_sum(u) == s as f64) && r.policy.is_integral();
        budget += usize::from(!rows_ok);
        let still = (0..k).all(|u| {
            best_response(&inst, &r.policy, u)
                .map(|row| row == r.policy.row(u))
                .unwrap_or(false)
        });
        fixed += usize::from(r.converged && !still);
        conv += usize::from(!r.converged);
    }
    out.push(CheckResult {
        check: "monotone_utility_trace".into(),
        instances: runs,
        failures: mono,
        detail: String::new(),
    });
    out.push(CheckResult {
        check: "row_sums_and_integrality".into(),
        instances: runs,
        failures: budget,
        detail: String::new(),
    });
    out.push(CheckResult {
        check: "best_response_fixed_point".into(),
        instances: runs,
        failures: fixed,
        detail: format!("{conv} run(s) hit the round budget"),
    });

    // coordinate-wise maximum by exhaustive single-user deviation
    let (mut not_local, mut global) = (0, 0);
    let n = 100;
    for _ in 0..n {
        let (k, m) = (rng.gen_range(1..=3), rng.gen_range(3..=6));
        let s = rng.gen_range(1..=2usize.min(m - 1));
        let inst = random_instance(&mut rng, k, m, s, &mc)?;
        let r = optimize(
            &inst,
            &CachingPolicy::zeros(k, m),
            &OptimizeOptions::default(),
        )?;
        let u = expected_utility(&inst, &r.policy)?;
        let subsets = combinations(m, s);
        let tol = 1e-12 * u.abs().max(1.0);
        let mut local = true;
        for user in 0..k {
            for c in &subsets {
                if expected_utility(&inst, &with_row(&r.policy, user, c)?)? > u + tol {
                    local = false;
                }
            }
        }
        not_local += usize::from(!local);
        // global optimum over all joint placements
        let mut best = f64::NEG_INFINITY;
        let total = subsets.len().pow(k as u32);
        for code in 0..total {
            let mut c = code;
            let files: Vec<Vec<usize>> = (0..k)
                .map(|_| {
                    let f = subsets[c % subsets.len()].clone();
                    c /= subsets.len();
                    f
                })
                .collect();
            best = best.max(expected_utility(
                &inst,
                &CachingPolicy::from_cached_files(m, &files)?,
            )?);
        }
        global += usize::from(u >= best - tol);
    }
    out.push(CheckResult {
        check: "coordinate_wise_maximum".into(),
        instances: n,
        failures: not_local,
        detail: format!("global optimum reached in {global}/{n}"),
    });

    // Dinkelbach fixed point
    let mut fails = 0;
    for _ in 0..20 {
        let (k, m) = (rng.gen_range(2..=6), rng.gen_range(6..=20));
        let inst = random_instance(&mut rng, k, m, 2, &mc)?;
        let e = optimize_ee(&inst, &mc, 1e-6, &OptimizeOptions::default())?;
        let met = evaluate_metrics(&inst, &e.report.policy, &mc)?;
        fails += usize::from(
            !e.converged || (met.throughput - e.t_star * met.cost).abs() > 1e-6 * met.cost,
        );
    }
    out.push(CheckResult {
        check: "dinkelbach_fixed_point".into(),
        instances: 20,
        failures: fails,
        detail: String::new(),
    });

    // cost and hit-rate sign identities
    let mut fails = 0;
    for _ in 0..50 {
        let inst = random_instance(&mut rng, 4, 8, 2, &mc)?;
        let p = random_fractional_policy(&mut rng, 4, 8, 2)?;
        let met = evaluate_metrics(&inst, &p, &mc)?;
        let c = expected_utility(&inst.clone().with_utility(cost_objective(&mc)?), &p)?;
        let h = expected_utility(
            &inst
                .clone()
                .with_utility(hitrate_objective(inst.n_active())?),
            &p,
        )?;
        let ok = (met.cost + c).abs() <= 1e-12 * met.cost
            && (met.hit_rate - h).abs() <= 1e-12
            && (0.0..=1.0 + 1e-12).contains(&met.hit_rate);
        fails += usize::from(!ok);
    }
    out.push(CheckResult {
        check: "metric_identities".into(),
        instances: 50,
        failures: fails,
        detail: String::new(),
    });

    // selfish rows
    let mut fails = 0;
    for _ in 0..50 {
        let inst = random_instance(&mut rng, 5, 10, 3, &mc)?;
        let p = selfish_policy(&inst);
        let ok = (0..5).all(|u| p.row_sum(u) == if inst.is_active(u) { 3.0 } else { 0.0 })
            && p.is_integral();
        fails += usize::from(!ok);
    }
    out.push(CheckResult {
        check: "selfish_rows".into(),
        instances: 50,
        failures: fails,
        detail: String::new(),
    });

    Ok(out)
}
