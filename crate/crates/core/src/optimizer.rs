//! Closed-form network utility and the per-user best-response design.
//!
//! For a caching policy `b`, the expected utility under random-push
//! scheduling is
//!
//! ```text
//! U = sum_k w_k U_D / K_A + (U_B - U_D) sum_m S_m + (K_A U_S - U_D) sum_m sum_k w_k a_mk b_mk / K_A
//! S_m = sum_{k active} (w_k a_mk / K_A) prod_{l} (1 - b_ml L_kl)
//! ```
//!
//! `U` is affine in each user's row, so one user's best response with the
//! others fixed is to cache the `S` files with the largest partial
//! derivative. Cycling through users never decreases `U`.
//!
//! Products only run over users that actually hold a file (`b > 0`); the
//! skipped factors are exactly 1, so the sparse and dense evaluations agree
//! bit for bit while a round costs `O(K_A (M + K S))` per user.

use std::cmp::Ordering;

use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::channel::LinkProbabilityMatrix;
use crate::error::{Error, Result};
use crate::objectives::{
    ee_weighted_objective, throughput_objective, MetricConstants, UtilityTriple,
};
use crate::preference::PreferenceMatrix;

const FEASIBILITY_TOL: f64 = 1e-9;

/// Per-user caching probabilities, `K × M`, row sums at most `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct CachingPolicy {
    n_users: usize,
    n_files: usize,
    data: Vec<f64>,
}

impl CachingPolicy {
    pub fn zeros(n_users: usize, n_files: usize) -> Self {
        Self {
            n_users,
            n_files,
            data: vec![0.0; n_users * n_files],
        }
    }

    pub fn from_rows(n_files: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_users = rows.len();
        let mut data = Vec::with_capacity(n_users * n_files);
        for (k, row) in rows.into_iter().enumerate() {
            if row.len() != n_files {
                return Err(Error::param(format!(
                    "policy row {k} has {} entries, expected {n_files}",
                    row.len()
                )));
            }
            if row.iter().any(|b| !(0.0..=1.0).contains(b)) {
                return Err(Error::param(format!(
                    "policy row {k} has an entry outside [0,1]"
                )));
            }
            data.extend(row);
        }
        Ok(Self {
            n_users,
            n_files,
            data,
        })
    }

    /// Deterministic policy caching the listed files for each user.
    pub fn from_cached_files(n_files: usize, files: &[Vec<usize>]) -> Result<Self> {
        let mut p = Self::zeros(files.len(), n_files);
        for (k, row) in files.iter().enumerate() {
            for &m in row {
                if m >= n_files {
                    return Err(Error::param(format!(
                        "file {m} outside library of {n_files}"
                    )));
                }
                p.data[k * n_files + m] = 1.0;
            }
        }
        Ok(p)
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_files(&self) -> usize {
        self.n_files
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.n_files..(k + 1) * self.n_files]
    }

    #[inline]
    pub fn get(&self, k: usize, m: usize) -> f64 {
        self.data[k * self.n_files + m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_files.max(1)).take(self.n_users)
    }

    pub fn row_sum(&self, k: usize) -> f64 {
        self.row(k).iter().sum()
    }

    /// Files with `b = 1` for user `k`, ascending.
    pub fn cached_files(&self, k: usize) -> Vec<usize> {
        self.row(k)
            .iter()
            .enumerate()
            .filter(|(_, b)| **b == 1.0)
            .map(|(m, _)| m)
            .collect()
    }

    pub fn is_integral(&self) -> bool {
        self.data.iter().all(|b| *b == 0.0 || *b == 1.0)
    }

    pub fn is_feasible(&self, cache_size: usize) -> bool {
        self.data.iter().all(|b| (0.0..=1.0).contains(b))
            && (0..self.n_users).all(|k| self.row_sum(k) <= cache_size as f64 + FEASIBILITY_TOL)
    }

    pub fn squared_distance(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub(crate) fn set_row(&mut self, k: usize, row: &[f64]) {
        self.data[k * self.n_files..(k + 1) * self.n_files].copy_from_slice(row);
    }
}

impl Serialize for CachingPolicy {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.n_users))?;
        for row in self.rows() {
            seq.serialize_element(row)?;
        }
        seq.end()
    }
}

/// Everything the closed-form utility needs about one cluster.
#[derive(Debug, Clone)]
pub struct ClusterInstance {
    prefs: PreferenceMatrix,
    active: Vec<usize>,
    inactive: Vec<usize>,
    active_slot: Vec<Option<usize>>,
    weights: Vec<f64>,
    cache_size: usize,
    links: LinkProbabilityMatrix,
    utility: UtilityTriple,
}

impl ClusterInstance {
    /// Users not listed in `active` are inactive. Weights default to 1.
    pub fn new(
        prefs: PreferenceMatrix,
        active: Vec<usize>,
        links: LinkProbabilityMatrix,
        cache_size: usize,
        utility: UtilityTriple,
    ) -> Result<Self> {
        let k = prefs.n_users();
        if links.n_users() != k {
            return Err(Error::param(format!(
                "link matrix is {0}×{0} but there are {k} users",
                links.n_users()
            )));
        }
        if active.is_empty() {
            return Err(Error::param("a cluster needs at least one active user"));
        }
        if cache_size >= prefs.n_files() {
            return Err(Error::param(format!(
                "cache size {cache_size} must be smaller than the library ({})",
                prefs.n_files()
            )));
        }
        let mut active_slot = vec![None; k];
        for (slot, &u) in active.iter().enumerate() {
            if u >= k {
                return Err(Error::param(format!("active user {u} outside 0..{k}")));
            }
            if active_slot[u].replace(slot).is_some() {
                return Err(Error::param(format!("active user {u} listed twice")));
            }
        }
        let inactive = (0..k).filter(|u| active_slot[*u].is_none()).collect();
        let weights = vec![1.0; active.len()];
        Ok(Self {
            prefs,
            active,
            inactive,
            active_slot,
            weights,
            cache_size,
            links,
            utility,
        })
    }

    /// Weights aligned with the active-user list.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.active.len() {
            return Err(Error::param(format!(
                "got {} weights for {} active users",
                weights.len(),
                self.active.len()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::param("user weights must be positive"));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn with_utility(mut self, utility: UtilityTriple) -> Self {
        self.utility = utility;
        self
    }

    /// Same cluster with different preference rows (same shape).
    pub fn with_prefs(mut self, prefs: PreferenceMatrix) -> Result<Self> {
        if prefs.n_users() != self.prefs.n_users() || prefs.n_files() != self.prefs.n_files() {
            return Err(Error::param(
                "replacement preferences have a different shape",
            ));
        }
        self.prefs = prefs;
        Ok(self)
    }

    pub fn prefs(&self) -> &PreferenceMatrix {
        &self.prefs
    }
    pub fn active_users(&self) -> &[usize] {
        &self.active
    }
    pub fn inactive_users(&self) -> &[usize] {
        &self.inactive
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn cache_size(&self) -> usize {
        self.cache_size
    }
    pub fn links(&self) -> &LinkProbabilityMatrix {
        &self.links
    }
    pub fn utility(&self) -> UtilityTriple {
        self.utility
    }
    pub fn n_users(&self) -> usize {
        self.prefs.n_users()
    }
    pub fn n_files(&self) -> usize {
        self.prefs.n_files()
    }
    pub fn n_active(&self) -> usize {
        self.active.len()
    }
    pub fn is_active(&self, user: usize) -> bool {
        self.active_slot[user].is_some()
    }

    /// Active users first, then inactive users.
    pub fn default_order(&self) -> Vec<usize> {
        self.active.iter().chain(&self.inactive).copied().collect()
    }

    fn check_policy(&self, policy: &CachingPolicy) -> Result<()> {
        if policy.n_users() != self.n_users() || policy.n_files() != self.n_files() {
            return Err(Error::param(format!(
                "policy is {}×{} but the instance is {}×{}",
                policy.n_users(),
                policy.n_files(),
                self.n_users(),
                self.n_files()
            )));
        }
        Ok(())
    }

    fn ka(&self) -> f64 {
        self.active.len() as f64
    }

    /// `prod_{l in holders, l != skip} (1 - b_ml L_kl)`.
    #[inline]
    fn miss_product(&self, holders: &[(usize, f64)], k: usize, skip: Option<usize>) -> f64 {
        let lrow = self.links.row(k);
        let mut p = 1.0;
        for &(l, b) in holders {
            if Some(l) != skip {
                p *= 1.0 - b * lrow[l];
            }
        }
        p
    }

    fn terms(&self, policy: &CachingPolicy, holders: &Holders) -> UtilityTerms {
        let ka = self.ka();
        let weight_mass = self.weights.iter().sum::<f64>() / ka;
        let mut miss_mass = 0.0;
        let mut self_mass = 0.0;
        for (m, file_holders) in holders.by_file.iter().enumerate() {
            for (slot, &k) in self.active.iter().enumerate() {
                let coef = self.weights[slot] * self.prefs.get(k, m) / ka;
                miss_mass += coef * self.miss_product(file_holders, k, None);
                self_mass += coef * policy.get(k, m);
            }
        }
        UtilityTerms {
            weight_mass,
            miss_mass,
            self_mass,
            ka,
        }
    }

    /// Partial derivatives of the utility with respect to user `j`'s row,
    /// which are also the per-file payoffs of its best response.
    fn payoff_row(&self, holders: &Holders, j: usize, out: &mut [f64]) {
        let u = self.utility;
        let ka = self.ka();
        let d2d_gain = u.u_d - u.u_b;
        let self_coef = match self.active_slot[j] {
            Some(slot) => (ka * u.u_s - u.u_d) * self.weights[slot] / ka,
            None => 0.0,
        };
        for (m, out_m) in out.iter_mut().enumerate() {
            let file_holders = &holders.by_file[m];
            let mut acc = 0.0;
            for (slot, &k) in self.active.iter().enumerate() {
                let a = self.prefs.get(k, m);
                let l_kj = self.links.get(k, j);
                if a == 0.0 || l_kj == 0.0 {
                    continue;
                }
                acc += self.weights[slot] * a / ka
                    * l_kj
                    * self.miss_product(file_holders, k, Some(j));
            }
            *out_m = d2d_gain * acc + self_coef * self.prefs.get(j, m);
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct UtilityTerms {
    weight_mass: f64,
    miss_mass: f64,
    self_mass: f64,
    ka: f64,
}

impl UtilityTerms {
    fn utility(&self, t: &UtilityTriple) -> f64 {
        self.weight_mass * t.u_d
            + (t.u_b - t.u_d) * self.miss_mass
            + (self.ka * t.u_s - t.u_d) * self.self_mass
    }
}

/// Users holding each file with nonzero probability, ascending by user.
#[derive(Debug, Clone)]
struct Holders {
    by_file: Vec<Vec<(usize, f64)>>,
}

impl Holders {
    fn new(policy: &CachingPolicy) -> Self {
        let mut by_file = vec![Vec::new(); policy.n_files()];
        for k in 0..policy.n_users() {
            for (m, &b) in policy.row(k).iter().enumerate() {
                if b > 0.0 {
                    by_file[m].push((k, b));
                }
            }
        }
        Self { by_file }
    }

    fn replace_row(&mut self, k: usize, old: &[f64], new: &[f64]) {
        for (m, (&bo, &bn)) in old.iter().zip(new).enumerate() {
            if bo == bn {
                continue;
            }
            let list = &mut self.by_file[m];
            match list.binary_search_by_key(&k, |e| e.0) {
                Ok(i) if bn > 0.0 => list[i].1 = bn,
                Ok(i) => {
                    list.remove(i);
                }
                Err(i) if bn > 0.0 => list.insert(i, (k, bn)),
                Err(_) => {}
            }
        }
    }
}

/// Access probabilities of one selected user for one realization of the
/// link indicators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccessProbabilities {
    pub p_b: f64,
    pub p_s: f64,
    pub p_d: f64,
}

impl AccessProbabilities {
    /// `(p_b + p_s) + p_d`, which is exactly 1 by construction.
    pub fn total(&self) -> f64 {
        (self.p_b + self.p_s) + self.p_d
    }
}

/// BS, self and D2D access probabilities of active user `k` given which
/// links are currently usable (`indicators[l]`, with `indicators[k] = true`).
pub fn access_probabilities(
    inst: &ClusterInstance,
    policy: &CachingPolicy,
    k: usize,
    indicators: &[bool],
) -> Result<AccessProbabilities> {
    inst.check_policy(policy)?;
    if k >= inst.n_users() || !inst.is_active(k) {
        return Err(Error::param(format!("user {k} is not an active user")));
    }
    if indicators.len() != inst.n_users() || !indicators[k] {
        return Err(Error::param(
            "indicator vector must cover every user and include the user itself",
        ));
    }
    let mut p_b = 0.0;
    let mut p_s = 0.0;
    for m in 0..inst.n_files() {
        let a = inst.prefs.get(k, m);
        let mut miss = 1.0;
        for (l, &usable) in indicators.iter().enumerate() {
            if usable {
                miss *= 1.0 - policy.get(l, m);
            }
        }
        p_b += a * miss;
        p_s += a * policy.get(k, m);
    }
    // Keeping p_b + p_s <= 1 in floating point makes p_d nonnegative and the
    // three probabilities sum to exactly 1.
    if p_b + p_s > 1.0 {
        p_b = 1.0 - p_s;
    }
    let p_d = 1.0 - (p_b + p_s);
    Ok(AccessProbabilities { p_b, p_s, p_d })
}

/// Closed-form expected network utility under the instance's triple.
pub fn expected_utility(inst: &ClusterInstance, policy: &CachingPolicy) -> Result<f64> {
    inst.check_policy(policy)?;
    let holders = Holders::new(policy);
    Ok(inst.terms(policy, &holders).utility(&inst.utility))
}

/// `K × M` matrix of partial derivatives, row-major.
pub fn utility_gradient(inst: &ClusterInstance, policy: &CachingPolicy) -> Result<Vec<Vec<f64>>> {
    inst.check_policy(policy)?;
    let holders = Holders::new(policy);
    let mut out = Vec::with_capacity(inst.n_users());
    for j in 0..inst.n_users() {
        let mut row = vec![0.0; inst.n_files()];
        inst.payoff_row(&holders, j, &mut row);
        out.push(row);
    }
    Ok(out)
}

/// Indices of the `s` largest payoffs; equal payoffs go to the lower index.
pub fn top_s(payoffs: &[f64], s: usize) -> Vec<usize> {
    let order =
        |a: &usize, b: &usize| -> Ordering { payoffs[*b].total_cmp(&payoffs[*a]).then(a.cmp(b)) };
    let mut idx: Vec<usize> = (0..payoffs.len()).collect();
    if s == 0 {
        return Vec::new();
    }
    if s < idx.len() {
        idx.select_nth_unstable_by(s - 1, order);
        idx.truncate(s);
    }
    idx.sort_unstable();
    idx
}

fn indicator_row(n_files: usize, chosen: &[usize]) -> Vec<f64> {
    let mut row = vec![0.0; n_files];
    for &m in chosen {
        row[m] = 1.0;
    }
    row
}

/// Best 0/1 row for `user` with every other row fixed.
pub fn best_response(
    inst: &ClusterInstance,
    policy: &CachingPolicy,
    user: usize,
) -> Result<Vec<f64>> {
    inst.check_policy(policy)?;
    if user >= inst.n_users() {
        return Err(Error::param(format!(
            "user {user} outside 0..{}",
            inst.n_users()
        )));
    }
    let holders = Holders::new(policy);
    let mut payoff = vec![0.0; inst.n_files()];
    inst.payoff_row(&holders, user, &mut payoff);
    Ok(indicator_row(
        inst.n_files(),
        &top_s(&payoff, inst.cache_size),
    ))
}

/// Largest gain available to any user from swapping one cached file for an
/// uncached one (or filling unused capacity), measured on the gradient.
pub fn stationarity_residual(inst: &ClusterInstance, policy: &CachingPolicy) -> Result<f64> {
    let grad = utility_gradient(inst, policy)?;
    let s = inst.cache_size as f64;
    let mut worst: f64 = 0.0;
    for (k, g) in grad.iter().enumerate() {
        let row = policy.row(k);
        let best_out = row
            .iter()
            .zip(g)
            .filter(|(b, _)| **b < 1.0)
            .map(|(_, g)| *g)
            .fold(f64::NEG_INFINITY, f64::max);
        let worst_in = row
            .iter()
            .zip(g)
            .filter(|(b, _)| **b > 0.0)
            .map(|(_, g)| *g)
            .fold(f64::INFINITY, f64::min);
        if best_out.is_finite() && worst_in.is_finite() {
            worst = worst.max(best_out - worst_in);
        }
        if policy.row_sum(k) < s - FEASIBILITY_TOL && best_out.is_finite() {
            worst = worst.max(best_out);
        }
    }
    Ok(worst.max(0.0))
}

/// Starting point of the best-response iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitPolicy {
    #[default]
    Zeros,
    /// Each active user caches its own top-S files.
    Selfish,
}

impl InitPolicy {
    pub fn build(&self, inst: &ClusterInstance) -> CachingPolicy {
        match self {
            InitPolicy::Zeros => CachingPolicy::zeros(inst.n_users(), inst.n_files()),
            InitPolicy::Selfish => crate::baselines::selfish_policy(inst),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct OptimizeOptions {
    /// Users visited in one round; defaults to active then inactive users.
    pub order: Option<Vec<usize>>,
    /// Defaults to `10 K`.
    pub max_rounds: Option<usize>,
    /// Stop once the squared policy change over one round is at most this.
    pub stop_tolerance: Option<f64>,
}

pub const DEFAULT_STOP_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct OptimizerReport {
    pub policy: CachingPolicy,
    /// Utility before the first update and after every single-user update.
    pub utility_trace: Vec<f64>,
    /// Single-user updates performed.
    pub iterations: usize,
    pub rounds: usize,
    pub converged: bool,
    pub stationarity_residual: f64,
}

impl OptimizerReport {
    pub fn final_utility(&self) -> f64 {
        *self
            .utility_trace
            .last()
            .expect("trace holds the initial utility")
    }
}

/// Cycles best responses over users until one full round leaves the policy
/// (numerically) unchanged or the round budget runs out.
pub fn optimize(
    inst: &ClusterInstance,
    init: &CachingPolicy,
    opts: &OptimizeOptions,
) -> Result<OptimizerReport> {
    inst.check_policy(init)?;
    if !init.is_feasible(inst.cache_size) {
        return Err(Error::param(format!(
            "initial policy violates the cache budget of {} files per user",
            inst.cache_size
        )));
    }
    let order = opts.order.clone().unwrap_or_else(|| inst.default_order());
    if order.is_empty() {
        return Err(Error::param("update order is empty"));
    }
    if let Some(u) = order.iter().find(|u| **u >= inst.n_users()) {
        return Err(Error::param(format!(
            "update order names user {u} outside 0..{}",
            inst.n_users()
        )));
    }
    let max_rounds = opts.max_rounds.unwrap_or(10 * inst.n_users());
    let tol = opts.stop_tolerance.unwrap_or(DEFAULT_STOP_TOLERANCE);

    let n_files = inst.n_files();
    let mut policy = init.clone();
    let mut holders = Holders::new(&policy);
    let mut current = inst.terms(&policy, &holders).utility(&inst.utility);
    let mut trace = vec![current];
    let mut payoff = vec![0.0; n_files];
    let mut iterations = 0;
    let mut rounds = 0;
    let mut converged = false;

    while rounds < max_rounds {
        rounds += 1;
        let mut change = 0.0;
        for &k in &order {
            inst.payoff_row(&holders, k, &mut payoff);
            let new_row = indicator_row(n_files, &top_s(&payoff, inst.cache_size));
            let old_row = policy.row(k).to_vec();
            let delta: f64 = old_row
                .iter()
                .zip(&new_row)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if delta > 0.0 {
                change += delta;
                policy.set_row(k, &new_row);
                holders.replace_row(k, &old_row, &new_row);
                current = inst.terms(&policy, &holders).utility(&inst.utility);
            }
            trace.push(current);
            iterations += 1;
        }
        if change <= tol {
            converged = true;
            break;
        }
    }

    let stationarity_residual = stationarity_residual(inst, &policy)?;
    Ok(OptimizerReport {
        policy,
        utility_trace: trace,
        iterations,
        rounds,
        converged,
        stationarity_residual,
    })
}

/// Closed-form network metrics of one policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NetworkMetrics {
    pub throughput: f64,
    pub cost: f64,
    pub hit_rate: f64,
    /// `throughput / cost`, `+inf` when the cost is zero.
    pub ee: f64,
}

impl NetworkMetrics {
    pub fn zero() -> Self {
        Self {
            throughput: 0.0,
            cost: 0.0,
            hit_rate: 0.0,
            ee: 0.0,
        }
    }
}

pub fn evaluate_metrics(
    inst: &ClusterInstance,
    policy: &CachingPolicy,
    mc: &MetricConstants,
) -> Result<NetworkMetrics> {
    inst.check_policy(policy)?;
    let holders = Holders::new(policy);
    let terms = inst.terms(policy, &holders);
    let throughput = terms.utility(&UtilityTriple {
        u_b: mc.t_b,
        u_d: mc.t_d,
        u_s: mc.t_s,
    });
    let cost = -terms.utility(&UtilityTriple {
        u_b: -mc.c_b,
        u_d: -mc.c_d,
        u_s: -mc.c_s,
    });
    let hit_rate = terms.weight_mass - terms.miss_mass;
    let ee = if cost == 0.0 {
        f64::INFINITY
    } else {
        throughput / cost
    };
    Ok(NetworkMetrics {
        throughput,
        cost,
        hit_rate,
        ee,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EeOutcome {
    pub report: OptimizerReport,
    /// Energy efficiency of the returned policy.
    pub t_star: f64,
    pub dinkelbach_iterations: usize,
    /// EE guess used at each outer step.
    pub ee_trace: Vec<f64>,
    pub converged: bool,
}

pub const MAX_DINKELBACH_ITERATIONS: usize = 100;

/// Energy-efficiency design by Dinkelbach iteration on `T - t C`.
///
/// Starts from the throughput design, then alternately re-optimizes the
/// surrogate (warm-started from the previous policy, so EE never drops) and
/// moves `t` to the EE of the new policy, until `|T - t C| <= tol * C`.
pub fn optimize_ee(
    inst: &ClusterInstance,
    mc: &MetricConstants,
    tol: f64,
    opts: &OptimizeOptions,
) -> Result<EeOutcome> {
    mc.validate()?;
    let base = inst.clone().with_utility(throughput_objective(mc)?);
    let mut report = optimize(
        &base,
        &CachingPolicy::zeros(inst.n_users(), inst.n_files()),
        opts,
    )?;
    let metrics = evaluate_metrics(inst, &report.policy, mc)?;
    if !(metrics.cost > 0.0) {
        return Err(Error::Numerical {
            message: "expected cost is zero; energy efficiency is unbounded".into(),
            diagnostics: format!("throughput {}", metrics.throughput),
        });
    }
    let mut t = metrics.ee;
    let mut ee_trace = vec![t];

    for it in 1..=MAX_DINKELBACH_ITERATIONS {
        let surrogate = inst.clone().with_utility(ee_weighted_objective(mc, t)?);
        let next = optimize(&surrogate, &report.policy, opts)?;
        let m = evaluate_metrics(inst, &next.policy, mc)?;
        if !(m.cost > 0.0) {
            return Err(Error::Numerical {
                message: "expected cost is zero; energy efficiency is unbounded".into(),
                diagnostics: format!("Dinkelbach step {it}, t = {t}"),
            });
        }
        let gap = m.throughput - t * m.cost;
        report = next;
        if gap.abs() <= tol * m.cost {
            return Ok(EeOutcome {
                report,
                t_star: m.ee,
                dinkelbach_iterations: it,
                ee_trace,
                converged: true,
            });
        }
        t = m.ee;
        ee_trace.push(t);
    }
    let t_star = evaluate_metrics(inst, &report.policy, mc)?.ee;
    Ok(EeOutcome {
        report,
        t_star,
        dinkelbach_iterations: MAX_DINKELBACH_ITERATIONS,
        ee_trace,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::link_prob_case1;
    use crate::objectives::{cost_objective, hitrate_objective, tradeoff_objective};
    use crate::preference::{generate_preferences, GeneratorParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_prefs(rng: &mut ChaCha8Rng, k: usize, m: usize) -> PreferenceMatrix {
        let rows = (0..k)
            .map(|_| {
                let raw: Vec<f64> = (0..m).map(|_| rng.gen::<f64>().powi(3) + 1e-3).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|x| x / s).collect()
            })
            .collect();
        PreferenceMatrix::from_rows(m, rows).unwrap()
    }

    fn random_links(rng: &mut ChaCha8Rng, k: usize) -> LinkProbabilityMatrix {
        let mut rows = vec![vec![1.0; k]; k];
        for i in 0..k {
            for j in 0..i {
                let p = rng.gen::<f64>();
                rows[i][j] = p;
                rows[j][i] = p;
            }
        }
        LinkProbabilityMatrix::from_rows(rows).unwrap()
    }

    fn random_policy(rng: &mut ChaCha8Rng, k: usize, m: usize, s: usize) -> CachingPolicy {
        let rows = (0..k)
            .map(|_| {
                let raw: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
                let total: f64 = raw.iter().sum();
                raw.iter()
                    .map(|x| (x / total * s as f64 * rng.gen::<f64>()).min(1.0))
                    .collect()
            })
            .collect();
        CachingPolicy::from_rows(m, rows).unwrap()
    }

    fn random_instance(
        rng: &mut ChaCha8Rng,
        k: usize,
        m: usize,
        s: usize,
        t: UtilityTriple,
    ) -> ClusterInstance {
        let ka = rng.gen_range(1..=k);
        let prefs = random_prefs(rng, k, m);
        let links = random_links(rng, k);
        let weights = (0..ka).map(|_| rng.gen_range(0.5..2.0)).collect();
        ClusterInstance::new(prefs, (0..ka).collect(), links, s, t)
            .unwrap()
            .with_weights(weights)
            .unwrap()
    }

    fn some_triple() -> UtilityTriple {
        UtilityTriple::new(1.0, 3.0, 5.0).unwrap()
    }

    /// Utility from the per-user access probabilities, averaging over every
    /// joint outcome of the selected user's links.
    fn utility_by_enumeration(inst: &ClusterInstance, policy: &CachingPolicy) -> f64 {
        let k = inst.n_users();
        let ka = inst.n_active() as f64;
        let u = inst.utility();
        let mut total = 0.0;
        for (slot, &sel) in inst.active_users().iter().enumerate() {
            let others: Vec<usize> = (0..k).filter(|l| *l != sel).collect();
            let mut expected = 0.0;
            for mask in 0..(1u32 << others.len()) {
                let mut ind = vec![false; k];
                ind[sel] = true;
                let mut prob = 1.0;
                for (bit, &l) in others.iter().enumerate() {
                    let on = mask & (1 << bit) != 0;
                    ind[l] = on;
                    let p = inst.links().get(sel, l);
                    prob *= if on { p } else { 1.0 - p };
                }
                let acc = access_probabilities(inst, policy, sel, &ind).unwrap();
                expected += prob * (u.u_d * acc.p_d + u.u_b * acc.p_b + u.u_s * acc.p_s);
            }
            total += inst.weights()[slot] / ka * expected;
        }
        // local self-service of the users that were not selected
        for (slot_k, _) in inst.active_users().iter().enumerate() {
            let _ = slot_k;
            for (slot_l, &l) in inst.active_users().iter().enumerate() {
                if slot_l == slot_k {
                    continue;
                }
                let ps: f64 = (0..inst.n_files())
                    .map(|m| inst.prefs().get(l, m) * policy.get(l, m))
                    .sum();
                total += u.u_s / ka * inst.weights()[slot_l] * ps;
            }
        }
        total
    }

    #[test]
    fn closed_form_matches_access_probability_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let k = rng.gen_range(1..=4);
            let m = rng.gen_range(2..=6);
            let s = rng.gen_range(1..m);
            let inst = random_instance(&mut rng, k, m, s, some_triple());
            let pol = random_policy(&mut rng, k, m, s);
            let closed = expected_utility(&inst, &pol).unwrap();
            let brute = utility_by_enumeration(&inst, &pol);
            assert!(
                (closed - brute).abs() < 1e-12 * brute.abs().max(1.0),
                "{closed} vs {brute}"
            );
        }
    }

    #[test]
    fn single_user_top_s_access() {
        let prefs = PreferenceMatrix::from_rows(4, vec![vec![0.4, 0.3, 0.2, 0.1]]).unwrap();
        let inst =
            ClusterInstance::new(prefs, vec![0], link_prob_case1(1), 2, some_triple()).unwrap();
        let pol = CachingPolicy::from_cached_files(4, &[vec![0, 1]]).unwrap();
        let a = access_probabilities(&inst, &pol, 0, &[true]).unwrap();
        assert!((a.p_s - 0.7).abs() < 1e-15);
        assert_eq!(a.p_d, 0.0);
        assert!((a.p_b - 0.3).abs() < 1e-15);
        let u = expected_utility(&inst, &pol).unwrap();
        assert!((u - (1.0 * 0.3 + 5.0 * 0.7)).abs() < 1e-12);
    }

    #[test]
    fn empty_cache_means_bs_service() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let inst = ClusterInstance::new(
            random_prefs(&mut rng, 3, 5),
            vec![0, 1],
            random_links(&mut rng, 3),
            2,
            some_triple(),
        )
        .unwrap();
        let pol = CachingPolicy::zeros(3, 5);
        let a = access_probabilities(&inst, &pol, 1, &[false, true, false]).unwrap();
        assert_eq!((a.p_b, a.p_s, a.p_d), (1.0, 0.0, 0.0));
        assert!((expected_utility(&inst, &pol).unwrap() - 1.0).abs() < 1e-12);
        let m = evaluate_metrics(
            &inst,
            &pol,
            &MetricConstants::from_radio(&Default::default()),
        )
        .unwrap();
        assert!(m.hit_rate.abs() < 1e-12);
    }

    #[test]
    fn access_probabilities_sum_to_one_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let k = rng.gen_range(1..=5);
            let m = rng.gen_range(2..=8);
            let s = rng.gen_range(1..m);
            let inst = random_instance(&mut rng, k, m, s, some_triple());
            let pol = random_policy(&mut rng, k, m, s);
            let sel = inst.active_users()[rng.gen_range(0..inst.n_active())];
            let ind: Vec<bool> = (0..k).map(|l| l == sel || rng.gen_bool(0.5)).collect();
            let a = access_probabilities(&inst, &pol, sel, &ind).unwrap();
            assert_eq!(a.total(), 1.0);
            for p in [a.p_b, a.p_s, a.p_d] {
                assert!((0.0..=1.0).contains(&p));
            }
        }
    }

    #[test]
    fn access_probabilities_reject_inactive_user() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inst = ClusterInstance::new(
            random_prefs(&mut rng, 2, 3),
            vec![0],
            link_prob_case1(2),
            1,
            some_triple(),
        )
        .unwrap();
        let pol = CachingPolicy::zeros(2, 3);
        assert!(access_probabilities(&inst, &pol, 1, &[true, true]).is_err());
        assert!(access_probabilities(&inst, &pol, 0, &[false, true]).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = random_instance(&mut rng, 3, 5, 2, some_triple());
        let pol = random_policy(&mut rng, 3, 5, 2);
        let g = utility_gradient(&inst, &pol).unwrap();
        let h = 1e-6;
        for j in 0..3 {
            for m in 0..5 {
                let mut rows: Vec<Vec<f64>> = pol.rows().map(|r| r.to_vec()).collect();
                rows[j][m] += h;
                let up = expected_utility(
                    &inst,
                    &CachingPolicy {
                        n_users: 3,
                        n_files: 5,
                        data: rows.concat(),
                    },
                )
                .unwrap();
                rows[j][m] -= 2.0 * h;
                let dn = expected_utility(
                    &inst,
                    &CachingPolicy {
                        n_users: 3,
                        n_files: 5,
                        data: rows.concat(),
                    },
                )
                .unwrap();
                let fd = (up - dn) / (2.0 * h);
                assert!(
                    (fd - g[j][m]).abs() <= 1e-5 * g[j][m].abs().max(1e-3),
                    "({j},{m}) {fd} vs {}",
                    g[j][m]
                );
                assert!(g[j][m] >= -1e-12);
            }
        }
    }

    #[test]
    fn flat_triple_gives_zero_gradient_for_inactive_users() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let prefs = random_prefs(&mut rng, 3, 4);
        let inst = ClusterInstance::new(
            prefs,
            vec![0],
            random_links(&mut rng, 3),
            1,
            UtilityTriple::new(2.0, 2.0, 2.0).unwrap(),
        )
        .unwrap();
        let pol = random_policy(&mut rng, 3, 4, 1);
        let g = utility_gradient(&inst, &pol).unwrap();
        assert!(g[1].iter().chain(&g[2]).all(|x| *x == 0.0));
    }

    fn subsets(m: usize, s: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
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
        rec(0, m, s, &mut cur, &mut out);
        out
    }

    #[test]
    fn single_user_best_response_is_exhaustive_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mc = MetricConstants::from_radio(&Default::default());
        for _ in 0..20 {
            let m = 6;
            let s = 2;
            let prefs = random_prefs(&mut rng, 1, m);
            let inst = ClusterInstance::new(
                prefs.clone(),
                vec![0],
                link_prob_case1(1),
                s,
                throughput_objective(&mc).unwrap(),
            )
            .unwrap();
            let br = best_response(&inst, &CachingPolicy::zeros(1, m), 0).unwrap();
            let got = expected_utility(
                &inst,
                &CachingPolicy::from_rows(m, vec![br.clone()]).unwrap(),
            )
            .unwrap();
            let best = subsets(m, s)
                .iter()
                .map(|c| {
                    expected_utility(
                        &inst,
                        &CachingPolicy::from_cached_files(m, std::slice::from_ref(c)).unwrap(),
                    )
                    .unwrap()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((got - best).abs() <= 1e-9 * best);
            // the chosen files are the two most wanted ones
            let chosen: Vec<usize> = (0..m).filter(|i| br[*i] == 1.0).collect();
            assert_eq!(chosen, top_s(prefs.row(0), s));
        }
    }

    #[test]
    fn inactive_user_serves_what_others_want() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let (k, m, s) = (3, 5, 2);
            let prefs = random_prefs(&mut rng, k, m);
            let links = random_links(&mut rng, k);
            let inst =
                ClusterInstance::new(prefs.clone(), vec![0, 1], links.clone(), s, some_triple())
                    .unwrap();
            let br = best_response(&inst, &CachingPolicy::zeros(k, m), 2).unwrap();
            let demand: Vec<f64> = (0..m)
                .map(|f| (0..2).map(|u| prefs.get(u, f) * links.get(u, 2)).sum())
                .collect();
            let chosen: Vec<usize> = (0..m).filter(|i| br[*i] == 1.0).collect();
            assert_eq!(chosen, top_s(&demand, s));
            // and it is the best over all subsets
            let best = subsets(m, s)
                .iter()
                .map(|c| {
                    let files = vec![vec![], vec![], c.clone()];
                    expected_utility(&inst, &CachingPolicy::from_cached_files(m, &files).unwrap())
                        .unwrap()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            let files = vec![vec![], vec![], chosen];
            let got =
                expected_utility(&inst, &CachingPolicy::from_cached_files(m, &files).unwrap())
                    .unwrap();
            assert!((got - best).abs() <= 1e-12 * best.abs().max(1.0));
        }
    }

    #[test]
    fn top_s_breaks_ties_by_lowest_index() {
        assert_eq!(top_s(&[0.2, 0.5, 0.5, 0.1], 1), vec![1]);
        assert_eq!(top_s(&[0.3, 0.3, 0.3], 2), vec![0, 1]);
        assert_eq!(top_s(&[1.0, 2.0], 0), Vec::<usize>::new());
        assert_eq!(top_s(&[1.0, 2.0], 2), vec![0, 1]);
    }

    #[test]
    fn orthogonal_users_split_the_library_for_hit_rate() {
        let prefs = PreferenceMatrix::from_rows(
            4,
            vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]],
        )
        .unwrap();
        let inst = ClusterInstance::new(
            prefs,
            vec![0, 1],
            link_prob_case1(2),
            1,
            hitrate_objective(2).unwrap(),
        )
        .unwrap();
        let rep = optimize(
            &inst,
            &CachingPolicy::zeros(2, 4),
            &OptimizeOptions::default(),
        )
        .unwrap();
        assert!(rep.converged);
        assert_eq!(rep.policy.cached_files(0), vec![0]);
        assert_eq!(rep.policy.cached_files(1), vec![1]);
        let mc = MetricConstants::from_radio(&Default::default());
        assert!((evaluate_metrics(&inst, &rep.policy, &mc).unwrap().hit_rate - 1.0).abs() < 1e-15);
        // exhaustive oracle over all 16 placements
        let best = (0..4)
            .flat_map(|a| (0..4).map(move |b| (a, b)))
            .map(|(a, b)| {
                let p = CachingPolicy::from_cached_files(4, &[vec![a], vec![b]]).unwrap();
                evaluate_metrics(&inst, &p, &mc).unwrap().hit_rate
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best, 1.0);
    }

    #[test]
    fn stationary_start_converges_in_one_round() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let inst = random_instance(&mut rng, 4, 8, 2, some_triple());
        let first = optimize(
            &inst,
            &CachingPolicy::zeros(4, 8),
            &OptimizeOptions::default(),
        )
        .unwrap();
        assert!(first.converged);
        let again = optimize(&inst, &first.policy, &OptimizeOptions::default()).unwrap();
        assert_eq!(again.rounds, 1);
        assert_eq!(again.policy, first.policy);
        assert_eq!(again.stationarity_residual, 0.0);
    }

    #[test]
    fn optimize_rejects_infeasible_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let inst = random_instance(&mut rng, 2, 4, 1, some_triple());
        let init = CachingPolicy::from_cached_files(4, &[vec![0, 1], vec![]]).unwrap();
        assert_eq!(
            optimize(&inst, &init, &OptimizeOptions::default())
                .unwrap_err()
                .category(),
            "parameter"
        );
    }

    #[test]
    fn constant_triple_makes_utility_policy_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let inst = random_instance(
            &mut rng,
            3,
            5,
            2,
            UtilityTriple::new(1.0, 1.0, 1.0).unwrap(),
        )
        .with_weights(vec![1.0; 0]);
        // weights vector mismatch is rejected
        assert!(inst.is_err());
        let prefs = random_prefs(&mut rng, 3, 5);
        let inst = ClusterInstance::new(
            prefs,
            vec![0, 1, 2],
            random_links(&mut rng, 3),
            2,
            UtilityTriple::new(1.0, 1.0, 1.0).unwrap(),
        )
        .unwrap();
        // with u_b = u_d = u_s = 1 and K_A = 3 only the self term remains
        let u0 = expected_utility(&inst, &CachingPolicy::zeros(3, 5)).unwrap();
        assert!((u0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scaling_the_triple_scales_utility() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let inst = random_instance(&mut rng, 3, 5, 2, some_triple());
        let pol = random_policy(&mut rng, 3, 5, 2);
        let u = expected_utility(&inst, &pol).unwrap();
        let scaled = inst
            .clone()
            .with_utility(UtilityTriple::new(2.5, 7.5, 12.5).unwrap());
        assert!((expected_utility(&scaled, &pol).unwrap() - 2.5 * u).abs() < 1e-12 * u.abs());
    }

    #[test]
    fn metrics_are_consistent_with_objectives() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mc = MetricConstants::from_radio(&Default::default());
        for _ in 0..20 {
            let k = rng.gen_range(1..=4);
            let prefs = random_prefs(&mut rng, k, 6);
            let ka = rng.gen_range(1..=k);
            let inst = ClusterInstance::new(
                prefs,
                (0..ka).collect(),
                random_links(&mut rng, k),
                2,
                some_triple(),
            )
            .unwrap();
            let pol = random_policy(&mut rng, k, 6, 2);
            let m = evaluate_metrics(&inst, &pol, &mc).unwrap();
            let t = expected_utility(
                &inst
                    .clone()
                    .with_utility(throughput_objective(&mc).unwrap()),
                &pol,
            )
            .unwrap();
            let c = expected_utility(
                &inst.clone().with_utility(cost_objective(&mc).unwrap()),
                &pol,
            )
            .unwrap();
            let h = expected_utility(
                &inst.clone().with_utility(hitrate_objective(ka).unwrap()),
                &pol,
            )
            .unwrap();
            assert!((m.throughput - t).abs() <= 1e-12 * t);
            assert!((m.cost + c).abs() <= 1e-12 * c.abs());
            assert!((m.hit_rate - h).abs() <= 1e-12);
            assert!((0.0..=1.0 + 1e-12).contains(&m.hit_rate));
            assert_eq!(m.ee, m.throughput / m.cost);
            // the tradeoff utility is T + zeta T_D K_A H
            let zeta = 0.7;
            let tr = expected_utility(
                &inst
                    .clone()
                    .with_utility(tradeoff_objective(&mc, zeta, ka).unwrap()),
                &pol,
            )
            .unwrap();
            let composed = m.throughput + zeta * mc.t_d * ka as f64 * m.hit_rate;
            assert!((tr - composed).abs() <= 1e-10 * composed);
            // the EE surrogate is T - t C
            let tguess = 0.8 * m.ee;
            let s = expected_utility(
                &inst
                    .clone()
                    .with_utility(ee_weighted_objective(&mc, tguess).unwrap()),
                &pol,
            )
            .unwrap();
            let direct = m.throughput - tguess * m.cost;
            assert!((s - direct).abs() <= 1e-10 * m.throughput);
        }
    }

    #[test]
    fn zero_policy_metrics() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mc = MetricConstants::from_radio(&Default::default());
        let inst = random_instance(&mut rng, 3, 5, 2, some_triple());
        let inst = ClusterInstance::new(
            inst.prefs().clone(),
            vec![0, 1],
            inst.links().clone(),
            2,
            some_triple(),
        )
        .unwrap();
        let m = evaluate_metrics(&inst, &CachingPolicy::zeros(3, 5), &mc).unwrap();
        assert_eq!(m.hit_rate, 0.0);
        assert!((m.throughput - mc.t_b).abs() <= 1e-12 * mc.t_d);
    }

    #[test]
    fn ee_design_reaches_a_dinkelbach_fixed_point() {
        let mc = MetricConstants::from_radio(&Default::default());
        let gp = GeneratorParams {
            seed: 3,
            ..Default::default()
        };
        let prefs = generate_preferences(6, 40, &gp).unwrap();
        let links = LinkProbabilityMatrix::uniform(6, 0.9).unwrap();
        let inst = ClusterInstance::new(
            prefs,
            (0..4).collect(),
            links,
            3,
            throughput_objective(&mc).unwrap(),
        )
        .unwrap();
        let out = optimize_ee(&inst, &mc, 1e-6, &OptimizeOptions::default()).unwrap();
        assert!(out.converged);
        let m = evaluate_metrics(&inst, &out.report.policy, &mc).unwrap();
        assert!((m.throughput - out.t_star * m.cost).abs() <= 1e-6 * m.cost);
        // EE never decreases over the outer loop
        assert!(out
            .ee_trace
            .windows(2)
            .all(|w| w[1] >= w[0] * (1.0 - 1e-12)));
        assert!(out.t_star >= out.ee_trace[0] * (1.0 - 1e-12));
    }

    #[test]
    fn constant_cost_makes_ee_the_throughput_design() {
        // with one active user every policy costs exactly one unit
        let mut mc = MetricConstants::from_radio(&Default::default());
        mc.c_b = 1.0;
        mc.c_d = 1.0;
        mc.c_s = 1.0;
        let gp = GeneratorParams {
            seed: 4,
            ..Default::default()
        };
        let prefs = generate_preferences(4, 30, &gp).unwrap();
        let inst = ClusterInstance::new(
            prefs,
            vec![0],
            LinkProbabilityMatrix::uniform(4, 0.8).unwrap(),
            2,
            throughput_objective(&mc).unwrap(),
        )
        .unwrap();
        let out = optimize_ee(&inst, &mc, 1e-6, &OptimizeOptions::default()).unwrap();
        let thr = optimize(
            &inst,
            &CachingPolicy::zeros(4, 30),
            &OptimizeOptions::default(),
        )
        .unwrap();
        let m = evaluate_metrics(&inst, &out.report.policy, &mc).unwrap();
        assert!((m.cost - 1.0).abs() < 1e-12);
        assert!((m.ee - thr.final_utility()).abs() <= 1e-9 * m.ee);
    }
}
