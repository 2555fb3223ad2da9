//! Monte Carlo cluster simulation under random-push and priority-push
//! scheduling.
//!
//! A *realization* draws the user counts, positions, shadowing and
//! preference rows of one cluster and asks a policy source for its caching
//! policy. Each realization then runs a number of *draws*: fresh requests
//! and Rayleigh fading (plus fresh positions and shadowing when the geometry
//! is redrawn). Both schedulers are evaluated on the same draw, so their
//! comparison is paired.
//!
//! Each realization uses its own RNG stream derived from `(seed, index)`, so
//! results do not depend on how many threads run them.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    link_prob_case2, link_prob_case3, pathgain, LinkProbabilityMatrix, RadioParams, UserLayout,
};
use crate::error::{Error, Result};
use crate::objectives::{MetricConstants, UtilityTriple};
use crate::optimizer::{CachingPolicy, ClusterInstance};
use crate::preference::PreferenceMatrix;
use crate::stats::{Moments, PairMoments};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduler {
    /// The BS picks one active user uniformly; everyone else only self-serves.
    #[default]
    RandomPush,
    /// Everyone self-serves; the BS then favors a user it can serve by D2D.
    PriorityPush,
}

impl fmt::Display for Scheduler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheduler::RandomPush => "random_push",
            Scheduler::PriorityPush => "priority_push",
        })
    }
}

impl FromStr for Scheduler {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "random_push" | "random" => Ok(Scheduler::RandomPush),
            "priority_push" | "priority" => Ok(Scheduler::PriorityPush),
            other => Err(Error::param(format!("unknown scheduler '{other}'"))),
        }
    }
}

/// What changes between draws of one realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryMode {
    /// Positions and shadowing stay put; only fading and requests change.
    /// The design uses per-pair link probabilities of the realized geometry.
    Fixed,
    /// Positions, shadowing and fading are all redrawn; the design uses the
    /// position-averaged link probability.
    #[default]
    Redraw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    /// Cluster side `D` in meters.
    pub side_m: f64,
    /// Active users per m².
    pub lambda_active: f64,
    /// Inactive users per m².
    pub lambda_inactive: f64,
    /// `(K_A, K_I)` overriding the Poisson draws.
    pub fixed_counts: Option<(usize, usize)>,
    pub radio: RadioParams,
    pub reuse_factor: f64,
    pub scheduler: Scheduler,
    pub geometry: GeometryMode,
    pub realizations: usize,
    pub draws_per_realization: usize,
    pub seed: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            side_m: 80.0,
            lambda_active: 0.0,
            lambda_inactive: 0.0,
            fixed_counts: Some((10, 0)),
            radio: RadioParams::default(),
            reuse_factor: 16.0,
            scheduler: Scheduler::RandomPush,
            geometry: GeometryMode::Redraw,
            realizations: 100,
            draws_per_realization: 100,
            seed: 0,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.side_m > 0.0 && self.side_m.is_finite()) {
            problems.push(format!("side_m must be positive, got {}", self.side_m));
        }
        for (name, v) in [
            ("lambda_active", self.lambda_active),
            ("lambda_inactive", self.lambda_inactive),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                problems.push(format!("{name} must be a nonnegative density, got {v}"));
            }
        }
        if !(self.reuse_factor >= 1.0) {
            problems.push(format!(
                "reuse_factor must be >= 1, got {}",
                self.reuse_factor
            ));
        }
        if self.realizations == 0 {
            problems.push("realizations must be at least 1".into());
        }
        if self.draws_per_realization == 0 {
            problems.push("draws_per_realization must be at least 1".into());
        }
        if let Err(e) = self.radio.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::param(problems.join("; ")))
        }
    }

    /// Mean number of active users, `lambda_A D²`, or the fixed count.
    pub fn expected_active(&self) -> f64 {
        match self.fixed_counts {
            Some((a, _)) => a as f64,
            None => self.lambda_active * self.side_m * self.side_m,
        }
    }
}

/// One drawn cluster: users `0..n_active` are active, the rest inactive.
#[derive(Debug, Clone)]
pub struct RealizedCluster {
    index: u64,
    n_active: usize,
    n_inactive: usize,
    layout: UserLayout,
    shadow_gains: Vec<f64>,
    prefs: PreferenceMatrix,
    links: LinkProbabilityMatrix,
}

impl RealizedCluster {
    pub fn new(
        prefs: PreferenceMatrix,
        n_active: usize,
        layout: UserLayout,
        shadow_gains: Vec<f64>,
        links: LinkProbabilityMatrix,
    ) -> Result<Self> {
        let k = prefs.n_users();
        if n_active > k {
            return Err(Error::param(format!(
                "{n_active} active users but only {k} users"
            )));
        }
        if layout.n_users() != k || links.n_users() != k || shadow_gains.len() != k * k {
            return Err(Error::param(
                "layout, shadowing, links and preferences disagree on the user count",
            ));
        }
        Ok(Self {
            index: 0,
            n_active,
            n_inactive: k - n_active,
            layout,
            shadow_gains,
            prefs,
            links,
        })
    }

    /// Realization number within its scenario (0 for hand-built clusters).
    pub fn index(&self) -> u64 {
        self.index
    }
    pub fn n_active(&self) -> usize {
        self.n_active
    }
    pub fn n_inactive(&self) -> usize {
        self.n_inactive
    }
    pub fn n_users(&self) -> usize {
        self.n_active + self.n_inactive
    }
    pub fn layout(&self) -> &UserLayout {
        &self.layout
    }
    pub fn shadow_gains(&self) -> &[f64] {
        &self.shadow_gains
    }
    pub fn prefs(&self) -> &PreferenceMatrix {
        &self.prefs
    }
    pub fn links(&self) -> &LinkProbabilityMatrix {
        &self.links
    }

    /// Optimizer instance with equal weights; needs at least one active user.
    pub fn instance(&self, cache_size: usize, utility: UtilityTriple) -> Result<ClusterInstance> {
        ClusterInstance::new(
            self.prefs.clone(),
            (0..self.n_active).collect(),
            self.links.clone(),
            cache_size,
            utility,
        )
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw_shadow_db<R: Rng + ?Sized>(rp: &RadioParams, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    10f64.powf((rp.shadow_mu_db + rp.shadow_sigma_db * z) / 10.0)
}

fn draw_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<usize> {
    if mean == 0.0 {
        return Ok(0);
    }
    let p = Poisson::new(mean).map_err(|e| Error::param(format!("Poisson mean {mean}: {e}")))?;
    let x: f64 = p.sample(rng);
    Ok(x as usize)
}

/// Symmetric `K × K` lognormal shadow gains with unit diagonal.
fn draw_shadow_matrix<R: Rng + ?Sized>(n: usize, rp: &RadioParams, rng: &mut R) -> Vec<f64> {
    let mut g = vec![1.0; n * n];
    for k in 0..n {
        for l in k + 1..n {
            let s = draw_shadow_db(rp, rng);
            g[k * n + l] = s;
            g[l * n + k] = s;
        }
    }
    g
}

fn realize_with<R: Rng + ?Sized>(
    sp: &ScenarioParams,
    pool: &PreferenceMatrix,
    index: u64,
    case3: Option<f64>,
    rng: &mut R,
) -> Result<RealizedCluster> {
    let area = sp.side_m * sp.side_m;
    let (n_active, n_inactive) = match sp.fixed_counts {
        Some(c) => c,
        None => (
            draw_count(sp.lambda_active * area, rng)?,
            draw_count(sp.lambda_inactive * area, rng)?,
        ),
    };
    let k = n_active + n_inactive;
    if k > pool.n_users() {
        return Err(Error::param(format!(
            "cluster of {k} users needs a preference pool at least that large (pool has {})",
            pool.n_users()
        )));
    }
    let layout = UserLayout::random(k, sp.side_m, rng);
    let shadow = draw_shadow_matrix(k, &sp.radio, rng);
    let rows = sample(rng, pool.n_users(), k).into_vec();
    let prefs = pool.select_rows(&rows)?;
    let links = match (sp.geometry, case3) {
        (GeometryMode::Fixed, _) => link_prob_case2(&layout, &shadow, &sp.radio)?,
        (GeometryMode::Redraw, Some(p)) => LinkProbabilityMatrix::uniform(k, p)?,
        (GeometryMode::Redraw, None) => {
            LinkProbabilityMatrix::uniform(k, link_prob_case3(sp.side_m, &sp.radio)?)?
        }
    };
    let mut rc = RealizedCluster::new(prefs, n_active, layout, shadow, links)?;
    rc.index = index;
    Ok(rc)
}

/// Draws realization `index` of the scenario, taking preference rows from
/// `pool` without replacement.
pub fn realize_cluster(
    sp: &ScenarioParams,
    pool: &PreferenceMatrix,
    index: u64,
) -> Result<RealizedCluster> {
    sp.validate()?;
    realize_with(sp, pool, index, None, &mut stream_rng(sp.seed, index))
}

/// Realizations `0..sp.realizations`, identical to the clusters that
/// [`simulate`] draws for the same parameters.
pub fn realize_clusters(
    sp: &ScenarioParams,
    pool: &PreferenceMatrix,
) -> Result<Vec<RealizedCluster>> {
    sp.validate()?;
    let case3 = case3_scalar(sp)?;
    (0..sp.realizations as u64)
        .into_par_iter()
        .map(|i| realize_with(sp, pool, i, case3, &mut stream_rng(sp.seed, i)))
        .collect()
}

fn case3_scalar(sp: &ScenarioParams) -> Result<Option<f64>> {
    match sp.geometry {
        GeometryMode::Redraw => Ok(Some(link_prob_case3(sp.side_m, &sp.radio)?)),
        GeometryMode::Fixed => Ok(None),
    }
}

/// Mean and standard error of one simulated quantity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    /// `|mean - value| <= k * se`.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.se
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationEstimate {
    pub scheduler: Scheduler,
    /// Bits/s per cluster.
    pub throughput: Estimate,
    /// Bits/s/m².
    pub area_throughput: Estimate,
    /// Joules/s per cluster.
    pub energy: Estimate,
    /// Bits/Joule, ratio of the throughput and energy means.
    pub ee: Estimate,
    pub hit_rate: Estimate,
    pub realizations: usize,
    pub draws_per_realization: usize,
    /// Realizations that had no active user.
    pub empty_realizations: usize,
}

/// Per-realization summary, suitable for CSV output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizationRecord {
    pub realization: u64,
    pub n_active: usize,
    pub n_inactive: usize,
    /// How the random-push selected user was served, counted over draws.
    pub selected_self: u64,
    pub selected_d2d: u64,
    pub selected_bs: u64,
    pub random_throughput: f64,
    pub random_energy: f64,
    pub priority_throughput: f64,
    pub priority_energy: f64,
    pub hit_rate: f64,
}

/// Both schedulers evaluated on the same draws.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationRun {
    pub random_push: SimulationEstimate,
    pub priority_push: SimulationEstimate,
    /// Paired difference, priority minus random throughput.
    pub throughput_gain: Estimate,
    pub records: Vec<RealizationRecord>,
}

impl SimulationRun {
    pub fn estimate(&self, scheduler: Scheduler) -> &SimulationEstimate {
        match scheduler {
            Scheduler::RandomPush => &self.random_push,
            Scheduler::PriorityPush => &self.priority_push,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Served {
    SelfCache,
    D2d,
    Bs,
}

#[derive(Debug, Clone, Copy, Default)]
struct DrawTotals {
    random: (f64, f64),
    priority: (f64, f64),
    hit_rate: f64,
}

/// Per-draw state that is reset cheaply between draws.
struct Scratch {
    /// 0 unknown, 1 usable, 2 in outage.
    pair: Vec<u8>,
    touched: Vec<usize>,
    positions: Vec<[f64; 2]>,
    self_hit: Vec<bool>,
    servable: Vec<bool>,
}

struct ClusterSampler<'a> {
    rc: &'a RealizedCluster,
    mc: &'a MetricConstants,
    rp: &'a RadioParams,
    geometry: GeometryMode,
    side: f64,
    holders: Vec<Vec<usize>>,
    held: Vec<Vec<bool>>,
    cumulative: Vec<Vec<f64>>,
    threshold: f64,
}

impl<'a> ClusterSampler<'a> {
    fn new(
        rc: &'a RealizedCluster,
        policy: &CachingPolicy,
        sp: &'a ScenarioParams,
        mc: &'a MetricConstants,
    ) -> Result<Self> {
        let k = rc.n_users();
        let m = rc.prefs.n_files();
        if policy.n_users() != k || policy.n_files() != m {
            return Err(Error::param(format!(
                "policy is {}×{} but the cluster is {k}×{m}",
                policy.n_users(),
                policy.n_files()
            )));
        }
        if !policy.is_integral() {
            return Err(Error::param(
                "the simulator needs a deterministic (0/1) caching policy",
            ));
        }
        let mut holders = vec![Vec::new(); m];
        let mut held = vec![vec![false; m]; k];
        for u in 0..k {
            for f in policy.cached_files(u) {
                holders[f].push(u);
                held[u][f] = true;
            }
        }
        let cumulative = (0..rc.n_active)
            .map(|u| {
                let mut acc = 0.0;
                rc.prefs
                    .row(u)
                    .iter()
                    .map(|a| {
                        acc += a;
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            rc,
            mc,
            rp: &sp.radio,
            geometry: sp.geometry,
            side: sp.side_m,
            holders,
            held,
            cumulative,
            threshold: sp.radio.outage_threshold(),
        })
    }

    fn scratch(&self) -> Scratch {
        let k = self.rc.n_users();
        Scratch {
            pair: vec![0; k * k],
            touched: Vec::new(),
            positions: self.rc.layout.positions().to_vec(),
            self_hit: vec![false; self.rc.n_active],
            servable: vec![false; self.rc.n_active],
        }
    }

    fn request<R: Rng + ?Sized>(&self, user: usize, rng: &mut R) -> usize {
        let cum = &self.cumulative[user];
        let u = rng.gen::<f64>() * cum[cum.len() - 1];
        cum.partition_point(|c| *c <= u).min(cum.len() - 1)
    }

    /// Instantaneous D2D feasibility of the pair, drawn once per draw.
    fn usable<R: Rng + ?Sized>(&self, a: usize, b: usize, s: &mut Scratch, rng: &mut R) -> bool {
        let k = self.rc.n_users();
        let idx = a * k + b;
        if s.pair[idx] == 0 {
            let mean_gain = match self.geometry {
                GeometryMode::Fixed => {
                    self.rc.shadow_gains[idx] * pathgain(self.rc.layout.distance(a, b), self.rp)
                }
                GeometryMode::Redraw => {
                    let (p, q) = (s.positions[a], s.positions[b]);
                    draw_shadow_db(self.rp, rng)
                        * pathgain((p[0] - q[0]).hypot(p[1] - q[1]), self.rp)
                }
            };
            let fading: f64 = Exp1.sample(rng);
            let v = if fading * mean_gain > self.threshold {
                1
            } else {
                2
            };
            s.pair[idx] = v;
            s.pair[b * k + a] = v;
            s.touched.push(idx);
            s.touched.push(b * k + a);
        }
        s.pair[idx] == 1
    }

    fn draw<R: Rng + ?Sized>(&self, s: &mut Scratch, rng: &mut R) -> (DrawTotals, Served) {
        for idx in s.touched.drain(..) {
            s.pair[idx] = 0;
        }
        if self.geometry == GeometryMode::Redraw {
            for p in s.positions.iter_mut() {
                *p = [rng.gen::<f64>() * self.side, rng.gen::<f64>() * self.side];
            }
        }
        let ka = self.rc.n_active;
        let mut n_self = 0usize;
        let mut n_hit = 0usize;
        for u in 0..ka {
            let f = self.request(u, rng);
            s.self_hit[u] = self.held[u][f];
            s.servable[u] = false;
            if s.self_hit[u] {
                n_self += 1;
                n_hit += 1;
                continue;
            }
            for &h in &self.holders[f] {
                if self.usable(u, h, s, rng) {
                    s.servable[u] = true;
                    n_hit += 1;
                    break;
                }
            }
        }
        // one uniform for the scheduler decision, whichever scheduler is used
        let choice = rng.gen::<f64>();
        let pick = |n: usize| ((choice * n as f64) as usize).min(n - 1);

        let mc = self.mc;
        let base_t = mc.t_s * n_self as f64;
        let base_c = mc.c_s * n_self as f64;

        let sel = pick(ka);
        let served = if s.self_hit[sel] {
            Served::SelfCache
        } else if s.servable[sel] {
            Served::D2d
        } else {
            Served::Bs
        };
        let random = match served {
            Served::SelfCache => (base_t, base_c),
            Served::D2d => (base_t + mc.t_d, base_c + mc.c_d),
            Served::Bs => (base_t + mc.t_b, base_c + mc.c_b),
        };

        let n_d2d = s.servable.iter().filter(|x| **x).count();
        let priority = if n_d2d > 0 {
            (base_t + mc.t_d, base_c + mc.c_d)
        } else if n_self < ka {
            (base_t + mc.t_b, base_c + mc.c_b)
        } else {
            (base_t, base_c)
        };

        let totals = DrawTotals {
            random,
            priority,
            hit_rate: n_hit as f64 / ka as f64,
        };
        (totals, served)
    }
}

#[derive(Debug, Clone, Default)]
struct RealizationStats {
    random: PairMoments,
    priority: PairMoments,
    hit: Moments,
    gain: Moments,
    served: [u64; 3],
}

fn run_draws<R: Rng + ?Sized>(
    rc: &RealizedCluster,
    policy: &CachingPolicy,
    sp: &ScenarioParams,
    mc: &MetricConstants,
    draws: usize,
    rng: &mut R,
) -> Result<RealizationStats> {
    let mut st = RealizationStats::default();
    if rc.n_active == 0 {
        for _ in 0..draws {
            st.random.push(0.0, 0.0);
            st.priority.push(0.0, 0.0);
            st.hit.push(0.0);
            st.gain.push(0.0);
        }
        return Ok(st);
    }
    let sampler = ClusterSampler::new(rc, policy, sp, mc)?;
    let mut scratch = sampler.scratch();
    for _ in 0..draws {
        let (t, served) = sampler.draw(&mut scratch, rng);
        st.random.push(t.random.0, t.random.1);
        st.priority.push(t.priority.0, t.priority.1);
        st.hit.push(t.hit_rate);
        st.gain.push(t.priority.0 - t.random.0);
        st.served[served as usize] += 1;
    }
    Ok(st)
}

fn estimate_from(
    scheduler: Scheduler,
    te: &PairMoments,
    hit: &Moments,
    sp: &ScenarioParams,
    empty: usize,
) -> SimulationEstimate {
    let area = sp.side_m * sp.side_m;
    let (ee, ee_se) = te.ratio();
    SimulationEstimate {
        scheduler,
        throughput: Estimate {
            mean: te.mean_x,
            se: te.se_x(),
        },
        area_throughput: Estimate {
            mean: te.mean_x / area,
            se: te.se_x() / area,
        },
        energy: Estimate {
            mean: te.mean_y,
            se: te.se_y(),
        },
        ee: Estimate {
            mean: ee,
            se: ee_se,
        },
        hit_rate: Estimate {
            mean: hit.mean,
            se: hit.se(),
        },
        realizations: sp.realizations,
        draws_per_realization: sp.draws_per_realization,
        empty_realizations: empty,
    }
}

fn summarize(
    per_realization: Vec<(RealizationRecord, RealizationStats)>,
    sp: &ScenarioParams,
) -> SimulationRun {
    let empty = per_realization
        .iter()
        .filter(|(r, _)| r.n_active == 0)
        .count();
    let (random, priority, hit, gain) = if per_realization.len() == 1 {
        // a single realization: draws are the independent samples
        let st = &per_realization[0].1;
        (st.random, st.priority, st.hit, st.gain)
    } else {
        let mut random = PairMoments::default();
        let mut priority = PairMoments::default();
        let mut hit = Moments::default();
        let mut gain = Moments::default();
        for (_, st) in &per_realization {
            random.push(st.random.mean_x, st.random.mean_y);
            priority.push(st.priority.mean_x, st.priority.mean_y);
            hit.push(st.hit.mean);
            gain.push(st.gain.mean);
        }
        (random, priority, hit, gain)
    };
    SimulationRun {
        random_push: estimate_from(Scheduler::RandomPush, &random, &hit, sp, empty),
        priority_push: estimate_from(Scheduler::PriorityPush, &priority, &hit, sp, empty),
        throughput_gain: Estimate {
            mean: gain.mean,
            se: gain.se(),
        },
        records: per_realization.into_iter().map(|(r, _)| r).collect(),
    }
}

fn record(rc: &RealizedCluster, st: &RealizationStats) -> RealizationRecord {
    RealizationRecord {
        realization: rc.index,
        n_active: rc.n_active,
        n_inactive: rc.n_inactive,
        selected_self: st.served[Served::SelfCache as usize],
        selected_d2d: st.served[Served::D2d as usize],
        selected_bs: st.served[Served::Bs as usize],
        random_throughput: st.random.mean_x,
        random_energy: st.random.mean_y,
        priority_throughput: st.priority.mean_x,
        priority_energy: st.priority.mean_y,
        hit_rate: st.hit.mean,
    }
}

/// Simulates `sp.realizations` independent clusters. `policy_source` is
/// called once per realization with at least one active user.
pub fn simulate<F>(
    policy_source: F,
    pool: &PreferenceMatrix,
    sp: &ScenarioParams,
    mc: &MetricConstants,
) -> Result<SimulationRun>
where
    F: Fn(&RealizedCluster) -> Result<CachingPolicy> + Sync,
{
    sp.validate()?;
    mc.validate()?;
    let case3 = case3_scalar(sp)?;
    let results: Vec<Result<(RealizationRecord, RealizationStats)>> = (0..sp.realizations as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(sp.seed, i);
            let rc = realize_with(sp, pool, i, case3, &mut rng)?;
            let policy = if rc.n_active == 0 {
                CachingPolicy::zeros(rc.n_users(), pool.n_files())
            } else {
                policy_source(&rc)?
            };
            let st = run_draws(&rc, &policy, sp, mc, sp.draws_per_realization, &mut rng)?;
            Ok((record(&rc, &st), st))
        })
        .collect();
    let per_realization = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(summarize(per_realization, sp))
}

pub fn simulate_random_push<F>(
    policy_source: F,
    pool: &PreferenceMatrix,
    sp: &ScenarioParams,
    mc: &MetricConstants,
) -> Result<SimulationEstimate>
where
    F: Fn(&RealizedCluster) -> Result<CachingPolicy> + Sync,
{
    Ok(simulate(policy_source, pool, sp, mc)?.random_push)
}

pub fn simulate_priority_push<F>(
    policy_source: F,
    pool: &PreferenceMatrix,
    sp: &ScenarioParams,
    mc: &MetricConstants,
) -> Result<SimulationEstimate>
where
    F: Fn(&RealizedCluster) -> Result<CachingPolicy> + Sync,
{
    Ok(simulate(policy_source, pool, sp, mc)?.priority_push)
}

/// Simulates one given cluster and policy for `sp.draws_per_realization`
/// draws (counts, pool and realization settings of `sp` are ignored).
pub fn simulate_cluster(
    rc: &RealizedCluster,
    policy: &CachingPolicy,
    sp: &ScenarioParams,
    mc: &MetricConstants,
) -> Result<SimulationRun> {
    sp.validate()?;
    mc.validate()?;
    let mut rng = stream_rng(sp.seed, 0);
    let st = run_draws(rc, policy, sp, mc, sp.draws_per_realization, &mut rng)?;
    let single = ScenarioParams {
        realizations: 1,
        ..sp.clone()
    };
    Ok(summarize(vec![(record(rc, &st), st)], &single))
}
