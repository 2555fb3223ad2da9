//! Experiment runners behind the CLI subcommands.

use std::collections::BTreeMap;
use std::sync::Mutex;

use d2d_cache::baselines::{design_policy, Design};
use d2d_cache::channel::power_control;
use d2d_cache::objectives::{throughput_objective, MetricConstants, Objective};
use d2d_cache::optimizer::{
    evaluate_metrics, optimize, optimize_ee, CachingPolicy, NetworkMetrics, OptimizeOptions,
};
use d2d_cache::preference::{
    generate_preferences, global_popularity, GlobalPopularity, PreferenceMatrix,
};
use d2d_cache::simulator::{
    realize_cluster, realize_clusters, simulate, RealizationRecord, RealizedCluster,
    ScenarioParams, Scheduler, SimulationRun,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{variable_name, ExperimentConfig, SweepVariable};
use crate::error::HarnessError;

type Result<T> = std::result::Result<T, HarnessError>;

/// Resolved configuration plus the shared preference pool.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub designs: Vec<Design>,
    pub pool: PreferenceMatrix,
    pub popularity: GlobalPopularity,
}

impl Context {
    pub fn new(cfg: ExperimentConfig, needs: Option<SweepVariable>) -> Result<Self> {
        cfg.validate(needs)?;
        let designs = cfg.parsed_designs()?;
        let p = &cfg.preferences;
        log::info!(
            "generating a pool of {} users over {} files",
            p.pool_size,
            p.n_files
        );
        let pool = generate_preferences(p.pool_size, p.n_files, &p.generator(cfg.seed))?;
        let popularity = global_popularity(&pool);
        Ok(Self {
            cfg,
            designs,
            pool,
            popularity,
        })
    }

    /// Scenario of one sweep point (or the base scenario).
    pub fn scenario(&self, point: Option<f64>) -> Result<ScenarioParams> {
        let mut sp = self.cfg.scenario.clone();
        sp.seed = self.cfg.seed;
        if let (Some(v), Some(sweep)) = (point, &self.cfg.sweep) {
            match sweep.variable {
                SweepVariable::ActiveUsers => {
                    sp.fixed_counts = Some((v as usize, sweep.inactive_users))
                }
                SweepVariable::ClusterSize => {
                    // user counts follow the densities as the area grows
                    sp.fixed_counts = None;
                    sp.side_m = v;
                    if sweep.power_control {
                        sp.radio.d2d_tx_power_dbm = power_control(v, &sp.radio, sp.reuse_factor)?;
                    }
                }
            }
        }
        Ok(sp)
    }

    pub fn metric_constants(&self, sp: &ScenarioParams) -> MetricConstants {
        self.cfg.metric_constants(&sp.radio)
    }

    fn sweep_points(&self) -> Vec<Option<f64>> {
        match &self.cfg.sweep {
            Some(s) => s.values.iter().map(|v| Some(*v)).collect(),
            None => vec![None],
        }
    }
}

/// One output line: a design at one sweep point (and, when simulated, one
/// scheduler). Column order is the field order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub design: String,
    pub sweep_variable: String,
    pub sweep_value: Option<f64>,
    pub side_m: f64,
    pub d2d_tx_power_dbm: f64,
    pub realizations: usize,
    pub mean_active_users: f64,
    pub mean_inactive_users: f64,
    pub analytic_throughput: f64,
    pub analytic_area_throughput: f64,
    pub analytic_cost: f64,
    pub analytic_hit_rate: f64,
    pub analytic_ee: f64,
    pub scheduler: Option<Scheduler>,
    pub sim_throughput: Option<f64>,
    pub sim_throughput_se: Option<f64>,
    pub sim_area_throughput: Option<f64>,
    pub sim_area_throughput_se: Option<f64>,
    pub sim_energy: Option<f64>,
    pub sim_energy_se: Option<f64>,
    pub sim_ee: Option<f64>,
    pub sim_ee_se: Option<f64>,
    pub sim_hit_rate: Option<f64>,
    pub sim_hit_rate_se: Option<f64>,
    /// Paired priority-minus-random throughput, scheduler comparison only.
    pub priority_gain: Option<f64>,
    pub priority_gain_se: Option<f64>,
}

/// Per-realization simulation summary with its design and sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordRow {
    pub design: String,
    pub sweep_value: Option<f64>,
    pub realization: u64,
    pub n_active: usize,
    pub n_inactive: usize,
    pub selected_self: u64,
    pub selected_d2d: u64,
    pub selected_bs: u64,
    pub random_throughput: f64,
    pub random_energy: f64,
    pub priority_throughput: f64,
    pub priority_energy: f64,
    pub hit_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub records: Vec<RecordRow>,
}

/// Closed-form metrics averaged over the realizations of one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticSummary {
    pub throughput: f64,
    pub cost: f64,
    pub hit_rate: f64,
    /// Ratio of the mean throughput to the mean cost.
    pub ee: f64,
    pub mean_active: f64,
    pub mean_inactive: f64,
}

fn summarize(per: &BTreeMap<u64, (usize, usize, NetworkMetrics)>) -> AnalyticSummary {
    let n = per.len().max(1) as f64;
    let mut s = AnalyticSummary {
        throughput: 0.0,
        cost: 0.0,
        hit_rate: 0.0,
        ee: 0.0,
        mean_active: 0.0,
        mean_inactive: 0.0,
    };
    for (ka, ki, m) in per.values() {
        s.throughput += m.throughput / n;
        s.cost += m.cost / n;
        s.hit_rate += m.hit_rate / n;
        s.mean_active += *ka as f64 / n;
        s.mean_inactive += *ki as f64 / n;
    }
    s.ee = if s.cost == 0.0 {
        if s.throughput == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        s.throughput / s.cost
    };
    s
}

/// Designs one realized cluster and scores the policy analytically.
fn design_cluster(
    ctx: &Context,
    design: Design,
    rc: &RealizedCluster,
    mc: &MetricConstants,
) -> Result<(CachingPolicy, NetworkMetrics)> {
    let inst = rc.instance(ctx.cfg.cache_size, throughput_objective(mc)?)?;
    let r = design_policy(
        design,
        &inst,
        mc,
        Some(&ctx.popularity),
        &OptimizeOptions::default(),
    )?;
    let m = evaluate_metrics(&r.evaluation, &r.policy, mc)?;
    Ok((r.policy, m))
}

/// Runs one design at one scenario: closed forms always, simulation when
/// configured.
pub fn evaluate_point(
    ctx: &Context,
    sp: &ScenarioParams,
    design: Design,
    simulate_too: bool,
) -> Result<(AnalyticSummary, Option<SimulationRun>)> {
    let mc = ctx.metric_constants(sp);
    let per: Mutex<BTreeMap<u64, (usize, usize, NetworkMetrics)>> = Mutex::new(BTreeMap::new());
    let note = |rc: &RealizedCluster, m: NetworkMetrics| {
        per.lock()
            .expect("poisoned")
            .insert(rc.index(), (rc.n_active(), rc.n_inactive(), m));
    };
    let run = if simulate_too {
        let source = |rc: &RealizedCluster| -> d2d_cache::Result<CachingPolicy> {
            let (policy, m) = design_cluster(ctx, design, rc, &mc).map_err(|e| match e {
                HarnessError::Core(c) => c,
                other => d2d_cache::Error::Parameter(other.to_string()),
            })?;
            note(rc, m);
            Ok(policy)
        };
        let run = simulate(source, &ctx.pool, sp, &mc)?;
        // empty clusters never reach the policy source
        for r in &run.records {
            if r.n_active == 0 {
                per.lock()
                    .expect("poisoned")
                    .insert(r.realization, (0, r.n_inactive, NetworkMetrics::zero()));
            }
        }
        Some(run)
    } else {
        let clusters = realize_clusters(sp, &ctx.pool)?;
        clusters.par_iter().try_for_each(|rc| -> Result<()> {
            if rc.n_active() == 0 {
                note(rc, NetworkMetrics::zero());
            } else {
                let (_, m) = design_cluster(ctx, design, rc, &mc)?;
                note(rc, m);
            }
            Ok(())
        })?;
        None
    };
    let per = per.into_inner().expect("poisoned");
    Ok((summarize(&per), run))
}

fn base_row(
    ctx: &Context,
    sp: &ScenarioParams,
    design: Design,
    point: Option<f64>,
    a: &AnalyticSummary,
) -> ResultRow {
    let area = sp.side_m * sp.side_m;
    ResultRow {
        design: design.to_string(),
        sweep_variable: ctx
            .cfg
            .sweep
            .as_ref()
            .map(|s| variable_name(s.variable).to_string())
            .unwrap_or_default(),
        sweep_value: point,
        side_m: sp.side_m,
        d2d_tx_power_dbm: sp.radio.d2d_tx_power_dbm,
        realizations: sp.realizations,
        mean_active_users: a.mean_active,
        mean_inactive_users: a.mean_inactive,
        analytic_throughput: a.throughput,
        analytic_area_throughput: a.throughput / area,
        analytic_cost: a.cost,
        analytic_hit_rate: a.hit_rate,
        analytic_ee: a.ee,
        scheduler: None,
        sim_throughput: None,
        sim_throughput_se: None,
        sim_area_throughput: None,
        sim_area_throughput_se: None,
        sim_energy: None,
        sim_energy_se: None,
        sim_ee: None,
        sim_ee_se: None,
        sim_hit_rate: None,
        sim_hit_rate_se: None,
        priority_gain: None,
        priority_gain_se: None,
    }
}

fn with_simulation(mut row: ResultRow, run: &SimulationRun, scheduler: Scheduler) -> ResultRow {
    let e = run.estimate(scheduler);
    row.scheduler = Some(scheduler);
    row.sim_throughput = Some(e.throughput.mean);
    row.sim_throughput_se = Some(e.throughput.se);
    row.sim_area_throughput = Some(e.area_throughput.mean);
    row.sim_area_throughput_se = Some(e.area_throughput.se);
    row.sim_energy = Some(e.energy.mean);
    row.sim_energy_se = Some(e.energy.se);
    row.sim_ee = Some(e.ee.mean);
    row.sim_ee_se = Some(e.ee.se);
    row.sim_hit_rate = Some(e.hit_rate.mean);
    row.sim_hit_rate_se = Some(e.hit_rate.se);
    row
}

fn records_of(design: Design, point: Option<f64>, run: &SimulationRun) -> Vec<RecordRow> {
    run.records
        .iter()
        .map(|r: &RealizationRecord| RecordRow {
            design: design.to_string(),
            sweep_value: point,
            realization: r.realization,
            n_active: r.n_active,
            n_inactive: r.n_inactive,
            selected_self: r.selected_self,
            selected_d2d: r.selected_d2d,
            selected_bs: r.selected_bs,
            random_throughput: r.random_throughput,
            random_energy: r.random_energy,
            priority_throughput: r.priority_throughput,
            priority_energy: r.priority_energy,
            hit_rate: r.hit_rate,
        })
        .collect()
}

/// Every sweep point × design, one row each, using the configured scheduler.
fn run_sweep(ctx: &Context) -> Result<ResultTable> {
    let mut table = ResultTable::default();
    for point in ctx.sweep_points() {
        let sp = ctx.scenario(point)?;
        for &design in &ctx.designs {
            log::info!("{design} at {:?}", point);
            let (a, run) = evaluate_point(ctx, &sp, design, ctx.cfg.simulate)?;
            let row = base_row(ctx, &sp, design, point, &a);
            match run {
                Some(run) => {
                    table.rows.push(with_simulation(row, &run, sp.scheduler));
                    table.records.extend(records_of(design, point, &run));
                }
                None => table.rows.push(row),
            }
        }
    }
    Ok(table)
}

/// Sweep over the number of active users.
pub fn run_user_sweep(ctx: &Context) -> Result<ResultTable> {
    require(ctx, SweepVariable::ActiveUsers)?;
    run_sweep(ctx)
}

/// Sweep over the cluster side with Poisson user counts and power control.
pub fn run_cluster_size_sweep(ctx: &Context) -> Result<ResultTable> {
    require(ctx, SweepVariable::ClusterSize)?;
    run_sweep(ctx)
}

/// Base scenario only, every design.
pub fn run_simulation(ctx: &Context) -> Result<ResultTable> {
    let mut table = ResultTable::default();
    let sp = ctx.scenario(None)?;
    for &design in &ctx.designs {
        let (a, run) = evaluate_point(ctx, &sp, design, true)?;
        let run = run.expect("simulation requested");
        table.rows.push(with_simulation(
            base_row(ctx, &sp, design, None, &a),
            &run,
            sp.scheduler,
        ));
        table.records.extend(records_of(design, None, &run));
    }
    Ok(table)
}

/// Same policies under both schedulers on shared draws; two rows per design
/// and point, the priority row carrying the paired gain.
pub fn run_scheduler_compare(ctx: &Context) -> Result<ResultTable> {
    let mut table = ResultTable::default();
    for point in ctx.sweep_points() {
        let sp = ctx.scenario(point)?;
        for &design in &ctx.designs {
            let (a, run) = evaluate_point(ctx, &sp, design, true)?;
            let run = run.expect("simulation requested");
            let row = base_row(ctx, &sp, design, point, &a);
            table
                .rows
                .push(with_simulation(row.clone(), &run, Scheduler::RandomPush));
            let mut pr = with_simulation(row, &run, Scheduler::PriorityPush);
            pr.priority_gain = Some(run.throughput_gain.mean);
            pr.priority_gain_se = Some(run.throughput_gain.se);
            table.rows.push(pr);
            table.records.extend(records_of(design, point, &run));
        }
    }
    Ok(table)
}

fn require(ctx: &Context, v: SweepVariable) -> Result<()> {
    match &ctx.cfg.sweep {
        Some(s) if s.variable == v => Ok(()),
        _ => Err(HarnessError::Config(vec![format!(
            "this subcommand needs sweep.variable = \"{}\"",
            variable_name(v)
        )])),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizerSummary {
    pub utility_trace: Vec<f64>,
    pub iterations: usize,
    pub rounds: usize,
    pub converged: bool,
    pub stationarity_residual: f64,
    pub ee_t_star: Option<f64>,
    pub dinkelbach_iterations: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignReport {
    pub design: String,
    pub metrics: NetworkMetrics,
    pub optimizer: Option<OptimizerSummary>,
}

/// The instance and per-design outcome of the `optimize` subcommand.
pub struct OptimizeOutcome {
    pub cluster: RealizedCluster,
    pub policies: Vec<(Design, CachingPolicy)>,
    pub reports: Vec<DesignReport>,
    pub table: ResultTable,
}

/// Designs realization 0 of the base scenario with every design.
pub fn run_optimize(ctx: &Context) -> Result<OptimizeOutcome> {
    let sp = ctx.scenario(None)?;
    let mc = ctx.metric_constants(&sp);
    let rc = realize_cluster(&sp, &ctx.pool, 0)?;
    if rc.n_active() == 0 {
        return Err(
            d2d_cache::Error::Parameter("the realized cluster has no active users".into()).into(),
        );
    }
    let base = rc.instance(ctx.cfg.cache_size, throughput_objective(&mc)?)?;
    let opts = OptimizeOptions::default();
    let mut policies = Vec::new();
    let mut reports = Vec::new();
    let mut table = ResultTable::default();
    for &design in &ctx.designs {
        let (policy, eval, summary) = match design {
            Design::Proposed(Objective::EnergyEfficiency) => {
                let out = optimize_ee(&base, &mc, d2d_cache::baselines::EE_TOLERANCE, &opts)?;
                let r = &out.report;
                let s = OptimizerSummary {
                    utility_trace: r.utility_trace.clone(),
                    iterations: r.iterations,
                    rounds: r.rounds,
                    converged: r.converged && out.converged,
                    stationarity_residual: r.stationarity_residual,
                    ee_t_star: Some(out.t_star),
                    dinkelbach_iterations: Some(out.dinkelbach_iterations),
                };
                (out.report.policy, base.clone(), Some(s))
            }
            Design::Proposed(o) => {
                let inst = base.clone().with_utility(o.triple(&mc, base.n_active())?);
                let r = optimize(
                    &inst,
                    &CachingPolicy::zeros(base.n_users(), base.n_files()),
                    &opts,
                )?;
                let s = OptimizerSummary {
                    utility_trace: r.utility_trace.clone(),
                    iterations: r.iterations,
                    rounds: r.rounds,
                    converged: r.converged,
                    stationarity_residual: r.stationarity_residual,
                    ee_t_star: None,
                    dinkelbach_iterations: None,
                };
                (r.policy, base.clone(), Some(s))
            }
            other => {
                let r = design_policy(other, &base, &mc, Some(&ctx.popularity), &opts)?;
                (r.policy, r.evaluation, None)
            }
        };
        let metrics = evaluate_metrics(&eval, &policy, &mc)?;
        let a = AnalyticSummary {
            throughput: metrics.throughput,
            cost: metrics.cost,
            hit_rate: metrics.hit_rate,
            ee: metrics.ee,
            mean_active: rc.n_active() as f64,
            mean_inactive: rc.n_inactive() as f64,
        };
        let mut row = base_row(ctx, &sp, design, None, &a);
        row.realizations = 1;
        table.rows.push(row);
        reports.push(DesignReport {
            design: design.to_string(),
            metrics,
            optimizer: summary,
        });
        policies.push((design, policy));
    }
    Ok(OptimizeOutcome {
        cluster: rc,
        policies,
        reports,
        table,
    })
}
