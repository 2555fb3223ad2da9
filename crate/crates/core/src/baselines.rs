//! Reference designs: selfish caching, popularity-based design and the
//! homogeneous-preference model.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::objectives::{MetricConstants, Objective};
use crate::optimizer::{
    optimize, optimize_ee, top_s, CachingPolicy, ClusterInstance, OptimizeOptions,
};
use crate::preference::{global_popularity, homogenize, GlobalPopularity};

/// Dinkelbach tolerance used when a design names the `ee` objective.
pub const EE_TOLERANCE: f64 = 1e-6;

/// Every active user caches its own `S` most wanted files; inactive users
/// cache nothing.
pub fn selfish_policy(inst: &ClusterInstance) -> CachingPolicy {
    let mut p = CachingPolicy::zeros(inst.n_users(), inst.n_files());
    for &k in inst.active_users() {
        let mut row = vec![0.0; inst.n_files()];
        for m in top_s(inst.prefs().row(k), inst.cache_size()) {
            row[m] = 1.0;
        }
        p.set_row(k, &row);
    }
    p
}

/// Optimizes as if every user's preferences were `pop`. The returned policy
/// is meant to be evaluated against the true preferences.
pub fn global_popularity_policy(
    inst: &ClusterInstance,
    pop: &GlobalPopularity,
    opts: &OptimizeOptions,
) -> Result<CachingPolicy> {
    let assumed = inst.clone().with_prefs(homogenize(pop, inst.n_users()))?;
    Ok(optimize(
        &assumed,
        &CachingPolicy::zeros(inst.n_users(), inst.n_files()),
        opts,
    )?
    .policy)
}

/// The homogeneous model: preferences replaced by `pop` both for design and
/// for evaluation. Returns the homogeneous instance and its policy.
pub fn homogeneous_model(
    inst: &ClusterInstance,
    pop: &GlobalPopularity,
    opts: &OptimizeOptions,
) -> Result<(ClusterInstance, CachingPolicy)> {
    let homo = inst.clone().with_prefs(homogenize(pop, inst.n_users()))?;
    let policy = optimize(
        &homo,
        &CachingPolicy::zeros(inst.n_users(), inst.n_files()),
        opts,
    )?
    .policy;
    Ok((homo, policy))
}

/// A named caching design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Design {
    /// Individual-preference-aware optimizer.
    Proposed(Objective),
    Selfish,
    /// Optimizer fed the global popularity instead of individual preferences.
    Global(Objective),
    /// Optimized and evaluated under homogeneous preferences.
    Homogeneous(Objective),
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Design::Proposed(o) => write!(f, "proposed:{o}"),
            Design::Selfish => write!(f, "selfish"),
            Design::Global(o) => write!(f, "global:{o}"),
            Design::Homogeneous(o) => write!(f, "homogeneous:{o}"),
        }
    }
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, objective) = match s.split_once(':') {
            Some((k, o)) => (k.trim(), Some(o.trim().parse::<Objective>()?)),
            None => (s, None),
        };
        let objective_or_default = objective.unwrap_or(Objective::Throughput);
        match kind {
            "proposed" => Ok(Design::Proposed(objective_or_default)),
            "selfish" if objective.is_none() => Ok(Design::Selfish),
            "selfish" => Err(Error::param("the selfish design takes no objective")),
            "global" => Ok(Design::Global(objective_or_default)),
            "homogeneous" => Ok(Design::Homogeneous(objective_or_default)),
            other => Err(Error::param(format!(
                "unknown design '{other}' (expected proposed | selfish | global | homogeneous)"
            ))),
        }
    }
}

/// A designed policy together with the instance it should be scored on.
#[derive(Debug, Clone)]
pub struct DesignResult {
    pub policy: CachingPolicy,
    /// True preferences, except for the homogeneous model.
    pub evaluation: ClusterInstance,
}

/// Builds the policy of `design` for `inst`. The instance's own utility
/// triple is replaced by the design's objective. `pop` defaults to the
/// average of the instance's preference rows.
pub fn design_policy(
    design: Design,
    inst: &ClusterInstance,
    mc: &MetricConstants,
    pop: Option<&GlobalPopularity>,
    opts: &OptimizeOptions,
) -> Result<DesignResult> {
    let k_a = inst.n_active();
    let with_objective = |o: Objective| -> Result<ClusterInstance> {
        Ok(inst.clone().with_utility(o.triple(mc, k_a)?))
    };
    let popularity = || -> Result<GlobalPopularity> {
        match pop {
            Some(p) => Ok(p.clone()),
            None => Ok(global_popularity(inst.prefs())),
        }
    };
    let zeros = CachingPolicy::zeros(inst.n_users(), inst.n_files());
    match design {
        Design::Proposed(Objective::EnergyEfficiency) => {
            let out = optimize_ee(inst, mc, EE_TOLERANCE, opts)?;
            Ok(DesignResult {
                policy: out.report.policy,
                evaluation: inst.clone(),
            })
        }
        Design::Proposed(o) => {
            let policy = optimize(&with_objective(o)?, &zeros, opts)?.policy;
            Ok(DesignResult {
                policy,
                evaluation: inst.clone(),
            })
        }
        Design::Selfish => Ok(DesignResult {
            policy: selfish_policy(inst),
            evaluation: inst.clone(),
        }),
        Design::Global(o) => {
            let assumed =
                with_objective(o)?.with_prefs(homogenize(&popularity()?, inst.n_users()))?;
            let policy = match o {
                Objective::EnergyEfficiency => {
                    optimize_ee(&assumed, mc, EE_TOLERANCE, opts)?.report.policy
                }
                _ => optimize(&assumed, &zeros, opts)?.policy,
            };
            Ok(DesignResult {
                policy,
                evaluation: inst.clone(),
            })
        }
        Design::Homogeneous(o) => {
            let homo = with_objective(o)?.with_prefs(homogenize(&popularity()?, inst.n_users()))?;
            let policy = match o {
                Objective::EnergyEfficiency => {
                    optimize_ee(&homo, mc, EE_TOLERANCE, opts)?.report.policy
                }
                _ => optimize(&homo, &zeros, opts)?.policy,
            };
            Ok(DesignResult {
                policy,
                evaluation: homo,
            })
        }
    }
}
