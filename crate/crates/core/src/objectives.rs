//! Utility triples `(U_B, U_D, U_S)` for the practical design objectives.
//!
//! A triple assigns a payoff to each way a request can be served: by the
//! base station, by a D2D link, or from the user's own cache. Every network
//! metric the optimizer knows about is the expected utility under some
//! triple, so each objective below is just a constructor.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::RadioParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityTriple {
    pub u_b: f64,
    pub u_d: f64,
    pub u_s: f64,
}

impl UtilityTriple {
    /// Triple with `u_b <= u_d <= u_s`.
    pub fn new(u_b: f64, u_d: f64, u_s: f64) -> Result<Self> {
        let t = Self { u_b, u_d, u_s };
        t.check_ordered()?;
        Ok(t)
    }

    /// Triple for a cluster with `k_active` requesting users. Only the weaker
    /// condition `u_b <= u_d <= k_active * u_s` is required; it keeps every
    /// partial derivative of the network utility nonnegative.
    pub fn for_active_users(u_b: f64, u_d: f64, u_s: f64, k_active: usize) -> Result<Self> {
        let t = Self { u_b, u_d, u_s };
        t.check_monotone(k_active)?;
        Ok(t)
    }

    pub fn check_ordered(&self) -> Result<()> {
        if !(self.is_finite() && self.u_b <= self.u_d && self.u_d <= self.u_s) {
            return Err(Error::param(format!(
                "utility ordering u_b <= u_d <= u_s violated: ({}, {}, {})",
                self.u_b, self.u_d, self.u_s
            )));
        }
        Ok(())
    }

    pub fn check_monotone(&self, k_active: usize) -> Result<()> {
        if !(self.is_finite() && self.u_b <= self.u_d && self.u_d <= k_active as f64 * self.u_s) {
            return Err(Error::param(format!(
                "utility ordering u_b <= u_d <= K_A u_s violated for K_A = {k_active}: ({}, {}, {})",
                self.u_b, self.u_d, self.u_s
            )));
        }
        Ok(())
    }

    fn is_finite(&self) -> bool {
        self.u_b.is_finite() && self.u_d.is_finite() && self.u_s.is_finite()
    }
}

/// Per-request throughput and cost of each service mode, plus the
/// throughput/hit-rate tradeoff weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConstants {
    pub t_b: f64,
    pub t_d: f64,
    pub t_s: f64,
    pub c_b: f64,
    pub c_d: f64,
    pub c_s: f64,
    pub zeta: f64,
}

impl MetricConstants {
    /// Throughputs from the minimum rate over each bandwidth, self-cache at
    /// twice the D2D rate; costs are the transmit powers in watts and free
    /// self-access.
    pub fn from_radio(rp: &RadioParams) -> Self {
        let r_min = rp.rate_threshold();
        let t_d = rp.d2d_bandwidth_hz * r_min;
        Self {
            t_b: rp.bs_bandwidth_hz * r_min,
            t_d,
            t_s: 2.0 * t_d,
            c_b: rp.bs_tx_power_w(),
            c_d: rp.d2d_tx_power_w(),
            c_s: 0.0,
            zeta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_b <= self.t_d && self.t_d <= self.t_s) {
            return Err(Error::param(format!(
                "throughputs must satisfy t_b <= t_d <= t_s, got ({}, {}, {})",
                self.t_b, self.t_d, self.t_s
            )));
        }
        if !(self.c_b >= self.c_d && self.c_d >= self.c_s && self.c_s >= 0.0) {
            return Err(Error::param(format!(
                "costs must satisfy c_b >= c_d >= c_s >= 0, got ({}, {}, {})",
                self.c_b, self.c_d, self.c_s
            )));
        }
        Ok(())
    }
}

/// `w_t * T - w_c * C` per service mode.
pub fn weighted_objective(mc: &MetricConstants, w_t: f64, w_c: f64) -> Result<UtilityTriple> {
    if !(w_t >= 0.0 && w_c >= 0.0) {
        return Err(Error::param(format!(
            "weights must be nonnegative, got ({w_t}, {w_c})"
        )));
    }
    mc.validate()?;
    UtilityTriple::new(
        w_t * mc.t_b - w_c * mc.c_b,
        w_t * mc.t_d - w_c * mc.c_d,
        w_t * mc.t_s - w_c * mc.c_s,
    )
}

pub fn throughput_objective(mc: &MetricConstants) -> Result<UtilityTriple> {
    UtilityTriple::new(mc.t_b, mc.t_d, mc.t_s)
}

/// Negated costs: maximizing this utility minimizes the expected cost.
pub fn cost_objective(mc: &MetricConstants) -> Result<UtilityTriple> {
    UtilityTriple::new(-mc.c_b, -mc.c_d, -mc.c_s)
}

/// `(0, 1, 1/K_A)`; the resulting network utility is the hit-rate.
pub fn hitrate_objective(k_active: usize) -> Result<UtilityTriple> {
    if k_active == 0 {
        return Err(Error::param(
            "hit-rate objective needs at least one active user",
        ));
    }
    UtilityTriple::for_active_users(0.0, 1.0, 1.0 / k_active as f64, k_active)
}

/// Throughput plus `zeta * T_D * K_A` times the hit-rate.
pub fn tradeoff_objective(
    mc: &MetricConstants,
    zeta: f64,
    k_active: usize,
) -> Result<UtilityTriple> {
    if !(zeta >= 0.0) {
        return Err(Error::param(format!(
            "zeta must be nonnegative, got {zeta}"
        )));
    }
    let ka = k_active as f64;
    UtilityTriple::for_active_users(
        mc.t_b,
        mc.t_d + zeta * ka * mc.t_d,
        mc.t_s + zeta * mc.t_d,
        k_active,
    )
}

/// Dinkelbach surrogate `T - t C` for an energy-efficiency guess `t`.
pub fn ee_weighted_objective(mc: &MetricConstants, t: f64) -> Result<UtilityTriple> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Range {
            t,
            detail: "EE guess must be finite and nonnegative".into(),
        });
    }
    UtilityTriple::new(
        mc.t_b - t * mc.c_b,
        mc.t_d - t * mc.c_d,
        mc.t_s - t * mc.c_s,
    )
    .map_err(|e| Error::Range {
        t,
        detail: e.to_string(),
    })
}

/// Objective selector used by designs and configuration files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Throughput,
    Cost,
    HitRate,
    Tradeoff(f64),
    EnergyEfficiency,
}

impl Objective {
    /// Triple for a cluster with `k_active` active users. Energy efficiency
    /// has no single triple; its Dinkelbach loop starts from throughput.
    pub fn triple(&self, mc: &MetricConstants, k_active: usize) -> Result<UtilityTriple> {
        match *self {
            Objective::Throughput | Objective::EnergyEfficiency => throughput_objective(mc),
            Objective::Cost => cost_objective(mc),
            Objective::HitRate => hitrate_objective(k_active),
            Objective::Tradeoff(zeta) => tradeoff_objective(mc, zeta, k_active),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Throughput => write!(f, "throughput"),
            Objective::Cost => write!(f, "cost"),
            Objective::HitRate => write!(f, "hitrate"),
            Objective::Tradeoff(z) => write!(f, "tradeoff({z})"),
            Objective::EnergyEfficiency => write!(f, "ee"),
        }
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "throughput" => return Ok(Objective::Throughput),
            "cost" => return Ok(Objective::Cost),
            "hitrate" => return Ok(Objective::HitRate),
            "ee" => return Ok(Objective::EnergyEfficiency),
            _ => {}
        }
        if let Some(arg) = s
            .strip_prefix("tradeoff(")
            .and_then(|r| r.strip_suffix(')'))
        {
            let zeta: f64 = arg
                .trim()
                .parse()
                .map_err(|_| Error::param(format!("bad tradeoff weight in '{s}'")))?;
            if !(zeta >= 0.0 && zeta.is_finite()) {
                return Err(Error::param(format!(
                    "tradeoff weight must be >= 0 in '{s}'"
                )));
            }
            return Ok(Objective::Tradeoff(zeta));
        }
        Err(Error::param(format!(
            "unknown objective '{s}' (expected throughput | cost | hitrate | tradeoff(zeta) | ee)"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_constants() -> MetricConstants {
        MetricConstants::from_radio(&RadioParams::default())
    }

    #[test]
    fn default_constants_follow_radio_setup() {
        let mc = default_constants();
        let r_min = (1.0 + 10f64.powf(0.5)).log2();
        assert!((mc.t_d - 20e6 * r_min).abs() < 1e-6);
        assert!((mc.t_b - 200e3 * r_min).abs() < 1e-6);
        assert_eq!(mc.t_s, 2.0 * mc.t_d);
        assert!((mc.c_b - 10f64.powf(-0.4)).abs() < 1e-15);
        assert!((mc.c_d - 0.1).abs() < 1e-15);
        assert_eq!(mc.c_s, 0.0);
        mc.validate().unwrap();
        let t = throughput_objective(&mc).unwrap();
        assert_eq!((t.u_b, t.u_d, t.u_s), (mc.t_b, mc.t_d, mc.t_s));
    }

    #[test]
    fn cost_objective_negates_costs() {
        let mc = default_constants();
        let c = cost_objective(&mc).unwrap();
        assert_eq!((c.u_b, c.u_d, c.u_s), (-mc.c_b, -mc.c_d, 0.0));
        let bad = MetricConstants {
            c_d: 2.0 * mc.c_b,
            ..mc
        };
        assert!(cost_objective(&bad).is_err());
    }

    #[test]
    fn hitrate_triples() {
        let h = hitrate_objective(1).unwrap();
        assert_eq!((h.u_b, h.u_d, h.u_s), (0.0, 1.0, 1.0));
        let h = hitrate_objective(2).unwrap();
        assert_eq!((h.u_b, h.u_d, h.u_s), (0.0, 1.0, 0.5));
        assert!(hitrate_objective(0).is_err());
    }

    #[test]
    fn tradeoff_with_zero_weight_is_throughput() {
        let mc = default_constants();
        for ka in [1, 5, 40] {
            assert_eq!(
                tradeoff_objective(&mc, 0.0, ka).unwrap(),
                throughput_objective(&mc).unwrap()
            );
        }
        let t = tradeoff_objective(&mc, 1.0, 20).unwrap();
        assert_eq!(t.u_d, mc.t_d + 20.0 * mc.t_d);
        assert_eq!(t.u_s, mc.t_s + mc.t_d);
    }

    #[test]
    fn ee_surrogate_reduces_and_orders() {
        let mc = default_constants();
        assert_eq!(
            ee_weighted_objective(&mc, 0.0).unwrap(),
            throughput_objective(&mc).unwrap()
        );
        // C_B > C_D and T_B < T_D keep the order for any t >= 0
        for t in [1e-3, 1.0, 1e6, 1e9] {
            ee_weighted_objective(&mc, t)
                .unwrap()
                .check_ordered()
                .unwrap();
        }
        let odd = MetricConstants {
            c_s: 0.2,
            c_d: 0.1,
            t_s: mc.t_d,
            ..mc
        };
        let err = ee_weighted_objective(&odd, 1e9).unwrap_err();
        assert!(matches!(err, Error::Range { .. }));
        assert!(ee_weighted_objective(&mc, -1.0).is_err());
    }

    #[test]
    fn weighted_objective_generalizes() {
        let mc = default_constants();
        assert_eq!(
            weighted_objective(&mc, 1.0, 0.0).unwrap(),
            throughput_objective(&mc).unwrap()
        );
        assert_eq!(
            weighted_objective(&mc, 0.0, 1.0).unwrap(),
            cost_objective(&mc).unwrap()
        );
        assert!(weighted_objective(&mc, -1.0, 0.0).is_err());
    }

    #[test]
    fn objective_names_round_trip() {
        for s in ["throughput", "cost", "hitrate", "tradeoff(0.5)", "ee"] {
            let o: Objective = s.parse().unwrap();
            assert_eq!(o.to_string(), s);
        }
        assert!("tradeoff(-1)".parse::<Objective>().is_err());
        assert!("speed".parse::<Objective>().is_err());
    }
}
