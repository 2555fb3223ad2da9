//! D2D link success probabilities, pathloss and the cluster power-control law.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_piecewise, QuadratureOptions};

const SPEED_OF_LIGHT: f64 = 3e8;

/// Shadowing is integrated over `mu ± SHADOW_SPAN * sigma` (in dB).
const SHADOW_SPAN: f64 = 6.0;

/// Radio constants of the cluster; defaults follow a 2 GHz urban D2D setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioParams {
    pub carrier_freq_hz: f64,
    pub breakpoint_d0_m: f64,
    pub pathloss_exponent_alpha: f64,
    pub shadow_mu_db: f64,
    pub shadow_sigma_db: f64,
    pub noise_psd_dbm_hz: f64,
    pub d2d_bandwidth_hz: f64,
    pub bs_bandwidth_hz: f64,
    pub d2d_tx_power_dbm: f64,
    pub bs_tx_power_dbm: f64,
    pub min_snr_db: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            carrier_freq_hz: 2e9,
            breakpoint_d0_m: 10.0,
            pathloss_exponent_alpha: 3.68,
            shadow_mu_db: 0.0,
            shadow_sigma_db: 8.0,
            noise_psd_dbm_hz: -174.0,
            d2d_bandwidth_hz: 20e6,
            bs_bandwidth_hz: 200e3,
            d2d_tx_power_dbm: 20.0,
            bs_tx_power_dbm: 26.0,
            min_snr_db: 5.0,
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("breakpoint_d0_m", self.breakpoint_d0_m),
            ("d2d_bandwidth_hz", self.d2d_bandwidth_hz),
            ("bs_bandwidth_hz", self.bs_bandwidth_hz),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.pathloss_exponent_alpha > 2.0) {
            return Err(Error::param(format!(
                "pathloss exponent must exceed 2, got {}",
                self.pathloss_exponent_alpha
            )));
        }
        if !(self.shadow_sigma_db >= 0.0) {
            return Err(Error::param("shadow_sigma_db must be >= 0"));
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    /// Noise power over the D2D band, in watts.
    pub fn noise_power_w(&self) -> f64 {
        dbm_to_watts(self.noise_psd_dbm_hz + 10.0 * self.d2d_bandwidth_hz.log10())
    }

    /// Minimum capacity `C = log2(1 + SNR_min)` in bits/s/Hz.
    pub fn rate_threshold(&self) -> f64 {
        (1.0 + 10f64.powf(self.min_snr_db / 10.0)).log2()
    }

    pub fn d2d_tx_power_w(&self) -> f64 {
        dbm_to_watts(self.d2d_tx_power_dbm)
    }

    pub fn bs_tx_power_w(&self) -> f64 {
        dbm_to_watts(self.bs_tx_power_dbm)
    }

    /// `sigma_n^2 (2^C - 1) / E_D`: a link succeeds when
    /// `|h|^2 * shadow * pathgain` exceeds this value.
    pub fn outage_threshold(&self) -> f64 {
        self.noise_power_w() * (2f64.powf(self.rate_threshold()) - 1.0) / self.d2d_tx_power_w()
    }
}

/// Pathloss in dB; distances inside the breakpoint are clamped to it.
pub fn pathloss_db(d: f64, rp: &RadioParams) -> f64 {
    let d0 = rp.breakpoint_d0_m;
    let d = d.max(d0);
    20.0 * (4.0 * PI * d0 / rp.wavelength_m()).log10()
        + 10.0 * rp.pathloss_exponent_alpha * (d / d0).log10()
}

/// Linear power gain `10^(-PL/10)`.
pub fn pathgain(d: f64, rp: &RadioParams) -> f64 {
    10f64.powf(-pathloss_db(d, rp) / 10.0)
}

/// Pairwise link success probabilities with a unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkProbabilityMatrix {
    n: usize,
    data: Vec<f64>,
}

impl LinkProbabilityMatrix {
    pub fn ones(n: usize) -> Self {
        Self {
            n,
            data: vec![1.0; n * n],
        }
    }

    /// Every off-diagonal pair shares the probability `p`.
    pub fn uniform(n: usize, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::param(format!("link probability {p} outside [0,1]")));
        }
        let mut data = vec![p; n * n];
        for k in 0..n {
            data[k * n + k] = 1.0;
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (k, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::param(format!(
                    "link row {k} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::param(format!(
                    "link row {k} has an entry outside [0,1]"
                )));
            }
            if row[k] != 1.0 {
                return Err(Error::param(format!(
                    "link diagonal entry {k} is {}, must be 1",
                    row[k]
                )));
            }
            data.extend(row);
        }
        Ok(Self { n, data })
    }

    pub fn n_users(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.data[k * self.n + l]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.n..(k + 1) * self.n]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|k| (0..k).all(|l| self.get(k, l) == self.get(l, k)))
    }
}

/// User positions inside a `side × side` square cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserLayout {
    side: f64,
    positions: Vec<[f64; 2]>,
}

impl UserLayout {
    pub fn new(side: f64, positions: Vec<[f64; 2]>) -> Result<Self> {
        if !(side > 0.0) {
            return Err(Error::param(format!(
                "cluster side must be positive, got {side}"
            )));
        }
        if let Some(p) = positions
            .iter()
            .find(|p| !(0.0..=side).contains(&p[0]) || !(0.0..=side).contains(&p[1]))
        {
            return Err(Error::param(format!(
                "position {p:?} outside the {side} m cluster"
            )));
        }
        Ok(Self { side, positions })
    }

    /// Uniform positions in the square.
    pub fn random<R: Rng + ?Sized>(n: usize, side: f64, rng: &mut R) -> Self {
        let positions = (0..n)
            .map(|_| [rng.gen::<f64>() * side, rng.gen::<f64>() * side])
            .collect();
        Self { side, positions }
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn n_users(&self) -> usize {
        self.positions.len()
    }

    pub fn distance(&self, k: usize, l: usize) -> f64 {
        let (a, b) = (self.positions[k], self.positions[l]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }
}

/// Links guaranteed by link-quality control: every entry is 1.
pub fn link_prob_case1(n_users: usize) -> LinkProbabilityMatrix {
    LinkProbabilityMatrix::ones(n_users)
}

/// Rayleigh success probability for a link of fixed mean gain
/// `shadow * pathgain`: `exp(-threshold / (shadow * pathgain))`.
pub fn rayleigh_success(mean_gain: f64, rp: &RadioParams) -> f64 {
    (-rp.outage_threshold() / mean_gain).exp()
}

/// Deterministic geometry and shadowing, Rayleigh fading per link.
/// `shadow_gains` is a row-major `K × K` matrix of linear gains.
pub fn link_prob_case2(
    layout: &UserLayout,
    shadow_gains: &[f64],
    rp: &RadioParams,
) -> Result<LinkProbabilityMatrix> {
    let n = layout.n_users();
    if shadow_gains.len() != n * n {
        return Err(Error::param(format!(
            "expected {} shadow gains for {n} users, got {}",
            n * n,
            shadow_gains.len()
        )));
    }
    if let Some(g) = shadow_gains.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
        return Err(Error::param(format!("shadow gain {g} is not positive")));
    }
    let mut data = vec![1.0; n * n];
    for k in 0..n {
        for l in 0..n {
            if k != l {
                let gain = shadow_gains[k * n + l] * pathgain(layout.distance(k, l), rp);
                data[k * n + l] = rayleigh_success(gain, rp);
            }
        }
    }
    Ok(LinkProbabilityMatrix { n, data })
}

/// Density of the distance between two independent uniform points in the
/// unit square.
pub fn square_distance_pdf(x: f64) -> Result<f64> {
    if !(0.0..=SQRT_2).contains(&x) {
        return Err(Error::Domain(format!(
            "normalized distance {x} outside [0, sqrt(2)]"
        )));
    }
    let x2 = x * x;
    let v = if x <= 1.0 {
        2.0 * x * (PI + x2 - 4.0 * x)
    } else {
        let arg = ((2.0 - x2) / x2).clamp(-1.0, 1.0);
        2.0 * x * (-2.0 - x2 + 4.0 * (x2 - 1.0).sqrt() + 2.0 * arg.asin())
    };
    Ok(v.max(0.0))
}

/// Tolerances of the nested quadrature behind [`link_prob_case3`].
#[derive(Debug, Clone, Copy)]
pub struct Case3Tolerance {
    pub outer_abs: f64,
    pub inner_abs: f64,
}

impl Default for Case3Tolerance {
    fn default() -> Self {
        Self {
            outer_abs: 1e-6,
            inner_abs: 1e-6,
        }
    }
}

/// Success probability averaged over user positions in the square,
/// lognormal shadowing and Rayleigh fading (a Suzuki channel). The result is
/// the same for every user pair.
pub fn link_prob_case3(side: f64, rp: &RadioParams) -> Result<f64> {
    link_prob_case3_with(side, rp, Case3Tolerance::default())
}

pub fn link_prob_case3_with(side: f64, rp: &RadioParams, tol: Case3Tolerance) -> Result<f64> {
    if !(side > 0.0 && side.is_finite()) {
        return Err(Error::param(format!(
            "cluster side must be positive, got {side}"
        )));
    }
    let threshold = rp.outage_threshold();
    let (mu, sigma) = (rp.shadow_mu_db, rp.shadow_sigma_db);
    let inner_opts = QuadratureOptions::absolute(tol.inner_abs);

    // Averages the Rayleigh success probability over shadowing at one distance.
    let shadow_avg = |x: f64| -> Result<f64> {
        let pg = pathgain(side * x, rp);
        if sigma == 0.0 {
            return Ok((-threshold / (pg * 10f64.powf(mu / 10.0))).exp());
        }
        let kernel = |z: f64| {
            let s = 10f64.powf((mu + sigma * z) / 10.0);
            (-threshold / (pg * s)).exp() * (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
        };
        Ok(integrate(kernel, -SHADOW_SPAN, SHADOW_SPAN, inner_opts)?.value)
    };

    let mut breaks = vec![0.0, 1.0, SQRT_2];
    let kink = rp.breakpoint_d0_m / side;
    if kink > 0.0 && kink < SQRT_2 && kink != 1.0 {
        breaks.push(kink);
    }
    breaks.sort_by(f64::total_cmp);

    // The inner solve cannot return an error through the quadrature closure,
    // so the first failure is parked here and surfaced afterwards.
    let failure = std::cell::RefCell::new(None);
    let outer = |x: f64| match shadow_avg(x) {
        Ok(v) => v * square_distance_pdf(x).unwrap_or(0.0),
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    let r = integrate_piecewise(outer, &breaks, QuadratureOptions::absolute(tol.outer_abs));
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(r?.value.clamp(0.0, 1.0))
}

/// D2D transmit power (dBm) that keeps the received SNR and inter-cluster
/// interference roughly invariant as the cluster side changes.
pub fn power_control(side: f64, rp: &RadioParams, reuse_factor: f64) -> Result<f64> {
    if !(side > 0.0) {
        return Err(Error::param(format!(
            "cluster side must be positive, got {side}"
        )));
    }
    if !(reuse_factor >= 1.0) {
        return Err(Error::param(format!(
            "reuse factor must be >= 1, got {reuse_factor}"
        )));
    }
    let alpha = rp.pathloss_exponent_alpha;
    let d0 = rp.breakpoint_d0_m;
    let nu = 2f64.powf(alpha / 2.0) * rp.noise_power_w();
    let watts = ((reuse_factor.sqrt() - 1.0) * side / d0).powf(alpha)
        * (4.0 * PI * d0 / rp.wavelength_m()).powi(2)
        * nu;
    Ok(watts_to_dbm(watts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp1};

    #[test]
    fn pathloss_at_breakpoint() {
        let rp = RadioParams::default();
        // 20 log10(4 pi 10 / 0.15), evaluated by hand: 4*pi*10/0.15 = 837.758041
        let expected = 20.0 * 837.758_040_957_278_2_f64.log10();
        assert!((pathloss_db(10.0, &rp) - expected).abs() < 1e-12);
        assert!((pathloss_db(10.0, &rp) - 58.4624).abs() < 1e-4);
        assert!((pathgain(10.0, &rp) - 1.4248e-6).abs() < 1e-9);
        assert!((pathloss_db(100.0, &rp) - (expected + 36.8)).abs() < 1e-9);
    }

    #[test]
    fn pathloss_clamps_inside_breakpoint() {
        let rp = RadioParams::default();
        assert_eq!(pathloss_db(0.0, &rp), pathloss_db(10.0, &rp));
        assert_eq!(pathloss_db(3.0, &rp), pathloss_db(10.0, &rp));
    }

    #[test]
    fn doubling_alpha_doubles_distance_term() {
        let rp = RadioParams::default();
        let rp2 = RadioParams {
            pathloss_exponent_alpha: 2.0 * rp.pathloss_exponent_alpha,
            ..rp
        };
        let fixed = pathloss_db(10.0, &rp);
        let t1 = pathloss_db(70.0, &rp) - fixed;
        let t2 = pathloss_db(70.0, &rp2) - fixed;
        assert!((t2 - 2.0 * t1).abs() < 1e-9);
    }

    #[test]
    fn case1_is_all_ones() {
        let l = link_prob_case1(3);
        assert!((0..3).all(|k| (0..3).all(|j| l.get(k, j) == 1.0)));
        assert_eq!(link_prob_case1(1).row(0), &[1.0]);
    }

    fn layout3() -> UserLayout {
        UserLayout::new(100.0, vec![[0.0, 0.0], [60.0, 10.0], [20.0, 90.0]]).unwrap()
    }

    #[test]
    fn case2_exponential_at_mean() {
        let rp = RadioParams::default();
        let gain = rp.outage_threshold();
        assert!((rayleigh_success(gain, &rp) - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn case2_high_power_limit_and_shape() {
        let layout = layout3();
        let shadow = vec![1.0, 0.5, 2.0, 0.5, 1.0, 1.5, 2.0, 1.5, 1.0];
        let rp = RadioParams {
            d2d_tx_power_dbm: 200.0,
            ..Default::default()
        };
        let l = link_prob_case2(&layout, &shadow, &rp).unwrap();
        assert!((0..3).all(|k| (0..3).all(|j| (l.get(k, j) - 1.0).abs() < 1e-9)));
        let l = link_prob_case2(&layout, &shadow, &RadioParams::default()).unwrap();
        assert!(l.is_symmetric());
        assert!((0..3).all(|k| l.get(k, k) == 1.0));
        let bad = vec![1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        assert_eq!(
            link_prob_case2(&layout, &bad, &rp).unwrap_err().category(),
            "parameter"
        );
    }

    #[test]
    fn case2_matches_rayleigh_monte_carlo() {
        let layout = layout3();
        let shadow = vec![1.0, 0.8, 1.3, 0.8, 1.0, 0.6, 1.3, 0.6, 1.0];
        let rp = RadioParams {
            d2d_tx_power_dbm: 0.0,
            ..Default::default()
        };
        let l = link_prob_case2(&layout, &shadow, &rp).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        for (k, j) in [(0, 1), (0, 2), (1, 2)] {
            let mean_gain = shadow[k * 3 + j] * pathgain(layout.distance(k, j), &rp);
            let hits = (0..n)
                .filter(|_| {
                    let h: f64 = Exp1.sample(&mut rng);
                    h * mean_gain > rp.outage_threshold()
                })
                .count();
            let p_hat = hits as f64 / n as f64;
            let se = (p_hat * (1.0 - p_hat) / n as f64).sqrt().max(1e-7);
            let p = l.get(k, j);
            assert!(p > 0.05 && p < 0.95, "pick a mid-range link, got {p}");
            assert!(
                (p_hat - p).abs() < 3.0 * se,
                "pair ({k},{j}): mc {p_hat} vs {p}"
            );
        }
    }

    #[test]
    fn square_pdf_boundaries_and_domain() {
        assert_eq!(square_distance_pdf(0.0).unwrap(), 0.0);
        assert!(square_distance_pdf(SQRT_2).unwrap().abs() < 1e-12);
        // branches agree at x = 1
        let left = square_distance_pdf(1.0).unwrap();
        let right = square_distance_pdf(1.0 + 1e-12).unwrap();
        assert!((left - right).abs() < 1e-5);
        assert!(square_distance_pdf(-0.1).is_err());
        assert!(square_distance_pdf(1.5).is_err());
    }

    #[test]
    fn square_pdf_moments() {
        let opts = QuadratureOptions::absolute(1e-12);
        let pdf = |x: f64| square_distance_pdf(x).unwrap();
        let mass = integrate_piecewise(pdf, &[0.0, 1.0, SQRT_2], opts)
            .unwrap()
            .value;
        assert!((mass - 1.0).abs() < 1e-8);
        let mean = integrate_piecewise(|x| x * pdf(x), &[0.0, 1.0, SQRT_2], opts)
            .unwrap()
            .value;
        assert!((mean - 0.521405).abs() < 1e-5);
    }

    #[test]
    fn case3_without_shadowing_reduces_to_distance_average() {
        let rp = RadioParams {
            shadow_sigma_db: 0.0,
            d2d_tx_power_dbm: -5.0,
            ..Default::default()
        };
        let side = 80.0;
        let l3 = link_prob_case3(side, &rp).unwrap();
        let f = |x: f64| {
            square_distance_pdf(x).unwrap() * rayleigh_success(pathgain(side * x, &rp), &rp)
        };
        let oracle = integrate_piecewise(
            f,
            &[0.0, 0.125, 1.0, SQRT_2],
            QuadratureOptions::absolute(1e-12),
        )
        .unwrap()
        .value;
        assert!((l3 - oracle).abs() < 1e-6, "{l3} vs {oracle}");
        assert!(l3 < 0.99);
    }

    #[test]
    fn case3_high_power_limit() {
        let rp = RadioParams {
            d2d_tx_power_dbm: 120.0,
            ..Default::default()
        };
        assert!((link_prob_case3(80.0, &rp).unwrap() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn case3_monotone_in_power_and_side() {
        let sides = [20.0, 50.0, 80.0, 150.0];
        let powers = [-10.0, 0.0, 10.0, 20.0];
        let grid: Vec<Vec<f64>> = sides
            .iter()
            .map(|&d| {
                powers
                    .iter()
                    .map(|&p| {
                        link_prob_case3(
                            d,
                            &RadioParams {
                                d2d_tx_power_dbm: p,
                                ..Default::default()
                            },
                        )
                        .unwrap()
                    })
                    .collect()
            })
            .collect();
        for i in 0..sides.len() {
            for j in 0..powers.len() {
                if j + 1 < powers.len() {
                    assert!(grid[i][j + 1] >= grid[i][j] - 1e-6);
                }
                if i + 1 < sides.len() {
                    assert!(grid[i + 1][j] <= grid[i][j] + 1e-6);
                }
            }
        }
    }

    #[test]
    fn power_control_examples() {
        let rp = RadioParams::default();
        let e90 = power_control(90.0, &rp, 16.0).unwrap();
        assert!(e90 <= 20.0, "{e90}");
        assert_eq!(dbm_to_watts(power_control(50.0, &rp, 1.0).unwrap()), 0.0);
        let ratio = dbm_to_watts(power_control(60.0, &rp, 16.0).unwrap())
            / dbm_to_watts(power_control(30.0, &rp, 16.0).unwrap());
        assert!((ratio / 2f64.powf(rp.pathloss_exponent_alpha) - 1.0).abs() < 1e-12);
        assert!(power_control(0.0, &rp, 16.0).is_err());
        assert!(power_control(10.0, &rp, 0.5).is_err());
    }

    #[test]
    fn uniform_matrix_has_unit_diagonal() {
        let l = LinkProbabilityMatrix::uniform(4, 0.3).unwrap();
        assert!((0..4).all(|k| l.get(k, k) == 1.0));
        assert_eq!(l.get(0, 3), 0.3);
        assert!(LinkProbabilityMatrix::uniform(2, 1.2).is_err());
        assert!(LinkProbabilityMatrix::from_rows(vec![vec![0.9, 0.1], vec![0.1, 1.0]]).is_err());
    }

    #[test]
    fn layout_rejects_outside_points() {
        assert!(UserLayout::new(10.0, vec![[11.0, 0.0]]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = UserLayout::random(100, 10.0, &mut rng);
        assert!(l
            .positions()
            .iter()
            .all(|p| (0.0..=10.0).contains(&p[0]) && (0.0..=10.0).contains(&p[1])));
    }
}
