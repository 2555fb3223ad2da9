//! Individual request distributions and the popularity they average to.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-9;

/// Per-user request probabilities, one row per user and one column per file.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceMatrix {
    n_users: usize,
    n_files: usize,
    data: Vec<f64>,
}

impl PreferenceMatrix {
    /// Builds a matrix from rows, checking that each row is a distribution.
    pub fn from_rows(n_files: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if n_files == 0 {
            return Err(Error::param("library must contain at least one file"));
        }
        let n_users = rows.len();
        let mut data = Vec::with_capacity(n_users * n_files);
        for (k, row) in rows.into_iter().enumerate() {
            if row.len() != n_files {
                return Err(Error::param(format!(
                    "preference row {k} has {} entries, expected {n_files}",
                    row.len()
                )));
            }
            check_distribution(&row)
                .map_err(|e| Error::param(format!("preference row {k}: {e}")))?;
            data.extend(row);
        }
        Ok(Self {
            n_users,
            n_files,
            data,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_files(&self) -> usize {
        self.n_files
    }

    pub fn row(&self, user: usize) -> &[f64] {
        &self.data[user * self.n_files..(user + 1) * self.n_files]
    }

    #[inline]
    pub fn get(&self, user: usize, file: usize) -> f64 {
        self.data[user * self.n_files + file]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_files)
    }

    /// Copies the given users (in the given order, repeats allowed) into a new matrix.
    pub fn select_rows(&self, users: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(users.len() * self.n_files);
        for &u in users {
            if u >= self.n_users {
                return Err(Error::param(format!(
                    "user {u} outside pool of {}",
                    self.n_users
                )));
            }
            data.extend_from_slice(self.row(u));
        }
        Ok(Self {
            n_users: users.len(),
            n_files: self.n_files,
            data,
        })
    }

    /// Every row is a probability vector within 1e-9.
    pub fn is_row_stochastic(&self) -> bool {
        self.rows().all(|r| check_distribution(r).is_ok())
    }
}

/// Library-wide request distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalPopularity {
    probs: Vec<f64>,
}

impl GlobalPopularity {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::param("popularity vector is empty"));
        }
        check_distribution(&probs).map_err(Error::Parameter)?;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_files(&self) -> usize {
        self.probs.len()
    }
}

/// Knobs of the synthetic preference generator.
///
/// Each user's distribution mixes a shared Zipf law over the file index with
/// a Zipf law over a user-specific noisy re-ranking of the files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    pub zipf_exponent: f64,
    /// Weight of the shared Zipf component; 1 makes every user identical.
    pub mixing_weight: f64,
    /// Std-dev of the rank perturbation, as a fraction of the library size.
    pub rank_permutation_strength: f64,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            zipf_exponent: 0.8,
            mixing_weight: 0.3,
            rank_permutation_strength: 0.2,
            seed: 0,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.zipf_exponent > 0.0 && self.zipf_exponent.is_finite()) {
            return Err(Error::param(format!(
                "zipf_exponent must be > 0, got {}",
                self.zipf_exponent
            )));
        }
        if !(0.0..=1.0).contains(&self.mixing_weight) {
            return Err(Error::param(format!(
                "mixing_weight must lie in [0,1], got {}",
                self.mixing_weight
            )));
        }
        if !(self.rank_permutation_strength >= 0.0 && self.rank_permutation_strength.is_finite()) {
            return Err(Error::param(format!(
                "rank_permutation_strength must be >= 0, got {}",
                self.rank_permutation_strength
            )));
        }
        Ok(())
    }
}

/// Normalized Zipf law: entry `i` is proportional to `(i + 1)^-exponent`.
pub fn zipf_distribution(n_files: usize, exponent: f64) -> Vec<f64> {
    let mut w: Vec<f64> = (1..=n_files).map(|r| (r as f64).powf(-exponent)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Generates `n_users` preference rows over `n_files` files.
///
/// User `k` draws its rank noise from its own ChaCha stream, so the result
/// depends only on `params.seed` and not on thread scheduling.
pub fn generate_preferences(
    n_users: usize,
    n_files: usize,
    params: &GeneratorParams,
) -> Result<PreferenceMatrix> {
    if n_users < 1 {
        return Err(Error::param("need at least one user"));
    }
    if n_files < 2 {
        return Err(Error::param(format!(
            "library needs at least 2 files, got {n_files}"
        )));
    }
    params.validate()?;

    let base = zipf_distribution(n_files, params.zipf_exponent);
    let sigma = params.rank_permutation_strength * n_files as f64;
    let w = params.mixing_weight;

    let rows: Vec<Vec<f64>> = (0..n_users)
        .into_par_iter()
        .map(|k| {
            if w == 1.0 {
                return base.clone();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(k as u64);
            let mut scored: Vec<(f64, usize)> = if sigma > 0.0 {
                let noise = Normal::new(0.0, sigma).expect("sigma is positive and finite");
                (0..n_files)
                    .map(|m| (m as f64 + noise.sample(&mut rng), m))
                    .collect()
            } else {
                (0..n_files).map(|m| (m as f64, m)).collect()
            };
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

            let mut row = vec![0.0; n_files];
            for (rank, &(_, file)) in scored.iter().enumerate() {
                row[file] = (1.0 - w) * base[rank];
            }
            for (x, b) in row.iter_mut().zip(&base) {
                *x += w * b;
            }
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
            row
        })
        .collect();

    PreferenceMatrix::from_rows(n_files, rows)
}

/// Column means of the preference matrix.
pub fn global_popularity(prefs: &PreferenceMatrix) -> GlobalPopularity {
    let n = prefs.n_users() as f64;
    let mut probs = vec![0.0; prefs.n_files()];
    for row in prefs.rows() {
        for (p, a) in probs.iter_mut().zip(row) {
            *p += a;
        }
    }
    probs.iter_mut().for_each(|p| *p /= n);
    GlobalPopularity { probs }
}

/// `n_users` identical rows, each equal to `pop`.
pub fn homogenize(pop: &GlobalPopularity, n_users: usize) -> PreferenceMatrix {
    let mut data = Vec::with_capacity(n_users * pop.n_files());
    for _ in 0..n_users {
        data.extend_from_slice(&pop.probs);
    }
    PreferenceMatrix {
        n_users,
        n_files: pop.n_files(),
        data,
    }
}

fn check_distribution(row: &[f64]) -> std::result::Result<(), String> {
    if let Some(bad) = row.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(format!("entry {bad} outside [0,1]"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(format!("entries sum to {sum}, not 1"));
    }
    Ok(())
}
