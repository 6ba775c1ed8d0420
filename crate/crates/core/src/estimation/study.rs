//! Monte-Carlo replication studies: simulate from a scheme, fit each realization, and
//! collect the estimates. Replications run in parallel; each one draws from its own
//! random stream so it can be reproduced in isolation.

use super::fit::{fit, FitData, FitOptions};
use super::{Method, ModelSpec};
use crate::error::Result;
use crate::latent::LatentModel;
use crate::marginals::Marginal;
use crate::sampler::{simulate_counts, MarginalPath};
use indexmap::IndexMap;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// True data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scheme {
    pub marginal: Marginal,
    #[serde(default)]
    pub latent: LatentModel,
}

/// Fit each realization `fits` times per particle count, with independent CRN seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatedFits {
    pub particles: Vec<usize>,
    pub fits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scheme: Scheme,
    pub model: ModelSpec,
    /// Series lengths (number of observations).
    pub lengths: Vec<usize>,
    pub replications: usize,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Method>,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub repeated: Option<RepeatedFits>,
}

fn default_estimators() -> Vec<Method> {
    vec![Method::Gl, Method::Iyw, Method::Pf]
}

fn default_seed() -> u64 {
    1
}

/// One fit of one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub length: usize,
    pub replication: usize,
    pub method: Method,
    pub particles: Option<usize>,
    pub fit_index: usize,
    pub estimates: IndexMap<String, f64>,
    pub loglik: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

/// Random stream `stream` of the root seed.
pub fn stream_rng(root: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream);
    rng
}

/// A seed derived from the root seed and a path of indices.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    let mut s = root;
    for &p in path {
        s = stream_rng(s, p.wrapping_add(1)).next_u64();
    }
    s
}

/// The realization for (length index, replication).
pub fn realization(cfg: &StudyConfig, length_index: usize, replication: usize) -> Result<Vec<u64>> {
    let path = MarginalPath::stationary(&cfg.scheme.marginal)?;
    let mut rng = stream_rng(cfg.seed, ((length_index as u64) << 32) | replication as u64);
    Ok(simulate_counts(&path, &cfg.scheme.latent, cfg.lengths[length_index], &mut rng)?.counts)
}

fn row(
    length: usize,
    replication: usize,
    method: Method,
    particles: Option<usize>,
    fit_index: usize,
    res: Result<super::FitResult>,
) -> StudyRow {
    match res {
        Ok(f) => StudyRow {
            length,
            replication,
            method,
            particles,
            fit_index,
            converged: f.convergence.converged,
            loglik: f.loglik,
            estimates: f.estimates,
            error: None,
        },
        Err(e) => StudyRow {
            length,
            replication,
            method,
            particles,
            fit_index,
            estimates: IndexMap::new(),
            loglik: None,
            converged: false,
            error: Some(e.to_string()),
        },
    }
}

fn run_one(cfg: &StudyConfig, li: usize, r: usize) -> Vec<StudyRow> {
    let length = cfg.lengths[li];
    let data = match realization(cfg, li, r) {
        Ok(d) => d,
        Err(e) => {
            return cfg
                .estimators
                .iter()
                .map(|&m| row(length, r, m, None, 0, Err(e.clone())))
                .collect();
        }
    };
    let fd = FitData::new(&data);
    let mut rows = Vec::new();
    match &cfg.repeated {
        None => {
            for &m in &cfg.estimators {
                let opts = FitOptions {
                    seed: derive_seed(cfg.seed, &[1, li as u64, r as u64]),
                    std_errors: false,
                    ..cfg.fit.clone()
                };
                let particles = (m == Method::Pf).then_some(opts.particles);
                rows.push(row(length, r, m, particles, 0, fit(m, &fd, &cfg.model, &opts)));
            }
        }
        Some(rep) => {
            for &n in &rep.particles {
                for f in 0..rep.fits {
                    let opts = FitOptions {
                        seed: derive_seed(cfg.seed, &[2, li as u64, r as u64, n as u64, f as u64]),
                        particles: n,
                        std_errors: false,
                        ..cfg.fit.clone()
                    };
                    rows.push(row(length, r, Method::Pf, Some(n), f, fit(Method::Pf, &fd, &cfg.model, &opts)));
                }
            }
        }
    }
    rows
}

/// All rows, ordered by length, replication, then estimator (or particle count and fit).
pub fn run_study(cfg: &StudyConfig) -> Vec<StudyRow> {
    let tasks: Vec<(usize, usize)> =
        (0..cfg.lengths.len()).flat_map(|li| (0..cfg.replications).map(move |r| (li, r))).collect();
    tasks.par_iter().flat_map_iter(|&(li, r)| run_one(cfg, li, r)).collect()
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Successful estimates of `param` for one (method, length) cell.
pub fn estimates_of(rows: &[StudyRow], method: Method, length: usize, param: &str) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.method == method && r.length == length && r.error.is_none())
        .filter_map(|r| r.estimates.get(param).copied())
        .collect()
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Between-realization and within-realization variance of `param` for each particle count
/// of a repeated-fit study: (N, variance of the per-realization means, mean of the
/// per-realization variances).
pub fn variance_decomposition(rows: &[StudyRow], param: &str) -> Vec<(usize, f64, f64)> {
    let mut ns: Vec<usize> = rows.iter().filter_map(|r| r.particles).collect();
    ns.sort_unstable();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let mut groups: IndexMap<(usize, usize), Vec<f64>> = IndexMap::new();
            for r in rows.iter().filter(|r| r.particles == Some(n) && r.error.is_none()) {
                if let Some(&v) = r.estimates.get(param) {
                    groups.entry((r.length, r.replication)).or_default().push(v);
                }
            }
            let full: Vec<&Vec<f64>> = groups.values().filter(|g| g.len() > 1).collect();
            let means: Vec<f64> = full.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
            let within = full.iter().map(|g| variance(g)).sum::<f64>() / full.len() as f64;
            (n, variance(&means), within)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginals::Family;

    fn cfg() -> StudyConfig {
        StudyConfig {
            scheme: Scheme { marginal: Marginal::Poisson { lambda: 2.0 }, latent: LatentModel::ar1(0.5) },
            model: ModelSpec::stationary(Family::Poisson, 1, 0),
            lengths: vec![60, 80],
            replications: 3,
            estimators: vec![Method::Gl, Method::Iyw],
            fit: FitOptions::default(),
            seed: 11,
            repeated: None,
        }
    }

    #[test]
    fn study_has_one_row_per_cell_and_is_deterministic() {
        let c = cfg();
        let a = run_study(&c);
        assert_eq!(a.len(), 2 * 3 * 2);
        assert!(a.iter().all(|r| r.error.is_none()));
        assert_eq!(a, run_study(&c));
        for len in [60, 80] {
            assert_eq!(estimates_of(&a, Method::Gl, len, "phi1").len(), 3);
        }
    }

    #[test]
    fn replications_are_reproducible_in_isolation() {
        let c = cfg();
        let full = realization(&c, 1, 2).unwrap();
        let single = StudyConfig { lengths: c.lengths.clone(), ..c.clone() };
        assert_eq!(full, realization(&single, 1, 2).unwrap());
        assert_ne!(realization(&c, 1, 1).unwrap(), full);
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
    }

    #[test]
    fn repeated_fits_decompose_variance() {
        let c = StudyConfig {
            lengths: vec![80],
            replications: 4,
            repeated: Some(RepeatedFits { particles: vec![5, 20], fits: 3 }),
            ..cfg()
        };
        let rows = run_study(&c);
        assert_eq!(rows.len(), 4 * 2 * 3);
        let d = variance_decomposition(&rows, "phi1");
        assert_eq!(d.len(), 2);
        assert!(d.iter().all(|&(_, b, w)| b.is_finite() && w.is_finite() && w >= 0.0));
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
