//! Derivative-free optimizers: adaptive Nelder-Mead with restarts and differential evolution.
//! Both minimize; non-finite objective values are treated as +∞.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmOptions {
    /// Stop when the objective spread over the simplex is below this.
    pub ftol: f64,
    /// ... and every vertex is within this distance of the best one (max norm).
    pub xtol: f64,
    pub max_evals: usize,
    /// Restarts allowed when a probe around a converged point finds a lower value.
    pub max_restarts: usize,
    /// Edge length of the initial simplex.
    pub step: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        NmOptions { ftol: 1e-6, xtol: 1e-5, max_evals: 4000, max_restarts: 2, step: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub restarts: usize,
    pub status: String,
}

fn clean(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Adaptive-parameter Nelder-Mead. After each convergence the objective is probed at
/// ±`step`/100 along every coordinate; if a probe improves by more than `ftol`, a fresh
/// simplex is built there.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &NmOptions) -> OptimResult {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        clean(f(x))
    };
    if n == 0 {
        let fx = eval(x0, &mut evals);
        return OptimResult {
            x: vec![],
            f: fx,
            converged: true,
            iterations: 0,
            evaluations: evals,
            restarts: 0,
            status: "no free parameters".into(),
        };
    }
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) =
        if n <= 2 { (1.0, 2.0, 0.5, 0.5) } else { (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf) };

    let mut best_x = x0.to_vec();
    let mut best_f = eval(x0, &mut evals);
    let mut iterations = 0;
    let mut restarts = 0;
    let mut converged = false;
    let mut status;

    let mut probe = vec![0.0; n];
    loop {
        // Initial simplex around the current best.
        let mut simplex: Vec<Vec<f64>> = vec![best_x.clone()];
        let mut fs = vec![best_f];
        for i in 0..n {
            let mut v = best_x.clone();
            v[i] += opts.step;
            fs.push(eval(&v, &mut evals));
            simplex.push(v);
        }
        let mut run_converged = false;
        while evals < opts.max_evals {
            iterations += 1;
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| fs[a].total_cmp(&fs[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            fs = order.iter().map(|&i| fs[i]).collect();

            let spread = fs[n] - fs[0];
            let diam = simplex[1..]
                .iter()
                .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
                .fold(0.0_f64, f64::max);
            if spread.is_finite() && spread <= opts.ftol && diam <= opts.xtol {
                run_converged = true;
                break;
            }

            let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / nf).collect();
            let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect() };
            let xr = along(-alpha);
            let fr = eval(&xr, &mut evals);
            if fr < fs[0] {
                let xe = along(-alpha * gamma);
                let fe = eval(&xe, &mut evals);
                if fe < fr {
                    simplex[n] = xe;
                    fs[n] = fe;
                } else {
                    simplex[n] = xr;
                    fs[n] = fr;
                }
                continue;
            }
            if fr < fs[n - 1] {
                simplex[n] = xr;
                fs[n] = fr;
                continue;
            }
            let (xc, fc) = if fr < fs[n] {
                let xc = along(-alpha * rho);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(rho);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < fs[n].min(fr) {
                simplex[n] = xc;
                fs[n] = fc;
                continue;
            }
            for i in 1..=n {
                for j in 0..n {
                    simplex[i][j] = simplex[0][j] + sigma * (simplex[i][j] - simplex[0][j]);
                }
                fs[i] = eval(&simplex[i], &mut evals);
            }
        }
        let ib = (0..=n).min_by(|&a, &b| fs[a].total_cmp(&fs[b])).expect("non-empty simplex");
        if fs[ib] <= best_f {
            best_f = fs[ib];
            best_x = simplex[ib].clone();
        }
        if !run_converged {
            status = format!("evaluation budget of {} exhausted", opts.max_evals);
            break;
        }
        converged = true;
        if restarts >= opts.max_restarts {
            status = if opts.max_restarts == 0 { "converged".into() } else { "converged (restart limit reached)".into() };
            break;
        }
        let delta = opts.step * 0.01;
        let mut found = None;
        'probe: for i in 0..n {
            for d in [delta, -delta] {
                probe.copy_from_slice(&best_x);
                probe[i] += d;
                let fp = eval(&probe, &mut evals);
                if fp < best_f - opts.ftol {
                    found = Some(fp);
                    break 'probe;
                }
            }
        }
        match found {
            Some(fp) => {
                best_x.copy_from_slice(&probe);
                best_f = fp;
                restarts += 1;
            }
            None => {
                status = "converged".into();
                break;
            }
        }
    }
    if !best_f.is_finite() {
        converged = false;
        status = "no finite objective value found".into();
    }
    OptimResult { x: best_x, f: best_f, converged, iterations, evaluations: evals, restarts, status }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeOptions {
    /// Population size per dimension.
    pub population_factor: usize,
    pub generations: usize,
    pub differential_weight: f64,
    pub crossover: f64,
    /// Half-width of the initial box around the start point.
    pub radius: f64,
    pub seed: u64,
}

impl Default for DeOptions {
    fn default() -> Self {
        DeOptions { population_factor: 10, generations: 200, differential_weight: 0.8, crossover: 0.9, radius: 2.0, seed: 1 }
    }
}

/// DE/rand/1/bin. `f` receives the evaluation index so a noisy objective can draw
/// reproducible randomness.
pub fn differential_evolution<F: FnMut(&[f64], u64) -> f64>(mut f: F, x0: &[f64], opts: &DeOptions) -> OptimResult {
    let n = x0.len();
    let np = (opts.population_factor * n).max(4);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut evals = 0u64;
    let mut eval = |x: &[f64], evals: &mut u64| {
        let v = clean(f(x, *evals));
        *evals += 1;
        v
    };
    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|i| {
            if i == 0 {
                x0.to_vec()
            } else {
                x0.iter().map(|c| c + rng.gen_range(-opts.radius..opts.radius)).collect()
            }
        })
        .collect();
    let mut fit: Vec<f64> = pop.iter().map(|x| eval(x, &mut evals)).collect();
    for _ in 0..opts.generations {
        for i in 0..np {
            let pick = |rng: &mut ChaCha8Rng, not: &[usize]| loop {
                let k = rng.gen_range(0..np);
                if !not.contains(&k) {
                    return k;
                }
            };
            let a = pick(&mut rng, &[i]);
            let b = pick(&mut rng, &[i, a]);
            let c = pick(&mut rng, &[i, a, b]);
            let jr = rng.gen_range(0..n.max(1));
            let trial: Vec<f64> = (0..n)
                .map(|j| {
                    if j == jr || rng.gen::<f64>() < opts.crossover {
                        pop[a][j] + opts.differential_weight * (pop[b][j] - pop[c][j])
                    } else {
                        pop[i][j]
                    }
                })
                .collect();
            let ft = eval(&trial, &mut evals);
            if ft <= fit[i] {
                pop[i] = trial;
                fit[i] = ft;
            }
        }
    }
    let ib = (0..np).min_by(|&a, &b| fit[a].total_cmp(&fit[b])).expect("non-empty population");
    OptimResult {
        x: pop[ib].clone(),
        f: fit[ib],
        converged: fit[ib].is_finite(),
        iterations: opts.generations,
        evaluations: evals as usize,
        restarts: 0,
        status: format!("{} generations", opts.generations),
    }
}
