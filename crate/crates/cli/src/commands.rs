use crate::error::{CliError, CliResult};
use crate::io::{opt, output_path, read_json, read_series, write_csv, write_json, Series};
use crate::Common;
use countcopula::diagnostics::{latent_residuals, pit_histogram, residual_summaries, PitHistogram, PitOptions, ResidualSummary};
use countcopula::estimation::study::{median, run_study, variance_decomposition, StudyConfig, StudyRow};
use countcopula::estimation::{self, FitData, MarginalForm};
use countcopula::particle::{run_filter, CrnBank, FilterConfig, Uniforms};
use countcopula::sampler::simulate_counts;
use countcopula::{FitOptions, FitResult, LatentModel, Marginal, MarginalPath, Method, ModelSpec, RegressionSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

fn default_count_column() -> String {
    "x".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    /// Constant marginal; exactly one of `marginal` and `regression` is required.
    #[serde(default)]
    marginal: Option<Marginal>,
    #[serde(default)]
    regression: Option<RegressionSpec>,
    #[serde(default)]
    latent: LatentModel,
    /// Last time index; the series has T + 1 values.
    #[serde(rename = "T")]
    last_time: usize,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    output: Option<String>,
}

pub fn simulate(c: &Common) -> CliResult<()> {
    let cfg: SimulateConfig = read_json(&c.config, "config")?;
    let n = cfg.last_time + 1;
    let (path, covariates) = match (&cfg.marginal, &cfg.regression) {
        (Some(m), None) => (MarginalPath::stationary(m)?, None),
        (None, Some(r)) => {
            if r.len() < n {
                return Err(CliError::Config(format!("regression has {} covariate rows, T = {} needs {n}", r.len(), cfg.last_time)));
            }
            (MarginalPath::from_regression(r)?, Some(&r.covariates))
        }
        _ => return Err(CliError::Config("give exactly one of 'marginal' and 'regression'".into())),
    };
    cfg.latent.validate()?;
    let seed = c.seed.or(cfg.seed).unwrap_or(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sim = simulate_counts(&path, &cfg.latent, n, &mut rng)?;

    let ncov = covariates.and_then(|cv| cv.first()).map_or(0, Vec::len);
    let cov_names: Vec<String> = (1..=ncov).map(|j| format!("m{j}")).collect();
    let mut header = vec!["t", "x"];
    header.extend(cov_names.iter().map(String::as_str));
    if c.debug_latent {
        header.push("z");
    }
    let out = output_path(&c.out_dir, cfg.output.as_deref(), "simulated.csv")?;
    let rows = (0..n).map(|t| {
        let mut r = vec![t.to_string(), sim.counts[t].to_string()];
        if let Some(cv) = covariates {
            r.extend(cv[t].iter().map(f64::to_string));
        }
        if c.debug_latent {
            r.push(sim.latent[t].to_string());
        }
        r
    });
    write_csv(&out, &header, rows)?;
    eprintln!("wrote {n} observations to {}", out.display());
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitConfig {
    data: PathBuf,
    #[serde(default = "default_count_column")]
    count_column: String,
    #[serde(default)]
    covariates: Vec<String>,
    marginal: MarginalForm,
    /// ARMA orders (p, q) to fit.
    #[serde(default = "default_orders")]
    orders: Vec<(usize, usize)>,
    #[serde(default = "default_estimators")]
    estimators: Vec<Method>,
    #[serde(default)]
    options: FitOptions,
    #[serde(default)]
    output: Option<String>,
}

fn default_orders() -> Vec<(usize, usize)> {
    vec![(0, 0)]
}

fn default_estimators() -> Vec<Method> {
    vec![Method::Gl]
}

/// One (model, estimator) cell of a fit batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FitEntry {
    model: String,
    method: Method,
    #[serde(default)]
    result: Option<FitResult>,
    #[serde(default)]
    error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FitReport {
    data: PathBuf,
    n_obs: usize,
    fits: Vec<FitEntry>,
}

fn apply_overrides(opts: &mut FitOptions, c: &Common) {
    if let Some(s) = c.seed {
        opts.seed = s;
    }
    if let Some(n) = c.particles {
        opts.particles = n;
    }
    if let Some(f) = c.filter_kind() {
        opts.filter = f;
    }
}

fn load_series(data: &Path, count_column: &str, covariates: &[String]) -> CliResult<Series> {
    read_series(data, count_column, covariates)
}

fn covariate_count(form: &MarginalForm) -> usize {
    match form {
        MarginalForm::Regression { covariates, .. } => *covariates,
        MarginalForm::Stationary { .. } => 0,
    }
}

pub fn fit(c: &Common) -> CliResult<()> {
    let mut cfg: FitConfig = read_json(&c.config, "config")?;
    apply_overrides(&mut cfg.options, c);
    if covariate_count(&cfg.marginal) != cfg.covariates.len() {
        return Err(CliError::Config(format!(
            "marginal expects {} covariates, {} columns named",
            covariate_count(&cfg.marginal),
            cfg.covariates.len()
        )));
    }
    if cfg.orders.is_empty() || cfg.estimators.is_empty() {
        return Err(CliError::Config("need at least one order and one estimator".into()));
    }
    let series = load_series(&cfg.data, &cfg.count_column, &cfg.covariates)?;
    let data = FitData { counts: &series.counts, covariates: series.covariates.as_deref() };
    let cells: Vec<(ModelSpec, Method)> = cfg
        .orders
        .iter()
        .flat_map(|&(p, q)| {
            let spec = ModelSpec { marginal: cfg.marginal.clone(), p, q };
            cfg.estimators.iter().map(move |&m| (spec.clone(), m))
        })
        .collect();
    let results: Vec<(ModelSpec, Method, countcopula::Result<FitResult>)> = cells
        .into_par_iter()
        .map(|(spec, m)| {
            let r = estimation::fit(m, &data, &spec, &cfg.options);
            (spec, m, r)
        })
        .collect();

    let mut first_err = None;
    let mut fits = Vec::new();
    for (spec, m, r) in &results {
        let (result, error) = match r {
            Ok(f) => (Some(f.clone()), None),
            Err(e) => {
                eprintln!("{} {m}: {e}", spec.label());
                first_err.get_or_insert_with(|| e.clone());
                (None, Some(e.to_string()))
            }
        };
        fits.push(FitEntry { model: spec.label(), method: *m, result, error });
    }
    if fits.iter().all(|f| f.result.is_none()) {
        return Err(first_err.expect("every cell failed").into());
    }

    let report = FitReport { data: cfg.data.clone(), n_obs: series.counts.len(), fits };
    write_json(&output_path(&c.out_dir, cfg.output.as_deref(), "fits.json")?, &report)?;
    write_selection(&c.out_dir, &report.fits)?;
    print_selection(&report.fits);
    if c.debug_latent {
        write_filter_trace(&c.out_dir, &report.fits, &data, &cfg.options)?;
    }
    Ok(())
}

fn write_selection(dir: &Path, fits: &[FitEntry]) -> CliResult<()> {
    let rows = fits.iter().map(|e| match &e.result {
        Some(f) => vec![
            e.model.clone(),
            e.method.to_string(),
            f.n_params().to_string(),
            opt(f.loglik),
            opt(f.aic),
            opt(f.aicc),
            opt(f.bic),
            f.convergence.converged.to_string(),
            String::new(),
        ],
        None => {
            let mut r = vec![e.model.clone(), e.method.to_string()];
            r.extend(std::iter::repeat(String::new()).take(6));
            r.push(e.error.clone().unwrap_or_default());
            r
        }
    });
    write_csv(
        &dir.join("selection.csv"),
        &["model", "method", "n_params", "loglik", "aic", "aicc", "bic", "converged", "error"],
        rows,
    )
}

/// Table of criteria per fit; `*` marks the lowest BIC within each estimator.
fn print_selection(fits: &[FitEntry]) {
    let best: Vec<Option<usize>> = {
        let methods: BTreeSet<Method> = fits.iter().map(|f| f.method).collect();
        methods
            .into_iter()
            .map(|m| {
                fits.iter()
                    .enumerate()
                    .filter(|(_, f)| f.method == m)
                    .filter_map(|(i, f)| f.result.as_ref().and_then(|r| r.bic).map(|b| (i, b)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(i, _)| i)
            })
            .collect()
    };
    println!("{:<32} {:>6} {:>12} {:>12} {:>12} {:>12}", "model", "method", "loglik", "AIC", "AICc", "BIC");
    let num = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
    for (i, e) in fits.iter().enumerate() {
        let mark = if best.contains(&Some(i)) { "*" } else { "" };
        match &e.result {
            Some(f) => println!(
                "{:<32} {:>6} {:>12} {:>12} {:>12} {:>12}{mark}",
                e.model,
                e.method,
                num(f.loglik),
                num(f.aic),
                num(f.aicc),
                num(f.bic)
            ),
            None => println!("{:<32} {:>6} failed: {}", e.model, e.method, e.error.as_deref().unwrap_or("")),
        }
    }
}

/// Per-step log increments and ESS of a filter pass at each fit's estimates.
fn write_filter_trace(dir: &Path, fits: &[FitEntry], data: &FitData, opts: &FitOptions) -> CliResult<()> {
    let mut rows = Vec::new();
    for e in fits {
        let Some(f) = &e.result else { continue };
        let (path, model) = f.build(data.covariates)?;
        let cfg = FilterConfig {
            kind: f.filter.unwrap_or(opts.filter),
            particles: f.particles.unwrap_or(opts.particles),
            ess_threshold: opts.ess_threshold,
        };
        let bank = CrnBank::new(f.seed.unwrap_or(opts.seed), cfg.particles, data.counts.len());
        let out = run_filter(data.counts, &path, &model, &cfg, &mut Uniforms::Bank(&bank))?;
        for (t, (inc, ess)) in out.log_increments.iter().zip(&out.ess).enumerate() {
            rows.push(vec![e.model.clone(), e.method.to_string(), t.to_string(), inc.to_string(), ess.to_string()]);
        }
    }
    write_csv(&dir.join("filter_trace.csv"), &["model", "method", "t", "log_increment", "ess"], rows)
}

/// Which fit of a batch file to diagnose; by default the lowest BIC.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Selection {
    #[serde(default)]
    model: Option<String>,
    #[serde(default)]
    method: Option<Method>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiagnoseConfig {
    data: PathBuf,
    #[serde(default = "default_count_column")]
    count_column: String,
    #[serde(default)]
    covariates: Vec<String>,
    /// A single fit result, or the output of `fit`.
    fit: PathBuf,
    #[serde(default)]
    select: Selection,
    #[serde(default)]
    pit: PitOptions,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FitFile {
    Single(Box<FitResult>),
    Batch(FitReport),
}

fn choose(file: FitFile, sel: &Selection) -> CliResult<FitResult> {
    let entries = match file {
        FitFile::Single(f) => return Ok(*f),
        FitFile::Batch(r) => r.fits,
    };
    let candidates: Vec<FitResult> = entries
        .into_iter()
        .filter(|e| sel.model.as_ref().map_or(true, |m| &e.model == m) && sel.method.map_or(true, |m| e.method == m))
        .filter_map(|e| e.result)
        .collect();
    let best = candidates.iter().enumerate().min_by(|a, b| {
        let key = |f: &FitResult| f.bic.unwrap_or(f64::INFINITY);
        key(a.1).total_cmp(&key(b.1))
    });
    match best {
        Some((i, _)) => Ok(candidates[i].clone()),
        None => Err(CliError::Config("no successful fit matches the selection".into())),
    }
}

#[derive(Serialize)]
struct DiagnosticsReport<'a> {
    model: String,
    method: Method,
    pit: &'a PitHistogram,
    residuals: &'a ResidualSummary,
}

pub fn diagnose(c: &Common) -> CliResult<()> {
    let mut cfg: DiagnoseConfig = read_json(&c.config, "config")?;
    let file: FitFile = read_json(&cfg.fit, "fit file")?;
    let fit = choose(file, &cfg.select)?;
    if let Some(s) = c.seed {
        cfg.pit.seed = Some(s);
    }
    if let Some(n) = c.particles {
        cfg.pit.particles = Some(n);
    }
    if let Some(f) = c.filter_kind() {
        cfg.pit.filter = Some(f);
    }
    let series = load_series(&cfg.data, &cfg.count_column, &cfg.covariates)?;
    let data = FitData { counts: &series.counts, covariates: series.covariates.as_deref() };
    let pit = pit_histogram(&data, &fit, &cfg.pit)?;
    let res = latent_residuals(&data, &fit)?;
    let summary = residual_summaries(&res.residuals)?;

    std::fs::create_dir_all(&c.out_dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", c.out_dir.display())))?;
    let h = pit.bins as f64;
    write_csv(
        &c.out_dir.join("pit.csv"),
        &["bin", "lower", "upper", "height", "mean_pit"],
        pit.heights.iter().enumerate().map(|(i, v)| {
            vec![
                (i + 1).to_string(),
                (i as f64 / h).to_string(),
                ((i + 1) as f64 / h).to_string(),
                v.to_string(),
                pit.mean_pit_curve[i + 1].to_string(),
            ]
        }),
    )?;
    write_csv(
        &c.out_dir.join("residuals.csv"),
        &["t", "x", "zhat", "residual"],
        (0..series.counts.len()).map(|t| {
            vec![t.to_string(), series.counts[t].to_string(), res.zhat[t].to_string(), res.residuals[t].to_string()]
        }),
    )?;
    write_csv(
        &c.out_dir.join("residual_acf.csv"),
        &["lag", "acf", "pacf", "band"],
        summary.acf.iter().zip(&summary.pacf).enumerate().map(|(k, (a, p))| {
            vec![(k + 1).to_string(), a.to_string(), p.to_string(), summary.band.to_string()]
        }),
    )?;
    write_json(
        &c.out_dir.join("diagnostics.json"),
        &DiagnosticsReport { model: fit.model.label(), method: fit.method, pit: &pit, residuals: &summary },
    )?;
    println!("{} ({})", fit.model.label(), fit.method);
    println!(
        "PIT heights: {}",
        pit.heights.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" ")
    );
    println!(
        "residual ACF lags outside ±{:.3}: {} of {}; Jarque-Bera {:.2} (p = {:.3})",
        summary.band,
        summary.acf_outside(),
        summary.acf.len(),
        summary.jarque_bera,
        summary.jb_p_value
    );
    if c.debug_latent {
        let (path, model) = fit.build(data.covariates)?;
        let cfgf = FilterConfig {
            kind: cfg.pit.filter.or(fit.filter).unwrap_or_default(),
            particles: cfg.pit.particles.or(fit.particles).unwrap_or(countcopula::particle::DEFAULT_PARTICLES),
            ..FilterConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.pit.seed.unwrap_or(1));
        let out = run_filter(data.counts, &path, &model, &cfgf, &mut Uniforms::Rng(&mut rng))?;
        write_csv(
            &c.out_dir.join("filter_trace.csv"),
            &["t", "log_increment", "ess"],
            out.log_increments.iter().zip(&out.ess).enumerate().map(|(t, (i, e))| vec![t.to_string(), i.to_string(), e.to_string()]),
        )?;
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct ReplicateConfig {
    #[serde(flatten)]
    study: StudyConfig,
    #[serde(default)]
    output: Option<String>,
}

pub fn replicate(c: &Common) -> CliResult<()> {
    let mut cfg: ReplicateConfig = read_json(&c.config, "config")?;
    let study = &mut cfg.study;
    if let Some(s) = c.seed {
        study.seed = s;
    }
    apply_overrides(&mut study.fit, &Common { seed: None, ..c.clone() });
    if study.replications == 0 || study.lengths.is_empty() {
        return Err(CliError::Config("need at least one replication and one length".into()));
    }
    study.scheme.marginal.validate()?;
    study.scheme.latent.validate()?;
    let rows = run_study(study);
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "replication {} (length {}, {}): {}",
            r.replication,
            r.length,
            r.method,
            r.error.as_deref().unwrap_or("")
        );
    }
    let out = output_path(&c.out_dir, cfg.output.as_deref(), "estimates.csv")?;
    write_csv(
        &out,
        &["length", "replication", "method", "particles", "fit", "parameter", "estimate", "loglik", "converged", "error"],
        rows.iter().flat_map(long_rows),
    )?;
    print_study_summary(study, &rows);
    if study.repeated.is_some() {
        let mut table = Vec::new();
        for name in study.model.param_names() {
            for (n, between, within) in variance_decomposition(&rows, &name) {
                table.push(vec![name.clone(), n.to_string(), between.to_string(), within.to_string(), (between / within).to_string()]);
            }
        }
        write_csv(&c.out_dir.join("variance_decomposition.csv"), &["parameter", "particles", "between", "within", "ratio"], table)?;
    }
    Ok(())
}

fn long_rows(r: &StudyRow) -> Vec<Vec<String>> {
    let base = |param: String, est: String| {
        vec![
            r.length.to_string(),
            r.replication.to_string(),
            r.method.to_string(),
            r.particles.map_or_else(String::new, |n| n.to_string()),
            r.fit_index.to_string(),
            param,
            est,
            opt(r.loglik),
            r.converged.to_string(),
            r.error.clone().unwrap_or_default(),
        ]
    };
    if r.estimates.is_empty() {
        return vec![base(String::new(), String::new())];
    }
    r.estimates.iter().map(|(k, v)| base(k.clone(), v.to_string())).collect()
}

fn print_study_summary(study: &StudyConfig, rows: &[StudyRow]) {
    let names = study.model.param_names();
    println!("{:<8} {:>6} {:>8} {}", "length", "method", "ok", names.iter().map(|n| format!("{:>12}", format!("med {n}"))).collect::<String>());
    let methods: BTreeSet<Method> = rows.iter().map(|r| r.method).collect();
    for &len in &study.lengths {
        for &m in &methods {
            let cell: Vec<&StudyRow> = rows.iter().filter(|r| r.length == len && r.method == m).collect();
            let ok = cell.iter().filter(|r| r.error.is_none()).count();
            let meds: String = names
                .iter()
                .map(|n| {
                    let v: Vec<f64> = cell.iter().filter_map(|r| r.estimates.get(n).copied()).collect();
                    format!("{:>12.4}", median(&v))
                })
                .collect();
            println!("{len:<8} {:>6} {:>8} {meds}", m.to_string(), format!("{ok}/{}", cell.len()));
        }
    }
}
