//! Command-line surface: simulate synthetic datasets, fit chains, compute
//! diagnostics, summarize posteriors, and check identifiability conditions.

mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use cafmm::diagnostics::{fit_report, posterior_summary};
use cafmm::identifiability::check_assumptions;
use cafmm::io::{load_chain, load_dataset, save_chain, save_dataset, sha256_hex, StateRecord};
use cafmm::model::ModelDims;
use cafmm::sampler::run_chain_with_basis;
use cafmm::simulation::{generate, ScenarioKind, ScenarioSpec};

use config::{EffectiveConfig, RunConfig, RUN_SCHEMA};

#[derive(Parser)]
#[command(
    name = "cafmm",
    version,
    about = "Covariate-adjusted functional mixed membership models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from one of the bundled scenarios.
    Simulate {
        /// two_cov | one_cov | no_cov | ic_study
        #[arg(long)]
        scenario: String,
        /// Number of curves.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Output directory (curves.csv, covariates.csv, truth.json).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 25)]
        grid_size: usize,
        #[arg(long, default_value_t = 8)]
        n_basis: usize,
        /// Observation noise variance.
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
    },
    /// Fit the model by MCMC and archive the chain.
    Fit {
        /// Long-format curves file (obs_id,t,y).
        #[arg(long)]
        data: PathBuf,
        /// Covariates file (obs_id,x1,...); omit for the unadjusted model.
        #[arg(long)]
        covariates: Option<PathBuf>,
        /// JSON configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the chain archive.
        #[arg(long)]
        out: PathBuf,
    },
    /// Information criteria, CPO/PML, and posterior summaries for a chain.
    Diagnose {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        covariates: Option<PathBuf>,
        /// Report output path (JSON).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 25)]
        grid_size: usize,
        /// Covariate vectors for mean-curve bands: values comma-separated,
        /// vectors separated by ';' (e.g. "0.0;1.5").
        #[arg(long)]
        covariate_values: Option<String>,
    },
    /// Posterior median and 95% bands of the feature mean curves.
    Summarize {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long, default_value_t = 25)]
        grid_size: usize,
        #[arg(long)]
        covariate_values: Option<String>,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the sufficient identifiability conditions on data plus the
    /// posterior-mean allocations of a chain.
    CheckIdentifiability {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        covariates: Option<PathBuf>,
        #[arg(long)]
        chain: PathBuf,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_covariate_values(raw: Option<&str>, n_covariates: usize) -> Result<Vec<Vec<f64>>> {
    let Some(raw) = raw else {
        // default: the zero covariate vector (population-level curves)
        return Ok(vec![vec![0.0; n_covariates]]);
    };
    let mut out = Vec::new();
    for group in raw.split(';') {
        let group = group.trim();
        if group.is_empty() {
            continue;
        }
        let values: Vec<f64> = group
            .split(',')
            .map(|v| v.trim().parse::<f64>().context("bad covariate value"))
            .collect::<Result<_>>()?;
        if values.len() != n_covariates {
            bail!(
                "covariate vector '{group}' has {} values, expected {}",
                values.len(),
                n_covariates
            );
        }
        out.push(values);
    }
    if out.is_empty() {
        bail!("no covariate vectors parsed");
    }
    Ok(out)
}

fn write_json<T: serde::Serialize>(value: &T, path: Option<&PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => {
            if let Some(parent) = p.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(p, text + "\n")?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate {
            scenario,
            n,
            seed,
            out,
            grid_size,
            n_basis,
            sigma2,
        } => {
            let kind = ScenarioKind::parse(&scenario)?;
            let spec = ScenarioSpec {
                scenario: kind,
                n_obs: n,
                grid_size,
                n_basis,
                sigma2,
                seed,
            };
            let generated = generate(&spec)?;
            save_dataset(&generated.data, &out)?;
            write_json(
                &StateRecord::from_state(&generated.truth),
                Some(&out.join("truth.json")),
            )?;
            let manifest = serde_json::json!({
                "schema": RUN_SCHEMA,
                "command": "simulate",
                "scenario_spec": spec,
                "dims": generated.dims,
                "basis_spec": generated.basis_spec,
            });
            write_json(&manifest, Some(&out.join("run_manifest.json")))?;
            eprintln!(
                "wrote {} curves ({} covariates) to {}",
                generated.data.n_obs(),
                generated.data.n_covariates(),
                out.display()
            );
        }
        Command::Fit {
            data,
            covariates,
            config,
            out,
        } => {
            let raw = fs::read_to_string(&config)
                .with_context(|| format!("cannot read config {}", config.display()))?;
            let run_config: RunConfig =
                serde_json::from_str(&raw).context("invalid configuration file")?;
            let dataset = load_dataset(&data, covariates.as_deref())?;
            let dims = ModelDims {
                n_obs: dataset.n_obs(),
                n_features: run_config.dims.n_features,
                n_basis: run_config.dims.n_basis,
                n_components: run_config.dims.n_components,
                n_covariates: dataset.n_covariates(),
            };
            let hyper = run_config.hyper.apply(dims.n_features);
            let effective = EffectiveConfig {
                schema: RUN_SCHEMA.to_string(),
                dims,
                hyper: hyper.clone(),
                sampler: run_config.sampler.clone(),
            };
            let effective_json = serde_json::to_string_pretty(&effective)?;
            let config_hash = sha256_hex(effective_json.as_bytes());

            let basis_spec = dataset.default_basis_spec(dims.n_basis)?;
            let chain =
                run_chain_with_basis(&dataset, &dims, &hyper, &run_config.sampler, &basis_spec)?;
            save_chain(&chain, &out, &config_hash)?;
            let manifest = serde_json::json!({
                "schema": RUN_SCHEMA,
                "command": "fit",
                "config_hash": config_hash,
                "effective_config": effective,
                "data_path": data,
                "covariates_path": covariates,
                "n_samples": chain.n_samples(),
            });
            write_json(&manifest, Some(&out.join("run_manifest.json")))?;
            eprintln!(
                "stored {} samples ({} iterations) in {}",
                chain.n_samples(),
                chain.n_iter,
                out.display()
            );
        }
        Command::Diagnose {
            chain,
            data,
            covariates,
            out,
            grid_size,
            covariate_values,
        } => {
            let (store, _manifest) = load_chain(&chain)?;
            let dataset = load_dataset(&data, covariates.as_deref())?;
            if dataset.n_obs() != store.dims.n_obs
                || dataset.n_covariates() != store.dims.n_covariates
            {
                bail!(
                    "dataset shape {}x{} does not match the chain's {}x{}",
                    dataset.n_obs(),
                    dataset.n_covariates(),
                    store.dims.n_obs,
                    store.dims.n_covariates
                );
            }
            let xs = parse_covariate_values(covariate_values.as_deref(), store.dims.n_covariates)?;
            let grid = linspace(store.basis_spec.t_min, store.basis_spec.t_max, grid_size);
            let report = fit_report(&store, &dataset, &grid, &xs, 3)?;
            write_json(&report, Some(&out))?;
            eprintln!(
                "AIC {:.3}  BIC {:.3}  DIC {:.3}  log PML {:.3}",
                report.aic, report.bic, report.dic, report.log_pml
            );
        }
        Command::Summarize {
            chain,
            grid_size,
            covariate_values,
            out,
        } => {
            let (store, _manifest) = load_chain(&chain)?;
            let xs = parse_covariate_values(covariate_values.as_deref(), store.dims.n_covariates)?;
            let grid = linspace(store.basis_spec.t_min, store.basis_spec.t_max, grid_size);
            let mut summary = Vec::new();
            for x in &xs {
                let xv = nalgebra::DVector::from_row_slice(x);
                let mut per_feature = Vec::new();
                for k in 0..store.dims.n_features {
                    per_feature.push(posterior_summary(&store, &grid, k, &xv)?);
                }
                summary.push(serde_json::json!({
                    "covariates": x,
                    "features": per_feature,
                }));
            }
            write_json(&summary, out.as_ref())?;
        }
        Command::CheckIdentifiability {
            data,
            covariates,
            chain,
            out,
        } => {
            let (store, _manifest) = load_chain(&chain)?;
            let dataset = load_dataset(&data, covariates.as_deref())?;
            let mean_state = store.posterior_mean_state()?;
            let lengths: Vec<usize> = dataset.curves.iter().map(|c| c.len()).collect();
            let report = check_assumptions(
                &dataset.design,
                &mean_state.alloc,
                &lengths,
                store.dims.n_basis,
            );
            write_json(&report, out.as_ref())?;
            eprintln!(
                "design {}  allocation {}  sampling {}",
                verdict(report.design_ok),
                verdict(report.allocation_ok),
                verdict(report.sampling_ok)
            );
        }
    }
    Ok(())
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAILED"
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
