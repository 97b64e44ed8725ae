//! `adhmc` — experiment harness for the HMC / AD-HMC sampling library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adhmc_cli::blr::{blr_from_csv, BlrSchema};
use adhmc_cli::config::load_config;
use adhmc_cli::experiment::run_experiment;
use adhmc_cli::oplab::{format_report, run_oplab, OpLabOptions};
use adhmc_cli::spec::resolve_spec;
use adhmc_cli::CliError;
use adhmc_core::models::DensityModel;
use adhmc_core::registry;

#[derive(Parser)]
#[command(name = "adhmc", about = "HMC / AD-HMC sampling experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured experiment and write trace/summary CSV files.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Thread count (accepted for interface stability; execution is
        /// single-threaded and output never depends on this value).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Inspect the target registry.
    Targets {
        #[command(subcommand)]
        action: TargetsAction,
    },
    /// Ingest a contraceptive-use CSV and report the logistic posterior.
    Blr {
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "use-col")]
        use_col: String,
        #[arg(long = "livch-col")]
        livch_col: String,
        #[arg(long = "age-col")]
        age_col: String,
        #[arg(long = "urban-col")]
        urban_col: String,
        #[arg(long = "prior-sd", default_value_t = 10.0)]
        prior_sd: f64,
    },
    /// Iterate the 1D transfer operator and report the decay.
    OperatorLab {
        /// Target spec: registry name or gm(mean:sigma:weight, ...).
        #[arg(long)]
        target: String,
        /// Auxiliary spec, same grammar.
        #[arg(long)]
        aux: String,
        #[arg(long)]
        iters: usize,
        #[arg(long, default_value_t = 9.0)]
        half_width: f64,
        #[arg(long, default_value_t = 361)]
        grid_points: usize,
        #[arg(long, default_value_t = 1.0 / 64.0)]
        step: f64,
        #[arg(long, default_value_t = 64)]
        leapfrog_steps: usize,
        #[arg(long, default_value_t = 1.0)]
        h0_center: f64,
    },
}

#[derive(Subcommand)]
enum TargetsAction {
    /// List registry names.
    List,
    /// Print the mixture table of one registry entry.
    Show { name: String },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, seed, out, threads: _ } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(out) = out {
                cfg.out_dir = out.display().to_string();
            }
            let written = run_experiment(&cfg)?;
            for path in written {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Targets { action } => {
            match action {
                TargetsAction::List => {
                    for name in registry::names() {
                        println!("{name}");
                    }
                    println!("std_normal(d)");
                    println!("iso_normal(d,sigma)");
                }
                TargetsAction::Show { name } => {
                    let mix =
                        registry::resolve(&name).map_err(|e| CliError::Config(e.to_string()))?;
                    println!("name,{name}");
                    println!("dimension,{}", mix.dim());
                    println!("component,mean,sigma,weight");
                    for (i, (c, w)) in mix.components().iter().zip(mix.weights()).enumerate() {
                        let mean = c
                            .mean()
                            .iter()
                            .map(|v| v.to_string())
                            .collect::<Vec<_>>()
                            .join(" ");
                        let sigma = c.covariance().as_mat()[(0, 0)].sqrt();
                        println!("{i},{mean},{sigma},{w}");
                    }
                }
            }
            Ok(())
        }
        Command::Blr { data, use_col, livch_col, age_col, urban_col, prior_sd } => {
            let schema = BlrSchema { use_col, livch_col, age_col, urban_col };
            let ds = blr_from_csv(&data, &schema, prior_sd)?;
            println!("rows,{}", ds.n_rows);
            println!("dimension,4");
            println!("positive_labels,{}", ds.positive_labels);
            println!("age_mean,{}", ds.age_mean);
            let origin = [0.0; 4];
            let mut grad = vec![0.0; 4];
            ds.posterior.grad_potential(&origin, &mut grad);
            println!("potential_at_origin,{}", ds.posterior.potential(&origin));
            println!(
                "grad_at_origin,{}",
                grad.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
            );
            Ok(())
        }
        Command::OperatorLab {
            target,
            aux,
            iters,
            half_width,
            grid_points,
            step,
            leapfrog_steps,
            h0_center,
        } => {
            let target = resolve_spec(&target)?;
            let aux = resolve_spec(&aux)?;
            let opts = OpLabOptions {
                iters,
                half_width,
                grid_points,
                step,
                leapfrog_steps,
                h0_center,
            };
            let report = run_oplab(&target, &aux, &opts)?;
            print!("{}", format_report(&report));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
