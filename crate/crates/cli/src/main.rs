use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedcomm_cli::{
    cmd_compare, cmd_gamma, cmd_partition, cmd_run, parse_config, CliError, ExperimentSpec,
};

#[derive(Parser)]
#[command(
    name = "fedcomm",
    version,
    about = "Federated-learning communication-efficiency simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment: metrics.csv and summary.json.
    Run(Common),
    /// Run several experiments on the same data and partition.
    Compare(Common),
    /// Probe mini-batch gradient sign agreement.
    Gamma(Common),
    /// Export the client partition and label histograms.
    Partition(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment file (repeat for compare).
    #[arg(long = "config", required = true)]
    configs: Vec<PathBuf>,
    /// Output directory (default: the spec's out_dir, else out/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn specs(&self) -> Result<Vec<ExperimentSpec>, CliError> {
        self.configs
            .iter()
            .map(|p| {
                let mut s = parse_config(p)?;
                if let Some(seed) = self.seed {
                    s.seed = seed;
                }
                Ok(s)
            })
            .collect()
    }

    fn single(&self) -> Result<ExperimentSpec, CliError> {
        if self.configs.len() != 1 {
            return Err(CliError::Config(
                "this command takes exactly one --config".into(),
            ));
        }
        Ok(self.specs()?.remove(0))
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(c) => {
            let spec = c.single()?;
            let out = cmd_run(&spec, &spec.output_dir(c.out.as_deref()))?;
            let acc = out.result.final_accuracy().unwrap_or(f64::NAN);
            println!(
                "{}: final accuracy {acc:.4}, wrote {}",
                spec.name,
                out.metrics.display()
            );
        }
        Command::Compare(c) => {
            let specs = c.specs()?;
            let out_dir = c
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("out").join("compare"));
            let out = cmd_compare(&specs, &out_dir)?;
            println!(
                "compared {} runs, wrote {}",
                out.runs.len(),
                out.summary.display()
            );
        }
        Command::Gamma(c) => {
            let spec = c.single()?;
            let out = cmd_gamma(&spec, &spec.output_dir(c.out.as_deref()))?;
            for (mode, rises) in &out.report.rises {
                println!(
                    "{}: mean sign agreement rises with batch size: {rises}",
                    mode.name()
                );
            }
            println!("wrote {}", out.csv.display());
        }
        Command::Partition(c) => {
            let spec = c.single()?;
            let out = cmd_partition(&spec, &spec.output_dir(c.out.as_deref()))?;
            println!(
                "{} clients, wrote {}",
                out.plan.n_clients(),
                out.plan_file.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
