use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairstream::harness::{
    cmd_fbu, cmd_run, cmd_study, synthetic_csv_schema, write_synthetic_csv, ExperimentSpec, HarnessError, StreamSource,
    StudyKind,
};
use fairstream::learners::LearnerConfig;
use fairstream::pipeline::Technique;
use fairstream::stream::{CsvSchema, StreamConfig};
use fairstream::ConfigError;

/// Fair rebalancing experiments over evolving, biased streams.
#[derive(Parser)]
#[command(name = "fairstream", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run each technique over each seeded stream.
    Run(CommonArgs),
    /// Compare techniques on the fairness/performance trade-off plane.
    Fbu(CommonArgs),
    /// Sweep one parameter and write a long-format CSV.
    Study {
        /// decay, window or drift-recovery
        #[arg(long)]
        kind: String,
        /// Comma-separated parameter values; defaults depend on the study.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Write a synthetic stream to CSV.
    SynthGen {
        #[arg(long, short)]
        output: PathBuf,
        /// Read the stream settings from an experiment config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        instances: Option<u64>,
    },
    /// Print the default experiment config as TOML.
    Inspect,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (TOML); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Repeat to run several techniques.
    #[arg(long = "technique", value_parser = parse_technique)]
    techniques: Vec<Technique>,
    /// Repeat to run several seeds.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Length of the synthetic stream.
    #[arg(long)]
    instances: Option<u64>,
    /// Read instances from a CSV file instead of the synthetic stream.
    #[arg(long, requires_all = ["sensitive_column", "label_column", "favorable_value", "privileged_value"])]
    csv: Option<PathBuf>,
    #[arg(long)]
    sensitive_column: Option<String>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    favorable_value: Option<String>,
    #[arg(long)]
    privileged_value: Option<String>,
    #[arg(long)]
    decay: Option<f64>,
    #[arg(long)]
    min_size: Option<usize>,
    #[arg(long)]
    max_window: Option<usize>,
    #[arg(long)]
    balance_target: Option<f64>,
    #[arg(long)]
    fairness_target: Option<f64>,
    #[arg(long)]
    drift_delta: Option<f64>,
    /// hoeffding-tree or naive-bayes
    #[arg(long)]
    learner: Option<String>,
    /// Skip the per-arrival JSON lines file.
    #[arg(long)]
    no_steps: bool,
}

fn parse_technique(s: &str) -> Result<Technique, String> {
    s.parse().map_err(|e: ConfigError| e.reason)
}

impl CommonArgs {
    fn spec(&self) -> Result<ExperimentSpec, HarnessError> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::load(path)?,
            None => ExperimentSpec::default(),
        };
        if !self.techniques.is_empty() {
            spec.techniques = self.techniques.clone();
        }
        if !self.seeds.is_empty() {
            spec.seeds = self.seeds.clone();
        }
        if let Some(dir) = &self.output_dir {
            spec.output_dir = dir.clone();
        }
        if let Some(path) = &self.csv {
            let schema = CsvSchema::new(
                self.sensitive_column.clone().unwrap_or_default(),
                self.label_column.clone().unwrap_or_default(),
                self.favorable_value.clone().unwrap_or_default(),
                self.privileged_value.clone().unwrap_or_default(),
            );
            spec.stream = StreamSource::Csv {
                path: path.clone(),
                schema,
            };
        }
        if let Some(n) = self.instances {
            match &mut spec.stream {
                StreamSource::Synthetic(cfg) => cfg.n_instances = n,
                StreamSource::Csv { .. } => {
                    return Err(ConfigError::new("instances", "only applies to synthetic streams").into())
                }
            }
        }
        let fs2 = &mut spec.fs2;
        if let Some(v) = self.decay {
            fs2.decay = v;
        }
        if let Some(v) = self.min_size {
            fs2.min_size = v;
        }
        if let Some(v) = self.max_window {
            fs2.max_window = v;
        }
        if let Some(v) = self.balance_target {
            fs2.balance_target = v;
        }
        if let Some(v) = self.fairness_target {
            fs2.fairness_target = v;
        }
        if let Some(v) = self.drift_delta {
            fs2.drift_delta = v;
        }
        match self.learner.as_deref() {
            None => {}
            Some("hoeffding-tree") => fs2.learner = LearnerConfig::default(),
            Some("naive-bayes") => fs2.learner = LearnerConfig::NaiveBayes,
            Some(other) => return Err(ConfigError::new("learner", format!("unknown learner `{other}`")).into()),
        }
        if self.no_steps {
            spec.write_steps = false;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn execute(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Run(args) => {
            let spec = args.spec()?;
            for s in cmd_run(&spec)? {
                println!(
                    "{:<22} seed {:<6} bal_acc {} recall {} cspd {:+.4} ceod {:+.4} synthetics {} drifts {}",
                    s.technique.name(),
                    s.seed,
                    opt(s.balanced_accuracy),
                    opt(s.recall),
                    s.cspd,
                    s.ceod,
                    s.total_synthetics,
                    s.drift_events.len()
                );
            }
            println!("wrote {}", spec.output_dir.display());
        }
        Command::Fbu(args) => {
            let spec = args.spec()?;
            let report = cmd_fbu(&spec)?;
            println!("technique              cases  win-win   good  inverted   poor  lose-lose");
            for t in &report.techniques {
                let r = &t.shares;
                println!(
                    "{:<22} {:>5} {:>8.2} {:>6.2} {:>9.2} {:>6.2} {:>10.2}",
                    t.technique, t.cases, r.win_win, r.good, r.inverted, r.poor, r.lose_lose
                );
            }
            println!("wrote {}", spec.output_dir.display());
        }
        Command::Study { kind, grid, common } => {
            let kind: StudyKind = kind.parse()?;
            let spec = common.spec()?;
            let grid = if grid.is_empty() { kind.default_grid() } else { grid };
            let rows = cmd_study(&spec, kind, &grid)?;
            println!(
                "{} rows written to {}",
                rows.len(),
                spec.output_dir.join(format!("study-{}.csv", kind.name())).display()
            );
        }
        Command::SynthGen {
            output,
            config,
            seed,
            instances,
        } => {
            let mut cfg = match config {
                Some(path) => match ExperimentSpec::load(&path)?.stream {
                    StreamSource::Synthetic(cfg) => cfg,
                    StreamSource::Csv { .. } => {
                        return Err(ConfigError::new("stream.kind", "synth-gen needs a synthetic stream").into())
                    }
                },
                None => StreamConfig::canonical(seed),
            };
            cfg.seed = seed;
            if let Some(n) = instances {
                cfg.n_instances = n;
            }
            let n = write_synthetic_csv(&cfg, &output)?;
            let schema = synthetic_csv_schema();
            println!(
                "{n} instances written to {} (sensitive column `{}`, label column `{}`)",
                output.display(),
                schema.sensitive_column,
                schema.label_column
            );
        }
        Command::Inspect => print!("{}", ExperimentSpec::default().to_toml_string()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("error: {e}");
            if e.is_usage() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
