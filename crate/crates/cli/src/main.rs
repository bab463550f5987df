use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use usvctx_core::pipeline::{
    cmd_export_spectrograms, cmd_extract, cmd_partition, cmd_synth, cmd_table1, cmd_train_eval,
    PipelineError, RunConfig,
};
use usvctx_core::synth::CorpusSpec;

#[derive(Parser)]
#[command(name = "usvctx", version, about = "Bat vocalisation context pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter the cohort and extract pitch-contour features.
    Extract(StageArgs),
    /// Build the emitter-disjoint 3-fold plan.
    Partition(StageArgs),
    /// Nested model selection, pooled test predictions and evaluation report.
    TrainEval(StageArgs),
    /// Write one 3 s spectrogram tensor per cohort utterance.
    ExportSpectrograms(StageArgs),
    /// Per-context averages of the voiced F0 statistics.
    Table1(StageArgs),
    /// Generate the synthetic desk-scale corpus and a matching config.
    Synth {
        /// Directory to create the corpus in.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Utterances per context.
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long)]
        emitters: Option<usize>,
    },
}

#[derive(Args)]
struct StageArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cost grid, e.g. `0.01,0.1,1`.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long)]
    replicates: Option<usize>,
}

impl StageArgs {
    fn resolve(&self) -> Result<RunConfig, PipelineError> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(grid) = &self.grid {
            cfg.grid = Some(grid.clone());
        }
        if let Some(r) = self.replicates {
            cfg.replicates = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Extract(a) => {
            let s = cmd_extract(&a.resolve()?)?;
            println!(
                "extracted {} of {} utterances ({} unvoiced, {} failed)",
                s.extracted, s.cohort, s.unvoiced, s.failed
            );
        }
        Command::Partition(a) => {
            let plan = cmd_partition(&a.resolve()?)?;
            for f in 0..plan.fold_count() {
                println!("fold {f}: {} test utterances", plan.test_ids(f).len());
            }
        }
        Command::TrainEval(a) => {
            let s = cmd_train_eval(&a.resolve()?)?;
            println!(
                "UAR {:.3} [{:.3} - {:.3}] over {} predictions, costs {:?}",
                s.report.uar, s.report.ci_low, s.report.ci_high, s.report.n, s.chosen_costs
            );
        }
        Command::ExportSpectrograms(a) => {
            let s = cmd_export_spectrograms(&a.resolve()?)?;
            println!("wrote {} tensors, {} failed", s.written, s.failed.len());
        }
        Command::Table1(a) => {
            let rows = cmd_table1(&a.resolve()?)?;
            println!("{} contexts", rows.len());
        }
        Command::Synth {
            out,
            seed,
            per_class,
            emitters,
        } => {
            let mut spec = CorpusSpec::desk_scale(seed);
            if let Some(n) = per_class {
                spec.per_class_count = n;
            }
            if let Some(n) = emitters {
                spec.n_emitters = n;
            }
            cmd_synth(&spec, &out)?;
            println!("config: {}", out.join("config.toml").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
