use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lcstim_core::pipeline::*;

/// Consecutive lane-change mining and modeling on highway trajectories.
#[derive(Parser)]
#[command(name = "lcstim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage from a TOML config into one bundle.
    Run(StageArgs),
    /// Detect lane changes; --input is a TOML config, --out the bundle to create.
    Detect(StageArgs),
    /// Mine consecutive scenarios from a bundle's events.csv.
    Mine(StageArgs),
    /// Utility records, comparison matrices and the risk table.
    Analyze(StageArgs),
    /// Fit the mixed logit for one period pair.
    Fit(StageArgs),
    /// Train and evaluate the classifiers.
    Predict(StageArgs),
    /// Write manifest.json for a bundle.
    Report(StageArgs),
}

#[derive(Args)]
struct StageArgs {
    /// TOML config (run, detect) or bundle directory (later stages).
    #[arg(long)]
    input: PathBuf,
    /// Bundle directory to write; later stages default to --input.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_interval: Option<f64>,
    #[arg(long)]
    ttc_threshold: Option<f64>,
    /// e.g. "1s:1e"
    #[arg(long)]
    period_pair: Option<PeriodPair>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Repeatable; defaults to the config's model list.
    #[arg(long, value_parser = ["dt", "rf", "svm"])]
    model: Vec<String>,
}

impl StageArgs {
    fn apply(&self, cfg: &mut PipelineConfig) -> Result<(), PipelineError> {
        if let Some(v) = self.max_interval {
            cfg.mining.max_interval = v;
        }
        if let Some(v) = self.ttc_threshold {
            cfg.utility.ttc_threshold = v;
        }
        if let Some(v) = self.period_pair {
            cfg.utility.period_pair = v;
        }
        if let Some(v) = self.draws {
            cfg.logit.draws = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if !self.model.is_empty() {
            cfg.classify.models = self
                .model
                .iter()
                .map(|m| m.parse::<ModelKind>().map_err(|e| PipelineError::usage(Stage::Config, e)))
                .collect::<Result<_, _>>()?;
        }
        cfg.validate()
    }

    fn config_file(&self) -> Result<PipelineConfig, PipelineError> {
        let path = std::fs::canonicalize(&self.input)
            .map_err(|e| PipelineError::usage(Stage::Config, format!("{}: {e}", self.input.display())))?;
        let mut cfg = PipelineConfig::from_file(path)?;
        self.apply(&mut cfg)?;
        Ok(cfg)
    }

    /// Config recorded in the input bundle plus flag overrides; the effective
    /// config is written to the output bundle.
    fn bundle(&self) -> Result<(PipelineConfig, PathBuf), PipelineError> {
        let mut cfg = bundle_config(&self.input)?;
        self.apply(&mut cfg)?;
        let out = self.out.clone().unwrap_or_else(|| self.input.clone());
        init_bundle(&out, &cfg)?;
        Ok((cfg, out))
    }
}

fn execute(cmd: Command) -> Result<String, PipelineError> {
    match cmd {
        Command::Run(a) => {
            let cfg = a.config_file()?;
            let run = run_pipeline(&cfg, a.out.as_deref())?;
            Ok(format!("bundle written to {}", run.out_dir.display()))
        }
        Command::Detect(a) => {
            let cfg = a.config_file()?;
            let out = a
                .out
                .clone()
                .or_else(|| cfg.out_dir.clone())
                .ok_or_else(|| PipelineError::usage(Stage::Config, "--out is required"))?;
            let inputs = load_inputs(&cfg)?;
            init_bundle(&out, &cfg)?;
            if let Some(t) = &inputs.truth {
                write_truth(&out, t)?;
            }
            let (events, summary) = detect_stage(&cfg, &inputs.recordings);
            write_detect(&out, &events, &summary)?;
            Ok(format!("{} events ({} inward) from {} recordings", summary.events, summary.inward, summary.recordings))
        }
        Command::Mine(a) => {
            let events = read_events(&a.input)?;
            let (cfg, out) = a.bundle()?;
            let recs = load_recordings(&cfg)?;
            let rows = mine_stage(&cfg, &recs, &events)?;
            write_mine(&out, &rows)?;
            Ok(format!("{} consecutive scenarios", rows.len()))
        }
        Command::Analyze(a) => {
            let scenarios = read_scenarios(&a.input)?;
            let (cfg, out) = a.bundle()?;
            let recs = load_recordings(&cfg)?;
            let analysis = analyze_stage(&cfg, &recs, &scenarios)?;
            write_analyze(&out, &analysis)?;
            Ok(format!("{} utility records", analysis.records.len()))
        }
        Command::Fit(a) => {
            let features = read_features(&a.input, Stage::Fit)?;
            let (cfg, out) = a.bundle()?;
            let fit = fit_stage(&cfg, &features)?;
            write_fit(&out, &fit)?;
            Ok(format!("{} observations, rho2 {:.4}", fit.fit.n_obs, fit.fit.rho2))
        }
        Command::Predict(a) => {
            let features = read_features(&a.input, Stage::Predict)?;
            let (cfg, out) = a.bundle()?;
            let p = predict_stage(&cfg, &features, &cfg.classify.models)?;
            write_predict(&out, &p)?;
            let acc: Vec<String> =
                p.outcomes.iter().map(|o| format!("{} {:.3}", o.kind.name(), o.test.accuracy)).collect();
            Ok(format!("test accuracy: {}", acc.join(", ")))
        }
        Command::Report(a) => {
            let (cfg, out) = if a.out.is_some() || has_overrides(&a) {
                a.bundle()?
            } else {
                (bundle_config(&a.input)?, a.input.clone())
            };
            let m = report_stage(&out, &cfg, None)?;
            Ok(format!("manifest lists {} files", m.files.len()))
        }
    }
}

fn has_overrides(a: &StageArgs) -> bool {
    a.max_interval.is_some()
        || a.ttc_threshold.is_some()
        || a.period_pair.is_some()
        || a.draws.is_some()
        || a.seed.is_some()
        || !a.model.is_empty()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

