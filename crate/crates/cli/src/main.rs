//! `tabstack` command line: fit, predict, evaluate and leaderboard.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tabstack::metrics::Metric;
use tabstack::orchestrator::bundle::{read_json, Metadata, PredictorBundle, METADATA_FILE};
use tabstack::orchestrator::{fit, resume, Ablation, FitOptions, StackPlan};
use tabstack::report::{build_report, RunResult};
use tabstack::schema::TabularDataset;
use tabstack::Error;

#[derive(Parser)]
#[command(name = "tabstack", version, about = "Time-budgeted stacked ensembles for tabular data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a predictor into a model directory.
    Fit(FitArgs),
    /// Write predictions for a CSV file.
    Predict(PredictArgs),
    /// Score one or more predictors on a labeled CSV file.
    Evaluate(EvaluateArgs),
    /// Show the validation leaderboard of a predictor.
    Leaderboard(LeaderboardArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Training CSV (defaults to the recorded file when continuing).
    #[arg(long, required_unless_present = "continue_training")]
    train: Option<PathBuf>,
    /// Optional labeled CSV scored after training.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, required_unless_present = "continue_training")]
    label: Option<String>,
    #[arg(long)]
    eval_metric: Option<Metric>,
    /// Total training budget in seconds.
    #[arg(long, default_value_t = 3600.0)]
    time_limit: f64,
    /// Bagging and multi-layer stacking (on by default).
    #[arg(long, overrides_with = "no_auto_stack")]
    auto_stack: bool,
    /// Single layer trained on one holdout split.
    #[arg(long)]
    no_auto_stack: bool,
    #[arg(long)]
    out: PathBuf,
    /// Resume an interrupted fit in --out.
    #[arg(long)]
    continue_training: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = tabstack::orchestrator::DEFAULT_MAX_REPEATS)]
    max_repeats: usize,
    #[arg(long, default_value_t = tabstack::orchestrator::DEFAULT_LAYERS)]
    layers: usize,
    #[arg(long)]
    no_repeat: bool,
    #[arg(long)]
    no_multistack: bool,
    #[arg(long)]
    no_bag: bool,
    #[arg(long)]
    no_network: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value = "predictions.csv")]
    output: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Model directories; several produce a comparison report.
    #[arg(long, required = true, num_args = 1..)]
    model: Vec<PathBuf>,
    #[arg(long)]
    test: PathBuf,
    /// Scoring metric (defaults to each predictor's training metric).
    #[arg(long)]
    eval_metric: Option<Metric>,
    /// Directory for report.csv and report.json.
    #[arg(long, default_value = ".")]
    report_dir: PathBuf,
}

#[derive(Args)]
struct LeaderboardArgs {
    #[arg(long)]
    model: PathBuf,
}

fn exit_status(e: &Error) -> u8 {
    match e.code() {
        "E_USAGE" => 2,
        "E_BUDGET" => 4,
        "E_CORRUPT" => 5,
        _ => 3,
    }
}

/// Loads a CSV, treating `label` as the label column only if present.
fn load_optional_label(path: &Path, label: &str) -> tabstack::Result<TabularDataset> {
    match TabularDataset::load_csv(path, Some(label)) {
        Err(Error::LabelNotFound(_)) => TabularDataset::load_csv(path, None),
        other => other,
    }
}

fn print_leaderboard(bundle: &PredictorBundle) {
    println!(
        "{:<24} {:>5} {:>14} {:>6} {:>7} {:>10} {:>8}",
        "model", "layer", "val_loss", "folds", "repeats", "fit_secs", "weight"
    );
    for e in &bundle.leaderboard {
        println!(
            "{:<24} {:>5} {:>14.6} {:>6} {:>7} {:>10.2} {:>8.3}",
            e.model, e.layer, e.validation_loss, e.fold_models, e.repeats, e.fit_seconds, e.ensemble_weight
        );
    }
}

fn cmd_fit(args: FitArgs) -> tabstack::Result<()> {
    let bundle = if args.continue_training {
        let train = match (&args.train, args.label.as_deref()) {
            (Some(p), Some(l)) => Some(TabularDataset::load_csv(p, Some(l))?),
            (Some(p), None) => {
                let meta: Metadata = read_json(&args.out.join(METADATA_FILE))?;
                Some(TabularDataset::load_csv(p, Some(&meta.label))?)
            }
            _ => None,
        };
        resume(&args.out, train.as_ref(), FitOptions::default())?
    } else {
        let (Some(train_path), Some(label)) = (&args.train, &args.label) else {
            return Err(Error::InvalidArgument("fit requires --train and --label".into()));
        };
        let train = TabularDataset::load_csv(train_path, Some(label))?;
        let no_bag = args.no_bag || args.no_auto_stack;
        let plan = StackPlan {
            layers: args.layers,
            max_repeats: args.max_repeats,
            time_limit: args.time_limit,
            ablation: Ablation {
                no_repeat: args.no_repeat,
                no_multistack: args.no_multistack,
                no_bag,
                no_network: args.no_network,
            },
            seed: args.seed,
            metric: args.eval_metric,
            ..StackPlan::default()
        };
        std::fs::create_dir_all(&args.out)?;
        let options = FitOptions {
            train_path: Some(train_path.clone()),
            ..FitOptions::default()
        };
        fit(&train, &plan, &args.out, options)?
    };
    for layer in 1..=bundle.layers.len() {
        let groups = &bundle.layers[layer - 1];
        let models: usize = groups.iter().map(|g| g.models.len()).sum();
        println!(
            "layer {layer}: {} model groups, {models} fold models ({})",
            groups.len(),
            groups.iter().map(|g| g.family.name()).collect::<Vec<_>>().join(", ")
        );
    }
    print_leaderboard(&bundle);
    if let Some(test) = &args.test {
        let data = TabularDataset::load_csv(test, Some(&bundle.metadata.label))?;
        let metric = bundle.metadata.metric.requested;
        println!("test {metric}: {:.6}", bundle.evaluate(&data)?);
    }
    println!("model directory: {}", args.out.display());
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> tabstack::Result<()> {
    let bundle = PredictorBundle::load(&args.model)?;
    let data = load_optional_label(&args.test, &bundle.metadata.label)?;
    let preds = bundle.predict(&data)?;
    preds.write_csv(&args.output, &bundle.metadata.label)?;
    println!("wrote {} predictions to {}", preds.rows(), args.output.display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> tabstack::Result<()> {
    let mut results = Vec::new();
    let dataset_name = args
        .test
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "test".into());
    for dir in &args.model {
        let bundle = PredictorBundle::load(dir)?;
        let data = TabularDataset::load_csv(&args.test, Some(&bundle.metadata.label)).map_err(|e| match e {
            Error::LabelNotFound(l) => Error::InvalidArgument(format!("evaluation data has no label column `{l}`")),
            other => other,
        })?;
        let trained = bundle.metadata.metric.requested;
        let metric = args.eval_metric.unwrap_or(trained);
        if metric != trained {
            log::warn!("{}: scoring with {metric}, trained with {trained}", dir.display());
        }
        let targets = bundle.targets(&data)?;
        let preds = bundle.predict(&data)?;
        let score = metric.score(&preds.values, &targets)?;
        let loss = metric.loss(&preds.values, &targets)?;
        println!("{}: {metric} {score:.6} (loss {loss:.6})", dir.display());
        results.push(RunResult {
            dataset: dataset_name.clone(),
            system: dir.display().to_string(),
            loss: Some(loss),
        });
    }
    if results.len() > 1 {
        let report = build_report(&results, None);
        std::fs::create_dir_all(&args.report_dir)?;
        report.write_csv(&args.report_dir.join("report.csv"))?;
        report.write_json(&args.report_dir.join("report.json"))?;
        for row in &report.rows {
            println!(
                "{:<40} rescaled {:.4} rank {}",
                row.system,
                row.rescaled_loss.unwrap_or(f64::NAN),
                row.rank.map_or("-".into(), |r| r.to_string())
            );
        }
    }
    Ok(())
}

fn cmd_leaderboard(args: LeaderboardArgs) -> tabstack::Result<()> {
    let bundle = PredictorBundle::load(&args.model)?;
    print_leaderboard(&bundle);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Leaderboard(a) => cmd_leaderboard(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(exit_status(&e))
        }
    }
}
