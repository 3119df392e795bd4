use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use incivility_cli::{
    cmd_conflicts, cmd_eval, cmd_featurize, cmd_filter, cmd_gradcheck, cmd_posthoc, cmd_predict,
    cmd_train, CliError, ModelKind, PipelineConfig,
};

/// Incivility detection pipeline.
#[derive(Debug, Parser)]
#[command(name = "incivil", version)]
struct Cli {
    /// TOML pipeline config; relative paths inside it are resolved against its directory.
    #[arg(long, global = true, env = "INCIVIL_CONFIG")]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Keep tweets with an offensive word and at least one mention.
    Filter,
    /// Write the content and textual feature table of the corpus.
    Featurize,
    /// Count opinion conflicts between account holders and targets.
    Conflicts {
        /// Timeline tweets per user in each context.
        #[arg(long)]
        context_k: Option<usize>,
    },
    /// Train a model and evaluate it on the held-out split.
    Train {
        #[arg(long, value_enum)]
        model: ModelKind,
    },
    /// Score tweets with a trained incivility checkpoint.
    Predict,
    /// Compare predictions against gold labels.
    Eval,
    /// Repetition, reputation and category analyses of predicted incivility.
    Posthoc,
    /// Verify analytic gradients of every layer and model.
    Gradcheck,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(dir) = &cli.out_dir {
        cfg = cfg.with_out_dir(dir);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Filter => println!("{}", cmd_filter(&cfg)?),
        Command::Featurize => println!("featurized {} tweets", cmd_featurize(&cfg)?),
        Command::Conflicts { context_k } => {
            let s = cmd_conflicts(&cfg, context_k)?;
            println!(
                "scored {} of {} tweets with k = {} (skipped {}, users without timeline {})",
                s.scored,
                s.tweets,
                s.context_k,
                s.skipped.len(),
                s.missing_timelines.len()
            );
        }
        Command::Train { model } => {
            let out = cmd_train(&cfg, model)?;
            let m = &out.metrics;
            println!(
                "trained {} on {} tweets (valid {}, test {}) -> {}",
                m.model,
                m.n_train,
                m.n_valid,
                m.n_test,
                out.checkpoint.display()
            );
            if let Some(t) = &m.test {
                println!("test accuracy {:.4} f1 {:.4}", t.accuracy, t.f1_positive);
            }
            if let Some(a) = m.valid_accuracy {
                println!("validation accuracy {a:.4}");
            }
        }
        Command::Predict => {
            let s = cmd_predict(&cfg)?;
            println!(
                "{}: scored {} tweets, {} incivil",
                s.model, s.scored, s.incivil
            );
        }
        Command::Eval => {
            let e = cmd_eval(&cfg)?;
            let r = &e.report;
            let auc = r
                .roc_auc
                .map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"));
            println!(
                "n {} accuracy {:.4} f1 {:.4} auc {auc}",
                r.n, r.accuracy, r.f1_positive
            );
        }
        Command::Posthoc => {
            let s = cmd_posthoc(&cfg)?;
            println!(
                "{} incidents; repeat account share {:.3}, repeat target share {:.3}, {} role swaps",
                s.incidents, s.repeat_account_share, s.repeat_target_share, s.role_swaps
            );
        }
        Command::Gradcheck => {
            for r in cmd_gradcheck(&cfg)? {
                println!(
                    "{:<24} ok  checked {:>5}  max rel err {:.2e}",
                    r.name, r.checked, r.max_rel_err
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = std::env::var("INCIVIL_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
    {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::warn!("cannot size the thread pool: {e}");
        }
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
