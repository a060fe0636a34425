use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use metaselect_cli::config::PipelineConfig;
use metaselect_cli::error::{CliError, CliResult};
use metaselect_cli::infer::infer;
use metaselect_cli::manifest::write_atomic;
use metaselect_cli::stages::{cmd_base, cmd_embed, cmd_meta, cmd_prepare, Context, StageStatus};
use metaselect_core::synthetic::{generate, SyntheticConfig};

#[derive(Parser)]
#[command(name = "metaselect", version, about = "Per-user selection of collaborative filtering algorithms")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, default_value = "metaselect.toml")]
    config: PathBuf,
    /// Overrides the configured global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured work directory.
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
    /// Rerun stages even when their outputs are up to date.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load ratings, binarize, filter and split.
    Prepare,
    /// Train the base recommenders and compute per-user NDCG and labels.
    Base,
    /// Train the configured user embedding models.
    Embed,
    /// Cross-validate the meta learners and train the served selector.
    Meta,
    /// Run prepare, base, embed and meta in order.
    Run,
    /// Recommend items for one user through the trained selector.
    Infer {
        #[arg(long)]
        user: String,
        /// Comma-separated item ids the user has interacted with.
        #[arg(long, value_delimiter = ',')]
        items: Vec<String>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Write a synthetic ratings file with planted user groups.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        items: Option<usize>,
        /// Size of the popular head.
        #[arg(long)]
        head_items: Option<usize>,
        /// Number of niche clusters.
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long, default_value_t = 7)]
        synth_seed: u64,
    },
}

fn load_context(cli: &Cli) -> CliResult<Context> {
    let mut cfg = PipelineConfig::load(&cli.config).map_err(CliError::Config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = &cli.work_dir {
        cfg.paths.work_dir = w.clone();
    }
    Ok(Context::new(cfg, cli.force))
}

fn report(stage: &str, status: StageStatus) {
    match status {
        StageStatus::Ran => println!("{stage}: done"),
        StageStatus::UpToDate => println!("{stage}: up to date"),
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    type Stage = fn(&Context) -> CliResult<StageStatus>;
    let stages: Vec<(&str, Stage)> = match &cli.command {
        Command::Prepare => vec![("prepare", cmd_prepare)],
        Command::Base => vec![("base", cmd_base)],
        Command::Embed => vec![("embed", cmd_embed)],
        Command::Meta => vec![("meta", cmd_meta)],
        Command::Run => vec![("prepare", cmd_prepare), ("base", cmd_base), ("embed", cmd_embed), ("meta", cmd_meta)],
        Command::Infer { user, items, k } => {
            let ctx = load_context(cli)?;
            let k = k.unwrap_or(ctx.cfg.eval.k);
            let result = infer(&ctx, user, items, k)?;
            let text = serde_json::to_string_pretty(&result).map_err(|e| CliError::stage("infer", e))?;
            println!("{text}");
            return Ok(());
        }
        Command::Synth { out, users, items, head_items, clusters, synth_seed } => {
            let d = SyntheticConfig::default();
            let sc = SyntheticConfig {
                seed: *synth_seed,
                n_users: users.unwrap_or(d.n_users),
                n_items: items.unwrap_or(d.n_items),
                head_items: head_items.unwrap_or(d.head_items),
                n_clusters: clusters.unwrap_or(d.n_clusters),
                ..d
            };
            let data = generate(&sc).map_err(|e| CliError::Config(e.into()))?;
            let mut buf = Vec::new();
            data.write_csv(&mut buf).map_err(|e| CliError::stage("synth", e))?;
            write_atomic(out, &buf)
                .with_context(|| format!("writing {}", out.display()))
                .map_err(|e| CliError::stage("synth", e))?;
            println!("synth: wrote {} ratings to {}", data.ratings.rows.len(), out.display());
            return Ok(());
        }
    };
    let ctx = load_context(cli)?;
    for (name, f) in stages {
        report(name, f(&ctx)?);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
