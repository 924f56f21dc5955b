use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use kgc_agent::builder::{build_emerging, BuildError, BuilderConfig, WikidataClient};
use kgc_agent::cache::{CacheMode, ReplayCache, ReqwestTransport};
use kgc_agent::harness::{
    default_run_dir, run_eval, score_predictions, show_trajectory, RunConfig,
};
use kgc_agent::metrics::RaRule;

#[derive(Parser)]
#[command(name = "kgc-agent", version, about = "Agentic knowledge-graph completion toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an evaluation described by a TOML config.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Run directory (default: runs/<config stem> next to the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build an emerging-entities benchmark; rerun to resume.
    BuildEmerging {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print one case's trajectory from a run directory.
    ShowTrajectory {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        case: String,
    },
    /// Score precomputed predictions (JSON lines) against a training graph.
    Score {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,3,5,10")]
        n: Vec<usize>,
        /// Use the literal `N <= N_rel` inclusion rule for relation-aware Hits.
        #[arg(long)]
        literal_ra: bool,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Deserialize)]
struct BuildFile {
    #[serde(flatten)]
    builder: BuilderConfig,
    #[serde(default)]
    cache_dir: Option<PathBuf>,
    #[serde(default)]
    cache_mode: CacheMode,
}

fn build(config: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(config)
        .with_context(|| format!("reading {}", config.display()))?;
    let file: BuildFile = toml::from_str(&text).context("parsing builder config")?;
    file.builder.validate()?;
    let cache_dir = match file.cache_dir {
        Some(d) if d.is_relative() => config.parent().unwrap_or(Path::new(".")).join(d),
        Some(d) => d,
        None => out.join("cache"),
    };
    let transport = ReqwestTransport::new(Duration::from_secs(60), 3)?;
    let cache = Arc::new(ReplayCache::new(cache_dir, file.cache_mode, Arc::new(transport)));
    let client = WikidataClient::new(
        file.builder.endpoint.clone(),
        file.builder.sparql_endpoint.clone(),
        cache.clone(),
    );
    let stamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    match build_emerging(&file.builder, &client, out, &stamp) {
        Ok(m) => {
            let s = cache.stats();
            println!(
                "{} triples, {} relations, {} entities -> {} (cache: {} hits, {} network calls)",
                m.triple_count,
                m.relation_count,
                m.entity_count,
                out.display(),
                s.hits,
                s.network_calls
            );
            Ok(())
        }
        Err(e @ BuildError::Interrupted { .. }) => bail!("{e}"),
        Err(e) => Err(e.into()),
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Eval { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let out = out.unwrap_or_else(|| default_run_dir(&config));
            let report = run_eval(&cfg, &out)?;
            print!("{}", report.render());
            println!("run directory: {}", out.display());
        }
        Command::BuildEmerging { config, out } => build(&config, &out)?,
        Command::ShowTrajectory { run, case } => print!("{}", show_trajectory(&run, &case)?),
        Command::Score {
            predictions,
            train,
            mut n,
            literal_ra,
            json,
        } => {
            n.sort_unstable();
            n.dedup();
            let rule = if literal_ra { RaRule::LiteralEquation } else { RaRule::CardinalityWithinN };
            let report = score_predictions(&predictions, &train, &n, rule)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report.rows())?);
            } else {
                print!("{}", report.render_table());
            }
        }
    }
    Ok(())
}
