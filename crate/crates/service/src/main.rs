use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use itar_core::itar::{ItarConfig, LabelingMode};
use itar_service::{serve, ServeOptions, SessionSpec};

/// Serve a topic labeling session.
#[derive(Parser, Debug)]
#[command(name = "itar-review", version)]
struct Args {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long)]
    session_dir: PathBuf,
    /// Binary corpus for a new session.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// ITAR config (JSON) for a new session.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory with the UI bundle.
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let new_session = match (args.corpus, args.config) {
        (Some(corpus), Some(config)) => {
            let text = std::fs::read_to_string(&config).with_context(|| config.display().to_string())?;
            let mut config: ItarConfig = serde_json::from_str(&text).context("parsing ITAR config")?;
            config.labeling_mode = LabelingMode::Interactive;
            Some(SessionSpec { corpus, config })
        }
        (None, None) => None,
        _ => anyhow::bail!("--corpus and --config must be given together"),
    };
    serve(ServeOptions { port: args.port, session_dir: args.session_dir, new_session, static_dir: args.static_dir })
        .await
}
