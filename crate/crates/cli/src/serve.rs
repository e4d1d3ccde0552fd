use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use scribe_service::config::EnginesConfig;
use scribe_service::http::router;
use scribe_service::pipeline::Workers;
use scribe_service::store::Store;
use scribe_service::Service;
use tracing_subscriber::EnvFilter;

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long, env = "SCRIBE_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Job journal and blob directory; jobs live in memory when omitted.
    #[arg(long, env = "SCRIBE_STORAGE")]
    pub storage: Option<PathBuf>,
    /// Engine descriptors as JSON.
    #[arg(long, env = "SCRIBE_ENGINES")]
    pub engines: PathBuf,
    #[arg(long, env = "SCRIBE_MEDIA_WORKERS", default_value_t = 2)]
    pub media_workers: usize,
    /// Capped by the recogniser's own `max_concurrency`.
    #[arg(long, env = "SCRIBE_RECOGNITION_WORKERS", default_value_t = 2)]
    pub recognition_workers: usize,
}

/// Worker counts after applying the recogniser's concurrency cap.
pub fn workers(args: &ServeArgs, config: &EnginesConfig) -> Workers {
    let limit = config.recogniser_limit().unwrap_or(usize::MAX).max(1);
    Workers { media: args.media_workers, recognition: args.recognition_workers.min(limit) }
}

pub fn run(args: ServeArgs) -> Result<()> {
    tracing_subscriber::fmt().with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into())).init();
    let config = EnginesConfig::load(&args.engines)?;
    let engines = config.build()?;
    let workers = workers(&args, &config);

    let store = match &args.storage {
        Some(dir) => {
            let (store, interrupted) =
                Store::open(dir).with_context(|| format!("opening storage at {}", dir.display()))?;
            for id in interrupted {
                tracing::warn!(%id, "job was interrupted by a restart and marked failed");
            }
            store
        }
        None => Store::in_memory(),
    };

    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let service = Service::start(store, engines, workers);
        let listener = tokio::net::TcpListener::bind(args.listen)
            .await
            .with_context(|| format!("binding {}", args.listen))?;
        tracing::info!(addr = %listener.local_addr()?, ?workers, "listening");
        axum::serve(listener, router(service))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[derive(Parser)]
    struct Wrap {
        #[command(flatten)]
        args: ServeArgs,
    }

    fn config(limit: Option<usize>) -> EnginesConfig {
        let mut asr = serde_json::json!({"id": "m", "kind": "mock", "table": {}});
        if let Some(n) = limit {
            asr["max_concurrency"] = n.into();
        }
        serde_json::from_value(serde_json::json!({ "asr": asr })).unwrap()
    }

    #[test]
    fn documented_engines_file_parses() {
        let cfg: EnginesConfig = serde_json::from_str(
            r#"{
              "asr": {
                "id": "kaldi",
                "kind": "subprocess",
                "command": { "program": "python3", "args": ["decode.py"] },
                "max_concurrency": 2
              },
              "restorer": { "kind": "lexicon", "corpus": "rich_corpus.txt" }
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.recogniser_limit(), Some(2));
    }

    #[test]
    fn recognition_workers_respect_engine_cap() {
        let args = Wrap::parse_from(["x", "--engines", "e.json", "--recognition-workers", "8"]).args;
        assert_eq!(workers(&args, &config(Some(3))), Workers { media: 2, recognition: 3 });
        assert_eq!(workers(&args, &config(None)), Workers { media: 2, recognition: 8 });
    }
}
