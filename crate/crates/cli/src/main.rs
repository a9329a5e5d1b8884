use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use vizseq_cli::commands::{self, AttentionArgs, EvaluateArgs, GenerateArgs, TrainArgs, ValidateArgs};
use vizseq_cli::server::{router, AppState};
use vizseq_cli::{load_model, CliResult, CHECKPOINT_ENV};

#[derive(Debug, Parser)]
#[command(name = "vizseq", version, about = "Translate data records into Vega-Lite specifications")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model on a corpus of (dataset, specification) examples.
    Train(TrainArgs),
    /// Decode specifications for one row of a dataset.
    Generate(GenerateArgs),
    /// Measure validity rates on held-out datasets.
    Evaluate(EvaluateArgs),
    /// Check specifications against the grammar subset.
    Validate(ValidateArgs),
    /// Export the attention matrix of one decoded candidate.
    Attention(AttentionArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, clap::Args)]
struct ServeArgs {
    /// Checkpoint to serve; without one, /generate answers 503.
    #[arg(long, env = CHECKPOINT_ENV)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
}

fn serve(a: ServeArgs) -> CliResult<()> {
    let mut state = AppState::default();
    if let Some(p) = &a.checkpoint {
        let (model, id) = load_model(p)?;
        log::info!("serving checkpoint {id} from {}", p.display());
        state.model = Some(Arc::new(model));
        state.checkpoint_id = Some(id);
    } else {
        log::warn!("no checkpoint given, /generate will answer 503");
    }
    let rt = tokio::runtime::Runtime::new().map_err(vizseq_cli::data_err)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(a.addr).await.map_err(vizseq_cli::data_err)?;
        println!("listening on http://{}", a.addr);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(vizseq_cli::data_err)
    })
}

fn run(cli: Cli) -> CliResult<bool> {
    match cli.command {
        Command::Train(a) => commands::train_cmd(a).map(|_| true),
        Command::Generate(a) => commands::generate_cmd(a).map(|_| true),
        Command::Evaluate(a) => commands::evaluate_cmd(a),
        Command::Validate(a) => commands::validate_cmd(a).map(|_| true),
        Command::Attention(a) => commands::attention_cmd(a).map(|_| true),
        Command::Serve(a) => serve(a).map(|_| true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        // Evaluation finished but missed a threshold.
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {:#}", e.inner());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
