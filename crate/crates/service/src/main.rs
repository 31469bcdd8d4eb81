use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use atelier::api::{router, AppState};
use atelier::store::LogStore;
use atelier_core::artistio::{replay_feedback, OracleSpec, ReplayArtist, ScriptedArtist};
use atelier_core::embedding::Vocab;
use atelier_core::engine::session::{lint_log, parse_jsonl, Artist, EventBody, Session, SessionState};
use atelier_core::engine::{EngineError, FeedbackEvent, LoopConfig, LoopSettings, Stage};
use atelier_core::labanstr::{parse_score, validate_score, Score};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "atelier", version, about = "Co-creative dance notation loop")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the standard vocabulary file.
    InitVocab { file: PathBuf },
    /// Run multimodal and generator training and report the traces.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Write the training events as a JSONL log.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the loop against a scripted oracle, logging to a new file.
    Run {
        #[arg(long)]
        oracle: PathBuf,
        #[arg(long, default_value_t = 20)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Sync every line to disk before the next step.
        #[arg(long)]
        fsync: bool,
    },
    /// Re-run a log from its recorded feedback and compare byte for byte.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Check a score file, or a session log if the file is JSONL.
    Lint { file: PathBuf },
    /// Serve the HTTP session API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        fsync: bool,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<LoopConfig> {
    Ok(match path {
        Some(p) => LoopConfig::parse(&read(p)?).with_context(|| format!("config {}", p.display()))?,
        None => LoopConfig::new(LoopSettings::default())?,
    })
}

fn load_vocab(path: Option<&Path>) -> Result<Vocab> {
    Ok(match path {
        Some(p) => Vocab::parse(&read(p)?).with_context(|| format!("vocab {}", p.display()))?,
        None => Vocab::standard(),
    })
}

struct Silent;

impl Artist for Silent {
    fn feedback(&mut self, _: usize, _: &Score) -> Result<Option<FeedbackEvent>, EngineError> {
        Ok(None)
    }
}

fn train(config: LoopConfig, vocab: Vocab, seed: u64, out: Option<&Path>) -> Result<()> {
    let mut session = Session::create(config, vocab, seed);
    while session.state.stage != Some(Stage::Generate) {
        if session.step(&mut Silent, usize::MAX)?.is_none() {
            break;
        }
    }
    for e in &session.log {
        if let EventBody::Phase1Trace { step, values, composer_values, .. } = e.body()? {
            let first = values.first().copied().unwrap_or(f64::NAN);
            let last = values.last().copied().unwrap_or(f64::NAN);
            let composer = composer_values.last().map_or(String::new(), |v| format!(", composer log-likelihood {v:.4}"));
            println!("{step:?}: {} steps, objective {first:.4} -> {last:.4}{composer}", values.len());
        }
    }
    if let Some(path) = out {
        std::fs::write(path, session.jsonl()).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {} events to {}", session.log.len(), path.display());
    }
    Ok(())
}

fn run(spec: OracleSpec, config: LoopConfig, vocab: Vocab, iters: usize, seed: u64, out: &Path, fsync: bool) -> Result<()> {
    let mut store = LogStore::create(out, fsync)?;
    let mut session = Session::create(config, vocab, seed);
    store.append(&session.log[0])?;
    let mut artist = ScriptedArtist { spec: spec.clone() };
    session.run(&mut artist, iters, |e| {
        store.append(e).map_err(|err| EngineError::Log(err.to_string()))?;
        if let Ok(EventBody::Feedback(fb)) = e.body() {
            println!("iteration {:>3}: rating {:.3}", fb.iteration, fb.rating);
        }
        Ok(())
    })?;
    let state = &session.state;
    let best = state.best_ratings.last().copied().unwrap_or(0.0);
    let outcome = if state.accepted { "accepted" } else { "stopped" };
    println!("{outcome} after {} iterations, best rating {best:.3}, {} events in {}", state.iteration, session.log.len(), out.display());
    Ok(())
}

fn replay(path: &Path) -> Result<bool> {
    let text = read(path)?;
    let events = parse_jsonl(&text)?;
    let Some(EventBody::SessionCreated { seed, config, vocab }) = events.first().map(|e| e.body()).transpose()? else {
        bail!("{}: missing session_created", path.display());
    };
    let feedback = replay_feedback(&text)?;
    let iters = SessionState::fold(&events)?.iteration;
    let mut artist = ReplayArtist::new(feedback);
    let mut session = Session::create(LoopConfig::parse(&config)?, Vocab::parse(&vocab)?, seed);
    session.run(&mut artist, iters, |_| Ok(()))?;
    let again = session.jsonl();
    if again == text {
        println!("identical: {} events", session.log.len());
        return Ok(true);
    }
    let diverged = again.lines().zip(text.lines()).position(|(a, b)| a != b);
    match diverged {
        Some(i) => println!("diverges at seq {}", i + 1),
        None => println!("length differs: recorded {} events, replay {}", events.len(), session.log.len()),
    }
    Ok(false)
}

fn lint(path: &Path) -> Result<bool> {
    let text = read(path)?;
    let problems: Vec<String> = if text.trim_start().starts_with('{') {
        lint_log(&parse_jsonl(&text)?)
    } else {
        let score = parse_score(&text)?;
        validate_score(&score).violations.iter().map(|v| v.to_string()).collect()
    };
    for p in &problems {
        println!("{}: {p}", path.display());
    }
    if problems.is_empty() {
        println!("{}: ok", path.display());
    }
    Ok(problems.is_empty())
}

async fn serve(port: u16, data: &Path, fsync: bool) -> Result<()> {
    std::fs::create_dir_all(data).with_context(|| format!("creating {}", data.display()))?;
    let app = AppState::new(data, fsync);
    for (id, recovery) in app.load_existing().map_err(|e| anyhow::anyhow!("{e:?}"))? {
        if recovery.repaired() {
            eprintln!("session {id}: cut {} bytes of a partial last line", recovery.truncated_bytes);
        }
    }
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(app)).await?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::InitVocab { file } => std::fs::write(&file, Vocab::standard().to_text())
            .with_context(|| format!("writing {}", file.display()))
            .map(|_| true),
        Command::Train { config, seed, vocab, out } => (|| {
            train(load_config(config.as_deref())?, load_vocab(vocab.as_deref())?, seed, out.as_deref())
        })()
        .map(|_| true),
        Command::Run { oracle, iters, seed, out, config, vocab, fsync } => (|| {
            let spec = OracleSpec::parse(&read(&oracle)?).with_context(|| format!("oracle {}", oracle.display()))?;
            run(spec, load_config(config.as_deref())?, load_vocab(vocab.as_deref())?, iters, seed, &out, fsync)
        })()
        .map(|_| true),
        Command::Replay { log } => replay(&log),
        Command::Lint { file } => lint(&file),
        Command::Serve { port, data, fsync } => tokio::runtime::Runtime::new()
            .context("starting runtime")
            .and_then(|rt| rt.block_on(serve(port, &data, fsync)))
            .map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
