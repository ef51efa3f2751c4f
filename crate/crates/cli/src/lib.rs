//! Command dispatch for the `sdpkit` binary.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration
//! error. Every failure prints one line starting with `error:`.

use std::fmt::Write as _;
use std::io::{BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Parser, Subcommand};
use sdpkit::components::{load_experiment, Experiment};
use sdpkit::corpus::{download_task, CorpusError, TaskRegistry};
use sdpkit::engine::{train_experiment, EngineError};
use sdpkit::graphconfig::GraphError;
use sdpkit::infer::{load_model, prediction_file, DataSplit, EvalResult, InferError, LoadedModel, TextPrediction};

/// Environment variable naming the default data directory.
pub const DATA_DIR_ENV: &str = "SDPKIT_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "sdpkit", version, about = "Scholarly document processing toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an experiment and save its best checkpoint.
    Run { experiment: PathBuf },
    /// Evaluate the experiment's best checkpoint on its test split.
    Test { experiment: PathBuf },
    /// Predict for a text or for each line of a file.
    #[command(group(ArgGroup::new("input").required(true).args(["text", "file"])))]
    Predict {
        checkpoint: PathBuf,
        #[arg(long)]
        text: Option<String>,
        #[arg(long)]
        file: Option<PathBuf>,
        /// Write file predictions here instead of stdout.
        #[arg(long, requires = "file")]
        out: Option<PathBuf>,
    },
    /// Inspect a checkpoint's errors on the dev split.
    Interact { checkpoint: PathBuf },
    /// Fetch datasets.
    Download {
        #[command(subcommand)]
        what: DownloadCommand,
    },
    /// Serve models over HTTP.
    Serve {
        /// `name=checkpoint_dir`, repeatable.
        #[arg(long = "model", value_parser = parse_model_arg, required = true)]
        models: Vec<(String, PathBuf)>,
        #[arg(long, default_value_t = 8000)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value = "*")]
        allow_origin: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum DownloadCommand {
    Data {
        #[arg(long)]
        task: String,
        /// Task registry file; defaults to `tasks.toml` in the data directory.
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Destination directory; defaults to the data directory.
        #[arg(long)]
        dest: Option<PathBuf>,
    },
}

fn parse_model_arg(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, dir)) if !name.is_empty() && !dir.is_empty() => Ok((name.to_string(), PathBuf::from(dir))),
        _ => Err(format!("expected NAME=CHECKPOINT, got `{s}`")),
    }
}

#[derive(Debug)]
pub enum Failure {
    /// Bad arguments or configuration: exit 2.
    Usage(String),
    /// Anything that failed while doing the work: exit 1.
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => m,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Io { .. } => Failure::Runtime(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Graph(g) => g.into(),
            other => runtime(other),
        }
    }
}

impl From<InferError> for Failure {
    fn from(e: InferError) -> Self {
        match e {
            InferError::Graph(g) => g.into(),
            other => runtime(other),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        runtime(e)
    }
}

/// Standard streams, replaceable in tests.
pub struct Io<'a> {
    pub input: &'a mut dyn BufRead,
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
    /// Show the `> ` prompt in `interact`.
    pub prompt: bool,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, S>(args: I, io: &mut Io) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(io.out, "{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            let _ = writeln!(io.err, "error: {first} (see --help)");
            return 2;
        }
    };
    match dispatch(cli.command, io) {
        Ok(()) => 0,
        Err(f) => {
            let line = f.message().replace('\n', " ");
            let _ = writeln!(io.err, "error: {line}");
            f.code()
        }
    }
}

/// `run_cli` over the process's real streams.
pub fn main_entry() -> i32 {
    let stdin = std::io::stdin();
    let prompt = stdin.is_terminal();
    let mut input = stdin.lock();
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    run_cli(
        std::env::args_os(),
        &mut Io {
            input: &mut input,
            out: &mut out,
            err: &mut err,
            prompt,
        },
    )
}

fn dispatch(cmd: Command, io: &mut Io) -> Result<(), Failure> {
    match cmd {
        Command::Run { experiment } => cmd_run(&experiment, io),
        Command::Test { experiment } => cmd_test(&experiment, io),
        Command::Predict {
            checkpoint,
            text,
            file,
            out,
        } => cmd_predict(&checkpoint, text.as_deref(), file.as_deref(), out.as_deref(), io),
        Command::Interact { checkpoint } => cmd_interact(&checkpoint, io),
        Command::Download {
            what: DownloadCommand::Data { task, registry, dest },
        } => cmd_download(&task, registry, dest, io),
        Command::Serve {
            models,
            port,
            host,
            allow_origin,
        } => cmd_serve(&models, &host, port, &allow_origin, io),
    }
}

fn cmd_run(path: &Path, io: &mut Io) -> Result<(), Failure> {
    let exp = load_experiment(path)?;
    let outcome = train_experiment(&exp)?;
    let _ = writeln!(
        io.err,
        "saved best checkpoint (epoch {}) to {}",
        outcome.best_epoch,
        outcome.checkpoint_dir.display()
    );
    let (_, dev, _) = sdpkit::engine::load_splits(&exp.dataset)?;
    let eval = outcome.model.evaluate(&dev).map_err(runtime)?;
    writeln!(
        io.out,
        "best epoch {}: dev {} {:.4}",
        outcome.best_epoch, exp.engine.monitor_metric, outcome.best_metric
    )?;
    write!(io.out, "{}", eval.report.to_table())?;
    Ok(())
}

fn checkpoint_for(exp: &Experiment) -> Result<LoadedModel, Failure> {
    let dir = &exp.engine.checkpoint_dir;
    if !dir.join("manifest.json").is_file() {
        return Err(Failure::Runtime(format!(
            "no checkpoint in {}; run before test",
            dir.display()
        )));
    }
    Ok(load_model(dir)?)
}

fn cmd_test(path: &Path, io: &mut Io) -> Result<(), Failure> {
    let exp = load_experiment(path)?;
    let model = checkpoint_for(&exp)?;
    let test = exp
        .dataset
        .test
        .as_ref()
        .ok_or_else(|| Failure::Usage("the experiment has no test split".into()))?;
    let data = sdpkit::pipeline::read_split(&exp.dataset, test).map_err(runtime)?;
    let eval = model.evaluate_on_dataset(&data)?;
    write!(io.out, "{}", eval.report().to_table())?;
    Ok(())
}

/// Terminal rendering of a single prediction.
pub fn render_prediction(p: &TextPrediction) -> String {
    match p {
        TextPrediction::Tagged(_) => format!("{}\n", p.to_line()),
        TextPrediction::Classified(c) => {
            let mut s = format!("{}\n", c.label);
            for (label, prob) in &c.scores {
                let _ = writeln!(s, "  {label}\t{prob:.6}");
            }
            s
        }
    }
}

fn cmd_predict(ckpt: &Path, text: Option<&str>, file: Option<&Path>, out: Option<&Path>, io: &mut Io) -> Result<(), Failure> {
    let model = load_model(ckpt)?;
    if let Some(text) = text {
        let p = model.predict_for_text(text)?;
        write!(io.out, "{}", render_prediction(&p))?;
        return Ok(());
    }
    let file = file.expect("clap requires text or file");
    let input = std::fs::read_to_string(file).map_err(|e| runtime(format!("{}: {e}", file.display())))?;
    let preds = model.predict_for_lines(&input)?;
    let rendered = prediction_file(&input, &preds);
    match out {
        Some(path) => {
            std::fs::write(path, &rendered).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
            let _ = writeln!(io.err, "wrote {} lines to {}", preds.len(), path.display());
        }
        None => write!(io.out, "{rendered}")?,
    }
    Ok(())
}

const HELP: &str = "commands:
  cm                   confusion matrix (rows gold, columns predicted)
  prf                  per-class precision, recall and F1
  errors <gold> <pred> tokens with this gold label predicted as <pred>
  predict <text>       tag or classify ad hoc input
  help                 this text
  quit                 leave
";

fn accuracy_line(eval: &EvalResult) -> String {
    let cm = &eval.report().confusion;
    let acc = if cm.total() == 0 {
        0.0
    } else {
        cm.diagonal() as f64 / cm.total() as f64
    };
    format!("accuracy {:.4} ({} of {})\n", acc, cm.diagonal(), cm.total())
}

fn cmd_interact(ckpt: &Path, io: &mut Io) -> Result<(), Failure> {
    let model = load_model(ckpt)?;
    let eval = model.evaluate_split(DataSplit::Dev)?;
    writeln!(
        io.out,
        "{} model, {} dev sequences; type `help` for commands",
        model.kind(),
        eval.evaluation.gold.len()
    )?;
    let mut line = String::new();
    loop {
        if io.prompt {
            write!(io.out, "> ")?;
            io.out.flush()?;
        }
        line.clear();
        if io.input.read_line(&mut line)? == 0 {
            break;
        }
        let trimmed = line.trim();
        let (cmd, rest) = trimmed.split_once(char::is_whitespace).unwrap_or((trimmed, ""));
        let rest = rest.trim();
        match cmd {
            "" => {}
            "quit" | "exit" => break,
            "cm" => {
                write!(io.out, "{}", eval.report().confusion.to_table())?;
                write!(io.out, "{}", accuracy_line(&eval))?;
            }
            "prf" => write!(io.out, "{}", eval.report().to_table())?,
            "errors" => {
                let args: Vec<&str> = rest.split_whitespace().collect();
                if args.len() != 2 {
                    writeln!(io.out, "usage: errors <gold> <pred>")?;
                    continue;
                }
                match eval.query_errors(args[0], args[1]) {
                    Ok(errs) => {
                        for e in &errs {
                            writeln!(
                                io.out,
                                "{}:{}\t{}\t{}",
                                e.sequence_index,
                                e.position,
                                e.token,
                                e.context.join(" ")
                            )?;
                        }
                        writeln!(io.out, "{} errors", errs.len())?;
                    }
                    Err(e) => writeln!(io.out, "{e}")?,
                }
            }
            "predict" => match model.predict_for_text(rest) {
                Ok(p) => write!(io.out, "{}", render_prediction(&p))?,
                Err(e) => writeln!(io.out, "{e}")?,
            },
            "help" => write!(io.out, "{HELP}")?,
            other => write!(io.out, "unknown command `{other}`\n{HELP}")?,
        }
    }
    Ok(())
}

fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn cmd_download(task: &str, registry: Option<PathBuf>, dest: Option<PathBuf>, io: &mut Io) -> Result<(), Failure> {
    let registry_path = registry.unwrap_or_else(|| data_dir().join("tasks.toml"));
    let reg = TaskRegistry::load(&registry_path).map_err(|e| match e {
        CorpusError::Registry(m) => Failure::Usage(format!("{}: {m}", registry_path.display())),
        other => Failure::Usage(other.to_string()),
    })?;
    let dest = dest.unwrap_or_else(data_dir);
    match download_task(task, &reg, &dest) {
        Ok(path) => {
            writeln!(io.out, "{}", path.display())?;
            Ok(())
        }
        Err(CorpusError::UnknownTask(t)) => Err(Failure::Usage(format!(
            "unknown task `{t}`; known tasks: {}",
            reg.names().join(", ")
        ))),
        Err(e) => Err(runtime(e)),
    }
}

fn cmd_serve(models: &[(String, PathBuf)], host: &str, port: u16, allow_origin: &str, io: &mut Io) -> Result<(), Failure> {
    let state = sdpkit_service::AppState::load(models).map_err(runtime)?;
    let app = sdpkit_service::router(state, allow_origin).map_err(|e| Failure::Usage(e.to_string()))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| runtime(format!("cannot bind {host}:{port}: {e}")))?;
        let addr = listener.local_addr()?;
        let _ = writeln!(io.err, "listening on http://{addr}");
        let _ = io.err.flush();
        sdpkit_service::serve(listener, app).await.map_err(runtime)
    })
}
