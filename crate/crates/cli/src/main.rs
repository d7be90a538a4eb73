use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use sinkflow_core::extractor::script::{run_text, ExecLimits};
use sinkflow_core::paths::StitchConfig;
use sinkflow_core::pipeline::{
    evaluate_document, preprocess_corpus, run, BackendKind, GroundTruth, PipelineError, ProverKind, ReportDocument, RunConfig,
    RunnerKind, Target, DEFAULT_BLOCKLIST,
};

#[derive(Parser)]
#[command(name = "sinkflow", version, about = "Compilation-free source-to-sink bug detection driven by a language model")]
struct Cli {
    /// Log verbosity (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a source tree and report source-to-sink bugs.
    Analyze(AnalyzeArgs),
    /// Score a report file against labeled ground truth.
    Evaluate {
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Print the metrics as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Strip comments and rename label-leaking identifiers.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated substrings; identifiers containing one are renamed.
        #[arg(long, value_delimiter = ',')]
        blocklist: Option<Vec<String>>,
    },
    /// Run an extractor script on a serialized tree read from stdin.
    #[command(hide = true)]
    RunScript { script: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Bug {
    Dbz,
    Xss,
    Osci,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Live,
    Cassette,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum RunnerArg {
    Embedded,
    Process,
}

#[derive(Args)]
#[command(group(ArgGroup::new("target").required(true).args(["bug", "spec"])))]
struct AnalyzeArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    bug: Option<Bug>,
    /// Custom source-sink pair file.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: BackendArg,
    #[arg(long, default_value = sinkflow_core::llm::DEFAULT_MODEL)]
    model: String,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long)]
    cassette: Option<PathBuf>,
    /// Record every exchange into --cassette.
    #[arg(long)]
    record: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    max_extractor_fixes: usize,
    #[arg(long, default_value_t = 3)]
    max_validator_fixes: usize,
    /// Use the bundled reference extractor when synthesis fails.
    #[arg(long)]
    extractor_fallback: bool,
    #[arg(long, default_value_t = StitchConfig::default().max_depth)]
    max_depth: usize,
    #[arg(long, default_value_t = StitchConfig::default().max_paths_per_pair)]
    max_paths: usize,
    /// Run constraint programs with this z3 binary instead of the built-in prover.
    #[arg(long)]
    z3: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "embedded")]
    runner: RunnerArg,
}

fn analyze(a: AnalyzeArgs) -> Result<(), PipelineError> {
    let target = match (a.bug, a.spec) {
        (Some(b), _) => Target::Builtin(
            match b {
                Bug::Dbz => "dbz",
                Bug::Xss => "xss",
                Bug::Osci => "osci",
            }
            .into(),
        ),
        (None, Some(p)) => Target::Custom(p),
        (None, None) => unreachable!("clap requires one target"),
    };
    let backend = match a.backend {
        BackendArg::Live => BackendKind::Live,
        BackendArg::Cassette => BackendKind::Cassette,
        BackendArg::Oracle => BackendKind::Oracle,
    };
    let mut config = RunConfig::new(a.corpus, target, backend);
    config.model = a.model;
    config.temperature = a.temperature;
    config.cassette = a.cassette;
    config.record = a.record;
    config.out = a.out;
    config.max_extractor_fixes = a.max_extractor_fixes;
    config.max_validator_fixes = a.max_validator_fixes;
    config.extractor_fallback = a.extractor_fallback;
    config.stitch = StitchConfig { max_depth: a.max_depth, max_paths_per_pair: a.max_paths };
    if let Some(z3) = a.z3 {
        config.prover = ProverKind::External(z3);
    }
    if let RunnerArg::Process = a.runner {
        let exe = std::env::current_exe().map_err(|e| PipelineError::Config(format!("cannot locate this executable: {e}")))?;
        config.runner = RunnerKind::Process { program: exe, args: vec!["run-script".into()] };
    }
    let out = run(&config)?;
    print!("{}", out.document().summary());
    Ok(())
}

fn evaluate(reports: PathBuf, truth: PathBuf, json: bool) -> Result<(), PipelineError> {
    let doc = ReportDocument::load(&reports)?;
    let truth = GroundTruth::load(&truth)?;
    let e = evaluate_document(&doc, &truth);
    if json {
        println!("{}", serde_json::to_string_pretty(&e).expect("metrics serialize"));
        return Ok(());
    }
    let line = |name: &str, m: &sinkflow_core::pipeline::Metrics| {
        println!(
            "{name}: precision {:.4} recall {:.4} f1 {:.4} (tp {} fp {} fn {})",
            m.precision, m.recall, m.f1, m.tp, m.fp, m.fn_
        )
    };
    line("bugs", &e.bugs);
    if let Some(m) = &e.sources {
        line("sources", m);
    }
    if let Some(m) = &e.sinks {
        line("sinks", m);
    }
    Ok(())
}

fn preprocess(input: PathBuf, out: PathBuf, blocklist: Option<Vec<String>>) -> Result<(), PipelineError> {
    let list: Vec<String> = blocklist.unwrap_or_else(|| DEFAULT_BLOCKLIST.iter().map(|s| s.to_string()).collect());
    let refs: Vec<&str> = list.iter().map(String::as_str).collect();
    let log = preprocess_corpus(&input, &out, &refs)?;
    println!("{} file(s) written, {} identifier(s) renamed", log.files, log.renamed.len());
    for w in &log.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn run_script(path: PathBuf) -> ExitCode {
    let script = match std::fs::read_to_string(&path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return ExitCode::from(1);
        }
    };
    let mut tree = String::new();
    if let Err(e) = std::io::stdin().read_to_string(&mut tree) {
        eprintln!("stdin: {e}");
        return ExitCode::from(1);
    }
    match run_text(&script, &tree, ExecLimits::default()) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    env_logger::Builder::new().parse_filters(&cli.log).format_timestamp(None).init();
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Evaluate { reports, truth, json } => evaluate(reports, truth, json),
        Command::Preprocess { input, out, blocklist } => preprocess(input, out, blocklist),
        Command::RunScript { script } => return run_script(script),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
