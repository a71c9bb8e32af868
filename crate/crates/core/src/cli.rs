//! The `agreement` command line.
//!
//! Exit codes: 0 success, 1 validation or input failure, 2 usage error,
//! 3 backend failure. Every error line on stderr starts with `error[<kind>]:`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::evaluator::{
    evaluate_dataset, parse_tsv, render_report, write_audit_log, EvalOptions, EvaluationReport,
    GateConfig, ReportFormat,
};
use crate::grammar::{parse_grammar, validate_grammar};
use crate::pairgen::{
    generate_corpus, lexicon_stats, load_cases, pair_stats, read_pairs_file,
    verify_grammar_checksums, write_pairs_file, Manifest, PairFile, PairgenError, REFERENCE_LEXEMES,
    REFERENCE_MEAN_TOKENS, REFERENCE_SENTENCES, REFERENCE_WORD_FORMS,
};
use crate::scoring::{
    ExternalBackend, ExternalConfig, NgramBackend, OracleBackend, RandomBackend, ScorerBackend,
    UniformBackend,
};
use crate::tokenizer::SubwordVocab;

pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

/// Manifest file shipped next to the grammars.
pub const SHIPPED_MANIFEST: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "agreement", version, about = "German agreement minimal pairs and scorer evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check every grammar and the case table in a grammar directory.
    Validate(ValidateArgs),
    /// Generate the pair file.
    Generate(GenerateArgs),
    /// Score every pair with a backend and write a report.
    Evaluate(EvaluateArgs),
    /// Render a stored report.
    Report(ReportArgs),
    /// Corpus statistics.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long, env = "AGREEMENT_GRAMMAR_DIR", default_value = "grammars")]
    grammar_dir: PathBuf,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, env = "AGREEMENT_GRAMMAR_DIR", default_value = "grammars")]
    grammar_dir: PathBuf,
    /// Output pair file.
    #[arg(long, env = "AGREEMENT_PAIRS")]
    pairs: PathBuf,
    /// Also write the manifest as pretty JSON here.
    #[arg(long, env = "AGREEMENT_MANIFEST")]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Oracle,
    Uniform,
    Ngram,
    Random,
    Extern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GateKind {
    Whitespace,
    Subword,
    Backend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatKind {
    Json,
    Tsv,
    Markdown,
}

impl From<FormatKind> for ReportFormat {
    fn from(f: FormatKind) -> Self {
        match f {
            FormatKind::Json => ReportFormat::Json,
            FormatKind::Tsv => ReportFormat::Tsv,
            FormatKind::Markdown => ReportFormat::Markdown,
        }
    }
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long, env = "AGREEMENT_PAIRS")]
    pairs: PathBuf,
    #[arg(long, value_enum, env = "AGREEMENT_BACKEND")]
    backend: BackendKind,
    /// Command line of an external scorer speaking the line protocol.
    #[arg(long, env = "AGREEMENT_EXTERN_CMD")]
    extern_cmd: Option<String>,
    /// `host:port` of a listening external scorer.
    #[arg(long, env = "AGREEMENT_EXTERN_ADDR")]
    extern_addr: Option<String>,
    /// Seconds to wait for any one external reply.
    #[arg(long, env = "AGREEMENT_EXTERN_TIMEOUT")]
    extern_timeout: Option<u64>,
    #[arg(long, value_enum, env = "AGREEMENT_GATE", default_value = "whitespace")]
    gate: GateKind,
    /// Sub-word vocabulary for `--gate subword`.
    #[arg(long, env = "AGREEMENT_VOCAB")]
    vocab: Option<PathBuf>,
    #[arg(long, env = "AGREEMENT_JOBS", default_value_t = 1)]
    jobs: usize,
    /// Seed of the random backend.
    #[arg(long, env = "AGREEMENT_SEED", default_value_t = 0)]
    seed: u64,
    /// Check pair invariants and checksums before scoring.
    #[arg(long, env = "AGREEMENT_STRICT")]
    strict: bool,
    /// Grammar directory whose checksums `--strict` compares with the pair file.
    #[arg(long, env = "AGREEMENT_GRAMMAR_DIR")]
    grammar_dir: Option<PathBuf>,
    /// Pair file whose grammatical sentences train the n-gram backend.
    #[arg(long, env = "AGREEMENT_TRAIN")]
    train: Option<PathBuf>,
    #[arg(long, env = "AGREEMENT_NGRAM_ORDER", default_value_t = 2)]
    order: usize,
    #[arg(long, env = "AGREEMENT_NGRAM_K", default_value_t = 0.1)]
    k: f64,
    /// Vocabulary size of the uniform backend; defaults to the word forms in the pair file.
    #[arg(long, env = "AGREEMENT_VOCAB_SIZE")]
    vocab_size: Option<usize>,
    /// Report destination; standard output when absent.
    #[arg(long, env = "AGREEMENT_OUTPUT")]
    output: Option<PathBuf>,
    #[arg(long, value_enum, env = "AGREEMENT_FORMAT", default_value = "json")]
    format: FormatKind,
    /// Per-pair decision log.
    #[arg(long, env = "AGREEMENT_AUDIT")]
    audit: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Report written by `evaluate` as json or tsv.
    #[arg(long, env = "AGREEMENT_REPORT")]
    input: PathBuf,
    #[arg(long, value_enum, env = "AGREEMENT_FORMAT", default_value = "markdown")]
    format: FormatKind,
    #[arg(long, env = "AGREEMENT_OUTPUT")]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long, env = "AGREEMENT_GRAMMAR_DIR", default_value = "grammars")]
    grammar_dir: PathBuf,
    /// Count this pair file instead of generating from the grammars.
    #[arg(long, env = "AGREEMENT_PAIRS")]
    pairs: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn new(code: i32, kind: &'static str, message: impl ToString) -> Self {
        Failure {
            code,
            kind,
            message: message.to_string(),
        }
    }

    fn usage(message: impl ToString) -> Self {
        Self::new(EXIT_USAGE, "usage", message)
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::new(EXIT_VALIDATION, "io", format!("{}: {e}", path.display()))
    }
}

type CliResult = Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let text = rendered.trim_start_matches("error: ").trim_end();
            eprintln!("error[usage]: {text}");
            return EXIT_USAGE;
        }
    };
    let result = match cli.command {
        Command::Validate(a) => validate(&a),
        Command::Generate(a) => generate(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Report(a) => report(&a),
        Command::Stats(a) => stats(&a),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error[{}]: {}", f.kind, f.message);
            f.code
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::io(p, e)),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Failure::new(EXIT_VALIDATION, "io", e))
        }
    }
}

fn validate(a: &ValidateArgs) -> CliResult {
    let dir = &a.grammar_dir;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Failure::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
        .collect();
    files.sort();
    let mut problems = 0;
    for path in &files {
        let name = path.file_name().unwrap_or_default().to_string_lossy();
        let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        match parse_grammar(&text) {
            Err(e) => {
                eprintln!("error[validate]: {name}: {e}");
                problems += 1;
            }
            Ok(g) => {
                for d in validate_grammar(&g) {
                    eprintln!("error[validate]: {name}: {d}");
                    problems += 1;
                }
            }
        }
    }
    if problems > 0 {
        return Err(Failure::new(
            EXIT_VALIDATION,
            "validate",
            format!("{problems} problem(s) in {}", dir.display()),
        ));
    }
    let specs = load_cases(dir).map_err(|e| Failure::new(EXIT_VALIDATION, "validate", e))?;
    let shipped = dir.join(SHIPPED_MANIFEST);
    if shipped.exists() {
        let text = fs::read_to_string(&shipped).map_err(|e| Failure::io(&shipped, e))?;
        let expected: Manifest = serde_json::from_str(&text)
            .map_err(|e| Failure::new(EXIT_VALIDATION, "validate", format!("{SHIPPED_MANIFEST}: {e}")))?;
        let corpus =
            generate_corpus(&specs).map_err(|e| Failure::new(EXIT_VALIDATION, "validate", e))?;
        if corpus.manifest != expected {
            return Err(Failure::new(
                EXIT_VALIDATION,
                "validate",
                format!("generated corpus does not match {}", shipped.display()),
            ));
        }
    }
    println!(
        "ok: {} grammar file(s), {} case(s)",
        files.len(),
        specs.len()
    );
    Ok(())
}

fn generate(a: &GenerateArgs) -> CliResult {
    let specs =
        load_cases(&a.grammar_dir).map_err(|e| Failure::new(EXIT_VALIDATION, "generate", e))?;
    let corpus = generate_corpus(&specs).map_err(|e| Failure::new(EXIT_VALIDATION, "generate", e))?;
    write_pairs_file(&a.pairs, &corpus.manifest, &corpus.pairs)
        .map_err(|e| Failure::new(EXIT_VALIDATION, "io", e))?;
    if let Some(m) = &a.manifest {
        fs::write(m, corpus.manifest.to_json_pretty()).map_err(|e| Failure::io(m, e))?;
    }
    eprintln!(
        "wrote {} pairs to {}",
        corpus.pairs.len(),
        a.pairs.display()
    );
    Ok(())
}

fn load_pairs(path: &Path, strict: bool) -> Result<PairFile, Failure> {
    read_pairs_file(path, strict).map_err(|e| match e {
        PairgenError::Io { .. } => Failure::new(EXIT_VALIDATION, "io", e),
        e => Failure::new(EXIT_VALIDATION, "pairs", format!("{}: {e}", path.display())),
    })
}

fn build_backend(a: &EvaluateArgs, file: &PairFile) -> Result<Box<dyn ScorerBackend>, Failure> {
    Ok(match a.backend {
        BackendKind::Oracle => Box::new(OracleBackend::new(
            file.pairs.iter().map(|p| p.grammatical_text()),
        )),
        BackendKind::Uniform => {
            let v = a.vocab_size.unwrap_or_else(|| {
                let mut words = std::collections::HashSet::new();
                for p in &file.pairs {
                    words.extend(p.grammatical.iter().chain(&p.ungrammatical));
                }
                words.len()
            });
            Box::new(UniformBackend::new(v))
        }
        BackendKind::Random => Box::new(RandomBackend::new(a.seed)),
        BackendKind::Ngram => {
            let train = a
                .train
                .as_deref()
                .ok_or_else(|| Failure::usage("--backend ngram needs --train"))?;
            let sentences: Vec<Vec<String>> = load_pairs(train, false)?
                .pairs
                .into_iter()
                .map(|p| p.grammatical)
                .collect();
            Box::new(NgramBackend::train(&sentences, a.order, a.k).map_err(Failure::usage)?)
        }
        BackendKind::Extern => {
            let command = match &a.extern_cmd {
                Some(c) => Some(
                    shlex::split(c)
                        .filter(|v| !v.is_empty())
                        .ok_or_else(|| Failure::usage("cannot parse --extern-cmd"))?,
                ),
                None => None,
            };
            let config = ExternalConfig {
                command,
                address: a.extern_addr.clone(),
                timeout: a.extern_timeout.map(Duration::from_secs),
            };
            Box::new(ExternalBackend::connect(&config).map_err(|e| Failure::new(EXIT_BACKEND, "backend", e))?)
        }
    })
}

fn evaluate(a: &EvaluateArgs) -> CliResult {
    if a.backend == BackendKind::Extern && (a.extern_cmd.is_some() == a.extern_addr.is_some()) {
        return Err(Failure::usage(
            "--backend extern needs exactly one of --extern-cmd or --extern-addr",
        ));
    }
    if a.backend != BackendKind::Extern && (a.extern_cmd.is_some() || a.extern_addr.is_some()) {
        return Err(Failure::usage("--extern-cmd and --extern-addr need --backend extern"));
    }
    if a.backend == BackendKind::Ngram && a.train.is_none() {
        return Err(Failure::usage("--backend ngram needs --train"));
    }
    if a.jobs == 0 {
        return Err(Failure::usage("--jobs must be at least 1"));
    }
    let vocab = match (a.gate, &a.vocab) {
        (GateKind::Subword, Some(p)) => {
            Some(SubwordVocab::load(p).map_err(|e| Failure::new(EXIT_VALIDATION, "vocab", e))?)
        }
        (GateKind::Subword, None) => return Err(Failure::usage("--gate subword needs --vocab")),
        _ => None,
    };
    let gate = match a.gate {
        GateKind::Whitespace => GateConfig::Whitespace,
        GateKind::Subword => GateConfig::Subword(vocab.as_ref().expect("loaded above")),
        GateKind::Backend => GateConfig::Backend,
    };

    let file = load_pairs(&a.pairs, a.strict)?;
    if a.strict {
        if let Some(dir) = &a.grammar_dir {
            verify_grammar_checksums(&file.manifest, dir)
                .map_err(|e| Failure::new(EXIT_VALIDATION, "pairs", e))?;
        }
    }
    let backend = build_backend(a, &file)?;

    let mut config = BTreeMap::new();
    config.insert("pairs".to_string(), a.pairs.display().to_string());
    config.insert("pairs_sha256".to_string(), file.manifest.pairs_sha256.clone());
    config.insert("pairs_format".to_string(), file.manifest.format.clone());
    config.insert("strict".to_string(), a.strict.to_string());
    match a.backend {
        BackendKind::Random => {
            config.insert("seed".into(), a.seed.to_string());
        }
        BackendKind::Ngram => {
            config.insert("ngram_order".into(), a.order.to_string());
            config.insert("ngram_k".into(), a.k.to_string());
            if let Some(t) = &a.train {
                config.insert("train".into(), t.display().to_string());
            }
        }
        BackendKind::Uniform => {
            config.insert("vocab_size".into(), backend.info().vocab_size.to_string());
        }
        BackendKind::Extern => {
            if let Some(c) = &a.extern_cmd {
                config.insert("extern_cmd".into(), c.clone());
            }
            if let Some(addr) = &a.extern_addr {
                config.insert("extern_addr".into(), addr.clone());
            }
        }
        BackendKind::Oracle => {}
    }
    if let Some(v) = &a.vocab {
        config.insert("vocab".into(), v.display().to_string());
    }
    let options = EvalOptions {
        jobs: a.jobs,
        config,
        ..EvalOptions::default()
    };
    let evaluation = evaluate_dataset(&file.pairs, backend.as_ref(), gate, &options);
    drop(backend);

    write_output(a.output.as_deref(), &render_report(&evaluation.report, a.format.into()))?;
    if let Some(path) = &a.audit {
        let f = fs::File::create(path).map_err(|e| Failure::io(path, e))?;
        let mut w = BufWriter::new(f);
        write_audit_log(&mut w, &evaluation.decisions)
            .and_then(|_| w.flush())
            .map_err(|e| Failure::io(path, e))?;
    }
    match evaluation.error {
        Some(e) => Err(Failure::new(
            EXIT_BACKEND,
            "backend",
            format!(
                "{e} ({} of {} pairs decided; report marked incomplete)",
                evaluation.decisions.len(),
                file.pairs.len()
            ),
        )),
        None => Ok(()),
    }
}

fn report(a: &ReportArgs) -> CliResult {
    let text = fs::read_to_string(&a.input).map_err(|e| Failure::io(&a.input, e))?;
    let parsed: EvaluationReport = match serde_json::from_str(&text) {
        Ok(r) => r,
        Err(json_err) => parse_tsv(&text).map_err(|tsv_err| {
            Failure::new(
                EXIT_VALIDATION,
                "report",
                format!(
                    "{}: neither a json report ({json_err}) nor a tsv report ({tsv_err})",
                    a.input.display()
                ),
            )
        })?,
    };
    write_output(a.output.as_deref(), &render_report(&parsed, a.format.into()))
}

fn deviation(actual: f64, reference: f64) -> String {
    format!("{:+.4}", actual - reference)
}

fn stats(a: &StatsArgs) -> CliResult {
    let specs = load_cases(&a.grammar_dir).map_err(|e| Failure::new(EXIT_VALIDATION, "stats", e))?;
    let mut s = match &a.pairs {
        Some(p) => pair_stats(&load_pairs(p, false)?.pairs),
        None => {
            let corpus =
                generate_corpus(&specs).map_err(|e| Failure::new(EXIT_VALIDATION, "stats", e))?;
            pair_stats(&corpus.pairs)
        }
    };
    let (lexemes, forms) =
        lexicon_stats(&specs).map_err(|e| Failure::new(EXIT_VALIDATION, "stats", e))?;
    s.lexemes = Some(lexemes);
    s.word_forms = Some(forms);
    if a.json {
        let mut text = serde_json::to_string_pretty(&s).expect("stats serialize");
        text.push('\n');
        return write_output(None, &text);
    }
    let rows = [
        ("sentences", s.sentences.to_string(), s.sentences as f64, REFERENCE_SENTENCES.to_string(), REFERENCE_SENTENCES as f64),
        ("mean tokens", format!("{:.4}", s.mean_tokens), s.mean_tokens, REFERENCE_MEAN_TOKENS.to_string(), REFERENCE_MEAN_TOKENS),
        ("lexemes", lexemes.to_string(), lexemes as f64, REFERENCE_LEXEMES.to_string(), REFERENCE_LEXEMES as f64),
        ("word forms", forms.to_string(), forms as f64, REFERENCE_WORD_FORMS.to_string(), REFERENCE_WORD_FORMS as f64),
    ];
    let mut text = format!("{:<12} {:>10} {:>10} {:>10}\n", "statistic", "corpus", "reference", "deviation");
    for (name, shown, value, ref_shown, reference) in rows {
        text.push_str(&format!(
            "{name:<12} {shown:>10} {ref_shown:>10} {:>10}\n",
            deviation(value, reference)
        ));
    }
    write_output(None, &text)
}
