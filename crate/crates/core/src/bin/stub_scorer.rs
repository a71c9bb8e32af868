//! Protocol server backed by a native scorer, for exercising the external
//! backend without a neural model.

use std::io::{self, BufReader, Write};
use std::net::TcpListener;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};

use agreement::pairgen::{generate_corpus, load_cases};
use agreement::scoring::protocol::{serve, ServeOptions, ServeSummary};
use agreement::scoring::{
    masked_by_substitution, BackendInfo, CandidateScore, NgramBackend, OracleBackend,
    RandomBackend, ScoreError, ScorerBackend, SentenceScore, UniformBackend,
};
use agreement::tokenizer::SubwordVocab;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Uniform,
    Random,
    Oracle,
    Ngram,
}

#[derive(Debug, Parser)]
#[command(name = "agreement-stub-scorer", about = "Line-protocol scorer for tests")]
struct Args {
    #[arg(long, value_enum, default_value = "random")]
    backend: Kind,
    /// Grammars for the oracle and n-gram backends.
    #[arg(long, default_value = "grammars")]
    grammar_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 171)]
    vocab_size: usize,
    /// Sub-word vocabulary deciding which masked candidates are single pieces.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Listen on this address instead of standard streams; the bound address
    /// is printed on the first stdout line.
    #[arg(long)]
    listen: Option<String>,
    /// Serve one connection and exit.
    #[arg(long)]
    once: bool,
    /// Advertised concurrency limit; omitted from hello when absent.
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long, default_value_t = 0)]
    jitter_ms: u64,
    /// Drop the connection after this many scoring requests.
    #[arg(long)]
    fail_after: Option<usize>,
    #[arg(long, default_value_t = 512)]
    max_len: usize,
    /// Append a JSON summary per connection to this file.
    #[arg(long)]
    summary: Option<PathBuf>,
}

struct Stub {
    inner: Box<dyn ScorerBackend>,
    vocab: Option<SubwordVocab>,
}

impl ScorerBackend for Stub {
    fn info(&self) -> &BackendInfo {
        self.inner.info()
    }

    fn score(&self, text: &str) -> Result<SentenceScore, ScoreError> {
        self.inner.score(text)
    }

    fn masked_candidates(
        &self,
        text: &str,
        span: (usize, usize),
        candidates: &[String],
    ) -> Result<Vec<CandidateScore>, ScoreError> {
        masked_by_substitution(self, text, span, candidates, |c| match &self.vocab {
            Some(v) => v.count(c),
            None => c.split_whitespace().count(),
        })
    }
}

fn build(args: &Args) -> Result<Stub> {
    let corpus = || -> Result<Vec<Vec<String>>> {
        let specs = load_cases(&args.grammar_dir)?;
        Ok(generate_corpus(&specs)?
            .pairs
            .into_iter()
            .map(|p| p.grammatical)
            .collect())
    };
    let inner: Box<dyn ScorerBackend> = match args.backend {
        Kind::Uniform => Box::new(UniformBackend::new(args.vocab_size)),
        Kind::Random => Box::new(RandomBackend::new(args.seed)),
        Kind::Oracle => Box::new(OracleBackend::new(corpus()?.iter().map(|s| s.join(" ")))),
        Kind::Ngram => Box::new(NgramBackend::train(&corpus()?, 2, 0.1)?),
    };
    let vocab = match &args.vocab {
        Some(p) => Some(SubwordVocab::load(p)?),
        None => None,
    };
    Ok(Stub { inner, vocab })
}

fn record(args: &Args, summary: &ServeSummary) -> Result<()> {
    if let Some(path) = &args.summary {
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("cannot open {}", path.display()))?;
        writeln!(f, "{}", serde_json::to_string(summary)?)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let args = Args::parse();
    let backend = build(&args)?;
    let options = ServeOptions {
        name: format!("stub-{}", backend.info().name),
        max_len: args.max_len,
        concurrency_limit: args.concurrency,
        jitter_ms: args.jitter_ms,
        fail_after: args.fail_after,
    };
    match &args.listen {
        None => {
            let stdin = io::stdin().lock();
            let summary = serve(&backend, &options, stdin, io::stdout())?;
            record(&args, &summary)?;
            if summary.failed {
                std::process::exit(1);
            }
        }
        Some(addr) => {
            let listener = TcpListener::bind(addr).with_context(|| format!("cannot bind {addr}"))?;
            println!("{}", listener.local_addr()?);
            io::stdout().flush()?;
            for stream in listener.incoming() {
                let stream = stream?;
                let reader = BufReader::new(stream.try_clone()?);
                let summary = serve(&backend, &options, reader, stream)?;
                record(&args, &summary)?;
                if args.once {
                    break;
                }
            }
        }
    }
    Ok(())
}
