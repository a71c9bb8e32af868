#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use agreement::pairgen::{generate_corpus, load_cases, Corpus, TestCaseSpec};

pub fn grammar_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("grammars")
}

pub fn specs() -> &'static [TestCaseSpec] {
    static SPECS: OnceLock<Vec<TestCaseSpec>> = OnceLock::new();
    SPECS.get_or_init(|| load_cases(&grammar_dir()).expect("shipped cases load"))
}

pub fn corpus() -> &'static Corpus {
    static CORPUS: OnceLock<Corpus> = OnceLock::new();
    CORPUS.get_or_init(|| generate_corpus(specs()).expect("shipped corpus generates"))
}

pub fn stub_scorer() -> &'static str {
    env!("CARGO_BIN_EXE_agreement-stub-scorer")
}

pub fn agreement_bin() -> &'static str {
    env!("CARGO_BIN_EXE_agreement")
}
