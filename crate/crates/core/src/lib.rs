//! Controlled agreement minimal pairs from feature-annotated grammars, and an
//! evaluation harness for sentence scorers.

pub mod grammar;
pub mod pairgen;
pub mod tokenizer;
pub mod scoring;
pub mod evaluator;
pub mod cli;
