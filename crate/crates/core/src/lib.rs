//! Adaptive curation rules.
//!
//! Rules are trees of predicate features whose root-to-leaf paths are
//! conjunctions. Each round a rule annotates a corpus, a stratified sample of
//! the annotated items is verified, and Thompson sampling over Beta posteriors
//! picks candidate keywords and concepts to restrict or replace imprecise
//! features. The crate also builds concept summaries of a corpus and ranks
//! documents against concept preferences.

pub mod adapt;
pub mod bandit;
pub mod corpus;
pub mod eval;
pub mod feedback;
pub mod knowledge;
pub mod lang;
pub mod rank;
pub mod rule;
pub mod summarize;
pub mod synth;
pub mod text;
