//! Quality, latency and hallucination metrics.

mod bleu;
mod hallucination;
mod latency;
mod report;

pub use bleu::{corpus_bleu, BleuStats};
pub use hallucination::{
    corpus_hallucination_rate, hallucination_count, HallucinationCount, ScoredSentence,
};
pub use latency::{average_lagging, corpus_average_lagging};
pub use report::{evaluate_traces, token_accuracy, EvalReport, CSV_HEADER};
