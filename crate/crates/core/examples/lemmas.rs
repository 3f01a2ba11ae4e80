//! Counterexamples: a calibrated scorer and an equal-MSE scorer that are
//! both maximally unfair on cross-group pairs.
//!
//!     cargo run --example lemmas

use fairranklab::metrics::lemma_counterexamples;

fn main() {
    let report = lemma_counterexamples();
    print!("{}", report.verdict_text());
    if !report.passed() {
        std::process::exit(3);
    }
}
