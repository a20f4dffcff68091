//! Generation metrics on a toy corpus and learning gains from the bundled
//! interaction log.

use std::path::PathBuf;

use qfeedback::corpus::read_jsonl;
use qfeedback::eval::{evaluate_generation, learning_gain_reports};
use qfeedback::InteractionRecord;

fn main() -> qfeedback::Result<()> {
    let predicted =
        ["Do we prefer less or more homogeneous results?", "Is the median robust?", "What is a control group for?"];
    let gold = [
        "Do we prefer more or less homogeneous results?",
        "Is the median robust to outliers?",
        "Why do we need a control group?",
    ];
    let r = evaluate_generation(&predicted, &gold)?;
    println!("BLEU-1..4 {:.2} {:.2} {:.2} {:.2}  ROUGE-L {:.2}", r.bleu1, r.bleu2, r.bleu3, r.bleu4, r.rouge_l);

    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/interactions.jsonl");
    let records: Vec<InteractionRecord> = read_jsonl(&path)?;
    for g in learning_gain_reports(&records) {
        println!(
            "{:<16} first attempt {:5.1}% ± {:4.1}   all attempts {:5.1}% ± {:4.1}   (n = {})",
            g.model.to_string(),
            g.gain_first_attempt,
            g.ci95_first_attempt,
            g.gain_all_attempts,
            g.ci95_half_width,
            g.n
        );
    }
    Ok(())
}
