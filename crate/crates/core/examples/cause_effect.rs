//! Splits answers into cause and effect with the connective rules.
//!
//!     cargo run -p qfeedback --example cause_effect -- "It floats, because ice is less dense"

use qfeedback::decompose;

fn main() -> qfeedback::Result<()> {
    let mut inputs: Vec<String> = std::env::args().skip(1).collect();
    if inputs.is_empty() {
        inputs = [
            "Treatment A, because results with higher variance are less homogeneous",
            "Since the sample is larger, the estimate is more precise",
            "If the data is sorted then binary search works",
            "In this case, the median is more robust",
            "The array is sorted so binary search applies",
            "Model A is as good as model B overall",
            "Treatment A",
        ]
        .map(String::from)
        .to_vec();
    }
    for text in &inputs {
        let d = decompose(text)?;
        println!("{text}");
        println!("  connective: {:?}", d.connective);
        println!("  effect:     {:?} {:?}", d.effect, d.effect_span);
        println!("  cause:      {:?} {:?}", d.cause, d.cause_span);
    }
    Ok(())
}
