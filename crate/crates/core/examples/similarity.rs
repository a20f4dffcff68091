//! Token-level similarity between two sentences, with and without IDF
//! weighting, using the deterministic offline embeddings.

use std::sync::Arc;

use qfeedback::similarity::{HashEmbedding, IdfTable, OrthogonalEmbedding};
use qfeedback::Similarity;

fn main() -> qfeedback::Result<()> {
    let pairs = [
        ("results with higher variance are less homogeneous", "results with higher variance are less homogeneous"),
        ("results with higher variance are less homogeneous", "results with more variance are less homogeneous"),
        ("it is less homogeneous than treatment B", "results with higher variance are less homogeneous"),
        ("zebra quartz", "results with higher variance are less homogeneous"),
    ];
    let corpus: Vec<&str> = pairs.iter().flat_map(|(a, b)| [*a, *b]).collect();
    let exact = Similarity::new(Arc::new(OrthogonalEmbedding::default()));
    let weighted = exact.clone().with_idf(IdfTable::from_documents(corpus));
    let hashed = Similarity::new(Arc::new(HashEmbedding::default()));

    println!("{:>6} {:>6} {:>6}  pair", "exact", "idf", "hash");
    for (a, b) in pairs {
        println!(
            "{:>6.3} {:>6.3} {:>6.3}  {a:?} / {b:?}",
            exact.token_similarity(a, b)?.f1,
            weighted.token_similarity(a, b)?.f1,
            hashed.token_similarity(a, b)?.f1,
        );
    }
    println!("match at tau 0.8: {}", exact.is_match(pairs[1].0, pairs[1].1, 0.8)?);
    Ok(())
}
