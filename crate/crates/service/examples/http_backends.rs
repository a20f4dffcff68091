//! Serves a toy model server speaking the backend protocol and points the
//! HTTP adapters at it: generation, token embeddings, scorers and NLI.

use axum::routing::post;
use axum::{Json, Router};
use qfeedback::hintqa::{entailment_select, NliBackend};
use qfeedback::qg::{generate_candidates, GeneratorBackend};
use qfeedback::reranker::AuxiliaryScorers;
use qfeedback::{ReferenceSolution, Similarity};
use qfeedback_service::adapters::{HttpEmbedding, HttpGenerator, HttpNli, HttpScorers};
use serde_json::{json, Value};

const DIM: usize = 8;

fn toy_vector(word: &str) -> Vec<f64> {
    let mut v = vec![0.0; DIM];
    v[word.bytes().map(usize::from).sum::<usize>() % DIM] = 1.0;
    v
}

fn toy_server() -> Router {
    Router::new()
        .route(
            "/generate",
            post(|Json(req): Json<Value>| async move {
                let source = req["source"].as_str().unwrap_or_default().to_string();
                Json(json!({"candidates": [
                    {"text": format!("Why is it that {source}?"), "score": -0.2, "loss": 0.4},
                    {"text": format!("Is it true that {source}?"), "score": -0.5, "loss": 0.9},
                ]}))
            }),
        )
        .route(
            "/embed_tokens",
            post(|Json(req): Json<Value>| async move {
                let tokens: Vec<Value> = req["text"]
                    .as_str()
                    .unwrap_or_default()
                    .split_whitespace()
                    .map(|w| json!({"token": w, "vector": toy_vector(&w.to_lowercase())}))
                    .collect();
                Json(json!({ "tokens": tokens }))
            }),
        )
        .route("/sentence_embed", post(|| async { Json(json!({"vector": toy_vector("q")})) }))
        .route("/well_formed", post(|| async { Json(json!({"prob": 0.9})) }))
        .route("/perplexity", post(|| async { Json(json!({"perplexity": 12.5})) }))
        .route(
            "/entailment",
            post(|Json(req): Json<Value>| async move {
                let p = req["premise"].as_str().unwrap_or_default();
                Json(json!({"prob": if p.contains("less") { 0.8 } else { 0.1 }}))
            }),
        )
}

fn main() -> anyhow::Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let base = format!("http://{}", listener.local_addr()?);
    runtime.spawn(async move { axum::serve(listener, toy_server()).await });

    // The adapters block, so they run on this thread while the server runs
    // on the runtime's workers.
    let generator = HttpGenerator::new(&base)?;
    let reference =
        ReferenceSolution::new("r1", "Treatment A, because results with higher variance are less homogeneous");
    for c in generate_candidates(&reference, &generator, 2, 150)? {
        println!("{:>5.2}  {}", c.model_score, c.question);
    }
    println!("export: {}", generator.export()?);

    let sim = Similarity::new(std::sync::Arc::new(HttpEmbedding::new(&base, DIM)?));
    println!("similarity: {:.3}", sim.token_similarity("less homogeneous results", "results less homogeneous")?.f1);

    let scorers = HttpScorers::new(&base, DIM)?;
    println!("well-formed {:.2}, perplexity {:.1}", scorers.well_formed_prob("Why?")?, scorers.perplexity("Why?")?);

    let nli = HttpNli::new(&base)?;
    let answers = vec!["More homogeneous".to_string(), "Less variance means less spread".to_string()];
    println!("entailment pick: {}", entailment_select(&answers, "think about spread", &nli)?);
    println!("p = {:.1}", nli.entailment_prob("less", "x")?);
    Ok(())
}
