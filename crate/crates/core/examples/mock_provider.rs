//! Scripted chat and scoring through the gateway, no network involved.

use std::sync::Arc;

use nodesmith::llm::{ChatMessage, Gateway, MockProvider, MockScript, Rates};
use serde_json::json;

fn main() -> nodesmith::Result<()> {
    let mut script = MockScript::default();
    script.push_chat_json(&["contract analyst"], json!({"clause": "Article 577", "risk": "low"}));
    script.push_score_mean(&["Answer:"], -0.8);

    let mock = Arc::new(MockProvider::named("demo", script));
    let gateway = Gateway::new(mock.clone()).with_rates(Rates { input_per_token: 1e-6, output_per_token: 2e-6 });

    let reply = gateway.chat_json(&[
        ChatMessage::system("You are a contract analyst."),
        ChatMessage::user("Which clause governs late delivery?"),
    ])?;
    println!("chat reply: {}", serde_json::Value::Object(reply));

    let score = gateway.score_completion("Question: who pays?\n\nAnswer:", "the seller pays")?;
    let mean = score.logprobs().sum::<f64>() / score.tokens.len() as f64;
    println!("scored {} target tokens, mean logprob {mean:.3}", score.tokens.len());

    println!("usage: {:?}", gateway.usage_summary());
    println!("provider saw {} calls", mock.calls().len());
    Ok(())
}
