//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three operations, each returning JSON:
//! - [`sample_dialogue`]: a generated dialogue with its snapshot targets
//! - [`score_response`]: sentence BLEU and slot match of two responses
//! - [`ChatSession`]: chat with a checkpoint file loaded in the page
//!
//! The plain-Rust functions in [`ops`] do the work and are tested natively.

pub mod ops;

use wasm_bindgen::prelude::*;

fn to_js<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("demo payloads serialise")
}

#[wasm_bindgen]
pub fn sample_dialogue(seed: u32) -> Result<String, JsError> {
    ops::sample_dialogue(seed.into()).map(|d| to_js(&d)).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn score_response(candidate: &str, reference: &str) -> String {
    to_js(&ops::score_response(candidate, reference))
}

#[wasm_bindgen]
pub struct ChatSession(ops::Chat);

#[wasm_bindgen]
impl ChatSession {
    /// Restore a checkpoint from its JSON text.
    #[wasm_bindgen(constructor)]
    pub fn new(checkpoint_json: &str, seed: u32) -> Result<ChatSession, JsError> {
        ops::Chat::from_json(checkpoint_json, seed.into())
            .map(ChatSession)
            .map_err(|e| JsError::new(&e.to_string()))
    }

    pub fn describe(&self) -> String {
        to_js(&self.0.describe())
    }

    pub fn say(&mut self, text: &str) -> Result<String, JsError> {
        self.0.say(text).map(|r| to_js(&r)).map_err(|e| JsError::new(&e.to_string()))
    }
}
