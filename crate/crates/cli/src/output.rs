// SPDX-License-Identifier: Apache-2.0
use serde_json::Value;
use tips_core::canonical;

use crate::cli::OutputFormat;

/// What a command prints: free text for people, one JSON document for scripts.
pub struct Output {
    pub human: Vec<u8>,
    pub json: Value,
    /// Printed byte for byte, with no newline added.
    raw: bool,
}

impl Output {
    pub fn new(human: impl Into<String>, json: Value) -> Self {
        Self { human: human.into().into_bytes(), json, raw: false }
    }

    pub fn raw(human: Vec<u8>, json: Value) -> Self {
        Self { human, json, raw: true }
    }

    pub fn render(&self, format: OutputFormat) -> Vec<u8> {
        match format {
            OutputFormat::Human => {
                let mut out = self.human.clone();
                if !self.raw && !out.is_empty() && !out.ends_with(b"\n") {
                    out.push(b'\n');
                }
                out
            }
            OutputFormat::Json => {
                let mut out = canonical::to_vec(&self.json).expect("output encodes");
                out.push(b'\n');
                out
            }
        }
    }
}
