//! Reference semantics for the supported JSON-schema subset.
//!
//! Documents have no surrounding whitespace, free whitespace between
//! tokens, object keys in declaration order, and strings restricted to the
//! escapes `\" \\ \n \t` and non-surrogate `\uXXXX`.

use serde_json::Value;

use crate::regex_oracle::RegexOracle;

const WS: &str = r"[ \t\n\r]*";

/// The schema used by the reference-generation experiments: a free-text
/// answer plus the list of cited document ids.
pub const RAG_SCHEMA: &str = r#"{
  "type": "object",
  "properties": {
    "response": {"type": "string"},
    "document_ids": {"type": "array", "items": {"type": "string"}}
  },
  "required": ["response", "document_ids"]
}"#;

fn string_re() -> String {
    let hex = "[0-9a-fA-F]";
    let non_surrogate = format!("(?:[0-9a-cA-CeEfF]{hex}{{3}}|[dD][0-7]{hex}{{2}})");
    format!(r#""(?:[^"\\\x00-\x1f]|\\["\\nt]|\\u{non_surrogate})*""#)
}

fn key_re(key: &str) -> String {
    let mut out = String::from("\"");
    for c in key.chars() {
        match c {
            '"' => out.push_str(r#"\\""#),
            '\\' => out.push_str(r"\\\\"),
            '\n' => out.push_str(r"\\n"),
            '\t' => out.push_str(r"\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!(r"\\u{:04x}", c as u32)),
            c => out.push_str(&regex_escape(c)),
        }
    }
    out.push('"');
    out
}

fn regex_escape(c: char) -> String {
    if c.is_ascii_punctuation() {
        format!("\\{c}")
    } else {
        c.to_string()
    }
}

/// Regex over the documents `schema` admits. Panics on schemas outside the
/// subset; callers pass known-good fixtures.
pub fn schema_regex(schema: &Value) -> String {
    match schema["type"].as_str().expect("schema type") {
        "string" => string_re(),
        "number" => r"-?(?:0|[1-9][0-9]*)(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?".into(),
        "boolean" => "(?:true|false)".into(),
        "array" => {
            let item = schema_regex(&schema["items"]);
            format!(r"\[{WS}(?:{item}(?:{WS},{WS}{item})*{WS})?\]")
        }
        "object" => {
            let props = schema["properties"].as_object();
            let fields: Vec<String> = props
                .into_iter()
                .flatten()
                .map(|(k, v)| format!("{}{WS}:{WS}{}", key_re(k), schema_regex(v)))
                .collect();
            if fields.is_empty() {
                format!(r"\{{{WS}\}}")
            } else {
                format!(r"\{{{WS}{}{WS}\}}", fields.join(&format!("{WS},{WS}")))
            }
        }
        other => panic!("type {other} is outside the supported subset"),
    }
}

pub fn schema_oracle(schema: &Value) -> RegexOracle {
    RegexOracle::new(&schema_regex(schema)).expect("schema regex compiles")
}

/// Independent post-hoc check of a finished document: exact syntax via the
/// reference regex, then JSON parsing, then a general-purpose JSON-schema
/// validator, then key order.
pub fn validate_document(schema: &Value, text: &[u8]) -> Result<(), String> {
    if !schema_oracle(schema).matches(text) {
        return Err(format!(
            "not in the schema language: {}",
            String::from_utf8_lossy(text)
        ));
    }
    let doc: Value = serde_json::from_slice(text).map_err(|e| format!("not JSON: {e}"))?;
    let validator = jsonschema::validator_for(schema).map_err(|e| e.to_string())?;
    if let Some(e) = validator.iter_errors(&doc).next() {
        return Err(format!("schema violation: {e}"));
    }
    check_order(schema, &doc)
}

fn check_order(schema: &Value, doc: &Value) -> Result<(), String> {
    match (schema["type"].as_str(), doc) {
        (Some("object"), Value::Object(m)) => {
            let want: Vec<&String> = schema["properties"]
                .as_object()
                .map(|p| p.keys().collect())
                .unwrap_or_default();
            let got: Vec<&String> = m.keys().collect();
            if want != got {
                return Err(format!("keys {got:?}, expected {want:?}"));
            }
            for (k, v) in m {
                check_order(&schema["properties"][k], v)?;
            }
            Ok(())
        }
        (Some("array"), Value::Array(items)) => items
            .iter()
            .try_for_each(|v| check_order(&schema["items"], v)),
        _ => Ok(()),
    }
}
