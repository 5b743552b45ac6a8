//! The supported JSON Schema subset and its translation to grammars and
//! regexes.
//!
//! Supported: `object` with `properties` (all listed in `required`,
//! `additionalProperties` absent or false), `string`, `number`, `boolean`
//! and `array` with a single `items` schema. Annotation keywords are
//! ignored; anything else is rejected.
//!
//! Every backend accepts the same language for a schema: no whitespace
//! before or after the document, free `[ \t\n\r]*` between structural
//! tokens, object keys in declaration order, strings whose escapes are
//! limited to `\" \\ \n \t` and non-surrogate `\uXXXX`, and JSON numbers.

use serde_json::Value;
use thiserror::Error;

use super::{Grammar, GrammarError, Production, Rule, Symbol};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemaError {
    #[error("schema is not valid JSON: {0}")]
    Json(String),
    #[error("unsupported schema feature: {0}")]
    UnsupportedSchemaFeature(String),
    #[error("invalid schema: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchemaNode {
    /// Properties in declaration order; all are required.
    Object(Vec<(String, SchemaNode)>),
    String,
    Number,
    Boolean,
    Array(Box<SchemaNode>),
}

const ANNOTATIONS: &[&str] = &[
    "title",
    "description",
    "$schema",
    "$id",
    "$comment",
    "examples",
    "default",
];

pub fn parse_schema_str(text: &str) -> Result<SchemaNode, SchemaError> {
    let v: Value = serde_json::from_str(text).map_err(|e| SchemaError::Json(e.to_string()))?;
    parse_schema(&v)
}

pub fn parse_schema(v: &Value) -> Result<SchemaNode, SchemaError> {
    let obj = v
        .as_object()
        .ok_or_else(|| SchemaError::Invalid("a schema must be a JSON object".into()))?;
    let ty = match obj.get("type") {
        Some(Value::String(t)) => t.as_str(),
        Some(Value::Array(_)) => {
            return Err(SchemaError::UnsupportedSchemaFeature("type unions".into()))
        }
        Some(_) => return Err(SchemaError::Invalid("`type` must be a string".into())),
        None => {
            let kw = obj
                .keys()
                .find(|k| !ANNOTATIONS.contains(&k.as_str()))
                .cloned()
                .unwrap_or_else(|| "schema without `type`".into());
            return Err(SchemaError::UnsupportedSchemaFeature(kw));
        }
    };
    let allowed: &[&str] = match ty {
        "object" => &["type", "properties", "required", "additionalProperties"],
        "array" => &["type", "items"],
        "string" | "number" | "boolean" => &["type"],
        "integer" | "null" => {
            return Err(SchemaError::UnsupportedSchemaFeature(format!(
                "type `{ty}`"
            )))
        }
        other => return Err(SchemaError::Invalid(format!("unknown type `{other}`"))),
    };
    if let Some(k) = obj
        .keys()
        .find(|k| !allowed.contains(&k.as_str()) && !ANNOTATIONS.contains(&k.as_str()))
    {
        return Err(SchemaError::UnsupportedSchemaFeature(format!(
            "keyword `{k}` on type `{ty}`"
        )));
    }
    Ok(match ty {
        "string" => SchemaNode::String,
        "number" => SchemaNode::Number,
        "boolean" => SchemaNode::Boolean,
        "array" => {
            let items = obj.get("items").ok_or_else(|| {
                SchemaError::UnsupportedSchemaFeature("array without `items`".into())
            })?;
            if items.is_array() {
                return Err(SchemaError::UnsupportedSchemaFeature(
                    "tuple `items`".into(),
                ));
            }
            SchemaNode::Array(Box::new(parse_schema(items)?))
        }
        _ => {
            match obj.get("additionalProperties") {
                None | Some(Value::Bool(false)) => {}
                Some(_) => {
                    return Err(SchemaError::UnsupportedSchemaFeature(
                        "additionalProperties other than false".into(),
                    ))
                }
            }
            let props = match obj.get("properties") {
                None => serde_json::Map::new(),
                Some(Value::Object(m)) => m.clone(),
                Some(_) => {
                    return Err(SchemaError::Invalid(
                        "`properties` must be an object".into(),
                    ))
                }
            };
            let required: Vec<&str> = match obj.get("required") {
                None => Vec::new(),
                Some(Value::Array(a)) => a
                    .iter()
                    .map(|r| {
                        r.as_str().ok_or_else(|| {
                            SchemaError::Invalid("`required` entries must be strings".into())
                        })
                    })
                    .collect::<Result<_, _>>()?,
                Some(_) => return Err(SchemaError::Invalid("`required` must be an array".into())),
            };
            if let Some(r) = required.iter().find(|r| !props.contains_key(**r)) {
                return Err(SchemaError::Invalid(format!(
                    "required property `{r}` is not declared"
                )));
            }
            if let Some(k) = props.keys().find(|k| !required.contains(&k.as_str())) {
                return Err(SchemaError::UnsupportedSchemaFeature(format!(
                    "optional property `{k}`"
                )));
            }
            let mut out = Vec::with_capacity(props.len());
            for (k, sub) in &props {
                out.push((k.clone(), parse_schema(sub)?));
            }
            SchemaNode::Object(out)
        }
    })
}

/// Exact bytes an object key is emitted as, using only the escapes the
/// string grammar allows.
pub fn encode_key(key: &str) -> String {
    let mut out = String::with_capacity(key.len() + 2);
    out.push('"');
    for c in key.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

const WS_RE: &str = "[ \\t\\n\\r]*";
const HEX4_NON_SURROGATE: &str = "([0-9A-Ca-cE-Fe-f][0-9A-Fa-f]{3}|[Dd][0-7][0-9A-Fa-f]{2})";

pub fn string_regex() -> String {
    format!("\"([^\"\\\\\\x00-\\x1f]|\\\\[\"\\\\nt]|\\\\u{HEX4_NON_SURROGATE})*\"")
}

pub const NUMBER_REGEX: &str = "-?(0|[1-9][0-9]*)(\\.[0-9]+)?([eE][+-]?[0-9]+)?";

fn escape_regex(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii() && !c.is_ascii_alphanumeric() && c != ' ' {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

/// Regex accepting exactly the documents valid under `schema`.
pub fn schema_to_regex(schema: &SchemaNode) -> String {
    let mut out = String::new();
    write_regex(schema, &mut out);
    out
}

fn write_regex(node: &SchemaNode, out: &mut String) {
    match node {
        SchemaNode::String => out.push_str(&format!("({})", string_regex())),
        SchemaNode::Number => out.push_str(&format!("({NUMBER_REGEX})")),
        SchemaNode::Boolean => out.push_str("(true|false)"),
        SchemaNode::Array(item) => {
            let mut it = String::new();
            write_regex(item, &mut it);
            out.push_str(&format!(
                "\\[{WS_RE}({it}({WS_RE},{WS_RE}{it})*{WS_RE})?\\]"
            ));
        }
        SchemaNode::Object(props) => {
            out.push_str("\\{");
            out.push_str(WS_RE);
            for (i, (k, v)) in props.iter().enumerate() {
                if i > 0 {
                    out.push_str(WS_RE);
                    out.push(',');
                    out.push_str(WS_RE);
                }
                out.push_str(&escape_regex(&encode_key(k)));
                out.push_str(WS_RE);
                out.push(':');
                out.push_str(WS_RE);
                write_regex(v, out);
            }
            if !props.is_empty() {
                out.push_str(WS_RE);
            }
            out.push_str("\\}");
        }
    }
}

/// Grammar accepting exactly the documents valid under `schema`.
pub fn schema_to_grammar(schema: &SchemaNode) -> Grammar {
    let mut b = Builder { rules: Vec::new() };
    b.rules.push(Rule {
        name: "start".into(),
        alts: Vec::new(),
    });
    let top = b.node(schema, "root");
    b.rules[0].alts = vec![vec![top]];
    b.rules.push(Rule {
        name: "WS".into(),
        alts: vec![vec![Symbol::Pattern(WS_RE.into())]],
    });
    b.rules.push(Rule {
        name: "STRING".into(),
        alts: vec![vec![Symbol::Pattern(string_regex())]],
    });
    b.rules.push(Rule {
        name: "NUMBER".into(),
        alts: vec![vec![Symbol::Pattern(NUMBER_REGEX.into())]],
    });
    let g = Grammar::new(b.rules, "start");
    debug_assert!(g.is_ok(), "{g:?}");
    g.unwrap_or_else(|e: GrammarError| panic!("schema grammar is well formed: {e}"))
}

struct Builder {
    rules: Vec<Rule>,
}

fn lit(s: &str) -> Symbol {
    Symbol::Literal(s.as_bytes().to_vec())
}

fn ws() -> Symbol {
    Symbol::Rule("WS".into())
}

impl Builder {
    fn fresh(&self, hint: &str) -> String {
        let base: String = hint
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        let sep = if base.starts_with(|c: char| c.is_ascii_alphabetic()) {
            ""
        } else {
            "k"
        };
        format!("{sep}{base}_{}", self.rules.len())
    }

    fn node(&mut self, node: &SchemaNode, hint: &str) -> Symbol {
        match node {
            SchemaNode::String => Symbol::Rule("STRING".into()),
            SchemaNode::Number => Symbol::Rule("NUMBER".into()),
            SchemaNode::Boolean => {
                let name = self.fresh("bool");
                self.rules.push(Rule {
                    name: name.clone(),
                    alts: vec![vec![lit("true")], vec![lit("false")]],
                });
                Symbol::Rule(name)
            }
            SchemaNode::Array(item) => {
                let item_sym = self.node(item, &format!("{hint}_item"));
                let tail = self.fresh(&format!("{hint}_tail"));
                self.rules.push(Rule {
                    name: tail.clone(),
                    alts: vec![
                        vec![
                            ws(),
                            lit(","),
                            ws(),
                            item_sym.clone(),
                            Symbol::Rule(tail.clone()),
                        ],
                        vec![],
                    ],
                });
                let name = self.fresh(hint);
                self.rules.push(Rule {
                    name: name.clone(),
                    alts: vec![
                        vec![lit("["), ws(), item_sym, Symbol::Rule(tail), ws(), lit("]")],
                        vec![lit("["), ws(), lit("]")],
                    ],
                });
                Symbol::Rule(name)
            }
            SchemaNode::Object(props) => {
                let mut body: Production = vec![lit("{"), ws()];
                for (i, (k, v)) in props.iter().enumerate() {
                    if i > 0 {
                        body.extend([ws(), lit(","), ws()]);
                    }
                    let value = self.node(v, k);
                    body.extend([lit(&encode_key(k)), ws(), lit(":"), ws(), value]);
                }
                if !props.is_empty() {
                    body.push(ws());
                }
                body.push(lit("}"));
                let name = self.fresh(hint);
                self.rules.push(Rule {
                    name: name.clone(),
                    alts: vec![body],
                });
                Symbol::Rule(name)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regex_fsm::compile_regex;
    use serde_json::json;

    fn response_schema() -> SchemaNode {
        parse_schema(&json!({
            "type": "object",
            "properties": {
                "response": {"type": "string"},
                "document_ids": {"type": "array", "items": {"type": "string"}}
            },
            "required": ["response", "document_ids"]
        }))
        .unwrap()
    }

    #[test]
    fn keeps_declaration_order() {
        let s = parse_schema(&json!({
            "type": "object",
            "properties": {"z": {"type": "number"}, "a": {"type": "boolean"}},
            "required": ["a", "z"]
        }))
        .unwrap();
        assert_eq!(
            s,
            SchemaNode::Object(vec![
                ("z".into(), SchemaNode::Number),
                ("a".into(), SchemaNode::Boolean)
            ])
        );
    }

    #[test]
    fn rejects_unsupported_features() {
        for bad in [
            json!({"type": "integer"}),
            json!({"type": ["string", "null"]}),
            json!({"anyOf": [{"type": "string"}]}),
            json!({"type": "string", "minLength": 2}),
            json!({"type": "array", "items": {"type": "string"}, "minItems": 1}),
            json!({"type": "object", "properties": {"a": {"type": "string"}}}),
            json!({"type": "object", "additionalProperties": true}),
        ] {
            assert!(
                matches!(
                    parse_schema(&bad),
                    Err(SchemaError::UnsupportedSchemaFeature(_))
                ),
                "{bad}"
            );
        }
    }

    #[test]
    fn annotations_are_ignored() {
        let s = parse_schema(&json!({"type": "string", "title": "t", "description": "d"}));
        assert_eq!(s, Ok(SchemaNode::String));
    }

    #[test]
    fn regex_accepts_schema_documents() {
        let fsm = compile_regex(&schema_to_regex(&response_schema())).unwrap();
        for ok in [
            r#"{"response":"hi","document_ids":[]}"#,
            "{ \"response\" : \"a\\n\\u00e9\" ,\n\"document_ids\":[ \"x\" , \"y\"]}",
            r#"{"response":"é","document_ids":["(doc_id)1(/doc_id)"]}"#,
        ] {
            assert!(fsm.matches(ok.as_bytes()), "{ok}");
        }
        for bad in [
            r#" {"response":"hi","document_ids":[]}"#,
            r#"{"document_ids":[],"response":"hi"}"#,
            r#"{"response":"hi","document_ids":[],}"#,
            r#"{"response":"\ud800","document_ids":[]}"#,
            r#"{"response":"hi","document_ids":[1]}"#,
            "{\"response\":\"a\tb\",\"document_ids\":[]}",
            r#"{"response":"a\/b","document_ids":[]}"#,
        ] {
            assert!(!fsm.matches(bad.as_bytes()), "{bad}");
        }
    }

    #[test]
    fn number_regex_matches_json_numbers() {
        let fsm = compile_regex(NUMBER_REGEX).unwrap();
        for ok in ["0", "-0", "12.5e-3", "1E9"] {
            assert!(fsm.matches(ok.as_bytes()), "{ok}");
        }
        for bad in ["01", "1.", ".5", "+1", "1e"] {
            assert!(!fsm.matches(bad.as_bytes()), "{bad}");
        }
    }

    #[test]
    fn grammar_is_valid_and_names_are_unique() {
        let g = schema_to_grammar(&SchemaNode::Array(Box::new(SchemaNode::Array(Box::new(
            SchemaNode::Boolean,
        )))));
        assert_eq!(g.start(), "start");
        let text = g.to_string();
        assert_eq!(crate::grammar::parse_grammar(&text).unwrap(), g);
    }
}
