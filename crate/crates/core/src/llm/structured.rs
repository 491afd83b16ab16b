//! Pulling JSON out of free-form model output and checking its shape.

use serde_json::Value;

use super::{ChatRequest, LlmBackend, LlmError, Message};

pub const DEFAULT_MAX_RETRIES: usize = 2;

/// Expected JSON shape of an agent response.
#[derive(Debug, Clone, PartialEq)]
pub enum Schema {
    Any,
    String,
    Number,
    Integer,
    Boolean,
    Array {
        items: Box<Schema>,
        min_items: usize,
    },
    /// Object with required fields; extra fields are allowed.
    Object {
        required: Vec<(String, Schema)>,
    },
    /// Object with arbitrary keys whose values all match.
    Map(Box<Schema>),
    OneOf(Vec<Schema>),
}

impl Schema {
    pub fn array(items: Schema) -> Self {
        Schema::Array {
            items: Box::new(items),
            min_items: 0,
        }
    }

    pub fn non_empty_array(items: Schema) -> Self {
        Schema::Array {
            items: Box::new(items),
            min_items: 1,
        }
    }

    pub fn object<'a>(fields: impl IntoIterator<Item = (&'a str, Schema)>) -> Self {
        Schema::Object {
            required: fields.into_iter().map(|(k, s)| (k.to_string(), s)).collect(),
        }
    }

    pub fn map(values: Schema) -> Self {
        Schema::Map(Box::new(values))
    }

    pub fn validate(&self, value: &Value) -> Result<(), String> {
        self.check(value, "$")
    }

    fn check(&self, v: &Value, path: &str) -> Result<(), String> {
        let fail = |want: &str| Err(format!("{path}: expected {want}, found {}", kind(v)));
        match self {
            Schema::Any => Ok(()),
            Schema::String => {
                if v.is_string() {
                    Ok(())
                } else {
                    fail("string")
                }
            }
            Schema::Number => {
                if v.is_number() {
                    Ok(())
                } else {
                    fail("number")
                }
            }
            Schema::Integer => {
                if v.is_i64() || v.is_u64() {
                    Ok(())
                } else {
                    fail("integer")
                }
            }
            Schema::Boolean => {
                if v.is_boolean() {
                    Ok(())
                } else {
                    fail("boolean")
                }
            }
            Schema::Array { items, min_items } => {
                let Some(xs) = v.as_array() else { return fail("array") };
                if xs.len() < *min_items {
                    return Err(format!(
                        "{path}: expected at least {min_items} item(s), found {}",
                        xs.len()
                    ));
                }
                xs.iter()
                    .enumerate()
                    .try_for_each(|(i, x)| items.check(x, &format!("{path}[{i}]")))
            }
            Schema::Object { required } => {
                let Some(map) = v.as_object() else {
                    return fail("object");
                };
                for (k, s) in required {
                    match map.get(k) {
                        Some(x) => s.check(x, &format!("{path}.{k}"))?,
                        None => return Err(format!("{path}: missing field '{k}'")),
                    }
                }
                Ok(())
            }
            Schema::Map(values) => {
                let Some(map) = v.as_object() else {
                    return fail("object");
                };
                map.iter()
                    .try_for_each(|(k, x)| values.check(x, &format!("{path}.{k}")))
            }
            Schema::OneOf(options) => {
                let mut errs = Vec::new();
                for s in options {
                    match s.check(v, path) {
                        Ok(()) => return Ok(()),
                        Err(e) => errs.push(e),
                    }
                }
                Err(errs.join(" | "))
            }
        }
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Every top-level JSON object or array embedded in `text`, in order of
/// appearance. Surrounding prose and code fences are skipped.
pub fn json_candidates(text: &str) -> Vec<Value> {
    let mut out = Vec::new();
    let mut i = 0;
    let bytes = text.as_bytes();
    while i < bytes.len() {
        if bytes[i] == b'{' || bytes[i] == b'[' {
            let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
            if let Some(Ok(v)) = stream.next() {
                let consumed = stream.byte_offset();
                out.push(v);
                i += consumed.max(1);
                continue;
            }
        }
        i += 1;
    }
    out
}

/// The first JSON value embedded in `text`.
pub fn extract_json(text: &str) -> Option<Value> {
    json_candidates(text).into_iter().next()
}

fn corrective(error: &str) -> String {
    format!(
        "Your previous response could not be used: {error}. \
         Reply again with only the JSON value in the required format."
    )
}

/// Call the backend until a response contains JSON that matches `schema` and
/// converts with `convert`, re-asking with a corrective message up to
/// `max_retries` times.
pub fn complete_parsed<T>(
    backend: &dyn LlmBackend,
    request: &ChatRequest,
    schema: &Schema,
    max_retries: usize,
    convert: impl Fn(Value) -> Result<T, String>,
) -> Result<T, LlmError> {
    let mut req = request.clone();
    let mut responses = Vec::new();
    let mut last_error = String::new();
    for attempt in 0..=max_retries {
        let text = backend.complete(&req)?;
        let candidates = json_candidates(&text);
        let outcome = if candidates.is_empty() {
            Err("no JSON value found".to_string())
        } else {
            let mut first_err = None;
            let mut found = None;
            for c in candidates {
                match schema.validate(&c).and_then(|_| convert(c)) {
                    Ok(t) => {
                        found = Some(t);
                        break;
                    }
                    Err(e) => {
                        first_err.get_or_insert(e);
                    }
                }
            }
            found.ok_or_else(|| first_err.unwrap_or_default())
        };
        match outcome {
            Ok(t) => return Ok(t),
            Err(e) => {
                tracing::debug!(attempt, error = %e, "structured output rejected");
                last_error = e;
                req.messages.push(Message::assistant(text.clone()));
                req.messages.push(Message::user(corrective(&last_error)));
                responses.push(text);
            }
        }
    }
    Err(LlmError::UnparseableOutput { responses, last_error })
}

/// [`complete_parsed`] returning the validated JSON value itself.
pub fn complete_structured(
    backend: &dyn LlmBackend,
    request: &ChatRequest,
    schema: &Schema,
    max_retries: usize,
) -> Result<Value, LlmError> {
    complete_parsed(backend, request, schema, max_retries, Ok)
}
