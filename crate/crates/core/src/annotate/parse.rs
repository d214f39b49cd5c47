//! Response parsers for best-worst answers and zero-shot class labels.

use std::sync::OnceLock;

use regex::Regex;
use serde_json::Value;
use thiserror::Error;

use crate::labels::FrequencyClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BwsAnswer {
    pub best: usize,
    pub worst: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BwsParseError {
    #[error("no JSON object found in response")]
    NoJson,
    #[error("no JSON object with both \"Best\" and \"Worst\" keys")]
    MissingKeys,
    #[error("\"{key}\" is not an integer or a single-element integer list: {value}")]
    InvalidValue { key: &'static str, value: String },
    #[error("\"{key}\" = {value} is outside 1..={k}")]
    OutOfRange {
        key: &'static str,
        value: i64,
        k: usize,
    },
    #[error("best and worst are both {0}")]
    Tie(usize),
}

fn lookup<'a>(obj: &'a serde_json::Map<String, Value>, key: &str) -> Option<&'a Value> {
    obj.get(key).or_else(|| {
        obj.iter()
            .find(|(k, _)| k.trim().eq_ignore_ascii_case(key))
            .map(|(_, v)| v)
    })
}

fn index_value(key: &'static str, v: &Value, k: usize) -> Result<usize, BwsParseError> {
    let scalar = match v {
        Value::Array(items) if items.len() == 1 => &items[0],
        other => other,
    };
    let n = scalar.as_i64().ok_or_else(|| BwsParseError::InvalidValue {
        key,
        value: v.to_string(),
    })?;
    if n < 1 || n as usize > k {
        return Err(BwsParseError::OutOfRange { key, value: n, k });
    }
    Ok(n as usize)
}

/// Extracts the first JSON object carrying `"Best"` and `"Worst"` keys.
pub fn parse_bws_response(raw: &str, k: usize) -> Result<BwsAnswer, BwsParseError> {
    let mut saw_json = false;
    for (pos, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[pos..]).into_iter::<Value>();
        let Some(Ok(Value::Object(obj))) = stream.next() else {
            continue;
        };
        saw_json = true;
        let (Some(best), Some(worst)) = (lookup(&obj, "Best"), lookup(&obj, "Worst")) else {
            continue;
        };
        let best = index_value("Best", best, k)?;
        let worst = index_value("Worst", worst, k)?;
        if best == worst {
            return Err(BwsParseError::Tie(best));
        }
        return Ok(BwsAnswer { best, worst });
    }
    Err(if saw_json {
        BwsParseError::MissingKeys
    } else {
        BwsParseError::NoJson
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no class label found in response")]
pub struct ZeroShotParseError;

fn class_token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        // Longer names first so "Common to Rare" beats "Common" at the same offset.
        Regex::new(
            r"(?i)\b(common to rare|very rare|abundant|common|rare|absent|extinct)\b|(-?\b\d+\b)",
        )
        .expect("valid regex")
    })
}

/// Finds the class named by a free-text response. The last class token wins.
pub fn parse_zero_shot_response(raw: &str) -> Result<FrequencyClass, ZeroShotParseError> {
    class_token_regex()
        .captures_iter(raw)
        .filter_map(|cap| {
            if let Some(name) = cap.get(1) {
                FrequencyClass::from_name(name.as_str())
            } else {
                cap.get(2)
                    .and_then(|n| n.as_str().parse::<i64>().ok())
                    .and_then(FrequencyClass::from_code)
            }
        })
        .last()
        .ok_or(ZeroShotParseError)
}
