//! Canonical score format: a JSON document with the shape
//!
//! ```json
//! {
//!   "title": "…",
//!   "key": { "tonic_pc": 0, "mode": "major" },
//!   "resolution": "1/4",
//!   "voices": [ [ [onset, duration, pitch, velocity], … ], … ]
//! }
//! ```
//!
//! Beat quantities are exact rationals: integers appear as JSON numbers,
//! everything else as a reduced `"n/d"` string. Floats are accepted on input
//! and converted exactly (they are binary rationals), so `0.25` means 1/4.

use num_rational::Ratio;
use serde_json::Value;

use super::{beats, Beats, KeyLabel, Mode, Note, Score, Voice};
use crate::Warning;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

fn err(path: impl Into<String>, message: impl Into<String>) -> SchemaError {
    SchemaError {
        path: path.into(),
        message: message.into(),
    }
}

/// Exact conversion; fails for non-finite values and for rationals whose
/// reduced numerator or denominator does not fit in i64.
fn ratio_from_f64(x: f64) -> Option<Beats> {
    if !x.is_finite() {
        return None;
    }
    if x == 0.0 {
        return Some(Beats::from_integer(0));
    }
    let bits = x.to_bits();
    let negative = bits >> 63 == 1;
    let biased = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mut mant, mut exp) = if biased == 0 {
        (frac as i128, -1074i64)
    } else {
        ((frac | (1 << 52)) as i128, biased - 1075)
    };
    while mant % 2 == 0 {
        mant /= 2;
        exp += 1;
    }
    if negative {
        mant = -mant;
    }
    if exp >= 0 {
        if exp > 62 {
            return None;
        }
        let v = mant << exp;
        i64::try_from(v).ok().map(Beats::from_integer)
    } else {
        if exp < -62 {
            return None;
        }
        let den = 1i64 << (-exp);
        i64::try_from(mant).ok().map(|n| Ratio::new(n, den))
    }
}

fn parse_beats(v: &Value, path: &str) -> Result<Beats, SchemaError> {
    match v {
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(Beats::from_integer(i))
            } else if let Some(f) = n.as_f64() {
                ratio_from_f64(f).ok_or_else(|| err(path, "number is not an exact beat fraction"))
            } else {
                Err(err(path, "number out of range"))
            }
        }
        Value::String(s) => {
            let parts: Vec<&str> = s.split('/').collect();
            let parse_int = |t: &str| -> Result<i64, SchemaError> {
                t.trim()
                    .parse::<i64>()
                    .map_err(|_| err(path, format!("bad rational component {t:?}")))
            };
            match parts.as_slice() {
                [n] => Ok(Beats::from_integer(parse_int(n)?)),
                [n, d] => {
                    let den = parse_int(d)?;
                    if den == 0 {
                        return Err(err(path, "zero denominator"));
                    }
                    Ok(Ratio::new(parse_int(n)?, den))
                }
                _ => Err(err(path, format!("bad rational {s:?}"))),
            }
        }
        _ => Err(err(path, "expected a number or \"n/d\" string")),
    }
}

fn parse_u8(v: &Value, path: &str, max: u8) -> Result<u8, SchemaError> {
    let n = v
        .as_i64()
        .ok_or_else(|| err(path, "expected an integer"))?;
    if n < 0 || n > max as i64 {
        return Err(err(path, format!("{n} outside 0..={max}")));
    }
    Ok(n as u8)
}

fn parse_key(v: &Value) -> Result<KeyLabel, SchemaError> {
    let obj = v
        .as_object()
        .ok_or_else(|| err("key", "expected an object"))?;
    for field in obj.keys() {
        if field != "tonic_pc" && field != "mode" {
            return Err(err(format!("key.{field}"), "unknown field"));
        }
    }
    let tonic = parse_u8(
        obj.get("tonic_pc")
            .ok_or_else(|| err("key.tonic_pc", "missing"))?,
        "key.tonic_pc",
        11,
    )?;
    let mode = match obj
        .get("mode")
        .and_then(Value::as_str)
        .ok_or_else(|| err("key.mode", "missing or not a string"))?
    {
        "major" => Mode::Major,
        "minor" => Mode::Minor,
        other => return Err(err("key.mode", format!("unknown mode {other:?}"))),
    };
    Ok(KeyLabel::new(tonic, mode))
}

/// Parses the canonical score format. A missing `key` defaults to C major
/// with a warning; unknown fields and out-of-range values are errors.
pub fn parse_score_json(text: &str) -> Result<(Score, Vec<Warning>), SchemaError> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| err("$", format!("invalid JSON: {e}")))?;
    let obj = root
        .as_object()
        .ok_or_else(|| err("$", "expected a JSON object"))?;
    for field in obj.keys() {
        if !matches!(field.as_str(), "title" | "key" | "resolution" | "voices") {
            return Err(err(field.clone(), "unknown field"));
        }
    }

    let mut warnings = Vec::new();

    let title = match obj.get("title") {
        None => String::new(),
        Some(v) => v
            .as_str()
            .ok_or_else(|| err("title", "expected a string"))?
            .to_string(),
    };

    let key = match obj.get("key") {
        Some(v) => parse_key(v)?,
        None => {
            warnings.push(Warning::MissingKey);
            KeyLabel::major(0)
        }
    };

    let resolution = match obj.get("resolution") {
        Some(v) => {
            let r = parse_beats(v, "resolution")?;
            if r <= Beats::from_integer(0) {
                return Err(err("resolution", "must be positive"));
            }
            r
        }
        None => beats(1, 4),
    };

    let voices_val = obj
        .get("voices")
        .ok_or_else(|| err("voices", "missing"))?
        .as_array()
        .ok_or_else(|| err("voices", "expected an array"))?;

    let mut voices = Vec::with_capacity(voices_val.len());
    for (vi, voice_val) in voices_val.iter().enumerate() {
        let notes_val = voice_val
            .as_array()
            .ok_or_else(|| err(format!("voices[{vi}]"), "expected an array of notes"))?;
        let mut notes = Vec::with_capacity(notes_val.len());
        let mut prev_onset = Beats::from_integer(-1);
        for (ni, note_val) in notes_val.iter().enumerate() {
            let path = format!("voices[{vi}][{ni}]");
            let tuple = note_val
                .as_array()
                .ok_or_else(|| err(&path, "expected [onset, duration, pitch, velocity]"))?;
            if tuple.len() != 4 {
                return Err(err(&path, format!("expected 4 elements, got {}", tuple.len())));
            }
            let onset = parse_beats(&tuple[0], &format!("{path}.onset"))?;
            let duration = parse_beats(&tuple[1], &format!("{path}.duration"))?;
            let pitch = parse_u8(&tuple[2], &format!("{path}.pitch"), 127)?;
            let velocity = parse_u8(&tuple[3], &format!("{path}.velocity"), 127)?;
            if onset < Beats::from_integer(0) {
                return Err(err(format!("{path}.onset"), "negative onset"));
            }
            if duration <= Beats::from_integer(0) {
                return Err(err(format!("{path}.duration"), "duration must be positive"));
            }
            if onset < prev_onset {
                return Err(err(format!("{path}.onset"), "notes out of onset order"));
            }
            prev_onset = onset;
            notes.push(Note {
                onset,
                duration,
                pitch,
                velocity,
            });
        }
        voices.push(Voice { notes });
    }

    Ok((
        Score {
            title,
            key,
            resolution,
            voices,
        },
        warnings,
    ))
}

fn beats_json(b: Beats) -> String {
    if b.is_integer() {
        b.numer().to_string()
    } else {
        format!("\"{}/{}\"", b.numer(), b.denom())
    }
}

/// Serializes to the canonical format; `parse_score_json` inverts this
/// exactly. One note per line keeps fixture diffs readable.
pub fn serialize_score(score: &Score) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str(&format!(
        "  \"title\": {},\n",
        Value::String(score.title.clone())
    ));
    out.push_str(&format!(
        "  \"key\": {{ \"tonic_pc\": {}, \"mode\": \"{}\" }},\n",
        score.key.tonic_pc, score.key.mode
    ));
    out.push_str(&format!(
        "  \"resolution\": {},\n",
        beats_json(score.resolution)
    ));
    out.push_str("  \"voices\": [\n");
    for (vi, voice) in score.voices.iter().enumerate() {
        out.push_str("    [\n");
        for (ni, n) in voice.notes.iter().enumerate() {
            out.push_str(&format!(
                "      [{}, {}, {}, {}]{}\n",
                beats_json(n.onset),
                beats_json(n.duration),
                n.pitch,
                n.velocity,
                if ni + 1 < voice.notes.len() { "," } else { "" }
            ));
        }
        out.push_str(&format!(
            "    ]{}\n",
            if vi + 1 < score.voices.len() { "," } else { "" }
        ));
    }
    out.push_str("  ]\n}\n");
    out
}
