use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::control::ControllerConfig;
use crate::error::{Error, Result};
use crate::evaluation::Candidate;
use crate::rules::Torq;
use crate::scenario::Scenario;

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    out
}

/// Parses JSON, reporting the failing field as a JSON pointer.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let p = pointer(e.path());
        Error::validation(p, e.into_inner().to_string())
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let s: Scenario = parse_json(text)?;
    s.validate()?;
    Ok(s)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario(&read(path)?)
}

pub fn parse_torq(text: &str) -> Result<Torq> {
    let t: Torq = parse_json(text)?;
    t.validate()?;
    Ok(t)
}

pub fn load_torq(path: &Path) -> Result<Torq> {
    parse_torq(&read(path)?)
}

pub fn parse_config(text: &str) -> Result<ControllerConfig> {
    let c: ControllerConfig = parse_json(text)?;
    c.validate()?;
    Ok(c)
}

pub fn load_config(path: &Path) -> Result<ControllerConfig> {
    parse_config(&read(path)?)
}

pub fn load_candidate(path: &Path) -> Result<Candidate> {
    let c: Candidate = parse_json(&read(path)?)?;
    c.validate()?;
    Ok(c)
}

/// Pretty JSON in declaration field order, which is the canonical form.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = canonical_json(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Hash of the canonical JSON form.
pub fn sha256_hex<T: Serialize>(value: &T) -> Result<String> {
    let text = serde_json::to_string(value).map_err(|e| Error::Io(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}
