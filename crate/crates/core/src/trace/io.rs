use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DemoTrace, Frame};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub task_name: String,
    pub dt: f64,
    pub schema_version: u32,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty trace file")]
    Empty,
    #[error("unsupported schema version {0}")]
    Version(u32),
    #[error("serialization failed: {0}")]
    Serialize(String),
}

pub fn to_jsonl(trace: &DemoTrace) -> Result<String, TraceError> {
    let header = TraceHeader { task_name: trace.task_name.clone(), dt: trace.dt, schema_version: SCHEMA_VERSION };
    let mut out = serde_json::to_string(&header).map_err(|e| TraceError::Serialize(e.to_string()))?;
    out.push('\n');
    for f in &trace.frames {
        out.push_str(&serde_json::to_string(f).map_err(|e| TraceError::Serialize(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses JSON Lines text. Line numbers in errors are 1-based.
pub fn parse_jsonl(text: &str) -> Result<DemoTrace, TraceError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hl, first) = lines.next().ok_or(TraceError::Empty)?;
    let header: TraceHeader =
        serde_json::from_str(first).map_err(|e| TraceError::Parse { line: hl + 1, message: e.to_string() })?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(TraceError::Version(header.schema_version));
    }
    let mut frames = Vec::new();
    for (i, line) in lines {
        let f: Frame =
            serde_json::from_str(line).map_err(|e| TraceError::Parse { line: i + 1, message: e.to_string() })?;
        frames.push(f);
    }
    Ok(DemoTrace { task_name: header.task_name, dt: header.dt, frames })
}

pub fn save(trace: &DemoTrace, path: impl AsRef<Path>) -> Result<(), TraceError> {
    fs::write(path, to_jsonl(trace)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<DemoTrace, TraceError> {
    parse_jsonl(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{"task_name":"x","dt":0.1,"schema_version":1}
{"index":0,"t":0.0,"entities":[{"id":1,"kind":"robot","x":0.1,"y":0.2,"theta":0.0,"shape":{"type":"circle","radius":0.025},"color":"black"}]}
{"index":1,"t":0.1,"entities":[{"id":1,"kind":"robot","x":0.11,"y":0.2,"theta":0.0,"shape":{"type":"circle","radius":0.025},"color":"black"}]}
"#;

    #[test]
    fn parses_and_round_trips() {
        let t = parse_jsonl(GOOD).unwrap();
        assert_eq!(t.frames.len(), 2);
        assert_eq!(parse_jsonl(&to_jsonl(&t).unwrap()).unwrap(), t);
    }

    #[test]
    fn truncated_line_reports_line_number() {
        let cut = &GOOD[..GOOD.len() - 40];
        match parse_jsonl(cut) {
            Err(TraceError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_shape_tag_is_named() {
        let bad = GOOD.replace(r#""type":"circle","radius":0.025},"color":"black"}]}
{"index":1"#, r#""type":"hexagon","radius":0.025},"color":"black"}]}
{"index":1"#);
        let err = parse_jsonl(&bad).unwrap_err().to_string();
        assert!(err.contains("hexagon"), "{err}");
        assert!(err.starts_with("line 2"), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        let bad = GOOD.replace(r#""dt":0.1,"#, r#""dt":0.1,"fps":10,"#);
        assert!(matches!(parse_jsonl(&bad), Err(TraceError::Parse { line: 1, .. })));
    }

    #[test]
    fn empty_input() {
        assert!(matches!(parse_jsonl("\n"), Err(TraceError::Empty)));
    }
}
