use std::path::{Path, PathBuf};

use imp_core::Error;
use serde_json::{json, Map, Value};

/// Parses `HxW` (also accepts `H,W`).
pub fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X', ','])
        .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let h: usize = h.trim().parse().map_err(|e| format!("bad height {h:?}: {e}"))?;
    let w: usize = w.trim().parse().map_err(|e| format!("bad width {w:?}: {e}"))?;
    if h == 0 || w == 0 {
        return Err(format!("dimensions must be positive, got {h}x{w}"));
    }
    Ok((h, w))
}

pub fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{s:?}: {e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be a positive finite number, got {s}"))
    }
}

pub fn error_json(e: &Error) -> Value {
    let mut body = Map::new();
    body.insert("kind".into(), json!(e.kind()));
    body.insert("message".into(), json!(e.to_string()));
    match e {
        Error::Parse { source_name, line, column, offset, .. } => {
            body.insert("source".into(), json!(source_name));
            body.insert("line".into(), json!(line));
            body.insert("column".into(), json!(column));
            body.insert("offset".into(), json!(offset));
        }
        Error::Validation { record, source } => {
            body.insert("record".into(), json!(record));
            body.insert("cause".into(), json!(source.kind()));
        }
        Error::MissingPair(name) => {
            body.insert("file".into(), json!(name));
        }
        _ => {}
    }
    json!({ "error": body })
}

pub fn report_error(e: &Error) {
    eprintln!("{}", error_json(e));
}

pub fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

pub fn create_dir(path: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(path).map_err(|e| io_error(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn to_pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report is serializable");
    s.push('\n');
    s
}

/// `(stem, path)` of every `.png` in `dir`, sorted by stem.
pub fn list_pngs(dir: &Path) -> Result<Vec<(String, PathBuf)>, Error> {
    let entries = std::fs::read_dir(dir).map_err(|e| io_error(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_error(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Rejects image ids that would escape the output directory.
pub fn file_stem_for(id: &str) -> Result<&str, Error> {
    let bad = id.is_empty()
        || id == "."
        || id == ".."
        || id.contains(['/', '\\', '\0']);
    if bad {
        Err(Error::InvalidArgument(format!("image id {id:?} cannot be used as a file name")))
    } else {
        Ok(id)
    }
}
