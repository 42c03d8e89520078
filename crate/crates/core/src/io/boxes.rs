//! Box files: one `cx cy cz l w h yaw` line per box, `#` comments allowed.

use std::path::Path;

use crate::error::{Error, Result};
use crate::types::Box3D;

pub fn parse_boxes(text: &str) -> Result<Vec<Box3D>> {
    let mut boxes = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(format!("box line {}: {e}", lineno + 1)))?;
        if vals.len() != 7 {
            return Err(Error::format(format!(
                "box line {}: expected 7 values, got {}",
                lineno + 1,
                vals.len()
            )));
        }
        let b = Box3D::new([vals[0], vals[1], vals[2]], [vals[3], vals[4], vals[5]], vals[6])
            .map_err(|e| Error::format(format!("box line {}: {e}", lineno + 1)))?;
        boxes.push(b);
    }
    Ok(boxes)
}

/// Shortest round-trip decimal form, so parsing the output is lossless.
pub fn format_boxes(boxes: &[Box3D]) -> String {
    let mut out = String::new();
    for b in boxes {
        let [cx, cy, cz] = b.center();
        let [l, w, h] = b.size();
        out.push_str(&format!("{cx} {cy} {cz} {l} {w} {h} {}\n", b.yaw()));
    }
    out
}

pub fn read_boxes(path: impl AsRef<Path>) -> Result<Vec<Box3D>> {
    parse_boxes(&std::fs::read_to_string(path)?)
}

pub fn write_boxes(path: impl AsRef<Path>, boxes: &[Box3D]) -> Result<()> {
    std::fs::write(path, format_boxes(boxes))?;
    Ok(())
}
