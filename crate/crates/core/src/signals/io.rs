//! Window persistence: JSON `{start, values}` or a flat little-endian f64
//! file with a small JSON sidecar (`<file>.json`).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Window;
use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinHeader {
    pub start: i64,
    pub len: usize,
    pub dtype: String,
}

pub fn write_window_json(path: &Path, w: &Window) -> Result<()> {
    fs::write(path, serde_json::to_vec(w)?)?;
    Ok(())
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_window_bin(path: &Path, w: &Window) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for v in &w.values {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    let header = BinHeader {
        start: w.start,
        len: w.len(),
        dtype: "f64le".into(),
    };
    fs::write(sidecar(path), serde_json::to_vec_pretty(&header)?)?;
    Ok(())
}

pub fn read_window_bin(path: &Path) -> Result<Window> {
    let header: BinHeader = serde_json::from_slice(&fs::read(sidecar(path))?)?;
    if header.dtype != "f64le" {
        return Err(invalid(format!("unsupported dtype {}", header.dtype)));
    }
    let bytes = fs::read(path)?;
    if bytes.len() != 8 * header.len {
        return Err(invalid(format!(
            "binary window holds {} bytes, header promises {} samples",
            bytes.len(),
            header.len
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Window::new(header.start, values)
}

/// Reads a window, choosing the format from the extension (`.bin` or JSON).
pub fn read_window(path: &Path) -> Result<Window> {
    if path.extension().is_some_and(|e| e == "bin") {
        read_window_bin(path)
    } else {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("y.bin");
        let w = Window::new(-7, vec![1.5, -0.0, f64::MIN_POSITIVE, 3.25e300]).unwrap();
        write_window_bin(&p, &w).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 32);
        assert_eq!(read_window(&p).unwrap(), w);
    }

    #[test]
    fn json_window_rejects_empty() {
        assert!(serde_json::from_str::<Window>(r#"{"start":0,"values":[]}"#).is_err());
        let w: Window = serde_json::from_str(r#"{"start":2,"values":[1.0]}"#).unwrap();
        assert_eq!(w.start, 2);
    }
}
