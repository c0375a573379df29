//! Binary and CSV trace containers.
//!
//! Binary layout, all integers little-endian:
//!
//! | field       | type              |
//! |-------------|-------------------|
//! | magic       | `b"PSTR"`         |
//! | version     | u16 (= 1)         |
//! | name length | u16               |
//! | layer name  | UTF-8 bytes       |
//! | window len  | u32 (`K_x·K_y`)   |
//! | streams     | u32 (`M`)         |
//! | length      | u64 (`T`)         |
//! | masks       | `M·T` packed masks, stream-major |
//!
//! Each mask takes `ceil(K_x·K_y / 8)` bytes, element `i` at byte `i / 8`,
//! bit `i % 8`; padding bits must be zero.
//!
//! The CSV form has a `stream,t,mask` header and one row per window with the
//! mask as a `0`/`1` string. The layer name is the file stem.

use std::fs;
use std::path::Path;

use super::{SparsityTrace, WindowPattern};
use crate::error::{Error, Result};

pub const TRACE_MAGIC: &[u8; 4] = b"PSTR";
pub const TRACE_VERSION: u16 = 1;

pub fn encode_trace_binary(trace: &SparsityTrace) -> Vec<u8> {
    let name = trace.layer().as_bytes();
    let mask_bytes = trace.window_len().div_ceil(8);
    let mut out =
        Vec::with_capacity(24 + name.len() + trace.num_streams() * trace.len() * mask_bytes);
    out.extend_from_slice(TRACE_MAGIC);
    out.extend_from_slice(&TRACE_VERSION.to_le_bytes());
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name);
    out.extend_from_slice(&(trace.window_len() as u32).to_le_bytes());
    out.extend_from_slice(&(trace.num_streams() as u32).to_le_bytes());
    out.extend_from_slice(&(trace.len() as u64).to_le_bytes());
    for stream in trace.streams() {
        for p in stream {
            p.write_packed(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            )),
        }
    }

    fn u16(&mut self, what: &str) -> std::result::Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Decodes a binary trace. `origin` is only used in error messages.
pub fn decode_trace_binary(bytes: &[u8], origin: &Path) -> Result<SparsityTrace> {
    let corrupt = |message: String| Error::CorruptTrace {
        path: origin.to_path_buf(),
        message,
    };
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic").map_err(corrupt)? != TRACE_MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let version = r.u16("version").map_err(corrupt)?;
    if version != TRACE_VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let name_len = usize::from(r.u16("name length").map_err(corrupt)?);
    let name = std::str::from_utf8(r.take(name_len, "layer name").map_err(corrupt)?)
        .map_err(|e| corrupt(format!("layer name is not UTF-8: {e}")))?
        .to_owned();
    let window_len = r.u32("window length").map_err(corrupt)? as usize;
    let streams = r.u32("stream count").map_err(corrupt)? as usize;
    let length = r.u64("trace length").map_err(corrupt)? as usize;
    if window_len == 0 || window_len > usize::from(u16::MAX) || streams == 0 || length == 0 {
        return Err(corrupt(format!(
            "invalid header: window {window_len}, streams {streams}, length {length}"
        )));
    }
    let mask_bytes = window_len.div_ceil(8);
    let expected = streams
        .checked_mul(length)
        .and_then(|n| n.checked_mul(mask_bytes))
        .ok_or_else(|| corrupt("header sizes overflow".into()))?;
    if bytes.len() - r.pos != expected {
        return Err(corrupt(format!(
            "expected {expected} bytes of masks, found {}",
            bytes.len() - r.pos
        )));
    }
    let mut data = Vec::with_capacity(streams);
    for m in 0..streams {
        let mut s = Vec::with_capacity(length);
        for t in 0..length {
            let chunk = r.take(mask_bytes, "mask").map_err(corrupt)?;
            let p = WindowPattern::read_packed(chunk, window_len)
                .ok_or_else(|| corrupt(format!("padding bits set in stream {m} window {t}")))?;
            s.push(p);
        }
        data.push(s);
    }
    SparsityTrace::new(name, window_len, data)
}

pub fn write_trace_binary(trace: &SparsityTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_trace_binary(trace)).map_err(|e| Error::io(path, e))
}

pub fn read_trace_binary(path: impl AsRef<Path>) -> Result<SparsityTrace> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_trace_binary(&bytes, path)
}

pub fn trace_to_csv(trace: &SparsityTrace) -> String {
    let mut out = String::from("stream,t,mask\n");
    for (m, stream) in trace.streams().iter().enumerate() {
        for (t, p) in stream.iter().enumerate() {
            out.push_str(&format!("{m},{t},{}\n", p.to_mask_string()));
        }
    }
    out
}

/// Parses the CSV form. Rows may come in any order but must cover every
/// `(stream, t)` exactly once.
pub fn trace_from_csv(text: &str, layer: &str, origin: &Path) -> Result<SparsityTrace> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        column: 1,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.trim().replace(' ', "") == "stream,t,mask" => {}
        Some((i, header)) => {
            return Err(parse_err(
                i + 1,
                format!("expected header 'stream,t,mask', got {header:?}"),
            ))
        }
        None => return Err(parse_err(1, "empty trace file".into())),
    }
    let mut rows: Vec<(usize, usize, WindowPattern)> = Vec::new();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse_err(
                i + 1,
                format!("expected 3 fields, got {}", fields.len()),
            ));
        }
        let m = fields[0]
            .parse()
            .map_err(|e| parse_err(i + 1, format!("stream: {e}")))?;
        let t = fields[1]
            .parse()
            .map_err(|e| parse_err(i + 1, format!("t: {e}")))?;
        let p =
            WindowPattern::from_mask_str(fields[2]).map_err(|e| parse_err(i + 1, e.to_string()))?;
        rows.push((m, t, p));
    }
    if rows.is_empty() {
        return Err(parse_err(2, "trace has no windows".into()));
    }
    let window_len = rows[0].2.len();
    let streams = rows.iter().map(|r| r.0).max().unwrap() + 1;
    let length = rows.iter().map(|r| r.1).max().unwrap() + 1;
    if rows.len() != streams * length {
        return Err(parse_err(
            1,
            format!(
                "expected {} rows for {streams} streams × {length} windows, got {}",
                streams * length,
                rows.len()
            ),
        ));
    }
    let mut slots: Vec<Vec<Option<WindowPattern>>> = vec![vec![None; length]; streams];
    for (m, t, p) in rows {
        if slots[m][t].replace(p).is_some() {
            return Err(parse_err(1, format!("duplicate row for stream {m}, t {t}")));
        }
    }
    let data = slots
        .into_iter()
        .map(|s| {
            s.into_iter()
                .map(|p| p.expect("all slots filled"))
                .collect()
        })
        .collect();
    SparsityTrace::new(layer, window_len, data)
}

pub fn write_trace_csv(trace: &SparsityTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, trace_to_csv(trace)).map_err(|e| Error::io(path, e))
}

pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<SparsityTrace> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let layer = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    trace_from_csv(&text, layer, path)
}

/// Loads either format: `.csv` files as CSV, anything else as binary.
pub fn load_trace(path: impl AsRef<Path>) -> Result<SparsityTrace> {
    let path = path.as_ref();
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        read_trace_csv(path)
    } else {
        read_trace_binary(path)
    }
}
