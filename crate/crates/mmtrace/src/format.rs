//! MMTR trace files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "MMTR" | version: u32 = 1 | header_len: u64 | header: UTF-8 JSON | payload: f32 x S*L*H*P
//! ```
//!
//! The header has exactly the keys `layers`, `heads`, `input_len`, `steps`,
//! `roles` and `metadata`. The payload is `[step][layer][head][position]`.
//! Nothing follows the payload.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use mmtrace_core::trace::{validate_trace, AttentionTrace, Metadata, RoleMap, TokenRole, TraceShape};
use serde::{Deserialize, Serialize};

/// File signature.
pub const MAGIC: [u8; 4] = *b"MMTR";
/// The only format version this crate reads or writes.
pub const VERSION: u32 = 1;

const PREAMBLE: usize = 4 + 4 + 8;

/// Failure to read or write an MMTR file.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    /// The byte source or sink failed.
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    /// The file does not start with `MMTR`.
    #[error("format error: bad magic {0:?}, expected \"MMTR\"")]
    BadMagic([u8; 4]),
    /// Unknown format version.
    #[error("format error: unsupported version {0}, expected {VERSION}")]
    UnsupportedVersion(u32),
    /// A section is shorter than declared.
    #[error("format error: truncated {section}: expected {expected} bytes, found {actual}")]
    Truncated {
        /// Which section ran out.
        section: &'static str,
        /// Bytes the section needs.
        expected: u64,
        /// Bytes available.
        actual: u64,
    },
    /// Bytes remain after the payload.
    #[error("format error: {extra} trailing bytes after the {expected}-byte payload")]
    TrailingBytes {
        /// Declared payload size.
        expected: u64,
        /// Bytes beyond it.
        extra: u64,
    },
    /// The header is not valid UTF-8 JSON of the expected shape.
    #[error("format error: bad header: {0}")]
    Header(String),
    /// The decoded trace breaks a structural invariant.
    #[error("validation error: {0}")]
    Validation(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    layers: usize,
    heads: usize,
    input_len: usize,
    steps: usize,
    roles: Vec<TokenRole>,
    metadata: Metadata,
}

fn check_structure(trace: &AttentionTrace) -> Result<(), FormatError> {
    match validate_trace(trace).into_iter().find(|v| v.kind.is_structural()) {
        Some(v) => Err(FormatError::Validation(v.message)),
        None => Ok(()),
    }
}

/// Serialises a trace. Fails without output if the trace is structurally
/// invalid.
pub fn encode_trace(trace: &AttentionTrace) -> Result<Vec<u8>, FormatError> {
    check_structure(trace)?;
    let shape = trace.shape();
    let header = Header {
        layers: shape.layers,
        heads: shape.heads,
        input_len: shape.input_len,
        steps: shape.steps,
        roles: trace.role_map().roles().to_vec(),
        metadata: trace.metadata().clone(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| FormatError::Header(e.to_string()))?;
    let mut out = Vec::with_capacity(PREAMBLE + header.len() + 4 * trace.payload().len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for v in trace.payload() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Writes a trace and returns the number of bytes written.
pub fn write_trace<W: Write>(trace: &AttentionTrace, mut sink: W) -> Result<u64, FormatError> {
    let bytes = encode_trace(trace)?;
    sink.write_all(&bytes)?;
    Ok(bytes.len() as u64)
}

fn take<'a>(bytes: &mut &'a [u8], n: u64, section: &'static str) -> Result<&'a [u8], FormatError> {
    let available = bytes.len() as u64;
    if available < n {
        return Err(FormatError::Truncated { section, expected: n, actual: available });
    }
    let (head, tail) = bytes.split_at(n as usize);
    *bytes = tail;
    Ok(head)
}

/// Parses the byte layout without checking trace invariants, so callers
/// can list every violation of a damaged but well-framed file.
pub fn decode_trace_unchecked(mut bytes: &[u8]) -> Result<AttentionTrace, FormatError> {
    let magic = take(&mut bytes, 4, "magic")?;
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic.try_into().expect("4 bytes")));
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4, "version")?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let header_len = u64::from_le_bytes(take(&mut bytes, 8, "header length")?.try_into().expect("8 bytes"));
    let header = take(&mut bytes, header_len, "header")?;
    let header: Header = serde_json::from_slice(header).map_err(|e| FormatError::Header(e.to_string()))?;

    let shape = TraceShape {
        steps: header.steps,
        layers: header.layers,
        heads: header.heads,
        input_len: header.input_len,
    };
    let expected = shape
        .element_count()
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| FormatError::Header(format!("shape {shape:?} overflows")))? as u64;
    let payload = take(&mut bytes, expected, "payload")?;
    if !bytes.is_empty() {
        return Err(FormatError::TrailingBytes { expected, extra: bytes.len() as u64 });
    }
    let payload = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(AttentionTrace::new_unchecked(shape, RoleMap::new(header.roles), header.metadata, payload))
}

/// Parses a trace and rejects structural invariant violations.
pub fn decode_trace(bytes: &[u8]) -> Result<AttentionTrace, FormatError> {
    let trace = decode_trace_unchecked(bytes)?;
    check_structure(&trace)?;
    Ok(trace)
}

/// Reads a whole stream as one trace.
pub fn read_trace<R: Read>(mut source: R) -> Result<AttentionTrace, FormatError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    decode_trace(&bytes)
}

/// Reads a trace file, returning the trace and the exact bytes read.
pub fn read_trace_file(path: &Path) -> Result<(AttentionTrace, Vec<u8>), FormatError> {
    let bytes = fs::read(path)?;
    Ok((decode_trace(&bytes)?, bytes))
}

/// Writes a trace file, returning the bytes written.
pub fn write_trace_file(trace: &AttentionTrace, path: &Path) -> Result<Vec<u8>, FormatError> {
    let bytes = encode_trace(trace)?;
    fs::write(path, &bytes)?;
    Ok(bytes)
}
