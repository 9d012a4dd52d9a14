//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use mmtrace::core::trace::{AttentionTrace, Metadata, RoleMap, TokenRole, TraceShape};
use mmtrace::format::{decode_trace_unchecked, encode_trace};
use mmtrace::core::trace::validate_trace;
use rand::Rng;
use serde_json::Value;

pub fn mmtrace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmtrace")).args(args).output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn write_fixture(name: &str, path: &Path) {
    let o = mmtrace(&["fixture", name, "--out", path.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
}

/// Random valid trace: odd shapes, all roles, nested metadata, and payload
/// values including zero, subnormals and large magnitudes.
pub fn random_trace<R: Rng>(rng: &mut R) -> AttentionTrace {
    let shape = TraceShape {
        steps: rng.random_range(1..5),
        layers: rng.random_range(1..7),
        heads: rng.random_range(1..4),
        input_len: rng.random_range(2..40),
    };
    let roles: RoleMap = (0..shape.input_len)
        .map(|_| [TokenRole::Text, TokenRole::NonText, TokenRole::Special][rng.random_range(0..3)])
        .collect();
    let payload = (0..shape.element_count().unwrap())
        .map(|_| match rng.random_range(0..10) {
            0 => 0.0,
            1 => f32::from_bits(rng.random_range(1..0x0080_0000)),
            2 => rng.random::<f32>() * 1e30,
            _ => rng.random::<f32>(),
        })
        .collect();
    let mut metadata = Metadata::new();
    metadata.insert("seed".into(), Value::from(rng.random::<u32>()));
    metadata.insert("ratio".into(), Value::from(rng.random::<f64>()));
    metadata.insert("note".into(), Value::from("\"quoted\" \u{e9} \n"));
    metadata.insert("nested".into(), serde_json::json!({"a": [1, 2.5, null, true]}));
    AttentionTrace::new(shape, roles, metadata, payload).unwrap()
}

/// One corruption of a serialised trace.
pub struct Corruption {
    pub name: &'static str,
    pub apply: fn(&[u8]) -> Vec<u8>,
}

fn header_len(b: &[u8]) -> usize {
    u64::from_le_bytes(b[8..16].try_into().unwrap()) as usize
}

fn with_header(b: &[u8], edit: impl Fn(&mut Value)) -> Vec<u8> {
    let hl = header_len(b);
    let mut h: Value = serde_json::from_slice(&b[16..16 + hl]).unwrap();
    edit(&mut h);
    let h = serde_json::to_vec(&h).unwrap();
    let mut out = b[..8].to_vec();
    out.extend_from_slice(&(h.len() as u64).to_le_bytes());
    out.extend_from_slice(&h);
    out.extend_from_slice(&b[16 + hl..]);
    out
}

fn set_payload(b: &[u8], index: usize, v: f32) -> Vec<u8> {
    let off = 16 + header_len(b) + 4 * index;
    let mut out = b.to_vec();
    out[off..off + 4].copy_from_slice(&v.to_le_bytes());
    out
}

/// Every corruption class the validator must catch.
pub const CORRUPTIONS: &[Corruption] = &[
    Corruption { name: "wrong magic", apply: |b| { let mut o = b.to_vec(); o[..4].copy_from_slice(b"XXXX"); o } },
    Corruption { name: "magic byte flipped", apply: |b| { let mut o = b.to_vec(); o[2] ^= 0x01; o } },
    Corruption { name: "unknown version", apply: |b| { let mut o = b.to_vec(); o[4] = 2; o } },
    Corruption { name: "empty file", apply: |_| Vec::new() },
    Corruption { name: "cut inside preamble", apply: |b| b[..11].to_vec() },
    Corruption { name: "header length too large", apply: |b| { let mut o = b.to_vec(); o[8..16].copy_from_slice(&u64::MAX.to_le_bytes()); o } },
    Corruption { name: "header length off by one", apply: |b| { let mut o = b.to_vec(); let n = header_len(b) as u64 - 1; o[8..16].copy_from_slice(&n.to_le_bytes()); o } },
    Corruption { name: "header not JSON", apply: |b| { let mut o = b.to_vec(); o[16] = b'!'; o } },
    Corruption { name: "header missing key", apply: |b| with_header(b, |h| { h.as_object_mut().unwrap().remove("steps"); }) },
    Corruption { name: "header unknown key", apply: |b| with_header(b, |h| { h["extra"] = Value::from(1); }) },
    Corruption { name: "unknown role", apply: |b| with_header(b, |h| { h["roles"][0] = Value::from("audio"); }) },
    Corruption { name: "roles shorter than input_len", apply: |b| with_header(b, |h| { h["roles"].as_array_mut().unwrap().pop(); }) },
    Corruption { name: "input_len larger than payload", apply: |b| with_header(b, |h| { h["input_len"] = Value::from(h["input_len"].as_u64().unwrap() + 1); }) },
    Corruption { name: "zero layers", apply: |b| with_header(b, |h| { h["layers"] = Value::from(0); }) },
    Corruption { name: "payload truncated by one byte", apply: |b| b[..b.len() - 1].to_vec() },
    Corruption { name: "payload missing", apply: |b| b[..16 + header_len(b)].to_vec() },
    Corruption { name: "trailing byte", apply: |b| { let mut o = b.to_vec(); o.push(0); o } },
    Corruption { name: "NaN in payload", apply: |b| set_payload(b, 3, f32::NAN) },
    Corruption { name: "infinity in payload", apply: |b| set_payload(b, 0, f32::INFINITY) },
    Corruption { name: "negative payload value", apply: |b| set_payload(b, 1, -0.25) },
];

/// Whether the bytes are rejected by the reader or flagged by the
/// validator.
pub fn detected(bytes: &[u8]) -> bool {
    match decode_trace_unchecked(bytes) {
        Err(_) => true,
        Ok(t) => !validate_trace(&t).is_empty(),
    }
}

/// A valid, metric-eligible trace to corrupt: 2 steps, 2 layers, 2 heads,
/// 5 positions.
pub fn corruption_base() -> Vec<u8> {
    let shape = TraceShape { steps: 2, layers: 2, heads: 2, input_len: 5 };
    let roles = RoleMap::new(vec![
        TokenRole::Special,
        TokenRole::Text,
        TokenRole::Text,
        TokenRole::NonText,
        TokenRole::NonText,
    ]);
    let payload = vec![0.2; shape.element_count().unwrap()];
    encode_trace(&AttentionTrace::new(shape, roles, Metadata::new(), payload).unwrap()).unwrap()
}
