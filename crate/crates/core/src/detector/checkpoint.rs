//! Model checkpoint: a text header followed by raw tensors.
//!
//! ```text
//! signsplit-detector 1
//! config {"input_dim":274,"hidden_size":64,...}
//! tensor lstm.w_ih 256 274
//! ...
//! end_header
//! ```
//!
//! After the `end_header` newline come the tensors in header order, each as
//! row-major little-endian f64.

use std::path::Path;

use super::{DetectorConfig, DetectorModel, Parameters, TENSOR_NAMES};
use crate::data::io::{read_bytes, write_atomic};
use crate::error::{Error, Result};

const MAGIC: &str = "signsplit-detector 1";
const END: &str = "end_header\n";

pub fn checkpoint_to_bytes(model: &DetectorModel) -> Result<Vec<u8>> {
    model.validate()?;
    let cfg = &model.config;
    let mut header = format!("{MAGIC}\n");
    header.push_str(&format!(
        "config {}\n",
        serde_json::to_string(cfg).expect("serializable config")
    ));
    for (name, [r, c]) in TENSOR_NAMES.iter().zip(Parameters::shapes(cfg.input_dim, cfg.hidden_size)) {
        header.push_str(&format!("tensor {name} {r} {c}\n"));
    }
    header.push_str(END);
    let mut out = header.into_bytes();
    out.reserve(8 * model.n_parameters());
    for v in model.params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn header_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<DetectorModel> {
    let end = bytes
        .windows(END.len())
        .position(|w| w == END.as_bytes())
        .ok_or_else(|| header_error(1, "missing end_header"))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|e| header_error(1, e.to_string()))?;
    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(header_error(1, format!("expected {MAGIC:?}")));
    }
    let cfg_json = lines
        .next()
        .and_then(|l| l.strip_prefix("config "))
        .ok_or_else(|| header_error(2, "expected config record"))?;
    let config: DetectorConfig =
        serde_json::from_str(cfg_json).map_err(|e| header_error(2, e.to_string()))?;
    config.validate()?;

    let shapes = Parameters::shapes(config.input_dim, config.hidden_size);
    let mut params = Parameters::zeros(config.input_dim, config.hidden_size);
    let mut blob = &bytes[end + END.len()..];
    for (k, ((name, shape), tensor)) in TENSOR_NAMES
        .iter()
        .zip(shapes)
        .zip(params.tensors_mut())
        .enumerate()
    {
        let line_no = k + 3;
        let expected = format!("tensor {name} {} {}", shape[0], shape[1]);
        match lines.next() {
            Some(l) if l == expected => {}
            other => {
                return Err(header_error(
                    line_no,
                    format!("expected {expected:?}, found {other:?}"),
                ))
            }
        }
        let n = tensor.len() * 8;
        if blob.len() < n {
            return Err(Error::DimensionMismatch {
                context: format!("{name} bytes"),
                expected: n,
                found: blob.len(),
            });
        }
        for (v, chunk) in tensor.iter_mut().zip(blob[..n].chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        blob = &blob[n..];
    }
    if let Some(extra) = lines.next() {
        return Err(header_error(8, format!("unexpected header line {extra:?}")));
    }
    if !blob.is_empty() {
        return Err(Error::DimensionMismatch {
            context: "trailing checkpoint bytes".into(),
            expected: 0,
            found: blob.len(),
        });
    }
    let model = DetectorModel { config, params };
    model.validate()?;
    Ok(model)
}

pub fn save_checkpoint(model: &DetectorModel, path: &Path) -> Result<()> {
    write_atomic(path, &checkpoint_to_bytes(model)?)
}

pub fn load_checkpoint(path: &Path) -> Result<DetectorModel> {
    parse_checkpoint(&read_bytes(path)?)
}
