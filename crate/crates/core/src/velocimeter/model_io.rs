//! Binary model container.
//!
//! ```text
//! magic    4 bytes  "WTVM"
//! version  u32 LE
//! desc     4 × u32 LE  input, hidden, layers, output
//! meta_len u32 LE, then meta_len bytes of UTF-8 JSON metadata
//! n_params u64 LE, then n_params × f32 LE
//! sha256   32 bytes over every preceding byte
//! ```

use sha2::{Digest, Sha256};

use super::gru::{ArchitectureDescriptor, GruNetwork};
use super::{LearnedVelocimeter, ModelMetadata, VelocimeterError};

pub const MODEL_MAGIC: &[u8; 4] = b"WTVM";
pub const MODEL_VERSION: u32 = 1;

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn parameter_bytes(net: &GruNetwork) -> Vec<u8> {
    net.parameters()
        .into_iter()
        .flat_map(|p| p.iter().flat_map(|v| v.to_le_bytes()))
        .collect()
}

pub(crate) fn parameter_checksum(net: &GruNetwork) -> String {
    hex(&Sha256::digest(parameter_bytes(net)))
}

pub fn save_model(model: &LearnedVelocimeter) -> Vec<u8> {
    let d = model.network.descriptor;
    let meta = serde_json::to_vec(&model.metadata).expect("metadata serializes");
    let params = parameter_bytes(&model.network);
    let mut out = Vec::with_capacity(64 + meta.len() + params.len());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    for v in [d.input_width, d.hidden_width, d.layers, d.output_width] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&((params.len() / 4) as u64).to_le_bytes());
    out.extend_from_slice(&params);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], VelocimeterError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| VelocimeterError::CorruptModel(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, VelocimeterError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, VelocimeterError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Parses a model file. With `expected` set, a differing descriptor is an
/// [`VelocimeterError::ArchitectureMismatch`].
pub fn load_model(
    bytes: &[u8],
    expected: Option<ArchitectureDescriptor>,
) -> Result<LearnedVelocimeter, VelocimeterError> {
    let corrupt = |m: &str| VelocimeterError::CorruptModel(m.to_string());
    if bytes.len() < 32 {
        return Err(corrupt("file shorter than its checksum"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(4)? != MODEL_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(VelocimeterError::CorruptModel(format!("unsupported version {version}")));
    }
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch"));
    }
    let found = ArchitectureDescriptor {
        input_width: r.u32()? as usize,
        hidden_width: r.u32()? as usize,
        layers: r.u32()? as usize,
        output_width: r.u32()? as usize,
    };
    if found.input_width != super::INPUT_WIDTH || found.output_width != super::OUTPUT_WIDTH {
        return Err(VelocimeterError::CorruptModel(format!("unsupported io widths {found:?}")));
    }
    if let Some(expected) = expected {
        if expected != found {
            return Err(VelocimeterError::ArchitectureMismatch { found, expected });
        }
    }
    let meta_len = r.u32()? as usize;
    let metadata: ModelMetadata = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| VelocimeterError::CorruptModel(format!("metadata: {e}")))?;
    let n = r.u64()? as usize;
    if n != found.parameter_count() {
        return Err(VelocimeterError::CorruptModel(format!(
            "{n} parameters for a descriptor needing {}",
            found.parameter_count()
        )));
    }
    let blob = r.take(n.checked_mul(4).ok_or_else(|| corrupt("parameter count overflow"))?)?;
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes"));
    }
    let mut network = GruNetwork::zeros(found);
    let mut chunks = blob.chunks_exact(4);
    for p in network.parameters_mut() {
        for (v, c) in p.iter_mut().zip(&mut chunks) {
            *v = f32::from_le_bytes(c.try_into().expect("4 bytes"));
        }
    }
    Ok(LearnedVelocimeter { network, metadata })
}
