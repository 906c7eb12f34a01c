//! Binary checkpoint format for flat parameter vectors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "ULEECKPT"
//! version  u32
//! arch     32 bytes SHA-256 of the parameter layout description
//! rng      32 bytes seed + 16 bytes word position
//! n_params u64
//! params   n_params * f32
//! ```
//!
//! Loading verifies the magic, version, architecture hash, and parameter
//! count before accepting the payload. Parameters are stored as f32; the
//! round-trip through a checkpoint is therefore lossy at the f32 level,
//! which is deterministic and identical across platforms.

use std::io::{Read as _, Write as _};
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Result, UleeError};
use crate::nn::{FlatParams, ParamLayout};

pub const MAGIC: &[u8; 8] = b"ULEECKPT";
pub const VERSION: u32 = 1;

/// SHA-256 over the canonical layout description plus an arch label.
pub fn arch_hash(layout: &ParamLayout, label: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    h.update(b"|");
    h.update(layout.arch_string().as_bytes());
    h.finalize().into()
}

/// RNG state captured alongside the parameters so a resumed run continues
/// the same stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

pub fn save(
    path: &Path,
    params: &FlatParams,
    arch_label: &str,
    rng: &RngState,
) -> Result<()> {
    let mut buf = Vec::with_capacity(8 + 4 + 32 + 48 + 8 + 4 * params.data.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&arch_hash(&params.layout, arch_label));
    buf.extend_from_slice(&rng.seed);
    buf.extend_from_slice(&rng.word_pos.to_le_bytes());
    buf.extend_from_slice(&(params.data.len() as u64).to_le_bytes());
    for &v in &params.data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Loads parameters into a fresh buffer over `layout`, verifying the
/// header against the expected architecture.
pub fn load(
    path: &Path,
    layout: std::sync::Arc<ParamLayout>,
    arch_label: &str,
) -> Result<(FlatParams, RngState)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let fail = |detail: &str| UleeError::Checkpoint(format!("{}: {detail}", path.display()));
    let header_len = 8 + 4 + 32 + 48 + 8;
    if bytes.len() < header_len {
        return Err(fail("file shorter than header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(fail("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(fail(&format!("unsupported version {version}")));
    }
    let expect = arch_hash(&layout, arch_label);
    if bytes[12..44] != expect {
        return Err(fail("architecture hash mismatch"));
    }
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&bytes[44..76]);
    let word_pos = u128::from_le_bytes(bytes[76..92].try_into().unwrap());
    let n = u64::from_le_bytes(bytes[92..100].try_into().unwrap()) as usize;
    if n != layout.total {
        return Err(fail(&format!(
            "parameter count {n} does not match layout ({})",
            layout.total
        )));
    }
    if bytes.len() != header_len + 4 * n {
        return Err(fail("truncated parameter payload"));
    }
    let mut params = FlatParams::zeros(layout);
    for (i, v) in params.data.iter_mut().enumerate() {
        let off = header_len + 4 * i;
        *v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
    }
    params.assert_finite("checkpoint load")?;
    Ok((params, RngState { seed, word_pos }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::KindTable;
    use crate::rng::stream;
    use crate::seqpolicy::{PolicyArch, SeqPolicy};

    fn tiny_policy() -> SeqPolicy {
        let kinds = KindTable::desk_default();
        SeqPolicy::new(PolicyArch::tiny(&kinds), kinds).unwrap()
    }

    #[test]
    fn round_trip_preserves_f32_values_and_rng() {
        let pol = tiny_policy();
        let mut rng = stream(21, "ckpt", 0);
        let p = pol.init_params(&mut rng);
        let _ = rand::Rng::gen::<u64>(&mut rng); // advance the stream
        let state = RngState::capture(&rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ckpt");
        save(&path, &p, "test", &state).unwrap();
        let (q, state2) = load(&path, pol.layout.clone(), "test").unwrap();
        assert_eq!(state, state2);
        for (a, b) in p.data.iter().zip(&q.data) {
            assert_eq!(*a as f32, *b as f32);
        }
        // The restored generator continues identically.
        let mut r1 = state.restore();
        let mut r2 = state2.restore();
        assert_eq!(
            rand::Rng::gen::<u64>(&mut r1),
            rand::Rng::gen::<u64>(&mut r2)
        );
    }

    #[test]
    fn wrong_architecture_is_rejected() {
        let pol = tiny_policy();
        let mut rng = stream(22, "ckpt", 0);
        let p = pol.init_params(&mut rng);
        let state = RngState::capture(&rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ckpt");
        save(&path, &p, "test", &state).unwrap();
        // Different label.
        assert!(load(&path, pol.layout.clone(), "other").is_err());
        // Different layout.
        let kinds = KindTable::desk_default();
        let mut arch = PolicyArch::tiny(&kinds);
        arch.hidden += 1;
        let other = SeqPolicy::new(arch, kinds).unwrap();
        assert!(load(&path, other.layout.clone(), "test").is_err());
    }

    #[test]
    fn corrupted_header_is_rejected() {
        let pol = tiny_policy();
        let mut rng = stream(23, "ckpt", 0);
        let p = pol.init_params(&mut rng);
        let state = RngState::capture(&rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ckpt");
        save(&path, &p, "test", &state).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(load(&path, pol.layout.clone(), "test").is_err());
    }
}
