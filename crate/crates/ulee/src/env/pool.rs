//! Benchmark pools: persisted spec files, train/eval splits, hashing.
//!
//! One spec per line in the canonical text format. Split disjointness is
//! enforced downstream by comparing pool file hashes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use crate::env::spec::{sample_env_spec, BenchConfig, EnvSpec};
use crate::error::{Result, UleeError};
use crate::rng::stream;

/// Samples `size` specs and writes them one per line. Spec `i` depends
/// only on (seed, i), so pools are stable under size changes.
pub fn build_pool(bench: &BenchConfig, size: usize, seed: u64, path: &Path) -> Result<()> {
    bench.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    for i in 0..size {
        let mut rng = stream(seed, "pool", i as u64);
        let spec = sample_env_spec(&mut rng, bench)?;
        writeln!(w, "{}", spec.to_line())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_pool(path: &Path) -> Result<Vec<EnvSpec>> {
    let r = BufReader::new(File::open(path)?);
    let mut specs = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        specs.push(EnvSpec::from_line(&line).map_err(|e| {
            UleeError::Pool(format!("{}:{}: {e}", path.display(), i + 1))
        })?);
    }
    if specs.is_empty() {
        return Err(UleeError::Pool(format!("empty pool: {}", path.display())));
    }
    Ok(specs)
}

/// Shuffles the pool and writes disjoint train/eval files.
pub fn split_pool(
    input: &Path,
    eval_frac: f64,
    seed: u64,
    train_path: &Path,
    eval_path: &Path,
) -> Result<(usize, usize)> {
    if !(0.0..1.0).contains(&eval_frac) {
        return Err(UleeError::Config(format!("bad eval_frac {eval_frac}")));
    }
    let specs = load_pool(input)?;
    let mut order: Vec<usize> = (0..specs.len()).collect();
    order.shuffle(&mut stream(seed, "split", 0));
    let n_eval = ((specs.len() as f64) * eval_frac).round() as usize;
    let (eval_idx, train_idx) = order.split_at(n_eval);
    let write = |path: &Path, idx: &[usize]| -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for &i in idx {
            writeln!(w, "{}", specs[i].to_line())?;
        }
        w.flush()?;
        Ok(())
    };
    write(eval_path, eval_idx)?;
    write(train_path, train_idx)?;
    Ok((train_idx.len(), eval_idx.len()))
}

/// SHA-256 of the pool file bytes, hex-encoded.
pub fn pool_hash(path: &Path) -> Result<String> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 8192];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex_encode(&h.finalize()))
}

fn hex_encode(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
