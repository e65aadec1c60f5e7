//! Versioned binary checkpoints: parameters + optimizer state + RNG state.
//!
//! Floats are stored as raw little-endian bit patterns, so a load/save
//! round trip is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use super::{OptimizerState, PolicyParams};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"GLCP";
const VERSION: u32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: PolicyParams,
    pub opt: OptimizerState,
    pub rng_state: u64,
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    write_u32(&mut w, ck.params.input_dim as u32)?;
    write_u32(&mut w, ck.params.n_actions as u32)?;
    let hidden = ck.params.hidden_dims();
    write_u32(&mut w, hidden.len() as u32)?;
    for h in &hidden {
        write_u32(&mut w, *h as u32)?;
    }
    for t in ck.params.tensors() {
        write_tensor(&mut w, t)?;
    }
    write_f64(&mut w, ck.opt.lr)?;
    write_f64(&mut w, ck.opt.beta1)?;
    write_f64(&mut w, ck.opt.beta2)?;
    write_f64(&mut w, ck.opt.eps)?;
    write_u64(&mut w, ck.opt.step)?;
    for t in ck.opt.m.tensors() {
        write_tensor(&mut w, t)?;
    }
    for t in ck.opt.v.tensors() {
        write_tensor(&mut w, t)?;
    }
    write_u64(&mut w, ck.rng_state)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Config(format!(
            "{} is not a checkpoint file",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Config(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let input_dim = read_u32(&mut r)? as usize;
    let n_actions = read_u32(&mut r)? as usize;
    let n_hidden = read_u32(&mut r)? as usize;
    let mut hidden = Vec::with_capacity(n_hidden);
    for _ in 0..n_hidden {
        hidden.push(read_u32(&mut r)? as usize);
    }

    let mut rng = crate::rng::Rng64::new(0);
    let mut params = PolicyParams::init_with_dims(input_dim, &hidden, n_actions, &mut rng);
    for t in params.tensors_mut() {
        read_tensor(&mut r, t)?;
    }
    let mut opt = OptimizerState::new(0.0, &params);
    opt.lr = read_f64(&mut r)?;
    opt.beta1 = read_f64(&mut r)?;
    opt.beta2 = read_f64(&mut r)?;
    opt.eps = read_f64(&mut r)?;
    opt.step = read_u64(&mut r)?;
    for t in opt.m.tensors_mut() {
        read_tensor(&mut r, t)?;
    }
    for t in opt.v.tensors_mut() {
        read_tensor(&mut r, t)?;
    }
    let rng_state = read_u64(&mut r)?;
    Ok(Checkpoint {
        params,
        opt,
        rng_state,
    })
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    write_u64(w, v.to_bits())
}

fn write_tensor(w: &mut impl Write, t: &[f64]) -> Result<()> {
    write_u64(w, t.len() as u64)?;
    for v in t {
        write_f64(w, *v)?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

fn read_tensor(r: &mut impl Read, t: &mut [f64]) -> Result<()> {
    let len = read_u64(r)? as usize;
    if len != t.len() {
        return Err(Error::Config(format!(
            "checkpoint tensor length {len} does not match expected {}",
            t.len()
        )));
    }
    for v in t.iter_mut() {
        *v = read_f64(r)?;
    }
    Ok(())
}
