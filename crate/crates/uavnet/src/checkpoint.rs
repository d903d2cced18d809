//! Binary network checkpoints.
//!
//! Layout, little endian: the 8-byte magic `UAVNETCK`, a `u32` format
//! version, a `u32` network count, then per network an activation byte
//! (0 tanh, 1 identity), a `u32` layer count, the layer widths as `u32`, a
//! `u64` parameter count and the parameters as `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use uavnet_core::marl::Agent;
use uavnet_core::nn::{Activation, AdamConfig, Mlp};

use crate::error::{HarnessError, Result};

pub const MAGIC: &[u8; 8] = b"UAVNETCK";
pub const VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Runtime(format!("checkpoint: {}", msg.into()))
}

pub fn write_nets<W: Write>(out: &mut W, nets: &[&Mlp]) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(nets.len() as u32).to_le_bytes())?;
    for net in nets {
        let act: u8 = match net.output_activation() {
            Activation::Tanh => 0,
            Activation::Identity => 1,
        };
        out.write_all(&[act])?;
        out.write_all(&(net.dims().len() as u32).to_le_bytes())?;
        for &d in net.dims() {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        out.write_all(&(net.params().len() as u64).to_le_bytes())?;
        for p in net.params() {
            out.write_all(&p.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| bad(format!("truncated ({e})")))?;
    Ok(b)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

pub fn read_nets<R: Read>(r: &mut R) -> Result<Vec<Mlp>> {
    if &read_array::<_, 8>(r)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = read_u32(r)?;
    let mut nets = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let act = match read_array::<_, 1>(r)?[0] {
            0 => Activation::Tanh,
            1 => Activation::Identity,
            a => return Err(bad(format!("unknown activation {a}"))),
        };
        let layers = read_u32(r)? as usize;
        if !(2..=64).contains(&layers) {
            return Err(bad(format!("implausible layer count {layers}")));
        }
        let dims = (0..layers).map(|_| read_u32(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let expected: usize = dims.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        let n = u64::from_le_bytes(read_array(r)?) as usize;
        if n != expected {
            return Err(bad(format!("{n} parameters for layers {dims:?}")));
        }
        let params = (0..n).map(|_| read_array(r).map(f64::from_le_bytes)).collect::<Result<Vec<_>>>()?;
        nets.push(Mlp::from_parts(&dims, act, params)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| bad(e.to_string()))? != 0 {
        return Err(bad("trailing bytes"));
    }
    Ok(nets)
}

/// Actor, critic and both targets of one agent.
pub fn save_agent(path: &Path, agent: &Agent) -> Result<()> {
    let file = File::create(path).map_err(|e| HarnessError::io("creating checkpoint", path, e))?;
    let mut out = BufWriter::new(file);
    write_nets(&mut out, &[&agent.actor, &agent.critic, &agent.target_actor, &agent.target_critic])
        .and_then(|_| out.flush())
        .map_err(|e| HarnessError::io("writing checkpoint", path, e))
}

/// Optimizer moments are not stored; they restart from zero.
pub fn load_agent(path: &Path, actor_adam: AdamConfig, critic_adam: AdamConfig) -> Result<Agent> {
    let file = File::open(path).map_err(|e| HarnessError::io("opening checkpoint", path, e))?;
    let mut nets = read_nets(&mut BufReader::new(file))?;
    if nets.len() != 4 {
        return Err(bad(format!("{}: expected 4 networks, found {}", path.display(), nets.len())));
    }
    let target_critic = nets.pop().unwrap();
    let target_actor = nets.pop().unwrap();
    let critic = nets.pop().unwrap();
    let actor = nets.pop().unwrap();
    let mut agent = Agent::from_nets(actor, critic, actor_adam, critic_adam);
    agent.target_actor = target_actor;
    agent.target_critic = target_critic;
    Ok(agent)
}

pub fn agent_file(dir: &Path, i: usize) -> std::path::PathBuf {
    dir.join(format!("agent_{i}.bin"))
}
