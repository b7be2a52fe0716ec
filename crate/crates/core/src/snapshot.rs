//! Versioned binary checkpoints: ensemble counts (sparse triples), error
//! buffer state and the frozen exploration policy.
//!
//! Layout (little endian): magic `WMCK`, format version, model header
//! (ensemble size, pseudocount, bootstrap rate, action count, slice widths),
//! episode counters, per-member sparse count entries, the three error-buffer
//! maps, then the dense policy rows. The bootstrap RNG state is not stored;
//! snapshots feed evaluation, not training resumption.

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::curriculum::ErrorBuffer;
use crate::env::{AugmentedStateSpace, ThetaId};
use crate::error::{Error, Result};
use crate::model::{EnsembleWorldModel, ModelConfig};
use crate::Policy;

const MAGIC: &[u8; 4] = b"WMCK";
const VERSION: u32 = 1;

#[derive(Debug)]
pub struct Snapshot {
    pub model: EnsembleWorldModel,
    pub errors: ErrorBuffer,
    pub policy: Policy,
    pub episode: u64,
    pub env_steps: u64,
}

pub fn save(
    path: &Path,
    model: &EnsembleWorldModel,
    errors: &ErrorBuffer,
    policy: &Policy,
    episode: u64,
    env_steps: u64,
) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;

    let config = model.config();
    w.write_u32::<LittleEndian>(config.ensemble_size as u32)?;
    w.write_f64::<LittleEndian>(config.prior_pseudocount)?;
    w.write_f64::<LittleEndian>(config.bootstrap_rate)?;
    w.write_u32::<LittleEndian>(model.num_actions() as u32)?;
    let space = model.space();
    w.write_u32::<LittleEndian>(space.num_slices() as u32)?;
    for t in 0..space.num_slices() {
        w.write_u32::<LittleEndian>(space.width(ThetaId(t)) as u32)?;
    }
    w.write_u64::<LittleEndian>(episode)?;
    w.write_u64::<LittleEndian>(env_steps)?;

    let counts = model.nonzero_counts();
    w.write_u64::<LittleEndian>(counts.len() as u64)?;
    for (member, s, a, sp, n) in counts {
        w.write_u32::<LittleEndian>(member)?;
        w.write_u32::<LittleEndian>(s)?;
        w.write_u32::<LittleEndian>(a)?;
        w.write_u32::<LittleEndian>(sp)?;
        w.write_u64::<LittleEndian>(n)?;
    }

    w.write_f64::<LittleEndian>(errors.ema_alpha())?;
    w.write_f64::<LittleEndian>(errors.delta_alpha())?;
    for map in [errors.ema(), errors.prev_ema(), errors.delta_ema()] {
        w.write_u32::<LittleEndian>(map.len() as u32)?;
        for (&theta, &v) in map {
            w.write_u32::<LittleEndian>(theta.0 as u32)?;
            w.write_f64::<LittleEndian>(v)?;
        }
    }

    w.write_u32::<LittleEndian>(policy.num_states() as u32)?;
    w.write_u32::<LittleEndian>(policy.num_actions() as u32)?;
    for &p in policy.rows() {
        w.write_f64::<LittleEndian>(p)?;
    }
    w.flush()?;
    Ok(())
}

fn read_map<R: Read>(r: &mut R) -> Result<BTreeMap<ThetaId, f64>> {
    let len = r.read_u32::<LittleEndian>()?;
    let mut map = BTreeMap::new();
    for _ in 0..len {
        let theta = ThetaId(r.read_u32::<LittleEndian>()? as usize);
        let v = r.read_f64::<LittleEndian>()?;
        map.insert(theta, v);
    }
    Ok(map)
}

pub fn load(path: &Path) -> Result<Snapshot> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::SnapshotFormat("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::SnapshotFormat(format!(
            "unsupported version {version}"
        )));
    }

    let ensemble_size = r.read_u32::<LittleEndian>()? as usize;
    let prior_pseudocount = r.read_f64::<LittleEndian>()?;
    let bootstrap_rate = r.read_f64::<LittleEndian>()?;
    let num_actions = r.read_u32::<LittleEndian>()? as usize;
    let num_slices = r.read_u32::<LittleEndian>()? as usize;
    let mut widths = Vec::with_capacity(num_slices);
    for _ in 0..num_slices {
        widths.push(r.read_u32::<LittleEndian>()? as usize);
    }
    let episode = r.read_u64::<LittleEndian>()?;
    let env_steps = r.read_u64::<LittleEndian>()?;

    let config = ModelConfig {
        ensemble_size,
        prior_pseudocount,
        bootstrap_rate,
    };
    let space = AugmentedStateSpace::new(widths);
    let mut model = EnsembleWorldModel::new(space, num_actions, config, 0)?;
    let entries = r.read_u64::<LittleEndian>()?;
    for _ in 0..entries {
        let member = r.read_u32::<LittleEndian>()? as usize;
        let s = r.read_u32::<LittleEndian>()? as usize;
        let a = r.read_u32::<LittleEndian>()? as usize;
        let sp = r.read_u32::<LittleEndian>()? as usize;
        let n = r.read_u64::<LittleEndian>()?;
        model.add_counts(member, s, a, sp, n)?;
    }

    let ema_alpha = r.read_f64::<LittleEndian>()?;
    let delta_alpha = r.read_f64::<LittleEndian>()?;
    let ema = read_map(&mut r)?;
    let prev_ema = read_map(&mut r)?;
    let delta_ema = read_map(&mut r)?;
    let errors = ErrorBuffer::from_parts(ema_alpha, delta_alpha, ema, prev_ema, delta_ema);

    let policy_states = r.read_u32::<LittleEndian>()? as usize;
    let policy_actions = r.read_u32::<LittleEndian>()? as usize;
    let mut rows = vec![0.0; policy_states * policy_actions];
    for p in rows.iter_mut() {
        *p = r.read_f64::<LittleEndian>()?;
    }
    let policy = Policy::new(policy_states, policy_actions, rows)?;

    Ok(Snapshot {
        model,
        errors,
        policy,
        episode,
        env_steps,
    })
}
