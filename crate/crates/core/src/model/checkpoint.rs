//! Versioned binary model checkpoints with bit-exact round-trips.
//!
//! Layout (integers little-endian, floats as little-endian IEEE-754 bits):
//!
//! ```text
//! magic    8 bytes  "MDALSCP1"
//! version  u32      1
//! variant  u8       0 baseline, 1 zero-pad, 2 projected
//! d        u32      maximum dimension
//! allowed  u32 count, then u32 each
//! users    u64      entity counts
//! items    u64
//! dims     u32 per user, then u32 per item
//! values   u64 count + f64 bits each, users then items
//! proj     per side: u8 present flag; if 1: u32 matrix count, then per
//!          matrix { u32 p, f64 bits x (d*p) }
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{EmbeddingStore, ModelParams, ProjectionSet, Variant};
use crate::{Error, Matrix, Real, Result};

const MAGIC: &[u8; 8] = b"MDALSCP1";
const VERSION: u32 = 1;

/// Header fields carried alongside the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointHeader {
    pub variant: Variant,
    pub max_dim: usize,
    pub allowed_dims: Vec<u32>,
    pub num_users: usize,
    pub num_items: usize,
}

pub fn write_checkpoint(params: &ModelParams, allowed_dims: &[u32], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[params.variant.tag()])?;
    w.write_all(&(params.max_dim as u32).to_le_bytes())?;
    w.write_all(&(allowed_dims.len() as u32).to_le_bytes())?;
    for &d in allowed_dims {
        w.write_all(&d.to_le_bytes())?;
    }
    w.write_all(&(params.user_embeddings.count() as u64).to_le_bytes())?;
    w.write_all(&(params.item_embeddings.count() as u64).to_le_bytes())?;
    for store in [&params.user_embeddings, &params.item_embeddings] {
        for &d in store.dims() {
            w.write_all(&d.to_le_bytes())?;
        }
    }
    for store in [&params.user_embeddings, &params.item_embeddings] {
        w.write_all(&(store.values().len() as u64).to_le_bytes())?;
        for v in store.values() {
            w.write_all(&v.to_bits().to_le_bytes())?;
        }
    }
    for side in [&params.user_projections, &params.item_projections] {
        match side {
            None => w.write_all(&[0u8])?,
            Some(set) => {
                w.write_all(&[1u8])?;
                w.write_all(&(set.keys().count() as u32).to_le_bytes())?;
                for p in set.keys() {
                    w.write_all(&p.to_le_bytes())?;
                    let m = set.get(p as usize).expect("key present");
                    for v in m.values() {
                        w.write_all(&v.to_bits().to_le_bytes())?;
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointHeader)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("checkpoint too short".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("not a model checkpoint (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let variant = Variant::from_tag(tag[0])
        .ok_or_else(|| Error::Format(format!("bad variant byte {}", tag[0])))?;
    let max_dim = read_u32(&mut r)? as usize;
    let n_allowed = read_u32(&mut r)? as usize;
    let allowed_dims: Vec<u32> = (0..n_allowed)
        .map(|_| read_u32(&mut r))
        .collect::<Result<_>>()?;
    let num_users = read_u64(&mut r)? as usize;
    let num_items = read_u64(&mut r)? as usize;
    let user_dims: Vec<u32> = (0..num_users)
        .map(|_| read_u32(&mut r))
        .collect::<Result<_>>()?;
    let item_dims: Vec<u32> = (0..num_items)
        .map(|_| read_u32(&mut r))
        .collect::<Result<_>>()?;

    let read_store = |dims: &[u32], r: &mut BufReader<File>| -> Result<EmbeddingStore> {
        let mut store = EmbeddingStore::with_dims(dims);
        let len = read_u64(r)? as usize;
        if len != store.values().len() {
            return Err(Error::Format(format!(
                "value buffer length {len} does not match dims total {}",
                store.values().len()
            )));
        }
        for v in store.values.iter_mut() {
            *v = read_f64(r)?;
        }
        Ok(store)
    };
    let user_embeddings = read_store(&user_dims, &mut r)?;
    let item_embeddings = read_store(&item_dims, &mut r)?;

    let read_projections = |r: &mut BufReader<File>| -> Result<Option<ProjectionSet>> {
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        if flag[0] == 0 {
            return Ok(None);
        }
        let count = read_u32(r)? as usize;
        let mut set = ProjectionSet::new(max_dim);
        for _ in 0..count {
            let p = read_u32(r)? as usize;
            let values: Vec<Real> = (0..max_dim * p)
                .map(|_| read_f64(r))
                .collect::<Result<_>>()?;
            let m = Matrix::from_vec(max_dim, p, values)
                .map_err(|e| Error::Format(format!("projection matrix: {e}")))?;
            set.set(p, m)
                .map_err(|e| Error::Format(format!("projection key: {e}")))?;
        }
        Ok(Some(set))
    };
    let user_projections = read_projections(&mut r)?;
    let item_projections = read_projections(&mut r)?;

    let header = CheckpointHeader {
        variant,
        max_dim,
        allowed_dims,
        num_users,
        num_items,
    };
    Ok((
        ModelParams {
            variant,
            max_dim,
            user_embeddings,
            item_embeddings,
            user_projections,
            item_projections,
        },
        header,
    ))
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
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_bits(u64::from_le_bytes(buf)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DimensionScheme;
    use crate::model::init_params;

    #[test]
    fn checkpoint_round_trips_bit_exact() {
        let scheme =
            DimensionScheme::new(vec![2, 4, 6], 0.5, vec![2, 4, 6, 2], vec![6, 4, 2]).unwrap();
        let params = init_params(&scheme, Variant::Projected, 99);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.mdcp");
        write_checkpoint(&params, scheme.allowed_dims(), &path).unwrap();
        let (back, header) = read_checkpoint(&path).unwrap();
        assert_eq!(back, params);
        assert_eq!(header.allowed_dims, vec![2, 4, 6]);
        assert_eq!(header.num_users, 4);
        assert_eq!(header.num_items, 3);

        // writing again is byte-identical
        let path2 = dir.path().join("model2.mdcp");
        write_checkpoint(&back, &header.allowed_dims, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn checkpoint_rejects_tampered_version() {
        let scheme = DimensionScheme::uniform(4, 3, 3);
        let params = init_params(&scheme, Variant::Baseline, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.mdcp");
        write_checkpoint(&params, scheme.allowed_dims(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 0xFF; // version field
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Format(_))));
    }
}
