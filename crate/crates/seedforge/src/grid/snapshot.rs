//! Binary field snapshots.
//!
//! Layout: header { magic "SFRG", version u32, N u32, R_outer f64, rank u8 },
//! followed by the component arrays (rank 0: one, rank 1: three, rank 2: six
//! in (11,12,13,22,23,33) order), each row-major x-fastest, f64
//! little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{GridSpec, ScalarField, SymTensorField, VectorField};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SFRG";
const VERSION: u32 = 1;

/// A field of any supported rank, as stored in a snapshot file.
#[derive(Debug, Clone)]
pub enum Snapshot {
    Scalar(ScalarField),
    Vector(VectorField),
    Sym(SymTensorField),
}

impl Snapshot {
    pub fn rank(&self) -> u8 {
        match self {
            Snapshot::Scalar(_) => 0,
            Snapshot::Vector(_) => 1,
            Snapshot::Sym(_) => 2,
        }
    }

    pub fn spec(&self) -> GridSpec {
        match self {
            Snapshot::Scalar(f) => f.spec,
            Snapshot::Vector(f) => f.spec(),
            Snapshot::Sym(f) => f.spec(),
        }
    }

    fn components(&self) -> Vec<&ScalarField> {
        match self {
            Snapshot::Scalar(f) => vec![f],
            Snapshot::Vector(f) => f.comps.iter().collect(),
            Snapshot::Sym(f) => f.comps.iter().collect(),
        }
    }
}

/// Write a snapshot file.
pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<()> {
    let spec = snap.spec();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(spec.n as u32)?;
    w.write_f64::<LittleEndian>(spec.r_outer)?;
    w.write_u8(snap.rank())?;
    for c in snap.components() {
        for &v in &c.data {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a snapshot file.
pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Snapshot(format!("bad magic {magic:?}")));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let n = r.read_u32::<LittleEndian>()? as usize;
    let r_outer = r.read_f64::<LittleEndian>()?;
    let rank = r.read_u8()?;
    let spec = GridSpec::new(n, r_outer)
        .map_err(|e| Error::Snapshot(format!("invalid grid in header: {e}")))?;
    let n_comp = match rank {
        0 => 1,
        1 => 3,
        2 => 6,
        other => return Err(Error::Snapshot(format!("unsupported rank {other}"))),
    };
    let mut comps = Vec::with_capacity(n_comp);
    for _ in 0..n_comp {
        let mut f = ScalarField::zeros(spec);
        for v in &mut f.data {
            *v = r.read_f64::<LittleEndian>()?;
        }
        comps.push(f);
    }
    Ok(match rank {
        0 => Snapshot::Scalar(comps.pop().unwrap()),
        1 => {
            let mut it = comps.into_iter();
            Snapshot::Vector(VectorField {
                comps: std::array::from_fn(|_| it.next().unwrap()),
            })
        }
        _ => {
            let mut it = comps.into_iter();
            Snapshot::Sym(SymTensorField {
                comps: std::array::from_fn(|_| it.next().unwrap()),
            })
        }
    })
}
