//! Binary value-function files.
//!
//! Layout (little-endian):
//!
//! | field | type |
//! |---|---|
//! | magic `MPVF` | 4 bytes |
//! | version | u32 |
//! | kind, converged | u8, u8 |
//! | r_min, r_max, v_min, v_max | f64 ×4 |
//! | nr, nv | u32 ×2 |
//! | accel_min, accel_max, b_max, dv_max, da_max, gravity_offset | f64 ×6 |
//! | horizon, level, margin | f64 ×3 |
//! | values (row-major, nr·nv) | f64 |
//! | CRC-32 of everything above | u32 |

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Grid2, ReachError, ValueFunction2D, ValueKind};
use crate::dynamics::Subsystem2Params;

pub const MAGIC: &[u8; 4] = b"MPVF";
pub const FORMAT_VERSION: u32 = 1;

const HEADER_LEN: usize = 4 + 4 + 2 + 4 * 8 + 2 * 4 + 6 * 8 + 3 * 8;

pub fn write_value_function<W: Write>(vf: &ValueFunction2D, mut w: W) -> Result<(), ReachError> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * vf.values.len() + 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(vf.kind.code());
    buf.push(vf.converged as u8);
    let g = &vf.grid;
    for x in [g.r_min, g.r_max, g.v_min, g.v_max] {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    for n in [g.nr, g.nv] {
        let n = u32::try_from(n).map_err(|_| ReachError::Format("grid too large".into()))?;
        buf.extend_from_slice(&n.to_le_bytes());
    }
    let p = &vf.params;
    for x in [
        p.accel_min,
        p.accel_max,
        p.b_max,
        p.dv_max,
        p.da_max,
        p.gravity_offset,
        vf.horizon,
        vf.level,
        vf.margin,
    ] {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    for x in &vf.values {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], ReachError> {
        let end = self.pos + N;
        let s = self
            .data
            .get(self.pos..end)
            .ok_or_else(|| ReachError::Format("unexpected end of data".into()))?;
        self.pos = end;
        Ok(s.try_into().expect("slice length checked"))
    }

    fn f64(&mut self) -> Result<f64, ReachError> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn u32(&mut self) -> Result<u32, ReachError> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u8(&mut self) -> Result<u8, ReachError> {
        Ok(self.take::<1>()?[0])
    }
}

pub fn read_value_function<R: Read>(mut r: R) -> Result<ValueFunction2D, ReachError> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    if data.len() < 8 || &data[..4] != MAGIC {
        return Err(ReachError::Format("bad magic".into()));
    }
    if data.len() < HEADER_LEN + 4 {
        return Err(ReachError::Format("truncated header".into()));
    }
    let (body, tail) = data.split_at(data.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(ReachError::Checksum { stored, computed });
    }
    let mut c = Cursor { data: body, pos: 4 };
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(ReachError::Format(format!(
            "unsupported version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let kind = ValueKind::from_code(c.u8()?).ok_or_else(|| ReachError::Format("unknown kind".into()))?;
    let converged = c.u8()? != 0;
    let (r_min, r_max, v_min, v_max) = (c.f64()?, c.f64()?, c.f64()?, c.f64()?);
    let (nr, nv) = (c.u32()? as usize, c.u32()? as usize);
    let grid = Grid2::new(r_min, r_max, v_min, v_max, nr, nv)?;
    let params = Subsystem2Params {
        accel_min: c.f64()?,
        accel_max: c.f64()?,
        b_max: c.f64()?,
        dv_max: c.f64()?,
        da_max: c.f64()?,
        gravity_offset: c.f64()?,
    };
    let horizon = c.f64()?;
    let level = c.f64()?;
    let margin = c.f64()?;
    if body.len() != HEADER_LEN + 8 * grid.len() {
        return Err(ReachError::Format(format!(
            "expected {} values, found {} bytes of payload",
            grid.len(),
            body.len() - HEADER_LEN
        )));
    }
    let values = (0..grid.len()).map(|_| c.f64()).collect::<Result<Vec<_>, _>>()?;
    Ok(ValueFunction2D {
        grid,
        values,
        kind,
        params,
        horizon,
        converged,
        level,
        margin,
    })
}

pub fn save_value_function(vf: &ValueFunction2D, path: &Path) -> Result<(), ReachError> {
    let mut buf = Vec::new();
    write_value_function(vf, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Loads a value function; with `expected`, refuses files solved for other
/// subsystem parameters.
pub fn load_value_function(path: &Path, expected: Option<&Subsystem2Params>) -> Result<ValueFunction2D, ReachError> {
    let vf = read_value_function(fs::File::open(path)?)?;
    if let Some(p) = expected {
        if !vf.params.approx_eq(p) {
            return Err(ReachError::ParamsMismatch(format!(
                "{} was solved for {:?}, requested {:?}",
                path.display(),
                vf.params,
                p
            )));
        }
    }
    Ok(vf)
}
