//! Binary state snapshots, little-endian throughout.
//!
//! Layout:
//!
//! | field | type |
//! |---|---|
//! | magic `CORALSNP` | 8 bytes |
//! | version | u32 |
//! | dims | 3 × u64 |
//! | extent | 3 × f64 |
//! | t | f64 |
//! | step | u64 |
//! | accumulators nm, grad_m, grad_c, grad_u | 4 × f64 |
//! | initial mass_n, mass_c, mass_m, max_n, max_c, max_m, m_sq, volume | 8 × f64 |
//! | monitors last_dt, transport_substeps (u64), div, energy, yosida | f64, u64, 3 × f64 |
//! | n, c, m | cell arrays, x fastest |
//! | u_x, u_y, u_z | face arrays, x fastest |
//! | P | cell array |

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fields::{Grid, ScalarField, VectorField};
use crate::fluid::PressureField;
use crate::stepping::{Accumulators, InitialSummary, Monitors, SimState};

pub const MAGIC: [u8; 8] = *b"CORALSNP";
pub const VERSION: u32 = 1;

pub fn encode_snapshot(state: &SimState) -> Vec<u8> {
    let grid = state.grid();
    let mut out = Vec::new();
    let f = |out: &mut Vec<u8>, v: f64| out.extend_from_slice(&v.to_le_bytes());
    let u = |out: &mut Vec<u8>, v: u64| out.extend_from_slice(&v.to_le_bytes());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    grid.dims().iter().for_each(|&d| u(&mut out, d as u64));
    grid.extent().iter().for_each(|&e| f(&mut out, e));
    f(&mut out, state.t);
    u(&mut out, state.step);
    let a = &state.acc;
    [a.nm, a.grad_m, a.grad_c, a.grad_u].iter().for_each(|&v| f(&mut out, v));
    let i = &state.initial;
    [i.mass_n, i.mass_c, i.mass_m, i.max_n, i.max_c, i.max_m, i.m_sq, i.volume]
        .iter()
        .for_each(|&v| f(&mut out, v));
    let m = &state.monitors;
    f(&mut out, m.last_dt);
    u(&mut out, m.transport_substeps);
    [m.div_residual, m.energy_residual, m.yosida_ratio].iter().for_each(|&v| f(&mut out, v));
    for field in [&state.n, &state.c, &state.m] {
        field.values().iter().for_each(|&v| f(&mut out, v));
    }
    for axis in 0..3 {
        state.u.component(axis).iter().for_each(|&v| f(&mut out, v));
    }
    state.pressure.field().values().iter().for_each(|&v| f(&mut out, v));
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Snapshot(format!("truncated at byte {}", self.bytes.len())));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<SimState> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Snapshot("bad magic; not a snapshot file".into()));
    }
    let version = u32::from_le_bytes(c.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}, expected {VERSION}")));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = usize::try_from(c.u64()?).map_err(|_| Error::Snapshot("dimension overflow".into()))?;
    }
    let extent = [c.f64()?, c.f64()?, c.f64()?];
    let grid = Grid::new(dims, extent).map_err(|e| Error::Snapshot(e.to_string()))?;
    let t = c.f64()?;
    let step = c.u64()?;
    let acc = Accumulators {
        nm: c.f64()?,
        grad_m: c.f64()?,
        grad_c: c.f64()?,
        grad_u: c.f64()?,
    };
    let initial = InitialSummary {
        mass_n: c.f64()?,
        mass_c: c.f64()?,
        mass_m: c.f64()?,
        max_n: c.f64()?,
        max_c: c.f64()?,
        max_m: c.f64()?,
        m_sq: c.f64()?,
        volume: c.f64()?,
    };
    let monitors = Monitors {
        last_dt: c.f64()?,
        transport_substeps: c.u64()?,
        div_residual: c.f64()?,
        energy_residual: c.f64()?,
        yosida_ratio: c.f64()?,
    };
    let cells = grid.num_cells();
    let n = ScalarField::from_values(&grid, c.f64s(cells)?)?;
    let cf = ScalarField::from_values(&grid, c.f64s(cells)?)?;
    let m = ScalarField::from_values(&grid, c.f64s(cells)?)?;
    let comps = [
        c.f64s(grid.face_count(0))?,
        c.f64s(grid.face_count(1))?,
        c.f64s(grid.face_count(2))?,
    ];
    let u = VectorField::from_components(&grid, comps)?;
    let p = ScalarField::from_values(&grid, c.f64s(cells)?)?;
    if c.pos != bytes.len() {
        return Err(Error::Snapshot(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(SimState {
        t,
        step,
        n,
        c: cf,
        m,
        u,
        pressure: PressureField::from_raw(p),
        acc,
        initial,
        monitors,
    })
}

/// Writes via a temporary file and rename.
pub fn write_snapshot(state: &SimState, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(&encode_snapshot(state)).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<SimState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_snapshot(&bytes)
}
