//! `SWF1` binary snapshots and CSV export of a state.
//!
//! Layout (little-endian): magic `SWF1`, `u32 nx`, `u32 ny`, `f64 dx`,
//! `f64 dy`, `f64 g`, then `h`, `hu`, `hv`, each `nx·ny` row-major `f64`.

use std::io::{Read, Write};

use super::grid::GridSpec;
use super::state::StateField;
use crate::error::{Error, Result};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"SWF1";

pub fn write_snapshot<W: Write>(mut out: W, state: &StateField) -> Result<()> {
    let g = state.grid();
    let mut buf = Vec::with_capacity(36 + 8 * state.as_slice().len());
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&(g.nx as u32).to_le_bytes());
    buf.extend_from_slice(&(g.ny as u32).to_le_bytes());
    for v in [g.dx, g.dy, g.gravity] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in state.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot<R: Read>(mut input: R) -> Result<StateField> {
    let mut header = [0u8; 36];
    input.read_exact(&mut header)?;
    if &header[..4] != SNAPSHOT_MAGIC {
        return Err(Error::Format("missing SWF1 magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let grid = GridSpec::new(u32_at(4), u32_at(8), f64_at(12), f64_at(20), f64_at(28))?;
    let mut body = vec![0u8; 3 * grid.cells() * 8];
    input.read_exact(&mut body)?;
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    StateField::from_vec(grid, data)
}

/// One line per cell: `x,y,h,hu,hv` at the cell centre.
pub fn write_csv<W: Write>(mut out: W, state: &StateField) -> Result<()> {
    let g = state.grid();
    let mut text = String::from("x,y,h,hu,hv\n");
    for idx in 0..g.cells() {
        let (x, y) = g.center(idx);
        let [h, hu, hv] = state.cell(idx);
        text.push_str(&format!("{x},{y},{h},{hu},{hv}\n"));
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let g = GridSpec::new(3, 4, 0.5, 0.25, 9.81).unwrap();
        let s = StateField::lake_at_rest(g, 1.0).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &s).unwrap();
        assert_eq!(&buf[..4], b"SWF1");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 4);
        assert_eq!(f64::from_le_bytes(buf[20..28].try_into().unwrap()), 0.25);
        assert_eq!(buf.len(), 36 + 3 * 12 * 8);
        assert_eq!(f64::from_le_bytes(buf[36..44].try_into().unwrap()), 1.0);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let buf = vec![0u8; 64];
        assert!(matches!(read_snapshot(&buf[..]), Err(Error::Format(_))));
    }

    #[test]
    fn csv_has_one_row_per_cell() {
        let g = GridSpec::uniform(3, 3, 1.0).unwrap();
        let s = StateField::lake_at_rest(g, 2.0).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert_eq!(text.lines().nth(1).unwrap(), "0.5,0.5,2,0,0");
    }

    proptest! {
        #[test]
        fn snapshot_round_trip(seed in proptest::collection::vec(0.01f64..5.0, 27)) {
            let g = GridSpec::new(3, 3, 0.1, 0.2, 9.81).unwrap();
            let s = StateField::from_vec(g, seed).unwrap();
            let mut buf = Vec::new();
            write_snapshot(&mut buf, &s).unwrap();
            prop_assert_eq!(read_snapshot(&buf[..]).unwrap(), s);
        }
    }
}
