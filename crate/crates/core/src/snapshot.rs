//! Binary field snapshots.
//!
//! Layout (little endian):
//!
//! ```text
//! "MNLS" | version u32 | N u32 | m u32 | n_axis u32 | L f64 | m·n_axis^N × (re f64, im f64)
//! ```
//!
//! Values are component-major and row-major within a component.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{make_grid, Field, Grid, GridSpec, C64};

pub const MAGIC: &[u8; 4] = b"MNLS";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 4 + 8;

pub fn write_snapshot<W: Write>(mut out: W, field: &Field) -> Result<()> {
    let grid = field.grid();
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    header.extend_from_slice(&(field.m() as u32).to_le_bytes());
    header.extend_from_slice(&(grid.n_axis() as u32).to_le_bytes());
    header.extend_from_slice(&grid.half_width().to_le_bytes());
    out.write_all(&header)?;
    let mut buf = Vec::with_capacity(16 * grid.len());
    for c in field.components() {
        buf.clear();
        for z in c {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

/// Reads a snapshot, building a fresh grid from its header.
pub fn read_snapshot<R: Read>(input: R) -> Result<Field> {
    read_snapshot_impl(input, None)
}

/// Reads a snapshot onto an existing grid; the header must match it.
pub fn read_snapshot_on<R: Read>(input: R, grid: Arc<Grid>) -> Result<Field> {
    read_snapshot_impl(input, Some(grid))
}

fn read_snapshot_impl<R: Read>(mut input: R, grid: Option<Arc<Grid>>) -> Result<Field> {
    let mut header = [0u8; HEADER_LEN];
    input
        .read_exact(&mut header)
        .map_err(|e| Error::Snapshot(format!("truncated header: {e}")))?;
    if &header[..4] != MAGIC {
        return Err(Error::Snapshot("bad magic, expected \"MNLS\"".into()));
    }
    let version = u32_at(&header, 4);
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let dim = u32_at(&header, 8) as usize;
    let m = u32_at(&header, 12) as usize;
    let n_axis = u32_at(&header, 16) as usize;
    let half_width = f64::from_le_bytes(header[20..28].try_into().unwrap());
    if m == 0 {
        return Err(Error::Snapshot("zero components".into()));
    }
    let grid = match grid {
        Some(g) => {
            if g.dim() != dim || g.n_axis() != n_axis || g.half_width() != half_width {
                return Err(Error::Snapshot(format!(
                    "snapshot grid (N={dim}, n={n_axis}, L={half_width}) does not match {:?}",
                    g.spec()
                )));
            }
            g
        }
        None => make_grid(GridSpec::new(dim, n_axis, half_width))
            .map_err(|e| Error::Snapshot(e.to_string()))?,
    };
    let mut raw = vec![0u8; 16 * grid.len()];
    let mut data = Vec::with_capacity(m);
    for j in 0..m {
        input
            .read_exact(&mut raw)
            .map_err(|e| Error::Snapshot(format!("truncated data in component {j}: {e}")))?;
        let comp = raw
            .chunks_exact(16)
            .map(|b| {
                C64::new(
                    f64::from_le_bytes(b[..8].try_into().unwrap()),
                    f64::from_le_bytes(b[8..].try_into().unwrap()),
                )
            })
            .collect();
        data.push(comp);
    }
    Field::from_components(grid, data)
}

pub fn save(path: impl AsRef<Path>, field: &Field) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_snapshot(&mut w, field)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Field> {
    let file = std::fs::File::open(path)?;
    read_snapshot(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_fixed() {
        let g = make_grid(GridSpec::new(2, 8, 1.5)).unwrap();
        let f = Field::from_fn(g, 2, |j, x| C64::new(x[0] + j as f64, x[1]));
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &f).unwrap();
        assert_eq!(&bytes[..4], b"MNLS");
        assert_eq!(u32_at(&bytes, 4), 1);
        assert_eq!(u32_at(&bytes, 8), 2);
        assert_eq!(u32_at(&bytes, 12), 2);
        assert_eq!(u32_at(&bytes, 16), 8);
        assert_eq!(f64::from_le_bytes(bytes[20..28].try_into().unwrap()), 1.5);
        assert_eq!(bytes.len(), 28 + 2 * 64 * 16);
        // Second component, first value: re = x₀ + 1 = -1.5 + 1.
        let at = 28 + 64 * 16;
        assert_eq!(f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()), -0.5);
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(read_snapshot(&b"NOPE"[..]).is_err());
        let g = make_grid(GridSpec::new(1, 8, 1.0)).unwrap();
        let f = Field::zeros(g, 1);
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &f).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(read_snapshot(&bytes[..]).is_err());
        let other = make_grid(GridSpec::new(1, 16, 1.0)).unwrap();
        let mut full = Vec::new();
        write_snapshot(&mut full, &f).unwrap();
        assert!(read_snapshot_on(&full[..], other).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(values in proptest::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 16)) {
            let g = make_grid(GridSpec::new(1, 16, 2.0)).unwrap();
            let data = vec![values.iter().map(|&(a, b)| C64::new(a, b)).collect()];
            let f = Field::from_components(g, data).unwrap();
            let mut bytes = Vec::new();
            write_snapshot(&mut bytes, &f).unwrap();
            let back = read_snapshot(&bytes[..]).unwrap();
            prop_assert_eq!(back.components(), f.components());
        }
    }
}
