//! Up-right diagonal scan order.
//!
//! Diagonals `d = x + y` are visited in ascending order; within a diagonal
//! the larger `y` comes first. Scan index 0 is always the DC position.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Largest supported block side.
pub const MAX_DIM: usize = 32;

pub(crate) const SLOTS: usize = MAX_DIM * MAX_DIM;

/// Cache slot of a validated size.
pub(crate) fn dim_slot(width: usize, height: usize) -> usize {
    (height - 1) * MAX_DIM + (width - 1)
}

pub fn check_dims(width: usize, height: usize) -> Result<()> {
    if !(1..=MAX_DIM).contains(&width) || !(1..=MAX_DIM).contains(&height) {
        return Err(Error::Config(format!(
            "unsupported block dimensions {width}x{height}; each side must lie in 1..={MAX_DIM}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiagonalScan {
    width: usize,
    height: usize,
    pos: Vec<(u16, u16)>,
    raster_of_scan: Vec<u16>,
    scan_of_raster: Vec<u16>,
}

impl DiagonalScan {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        let n = width * height;
        let mut pos = Vec::with_capacity(n);
        for d in 0..(width + height - 1) {
            // y runs from the bottom of the diagonal up to the top row
            let y_hi = d.min(height - 1);
            for y in (0..=y_hi).rev() {
                let x = d - y;
                if x < width {
                    pos.push((x as u16, y as u16));
                }
            }
        }
        debug_assert_eq!(pos.len(), n);
        let raster_of_scan: Vec<u16> = pos
            .iter()
            .map(|&(x, y)| (y as usize * width + x as usize) as u16)
            .collect();
        let mut scan_of_raster = vec![0u16; n];
        for (s, &r) in raster_of_scan.iter().enumerate() {
            scan_of_raster[r as usize] = s as u16;
        }
        Ok(Self {
            width,
            height,
            pos,
            raster_of_scan,
            scan_of_raster,
        })
    }

    /// Shared instance for a supported block size.
    pub fn cached(width: usize, height: usize) -> Result<&'static DiagonalScan> {
        static TABLE: [OnceLock<DiagonalScan>; SLOTS] = [const { OnceLock::new() }; SLOTS];
        check_dims(width, height)?;
        Ok(TABLE[dim_slot(width, height)].get_or_init(|| DiagonalScan::new(width, height).expect("checked size")))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    /// `(x, y)` of a scan index.
    #[inline]
    pub fn position(&self, scan: usize) -> (usize, usize) {
        let (x, y) = self.pos[scan];
        (x as usize, y as usize)
    }

    #[inline]
    pub fn raster(&self, scan: usize) -> usize {
        self.raster_of_scan[scan] as usize
    }

    #[inline]
    pub fn scan_index(&self, raster: usize) -> usize {
        self.scan_of_raster[raster] as usize
    }

    pub fn scan_index_of(&self, x: usize, y: usize) -> usize {
        self.scan_index(y * self.width + x)
    }
}
