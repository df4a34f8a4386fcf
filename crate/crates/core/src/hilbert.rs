//! N-dimensional Hilbert space-filling curves.
//!
//! Maps between a linear curve index and grid cell coordinates using the
//! transpose-based Gray-code construction (Skilling's algorithm). The
//! orientation convention is fixed by this construction and frozen by golden
//! tests; in 2D at order 1 the curve visits (0,0), (0,1), (1,1), (1,0).
//!
//! The curve of `order` b in `dim` n covers a grid of side 2^b with
//! 2^(b*n) cells, visiting each exactly once; consecutive indices differ by
//! one unit step along a single axis.

use thiserror::Error;

/// Errors from Hilbert curve construction and lookups.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum HilbertError {
    #[error("curve index {index} out of range (cell count {count})")]
    IndexOutOfRange { index: u64, count: u64 },
    #[error("cell coordinate {coord} out of range (side {side})")]
    CellOutOfRange { coord: u32, side: u32 },
    #[error("cell has {got} coordinates, curve dimension is {expected}")]
    DimMismatch { got: usize, expected: usize },
    #[error("unsupported curve config: order {order}, dimension {dim}")]
    BadConfig { order: u32, dim: u32 },
}

/// A Hilbert curve of a fixed order and dimension.
///
/// `order` is the number of bits per axis (grid side = 2^order) and `dim`
/// the number of axes. `order * dim` must stay within a u64 index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HilbertCurve {
    order: u32,
    dim: u32,
}

impl HilbertCurve {
    pub fn new(order: u32, dim: u32) -> Result<Self, HilbertError> {
        if order == 0 || dim < 2 || order * dim > 63 {
            return Err(HilbertError::BadConfig { order, dim });
        }
        Ok(Self { order, dim })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    /// Grid side length, 2^order.
    pub fn side(&self) -> u32 {
        1 << self.order
    }

    /// Total number of cells, 2^(order*dim).
    pub fn cell_count(&self) -> u64 {
        1 << (self.order as u64 * self.dim as u64)
    }

    /// Cell visited at position `index` on the curve.
    ///
    /// Writes the coordinates into `cell`, which must have length `dim`.
    pub fn decode(&self, index: u64, cell: &mut [u32]) -> Result<(), HilbertError> {
        if cell.len() != self.dim() {
            return Err(HilbertError::DimMismatch {
                got: cell.len(),
                expected: self.dim(),
            });
        }
        if index >= self.cell_count() {
            return Err(HilbertError::IndexOutOfRange {
                index,
                count: self.cell_count(),
            });
        }
        self.index_to_transpose(index, cell);
        transpose_to_axes(cell, self.order);
        Ok(())
    }

    /// Curve position at which `cell` is visited. Inverse of [`decode`](Self::decode).
    pub fn encode(&self, cell: &[u32]) -> Result<u64, HilbertError> {
        if cell.len() != self.dim() {
            return Err(HilbertError::DimMismatch {
                got: cell.len(),
                expected: self.dim(),
            });
        }
        let side = self.side();
        let mut x = [0u32; MAX_DIM];
        let x = &mut x[..self.dim()];
        for (slot, &c) in x.iter_mut().zip(cell) {
            if c >= side {
                return Err(HilbertError::CellOutOfRange { coord: c, side });
            }
            *slot = c;
        }
        axes_to_transpose(x, self.order);
        Ok(self.transpose_to_index(x))
    }

    /// Distribute index bits across coordinates, most significant first:
    /// bit j of the index (from the top) lands in coordinate j mod n at
    /// bit position order-1 - j/n.
    fn index_to_transpose(&self, index: u64, x: &mut [u32]) {
        let n = self.dim;
        let total = self.order * n;
        x.fill(0);
        for j in 0..total {
            let bit = (index >> (total - 1 - j)) & 1;
            x[(j % n) as usize] |= (bit as u32) << (self.order - 1 - j / n);
        }
    }

    fn transpose_to_index(&self, x: &[u32]) -> u64 {
        let n = self.dim;
        let total = self.order * n;
        let mut index = 0u64;
        for j in 0..total {
            let bit = (x[(j % n) as usize] >> (self.order - 1 - j / n)) & 1;
            index |= (bit as u64) << (total - 1 - j);
        }
        index
    }
}

const MAX_DIM: usize = 31;

/// In-place transpose -> axes step of the Skilling construction.
fn transpose_to_axes(x: &mut [u32], order: u32) {
    let n = x.len();
    // Gray decode
    let t = x[n - 1] >> 1;
    for i in (1..n).rev() {
        x[i] ^= x[i - 1];
    }
    x[0] ^= t;
    // Undo excess work
    let top = 2u32 << (order - 1);
    let mut q = 2u32;
    while q != top {
        let p = q - 1;
        for i in (0..n).rev() {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q <<= 1;
    }
}

/// In-place axes -> transpose step, inverse of [`transpose_to_axes`].
fn axes_to_transpose(x: &mut [u32], order: u32) {
    let n = x.len();
    let m = 1u32 << (order - 1);
    // Inverse undo
    let mut q = m;
    while q > 1 {
        let p = q - 1;
        for i in 0..n {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q >>= 1;
    }
    // Gray encode
    for i in 1..n {
        x[i] ^= x[i - 1];
    }
    let mut t = 0;
    let mut q = m;
    while q > 1 {
        if x[n - 1] & q != 0 {
            t ^= q - 1;
        }
        q >>= 1;
    }
    for slot in x.iter_mut() {
        *slot ^= t;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_one_2d_base_case() {
        let curve = HilbertCurve::new(1, 2).unwrap();
        let mut cell = [0u32; 2];
        let expected = [[0, 0], [0, 1], [1, 1], [1, 0]];
        for (i, want) in expected.iter().enumerate() {
            curve.decode(i as u64, &mut cell).unwrap();
            assert_eq!(&cell, want, "index {i}");
            assert_eq!(curve.encode(want).unwrap(), i as u64);
        }
    }

    #[test]
    fn golden_3d_order_2_prefix() {
        // Frozen orientation convention: first eight cells of the 3D order-2
        // curve. Any change here is a breaking change to CVOX 2D layouts.
        let curve = HilbertCurve::new(2, 3).unwrap();
        let expected: [[u32; 3]; 8] = [
            [0, 0, 0],
            [0, 1, 0],
            [1, 1, 0],
            [1, 0, 0],
            [1, 0, 1],
            [1, 1, 1],
            [0, 1, 1],
            [0, 0, 1],
        ];
        let mut cell = [0u32; 3];
        for (i, want) in expected.iter().enumerate() {
            curve.decode(i as u64, &mut cell).unwrap();
            assert_eq!(&cell, want, "index {i}");
        }
    }

    #[test]
    fn round_trip_small_orders() {
        for dim in [2u32, 3] {
            for order in 1..=4u32 {
                let curve = HilbertCurve::new(order, dim).unwrap();
                let mut cell = vec![0u32; dim as usize];
                for index in 0..curve.cell_count() {
                    curve.decode(index, &mut cell).unwrap();
                    assert_eq!(curve.encode(&cell).unwrap(), index);
                }
            }
        }
    }

    #[test]
    fn consecutive_cells_are_unit_steps() {
        for (order, dim) in [(4u32, 2u32), (3, 3)] {
            let curve = HilbertCurve::new(order, dim).unwrap();
            let mut prev = vec![0u32; dim as usize];
            let mut cur = vec![0u32; dim as usize];
            curve.decode(0, &mut prev).unwrap();
            for index in 1..curve.cell_count() {
                curve.decode(index, &mut cur).unwrap();
                let diff: u32 = prev
                    .iter()
                    .zip(&cur)
                    .map(|(a, b)| a.abs_diff(*b))
                    .sum();
                assert_eq!(diff, 1, "step {index} is not a unit move");
                prev.copy_from_slice(&cur);
            }
        }
    }

    #[test]
    fn rejects_out_of_range() {
        let curve = HilbertCurve::new(2, 2).unwrap();
        let mut cell = [0u32; 2];
        assert_eq!(
            curve.decode(16, &mut cell),
            Err(HilbertError::IndexOutOfRange { index: 16, count: 16 })
        );
        assert_eq!(
            curve.encode(&[4, 0]),
            Err(HilbertError::CellOutOfRange { coord: 4, side: 4 })
        );
        assert_eq!(
            curve.encode(&[0, 0, 0]),
            Err(HilbertError::DimMismatch { got: 3, expected: 2 })
        );
        assert_eq!(
            HilbertCurve::new(0, 2),
            Err(HilbertError::BadConfig { order: 0, dim: 2 })
        );
        assert_eq!(
            HilbertCurve::new(32, 2),
            Err(HilbertError::BadConfig { order: 32, dim: 2 })
        );
    }
}
