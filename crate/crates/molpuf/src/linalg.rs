//! Banded LU factorization with partial pivoting.
//!
//! The stage-ordered reaction networks produced by the synthesizer couple
//! each species only to species a bounded index distance away, so their
//! Jacobians are narrow band matrices. Factor/solve cost is then
//! O(n·b²)/O(n·b) instead of the dense O(n³)/O(n²), which is what makes
//! implicit stepping affordable for many-stage networks.
//!
//! Storage follows the conventional band layout: an `(2·kl + ku + 1) × n`
//! array, column-major, with entry `(i, j)` stored at band row
//! `kl + ku + i - j`. The extra `kl` rows on top hold the fill-in that
//! partial pivoting introduces.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("matrix is singular at column {column}")]
pub struct SingularMatrix {
    pub column: usize,
}

/// A square band matrix with `kl` subdiagonals and `ku` superdiagonals.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// Leading dimension: rows per column in `data`.
    ldab: usize,
    /// Column-major band storage, zero-initialized.
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        assert!(n > 0, "band matrix must be non-empty");
        let kl = kl.min(n - 1);
        let ku = ku.min(n - 1);
        let ldab = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            ldab,
            data: vec![0.0; ldab * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Zeroes all entries, keeping the allocation.
    pub fn clear(&mut self) {
        self.data.fill(0.0);
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(
            i + self.ku + self.kl >= j && j + self.kl >= i,
            "entry ({i},{j}) outside band kl={} ku={} (with fill)",
            self.kl,
            self.ku
        );
        j * self.ldab + (self.kl + self.ku + i - j)
    }

    /// True when `(i, j)` lies within the declared band (fill rows excluded).
    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i + self.ku >= j && j + self.kl >= i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// In-place LU with partial pivoting. On success the factors overwrite
    /// the band and `pivots[j]` records the row swapped into position `j`
    /// at step `j`.
    pub fn factor(&mut self, pivots: &mut Vec<usize>) -> Result<(), SingularMatrix> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        pivots.clear();
        pivots.resize(n, 0);
        for j in 0..n {
            let row_max = (j + kl).min(n - 1);
            let col_max = (j + kl + ku).min(n - 1);

            // Pivot: largest magnitude in column j, rows j..=row_max.
            let mut p = j;
            let mut best = self.get(j, j).abs();
            for i in (j + 1)..=row_max {
                let v = self.get(i, j).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            pivots[j] = p;
            if best == 0.0 {
                return Err(SingularMatrix { column: j });
            }
            if p != j {
                for c in j..=col_max {
                    let a = self.idx(j, c);
                    let b = self.idx(p, c);
                    self.data.swap(a, b);
                }
            }

            // Eliminate below the pivot; multipliers overwrite column j.
            let inv = 1.0 / self.get(j, j);
            for i in (j + 1)..=row_max {
                let k = self.idx(i, j);
                self.data[k] *= inv;
            }
            if j == n - 1 {
                continue;
            }
            for c in (j + 1)..=col_max {
                let ujc = self.data[self.idx(j, c)];
                if ujc == 0.0 {
                    continue;
                }
                // Both slices run over consecutive i for fixed column.
                let mult_base = self.idx(j + 1, j);
                let targ_base = self.idx(j + 1, c);
                let len = row_max - j;
                for k in 0..len {
                    let m = self.data[mult_base + k];
                    self.data[targ_base + k] -= m * ujc;
                }
            }
        }
        Ok(())
    }

    /// Solves `A x = b` in place using factors from [`BandMatrix::factor`].
    pub fn solve(&self, pivots: &[usize], b: &mut [f64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        debug_assert_eq!(pivots.len(), n);
        debug_assert_eq!(b.len(), n);

        // Forward: apply permutations and L (unit lower, multipliers stored).
        for j in 0..n {
            let p = pivots[j];
            if p != j {
                b.swap(j, p);
            }
            let row_max = (j + kl).min(n - 1);
            let bj = b[j];
            if bj != 0.0 {
                for i in (j + 1)..=row_max {
                    b[i] -= self.get(i, j) * bj;
                }
            }
        }

        // Backward: U (bandwidth ku + kl after fill).
        for j in (0..n).rev() {
            b[j] /= self.get(j, j);
            let bj = b[j];
            if bj == 0.0 {
                continue;
            }
            let i_min = j.saturating_sub(kl + ku);
            for i in i_min..j {
                b[i] -= self.get(i, j) * bj;
            }
        }
    }
}
