//! Banded LU factorisation with partial pivoting.
//!
//! Row-wise band storage: row `i` keeps columns `i - kl ..= i + kl + ku`,
//! the extra `kl` upper diagonals absorbing fill-in from row interchanges.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> usize {
        self.kl
    }

    pub fn upper(&self) -> usize {
        self.ku
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.offset(i, j)]
        } else {
            0.0
        }
    }

    /// Sets an entry inside the declared band.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(self.in_band(i, j), "({i},{j}) outside band");
        let k = self.offset(i, j);
        self.data[k] = value;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(self.in_band(i, j), "({i},{j}) outside band");
        let k = self.offset(i, j);
        self.data[k] += value;
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = 0.0);
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Factorises in place.
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let kl = self.kl;
        let ku_ext = self.kl + self.ku;
        let mut pivots = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + ku_ext).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.offset(k, k)].abs();
            for i in k + 1..=last_row {
                let a = self.data[self.offset(i, k)].abs();
                if a > best {
                    best = a;
                    p = i;
                }
            }
            pivots[k] = p;
            if !(best > 0.0) || !best.is_finite() {
                return Err(Error::SingularMatrix(k));
            }
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.offset(k, j), self.offset(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.offset(k, k)];
            let kstart = self.offset(k, k);
            for i in k + 1..=last_row {
                let ik = self.offset(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l == 0.0 {
                    continue;
                }
                // row k and row i are both contiguous over columns k+1..=last_col
                let istart = ik + 1;
                let len = last_col - k;
                let (head, tail) = self.data.split_at_mut(istart);
                let src = &head[kstart + 1..kstart + 1 + len];
                for (dst, s) in tail[..len].iter_mut().zip(src) {
                    *dst -= l * s;
                }
            }
        }
        Ok(BandLu {
            band: self,
            pivots,
        })
    }
}

#[derive(Clone, Debug)]
pub struct BandLu {
    band: BandMatrix,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn dim(&self) -> usize {
        self.band.n
    }

    /// Overwrites `b` with the solution of `A x = b`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let a = &self.band;
        let n = a.n;
        let kl = a.kl;
        let ku_ext = a.kl + a.ku;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + kl).min(n - 1) {
                    b[i] -= a.data[a.offset(i, k)] * bk;
                }
            }
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            let start = a.offset(i, i);
            let last = (i + ku_ext).min(n - 1);
            for (off, j) in (i + 1..=last).enumerate() {
                acc -= a.data[start + 1 + off] * b[j];
            }
            b[i] = acc / a.data[start];
        }
    }
}
