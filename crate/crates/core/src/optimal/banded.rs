//! Symmetric banded matrices and their Cholesky factorization.

/// Lower band of a symmetric `n x n` matrix with half-bandwidth `bw`.
#[derive(Debug, Clone)]
pub struct SymBanded {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBanded {
    pub fn zeros(n: usize, bw: usize) -> Self {
        SymBanded {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (i - j)
    }

    /// Adds `v` at `(i, j)`; the mirrored entry is implied.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// In-place `L L^T` factorization. Pivots that collapse below
    /// `1e-30 * max diagonal` are replaced by a huge value, which effectively
    /// drops that direction instead of failing.
    pub fn factor(mut self) -> BandedCholesky {
        let (n, bw) = (self.n, self.bw);
        let max_diag = (0..n).map(|i| self.get(i, i)).fold(0.0f64, f64::max).max(1e-300);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let kmin = lo.max(j.saturating_sub(bw));
                let mut s = self.data[self.slot(i, j)];
                for k in kmin..j {
                    s -= self.data[self.slot(i, k)] * self.data[self.slot(j, k)];
                }
                if i == j {
                    let piv = if s <= 1e-30 * max_diag { 1e128 } else { s };
                    let slot = self.slot(i, i);
                    self.data[slot] = piv.sqrt();
                } else {
                    let d = self.data[self.slot(j, j)];
                    let slot = self.slot(i, j);
                    self.data[slot] = s / d;
                }
            }
        }
        BandedCholesky { l: self }
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    l: SymBanded,
}

impl BandedCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.l.n, self.l.bw);
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = y[i];
            for k in lo..i {
                s -= self.l.data[self.l.slot(i, k)] * y[k];
            }
            y[i] = s / self.l.data[self.l.slot(i, i)];
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut s = y[i];
            for k in (i + 1)..=hi {
                s -= self.l.data[self.l.slot(k, i)] * y[k];
            }
            y[i] = s / self.l.data[self.l.slot(i, i)];
        }
        y
    }
}
