//! Skyline (variable-band) LDLᵀ factorization for symmetric quasi-definite
//! systems.
//!
//! Both planner stages produce KKT systems whose nonzeros hug the diagonal
//! once constraint rows are interleaved with the variables they touch, so a
//! profile factorization stores no fill outside the envelope and costs
//! O(n · bandwidth²). Quasi-definite matrices admit an LDLᵀ factorization
//! for any symmetric permutation, so no pivoting is done.

#[derive(Debug, Clone)]
pub struct SkylineLdl {
    n: usize,
    /// perm[new] = old
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    lower: Vec<f64>,
    diag: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroPivot {
    pub index: usize,
    pub value: f64,
}

impl SkylineLdl {
    /// Factors the symmetric matrix given by `entries` (original indexing,
    /// either triangle, duplicates summed) after applying `perm`.
    pub fn factor(
        n: usize,
        perm: Vec<usize>,
        entries: &[(usize, usize, f64)],
    ) -> Result<Self, ZeroPivot> {
        debug_assert_eq!(perm.len(), n);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }

        let mut first: Vec<usize> = (0..n).collect();
        for &(r, c, _) in entries {
            let (a, b) = (inv[r], inv[c]);
            let (row, col) = if a >= b { (a, b) } else { (b, a) };
            if col < first[row] {
                first[row] = col;
            }
        }
        let mut offset = vec![0usize; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i]);
        }
        let mut lower = vec![0.0; offset[n]];
        let mut diag = vec![0.0; n];
        for &(r, c, v) in entries {
            let (a, b) = (inv[r], inv[c]);
            let (row, col) = if a >= b { (a, b) } else { (b, a) };
            if row == col {
                diag[row] += v;
            } else {
                lower[offset[row] + col - first[row]] += v;
            }
        }

        for i in 0..n {
            let fi = first[i];
            let base_i = offset[i];
            for j in fi..i {
                let fj = first[j];
                let base_j = offset[j];
                let k0 = fi.max(fj);
                let mut acc = lower[base_i + j - fi];
                for k in k0..j {
                    acc -= lower[base_i + k - fi] * diag[k] * lower[base_j + k - fj];
                }
                lower[base_i + j - fi] = acc / diag[j];
            }
            let mut d = diag[i];
            for k in fi..i {
                let l = lower[base_i + k - fi];
                d -= l * l * diag[k];
            }
            if !d.is_finite() || d.abs() < 1e-300 {
                return Err(ZeroPivot {
                    index: perm[i],
                    value: d,
                });
            }
            diag[i] = d;
        }

        Ok(Self {
            n,
            perm,
            first,
            offset,
            lower,
            diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of L, a proxy for the factorization cost.
    pub fn profile(&self) -> usize {
        self.lower.len()
    }

    /// Solves K x = b in place (original indexing).
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let mut w: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.lower[self.offset[i]..self.offset[i + 1]];
            let mut acc = w[i];
            for (k, l) in (fi..i).zip(row) {
                acc -= l * w[k];
            }
            w[i] = acc;
        }
        for i in 0..n {
            w[i] /= self.diag[i];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.lower[self.offset[i]..self.offset[i + 1]];
            let xi = w[i];
            for (k, l) in (fi..i).zip(row) {
                w[k] -= l * xi;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = w[new];
        }
    }
}
