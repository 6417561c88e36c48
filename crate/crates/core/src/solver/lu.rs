//! Dense LU factorization of a simplex basis with product-form updates.
//!
//! The basis is factorized as `P B = L U` with partial pivoting. Column
//! replacements append an eta vector; the caller refactorizes once the eta
//! file grows past its threshold.

/// Relative pivot threshold below which a basis is declared singular.
const SINGULAR_TOL: f64 = 1e-11;

#[derive(Debug, Clone)]
struct Eta {
    pos: usize,
    /// Dense eta column: entry `pos` holds `1/w_pos`, others `-w_i/w_pos`.
    col: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BasisFactor {
    n: usize,
    /// Packed L (unit lower, below diagonal) and U (upper), row-major.
    lu: Vec<f64>,
    /// `perm[i]` is the original row placed at position `i`.
    perm: Vec<usize>,
    etas: Vec<Eta>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Singular;

impl BasisFactor {
    /// Factorizes the square matrix whose `k`-th column is `columns[k]`.
    pub fn factorize(columns: &[Vec<f64>]) -> Result<Self, Singular> {
        let n = columns.len();
        let mut lu = vec![0.0; n * n];
        for (j, col) in columns.iter().enumerate() {
            debug_assert_eq!(col.len(), n);
            for (i, &v) in col.iter().enumerate() {
                lu[i * n + j] = v;
            }
        }
        let scale = lu.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (mut piv, mut best) = (k, lu[k * n + k].abs());
            for i in k + 1..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    piv = i;
                    best = v;
                }
            }
            if best <= SINGULAR_TOL * scale {
                return Err(Singular);
            }
            if piv != k {
                for j in 0..n {
                    lu.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
            }
            let d = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / d;
                if f != 0.0 {
                    lu[i * n + k] = f;
                    let (top, bottom) = lu.split_at_mut(i * n);
                    let src = &top[k * n + k + 1..k * n + n];
                    for (dst, s) in bottom[k + 1..n].iter_mut().zip(src) {
                        *dst -= f * s;
                    }
                } else {
                    lu[i * n + k] = 0.0;
                }
            }
        }
        Ok(Self { n, lu, perm, etas: Vec::new() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn eta_count(&self) -> usize {
        self.etas.len()
    }

    /// Solves `B x = v`.
    pub fn ftran(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| v[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n + i + 1..(i + 1) * n];
            let s: f64 = row.iter().zip(&x[i + 1..]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        for eta in &self.etas {
            let xp = x[eta.pos];
            if xp != 0.0 {
                for (i, e) in eta.col.iter().enumerate() {
                    if i == eta.pos {
                        x[i] = e * xp;
                    } else {
                        x[i] += e * xp;
                    }
                }
            }
        }
        x
    }

    /// Solves `B' y = v`.
    pub fn btran(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = v.to_vec();
        for eta in self.etas.iter().rev() {
            z[eta.pos] = eta.col.iter().zip(&z).map(|(a, b)| a * b).sum();
        }
        // U' w = z
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.lu[k * n + i] * z[k];
            }
            z[i] = s / self.lu[i * n + i];
        }
        // L' u = w
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= self.lu[k * n + i] * z[k];
            }
            z[i] = s;
        }
        let mut y = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            y[p] = z[i];
        }
        y
    }

    /// Replaces basis column `pos` given `w = B^{-1} a_new`.
    pub fn update(&mut self, pos: usize, w: &[f64]) -> Result<(), Singular> {
        let piv = w[pos];
        if piv.abs() < 1e-12 {
            return Err(Singular);
        }
        let col = w
            .iter()
            .enumerate()
            .map(|(i, &wi)| if i == pos { 1.0 / piv } else { -wi / piv })
            .collect();
        self.etas.push(Eta { pos, col });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols() -> Vec<Vec<f64>> {
        vec![vec![2.0, 1.0, 0.0], vec![0.0, 3.0, 1.0], vec![1.0, 0.0, 4.0]]
    }

    fn mat_vec(cols: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        let n = cols.len();
        (0..n).map(|i| (0..n).map(|j| cols[j][i] * x[j]).sum()).collect()
    }

    fn mat_tr_vec(cols: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        cols.iter().map(|c| c.iter().zip(y).map(|(a, b)| a * b).sum()).collect()
    }

    #[test]
    fn solves_and_transposed_solves() {
        let c = cols();
        let f = BasisFactor::factorize(&c).unwrap();
        let v = [1.0, -2.0, 3.0];
        let x = f.ftran(&v);
        for (a, b) in mat_vec(&c, &x).iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
        let y = f.btran(&v);
        for (a, b) in mat_tr_vec(&c, &y).iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn eta_update_matches_refactorization() {
        let mut c = cols();
        let mut f = BasisFactor::factorize(&c).unwrap();
        let new_col = vec![1.0, 1.0, 1.0];
        let w = f.ftran(&new_col);
        f.update(1, &w).unwrap();
        c[1] = new_col;
        let g = BasisFactor::factorize(&c).unwrap();
        let v = [0.5, 2.0, -1.0];
        for (a, b) in f.ftran(&v).iter().zip(g.ftran(&v)) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in f.btran(&v).iter().zip(g.btran(&v)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_detected() {
        let c = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(BasisFactor::factorize(&c).is_err());
    }

    #[test]
    fn empty_basis() {
        let f = BasisFactor::factorize(&[]).unwrap();
        assert!(f.ftran(&[]).is_empty());
        assert!(f.btran(&[]).is_empty());
    }
}
