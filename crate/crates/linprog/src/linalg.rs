//! Dense LU factorization with partial pivoting.

/// `P A = L U` stored in place; `perm[i]` is the original row placed at `i`.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    /// Factorizes a square matrix given as rows. Returns `None` when a pivot
    /// falls below `1e-13` times the largest entry.
    pub fn factor(rows: &[Vec<f64>]) -> Option<Self> {
        let n = rows.len();
        let mut lu = Vec::with_capacity(n * n);
        for r in rows {
            debug_assert_eq!(r.len(), n);
            lu.extend_from_slice(r);
        }
        let scale = lu
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, max) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold(
                    (k, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
            if max <= 1e-13 * scale {
                return None;
            }
            if p != k {
                for c in 0..n {
                    lu.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                if f != 0.0 {
                    for c in k + 1..n {
                        lu[i * n + c] -= f * lu[k * n + c];
                    }
                }
            }
        }
        Some(Self { n, lu, perm })
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|c| self.lu[i * n + c] * x[c]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|c| self.lu[i * n + c] * x[c]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }

    /// Solves `A' y = c`.
    pub fn solve_transpose(&self, c: &[f64]) -> Vec<f64> {
        let n = self.n;
        // U' w = c, then L' v = w, then y = P' v.
        let mut w = c.to_vec();
        for i in 0..n {
            let s: f64 = (0..i).map(|r| self.lu[r * n + i] * w[r]).sum();
            w[i] = (w[i] - s) / self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|r| self.lu[r * n + i] * w[r]).sum();
            w[i] -= s;
        }
        let mut y = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            y[p] = w[i];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|r| r.iter().zip(x).map(|(u, v)| u * v).sum())
            .collect()
    }

    #[test]
    fn solves_and_transposes() {
        let a = vec![
            vec![0.0, 2.0, 1.0],
            vec![1.0, -1.0, 0.0],
            vec![3.0, 0.5, -2.0],
        ];
        let lu = Lu::factor(&a).unwrap();
        let b = [1.0, 2.0, 3.0];
        let x = lu.solve(&b);
        for (u, v) in matvec(&a, &x).iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        let at: Vec<Vec<f64>> = (0..3).map(|j| a.iter().map(|r| r[j]).collect()).collect();
        let y = lu.solve_transpose(&b);
        for (u, v) in matvec(&at, &y).iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_is_rejected() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(Lu::factor(&a).is_none());
    }
}
