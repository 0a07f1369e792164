//! Dense symmetric linear algebra for small Hessians (dimension ≤ ~30).
//!
//! Classical cyclic Jacobi rotations; quadratically convergent, fully
//! deterministic, and accurate to near machine precision at these sizes.

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            assert_eq!(r.len(), n, "matrix must be square");
            data.extend_from_slice(r);
        }
        Self { n, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    /// Maximum absolute asymmetry `|A - A^T|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn symmetrize(&mut self) {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let m = 0.5 * (self.get(i, j) + self.get(j, i));
                self.set(i, j, m);
                self.set(j, i, m);
            }
        }
    }
}

/// Eigendecomposition of a symmetric matrix: `A = V diag(values) V^T`.
///
/// `values` are sorted ascending; column `k` of `vectors` is the eigenvector
/// for `values[k]`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

/// Off-diagonal residual target, relative to the matrix scale.
const JACOBI_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 60;

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix.
///
/// Sweeps run until every off-diagonal entry is below
/// `1e-12 * (1 + max_diag)`, well inside the 1e-10 residual needed by the
/// Hessian classification downstream.
pub fn sym_eigen(a: &Matrix) -> SymEigen {
    let n = a.n;
    let mut m = a.clone();
    m.symmetrize();
    let mut v = Matrix::zeros(n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    if n == 0 {
        return SymEigen { values: vec![], vectors: v };
    }

    for _sweep in 0..MAX_SWEEPS {
        let mut scale: f64 = 0.0;
        for i in 0..n {
            scale = scale.max(m.get(i, i).abs());
        }
        let thresh = JACOBI_TOL * (1.0 + scale);
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m.get(p, q).abs());
            }
        }
        if off <= thresh {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() <= thresh * 1e-4 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = 0.5 * (aqq - app) / apq;
                // Stable tangent of the rotation angle.
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(i, i).partial_cmp(&m.get(j, j)).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n);
    for (newcol, &oldcol) in order.iter().enumerate() {
        for row in 0..n {
            vectors.set(row, newcol, v.get(row, oldcol));
        }
    }
    SymEigen { values, vectors }
}

impl SymEigen {
    /// Solve `(A + shift·I) x = b` through the spectral decomposition.
    pub fn solve_shifted(&self, b: &[f64], shift: f64) -> Vec<f64> {
        let n = self.values.len();
        assert_eq!(b.len(), n);
        // coords of b in the eigenbasis
        let mut coef = vec![0.0; n];
        for k in 0..n {
            let mut dot = 0.0;
            for i in 0..n {
                dot += self.vectors.get(i, k) * b[i];
            }
            coef[k] = dot / (self.values[k] + shift);
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += self.vectors.get(i, k) * coef[k];
            }
            x[i] = acc;
        }
        x
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn min_abs_eigenvalue(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v.abs()))
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reconstruct(e: &SymEigen) -> Matrix {
        let n = e.values.len();
        let mut a = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += e.vectors.get(i, k) * e.values[k] * e.vectors.get(j, k);
                }
                a.set(i, j, acc);
            }
        }
        a
    }

    #[test]
    fn diagonal_matrix() {
        let a = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, -1.0]]);
        let e = sym_eigen(&a);
        assert_relative_eq!(e.values[0], -1.0, max_relative = 1e-12);
        assert_relative_eq!(e.values[1], 3.0, max_relative = 1e-12);
    }

    #[test]
    fn known_2x2() {
        // eigenvalues of [[2,1],[1,2]] are 1 and 3
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let e = sym_eigen(&a);
        assert_relative_eq!(e.values[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(e.values[1], 3.0, max_relative = 1e-12);
    }

    #[test]
    fn random_reconstruction_and_orthogonality() {
        let mut rng = crate::rng::SplitMix64::new(99);
        for n in [1usize, 2, 3, 5, 8, 13] {
            let mut a = Matrix::zeros(n);
            for i in 0..n {
                for j in i..n {
                    let x = rng.next_normal();
                    a.set(i, j, x);
                    a.set(j, i, x);
                }
            }
            let e = sym_eigen(&a);
            let r = reconstruct(&e);
            let scale = 1.0 + e.max_abs_eigenvalue();
            for i in 0..n {
                for j in 0..n {
                    assert!(
                        (r.get(i, j) - a.get(i, j)).abs() <= 1e-10 * scale,
                        "reconstruction failed at ({i},{j}) for n={n}"
                    );
                }
            }
            // V^T V = I
            for c1 in 0..n {
                for c2 in 0..n {
                    let mut dot = 0.0;
                    for r in 0..n {
                        dot += e.vectors.get(r, c1) * e.vectors.get(r, c2);
                    }
                    let expect = if c1 == c2 { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn shifted_solve_matches_direct() {
        let a = Matrix::from_rows(&[
            vec![4.0, 1.0, 0.0],
            vec![1.0, 3.0, -1.0],
            vec![0.0, -1.0, 2.0],
        ]);
        let e = sym_eigen(&a);
        let b = vec![1.0, 2.0, 3.0];
        let x = e.solve_shifted(&b, 0.5);
        // check (A + 0.5 I) x = b
        for i in 0..3 {
            let mut acc = 0.5 * x[i];
            for j in 0..3 {
                acc += a.get(i, j) * x[j];
            }
            assert_relative_eq!(acc, b[i], max_relative = 1e-10);
        }
    }
}
