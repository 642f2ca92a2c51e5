//! Allocation-free dense kernels for the small (d ≤ 8) row-major matrices
//! used inside the integrator hot loop. Anything heavier goes through
//! nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

/// `out = a · b` for row-major `d×d` matrices.
#[inline]
pub fn matmul(a: &[f64], b: &[f64], out: &mut [f64], d: usize) {
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += a[i * d + k] * b[k * d + j];
            }
            out[i * d + j] = acc;
        }
    }
}

/// `out = a · x` for a row-major `d×d` matrix.
#[inline]
pub fn matvec(a: &[f64], x: &[f64], out: &mut [f64], d: usize) {
    for i in 0..d {
        let mut acc = 0.0;
        for k in 0..d {
            acc += a[i * d + k] * x[k];
        }
        out[i] = acc;
    }
}

/// Maximum absolute row sum.
#[inline]
pub fn inf_norm(a: &[f64], d: usize) -> f64 {
    (0..d)
        .map(|i| a[i * d..(i + 1) * d].iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn from_row_major(v: &[f64], d: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(d, d, v)
}

/// Matrix exponential by scaling and squaring with a diagonal Padé(6,6)
/// approximant (relative truncation error below 1e-16 at norm 1/2).
#[derive(Debug, Clone)]
pub struct Expm {
    d: usize,
    x: Vec<f64>,
    x2: Vec<f64>,
    x4: Vec<f64>,
    x6: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    tmp: Vec<f64>,
}

const PADE6: [f64; 7] = [
    1.0,
    0.5,
    5.0 / 44.0,
    1.0 / 66.0,
    1.0 / 792.0,
    1.0 / 15840.0,
    1.0 / 665280.0,
];

impl Expm {
    pub fn new(d: usize) -> Self {
        let z = vec![0.0; d * d];
        Self {
            d,
            x: z.clone(),
            x2: z.clone(),
            x4: z.clone(),
            x6: z.clone(),
            u: z.clone(),
            v: z.clone(),
            tmp: z,
        }
    }

    pub fn compute(&mut self, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        if d == 1 {
            out[0] = x[0].exp();
            return;
        }
        let norm = inf_norm(x, d);
        let squarings = if norm > 0.5 {
            (norm / 0.5).log2().ceil() as i32
        } else {
            0
        };
        let scale = 0.5f64.powi(squarings);
        for (s, v) in self.x.iter_mut().zip(x) {
            *s = v * scale;
        }
        matmul(&self.x, &self.x, &mut self.x2, d);
        matmul(&self.x2, &self.x2, &mut self.x4, d);
        matmul(&self.x4, &self.x2, &mut self.x6, d);
        let c = PADE6;
        for k in 0..d * d {
            self.tmp[k] = c[3] * self.x2[k] + c[5] * self.x4[k];
            self.v[k] = c[2] * self.x2[k] + c[4] * self.x4[k] + c[6] * self.x6[k];
        }
        for i in 0..d {
            self.tmp[i * d + i] += c[1];
            self.v[i * d + i] += c[0];
        }
        matmul(&self.x, &self.tmp, &mut self.u, d);
        // Solve (V − U)·R = V + U.
        for k in 0..d * d {
            let (v, u) = (self.v[k], self.u[k]);
            self.tmp[k] = v - u;
            out[k] = v + u;
        }
        solve_in_place(&mut self.tmp, out, d);
        for _ in 0..squarings {
            matmul(out, out, &mut self.tmp, d);
            out.copy_from_slice(&self.tmp);
        }
    }
}

/// Solves `A·X = B` for square row-major `A` and `B` by Gaussian elimination
/// with partial pivoting; `A` is destroyed and `B` overwritten with `X`.
pub fn solve_in_place(a: &mut [f64], b: &mut [f64], d: usize) {
    for col in 0..d {
        let piv = (col..d)
            .max_by(|&i, &j| a[i * d + col].abs().total_cmp(&a[j * d + col].abs()))
            .expect("nonempty");
        if piv != col {
            for k in 0..d {
                a.swap(piv * d + k, col * d + k);
                b.swap(piv * d + k, col * d + k);
            }
        }
        let p = a[col * d + col];
        for row in col + 1..d {
            let f = a[row * d + col] / p;
            if f == 0.0 {
                continue;
            }
            for k in col..d {
                a[row * d + k] -= f * a[col * d + k];
            }
            for k in 0..d {
                b[row * d + k] -= f * b[col * d + k];
            }
        }
    }
    for row in (0..d).rev() {
        for k in 0..d {
            let mut acc = b[row * d + k];
            for j in row + 1..d {
                acc -= a[row * d + j] * b[j * d + k];
            }
            b[row * d + k] = acc / a[row * d + row];
        }
    }
}

/// In-place QR of the columns of a row-major `d×d` matrix by modified
/// Gram–Schmidt with one reorthogonalization pass. On return `y` holds Q and
/// `r` the upper-triangular factor with a nonnegative diagonal.
pub fn qr_mgs(y: &mut [f64], r: &mut [f64], d: usize) {
    r.iter_mut().for_each(|v| *v = 0.0);
    for j in 0..d {
        for _pass in 0..2 {
            for k in 0..j {
                let mut dot = 0.0;
                for i in 0..d {
                    dot += y[i * d + k] * y[i * d + j];
                }
                r[k * d + j] += dot;
                for i in 0..d {
                    y[i * d + j] -= dot * y[i * d + k];
                }
            }
        }
        let norm = (0..d).map(|i| y[i * d + j].powi(2)).sum::<f64>().sqrt();
        r[j * d + j] = norm;
        if norm > 0.0 {
            for i in 0..d {
                y[i * d + j] /= norm;
            }
        }
    }
}

/// `max |QᵀQ − I|` over entries.
pub fn orthonormality_defect(q: &[f64], d: usize) -> f64 {
    let mut worst = 0.0f64;
    for a in 0..d {
        for b in 0..d {
            let dot: f64 = (0..d).map(|i| q[i * d + a] * q[i * d + b]).sum();
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).abs());
        }
    }
    worst
}

/// Square-root factor `L` (n×rank) with `L Lᵀ = cov` for a symmetric
/// positive-semidefinite matrix. Eigenvalues below `rel_tol · λ_max` are
/// dropped.
pub fn psd_factor(cov: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = cov.nrows();
    let eig = SymmetricEigen::new(cov.clone());
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..n)
        .filter(|&i| eig.eigenvalues[i] > rel_tol * lmax && eig.eigenvalues[i] > 0.0)
        .collect();
    let mut l = DMatrix::zeros(n, keep.len());
    for (col, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        for row in 0..n {
            l[(row, col)] = eig.eigenvectors[(row, i)] * s;
        }
    }
    l
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_matches_nalgebra() {
        let x = [0.3, -1.2, 0.7, 2.1, 0.1, -0.4, 0.0, 0.9, -1.5];
        let mut out = [0.0; 9];
        Expm::new(3).compute(&x, &mut out);
        let reference = from_row_major(&x, 3).exp();
        for i in 0..3 {
            for j in 0..3 {
                assert!((out[i * 3 + j] - reference[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn expm_of_traceless_has_unit_determinant() {
        let x = [0.05, 0.02, -0.03, 0.01, -0.08, 0.04, 0.02, 0.06, 0.03];
        let mut out = [0.0; 9];
        Expm::new(3).compute(&x, &mut out);
        let det = from_row_major(&out, 3).determinant();
        assert!((det - 1.0).abs() < 1e-15);
    }

    #[test]
    fn qr_reconstructs() {
        let a = [2.0, -1.0, 0.5, 1.0, 3.0, -2.0, 0.0, 1.0, 4.0];
        let mut q = a;
        let mut r = [0.0; 9];
        qr_mgs(&mut q, &mut r, 3);
        assert!(orthonormality_defect(&q, 3) < 1e-14);
        let mut back = [0.0; 9];
        matmul(&q, &r, &mut back, 3);
        for (x, y) in back.iter().zip(&a) {
            assert!((x - y).abs() < 1e-13);
        }
        for i in 0..3 {
            assert!(r[i * 3 + i] >= 0.0);
            for j in 0..i {
                assert_eq!(r[i * 3 + j], 0.0);
            }
        }
    }

    #[test]
    fn psd_factor_reproduces_covariance() {
        let c = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let l = psd_factor(&c, 1e-12);
        assert_eq!(l.ncols(), 2);
        assert!((&l * l.transpose() - c).abs().max() < 1e-12);
    }
}
