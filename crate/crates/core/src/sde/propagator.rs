//! Overflow-free running factorization `W = Q·diag(e^ℓ)·U` of the
//! time-ordered exponential.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{identity, matmul, orthonormality_defect, qr_mgs};

/// Tolerance on `‖QᵀQ − I‖` after re-orthonormalization.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Snapshot of the propagator factorization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagatorRecord {
    pub dim: usize,
    /// Orthonormal frame `Q`, row-major.
    pub q_basis: Vec<f64>,
    /// Accumulated `log|R_ii|`.
    pub log_stretch: Vec<f64>,
    /// Unit upper-triangular factor `U`, row-major.
    pub upper: Vec<f64>,
    pub elapsed: f64,
}

impl PropagatorRecord {
    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            q_basis: identity(dim),
            log_stretch: vec![0.0; dim],
            upper: identity(dim),
            elapsed: 0.0,
        }
    }

    pub fn q_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.q_basis)
    }

    pub fn upper_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.upper)
    }

    /// `W·x`, evaluated in a numerically stable order. Overflows only when
    /// the true result does.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let ux = self.upper_matrix() * x;
        let scaled = DVector::from_fn(self.dim, |i, _| ux[i] * self.log_stretch[i].exp());
        self.q_matrix() * scaled
    }

    pub fn orthonormality_defect(&self) -> f64 {
        orthonormality_defect(&self.q_basis, self.dim)
    }
}

/// Mutable propagator between re-orthonormalizations: `W = Y·diag(e^ℓ)·U`
/// where `Y` has drifted away from orthonormality since the last QR.
#[derive(Debug, Clone)]
pub(crate) struct RunningPropagator {
    pub d: usize,
    pub y: Vec<f64>,
    pub log_stretch: Vec<f64>,
    pub upper: Vec<f64>,
    r: Vec<f64>,
    tmp: Vec<f64>,
    pub extra_qr: usize,
}

impl RunningPropagator {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            y: identity(d),
            log_stretch: vec![0.0; d],
            upper: identity(d),
            r: vec![0.0; d * d],
            tmp: vec![0.0; d * d],
            extra_qr: 0,
        }
    }

    /// Left-multiplies `Y` by the one-step map `p`.
    pub fn advance(&mut self, p: &[f64]) {
        matmul(p, &self.y, &mut self.tmp, self.d);
        std::mem::swap(&mut self.y, &mut self.tmp);
    }

    /// Factors `Y = Q·R`, folds `R` into the stretch and the unit triangle,
    /// and keeps `Q` as the new frame.
    pub fn reorthonormalize(&mut self) {
        let d = self.d;
        qr_mgs(&mut self.y, &mut self.r, d);
        if orthonormality_defect(&self.y, d) > ORTHONORMALITY_TOL {
            self.extra_qr += 1;
            qr_mgs(&mut self.y, &mut self.tmp, d);
            // Combine the two triangular factors: R ← R₂·R₁.
            let mut combined = vec![0.0; d * d];
            matmul(&self.tmp, &self.r, &mut combined, d);
            self.r.copy_from_slice(&combined);
        }
        // New total: R·diag(e^ℓ)·U = diag(r_ii e^ℓ_i)·[Ũ_ij e^{ℓ_j−ℓ_i}]·U with Ũ = diag(1/r_ii)·R.
        let mut step = vec![0.0; d * d];
        let mut log_r = vec![0.0; d];
        for i in 0..d {
            let rii = self.r[i * d + i];
            log_r[i] = rii.abs().ln();
            for j in i..d {
                step[i * d + j] = if j == i {
                    1.0
                } else {
                    self.r[i * d + j] / rii * (self.log_stretch[j] - self.log_stretch[i]).exp()
                };
            }
        }
        matmul(&step, &self.upper, &mut self.tmp, d);
        std::mem::swap(&mut self.upper, &mut self.tmp);
        for i in 0..d {
            self.log_stretch[i] += log_r[i];
        }
    }

    pub fn record(&self, elapsed: f64) -> PropagatorRecord {
        PropagatorRecord {
            dim: self.d,
            q_basis: self.y.clone(),
            log_stretch: self.log_stretch.clone(),
            upper: self.upper.clone(),
            elapsed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorization_reproduces_product() {
        let d = 3;
        let steps = [
            vec![1.2, 0.3, -0.1, 0.0, 0.9, 0.4, 0.2, -0.3, 1.1],
            vec![0.8, -0.2, 0.5, 0.1, 1.3, 0.0, -0.4, 0.2, 0.7],
            vec![1.0, 0.6, 0.0, -0.5, 1.0, 0.2, 0.1, 0.1, 0.9],
        ];
        let mut prop = RunningPropagator::new(d);
        let mut w = DMatrix::<f64>::identity(d, d);
        for (k, p) in steps.iter().cycle().take(30).enumerate() {
            prop.advance(p);
            w = DMatrix::from_row_slice(d, d, p) * w;
            if k % 4 == 3 {
                prop.reorthonormalize();
            }
        }
        prop.reorthonormalize();
        let rec = prop.record(1.0);
        assert!(rec.orthonormality_defect() < ORTHONORMALITY_TOL);
        let x = DVector::from_vec(vec![0.3, -1.0, 0.5]);
        let expect = &w * &x;
        let got = rec.apply(&x);
        assert!((expect - got).norm() / (&w * &x).norm() < 1e-12);
    }
}
