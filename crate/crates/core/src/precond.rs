//! Exact diagonal preconditioners and the change of variables they induce.
//!
//! A [`DiagPreconditioner`] stores curvature magnitudes `d`; the multiplier
//! applied to a gradient is `1/d`. No damping is added here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, norm2, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreconditionerKind {
    Jacobi,
    Equilibration,
    GaussNewton,
    AbsHessianDiag,
}

impl PreconditionerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Jacobi => "jacobi",
            Self::Equilibration => "equilibration",
            Self::GaussNewton => "gauss-newton",
            Self::AbsHessianDiag => "abs-hessian-diag",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagPreconditioner {
    pub kind: PreconditionerKind,
    pub scales: Vec<f64>,
}

impl DiagPreconditioner {
    pub fn new(kind: PreconditionerKind, scales: Vec<f64>) -> Result<Self> {
        if let Some(i) = scales.iter().position(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::Precondition(format!(
                "scale {i} must be finite and nonnegative, got {}",
                scales[i]
            )));
        }
        Ok(Self { kind, scales })
    }

    /// Wraps a Gauss-Newton diagonal computed by [`crate::model::gauss_newton_diag`].
    pub fn gauss_newton(scales: Vec<f64>) -> Result<Self> {
        Self::new(PreconditionerKind::GaussNewton, scales)
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    /// Raises every scale to at least `rel · max(d)`. Returns the floor used and
    /// how many entries were lifted.
    pub fn floored(&self, rel: f64) -> (Self, f64, usize) {
        let max = self.scales.iter().fold(0.0f64, |m, &s| m.max(s));
        let floor = rel * max;
        let mut lifted = 0;
        let scales = self
            .scales
            .iter()
            .map(|&s| {
                if s < floor {
                    lifted += 1;
                    floor
                } else {
                    s
                }
            })
            .collect();
        (
            Self {
                kind: self.kind,
                scales,
            },
            floor,
            lifted,
        )
    }
}

/// `d_i = |H_ii|`. Zero entries are kept.
pub fn jacobi_diag(h: &DenseMatrix) -> Result<DiagPreconditioner> {
    h.require_symmetric()?;
    let scales = h.diag().into_iter().map(f64::abs).collect();
    DiagPreconditioner::new(PreconditionerKind::Jacobi, scales)
}

/// `d_i = ‖H_{i,·}‖₂ = √diag(H²)_i`.
pub fn equilibration_diag(h: &DenseMatrix) -> Result<DiagPreconditioner> {
    h.require_symmetric()?;
    let scales = (0..h.rows()).map(|i| norm2(h.row(i))).collect();
    DiagPreconditioner::new(PreconditionerKind::Equilibration, scales)
}

/// `d_i = |H|_ii`, the Jacobi preconditioner of the absolute Hessian.
pub fn abs_hessian_diag(h: &DenseMatrix) -> Result<DiagPreconditioner> {
    let abs = linalg::abs_matrix(h)?;
    let scales = abs.diag().into_iter().map(|x| x.max(0.0)).collect();
    DiagPreconditioner::new(PreconditionerKind::AbsHessianDiag, scales)
}

/// `D^{-1/2} H D^{-1/2}`, i.e. `H_ij / √(d_i d_j)`.
pub fn transform_hessian(h: &DenseMatrix, d: &[f64]) -> Result<DenseMatrix> {
    h.require_square()?;
    crate::error::check_dim(h.rows(), d.len())?;
    if let Some(i) = d.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::Precondition(format!(
            "scale {i} must be positive, got {}",
            d[i]
        )));
    }
    let inv_sqrt: Vec<f64> = d.iter().map(|x| 1.0 / x.sqrt()).collect();
    let n = h.rows();
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = h[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
        }
    }
    Ok(out)
}

/// `|H|^{-1/2} H |H|^{-1/2}`, whose eigenvalues are all `±1`.
pub fn perfect_precondition(h: &DenseMatrix) -> Result<DenseMatrix> {
    let eig = linalg::sym_eig(h)?;
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
    if max == 0.0 || min <= linalg::SINGULAR_RATIO * max {
        return Err(Error::Singular);
    }
    // |H|^{-1/2} shares eigenvectors with H, so the product collapses to sign(λ).
    let inv_sqrt_abs = eig.reconstruct_with(|l| 1.0 / l.abs().sqrt());
    inv_sqrt_abs.matmul(h)?.matmul(&inv_sqrt_abs)?.symmetrized()
}

/// `κ(D^{-1/2} H D^{-1/2}) / κ(H)`. Values below one mean the preconditioner helps.
pub fn reduction_ratio(h: &DenseMatrix, d: &[f64]) -> Result<f64> {
    let before = linalg::condition_number(h)?;
    let after = linalg::condition_number(&transform_hessian(h, d)?)?;
    Ok(after / before)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{condition_number, sym_eig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, rng: &mut impl Rng) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let x: f64 = rng.random_range(-1.0..1.0);
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
        }
        m
    }

    fn swap() -> DenseMatrix {
        DenseMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap()
    }

    #[test]
    fn jacobi_examples() {
        let d = jacobi_diag(&DenseMatrix::from_diag(&[2.0, -3.0])).unwrap();
        assert_eq!(d.scales, vec![2.0, 3.0]);
        assert_eq!(jacobi_diag(&swap()).unwrap().scales, vec![0.0, 0.0]);
    }

    #[test]
    fn equilibration_examples() {
        let h = DenseMatrix::from_rows(&[&[3.0, 4.0], &[4.0, 3.0]]).unwrap();
        assert_eq!(equilibration_diag(&h).unwrap().scales, vec![5.0, 5.0]);
        assert_eq!(equilibration_diag(&swap()).unwrap().scales, vec![1.0, 1.0]);
    }

    #[test]
    fn equilibration_is_sqrt_diag_of_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_symmetric(12, &mut rng);
        let h2 = h.matmul(&h).unwrap();
        let eq = equilibration_diag(&h).unwrap();
        for (s, d) in eq.scales.iter().zip(h2.diag()) {
            assert!((s - d.sqrt()).abs() < 1e-10);
        }
        // diag(|H|²) = diag(H²): equilibration is Jacobi of |H|² under a root.
        let a = linalg::abs_matrix(&h).unwrap();
        let a2 = a.matmul(&a).unwrap();
        for (x, y) in a2.diag().iter().zip(h2.diag()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn diagonal_matrix_jacobi_equals_equilibration() {
        let h = DenseMatrix::from_diag(&[4.0, 0.5, 2.0]);
        assert_eq!(jacobi_diag(&h).unwrap().scales, equilibration_diag(&h).unwrap().scales);
    }

    #[test]
    fn transform_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random_symmetric(4, &mut rng);
        assert_eq!(transform_hessian(&h, &[1.0; 4]).unwrap(), h);
        let t = transform_hessian(&DenseMatrix::from_diag(&[4.0, 1.0]), &[4.0, 1.0]).unwrap();
        assert_eq!(t, DenseMatrix::identity(2));
        assert!(matches!(
            transform_hessian(&h, &[1.0, 0.0, 1.0, 1.0]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn transform_spectrum_matches_left_scaling() {
        // D^{-1}H is similar to D^{-1/2}HD^{-1/2}; its eigenvalues are those of
        // the symmetric matrix D^{-1/2}HD^{-1/2}. Independent route: the
        // characteristic polynomial roots of D^{-1}H checked through
        // det(D^{-1}H - λI) ≈ 0 at every eigenvalue of the transform.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random_symmetric(5, &mut rng);
        let d: Vec<f64> = (0..5).map(|_| rng.random_range(0.5..3.0)).collect();
        let t = transform_hessian(&h, &d).unwrap();
        let lam = sym_eig(&t).unwrap().eigenvalues;
        for &l in &lam {
            let mut shifted = DenseMatrix::zeros(5, 5);
            for i in 0..5 {
                for j in 0..5 {
                    shifted[(i, j)] = h[(i, j)] / d[i] - if i == j { l } else { 0.0 };
                }
            }
            assert!(linalg::determinant(&shifted).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn perfect_precondition_examples() {
        let p = perfect_precondition(&DenseMatrix::from_diag(&[5.0, -2.0])).unwrap();
        assert!(p.sub(&DenseMatrix::from_diag(&[1.0, -1.0])).unwrap().max_abs() < 1e-12);
        let p = perfect_precondition(&DenseMatrix::identity(3)).unwrap();
        assert!(p.sub(&DenseMatrix::identity(3)).unwrap().max_abs() < 1e-12);
        assert_eq!(
            perfect_precondition(&DenseMatrix::from_diag(&[1.0, 0.0])),
            Err(Error::Singular)
        );
    }

    #[test]
    fn perfect_precondition_random_indefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = random_symmetric(10, &mut rng);
        let p = perfect_precondition(&h).unwrap();
        assert!((condition_number(&p).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn reduction_ratio_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = random_symmetric(6, &mut rng);
        assert!((reduction_ratio(&h, &[1.0; 6]).unwrap() - 1.0).abs() < 1e-12);
        let r = reduction_ratio(&DenseMatrix::from_diag(&[4.0, 1.0]), &[4.0, 1.0]).unwrap();
        assert!((r - 0.25).abs() < 1e-14);
        let eq = equilibration_diag(&swap()).unwrap();
        assert!((reduction_ratio(&swap(), &eq.scales).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn abs_hessian_diag_ratio_is_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let h = random_symmetric(8, &mut rng);
        let d = abs_hessian_diag(&h).unwrap();
        assert!(reduction_ratio(&h, &d.scales).unwrap().is_finite());
    }

    #[test]
    fn floor_lifts_zero_scales() {
        let d = DiagPreconditioner::new(PreconditionerKind::Jacobi, vec![0.0, 2.0, 1e-12]).unwrap();
        let (f, floor, lifted) = d.floored(1e-8);
        assert_eq!(floor, 2e-8);
        assert_eq!(lifted, 2);
        assert_eq!(f.scales, vec![2e-8, 2.0, 2e-8]);
    }

    #[test]
    fn negative_scales_rejected() {
        assert!(DiagPreconditioner::new(PreconditionerKind::Jacobi, vec![-1.0]).is_err());
    }
}
