//! Certification of linear closed loops `ẋ = A11 x + A12 e`,
//! `ė = A21 x + A22 e` with a quadratic `V(x) = xᵀPx`.
//!
//! There is no SDP solver here. A candidate `P` comes from outside (a data
//! file, or any `γ ↦ P` source) and is checked against the block LMI
//!
//! ```text
//! [ A11ᵀP + PA11 + M²A21ᵀA21 + εI    PA12      ]
//! [ A12ᵀP                            (ε − γ²)I ]  ⪯ 0
//! ```
//!
//! which implies `⟨∇V, f⟩ ≤ −ε|x|² − ε|e|² − H(x)² + γ²|e|²` with
//! `H(x) = M|A21 x|`.

use thiserror::Error;

use crate::numerics::{norm, spectral_norm, sym_eigenvalues, Matrix, NumericsError, SymMatrix};
use crate::protocols::NodePartition;
use crate::scalar::{lit, Scalar};

/// Largest eigenvalue accepted as "negative semidefinite".
pub const LMI_TOLERANCE: f64 = 1e-9;
/// Default `ε` in the LMI.
pub const DEFAULT_EPS_LMI: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("matrix `{field}` has shape {found:?}, expected {expected:?}")]
    Dimension { field: &'static str, expected: (usize, usize), found: (usize, usize) },
    #[error("no certificate: LMI infeasible at the upper end gamma = {hi}")]
    NoCertificate { hi: f64 },
    #[error("invalid certificate: {0}")]
    Invalid(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

fn check_shape<T: Scalar>(field: &'static str, m: &Matrix<T>, expected: (usize, usize)) -> Result<(), CertifyError> {
    if m.shape() != expected {
        return Err(CertifyError::Dimension { field, expected, found: m.shape() });
    }
    Ok(())
}

/// Linear NCS model with the node split of `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearNcsModel<T> {
    pub a11: Matrix<T>,
    pub a12: Matrix<T>,
    pub a21: Matrix<T>,
    pub a22: Matrix<T>,
    pub partition: NodePartition,
}

impl<T: Scalar> LinearNcsModel<T> {
    pub fn new(
        a11: Matrix<T>,
        a12: Matrix<T>,
        a21: Matrix<T>,
        a22: Matrix<T>,
        partition: NodePartition,
    ) -> Result<Self, CertifyError> {
        let nx = a11.rows();
        let ne = partition.total();
        check_shape("a11", &a11, (nx, nx))?;
        check_shape("a12", &a12, (nx, ne))?;
        check_shape("a21", &a21, (ne, nx))?;
        check_shape("a22", &a22, (ne, ne))?;
        Ok(Self { a11, a12, a21, a22, partition })
    }

    pub fn n_x(&self) -> usize {
        self.a11.rows()
    }

    pub fn n_e(&self) -> usize {
        self.partition.total()
    }

    /// Writes `f(x, e)` and `g(x, e)`.
    #[inline]
    pub fn flow(&self, x: &[T], e: &[T], dx: &mut [T], de: &mut [T]) {
        dx.iter_mut().for_each(|v| *v = T::zero());
        de.iter_mut().for_each(|v| *v = T::zero());
        self.a11.mul_vec_acc(x, dx);
        self.a12.mul_vec_acc(e, dx);
        self.a21.mul_vec_acc(x, de);
        self.a22.mul_vec_acc(e, de);
    }

    /// `H(x) = M|A21 x|`.
    pub fn h_gain(&self, m: T, x: &[T]) -> T {
        m * norm(&self.a21.mul_vec(x))
    }
}

/// Quadratic storage function `V(x) = xᵀPx` with its gains.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate<T> {
    pub p: SymMatrix<T>,
    pub gamma: T,
    pub l: T,
    pub eta: T,
    pub eps_lmi: T,
    pub m: T,
}

impl<T: Scalar> Certificate<T> {
    /// Builds a certificate from a verified `P`, deriving `L` and `η`.
    pub fn build(model: &LinearNcsModel<T>, p: SymMatrix<T>, gamma: T, eps_lmi: T, m: T) -> Result<Self, CertifyError> {
        let l = compute_l(m, &model.a22)?;
        let eta = derive_eta(&p, eps_lmi)?;
        let cert = Self { p, gamma, l, eta, eps_lmi, m };
        cert.validate(model)?;
        Ok(cert)
    }

    /// `V(x) = xᵀPx`.
    pub fn v(&self, x: &[T]) -> T {
        self.p.quad_form(x)
    }

    /// Checks `P ≻ 0`, the LMI at `γ`, and `γ² > η`.
    pub fn validate(&self, model: &LinearNcsModel<T>) -> Result<(), CertifyError> {
        if !(self.gamma * self.gamma > self.eta) {
            return Err(CertifyError::Invalid(format!("gamma^2 = {} <= eta = {}", self.gamma * self.gamma, self.eta)));
        }
        if !(self.l > T::zero() && self.eta > T::zero() && self.eps_lmi > T::zero() && self.m > T::zero()) {
            return Err(CertifyError::Invalid("L, eta, eps and M must be positive".into()));
        }
        if !verify_lmi(model, &self.p, self.gamma, self.eps_lmi, self.m)? {
            return Err(CertifyError::Invalid(format!("LMI not satisfied at gamma = {}", self.gamma)));
        }
        Ok(())
    }
}

/// `L = M·‖A22‖₂`.
pub fn compute_l<T: Scalar>(m: T, a22: &Matrix<T>) -> Result<T, CertifyError> {
    Ok(m * spectral_norm(a22)?)
}

/// The symmetric LMI block matrix.
pub fn lmi_block<T: Scalar>(
    model: &LinearNcsModel<T>,
    p: &SymMatrix<T>,
    gamma: T,
    eps_lmi: T,
    m: T,
) -> Result<SymMatrix<T>, CertifyError> {
    let nx = model.n_x();
    let ne = model.n_e();
    if p.order() != nx {
        return Err(CertifyError::Dimension { field: "p", expected: (nx, nx), found: (p.order(), p.order()) });
    }
    let pm = p.as_matrix();
    let atp = model.a11.transpose().matmul(pm)?;
    let pa = pm.matmul(&model.a11)?;
    let ctc = model.a21.transpose().matmul(&model.a21)?.scale(m * m);
    let top_left = atp.add(&pa)?.add(&ctc)?.add(&Matrix::identity(nx).scale(eps_lmi))?;
    let top_right = pm.matmul(&model.a12)?;

    let n = nx + ne;
    let mut b = Matrix::zeros(n, n);
    for i in 0..nx {
        for j in 0..nx {
            b[(i, j)] = top_left[(i, j)];
        }
        for j in 0..ne {
            b[(i, nx + j)] = top_right[(i, j)];
            b[(nx + j, i)] = top_right[(i, j)];
        }
    }
    for k in 0..ne {
        b[(nx + k, nx + k)] = eps_lmi - gamma * gamma;
    }
    Ok(SymMatrix::new(b)?)
}

/// `P ≻ 0` and the LMI block has largest eigenvalue at most [`LMI_TOLERANCE`].
pub fn verify_lmi<T: Scalar>(
    model: &LinearNcsModel<T>,
    p: &SymMatrix<T>,
    gamma: T,
    eps_lmi: T,
    m: T,
) -> Result<bool, CertifyError> {
    let block = lmi_block(model, p, gamma, eps_lmi, m)?;
    let p_eig = sym_eigenvalues(p)?;
    if !(p_eig[0] > T::zero()) {
        return Ok(false);
    }
    let b_eig = sym_eigenvalues(&block)?;
    Ok(*b_eig.last().unwrap() <= lit(LMI_TOLERANCE))
}

/// Smallest `γ` in `range` (to within `tol`) for which `p_source(γ)` yields a
/// verified LMI. Feasibility is monotone in `γ` for a fixed `P`.
pub fn bisect_gamma<T, S>(
    model: &LinearNcsModel<T>,
    p_source: S,
    range: (T, T),
    eps_lmi: T,
    m: T,
    tol: T,
) -> Result<(T, Certificate<T>), CertifyError>
where
    T: Scalar,
    S: Fn(T) -> Option<SymMatrix<T>>,
{
    let (mut lo, mut hi) = range;
    let feasible = |g: T| -> Result<Option<SymMatrix<T>>, CertifyError> {
        match p_source(g) {
            Some(p) if verify_lmi(model, &p, g, eps_lmi, m)? => Ok(Some(p)),
            _ => Ok(None),
        }
    };
    let mut best = feasible(hi)?.ok_or(CertifyError::NoCertificate { hi: hi.to_f64().unwrap_or(f64::NAN) })?;
    if let Some(p) = feasible(lo)? {
        hi = lo;
        best = p;
    }
    while hi - lo > tol {
        let mid = (lo + hi) * lit(0.5);
        match feasible(mid)? {
            Some(p) => {
                hi = mid;
                best = p;
            }
            None => lo = mid,
        }
    }
    let cert = Certificate::build(model, best, hi, eps_lmi, m)?;
    Ok((hi, cert))
}

/// `η = min(ε/λ_max(P), ε)`, so that `−ε|x|² ≤ −ηV(x)` and `−ε|e|² ≤ −η|e|²`.
pub fn derive_eta<T: Scalar>(p: &SymMatrix<T>, eps_lmi: T) -> Result<T, CertifyError> {
    let eig = sym_eigenvalues(p)?;
    if !(eig[0] > T::zero()) {
        return Err(CertifyError::Invalid("P is not positive definite".into()));
    }
    Ok((eps_lmi / *eig.last().unwrap()).min(eps_lmi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_model(a11: f64) -> LinearNcsModel<f64> {
        let m = |v: f64| Matrix::from_rows(&[&[v]]).unwrap();
        LinearNcsModel::new(m(a11), m(1.0), m(0.0), m(0.5), NodePartition::scalar_nodes(1).unwrap()).unwrap()
    }

    #[test]
    fn compute_l_examples() {
        assert_eq!(compute_l(1.0, &Matrix::<f64>::zeros(2, 2)).unwrap(), 0.0);
        let d = Matrix::from_diag(&[2.0, 3.0]);
        assert!((compute_l(1.0f64, &d).unwrap() - 3.0).abs() < 1e-12);
        assert!((compute_l(2.0f64.sqrt(), &d).unwrap() - 4.24264069).abs() < 1e-8);
    }

    #[test]
    fn scalar_lmi_block_and_verification() {
        let model = scalar_model(-1.0);
        let p = SymMatrix::identity(1);
        let b = lmi_block(&model, &p, 1.0, 0.001, 1.0).unwrap();
        assert!((b[(0, 0)] + 1.999).abs() < 1e-15);
        assert_eq!(b[(0, 1)], 1.0);
        assert!((b[(1, 1)] + 0.999).abs() < 1e-15);
        assert!(verify_lmi(&model, &p, 1.0, 0.001, 1.0).unwrap());
    }

    #[test]
    fn unstable_model_fails() {
        let model = scalar_model(1.0);
        for p in [0.1, 1.0, 10.0] {
            assert!(!verify_lmi(&model, &SymMatrix::from_diag(&[p]), 100.0, 0.001, 1.0).unwrap());
        }
    }

    #[test]
    fn non_positive_p_fails() {
        let model = scalar_model(-1.0);
        assert!(!verify_lmi(&model, &SymMatrix::from_diag(&[0.0]), 10.0, 0.001, 1.0).unwrap());
        assert!(!verify_lmi(&model, &SymMatrix::from_diag(&[-1.0]), 10.0, 0.001, 1.0).unwrap());
    }

    #[test]
    fn bisection_brackets_the_boundary() {
        let model = scalar_model(-1.0);
        let src = |_g: f64| Some(SymMatrix::identity(1));
        let tol = 1e-3;
        let (g, cert) = bisect_gamma(&model, src, (0.5, 4.0), 0.001, 1.0, tol).unwrap();
        let ok = |g: f64| verify_lmi(&model, &SymMatrix::identity(1), g, 0.001, 1.0).unwrap();
        assert!(!ok(g - tol) && ok(g + tol) && ok(g));
        // det = (-1.999)(0.001 - g²) - 1 = 0
        let exact = (0.001 + 1.0 / 1.999f64).sqrt();
        assert!((g - exact).abs() <= tol);
        assert_eq!(cert.gamma, g);
        assert_eq!(cert.eta, 0.001);
    }

    #[test]
    fn bisection_reports_infeasible_range() {
        let model = scalar_model(-1.0);
        let r = bisect_gamma(&model, |_| Some(SymMatrix::identity(1)), (0.1, 0.2), 0.001, 1.0, 1e-3);
        assert!(matches!(r, Err(CertifyError::NoCertificate { .. })));
        let r = bisect_gamma(&model, |_| None, (0.1, 10.0), 0.001, 1.0, 1e-3);
        assert!(matches!(r, Err(CertifyError::NoCertificate { .. })));
    }

    #[test]
    fn eta_examples() {
        assert_eq!(derive_eta(&SymMatrix::<f64>::identity(3), 0.001).unwrap(), 0.001);
        assert!((derive_eta(&SymMatrix::from_diag(&[10.0f64, 1.0]), 0.001).unwrap() - 1e-4).abs() < 1e-18);
        assert!((derive_eta(&SymMatrix::<f64>::identity(2).scale(2.0), 0.01).unwrap() - 0.005).abs() < 1e-15);
    }

    #[test]
    fn wrong_shape_names_field() {
        let m = |r, c| Matrix::<f64>::zeros(r, c);
        let err = LinearNcsModel::new(m(2, 2), m(2, 3), m(1, 2), m(1, 1), NodePartition::scalar_nodes(1).unwrap())
            .unwrap_err();
        assert!(matches!(err, CertifyError::Dimension { field: "a12", .. }));
    }
}
