use super::{Matrix, NumericsError, SymMatrix};
use crate::scalar::{lit, Scalar};

const MAX_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi rotations.
///
/// Sweeps stop once the off-diagonal Frobenius norm is at most
/// `1e-12 · ‖m‖_F`, or when a sweep no longer changes it.
pub fn sym_eigenvalues<T: Scalar>(m: &SymMatrix<T>) -> Result<Vec<T>, NumericsError> {
    let n = m.order();
    if n == 0 {
        return Err(NumericsError::InvalidRequest("matrix order must be at least 1"));
    }
    m.as_matrix().check_finite()?;
    let mut a = m.as_matrix().clone();
    let target = lit::<T>(1e-12) * a.frobenius_norm();

    let off = |a: &Matrix<T>| {
        let mut s = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s = s + a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };

    let mut prev = off(&a);
    for _ in 0..MAX_SWEEPS {
        if prev <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, p, q);
            }
        }
        let now = off(&a);
        if now >= prev {
            break;
        }
        prev = now;
    }

    let mut eig: Vec<T> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    Ok(eig)
}

/// Annihilates `a[p][q]` with a two-sided Givens rotation.
fn rotate<T: Scalar>(a: &mut Matrix<T>, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == T::zero() {
        return;
    }
    let app = a[(p, p)];
    let aqq = a[(q, q)];
    let one = T::one();
    let theta = (aqq - app) / (lit::<T>(2.0) * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + one).sqrt());
    let t = if theta == T::zero() { one } else { t };
    let c = one / (t * t + one).sqrt();
    let s = t * c;

    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = T::zero();
    a[(q, p)] = T::zero();
}

/// Largest singular value, `sqrt(λ_max(mᵀm))`.
pub fn spectral_norm<T: Scalar>(m: &Matrix<T>) -> Result<T, NumericsError> {
    if m.rows() == 0 || m.cols() == 0 || m.is_zero() {
        return Ok(T::zero());
    }
    let gram = SymMatrix::new(m.transpose().matmul(m)?)?;
    let eig = sym_eigenvalues(&gram)?;
    Ok(eig.last().copied().unwrap_or_else(T::zero).max(T::zero()).sqrt())
}
