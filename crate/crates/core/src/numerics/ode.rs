use super::NumericsError;
use crate::scalar::{lit, Scalar};

/// Default integrator step in seconds.
pub const DEFAULT_STEP: f64 = 1e-4;
/// Upper bound on bisection iterations when localizing an event.
pub const MAX_BISECTIONS: usize = 50;

/// Right-hand side `ẋ = F(t, x)` of an ODE of fixed dimension.
pub trait VectorField<T: Scalar> {
    fn dimension(&self) -> usize;

    /// Writes `F(t, x)` into `dx`; both slices have length `dimension()`.
    fn eval(&self, t: T, x: &[T], dx: &mut [T]);
}

impl<T: Scalar, V: VectorField<T> + ?Sized> VectorField<T> for &V {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn eval(&self, t: T, x: &[T], dx: &mut [T]) {
        (**self).eval(t, x, dx)
    }
}

/// Adapts a closure into a [`VectorField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<T: Scalar, F: Fn(T, &[T], &mut [T])> VectorField<T> for FnField<F> {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: T, x: &[T], dx: &mut [T]) {
        (self.f)(t, x, dx)
    }
}

/// Classical fourth-order Runge-Kutta stepper with reusable stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4<T> {
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    tmp: Vec<T>,
}

impl<T: Scalar> Rk4<T> {
    pub fn new(dim: usize) -> Self {
        let z = vec![T::zero(); dim];
        Self { k1: z.clone(), k2: z.clone(), k3: z.clone(), k4: z.clone(), tmp: z }
    }

    /// Advances `x` in place from `t` to `t + h`.
    pub fn step<F: VectorField<T> + ?Sized>(
        &mut self,
        field: &F,
        t: T,
        x: &mut [T],
        h: T,
    ) -> Result<(), NumericsError> {
        let half = lit::<T>(0.5);
        let sixth = h / lit(6.0);
        let n = x.len();

        field.eval(t, x, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + half * h * self.k1[i];
        }
        field.eval(t + half * h, &self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + half * h * self.k2[i];
        }
        field.eval(t + half * h, &self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        field.eval(t + h, &self.tmp, &mut self.k4);

        let two = lit::<T>(2.0);
        for i in 0..n {
            let incr = self.k1[i] + two * self.k2[i] + two * self.k3[i] + self.k4[i];
            if !incr.is_finite() {
                return Err(NumericsError::NonFinite { t: t.to_f64().unwrap_or(f64::NAN) });
            }
            x[i] = x[i] + sixth * incr;
        }
        Ok(())
    }
}

/// One RK4 step of length `h` from `(t, x)`.
pub fn rk4_step<T: Scalar, F: VectorField<T> + ?Sized>(
    field: &F,
    t: T,
    x: &[T],
    h: T,
) -> Result<Vec<T>, NumericsError> {
    let mut out = x.to_vec();
    Rk4::new(x.len()).step(field, t, &mut out, h)?;
    Ok(out)
}

fn check_request<T: Scalar, F: VectorField<T> + ?Sized>(
    field: &F,
    t0: T,
    x0: &[T],
    t1: T,
    step: T,
) -> Result<usize, NumericsError> {
    if x0.len() != field.dimension() {
        return Err(NumericsError::Dimension { expected: field.dimension(), found: x0.len() });
    }
    if !(step > T::zero()) {
        return Err(NumericsError::InvalidRequest("step must be positive"));
    }
    if !(t1 >= t0) {
        return Err(NumericsError::InvalidRequest("end time precedes start time"));
    }
    let n = ((t1 - t0) / step).ceil();
    n.to_usize().ok_or(NumericsError::InvalidRequest("step count out of range"))
}

/// Integrates from `t0` to `t1` with uniform steps no longer than `step`.
pub fn integrate_fixed<T: Scalar, F: VectorField<T> + ?Sized>(
    field: &F,
    t0: T,
    x0: &[T],
    t1: T,
    step: T,
) -> Result<Vec<T>, NumericsError> {
    let n = check_request(field, t0, x0, t1, step)?;
    let mut x = x0.to_vec();
    if n == 0 {
        return Ok(x);
    }
    let h = (t1 - t0) / T::from_usize(n).unwrap();
    let mut rk = Rk4::new(x.len());
    for k in 0..n {
        let t = t0 + T::from_usize(k).unwrap() * h;
        rk.step(field, t, &mut x, h)?;
    }
    Ok(x)
}

/// Bisects the sub-step length in `[0, h]` from `(t, x)` until the bracket on
/// the first nonnegative value of `guard` is narrower than `tol`.
///
/// Requires `guard(x) < 0` and `guard(rk4(x, h)) >= 0`. Returns the right end
/// of the final bracket, so the returned state always has `guard >= 0`.
pub fn refine_crossing<T, F, G>(field: &F, guard: G, t: T, x: &[T], h: T, tol: T) -> Result<(T, Vec<T>), NumericsError>
where
    T: Scalar,
    F: VectorField<T> + ?Sized,
    G: Fn(&[T]) -> T,
{
    let mut rk = Rk4::new(x.len());
    let mut lo = T::zero();
    let mut hi = h;
    let mut x_hi = x.to_vec();
    rk.step(field, t, &mut x_hi, h)?;
    let mut x_mid = x.to_vec();
    let half = lit::<T>(0.5);
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= tol {
            break;
        }
        let mid = (lo + hi) * half;
        x_mid.copy_from_slice(x);
        rk.step(field, t, &mut x_mid, mid)?;
        if guard(&x_mid) >= T::zero() {
            hi = mid;
            x_hi.copy_from_slice(&x_mid);
        } else {
            lo = mid;
        }
    }
    Ok((t + hi, x_hi))
}

/// Integrates until `guard` first becomes nonnegative, or returns `None` if
/// that does not happen before `t_max`.
///
/// The crossing is bracketed by one RK4 step and refined by bisection to
/// `1e-10 · max(|t_max|, step)`.
pub fn locate_event<T, F, G>(
    field: &F,
    guard: G,
    t0: T,
    x0: &[T],
    t_max: T,
    step: T,
) -> Result<Option<(T, Vec<T>)>, NumericsError>
where
    T: Scalar,
    F: VectorField<T> + ?Sized,
    G: Fn(&[T]) -> T,
{
    let n = check_request(field, t0, x0, t_max, step)?;
    if guard(x0) >= T::zero() {
        return Err(NumericsError::InvalidRequest("guard must be negative at the start"));
    }
    if n == 0 {
        return Ok(None);
    }
    let tol = lit::<T>(1e-10) * t_max.abs().max(step);
    let h = (t_max - t0) / T::from_usize(n).unwrap();
    let mut rk = Rk4::new(x0.len());
    let mut x = x0.to_vec();
    let mut next = x0.to_vec();
    for k in 0..n {
        let t = t0 + T::from_usize(k).unwrap() * h;
        next.copy_from_slice(&x);
        rk.step(field, t, &mut next, h)?;
        if guard(&next) >= T::zero() {
            return refine_crossing(field, &guard, t, &x, h, tol).map(Some);
        }
        std::mem::swap(&mut x, &mut next);
    }
    Ok(None)
}
