//! One-step propagators for affine 2-state systems.

use crate::converter::{AffineSystem, StateVector};

pub type Mat2 = [[f64; 2]; 2];

const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

/// Classical fourth-order Runge-Kutta step for `dx/dt = a·x + b`.
///
/// The result is not checked; callers test [`StateVector::is_finite`].
#[inline]
pub fn rk4_step(sys: &AffineSystem, state: StateVector, dt: f64) -> StateVector {
    let x = state.to_array();
    let k1 = sys.derivative(x);
    let k2 = sys.derivative(axpy(x, 0.5 * dt, k1));
    let k3 = sys.derivative(axpy(x, 0.5 * dt, k2));
    let k4 = sys.derivative(axpy(x, dt, k3));
    let w = dt / 6.0;
    StateVector::from_array([
        x[0] + w * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + w * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ])
}

#[inline]
fn axpy<const N: usize>(x: [f64; N], h: f64, k: [f64; N]) -> [f64; N] {
    let mut out = x;
    for i in 0..N {
        out[i] += h * k[i];
    }
    out
}

/// RK4 for `N` states under a time-varying input sampled at the step start,
/// midpoint and end.
pub fn rk4_forced<const N: usize, F>(x: [f64; N], dt: f64, inputs: [f64; 3], f: F) -> [f64; N]
where
    F: Fn(&[f64; N], f64) -> [f64; N],
{
    let k1 = f(&x, inputs[0]);
    let k2 = f(&axpy(x, 0.5 * dt, k1), inputs[1]);
    let k3 = f(&axpy(x, 0.5 * dt, k2), inputs[1]);
    let k4 = f(&axpy(x, dt, k3), inputs[2]);
    let mut out = x;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Closed-form solution over `dt`:
/// `exp(a·dt)·x + ∫₀^dt exp(a·(dt − τ))·b dτ`.
pub fn exact_step(sys: &AffineSystem, state: StateVector, dt: f64) -> StateVector {
    if dt == 0.0 {
        return state;
    }
    let m = scale(sys.a, dt);
    let e = expm2(m);
    let p = phi1(m);
    let x = state.to_array();
    let ex = mat_vec(e, x);
    let pb = mat_vec(p, sys.b);
    StateVector::from_array([ex[0] + dt * pb[0], ex[1] + dt * pb[1]])
}

/// Matrix exponential of a 2×2 matrix.
///
/// With `s = tr/2` and `δ = ((m00 − m11)/2)² + m01·m10`, every analytic
/// function of `m` is `f0·I + f1·(m − s·I)`. For `exp` that gives
/// `e^s·[cosh(√δ)·I + sinh(√δ)/√δ·(m − s·I)]`, switching to `cos`/`sin` for
/// complex eigenvalues and to a Taylor series when the eigenvalues coincide.
pub fn expm2(m: Mat2) -> Mat2 {
    let s = 0.5 * (m[0][0] + m[1][1]);
    let half_diff = 0.5 * (m[0][0] - m[1][1]);
    let delta = half_diff * half_diff + m[0][1] * m[1][0];
    let (c, sh) = cosh_sinhc(delta);
    let es = s.exp();
    let f0 = es * c;
    let f1 = es * sh;
    [
        [f0 + f1 * (m[0][0] - s), f1 * m[0][1]],
        [f1 * m[1][0], f0 + f1 * (m[1][1] - s)],
    ]
}

/// `(cosh(√δ), sinh(√δ)/√δ)` for real `δ` of either sign.
fn cosh_sinhc(delta: f64) -> (f64, f64) {
    if delta.abs() < 1e-3 {
        // series through δ^4 keeps the truncation below 1e-17
        let d = delta;
        let c = 1.0 + d / 2.0 * (1.0 + d / 12.0 * (1.0 + d / 30.0 * (1.0 + d / 56.0)));
        let sh = 1.0 + d / 6.0 * (1.0 + d / 20.0 * (1.0 + d / 42.0 * (1.0 + d / 72.0)));
        (c, sh)
    } else if delta > 0.0 {
        let r = delta.sqrt();
        (r.cosh(), r.sinh() / r)
    } else {
        let w = (-delta).sqrt();
        (w.cos(), w.sin() / w)
    }
}

/// `φ1(m) = Σ mᵏ/(k+1)!`, evaluated by Taylor series on a scaled-down
/// argument and the doubling identity `φ1(2m) = ½·φ1(m)·(e^m + I)`.
fn phi1(m: Mat2) -> Mat2 {
    let norm = m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    let mut squarings = 0;
    let mut scaled = m;
    let mut n = norm;
    while n > 0.25 {
        n *= 0.5;
        squarings += 1;
    }
    if squarings > 0 {
        scaled = scale(m, 0.5f64.powi(squarings));
    }
    let (mut e, mut p) = taylor_exp_phi1(scaled);
    for _ in 0..squarings {
        let e_plus_i = add(e, IDENTITY);
        p = scale(mat_mul(p, e_plus_i), 0.5);
        e = mat_mul(e, e);
    }
    p
}

fn taylor_exp_phi1(m: Mat2) -> (Mat2, Mat2) {
    // term_k = m^k / k!; exp = Σ term_k, φ1 = Σ term_k/(k+1)
    let mut term = IDENTITY;
    let mut e = IDENTITY;
    let mut p = IDENTITY;
    for k in 1..30 {
        term = scale(mat_mul(term, m), 1.0 / k as f64);
        e = add(e, term);
        p = add(p, scale(term, 1.0 / (k + 1) as f64));
        let mag = term.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
        if mag < 1e-18 {
            break;
        }
    }
    (e, p)
}

/// Reference `exp(m)` by scaling and squaring a Taylor series; independent
/// of the closed form in [`expm2`].
pub fn expm2_series(m: Mat2) -> Mat2 {
    let norm = m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    let mut squarings = 0;
    let mut n = norm;
    while n > 0.25 {
        n *= 0.5;
        squarings += 1;
    }
    let (mut e, _) = taylor_exp_phi1(scale(m, 0.5f64.powi(squarings)));
    for _ in 0..squarings {
        e = mat_mul(e, e);
    }
    e
}

fn scale(m: Mat2, k: f64) -> Mat2 {
    [[m[0][0] * k, m[0][1] * k], [m[1][0] * k, m[1][1] * k]]
}

fn add(a: Mat2, b: Mat2) -> Mat2 {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}

fn mat_mul(a: Mat2, b: Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

fn mat_vec(a: Mat2, x: [f64; 2]) -> [f64; 2] {
    [
        a[0][0] * x[0] + a[0][1] * x[1],
        a[1][0] * x[0] + a[1][1] * x[1],
    ]
}
