//! Characteristic functions for the spectrum of the linearization.
//!
//! An eigenvalue `lambda` is written as `lambda = (A - 1/phi)(phi - 1)`. The
//! eigenvalue problem then reduces to the zeros of the desingularized 2x2
//! determinant
//!
//! ```text
//! F(phi) = -P1 + phi^M P2 + A^-M R1 + (A phi)^-M R2
//! ```
//!
//! whose roots come in pairs `phi`, `1/(A phi)`. The four zeros of
//! `S(phi) = (phi - 1)(A phi - 1)(A phi^2 - 1)` are spurious. `F0` drops the
//! two exponentially small `A^-M` terms. Near `phi = 1` with `z = M (phi - 1)`
//! and `kappa = K sqrt(M)`, `K^-3 F(1 + z/M)` tends to
//! `Q(z; kappa) = e^z (1 + z^2/kappa^2) - (1 + z)`.
//!
//! The polynomials `P1, P2, R1, R2` are kept in two bases: powers of `phi`
//! and powers of `u = phi - 1`. The second is used near `phi = 1`, where every
//! term is `O(K^3)` and expanding in `phi` would cancel catastrophically.
//! Powers `phi^M` are formed in log space and the whole sum is carried with a
//! common real scale factor, so evaluation never overflows.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::poly::Poly;

/// Which function a [`CharfnValue`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Which {
    F,
    F0,
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharfnValue {
    pub value: C64,
    /// Derivative with respect to the function's own argument.
    pub derivative: C64,
    pub which: Which,
}

/// A root `phi` of the eigenvalue quadratic together with its partner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiLambdaPair {
    pub phi: C64,
    pub lambda: C64,
    pub phi2: C64,
}

impl PhiLambdaPair {
    pub fn new(p: &ModelParams, phi: C64) -> Result<Self> {
        Ok(Self {
            phi,
            lambda: lambda_of_phi(p, phi)?,
            phi2: (p.a() * phi).inv(),
        })
    }
}

#[derive(Debug, Clone)]
struct Parts {
    p1: Poly,
    p2: Poly,
    r1: Poly,
    r2: Poly,
}

impl Parts {
    /// `x` is `phi` in the chosen basis; the other arguments are `phi - 1`,
    /// `A phi - 1` and `A phi^2 - 1` in the same basis, built so that no
    /// coefficient is formed by cancellation.
    fn build(m: f64, k: f64, x: &Poly, xm1: &Poly, axm1: &Poly, ax2m1: &Poly) -> Self {
        let a = 1.0 + k;
        let a2 = a * a;
        let s = &(xm1 * axm1) * ax2m1;
        let xm1_sq = xm1 * xm1;
        let axm1_sq = axm1 * axm1;
        // (A phi - 1)^2 phi^2 - (phi - 1)^2
        let s1 = &(&axm1_sq * &(x * x)) - &xm1_sq;

        let p1 = &s1.scale(k) + &s.scale(k * m + 1.0);
        let p2 = &(&(x * &(&axm1_sq * axm1)) - &xm1_sq.scale(a2)) + &(axm1 * &xm1_sq).scale(m * a2);
        let r1 = s1.scale(-a2);
        // M (phi - 1) + phi
        let tail = &xm1.scale(m) + x;
        let r2 = &(&xm1_sq * xm1).scale(a) + &(&(x * &axm1_sq) * &tail).scale(a2);
        Parts { p1, p2, r1, r2 }
    }
}

/// Evaluation of `F` or `F0` carried as `exp(log_scale) * value`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledEval {
    pub log_scale: f64,
    pub value: C64,
    pub derivative: C64,
    /// Largest of the four terms evaluated with absolute coefficients, on the
    /// same scale. This bounds the rounding error of `value`, and residuals
    /// are judged relative to it.
    pub term_max: f64,
}

impl ScaledEval {
    /// `ln |F|`.
    pub fn ln_abs(&self) -> f64 {
        self.log_scale + self.value.norm().ln()
    }

    pub fn relative_residual(&self) -> f64 {
        if self.term_max == 0.0 {
            0.0
        } else {
            self.value.norm() / self.term_max
        }
    }

    /// `|phi F'(phi)|` relative to the term scale.
    pub fn relative_derivative(&self, phi: C64) -> f64 {
        if self.term_max == 0.0 {
            f64::INFINITY
        } else {
            (self.derivative * phi).norm() / self.term_max
        }
    }

    fn unscale(&self, which: Which) -> CharfnValue {
        let s = self.log_scale.exp();
        CharfnValue {
            value: self.value * s,
            derivative: self.derivative * s,
            which,
        }
    }
}

/// Precomputed characteristic function for one `(M, K)`.
///
/// `M` is stored as a real number so the same machinery can follow roots
/// while `M` varies continuously.
#[derive(Debug, Clone)]
pub struct CharFn {
    m: f64,
    k: f64,
    a: f64,
    ln_a: f64,
    in_phi: Parts,
    in_offset: Parts,
}

/// Below this `|phi - 1|` the offset basis is used.
const OFFSET_RADIUS: f64 = 0.5;

/// `ln(1 + u)` for complex `u`, accurate for small `|u|`.
pub(crate) fn ln_1p(u: C64) -> C64 {
    let re = 0.5 * (2.0 * u.re + u.norm_sqr()).ln_1p();
    let im = u.im.atan2(1.0 + u.re);
    C64::new(re, im)
}

impl CharFn {
    pub fn new(p: &ModelParams) -> Self {
        Self::with_size(p.m() as f64, p.k())
    }

    pub fn with_size(m: f64, k: f64) -> Self {
        let a = 1.0 + k;
        let in_phi = Parts::build(
            m,
            k,
            &Poly::linear(0.0, 1.0),
            &Poly::linear(-1.0, 1.0),
            &Poly::linear(-1.0, a),
            &Poly(vec![-1.0, 0.0, a]),
        );
        let in_offset = Parts::build(
            m,
            k,
            &Poly::linear(1.0, 1.0),
            &Poly::linear(0.0, 1.0),
            &Poly::linear(k, a),
            &Poly(vec![k, 2.0 * a, a]),
        );
        Self {
            m,
            k,
            a,
            ln_a: k.ln_1p(),
            in_phi,
            in_offset,
        }
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// True when `A^-M` underflows and `F` coincides with `F0` away from the
    /// origin.
    pub fn a_pow_neg_m_negligible(&self) -> bool {
        -self.m * self.ln_a < -690.0
    }

    /// Polynomials `(P1, P2, R1, R2)` evaluated at `phi`, expanded form.
    pub fn parts_at(&self, phi: C64) -> [C64; 4] {
        let u = phi - 1.0;
        let (parts, x) = if u.norm() < OFFSET_RADIUS {
            (&self.in_offset, u)
        } else {
            (&self.in_phi, phi)
        };
        [
            parts.p1.eval(x),
            parts.p2.eval(x),
            parts.r1.eval(x),
            parts.r2.eval(x),
        ]
    }

    /// Ascending coefficients of `P1` and `P2` in `phi`.
    pub(crate) fn p_coeffs(&self) -> (&[f64], &[f64]) {
        (&self.in_phi.p1.0, &self.in_phi.p2.0)
    }

    /// `P1, P2, R1, R2` with their derivatives at `phi = 1 + u`.
    pub(crate) fn parts_d_offset(&self, u: C64) -> [(C64, C64); 4] {
        let (parts, x) = if u.norm() < OFFSET_RADIUS {
            (&self.in_offset, u)
        } else {
            (&self.in_phi, C64::new(1.0, 0.0) + u)
        };
        [
            parts.p1.eval_d(x),
            parts.p2.eval_d(x),
            parts.r1.eval_d(x),
            parts.r2.eval_d(x),
        ]
    }

    /// `ln A`.
    pub(crate) fn ln_a(&self) -> f64 {
        self.ln_a
    }

    /// Evaluate at `phi`.
    pub fn eval_phi(&self, phi: C64, full: bool) -> Result<ScaledEval> {
        self.eval_at(phi, phi - 1.0, full)
    }

    /// Evaluate at `phi = 1 + u`, taking the offset `u` exactly as given.
    pub fn eval_offset(&self, u: C64, full: bool) -> Result<ScaledEval> {
        self.eval_at(C64::new(1.0, 0.0) + u, u, full)
    }

    fn eval_at(&self, phi: C64, u: C64, full: bool) -> Result<ScaledEval> {
        if phi.norm() == 0.0 {
            return Err(Error::Domain(
                "characteristic function has a pole at phi = 0".into(),
            ));
        }
        if !(phi.is_finite() && u.is_finite()) {
            return Err(Error::Domain(format!("non-finite argument {phi}")));
        }
        let (parts, x, log_phi) = if u.norm() < OFFSET_RADIUS {
            (&self.in_offset, u, ln_1p(u))
        } else {
            (&self.in_phi, phi, phi.ln())
        };
        let (p1, dp1) = parts.p1.eval_d(x);
        let (p2, dp2) = parts.p2.eval_d(x);

        let l2 = log_phi * self.m;
        let l3 = -self.m * self.ln_a;
        let l4 = -(log_phi + self.ln_a) * self.m;
        let mut log_scale = 0.0f64.max(l2.re);
        if full {
            log_scale = log_scale.max(l3).max(l4.re);
        }
        let e0 = (-log_scale).exp();
        let e2 = (l2 - log_scale).exp();
        let inv_phi = phi.inv();

        let t1 = -p1 * e0;
        let t2 = e2 * p2;
        let mut value = t1 + t2;
        let mut derivative = -dp1 * e0 + e2 * (dp2 + p2 * self.m * inv_phi);
        let r = x.norm();
        let mut term_max = (parts.p1.eval_abs(r) * e0).max(parts.p2.eval_abs(r) * e2.norm());
        if full {
            let (r1, dr1) = parts.r1.eval_d(x);
            let (r2, dr2) = parts.r2.eval_d(x);
            let e3 = (l3 - log_scale).exp();
            let e4 = (l4 - log_scale).exp();
            let t3 = r1 * e3;
            let t4 = e4 * r2;
            value += t3 + t4;
            derivative += dr1 * e3 + e4 * (dr2 - r2 * self.m * inv_phi);
            term_max = term_max
                .max(parts.r1.eval_abs(r) * e3)
                .max(parts.r2.eval_abs(r) * e4.norm());
        }
        Ok(ScaledEval {
            log_scale,
            value,
            derivative,
            term_max,
        })
    }

    /// `K^-3 F(1 + z/M)` and its derivative in `z`.
    pub fn qeps(&self, z: C64) -> Result<(C64, C64)> {
        let e = self.eval_offset(z / self.m, true)?;
        let s = e.log_scale.exp() / (self.k * self.k * self.k);
        Ok((e.value * s, e.derivative * s / self.m))
    }

    /// Coefficients (ascending) of the polynomial `phi^M F(phi)` of degree
    /// `2M + 4`. Only meaningful for integer `M`.
    pub fn power_polynomial(&self) -> Vec<f64> {
        let m = self.m.round() as usize;
        let mut out = vec![0.0; 2 * m + 5];
        let a_neg_m = (-self.m * self.ln_a).exp();
        let p = &self.in_phi;
        for (i, c) in p.p1.0.iter().enumerate() {
            out[m + i] -= c;
        }
        for (i, c) in p.p2.0.iter().enumerate() {
            out[2 * m + i] += c;
        }
        for (i, c) in p.r1.0.iter().enumerate() {
            out[m + i] += a_neg_m * c;
        }
        for (i, c) in p.r2.0.iter().enumerate() {
            out[i] += a_neg_m * c;
        }
        out
    }
}

/// `lambda = (A - 1/phi)(phi - 1)`.
pub fn lambda_of_phi(p: &ModelParams, phi: C64) -> Result<C64> {
    if phi.norm() == 0.0 {
        return Err(Error::Domain("lambda(phi) is undefined at phi = 0".into()));
    }
    Ok((p.a() - phi.inv()) * (phi - 1.0))
}

/// Spurious factor `S(phi) = (phi - 1)(A phi - 1)(A phi^2 - 1)`.
pub fn s_of_phi(p: &ModelParams, phi: C64) -> C64 {
    let a = p.a();
    (phi - 1.0) * (phi * a - 1.0) * (phi * phi * a - 1.0)
}

pub fn f_of_phi(p: &ModelParams, phi: C64) -> Result<CharfnValue> {
    Ok(CharFn::new(p).eval_phi(phi, true)?.unscale(Which::F))
}

pub fn f0_of_phi(p: &ModelParams, phi: C64) -> Result<CharfnValue> {
    Ok(CharFn::new(p).eval_phi(phi, false)?.unscale(Which::F0))
}

/// `Q(z; kappa) = e^z (1 + z^2/kappa^2) - (1 + z)`, with
/// `dQ/dz = Q + z + 2 z e^z / kappa^2`.
pub fn q_of_z(z: C64, kappa: C64) -> Result<CharfnValue> {
    if kappa.norm() == 0.0 {
        return Err(Error::Domain("Q(z; kappa) needs kappa != 0".into()));
    }
    let w = kappa * kappa;
    let ez = z.exp();
    let value = ez * (1.0 + z * z / w) - (1.0 + z);
    let derivative = value + z + ez * (2.0 * z / w);
    Ok(CharfnValue {
        value,
        derivative,
        which: Which::Q,
    })
}

/// `Q^eps(z) = K^-3 F(1 + z/M)`.
pub fn qeps_of_z(p: &ModelParams, z: C64) -> Result<C64> {
    let m = p.m() as f64;
    if (z + m).norm() == 0.0 {
        return Err(Error::Domain("Q^eps has a pole at z = -M".into()));
    }
    Ok(CharFn::new(p).qeps(z)?.0)
}

/// `lambda = K z / M + (z/M)^2 / (1 + z/M)`.
pub fn lambda_of_z(p: &ModelParams, z: C64) -> Result<C64> {
    lambda_of_z_raw(p.m() as f64, p.k(), z)
}

pub(crate) fn lambda_of_z_raw(m: f64, k: f64, z: C64) -> Result<C64> {
    let u = z / m;
    if (u + 1.0).norm() == 0.0 {
        return Err(Error::Domain("lambda(z) has a pole at z = -M".into()));
    }
    Ok(u * k + u * u / (u + 1.0))
}
