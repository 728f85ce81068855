//! Small real polynomials and a simultaneous complex root finder.

use num_complex::Complex64 as C64;
use std::ops::{Add, Mul, Sub};

/// Real polynomial, coefficients in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn constant(c: f64) -> Self {
        Poly(vec![c])
    }

    /// `c0 + c1 x`.
    pub fn linear(c0: f64, c1: f64) -> Self {
        Poly(vec![c0, c1])
    }

    pub fn scale(&self, c: f64) -> Self {
        Poly(self.0.iter().map(|v| v * c).collect())
    }

    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    /// Value and first derivative at a complex point.
    #[inline]
    pub fn eval_d(&self, x: C64) -> (C64, C64) {
        let mut p = C64::new(0.0, 0.0);
        let mut dp = C64::new(0.0, 0.0);
        for c in self.0.iter().rev() {
            dp = dp * x + p;
            p = p * x + c;
        }
        (p, dp)
    }

    /// `sum |c_i| r^i`, the rounding-error scale of an evaluation at `|x| = r`.
    pub fn eval_abs(&self, r: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * r + c.abs())
    }

    pub fn eval(&self, x: C64) -> C64 {
        self.eval_d(x).0
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, o: &Poly) -> Poly {
        let n = self.0.len().max(o.0.len());
        Poly(
            (0..n)
                .map(|i| self.0.get(i).copied().unwrap_or(0.0) + o.0.get(i).copied().unwrap_or(0.0))
                .collect(),
        )
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, o: &Poly) -> Poly {
        self + &o.scale(-1.0)
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, o: &Poly) -> Poly {
        if self.0.is_empty() || o.0.is_empty() {
            return Poly(vec![]);
        }
        let mut out = vec![0.0; self.0.len() + o.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in o.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }
}

/// Newton correction `p(z) / p'(z)` for complex coefficients (ascending).
///
/// For `|z| > 1` the reversed polynomial is used so high degrees do not
/// overflow.
pub fn newton_correction(coeffs: &[C64], z: C64) -> C64 {
    let n = coeffs.len() - 1;
    if z.norm() <= 1.0 {
        let mut p = C64::new(0.0, 0.0);
        let mut dp = C64::new(0.0, 0.0);
        for c in coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        p / dp
    } else {
        // p(z) = z^n q(w), w = 1/z, q has the coefficients reversed
        let w = z.inv();
        let mut q = C64::new(0.0, 0.0);
        let mut dq = C64::new(0.0, 0.0);
        for c in coeffs.iter() {
            dq = dq * w + q;
            q = q * w + c;
        }
        // p'/p = n/z - w^2 q'(w) / q(w)
        let ratio = C64::new(n as f64, 0.0) * w - w * w * dq / q;
        ratio.inv()
    }
}

/// Starting points from the upper convex hull of `(i, ln|a_i|)`: each hull
/// segment contributes a circle whose radius matches the root moduli it
/// predicts.
fn initial_guesses(coeffs: &[C64]) -> Vec<C64> {
    let n = coeffs.len() - 1;
    let logs: Vec<f64> = coeffs
        .iter()
        .map(|c| {
            if c.norm() > 0.0 {
                c.norm().ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let mut hull: Vec<usize> = Vec::new();
    for i in 0..=n {
        if logs[i] == f64::NEG_INFINITY {
            continue;
        }
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross =
                (b as f64 - a as f64) * (logs[i] - logs[a]) - (i as f64 - a as f64) * (logs[b] - logs[a]);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut guesses = Vec::with_capacity(n);
    let first = hull[0];
    let mut smallest = f64::INFINITY;
    let mut k = 0usize;
    for w in hull.windows(2) {
        let (i, j) = (w[0], w[1]);
        let r = ((logs[i] - logs[j]) / (j - i) as f64).exp();
        smallest = smallest.min(r);
        for t in 0..(j - i) {
            let theta = 2.0 * std::f64::consts::PI * (t as f64) / ((j - i) as f64)
                + 2.0 * std::f64::consts::PI * (k as f64) / (n as f64)
                + 0.4;
            guesses.push(C64::from_polar(r, theta));
        }
        k += j - i;
    }
    // exact zero roots
    let tiny = if smallest.is_finite() {
        smallest * 1e-3
    } else {
        1e-3
    };
    for t in 0..first {
        guesses.push(C64::from_polar(tiny, 1.0 + t as f64));
    }
    guesses
}

/// Aberth–Ehrlich iteration for all roots of a complex polynomial with
/// ascending coefficients. Returns the roots and whether every correction
/// fell below `tol` relative to the root modulus.
pub fn aberth(coeffs: &[C64], max_iter: usize, tol: f64) -> (Vec<C64>, bool) {
    let mut coeffs = coeffs.to_vec();
    while coeffs.len() > 1 && coeffs.last().map(|c| c.norm() == 0.0).unwrap_or(false) {
        coeffs.pop();
    }
    let n = coeffs.len() - 1;
    if n == 0 {
        return (vec![], true);
    }
    let mut z = initial_guesses(&coeffs);
    let mut done = vec![false; n];
    for _ in 0..max_iter {
        let mut all = true;
        for i in 0..n {
            if done[i] {
                continue;
            }
            let w = newton_correction(&coeffs, z[i]);
            let s: C64 = (0..n).filter(|&j| j != i).map(|j| (z[i] - z[j]).inv()).sum();
            let step = w / (C64::new(1.0, 0.0) - w * s);
            if step.is_finite() {
                z[i] -= step;
            }
            if step.norm() <= tol * z[i].norm().max(f64::MIN_POSITIVE) || step.norm() == 0.0 {
                done[i] = true;
            } else {
                all = false;
            }
        }
        if all {
            return (z, true);
        }
    }
    (z, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_arithmetic_and_eval() {
        let a = Poly::linear(-1.0, 1.0);
        let b = Poly::linear(2.0, 3.0);
        let p = &a * &b; // 3x^2 - x - 2
        assert_eq!(p.0, vec![-2.0, -1.0, 3.0]);
        let (v, d) = p.eval_d(C64::new(2.0, 0.0));
        assert_eq!(v, C64::new(8.0, 0.0));
        assert_eq!(d, C64::new(11.0, 0.0));
        assert_eq!((&p - &p).0, vec![0.0; 3]);
    }

    #[test]
    fn aberth_finds_roots_of_unity_and_scaled_roots() {
        // z^7 - 1
        let mut c = vec![C64::new(0.0, 0.0); 8];
        c[0] = C64::new(-1.0, 0.0);
        c[7] = C64::new(1.0, 0.0);
        let (roots, ok) = aberth(&c, 500, 1e-15);
        assert!(ok);
        for r in &roots {
            assert!((r.powu(7) - 1.0).norm() < 1e-13);
        }
        // (z - 1e-3)(z - 1)(z - 1e3)(z + 2i)
        let rts = [
            C64::new(1e-3, 0.0),
            C64::new(1.0, 0.0),
            C64::new(1e3, 0.0),
            C64::new(0.0, -2.0),
        ];
        let mut coeffs = vec![C64::new(1.0, 0.0)];
        for r in rts {
            let mut next = vec![C64::new(0.0, 0.0); coeffs.len() + 1];
            for (i, c) in coeffs.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= c * r;
            }
            coeffs = next;
        }
        let (found, ok) = aberth(&coeffs, 500, 1e-15);
        assert!(ok);
        for r in rts {
            let best = found
                .iter()
                .map(|f| (f - r).norm() / r.norm())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-10, "{r} missing from {found:?}");
        }
    }
}
