//! The linearization `B` at the constant equilibrium `n_l = 1 + K`, its null
//! vectors, and a brute-force spectral oracle for small systems.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::dd::{CDd, Dd};
use crate::error::{Error, Result};
use crate::model::{rhs_into, ModelParams, StateVector};
use crate::poly::aberth;

/// Dense `M x M` Jacobian at the constant equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationMatrix {
    pub entries: DMatrix<f64>,
    pub params: ModelParams,
}

impl LinearizationMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Max-row-sum norm.
    pub fn norm_inf(&self) -> f64 {
        self.entries
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// One eigenvalue of `B`, optionally with the root `phi` it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub lambda: C64,
    pub phi: Option<C64>,
    /// False when simplicity could not be established numerically.
    pub simple: bool,
    /// Relative residual of whatever equation produced it.
    pub residual: f64,
}

/// Eigenvalues of `B` sorted by `(Re, Im)`, with classification counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<Eigenvalue>,
    /// Conjugate pairs with positive real part.
    pub unstable_pairs: usize,
    pub zero_count: usize,
    pub real_negative: usize,
    /// Expected number of eigenvalues (`M`).
    pub expected: usize,
    /// Whether `expected` eigenvalues were recovered.
    pub complete: bool,
}

/// Real parts above this count as unstable.
pub const UNSTABLE_TOL: f64 = 1e-12;
const ZERO_TOL: f64 = 1e-9;

impl SpectrumResult {
    pub fn from_eigenvalues(mut eigenvalues: Vec<Eigenvalue>, expected: usize) -> Self {
        eigenvalues.sort_by(|a, b| {
            a.lambda
                .re
                .total_cmp(&b.lambda.re)
                .then(a.lambda.im.total_cmp(&b.lambda.im))
        });
        let unstable_pairs = eigenvalues
            .iter()
            .filter(|e| e.lambda.re > UNSTABLE_TOL && e.lambda.im > 0.0)
            .count();
        let zero_count = eigenvalues.iter().filter(|e| e.lambda.norm() <= ZERO_TOL).count();
        let real_negative = eigenvalues
            .iter()
            .filter(|e| {
                e.lambda.norm() > ZERO_TOL
                    && e.lambda.re < 0.0
                    && e.lambda.im.abs() <= 1e-12 * (1.0 + e.lambda.norm())
            })
            .count();
        let complete = eigenvalues.len() == expected;
        Self {
            eigenvalues,
            unstable_pairs,
            zero_count,
            real_negative,
            expected,
            complete,
        }
    }

    pub fn lambdas(&self) -> Vec<C64> {
        self.eigenvalues.iter().map(|e| e.lambda).collect()
    }

    /// Eigenvalues with `Re > 0` and `Im > 0`, one per unstable pair.
    pub fn unstable(&self) -> Vec<C64> {
        self.eigenvalues
            .iter()
            .map(|e| e.lambda)
            .filter(|l| l.re > UNSTABLE_TOL && l.im > 0.0)
            .collect()
    }

    /// Number of eigenvalues with `Im > 0` (one per non-real pair).
    pub fn nonreal_pairs(&self) -> usize {
        self.eigenvalues
            .iter()
            .filter(|e| e.lambda.im > 1e-12 * (1.0 + e.lambda.norm()))
            .count()
    }
}

/// Hausdorff distance between two finite point sets in the complex plane.
pub fn hausdorff(a: &[C64], b: &[C64]) -> f64 {
    let one_way = |x: &[C64], y: &[C64]| {
        x.iter()
            .map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    one_way(a, b).max(one_way(b, a))
}

/// Assemble `B`. Row 1 is `(-A(M+2), 1-K, -K, ..., -K, MK+1)`, rows
/// `2..N` are `(A, -A-1, 1)` on the band, row `M` is `A` in columns 1 and
/// `N` and `-A` on the diagonal.
pub fn assemble_b(p: &ModelParams) -> LinearizationMatrix {
    let m = p.m();
    let k = p.k();
    let a = p.a();
    let mut b = DMatrix::zeros(m, m);
    b[(0, 0)] = -a * (m as f64 + 2.0);
    b[(0, 1)] = 1.0 - k;
    for j in 2..m - 1 {
        b[(0, j)] = -k;
    }
    b[(0, m - 1)] = m as f64 * k + 1.0;
    for i in 1..m - 1 {
        b[(i, i - 1)] += a;
        b[(i, i)] += -a - 1.0;
        b[(i, i + 1)] += 1.0;
    }
    b[(m - 1, 0)] += a;
    b[(m - 1, m - 2)] += a;
    b[(m - 1, m - 1)] += -a;
    LinearizationMatrix {
        entries: b,
        params: *p,
    }
}

/// Left null vector `(1, 2, ..., M)`.
pub fn left_null_vector(p: &ModelParams) -> Vec<f64> {
    (1..=p.m()).map(|l| l as f64).collect()
}

/// Right null vector `v_l = 1 + (A^l - A) / (K A^N)`, the `z`-derivative of
/// the equilibrium family at `z = A`.
pub fn right_null_vector(p: &ModelParams) -> Vec<f64> {
    let ln_a = p.k().ln_1p();
    let n = p.n() as f64;
    (1..=p.m())
        .map(|l| {
            let hi = ((l as f64 - n) * ln_a).exp();
            let lo = ((1.0 - n) * ln_a).exp();
            1.0 + (hi - lo) / p.k()
        })
        .collect()
}

/// Centered finite-difference Jacobian of the right-hand side at `s`.
pub fn jacobian_fd(p: &ModelParams, s: &StateVector, h: f64) -> Result<DMatrix<f64>> {
    let m = p.m();
    if s.n.len() != m {
        return Err(Error::Usage(format!(
            "state has {} entries but M = {m}",
            s.n.len()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::Usage(format!("step must be positive, got {h}")));
    }
    let mut jac = DMatrix::zeros(m, m);
    let mut x = s.n.clone();
    let mut fp = vec![0.0; m];
    let mut fm = vec![0.0; m];
    for j in 0..m {
        let orig = x[j];
        x[j] = orig + h;
        rhs_into(p, &x, &mut fp);
        x[j] = orig - h;
        rhs_into(p, &x, &mut fm);
        x[j] = orig;
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Largest size accepted by the characteristic-polynomial oracle.
pub const ORACLE_MAX_DIM: usize = 30;

/// Characteristic polynomial `det(lambda I - B)`, ascending coefficients,
/// by the Faddeev–LeVerrier recurrence in double-double arithmetic.
pub fn charpoly_coefficients(b: &LinearizationMatrix) -> Result<Vec<Dd>> {
    let n = b.dim();
    if n > ORACLE_MAX_DIM {
        return Err(Error::Usage(format!(
            "characteristic-polynomial oracle is limited to M <= {ORACLE_MAX_DIM}, got {n}"
        )));
    }
    let a: Vec<Dd> = (0..n * n)
        .map(|idx| Dd::new(b.entries[(idx / n, idx % n)]))
        .collect();
    let mut coeffs = vec![Dd::ZERO; n + 1];
    coeffs[n] = Dd::ONE;
    let mut mk = vec![Dd::ZERO; n * n];
    let mut prod = vec![Dd::ZERO; n * n];
    for k in 1..=n {
        // M_k = A M_{k-1} + c_{n-k+1} I
        for i in 0..n {
            for j in 0..n {
                let mut acc = Dd::ZERO;
                for l in 0..n {
                    acc = acc + a[i * n + l] * mk[l * n + j];
                }
                prod[i * n + j] = acc;
            }
        }
        for i in 0..n {
            prod[i * n + i] = prod[i * n + i] + coeffs[n - k + 1];
        }
        std::mem::swap(&mut mk, &mut prod);
        // c_{n-k} = -tr(A M_k) / k
        let mut tr = Dd::ZERO;
        for i in 0..n {
            for l in 0..n {
                tr = tr + a[i * n + l] * mk[l * n + i];
            }
        }
        coeffs[n - k] = -(tr / Dd::new(k as f64));
    }
    Ok(coeffs)
}

fn newton_step_dd(coeffs: &[Dd], z: C64) -> C64 {
    let x = CDd::from_c64(z);
    let mut p = CDd::default();
    let mut dp = CDd::default();
    for c in coeffs.iter().rev() {
        dp = dp * x + p;
        p = p * x + CDd { re: *c, im: Dd::ZERO };
    }
    p.to_c64() / dp.to_c64()
}

/// All eigenvalues of a small `B` from its characteristic polynomial.
///
/// Roots come from Aberth–Ehrlich on the rounded coefficients and are then
/// polished by Newton steps evaluated in double-double.
pub fn charpoly_oracle_spectrum(b: &LinearizationMatrix) -> Result<SpectrumResult> {
    let coeffs = charpoly_coefficients(b)?;
    let rounded: Vec<C64> = coeffs.iter().map(|c| C64::new(c.to_f64(), 0.0)).collect();
    // non-convergence is judged by the polished residual below
    let (mut roots, _) = aberth(&rounded, 2000, 1e-15);
    let mut worst = 0.0f64;
    for r in roots.iter_mut() {
        for _ in 0..8 {
            let step = newton_step_dd(&coeffs, *r);
            if !step.is_finite() {
                break;
            }
            *r -= step;
            if step.norm() <= 1e-17 * (1.0 + r.norm()) {
                break;
            }
        }
        let last = newton_step_dd(&coeffs, *r).norm() / (1.0 + r.norm());
        worst = worst.max(if last.is_finite() { last } else { 0.0 });
    }
    if worst > 1e-10 {
        return Err(Error::Convergence {
            what: "characteristic polynomial root iteration",
            iterations: 2000,
            residual: worst,
            best: roots.iter().flat_map(|r| [r.re, r.im]).collect(),
        });
    }
    let eigenvalues = roots
        .into_iter()
        .map(|lambda| Eigenvalue {
            lambda,
            phi: None,
            simple: true,
            residual: 0.0,
        })
        .collect();
    Ok(SpectrumResult::from_eigenvalues(eigenvalues, b.dim()))
}

/// Default relative tolerance for the rank test.
pub const RANK_TOL: f64 = 1e-10;

/// Zero is a simple eigenvalue: `B` has rank `M - 1` and the left null vector
/// is not orthogonal to the right one (no Jordan chain).
pub fn check_lambda0_simple(b: &LinearizationMatrix) -> bool {
    check_lambda0_simple_with(b, RANK_TOL)
}

pub fn check_lambda0_simple_with(b: &LinearizationMatrix, rel_tol: f64) -> bool {
    let m = b.dim();
    let tol = rel_tol * b.norm_inf();
    let sv = b.entries.clone().singular_values();
    let rank = sv.iter().filter(|s| **s > tol).count();
    let pairing: f64 = left_null_vector(&b.params)
        .iter()
        .zip(right_null_vector(&b.params))
        .map(|(l, v)| l * v)
        .sum();
    rank == m - 1 && pairing > 0.0
}

/// Eigenvector of `B` for the eigenvalue generated by a root `phi` of `F`:
/// `V_l = f(phi2) phi^(M-l) - f(phi) phi2^(M-l)` with `phi2 = 1/(A phi)` and
/// `f(x) = A x^(M-1) + 1 - 1/x`. Scaled to unit sup norm.
pub fn eigenvector_from_phi(p: &ModelParams, phi: C64) -> Result<Vec<C64>> {
    if phi.norm() == 0.0 {
        return Err(Error::Domain("phi = 0 has no eigenvector".into()));
    }
    let m = p.m();
    let a = p.a();
    let phi2 = (phi * a).inv();
    let f = |x: C64| x.powu(m as u32 - 1) * a + 1.0 - x.inv();
    let (c1, c2) = (f(phi2), -f(phi));
    let v: Vec<C64> = (1..=m)
        .map(|l| c1 * phi.powu((m - l) as u32) + c2 * phi2.powu((m - l) as u32))
        .collect();
    let sup = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if !(sup > 0.0 && sup.is_finite()) {
        return Err(Error::Internal(format!("degenerate eigenvector at phi = {phi}")));
    }
    Ok(v.into_iter().map(|x| x / sup).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_matrix_m3_k1() {
        let p = ModelParams::new(3, 1.0).unwrap();
        let b = assemble_b(&p);
        let want = DMatrix::from_row_slice(3, 3, &[-10.0, 0.0, 4.0, 2.0, -3.0, 1.0, 2.0, 2.0, -2.0]);
        assert_eq!(b.entries, want);
        let fd = jacobian_fd(&p, &StateVector::constant_equilibrium(&p), 1e-5).unwrap();
        assert!((fd - want).abs().max() < 1e-8);
    }

    #[test]
    fn fd_jacobian_is_step_independent() {
        let p = ModelParams::new(12, 0.6).unwrap();
        let s = StateVector::new((0..12).map(|i| 1.0 + 0.1 * i as f64).collect(), 0.0);
        let a = jacobian_fd(&p, &s, 1e-4).unwrap();
        let b = jacobian_fd(&p, &s, 1e-5).unwrap();
        assert!((a - b).abs().max() <= 1e-8);
        assert!(jacobian_fd(&p, &s, 0.0).is_err());
    }

    #[test]
    fn assembled_matrix_matches_fd_jacobian() {
        for &(m, k) in &[(4usize, 0.2), (25, 3.0), (60, 0.05)] {
            let p = ModelParams::new(m, k).unwrap();
            let b = assemble_b(&p);
            let fd = jacobian_fd(&p, &StateVector::constant_equilibrium(&p), 1e-5).unwrap();
            assert!((fd - &b.entries).abs().max() <= 1e-6);
        }
    }

    #[test]
    fn zero_is_simple() {
        for &(m, k) in &[(3usize, 1.0), (25, 3.0), (50, 0.1)] {
            let p = ModelParams::new(m, k).unwrap();
            assert!(check_lambda0_simple(&assemble_b(&p)));
            let pairing: f64 = left_null_vector(&p)
                .iter()
                .zip(right_null_vector(&p))
                .map(|(l, v)| l * v)
                .sum();
            assert!(pairing > 0.0);
            assert!(right_null_vector(&p).iter().all(|v| *v >= 1.0 - 1e-12));
        }
    }

    #[test]
    fn oracle_refuses_large_systems() {
        let p = ModelParams::new(31, 1.0).unwrap();
        assert!(matches!(
            charpoly_oracle_spectrum(&assemble_b(&p)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn oracle_spectrum_has_zero_and_conjugate_symmetry() {
        for m in [3usize, 6, 12] {
            for k in [0.3, 1.0, 3.0] {
                let p = ModelParams::new(m, k).unwrap();
                let s = charpoly_oracle_spectrum(&assemble_b(&p)).unwrap();
                assert_eq!(s.eigenvalues.len(), m);
                let ls = s.lambdas();
                assert!(ls.iter().any(|l| l.norm() <= 1e-8), "{ls:?}");
                let conj: Vec<C64> = ls.iter().map(|l| l.conj()).collect();
                assert!(hausdorff(&ls, &conj) <= 1e-8);
                let tr: f64 = (0..m).map(|i| assemble_b(&p).entries[(i, i)]).sum();
                let sum: C64 = ls.iter().sum();
                assert!((sum.re - tr).abs() <= 1e-9 * tr.abs() && sum.im.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn oracle_matches_a_known_matrix() {
        // B for M = 3, K = 1: det(l I - B) = l^3 + 15 l^2 + 46 l.
        let p = ModelParams::new(3, 1.0).unwrap();
        let c = charpoly_coefficients(&assemble_b(&p)).unwrap();
        let c: Vec<f64> = c.iter().map(|d| d.to_f64()).collect();
        assert_eq!(c, vec![0.0, 46.0, 15.0, 1.0]);
        let det = assemble_b(&p).entries.determinant();
        assert!((c[0] + det).abs() < 1e-12);
        let s = charpoly_oracle_spectrum(&assemble_b(&p)).unwrap();
        let roots = s.lambdas();
        let disc = c[2] * c[2] - 4.0 * c[1];
        let want = [
            C64::new(0.0, 0.0),
            C64::new((-c[2] + disc.sqrt()) / 2.0, 0.0),
            C64::new((-c[2] - disc.sqrt()) / 2.0, 0.0),
        ];
        assert!(hausdorff(&roots, &want) < 1e-10);
    }

    #[test]
    fn eigenvector_from_phi_for_a_spectrum_root() {
        // a genuine root found by Newton on F for M = 8, K = 1
        let p = ModelParams::new(8, 1.0).unwrap();
        let cf = crate::charfn::CharFn::new(&p);
        let mut phi = C64::new(0.7, 0.7);
        for _ in 0..100 {
            let e = cf.eval_phi(phi, true).unwrap();
            phi -= e.value / e.derivative;
        }
        let lambda = crate::charfn::lambda_of_phi(&p, phi).unwrap();
        let v = eigenvector_from_phi(&p, phi).unwrap();
        let b = assemble_b(&p);
        let mut worst = 0.0f64;
        for i in 0..8 {
            let bv: C64 = (0..8).map(|j| v[j] * b.entries[(i, j)]).sum();
            worst = worst.max((bv - v[i] * lambda).norm());
        }
        assert!(worst < 1e-9 * b.norm_inf(), "residual {worst}");
        let mass: C64 = v.iter().enumerate().map(|(i, x)| x * (i + 1) as f64).sum();
        assert!(mass.norm() < 1e-9 * 36.0);
    }

    proptest! {
        #[test]
        fn null_vectors(m in 3usize..200, k in 0.01f64..5.0) {
            let p = ModelParams::new(m, k).unwrap();
            let b = assemble_b(&p);
            let norm = b.norm_inf();
            let left = left_null_vector(&p);
            for j in 0..m {
                let s: f64 = (0..m).map(|i| left[i] * b.entries[(i, j)]).sum();
                prop_assert!(s.abs() <= 1e-10 * norm * m as f64);
            }
            let v = right_null_vector(&p);
            let vmax = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            for i in 0..m {
                let s: f64 = (0..m).map(|j| b.entries[(i, j)] * v[j]).sum();
                prop_assert!(s.abs() <= 1e-10 * norm * vmax);
            }
        }
    }
}
