//! Root finding: `tan t = t`, the zeros of `Q(z; kappa)` and their curves in
//! `kappa`, and the full spectrum of `B` from the zeros of `F`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charfn::{ln_1p, q_of_z, CharFn, ScaledEval};
use crate::error::{Error, Result};
use crate::linalg::{Eigenvalue, SpectrumResult, UNSTABLE_TOL};
use crate::model::ModelParams;
use crate::poly::aberth;

/// A zero of `F`, reduced to its representative with `|phi| >= A^-1/2` and
/// `Im phi >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootRecord {
    pub phi: C64,
    pub lambda: C64,
    /// `|F| / max term`.
    pub residual: f64,
    pub simple: bool,
    pub spurious: bool,
}

/// A zero `z_j(kappa)` of `Q` followed in `kappa`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QRootCurve {
    pub j: usize,
    /// `kappa_j^0`, where the curve meets the imaginary axis.
    pub crossing: f64,
    /// `(kappa, z, dz/dkappa)` in grid order.
    pub samples: Vec<(f64, C64, C64)>,
}

impl QRootCurve {
    /// `dz/dkappa` lies in the open first quadrant for every sample with
    /// `kappa >= kappa_j^0`.
    pub fn first_quadrant_above_crossing(&self) -> bool {
        self.samples
            .iter()
            .filter(|s| s.0 >= self.crossing)
            .all(|s| s.2.re > 0.0 && s.2.im > 0.0)
    }
}

fn g_tan(t: f64) -> f64 {
    t.sin() - t * t.cos()
}

/// Positive solutions of `tan t = t` with `cos t < 0`, in increasing order.
/// The `j`-th lies in `((2j-1) pi, (2j-1) pi + pi/2)`.
pub fn tan_eq_t_roots(k_max: usize) -> Result<Vec<f64>> {
    if k_max == 0 {
        return Err(Error::Usage("k_max must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(k_max);
    for j in 1..=k_max {
        let mut lo = (2 * j - 1) as f64 * PI;
        let mut hi = lo + 0.5 * PI;
        // g(lo) = lo > 0, g(hi) = -1 < 0
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if g_tan(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut t = 0.5 * (lo + hi);
        for _ in 0..5 {
            let d = t * t.sin();
            let step = g_tan(t) / d;
            t -= step;
            if step.abs() <= 4.0 * f64::EPSILON * t {
                break;
            }
        }
        out.push(t);
    }
    Ok(out)
}

/// `kappa_j^0 = (sqrt(1 + t_j^2) - 1)^(1/2)`.
pub fn kappa_j0(j: usize) -> Result<f64> {
    if j == 0 {
        return Err(Error::Usage("branch index j starts at 1".into()));
    }
    let t = tan_eq_t_roots(j)?[j - 1];
    Ok((t.hypot(1.0) - 1.0).sqrt())
}

/// `dz/dw` along a zero of `Q`, with `w = kappa^2`.
fn dz_dw(z: C64, w: f64) -> C64 {
    (z / w) / ((z * z + w) / (z + 1.0) + 2.0)
}

/// Newton on `Q(.; kappa)` from `z0`.
pub fn newton_q(z0: C64, kappa: f64, max_iter: usize) -> Result<C64> {
    let kap = C64::new(kappa, 0.0);
    let mut z = z0;
    for it in 0..max_iter {
        let q = q_of_z(z, kap)?;
        let step = q.value / q.derivative;
        if !step.is_finite() {
            break;
        }
        z -= step;
        if step.norm() <= 1e-14 * (1.0 + z.norm()) {
            return Ok(z);
        }
        if it + 1 == max_iter {
            break;
        }
    }
    let q = q_of_z(z, kap)?;
    Err(Error::Convergence {
        what: "Newton on Q",
        iterations: max_iter,
        residual: q.value.norm(),
        best: vec![z.re, z.im],
    })
}

/// Follow the zero of `Q` through `i t_j` at `kappa_j^0` to every `kappa` in
/// the grid, in both directions.
pub fn q_root_curve(j: usize, kappa_grid: &[f64]) -> Result<QRootCurve> {
    if kappa_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Usage("kappa grid must be sorted".into()));
    }
    if kappa_grid.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
        return Err(Error::Usage("kappa grid values must be positive".into()));
    }
    let t = tan_eq_t_roots(j)?[j - 1];
    let k0 = (t.hypot(1.0) - 1.0).sqrt();
    let anchor = C64::new(0.0, t);
    let mut samples = vec![(0.0, C64::default(), C64::default()); kappa_grid.len()];
    let split = kappa_grid.partition_point(|k| *k < k0);

    let mut walk = |indices: &mut dyn Iterator<Item = usize>| -> Result<()> {
        let (mut kap, mut z) = (k0, anchor);
        for i in indices {
            let target = kappa_grid[i];
            z = advance_q_root(z, kap, target)?;
            kap = target;
            let w = kap * kap;
            samples[i] = (kap, z, dz_dw(z, w) * (2.0 * kap));
        }
        Ok(())
    };
    walk(&mut (split..kappa_grid.len()))?;
    walk(&mut (0..split).rev())?;
    Ok(QRootCurve {
        j,
        crossing: k0,
        samples,
    })
}

fn advance_q_root(mut z: C64, from: f64, to: f64) -> Result<C64> {
    let mut kap = from;
    let mut h = (to - from).clamp(-0.05, 0.05);
    while kap != to {
        if (to - kap).abs() <= h.abs() {
            h = to - kap;
        }
        let w = kap * kap;
        let pred = z + dz_dw(z, w) * (2.0 * kap * h);
        match newton_q(pred, kap + h, 30) {
            Ok(zn) if (zn - pred).norm() <= 0.1 * (1.0 + z.norm()) && zn.im > 0.0 => {
                z = zn;
                kap = if (to - kap).abs() <= h.abs() { to } else { kap + h };
                h *= 1.5;
                if (h.abs()) > 0.05 {
                    h = 0.05 * h.signum();
                }
            }
            _ => {
                h *= 0.5;
                if h.abs() < 1e-10 {
                    return Err(Error::Continuation {
                        at: kap,
                        reason: format!("Q-root continuation stalled near z = {z}"),
                    });
                }
            }
        }
    }
    Ok(z)
}

/// Number of zeros of `f` inside the closed curve `contour(s)`, `s` in
/// `[0, 1]`, traversed counterclockwise. The phase increment is resolved
/// adaptively.
pub fn count_zeros<F, G>(f: F, contour: G, n: usize) -> Result<i64>
where
    F: Fn(C64) -> Result<C64>,
    G: Fn(f64) -> C64,
{
    fn seg<F, G>(f: &F, c: &G, s0: f64, s1: f64, v0: C64, v1: C64, depth: u32) -> Result<f64>
    where
        F: Fn(C64) -> Result<C64>,
        G: Fn(f64) -> C64,
    {
        let d = (v1 / v0).arg();
        if d.abs() < 0.5 || depth > 40 {
            if depth > 40 {
                return Err(Error::Convergence {
                    what: "argument principle refinement",
                    iterations: 40,
                    residual: d.abs(),
                    best: vec![s0, s1],
                });
            }
            return Ok(d);
        }
        let sm = 0.5 * (s0 + s1);
        let vm = f(c(sm))?;
        Ok(seg(f, c, s0, sm, v0, vm, depth + 1)? + seg(f, c, sm, s1, vm, v1, depth + 1)?)
    }
    let n = n.max(8);
    let mut total = 0.0;
    let mut prev = f(contour(0.0))?;
    for i in 1..=n {
        let s1 = i as f64 / n as f64;
        let v = f(contour(s1))?;
        if v.norm() == 0.0 || prev.norm() == 0.0 {
            return Err(Error::Domain("zero on the contour".into()));
        }
        total += seg(&f, &contour, (i - 1) as f64 / n as f64, s1, prev, v, 0)?;
        prev = v;
    }
    Ok((total / (2.0 * PI)).round() as i64)
}

// ----- spectrum from F -------------------------------------------------------

const ACCEPT_RESIDUAL: f64 = 1e-9;
const SIMPLE_TOL: f64 = 1e-6;
const CLUSTER_TOL: f64 = 1e-7;

/// `ln |D|` and `D'/D` for the known factor
/// `D = u^2 (A phi - 1)^2 (A phi^2 - 1)`, `phi = 1 + u`.
fn deflator(a: f64, k: f64, u: C64) -> (f64, C64) {
    let l1 = u * a + k;
    let l2 = (u * a) * (u + 2.0) + k;
    let ln_abs = 2.0 * u.norm().ln() + 2.0 * l1.norm().ln() + l2.norm().ln();
    let dlog = u.inv() * 2.0 + l1.inv() * (2.0 * a) + (u + 1.0) * (2.0 * a) / l2;
    (ln_abs, dlog)
}

/// Damped Newton in the offset `u = phi - 1` on `F / D`, which has the
/// zeros of `F` except the known ones at `1`, `1/A` and `+-A^-1/2`.
fn newton_f(cf: &CharFn, u0: C64, max_iter: usize) -> Option<(C64, ScaledEval)> {
    let (a, k) = (cf.a(), cf.k());
    let ln_g = |u: C64, e: &ScaledEval| e.ln_abs() - deflator(a, k, u).0;
    let mut u = u0;
    let mut e = cf.eval_offset(u, true).ok()?;
    for _ in 0..max_iter {
        if e.value.norm() == 0.0 {
            break;
        }
        let dlog = e.derivative / e.value - deflator(a, k, u).1;
        let step = dlog.inv();
        if !step.is_finite() {
            return None;
        }
        let g0 = ln_g(u, &e);
        let mut t = 1.0;
        let mut moved = None;
        for _ in 0..=20 {
            let cand = u - step * t;
            if let Ok(ce) = cf.eval_offset(cand, true) {
                if ln_g(cand, &ce) < g0 {
                    moved = Some((cand, ce));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((cand, ce)) = moved else { break };
        let small = (step * t).norm() <= 1e-15 * (2.0 + u.norm());
        u = cand;
        e = ce;
        if small {
            break;
        }
    }
    (e.relative_residual() <= ACCEPT_RESIDUAL).then_some((u, e))
}

/// With `X = phi^M`, `F = 0` reads `P2 X^2 + (A^-M R1 - P1) X + A^-M R2 = 0`.
/// Returns the chosen root `X` of this quadratic and `X'/X`.
fn power_root(cf: &CharFn, u: C64, larger: bool) -> Option<(C64, C64)> {
    let [(p1, dp1), (p2, dp2), (r1, dr1), (r2, dr2)] = cf.parts_d_offset(u);
    let s = (-cf.m() * cf.ln_a()).exp();
    let (qa, qb, qc) = (p2, r1 * s - p1, r2 * s);
    let (da, db, dc) = (dp2, dr1 * s - dp1, dr2 * s);
    let x = if qc.norm() == 0.0 {
        if !larger {
            return None;
        }
        -qb / qa
    } else {
        let disc = (qb * qb - qa * qc * 4.0).sqrt();
        let q = if (qb.conj() * disc).re >= 0.0 {
            -(qb + disc) * 0.5
        } else {
            -(qb - disc) * 0.5
        };
        let (x1, x2) = (q / qa, qc / q);
        let big = x1.norm() >= x2.norm();
        if big == larger {
            x1
        } else {
            x2
        }
    };
    let dx = -(da * x * x + db * x + dc) / (qa * x * 2.0 + qb);
    let r = dx / x;
    (x.is_finite() && x.norm() > 0.0 && r.is_finite()).then_some((x, r))
}

/// Newton on `M log(phi) - Log X(phi) - 2 pi i k`, a branch-labelled form
/// of `F = 0` that avoids the oscillation of `phi^M`.
fn branch_refine(cf: &CharFn, k: f64, u0: C64, larger: bool) -> C64 {
    let m = cf.m();
    let shift = C64::new(0.0, 2.0 * PI * k);
    let mut u = u0;
    for _ in 0..30 {
        let phi = u + 1.0;
        let Some((x, dlog_x)) = power_root(cf, u, larger) else {
            break;
        };
        if phi.norm() == 0.0 {
            break;
        }
        let g = ln_1p(u) * m - x.ln() - shift;
        let dg = phi.inv() * m - dlog_x;
        let step = g / dg;
        if !step.is_finite() {
            break;
        }
        // keep the iterate on its branch
        let step = if step.norm() > 0.5 / m {
            step * (0.5 / m / step.norm())
        } else {
            step
        };
        u -= step;
        if step.norm() <= 1e-15 {
            break;
        }
    }
    u
}

fn unit_root_offset(theta: f64) -> C64 {
    let s = (0.5 * theta).sin();
    C64::new(-2.0 * s * s, theta.sin())
}

fn seeds(p: &ModelParams, cf: &CharFn, rotation: f64) -> Vec<C64> {
    let m = p.m();
    let mf = m as f64;
    // both roots X matter only while A^-M is not negligible
    let sides: &[bool] = if mf * cf.ln_a() < 40.0 {
        &[true, false]
    } else {
        &[true]
    };
    let mut out: Vec<C64> = (0..m)
        .flat_map(|k| sides.iter().map(move |s| (k, *s)))
        .map(|(k, larger)| {
            let th = 2.0 * PI * (k as f64 + rotation) / mf;
            let kk = if k <= m / 2 { k as f64 } else { k as f64 - mf };
            branch_refine(cf, kk, unit_root_offset(th), larger)
        })
        .collect();
    if rotation != 0.0 {
        out.extend((0..m).map(|k| unit_root_offset(2.0 * PI * (k as f64 + rotation) / mf)));
    }
    let r = 10.0 / mf;
    out.extend((0..8).map(|i| C64::from_polar(r, PI * (2 * i + 1) as f64 / 8.0 + rotation)));
    // images of the zeros of Q near the imaginary axis
    let kappa = p.kappa();
    let jmax = (m / 4).clamp(1, 24);
    if let Ok(ts) = tan_eq_t_roots(jmax) {
        for t in ts {
            let z0 = C64::new(0.0, t);
            for z in [z0, C64::new(2.0, t), C64::new(-2.0, t)] {
                out.push(z / mf);
                out.push(z.conj() / mf);
            }
            if let Ok(z) = newton_q(z0, kappa, 40) {
                out.push(z / mf);
            }
        }
    }
    // far from the unit circle F is dominated by P1 or phi^M P2, so zeros
    // sit next to theirs
    let (p1, p2) = cf.p_coeffs();
    for c in [p1, p2] {
        let c: Vec<C64> = c.iter().map(|x| C64::new(*x, 0.0)).collect();
        let (zs, _) = aberth(&c, 500, 1e-14);
        out.extend(zs.into_iter().map(|z| z * (1.0 + 1e-3 * rotation) - 1.0));
    }
    for x in [
        -mf - 1.0,
        -2.0 * mf - 1.0,
        -0.5 * mf,
        -2.0,
        0.5 * (p.a().sqrt().recip()) - 1.0,
    ] {
        out.push(C64::new(x * (1.0 + 1e-3 * rotation), 0.0));
    }
    out
}

/// Map a root to its representative: `|phi| >= A^-1/2` and `Im phi >= 0`.
fn representative(a: f64, k: f64, u: C64) -> C64 {
    let phi = u + 1.0;
    let u = if phi.norm_sqr() * a < 1.0 {
        // 1/(A phi) - 1 = -(K + A u) / (A (1 + u))
        -(u * a + k) / (phi * a)
    } else {
        u
    };
    if u.im < 0.0 {
        u.conj()
    } else {
        u
    }
}

fn is_spurious(p: &ModelParams, u: C64) -> bool {
    let phi = u + 1.0;
    let s = p.a().sqrt().recip();
    u.norm() <= CLUSTER_TOL
        || (u * p.m() as f64).norm() <= 1e-4
        || (phi - s).norm() <= CLUSTER_TOL
        || (phi + s).norm() <= CLUSTER_TOL
}

fn record(p: &ModelParams, u: C64, e: &ScaledEval) -> RootRecord {
    let phi = u + 1.0;
    let lambda = (p.a() - phi.inv()) * u;
    RootRecord {
        phi,
        lambda,
        residual: e.relative_residual(),
        simple: e.relative_derivative(phi) > SIMPLE_TOL,
        spurious: is_spurious(p, u),
    }
}

fn merge(p: &ModelParams, found: &mut Vec<(C64, RootRecord)>, new: Vec<(C64, RootRecord)>) {
    for (u, r) in new {
        let u = representative(p.a(), p.k(), u);
        let tol = CLUSTER_TOL * (1.0 + (u + 1.0).norm());
        if !found.iter().any(|(v, _)| (u - *v).norm() <= tol) {
            let cf = CharFn::new(p);
            let e = cf.eval_offset(u, true).ok();
            let rec = match e {
                Some(e) => record(p, u, &e),
                None => r,
            };
            found.push((u, rec));
        }
    }
}

fn eigen_count(found: &[(C64, RootRecord)]) -> usize {
    1 + found
        .iter()
        .filter(|(_, r)| !r.spurious)
        .map(|(_, r)| if is_real(r.lambda) { 1 } else { 2 })
        .sum::<usize>()
}

fn is_real(l: C64) -> bool {
    l.im.abs() <= 1e-9 * (1.0 + l.norm())
}

/// All distinct zeros of `F` found from the seed set, one per pair and
/// conjugate class, sorted by `(Re lambda, Im lambda)`. Spurious zeros are
/// kept and flagged.
pub fn roots_of_f(p: &ModelParams) -> Vec<RootRecord> {
    let (found, _) = collect_roots(p);
    found.into_iter().map(|(_, r)| r).collect()
}

fn collect_roots(p: &ModelParams) -> (Vec<(C64, RootRecord)>, usize) {
    let cf = CharFn::new(p);
    let mut found: Vec<(C64, RootRecord)> = Vec::new();
    let run = |seeds: Vec<C64>| -> Vec<(C64, RootRecord)> {
        let mut out: Vec<(C64, RootRecord)> = seeds
            .par_iter()
            .filter_map(|s| newton_f(&cf, *s, 100).map(|(u, e)| (u, record(p, u, &e))))
            .collect();
        out.sort_by(|a, b| {
            let (x, y) = (a.1.lambda, b.1.lambda);
            x.re.total_cmp(&y.re).then(x.im.abs().total_cmp(&y.im.abs()))
        });
        out
    };
    merge(p, &mut found, run(seeds(p, &cf, 0.0)));
    let m = p.m();
    if eigen_count(&found) < m {
        merge(p, &mut found, run(seeds(p, &cf, 0.5)));
    }
    if eigen_count(&found) < m && m <= 300 {
        let coeffs: Vec<C64> = cf
            .power_polynomial()
            .into_iter()
            .map(|c| C64::new(c, 0.0))
            .collect();
        let (zs, _) = aberth(&coeffs, 4000, 1e-14);
        merge(p, &mut found, run(zs.into_iter().map(|z| z - 1.0).collect()));
    }
    if eigen_count(&found) < m {
        // a genuine double zero at +-A^-1/2 is the remaining possibility
        let s = p.a().sqrt().recip();
        for phi in [s, -s] {
            if let Ok(e) = cf.eval_phi(C64::new(phi, 0.0), true) {
                if e.relative_derivative(C64::new(phi, 0.0)) <= 1e-8 && eigen_count(&found) < m {
                    let u = C64::new(phi - 1.0, 0.0);
                    let mut r = record(p, u, &e);
                    r.spurious = false;
                    r.simple = false;
                    found.push((u, r));
                }
            }
        }
    }
    found.sort_by(|a, b| {
        let (x, y) = (a.1.lambda, b.1.lambda);
        x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im))
    });
    let count = eigen_count(&found);
    (found, count)
}

/// The spectrum of `B` from the zeros of `F`.
///
/// An incomplete result (fewer than `M` eigenvalues) is reported through
/// `SpectrumResult::complete` rather than as an error.
pub fn spectrum_via_f(p: &ModelParams) -> Result<SpectrumResult> {
    let (found, _) = collect_roots(p);
    let mut eig = vec![Eigenvalue {
        lambda: C64::new(0.0, 0.0),
        phi: Some(C64::new(1.0, 0.0)),
        simple: true,
        residual: 0.0,
    }];
    for (_, r) in found.iter().filter(|(_, r)| !r.spurious) {
        if is_real(r.lambda) {
            eig.push(Eigenvalue {
                lambda: C64::new(r.lambda.re, 0.0),
                phi: Some(r.phi),
                simple: r.simple,
                residual: r.residual,
            });
        } else {
            for (l, ph) in [(r.lambda, r.phi), (r.lambda.conj(), r.phi.conj())] {
                eig.push(Eigenvalue {
                    lambda: l,
                    phi: Some(ph),
                    simple: r.simple,
                    residual: r.residual,
                });
            }
        }
    }
    Ok(SpectrumResult::from_eigenvalues(eig, p.m()))
}

/// Number of conjugate pairs with `Re lambda > 1e-12`.
///
/// Fails if the spectrum could not be completed, since a missing pair could
/// be unstable.
pub fn count_unstable_pairs(p: &ModelParams) -> Result<usize> {
    let s = spectrum_via_f(p)?;
    if !s.complete {
        return Err(Error::NotFound(format!(
            "spectrum incomplete: {} of {} eigenvalues",
            s.eigenvalues.len(),
            s.expected
        )));
    }
    Ok(s.eigenvalues
        .iter()
        .filter(|e| e.lambda.re > UNSTABLE_TOL && e.lambda.im > 0.0)
        .count())
}

/// The partner zero `1/(A phi)`.
pub fn partner(p: &ModelParams, phi: C64) -> C64 {
    (phi * p.a()).inv()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{assemble_b, charpoly_oracle_spectrum, hausdorff};
    use proptest::prelude::*;

    #[test]
    fn tan_roots() {
        let t = tan_eq_t_roots(10).unwrap();
        assert!((t[0] - 4.4934095).abs() < 1e-6);
        assert!(t[0] < 1.5 * PI);
        for (j, tj) in t.iter().enumerate() {
            assert!(g_tan(*tj).abs() <= 1e-12 * tj, "g(t_{}) = {}", j + 1, g_tan(*tj));
            assert!(tj.cos() < 0.0);
            let hi = 1.5 * PI + 2.0 * PI * j as f64;
            assert!(*tj < hi && hi - tj < 0.25);
        }
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        assert!(tan_eq_t_roots(0).is_err());
    }

    #[test]
    fn kappa_crossings() {
        assert!((kappa_j0(1).unwrap() - 1.89825).abs() < 1e-4);
        let ts = tan_eq_t_roots(5).unwrap();
        let mut prev = 0.0;
        for j in 1..=5 {
            let k = kappa_j0(j).unwrap();
            assert!(k > prev);
            prev = k;
            let q = q_of_z(C64::new(0.0, ts[j - 1]), C64::new(k, 0.0)).unwrap();
            assert!(q.value.norm() < 1e-10, "j = {j}: {}", q.value);
        }
    }

    #[test]
    fn q_curve_crosses_at_kappa_j0() {
        let grid = [1.2, 1.5, 1.8, 2.2, 2.6, 3.0, 4.0];
        let c = q_root_curve(1, &grid).unwrap();
        assert!((c.crossing - 1.89825).abs() < 1e-4);
        let at = |k: f64| c.samples.iter().find(|s| s.0 == k).unwrap().1;
        assert!(at(1.5).re < 0.0);
        assert!(at(2.2).re > 0.0);
        assert!(c.samples.iter().all(|s| s.1.im > 0.0));
        assert!(c.first_quadrant_above_crossing());
        for s in &c.samples {
            let q = q_of_z(s.1, C64::new(s.0, 0.0)).unwrap();
            assert!(q.value.norm() < 1e-9);
            if s.0 > c.crossing {
                let w = s.0 * s.0;
                assert!(((s.1 * s.1 + w) / (w * (s.1 + 1.0))).norm() < 1.0);
            }
        }
        let ups: Vec<f64> = c
            .samples
            .iter()
            .filter(|s| s.0 >= c.crossing)
            .map(|s| s.1.re)
            .collect();
        assert!(ups.windows(2).all(|w| w[1] > w[0]));
        let anchor = q_root_curve(1, &[c.crossing]).unwrap().samples[0].1;
        assert!((anchor - C64::new(0.0, 4.4934095)).norm() < 1e-6);
    }

    #[test]
    fn q_curve_grid_checks() {
        assert!(q_root_curve(1, &[2.0, 1.0]).is_err());
        assert!(q_root_curve(1, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn q_has_no_right_half_plane_zeros_for_small_kappa() {
        let x0 = 1e-2;
        let r = 10.0;
        let half_disk = |s: f64| {
            // arc from -i r through r to i r, then down the line Re z = x0
            if s < 0.5 {
                let th = -0.5 * PI + 2.0 * s * PI;
                C64::from_polar(r, th) + x0
            } else {
                C64::new(x0, r - 4.0 * (s - 0.5) * r)
            }
        };
        let q = |kap: f64| move |z: C64| Ok(q_of_z(z, C64::new(kap, 0.0))?.value);
        assert_eq!(count_zeros(q(0.5), half_disk, 400).unwrap(), 0);
        // one pair past kappa_1^0 and before kappa_2^0
        assert_eq!(count_zeros(q(3.0), half_disk, 400).unwrap(), 2);
    }

    fn oracle_match(m: usize, k: f64) -> f64 {
        let p = ModelParams::new(m, k).unwrap();
        let s = spectrum_via_f(&p).unwrap();
        assert!(s.complete, "M={m} K={k}: {} of {m}", s.eigenvalues.len());
        let o = charpoly_oracle_spectrum(&assemble_b(&p)).unwrap();
        hausdorff(&s.lambdas(), &o.lambdas())
    }

    #[test]
    fn matches_charpoly_oracle() {
        for m in [5usize, 8, 12] {
            for k in [0.3, 1.0, 3.0] {
                let d = oracle_match(m, k);
                assert!(d <= 1e-8, "M={m} K={k}: {d}");
            }
        }
        assert!(oracle_match(12, 0.5) <= 1e-8);
    }

    #[test]
    fn spectrum_m100_k3() {
        let p = ModelParams::new(100, 3.0).unwrap();
        let s = spectrum_via_f(&p).unwrap();
        assert!(s.complete, "{} eigenvalues", s.eigenvalues.len());
        let un = s.unstable();
        assert_eq!(un.len(), 2);
        let want = [C64::new(0.05836, 0.2014), C64::new(0.02585, 0.3618)];
        for w in want {
            assert!(un.iter().any(|l| (l - w).norm() < 1e-3), "{un:?}");
        }
        assert_eq!(s.zero_count, 1);
        assert_eq!(s.real_negative, 1);
        let real: Vec<f64> = s
            .eigenvalues
            .iter()
            .filter(|e| e.lambda.im == 0.0 && e.lambda.norm() > 1e-9)
            .map(|e| e.lambda.re)
            .collect();
        assert!((real[0] + 410.94).abs() < 0.5, "{real:?}");
        assert_eq!(s.nonreal_pairs(), 49);
        assert_eq!(count_unstable_pairs(&p).unwrap(), 2);
    }

    #[test]
    fn pair_and_conjugate_closure() {
        for &(m, k) in &[(12usize, 0.5), (40, 1.0), (100, 3.0)] {
            let p = ModelParams::new(m, k).unwrap();
            let cf = CharFn::new(&p);
            for r in roots_of_f(&p).iter().filter(|r| !r.spurious) {
                assert!(r.residual <= 1e-9);
                let q = partner(&p, r.phi);
                let e = cf.eval_phi(q, true).unwrap();
                assert!(
                    e.relative_residual() <= 1e-8,
                    "partner of {} residual {}",
                    r.phi,
                    e.relative_residual()
                );
                let lq = crate::charfn::lambda_of_phi(&p, q).unwrap();
                assert!((lq - r.lambda).norm() <= 1e-10 * (1.0 + r.lambda.norm()));
                let ec = cf.eval_phi(r.phi.conj(), true).unwrap();
                assert!(ec.relative_residual() <= 1e-9);
            }
            let s = spectrum_via_f(&p).unwrap();
            let ls = s.lambdas();
            let conj: Vec<C64> = ls.iter().map(|l| l.conj()).collect();
            assert!(hausdorff(&ls, &conj) <= 1e-10);
        }
    }

    #[test]
    fn unstable_roots_sit_near_one() {
        let p = ModelParams::new(100, 3.0).unwrap();
        let roots = roots_of_f(&p);
        let un: Vec<&RootRecord> = roots
            .iter()
            .filter(|r| !r.spurious && r.lambda.re >= 0.0)
            .collect();
        assert!(!un.is_empty());
        let alpha = un
            .iter()
            .map(|r| (r.phi - 1.0).norm() * 100.0)
            .fold(0.0, f64::max);
        for r in un {
            assert!(r.phi.re >= 1.0 - 1e-9);
            assert!((r.phi - 1.0).norm() <= 10.0 * alpha / 100.0);
        }
    }

    #[test]
    fn zero_count_by_argument_principle() {
        // zeros of phi^M F inside |phi| = 2 against the explicit root set
        for &(m, k) in &[(6usize, 0.3), (10, 1.0), (16, 3.0)] {
            let p = ModelParams::new(m, k).unwrap();
            let cf = CharFn::new(&p);
            let coeffs: Vec<f64> = cf.power_polynomial();
            let f = |z: C64| Ok(coeffs.iter().rev().fold(C64::default(), |acc, c| acc * z + *c));
            let rad = 2.0;
            let inside = count_zeros(f, |s| C64::from_polar(rad, 2.0 * PI * s), 512).unwrap();
            let roots = roots_of_f(&p);
            // every eigenvalue gives two zeros; the four spurious and the
            // double zero pair at 1, 1/A are added by hand
            let mut zs = vec![C64::new(1.0, 0.0), C64::new(1.0 / p.a(), 0.0)];
            let s = p.a().sqrt().recip();
            zs.extend([
                C64::new(1.0, 0.0),
                C64::new(1.0 / p.a(), 0.0),
                C64::new(s, 0.0),
                C64::new(-s, 0.0),
            ]);
            for r in roots.iter().filter(|r| !r.spurious) {
                let mut class = vec![r.phi, partner(&p, r.phi)];
                if !is_real(r.lambda) {
                    class.extend([r.phi.conj(), partner(&p, r.phi.conj())]);
                }
                zs.extend(class);
            }
            assert_eq!(zs.len(), 2 * m + 4);
            let explicit = zs.iter().filter(|z| z.norm() < rad).count() as i64;
            assert_eq!(inside, explicit, "M={m} K={k}");
        }
    }

    #[test]
    fn unstable_counts_across_crossings() {
        let p = ModelParams::from_kappa(100, 3.5).unwrap();
        assert_eq!(count_unstable_pairs(&p).unwrap(), 0);
        let p = ModelParams::from_kappa(100, 4.5).unwrap();
        assert_eq!(count_unstable_pairs(&p).unwrap(), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn spectrum_is_complete_and_closed(m in 3usize..400, lk in -3.0f64..1.5) {
            let k = 10f64.powf(lk);
            let p = ModelParams::new(m, k).unwrap();
            let s = spectrum_via_f(&p).unwrap();
            prop_assert!(s.complete, "M={} K={} got {}", m, k, s.eigenvalues.len());
            prop_assert_eq!(s.zero_count, 1);
            let ls = s.lambdas();
            let conj: Vec<C64> = ls.iter().map(|l| l.conj()).collect();
            prop_assert!(hausdorff(&ls, &conj) <= 1e-10);
            let tr: f64 = -(p.a() * (m as f64 + 2.0) + (m as f64 - 2.0) * (p.a() + 1.0) + p.a());
            let sum: f64 = ls.iter().map(|l| l.re).sum();
            prop_assert!((sum - tr).abs() <= 1e-7 * tr.abs(), "trace {} vs {}", sum, tr);
        }
    }
}
