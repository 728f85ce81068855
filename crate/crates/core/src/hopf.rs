//! Hopf points: the values `kappa_j(M)` where the `j`-th eigenvalue pair of
//! `B` crosses the imaginary axis.
//!
//! Unknowns are carried in the scaled form `phi = 1 + z/M`, `K = kappa/sqrt(M)`
//! so that all three stay `O(1)` as `M` grows.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charfn::{lambda_of_z_raw, CharFn};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::roots::{count_unstable_pairs, kappa_j0, tan_eq_t_roots};

/// Lower end of the `kappa` window.
pub const BETA0: f64 = 0.5;
/// Smallest `M` accepted by [`find_hopf`].
pub const MIN_M: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfPoint {
    pub m: usize,
    pub k: f64,
    pub kappa: f64,
    /// `Im lambda` at the crossing.
    pub omega: f64,
    pub j: usize,
    pub phi: C64,
    pub z: C64,
    /// `|F| / max term` at `phi`.
    pub residual_f: f64,
    /// `|Re lambda| / |lambda|`.
    pub residual_re_lambda: f64,
    pub simple: bool,
}

/// Starting point `(z, kappa)` for [`find_hopf`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfSeed {
    pub z: C64,
    pub kappa: f64,
}

/// Residual `(Re Q^eps, Im Q^eps, Re Lambda)` at `(z, kappa)` for size `m`.
fn system(m: f64, x: [f64; 3]) -> Result<[f64; 3]> {
    let z = C64::new(x[0], x[1]);
    let kappa = x[2];
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("kappa must stay positive, got {kappa}")));
    }
    let k = kappa / m.sqrt();
    let (q, _) = CharFn::with_size(m, k).qeps(z)?;
    let lam = lambda_of_z_raw(m, k, z)? * (m / k);
    Ok([q.re, q.im, lam.re])
}

fn norm3(v: &[f64; 3]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn solve3(j: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(j);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut mc = j;
        for r in 0..3 {
            mc[r][c] = b[r];
        }
        *o = det(mc) / d;
    }
    Some(out)
}

/// Damped Newton with a forward-difference Jacobian.
fn newton3(m: f64, x0: [f64; 3]) -> Result<[f64; 3]> {
    let mut x = x0;
    let mut f = system(m, x)?;
    let mut it = 0;
    while it < 100 {
        it += 1;
        let mut jac = [[0.0; 3]; 3];
        for c in 0..3 {
            let h = 1e-7 * (1.0 + x[c].abs());
            let mut xp = x;
            xp[c] += h;
            let fp = system(m, xp)?;
            for r in 0..3 {
                jac[r][c] = (fp[r] - f[r]) / h;
            }
        }
        let Some(dx) = solve3(jac, f) else { break };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=20 {
            let cand = [x[0] - t * dx[0], x[1] - t * dx[1], x[2] - t * dx[2]];
            if let Ok(fc) = system(m, cand) {
                if norm3(&fc) < norm3(&f) || norm3(&fc) == 0.0 {
                    x = cand;
                    f = fc;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        let step = t * norm3(&dx);
        if !accepted || step <= 1e-14 * (1.0 + norm3(&x)) {
            break;
        }
    }
    let scale = 1.0 + norm3(&x);
    if norm3(&f) <= 1e-9 * scale {
        Ok(x)
    } else {
        Err(Error::Convergence {
            what: "Hopf point Newton",
            iterations: it,
            residual: norm3(&f),
            best: x.to_vec(),
        })
    }
}

fn acceptable(x: &[f64; 3]) -> bool {
    x[1] > 0.0 && C64::new(x[0], x[1]).norm() > 1e-6 && x[2] > 0.0
}

/// Continue a solution from `m_from` to `m_to` in geometric steps of `M`.
fn continue_in_m(mut x: [f64; 3], m_from: f64, m_to: f64) -> Result<[f64; 3]> {
    let mut m = m_from;
    let mut ratio = 10f64.powf(0.25);
    while m != m_to {
        let next = if m_to < m {
            (m / ratio).max(m_to)
        } else {
            (m * ratio).min(m_to)
        };
        // z scales little with M; reuse it as the predictor
        match newton3(next, x) {
            Ok(xn) if acceptable(&xn) && (xn[2] - x[2]).abs() < 0.5 * x[2] => {
                x = xn;
                m = next;
                ratio = ratio.powf(1.2).min(10f64.powf(0.5));
            }
            _ => {
                ratio = ratio.sqrt();
                if ratio < 1.0 + 1e-6 {
                    return Err(Error::Continuation {
                        at: m,
                        reason: "Hopf point continuation in M stalled".into(),
                    });
                }
            }
        }
    }
    Ok(x)
}

/// Where continuation in `M` starts.
const M_START: f64 = 1e6;

/// Locate `kappa_j(M)` and the crossing eigenvalue `i omega`.
pub fn find_hopf(m: usize, j: usize, seed: Option<HopfSeed>) -> Result<HopfPoint> {
    if m < MIN_M {
        return Err(Error::Usage(format!("find_hopf needs M >= {MIN_M}, got {m}")));
    }
    if j == 0 {
        return Err(Error::Usage("branch index j starts at 1".into()));
    }
    let mf = m as f64;
    let t = tan_eq_t_roots(j)?[j - 1];
    let limit = [0.0, t, kappa_j0(j)?];

    let direct = |x0: [f64; 3]| newton3(mf, x0).ok().filter(acceptable);
    let x = match seed.and_then(|s| direct([s.z.re, s.z.im, s.kappa])) {
        Some(x) => x,
        None => {
            let start = mf.max(M_START);
            let x0 = newton3(start, limit)?;
            if !acceptable(&x0) {
                return Err(Error::NotFound(format!(
                    "Hopf Newton at M = {start} converged to a spurious root"
                )));
            }
            continue_in_m(x0, start, mf)?
        }
    };
    hopf_point(m, j, x)
}

fn hopf_point(m: usize, j: usize, x: [f64; 3]) -> Result<HopfPoint> {
    let mf = m as f64;
    let z = C64::new(x[0], x[1]);
    let kappa = x[2];
    let k = kappa / mf.sqrt();
    let lam = lambda_of_z_raw(mf, k, z)?;
    let cf = CharFn::with_size(mf, k);
    let e = cf.eval_offset(z / mf, true)?;
    let phi = z / mf + 1.0;
    Ok(HopfPoint {
        m,
        k,
        kappa,
        omega: lam.im,
        j,
        phi,
        z,
        residual_f: e.relative_residual(),
        residual_re_lambda: lam.re.abs() / lam.norm(),
        simple: e.relative_derivative(phi) > 1e-6,
    })
}

/// One row of the critical-parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub m: usize,
    pub hopf: Option<HopfPoint>,
    pub error: Option<String>,
}

/// `find_hopf(M, 1)` for every `M`, computed concurrently. Failures are kept
/// per row.
pub fn table1(ms: &[usize]) -> Vec<Table1Row> {
    ms.par_iter()
        .map(|&m| match find_hopf(m, 1, None) {
            Ok(h) => Table1Row {
                m,
                hopf: Some(h),
                error: None,
            },
            Err(e) => Table1Row {
                m,
                hopf: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

pub const TABLE1_HEADER: &str = "M,K,kappa,omega,residual_F,residual_ReLambda";

pub fn table1_csv(rows: &[Table1Row]) -> String {
    let mut s = String::from(TABLE1_HEADER);
    s.push('\n');
    for r in rows {
        match &r.hopf {
            Some(h) => s.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.m, h.k, h.kappa, h.omega, h.residual_f, h.residual_re_lambda
            )),
            None => s.push_str(&format!("{},NaN,NaN,NaN,NaN,NaN\n", r.m)),
        }
    }
    s
}

pub fn table1_text(rows: &[Table1Row]) -> String {
    let mut s = format!("{:>9} {:>12} {:>10} {:>12}\n", "M", "K", "kappa_1", "Im lambda");
    for r in rows {
        match (&r.hopf, &r.error) {
            (Some(h), _) => s.push_str(&format!(
                "{:>9} {:>12.5e} {:>10.5} {:>12.5e}\n",
                r.m, h.k, h.kappa, h.omega
            )),
            (None, e) => s.push_str(&format!(
                "{:>9} failed: {}\n",
                r.m,
                e.as_deref().unwrap_or("unknown")
            )),
        }
    }
    s
}

/// The `j`-th eigenvalue followed in `kappa` at fixed `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaBranch {
    pub m: usize,
    pub j: usize,
    /// `kappa_j(M)`, where the branch was anchored.
    pub crossing: f64,
    /// `(kappa, lambda)` in grid order.
    pub samples: Vec<(f64, C64)>,
    /// `Im lambda > 0` at every sample.
    pub im_positive: bool,
    /// Finite-difference `d lambda / d kappa` has positive real and
    /// imaginary parts between consecutive samples with `kappa >= kappa_j`.
    pub increasing_above_crossing: bool,
}

fn newton_u(cf: &CharFn, u0: C64) -> Option<C64> {
    let mut u = u0;
    for _ in 0..50 {
        let e = cf.eval_offset(u, true).ok()?;
        let step = e.value / e.derivative;
        if !step.is_finite() {
            return None;
        }
        u -= step;
        if step.norm() <= 1e-15 * (1.0 + u.norm()) {
            break;
        }
    }
    let e = cf.eval_offset(u, true).ok()?;
    (e.relative_residual() <= 1e-9).then_some(u)
}

/// `du/dkappa` along a zero of `F` at fixed `M`.
fn tangent(m: f64, kappa: f64, u: C64) -> Option<C64> {
    let h = 1e-6 * kappa;
    let sm = m.sqrt();
    let fu = |kap: f64| {
        CharFn::with_size(m, kap / sm)
            .eval_offset(u, true)
            .ok()
            .map(|e| (e.value * e.log_scale.exp(), e.derivative * e.log_scale.exp()))
    };
    let (fp, _) = fu(kappa + h)?;
    let (fm, _) = fu(kappa - h)?;
    let (_, du) = fu(kappa)?;
    let r = -((fp - fm) / (2.0 * h)) / du;
    r.is_finite().then_some(r)
}

fn step_branch(m: f64, mut kap: f64, mut u: C64, to: f64) -> Result<C64> {
    let sm = m.sqrt();
    let mut h = to - kap;
    while kap != to {
        if (to - kap).abs() < h.abs() {
            h = to - kap;
        }
        let du = tangent(m, kap, u).ok_or_else(|| Error::Continuation {
            at: kap,
            reason: "singular tangent".into(),
        })?;
        let pred = u + du * h;
        let cf = CharFn::with_size(m, (kap + h) / sm);
        let ok = newton_u(&cf, pred).filter(|un| {
            let jump = (un - pred).norm();
            jump <= 10.0 * (du * h).norm() || jump <= 1e-12 * (1.0 + u.norm())
        });
        match ok {
            Some(un) => {
                u = un;
                kap = if (to - kap).abs() <= h.abs() { to } else { kap + h };
            }
            None => {
                h *= 0.5;
                if h.abs() < 1e-9 * (1.0 + kap) {
                    return Err(Error::Continuation {
                        at: kap,
                        reason: "eigenvalue branch jump".into(),
                    });
                }
            }
        }
    }
    Ok(u)
}

/// Follow `lambda_j(kappa)` over the grid, anchored at the Hopf point.
pub fn lambda_branch(m: usize, j: usize, kappa_grid: &[f64]) -> Result<LambdaBranch> {
    if kappa_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Usage("kappa grid must be sorted".into()));
    }
    if kappa_grid.iter().any(|k| !(*k >= BETA0 && k.is_finite())) {
        return Err(Error::Usage(format!("kappa grid must lie in [{BETA0}, inf)")));
    }
    let h = find_hopf(m, j, None)?;
    let mf = m as f64;
    let u0 = h.z / mf;
    let split = kappa_grid.partition_point(|k| *k < h.kappa);
    let mut us = vec![C64::default(); kappa_grid.len()];
    let (mut kap, mut u) = (h.kappa, u0);
    for i in split..kappa_grid.len() {
        u = step_branch(mf, kap, u, kappa_grid[i])?;
        kap = kappa_grid[i];
        us[i] = u;
    }
    let (mut kap, mut u) = (h.kappa, u0);
    for i in (0..split).rev() {
        u = step_branch(mf, kap, u, kappa_grid[i])?;
        kap = kappa_grid[i];
        us[i] = u;
    }
    let samples: Vec<(f64, C64)> = kappa_grid
        .iter()
        .zip(&us)
        .map(|(k, u)| {
            let phi = u + 1.0;
            let kk = k / mf.sqrt();
            (*k, (1.0 + kk - phi.inv()) * u)
        })
        .collect();
    let im_positive = samples.iter().all(|s| s.1.im > 0.0);
    let above: Vec<&(f64, C64)> = samples.iter().filter(|s| s.0 >= h.kappa).collect();
    let increasing_above_crossing = above.windows(2).all(|w| {
        let d = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
        d.re > 0.0 && d.im > 0.0
    });
    Ok(LambdaBranch {
        m,
        j,
        crossing: h.kappa,
        samples,
        im_positive,
        increasing_above_crossing,
    })
}

/// Unstable pair counts at each probe. Counts must be nondecreasing and
/// must rise by exactly the number of located `kappa_j(M)` between
/// consecutive probes.
pub fn unstable_window_check(m: usize, probes: &[f64]) -> Result<Vec<(f64, usize)>> {
    if probes.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Usage("probes must be sorted".into()));
    }
    let counts: Vec<(f64, usize)> = probes
        .par_iter()
        .map(|&kap| Ok((kap, count_unstable_pairs(&ModelParams::from_kappa(m, kap)?)?)))
        .collect::<Result<_>>()?;
    let top = counts.iter().map(|c| c.1).max().unwrap_or(0);
    let mut crossings = Vec::new();
    if m >= MIN_M {
        for j in 1..=top + 1 {
            match find_hopf(m, j, None) {
                Ok(h) => crossings.push(h.kappa),
                Err(_) => break,
            }
        }
    }
    for w in counts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b.1 < a.1 {
            return Err(Error::Invariant(format!(
                "unstable pairs drop from {} to {} between kappa = {} and {}",
                a.1, b.1, a.0, b.0
            )));
        }
        let expected = crossings.iter().filter(|k| **k > a.0 && **k <= b.0).count();
        let all_located = crossings.len() > top;
        if all_located && b.1 - a.1 != expected {
            return Err(Error::Invariant(format!(
                "{} crossings between kappa = {} and {} but the count rises by {}",
                expected,
                a.0,
                b.0,
                b.1 - a.1
            )));
        }
    }
    Ok(counts)
}
