//! Invariant checks behind `--verify`. Each function returns the list of
//! violated properties; empty means everything held.

use bubbelator::charfn::{lambda_of_phi, q_of_z};
use bubbelator::equilibria::EquilibriumProfile;
use bubbelator::model::rhs;
use bubbelator::roots::{kappa_j0, partner, q_root_curve, tan_eq_t_roots};
use bubbelator::{
    CharFn, Complex64, Error, HopfPoint, ModelParams, SpectrumResult, StateVector, Table1Row, Trajectory,
};

const ROOT_TOL: f64 = 1e-8;

pub fn trajectory(tr: &Trajectory, drift_bound: f64) -> Vec<String> {
    let mut out = Vec::new();
    let drift = tr.max_mass_drift();
    if drift > drift_bound {
        out.push(format!("relative mass drift {drift:e} exceeds {drift_bound:e}"));
    }
    if tr.min_density < 0.0 {
        out.push(format!("density went negative ({:e})", tr.min_density));
    }
    if tr.times.windows(2).any(|w| w[1] <= w[0]) {
        out.push("time stamps are not increasing".into());
    }
    out
}

pub fn equilibrium(p: &ModelParams, eq: &EquilibriumProfile, target_mass: Option<f64>) -> Vec<String> {
    let mut out = Vec::new();
    if eq.densities.iter().any(|&d| !(d > 0.0)) {
        out.push("equilibrium has a non-positive density".into());
    }
    let scale = eq.densities.iter().fold(1.0f64, |a, d| a.max(d.abs()));
    match rhs(p, &StateVector::new(eq.densities.clone(), 0.0)) {
        Ok(r) => {
            let res = r.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if res > 1e-10 * scale * scale {
                out.push(format!("right-hand side does not vanish: {res:e}"));
            }
        }
        Err(e) => out.push(format!("right-hand side: {e}")),
    }
    let mass: f64 = eq
        .densities
        .iter()
        .enumerate()
        .map(|(i, d)| (i + 1) as f64 * d)
        .sum();
    if (mass - eq.mass).abs() > 1e-10 * mass.abs() {
        out.push(format!(
            "reported mass {} differs from sum l n_l = {mass}",
            eq.mass
        ));
    }
    if let Some(t) = target_mass {
        if (mass - t).abs() > 1e-8 * t.abs() {
            out.push(format!("mass {mass} misses the target {t}"));
        }
    }
    out
}

pub fn spectrum(p: &ModelParams, s: &SpectrumResult) -> Vec<String> {
    let mut out = Vec::new();
    if !s.complete {
        out.push(format!(
            "only {} of {} eigenvalues recovered",
            s.eigenvalues.len(),
            s.expected
        ));
    }
    if s.zero_count != 1 {
        out.push(format!("lambda = 0 found {} times", s.zero_count));
    }
    let cf = CharFn::new(p);
    let lambdas = s.lambdas();
    for e in &s.eigenvalues {
        if !lambdas
            .iter()
            .any(|l| (l - e.lambda.conj()).norm() <= 1e-9 * (1.0 + e.lambda.norm()))
        {
            out.push(format!("no conjugate for {}", e.lambda));
        }
        let Some(phi) = e.phi else { continue };
        if e.lambda.norm() == 0.0 {
            continue;
        }
        for (name, x) in [("phi", phi), ("1/(A phi)", partner(p, phi))] {
            match cf.eval_phi(x, true) {
                Ok(v) if v.relative_residual() <= ROOT_TOL => {}
                Ok(v) => out.push(format!(
                    "|F({name})| = {:e} at lambda = {}",
                    v.relative_residual(),
                    e.lambda
                )),
                Err(err) => out.push(format!("F({name}) at lambda = {}: {err}", e.lambda)),
            }
        }
        match lambda_of_phi(p, phi) {
            Ok(l) if (l - e.lambda).norm() <= 1e-9 * (1.0 + l.norm()) => {}
            Ok(l) => out.push(format!("lambda(phi) = {l} but reported {}", e.lambda)),
            Err(err) => out.push(err.to_string()),
        }
    }
    out
}

pub fn qroots(k_max: usize, grid: &[f64]) -> Result<Vec<String>, Error> {
    let mut out = Vec::new();
    let ts = tan_eq_t_roots(k_max)?;
    for (i, &t) in ts.iter().enumerate() {
        let j = i + 1;
        let lo = (2 * j - 1) as f64 * std::f64::consts::PI;
        if !(t > lo && t < lo + std::f64::consts::FRAC_PI_2) {
            out.push(format!("t_{j} = {t} outside its interval"));
        }
        let g = t.sin() - t * t.cos();
        if g.abs() > 1e-12 * t {
            out.push(format!("tan t_{j} - t_{j} residual {g:e}"));
        }
        let k0 = kappa_j0(j)?;
        let z = Complex64::new(0.0, t);
        let q = q_of_z(z, Complex64::new(k0, 0.0))?.value;
        if q.norm() > 1e-10 * (1.0 + t) {
            out.push(format!("Q(i t_{j}; kappa_{j}^0) = {q}"));
        }
    }
    if !grid.is_empty() {
        for j in 1..=k_max {
            let c = q_root_curve(j, grid)?;
            for (k, z, _) in &c.samples {
                let q = q_of_z(*z, Complex64::new(*k, 0.0))?.value;
                if q.norm() > 1e-9 * (1.0 + z.norm()) {
                    out.push(format!("Q(z_{j}({k})) = {q}"));
                }
            }
            if !c.first_quadrant_above_crossing() {
                out.push(format!(
                    "dz_{j}/dkappa leaves the first quadrant above kappa_{j}^0"
                ));
            }
        }
    }
    Ok(out)
}

pub fn hopf(h: &HopfPoint) -> Vec<String> {
    let mut out = Vec::new();
    if h.residual_f > ROOT_TOL {
        out.push(format!("M = {}: |F| residual {:e}", h.m, h.residual_f));
    }
    if h.residual_re_lambda > ROOT_TOL {
        out.push(format!(
            "M = {}: Re lambda residual {:e}",
            h.m, h.residual_re_lambda
        ));
    }
    if !(h.omega > 0.0) {
        out.push(format!(
            "M = {}: crossing frequency {} not positive",
            h.m, h.omega
        ));
    }
    if !h.simple {
        out.push(format!("M = {}: crossing root not simple", h.m));
    }
    out
}

pub fn table(rows: &[Table1Row]) -> Vec<String> {
    let mut out: Vec<String> = rows
        .iter()
        .filter_map(|r| r.hopf.as_ref())
        .flat_map(hopf)
        .collect();
    let mut pts: Vec<&HopfPoint> = rows.iter().filter_map(|r| r.hopf.as_ref()).collect();
    pts.sort_by_key(|h| h.m);
    for w in pts.windows(2) {
        if w[1].m > w[0].m && w[1].kappa >= w[0].kappa {
            out.push(format!(
                "kappa_1 does not decrease: {} at M = {}, {} at M = {}",
                w[0].kappa, w[0].m, w[1].kappa, w[1].m
            ));
        }
    }
    out
}
