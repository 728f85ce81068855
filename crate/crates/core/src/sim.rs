//! Time integration of the nonlinear system by an embedded Dormand–Prince
//! 5(4) pair with step-size control.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigenvector_from_phi, right_null_vector};
use crate::model::{mass_of, rhs_into, ModelParams, StateVector};
use crate::roots::spectrum_via_f;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Keep the full state every this many accepted steps.
    pub snapshot_stride: usize,
    /// If set, snapshots are taken on this uniform time grid instead, by
    /// cubic Hermite interpolation between steps.
    pub sample_interval: Option<f64>,
    /// Constant step without error control.
    pub fixed_step: Option<f64>,
    /// Largest tolerated relative mass deviation.
    pub mass_drift_bound: f64,
    pub max_steps: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            snapshot_stride: 100,
            sample_interval: None,
            fixed_step: None,
            mass_drift_bound: 1e-8,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub min_dt: f64,
    pub max_dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Every accepted step, starting at `t0`.
    pub times: Vec<f64>,
    /// `n_1` at each entry of `times`.
    pub n1: Vec<f64>,
    /// Relative mass deviation at each entry of `times`.
    pub mass_drift: Vec<f64>,
    /// Full-state snapshots.
    pub states: Vec<StateVector>,
    pub step_stats: StepStats,
    /// Smallest density seen at any step. Negative means positivity was lost.
    pub min_density: f64,
    pub mass0: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> Option<&StateVector> {
        self.states.last()
    }

    pub fn max_mass_drift(&self) -> f64 {
        self.mass_drift.iter().fold(0.0, |a, d| a.max(d.abs()))
    }
}

// Dormand–Prince coefficients; the system is autonomous, so the nodes c_i
// are not needed
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Stepper<'a> {
    p: &'a ModelParams,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(p: &'a ModelParams, m: usize) -> Self {
        Self {
            p,
            k: std::array::from_fn(|_| vec![0.0; m]),
            tmp: vec![0.0; m],
            y_new: vec![0.0; m],
        }
    }

    fn stage(&mut self, y: &[f64], h: f64, coeffs: &[f64], out: usize) {
        for (i, (t, yi)) in self.tmp.iter_mut().zip(y).enumerate() {
            let mut acc = 0.0;
            for (s, c) in coeffs.iter().enumerate() {
                acc += c * self.k[s][i];
            }
            *t = yi + h * acc;
        }
        let (tmp, k) = (&self.tmp, &mut self.k);
        rhs_into(self.p, tmp, &mut k[out]);
    }

    /// One step from `y` with `k[0] = f(y)`; leaves the new state in `y_new`
    /// and `f(y_new)` in `k[6]`. Returns the scaled error norm.
    fn step(&mut self, y: &[f64], h: f64, rtol: f64, atol: f64) -> f64 {
        self.stage(y, h, &[A21], 1);
        self.stage(y, h, &[A31, A32], 2);
        self.stage(y, h, &[A41, A42, A43], 3);
        self.stage(y, h, &[A51, A52, A53, A54], 4);
        self.stage(y, h, &[A61, A62, A63, A64, A65], 5);
        for i in 0..y.len() {
            let k = &self.k;
            self.y_new[i] =
                y[i] + h * (B1 * k[0][i] + B3 * k[2][i] + B4 * k[3][i] + B5 * k[4][i] + B6 * k[5][i]);
        }
        let (y_new, k) = (&self.y_new, &mut self.k);
        rhs_into(self.p, y_new, &mut k[6]);
        let k = &self.k;
        let mut sum = 0.0;
        for i in 0..y.len() {
            let e =
                h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
            let sc = atol + rtol * y[i].abs().max(self.y_new[i].abs());
            sum += (e / sc) * (e / sc);
        }
        (sum / y.len() as f64).sqrt()
    }
}

fn hermite(y0: &[f64], f0: &[f64], y1: &[f64], f1: &[f64], h: f64, s: f64) -> Vec<f64> {
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    (0..y0.len())
        .map(|i| h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i])
        .collect()
}

fn initial_step(p: &ModelParams, y: &[f64], f0: &[f64], opts: &IntegrateOptions, span: f64) -> f64 {
    let sc: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let rms =
        |v: &[f64]| (v.iter().zip(&sc).map(|(a, s)| (a / s) * (a / s)).sum::<f64>() / v.len() as f64).sqrt();
    let (d0, d1) = (rms(y), rms(f0));
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    rhs_into(p, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Integrate from `s0` to `t_end`.
pub fn integrate(
    p: &ModelParams,
    s0: &StateVector,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    let m = p.m();
    if s0.n.len() != m {
        return Err(Error::Usage(format!(
            "state has {} entries but M = {m}",
            s0.n.len()
        )));
    }
    if !s0.n.iter().all(|v| v.is_finite()) {
        return Err(Error::Usage("initial state is not finite".into()));
    }
    let t0 = s0.t;
    if !(t_end > t0) {
        return Err(Error::Usage(format!("t_end = {t_end} must exceed t0 = {t0}")));
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::Usage("tolerances must be positive".into()));
    }
    if let Some(h) = opts.fixed_step {
        if !(h > 0.0) {
            return Err(Error::Usage("fixed step must be positive".into()));
        }
    }
    if let Some(dt) = opts.sample_interval {
        if !(dt > 0.0) {
            return Err(Error::Usage("sample interval must be positive".into()));
        }
    }
    let span = t_end - t0;
    let stride = opts.snapshot_stride.max(1);
    let mass0 = mass_of(&s0.n);
    let drift = |y: &[f64]| (mass_of(y) - mass0) / mass0;

    let mut y = s0.n.clone();
    let mut st = Stepper::new(p, m);
    rhs_into(p, &y, &mut st.k[0]);
    let mut t = t0;
    let mut h = opts
        .fixed_step
        .unwrap_or_else(|| initial_step(p, &y, &st.k[0], opts, span));

    let mut traj = Trajectory {
        times: vec![t0],
        n1: vec![y[0]],
        mass_drift: vec![0.0],
        states: vec![StateVector::new(y.clone(), t0)],
        step_stats: StepStats {
            min_dt: f64::INFINITY,
            ..Default::default()
        },
        min_density: y.iter().copied().fold(f64::INFINITY, f64::min),
        mass0,
    };
    let mut next_sample = opts.sample_interval.map(|dt| t0 + dt);
    let mut sample_index = 1usize;
    let mut fac_max = 5.0;

    while t < t_end {
        if traj.step_stats.accepted + traj.step_stats.rejected >= opts.max_steps {
            return Err(Error::Stiffness { t, dt: h });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        let err = st.step(&y, h, opts.rtol, opts.atol);
        if !st.y_new.iter().all(|v| v.is_finite()) && opts.fixed_step.is_some() {
            return Err(Error::BlowUp { last_good_t: t });
        }
        let accept = opts.fixed_step.is_some() || (err <= 1.0 && err.is_finite());
        if !accept {
            traj.step_stats.rejected += 1;
            let fac = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.2, 1.0)
            } else {
                0.2
            };
            h *= fac;
            fac_max = 1.0;
            if h < 1e-14 * span {
                return Err(Error::Stiffness { t, dt: h });
            }
            continue;
        }
        if !st.y_new.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp { last_good_t: t });
        }
        let t_new = if last { t_end } else { t + h };
        if let (Some(dt), Some(ns)) = (opts.sample_interval, next_sample.as_mut()) {
            while *ns <= t_new + 1e-12 * span && *ns <= t_end + 1e-12 * span {
                let s = ((*ns - t) / h).clamp(0.0, 1.0);
                let yi = hermite(&y, &st.k[0], &st.y_new, &st.k[6], h, s);
                traj.states.push(StateVector::new(yi, *ns));
                sample_index += 1;
                *ns = t0 + sample_index as f64 * dt;
            }
        }
        std::mem::swap(&mut y, &mut st.y_new);
        st.k.swap(0, 6);
        t = t_new;
        let ss = &mut traj.step_stats;
        ss.accepted += 1;
        ss.min_dt = ss.min_dt.min(h);
        ss.max_dt = ss.max_dt.max(h);
        let d = drift(&y);
        if d.abs() > opts.mass_drift_bound {
            return Err(Error::Invariant(format!(
                "relative mass drift {d:e} exceeds {:e} at t = {t}",
                opts.mass_drift_bound
            )));
        }
        traj.times.push(t);
        traj.n1.push(y[0]);
        traj.mass_drift.push(d);
        traj.min_density = y.iter().copied().fold(traj.min_density, f64::min);
        if opts.sample_interval.is_none() && (ss.accepted.is_multiple_of(stride) || t >= t_end) {
            traj.states.push(StateVector::new(y.clone(), t));
        }
        if opts.fixed_step.is_none() {
            let fac = if err == 0.0 {
                fac_max
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, fac_max)
            };
            h *= fac;
            fac_max = 5.0;
            if h < 1e-14 * span && t < t_end {
                return Err(Error::Stiffness { t, dt: h });
            }
        }
    }
    Ok(traj)
}

/// CSV with header `t,n_1,...,n_M,mass`, one row per snapshot.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let m = traj.states.first().map_or(0, |s| s.n.len());
    let mut out = String::from("t");
    for l in 1..=m {
        out.push_str(&format!(",n_{l}"));
    }
    out.push_str(",mass\n");
    for s in &traj.states {
        out.push_str(&format!("{:.16e}", s.t));
        for v in &s.n {
            out.push_str(&format!(",{v:.16e}"));
        }
        out.push_str(&format!(",{:.16e}\n", mass_of(&s.n)));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationMetrics {
    /// Peak-to-trough of `n_1` over the late window.
    pub amplitude: f64,
    /// Mean spacing of upward mean-crossings; absent when not oscillating.
    pub period: Option<f64>,
    /// Index of the observed component (1 for `n_1`).
    pub component: usize,
    pub mean: f64,
    pub crossings: usize,
    pub window_start: f64,
}

impl OscillationMetrics {
    pub fn oscillating(&self) -> bool {
        self.period.is_some()
    }
}

/// Metrics of `n_1` over the second half of the trajectory.
pub fn oscillation_metrics(traj: &Trajectory) -> Result<OscillationMetrics> {
    let (Some(&t0), Some(&t1)) = (traj.times.first(), traj.times.last()) else {
        return Err(Error::Usage("empty trajectory".into()));
    };
    oscillation_metrics_from(traj, t0 + 0.5 * (t1 - t0))
}

/// Metrics of `n_1` over `t >= window_start`.
pub fn oscillation_metrics_from(traj: &Trajectory, window_start: f64) -> Result<OscillationMetrics> {
    let idx = traj.times.partition_point(|t| *t < window_start);
    let ts = &traj.times[idx..];
    let ys = &traj.n1[idx..];
    if ts.len() < 3 {
        return Err(Error::Usage("window holds fewer than three samples".into()));
    }
    let (lo, hi) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(*v), b.max(*v))
    });
    let amplitude = hi - lo;
    let mut area = 0.0;
    for i in 1..ts.len() {
        area += 0.5 * (ys[i] + ys[i - 1]) * (ts[i] - ts[i - 1]);
    }
    let mean = area / (ts[ts.len() - 1] - ts[0]);
    // a crossing counts only after the signal has dipped clearly below the
    // mean, so jitter near the mean is not mistaken for extra cycles
    let low = mean - 0.05 * amplitude;
    let mut armed = false;
    let mut ups = Vec::new();
    for i in 1..ts.len() {
        if ys[i - 1] < low {
            armed = true;
        }
        if armed && ys[i - 1] < mean && ys[i] >= mean {
            let s = (mean - ys[i - 1]) / (ys[i] - ys[i - 1]);
            ups.push(ts[i - 1] + s * (ts[i] - ts[i - 1]));
            armed = false;
        }
    }
    let flat = amplitude < 1e-6 * mean.abs().max(f64::MIN_POSITIVE);
    let period = if flat || ups.len() < 2 {
        None
    } else {
        Some((ups[ups.len() - 1] - ups[0]) / (ups.len() - 1) as f64)
    };
    Ok(OscillationMetrics {
        amplitude,
        period,
        component: 1,
        mean,
        crossings: ups.len(),
        window_start,
    })
}

/// Constant equilibrium plus `delta` times the real part of `mode`, after
/// removing its component along the null direction so the total mass is
/// unchanged. Without a mode, the eigenvector of the rightmost nonzero
/// eigenvalue is used.
pub fn perturbed_equilibrium(p: &ModelParams, delta: f64, mode: Option<&[C64]>) -> Result<StateVector> {
    let base = StateVector::constant_equilibrium(p);
    if delta == 0.0 {
        return Ok(base);
    }
    let m = p.m();
    let v: Vec<f64> = match mode {
        Some(v) => {
            if v.len() != m {
                return Err(Error::Usage(format!("mode has {} entries but M = {m}", v.len())));
            }
            v.iter().map(|c| c.re).collect()
        }
        None => {
            let spec = spectrum_via_f(p)?;
            let top = spec
                .eigenvalues
                .iter()
                .filter(|e| e.lambda.norm() > 1e-9 && e.lambda.im >= 0.0)
                .max_by(|a, b| a.lambda.re.total_cmp(&b.lambda.re))
                .and_then(|e| e.phi)
                .ok_or_else(|| Error::NotFound("no nonzero eigenvalue".into()))?;
            eigenvector_from_phi(p, top)?.iter().map(|c| c.re).collect()
        }
    };
    let vbar = right_null_vector(p);
    let lv: f64 = v.iter().enumerate().map(|(i, x)| (i + 1) as f64 * x).sum();
    let lvbar: f64 = vbar.iter().enumerate().map(|(i, x)| (i + 1) as f64 * x).sum();
    let c = lv / lvbar;
    let mut w: Vec<f64> = v.iter().zip(&vbar).map(|(a, b)| a - c * b).collect();
    let sup = w.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if !(sup > 0.0) {
        return Err(Error::Domain("mode has no mass-neutral component".into()));
    }
    w.iter_mut().for_each(|x| *x /= sup);
    Ok(StateVector::new(
        base.n.iter().zip(&w).map(|(b, x)| b + delta * x).collect(),
        0.0,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::total_mass;

    fn m25_k3() -> (ModelParams, StateVector) {
        let p = ModelParams::new(25, 3.0).unwrap();
        let mut n = vec![4.0; 25];
        n[0] = 4.2;
        (p, StateVector::new(n, 0.0))
    }

    #[test]
    fn equilibrium_stays_put() {
        let p = ModelParams::new(25, 3.0).unwrap();
        let s0 = StateVector::constant_equilibrium(&p);
        let tr = integrate(&p, &s0, 10.0, &IntegrateOptions::default()).unwrap();
        let dev = tr
            .final_state()
            .unwrap()
            .n
            .iter()
            .map(|v| (v - 4.0).abs())
            .fold(0.0, f64::max);
        assert!(dev <= 1e-6, "{dev}");
    }

    #[test]
    fn m25_k3_oscillation_grows_to_a_large_cycle() {
        let (p, s0) = m25_k3();
        assert!((total_mass(&p, &s0).unwrap() - 1300.2).abs() < 1e-9);
        let tr = integrate(&p, &s0, 600.0, &IntegrateOptions::default()).unwrap();
        assert!(tr.max_mass_drift() <= 1e-8);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
        assert!(tr.min_density > 0.0);
        // the single unstable pair grows at Re lambda = 0.0214
        let early = oscillation_metrics_from(&tr, 100.0).unwrap();
        assert!(early.oscillating());
        let ptp = |a: f64, b: f64| {
            let w = tr.times.iter().zip(&tr.n1).filter(|(t, _)| **t >= a && **t < b);
            let (lo, hi) = w.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), (_, y)| {
                (l.min(*y), h.max(*y))
            });
            hi - lo
        };
        let g = (ptp(175.0, 200.0) / ptp(100.0, 125.0)).ln() / 75.0;
        assert!((g - 0.0214).abs() < 0.003, "growth {g}");
        let late = oscillation_metrics_from(&tr, 400.0).unwrap();
        assert!(late.amplitude >= 0.1 * late.mean, "{late:?}");
        assert!(late.period.unwrap() > 0.0);
        let csv = trajectory_csv(&tr);
        assert!(csv.starts_with("t,n_1,n_2,"));
        assert!(csv.lines().next().unwrap().ends_with("n_25,mass"));
    }

    #[test]
    fn stable_regime_does_not_oscillate() {
        let p = ModelParams::new(25, 0.1).unwrap();
        let s0 = StateVector::constant_equilibrium(&p);
        let tr = integrate(&p, &s0, 100.0, &IntegrateOptions::default()).unwrap();
        let om = oscillation_metrics(&tr).unwrap();
        assert!(!om.oscillating());
    }

    #[test]
    fn integrator_order() {
        let (p, s0) = m25_k3();
        let t_end = 2.0;
        let run = |h: f64| {
            let o = IntegrateOptions {
                fixed_step: Some(h),
                ..Default::default()
            };
            integrate(&p, &s0, t_end, &o)
                .unwrap()
                .final_state()
                .unwrap()
                .n
                .clone()
        };
        let reference = run(2.5e-4);
        let hs = [0.016, 0.008, 0.004, 0.002];
        let errs: Vec<f64> = hs
            .iter()
            .map(|h| {
                run(*h)
                    .iter()
                    .zip(&reference)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        // least-squares slope of log err against log h
        let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
        let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        assert!(num / den >= 3.5, "slope {} errs {errs:?}", num / den);
    }

    #[test]
    fn tolerance_reduction_reduces_error() {
        let (p, s0) = m25_k3();
        let at = |rtol: f64| {
            let o = IntegrateOptions {
                rtol,
                atol: rtol * 1e-2,
                ..Default::default()
            };
            integrate(&p, &s0, 5.0, &o)
                .unwrap()
                .final_state()
                .unwrap()
                .n
                .clone()
        };
        let reference = at(1e-13);
        let err = |v: Vec<f64>| {
            v.iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(at(1e-6)), err(at(1e-8)));
        assert!(e2 < e1 / 10.0, "{e1} {e2}");
    }

    #[test]
    fn sampled_snapshots_are_uniform() {
        let (p, s0) = m25_k3();
        let o = IntegrateOptions {
            sample_interval: Some(0.5),
            ..Default::default()
        };
        let tr = integrate(&p, &s0, 10.0, &o).unwrap();
        assert_eq!(tr.states.len(), 21);
        for (i, s) in tr.states.iter().enumerate() {
            assert!((s.t - 0.5 * i as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn bad_input() {
        let (p, s0) = m25_k3();
        let o = IntegrateOptions::default();
        assert!(matches!(integrate(&p, &s0, 0.0, &o), Err(Error::Usage(_))));
        let short = StateVector::new(vec![1.0; 3], 0.0);
        assert!(integrate(&p, &short, 1.0, &o).is_err());
    }

    #[test]
    fn step_collapse_is_reported() {
        let (p, s0) = m25_k3();
        let o = IntegrateOptions {
            max_steps: 10,
            ..Default::default()
        };
        assert!(matches!(
            integrate(&p, &s0, 200.0, &o),
            Err(Error::Stiffness { .. })
        ));
    }

    #[test]
    fn blow_up_is_reported() {
        let (p, s0) = m25_k3();
        let o = IntegrateOptions {
            fixed_step: Some(1.0),
            mass_drift_bound: f64::INFINITY,
            ..Default::default()
        };
        assert!(matches!(integrate(&p, &s0, 200.0, &o), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn perturbation_is_mass_neutral() {
        let p = ModelParams::new(100, 3.0).unwrap();
        let eq = StateVector::constant_equilibrium(&p);
        assert_eq!(perturbed_equilibrium(&p, 0.0, None).unwrap(), eq);
        let m0 = total_mass(&p, &eq).unwrap();
        for d in [1e-3, -0.1, 0.5] {
            let s = perturbed_equilibrium(&p, d, None).unwrap();
            assert!(((total_mass(&p, &s).unwrap() - m0) / m0).abs() <= 1e-12);
        }
        let e1: Vec<C64> = (0..100)
            .map(|i| C64::new(if i == 0 { 1.0 } else { 0.0 }, 0.0))
            .collect();
        let s = perturbed_equilibrium(&p, 0.01, Some(&e1)).unwrap();
        assert!(((total_mass(&p, &s).unwrap() - m0) / m0).abs() <= 1e-12);
    }

    #[test]
    fn unstable_mode_grows_at_its_rate() {
        // after one period the perturbation has the same shape, scaled by
        // exp(Re lambda T)
        let p = ModelParams::new(100, 3.0).unwrap();
        let delta = 1e-3;
        let s0 = perturbed_equilibrium(&p, delta, None).unwrap();
        let (rate, omega) = (0.05836, 0.2014);
        let period = 2.0 * std::f64::consts::PI / omega;
        let o = IntegrateOptions {
            sample_interval: Some(period),
            ..Default::default()
        };
        let tr = integrate(&p, &s0, 40.0, &o).unwrap();
        let dev = |s: &StateVector| s.n.iter().map(|v| (v - 4.0).abs()).fold(0.0, f64::max);
        let ratio = dev(&tr.states[1]) / dev(&tr.states[0]) / (rate * period).exp();
        assert!((0.5..=2.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn period_near_hopf_point() {
        let p = ModelParams::new(100, 0.3940).unwrap();
        let s0 = perturbed_equilibrium(&p, 1e-4, None).unwrap();
        let tr = integrate(&p, &s0, 2000.0, &IntegrateOptions::default()).unwrap();
        let om = oscillation_metrics(&tr).unwrap();
        let want = 2.0 * std::f64::consts::PI / 0.021740;
        let per = om.period.unwrap();
        assert!(((per - want) / want).abs() <= 0.15, "period {per} vs {want}");
    }
}
