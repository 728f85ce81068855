//! The finite Becker–Döring system with linear atomization of the largest
//! clusters.
//!
//! Clusters of size `1..=M` exchange monomers with unit rates; the flux from
//! size `l` to `l+1` is `J_l = n_l n_1 - n_{l+1}`. Clusters of the largest size
//! break into `M` monomers at rate `K n_M`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// System size and atomization rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    m: usize,
    k: f64,
}

impl ModelParams {
    /// `m >= 3` clusters sizes and atomization rate `k > 0`.
    pub fn new(m: usize, k: f64) -> Result<Self> {
        if m < 3 {
            return Err(Error::Usage(format!("system size M must be at least 3, got {m}")));
        }
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::Usage(format!(
                "atomization rate K must be positive, got {k}"
            )));
        }
        Ok(Self { m, k })
    }

    /// Parametrize by the scaled rate `kappa = K sqrt(M)`.
    pub fn from_kappa(m: usize, kappa: f64) -> Result<Self> {
        Self::new(m, kappa / (m as f64).sqrt())
    }

    /// Largest cluster size `M`.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of fluxes, `M - 1`.
    pub fn n(&self) -> usize {
        self.m - 1
    }

    /// Atomization rate `K`.
    pub fn k(&self) -> f64 {
        self.k
    }

    /// `A = 1 + K`, the value of the constant equilibrium.
    pub fn a(&self) -> f64 {
        1.0 + self.k
    }

    /// `kappa = K sqrt(M)`.
    pub fn kappa(&self) -> f64 {
        self.k * (self.m as f64).sqrt()
    }

    /// `1 / sqrt(M)`.
    pub fn eps(&self) -> f64 {
        1.0 / (self.m as f64).sqrt()
    }
}

/// Number densities `n_1..n_M` at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub n: Vec<f64>,
    pub t: f64,
}

impl StateVector {
    pub fn new(n: Vec<f64>, t: f64) -> Self {
        Self { n, t }
    }

    /// The constant equilibrium `n_l = 1 + K`.
    pub fn constant_equilibrium(p: &ModelParams) -> Self {
        Self::new(vec![p.a(); p.m()], 0.0)
    }

    /// `n_1 = monomers`, every other size set to `fill`.
    pub fn monomer_excess(p: &ModelParams, monomers: f64, fill: f64) -> Self {
        let mut n = vec![fill; p.m()];
        n[0] = monomers;
        Self::new(n, 0.0)
    }

    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    /// True when every density is finite and nonnegative.
    pub fn is_physical(&self) -> bool {
        self.n.iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Net fluxes `J_1..J_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxVector(pub Vec<f64>);

fn check_len(p: &ModelParams, n: &[f64]) -> Result<()> {
    if n.len() != p.m() {
        return Err(Error::Usage(format!(
            "state has {} entries but M = {}",
            n.len(),
            p.m()
        )));
    }
    Ok(())
}

pub fn fluxes(p: &ModelParams, s: &StateVector) -> Result<FluxVector> {
    check_len(p, &s.n)?;
    let n = &s.n;
    Ok(FluxVector((0..p.n()).map(|l| n[l] * n[0] - n[l + 1]).collect()))
}

/// Time derivative of the densities.
pub fn rhs(p: &ModelParams, s: &StateVector) -> Result<Vec<f64>> {
    check_len(p, &s.n)?;
    let mut out = vec![0.0; p.m()];
    rhs_into(p, &s.n, &mut out);
    Ok(out)
}

/// Slice form of [`rhs`]; lengths must equal `M`.
///
/// `dn_1` uses the explicit flux sum, so mass conservation is a property of
/// the arithmetic rather than something enforced here.
pub fn rhs_into(p: &ModelParams, n: &[f64], out: &mut [f64]) {
    let m = p.m();
    debug_assert_eq!(n.len(), m);
    debug_assert_eq!(out.len(), m);
    let n1 = n[0];
    let k = p.k();

    let mut flux_sum = 0.0;
    let mut prev = 0.0;
    for l in 0..m - 1 {
        let j = n[l] * n1 - n[l + 1];
        flux_sum += j;
        if l > 0 {
            out[l] = prev - j;
        }
        prev = j;
    }
    let j1 = n1 * n1 - n[1];
    out[m - 1] = prev - k * n[m - 1];
    out[0] = -j1 - flux_sum + m as f64 * k * n[m - 1];
}

/// `sum_l l n_l`.
pub fn total_mass(p: &ModelParams, s: &StateVector) -> Result<f64> {
    check_len(p, &s.n)?;
    Ok(mass_of(&s.n))
}

pub(crate) fn mass_of(n: &[f64]) -> f64 {
    n.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum()
}
