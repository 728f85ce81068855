//! Steady states of the model.
//!
//! Every equilibrium has equal fluxes `J_l = J` and is fixed by its monomer
//! density `z`. Writing the closed form around `z = 1` with `expm1` keeps the
//! removable singularity at `z = 1` harmless.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// One member of the equilibrium family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumProfile {
    pub z: f64,
    /// Weight of the geometric part; undefined (pole) at `z = 1`.
    pub alpha: Option<f64>,
    pub densities: Vec<f64>,
    pub mass: f64,
    pub flux: f64,
}

fn check_z(z: f64) -> Result<()> {
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::Domain(format!(
            "monomer density z must be positive, got {z}"
        )));
    }
    Ok(())
}

/// `K z^N + z - 1 - K`, evaluated without cancellation near `z = 1`.
fn denominator_small(p: &ModelParams, z: f64) -> f64 {
    let n = p.n() as f64;
    p.k() * (n * z.ln()).exp_m1() + (z - 1.0)
}

/// Above this value of `N ln z` the profile is computed with `z^N` factored out.
const LARGE_POWER: f64 = 1.0;

fn alpha_of(p: &ModelParams, z: f64) -> f64 {
    let k = p.k();
    let n = p.n() as f64;
    if n * z.ln() > LARGE_POWER {
        // divide through by z^N
        (z - 1.0 - k) * (-n * z.ln()).exp() / (k + (-n * z.ln()).exp() * (z - 1.0 - k))
    } else {
        (z - 1.0 - k) / denominator_small(p, z)
    }
}

pub fn general_equilibrium(p: &ModelParams, z: f64) -> Result<EquilibriumProfile> {
    check_z(z)?;
    let m = p.m();
    let k = p.k();
    let nn = p.n() as f64;

    if z == 1.0 {
        let denom = 1.0 + nn * k;
        let densities: Vec<f64> = (1..=m).map(|l| (1.0 + (m - l) as f64 * k) / denom).collect();
        let mass = mass_at_one(p);
        return Ok(EquilibriumProfile {
            z,
            alpha: None,
            densities,
            mass,
            flux: k / denom,
        });
    }

    let lz = z.ln();
    let densities: Vec<f64> = if nn * lz > LARGE_POWER {
        let tail = (-nn * lz).exp() * (z - 1.0 - k);
        let den = k + tail;
        (1..=m)
            .map(|l| (k * z + ((l as f64 - nn) * lz).exp() * (z - 1.0 - k)) / den)
            .collect()
    } else {
        let den = denominator_small(p, z);
        if den == 0.0 || !den.is_finite() {
            return Err(Error::Internal(format!(
                "equilibrium denominator vanished at z = {z}"
            )));
        }
        (1..=m)
            .map(|l| {
                let lf = l as f64;
                let num = k * ((m as f64 - lf) * lz).exp_m1() + (z - 1.0);
                (lf * lz).exp() * num / den
            })
            .collect()
    };
    let mut densities = densities;
    densities[0] = z;
    let alpha = alpha_of(p, z);
    Ok(EquilibriumProfile {
        z,
        alpha: Some(alpha),
        densities,
        mass: mass_of_equilibrium(p, z)?,
        flux: (z * z - z) * (1.0 - alpha),
    })
}

/// `mu_M(1) = M (M + 1) / 2`.
fn mu_one(p: &ModelParams) -> f64 {
    let m = p.m() as f64;
    m * (m + 1.0) / 2.0
}

fn mass_at_one(p: &ModelParams) -> f64 {
    // sum_l l (1 + (M - l) K) / (1 + N K)
    let m = p.m() as f64;
    let k = p.k();
    let s1 = mu_one(p);
    let s2 = m * (m + 1.0) * (2.0 * m + 1.0) / 6.0;
    (s1 + k * (m * s1 - s2)) / (1.0 + (m - 1.0) * k)
}

/// `mu_M(z) = sum_{l=1}^M l z^l` in closed form.
pub fn mu(m: usize, z: f64) -> f64 {
    if z == 1.0 {
        let m = m as f64;
        return m * (m + 1.0) / 2.0;
    }
    let mf = m as f64;
    let zm1 = z.powi(m as i32 + 1);
    (z - zm1) / ((1.0 - z) * (1.0 - z)) - mf * zm1 / (1.0 - z)
}

/// Total mass `alpha mu_M(z) + (1 - alpha) z mu_M(1)` of the equilibrium with
/// monomer density `z`.
pub fn mass_of_equilibrium(p: &ModelParams, z: f64) -> Result<f64> {
    check_z(z)?;
    if z == 1.0 {
        return Ok(mass_at_one(p));
    }
    let m = p.m();
    let mf = m as f64;
    let nn = p.n() as f64;
    let k = p.k();
    let lz = z.ln();
    let mu1 = mu_one(p);

    if nn * lz > LARGE_POWER {
        // alpha mu_M(z) with z^N divided out of both factors
        let scale = (-nn * lz).exp();
        let alpha_scaled = (z - 1.0 - k) / (k + scale * (z - 1.0 - k));
        let mu_scaled = (z * scale - z * z) / ((1.0 - z) * (1.0 - z)) - mf * z * z / (1.0 - z);
        let alpha = alpha_scaled * scale;
        return Ok(alpha_scaled * mu_scaled + (1.0 - alpha) * z * mu1);
    }

    let alpha = alpha_of(p, z);
    if (z - 1.0).abs() < 0.5 {
        // mu_M(z) - z mu_M(1) = z sum_l l (z^(l-1) - 1), summed directly
        let d: f64 = (1..=m)
            .map(|l| l as f64 * ((l as f64 - 1.0) * lz).exp_m1())
            .sum::<f64>()
            * z;
        Ok(z * mu1 + alpha * d)
    } else {
        Ok(alpha * mu(m, z) + (1.0 - alpha) * z * mu1)
    }
}

/// Monomer density of the equilibrium carrying `target_mass`.
///
/// Brackets in `ln z`, bisects, then polishes with a few secant steps. The
/// mass map is assumed increasing; a decrease seen while bracketing is an
/// error.
pub fn find_z_for_mass(p: &ModelParams, target_mass: f64) -> Result<f64> {
    if !(target_mass.is_finite() && target_mass > 0.0) {
        return Err(Error::Domain(format!(
            "target mass must be positive, got {target_mass}"
        )));
    }
    let mass = |z: f64| mass_of_equilibrium(p, z);

    let mut lo = (target_mass / mu_one(p)).min(1.0);
    let mut hi = (target_mass / mu_one(p)).max(1.0);
    let mut m_lo = mass(lo)?;
    let mut m_hi = mass(hi)?;
    if m_lo > m_hi {
        return Err(Error::Invariant(format!(
            "equilibrium mass decreases between z = {lo} and z = {hi}"
        )));
    }
    let mut guard = 0;
    while m_lo > target_mass {
        let next = lo / 2.0;
        let m_next = mass(next)?;
        if m_next > m_lo {
            return Err(Error::Invariant(format!(
                "equilibrium mass not monotone near z = {next}"
            )));
        }
        lo = next;
        m_lo = m_next;
        guard += 1;
        if guard > 2000 || lo < f64::MIN_POSITIVE {
            return Err(Error::NotFound(format!(
                "cannot bracket mass {target_mass} from below"
            )));
        }
    }
    guard = 0;
    while m_hi < target_mass {
        let next = hi * 2.0;
        let m_next = mass(next)?;
        if m_next < m_hi || !m_next.is_finite() {
            return Err(Error::NotFound(format!(
                "cannot bracket mass {target_mass} from above"
            )));
        }
        hi = next;
        m_hi = m_next;
        guard += 1;
        if guard > 2000 {
            return Err(Error::NotFound(format!(
                "cannot bracket mass {target_mass} from above"
            )));
        }
    }

    for _ in 0..200 {
        if hi - lo <= 1e-13 * hi {
            break;
        }
        let mid = (lo * hi).sqrt();
        let mid = if mid > lo && mid < hi {
            mid
        } else {
            0.5 * (lo + hi)
        };
        if mass(mid)? < target_mass {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let mut z = 0.5 * (lo + hi);
    let mut err = mass(z)? - target_mass;
    for _ in 0..5 {
        if err.abs() <= 1e-14 * target_mass {
            break;
        }
        let h = 1e-7 * z;
        let slope = (mass(z + h)? - mass(z - h)?) / (2.0 * h);
        if !(slope > 0.0) {
            break;
        }
        let cand = z - err / slope;
        let cand_err = mass(cand)? - target_mass;
        if cand_err.abs() < err.abs() {
            z = cand;
            err = cand_err;
        } else {
            break;
        }
    }
    if err.abs() > 1e-10 * target_mass {
        return Err(Error::NotFound(format!(
            "mass inversion stalled with residual {err:e} for target {target_mass}"
        )));
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{rhs, total_mass, StateVector};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn residual(p: &ModelParams, e: &EquilibriumProfile) -> f64 {
        let r = rhs(p, &StateVector::new(e.densities.clone(), 0.0)).unwrap();
        r.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    #[test]
    fn z_equal_a_is_constant_family() {
        let p = ModelParams::new(12, 0.75).unwrap();
        let e = general_equilibrium(&p, p.a()).unwrap();
        assert!(e.alpha.unwrap().abs() < 1e-15);
        for d in &e.densities {
            assert_relative_eq!(*d, 1.75, max_relative = 1e-14);
        }
        assert_relative_eq!(
            mass_of_equilibrium(&p, p.a()).unwrap(),
            1.75 * 78.0,
            max_relative = 1e-13
        );
    }

    #[test]
    fn z_equal_one_small_case() {
        let p = ModelParams::new(3, 1.0).unwrap();
        let e = general_equilibrium(&p, 1.0).unwrap();
        assert_relative_eq!(e.densities[0], 1.0);
        assert_relative_eq!(e.densities[1], 2.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(e.densities[2], 1.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(e.mass, 10.0 / 3.0, max_relative = 1e-15);
        assert!(residual(&p, &e) < 1e-15);
    }

    #[test]
    fn z_two_is_steady() {
        let p = ModelParams::new(5, 1.0).unwrap();
        let e = general_equilibrium(&p, 2.0).unwrap();
        assert!(residual(&p, &e) < 1e-12);
        assert_eq!(e.densities[0], 2.0);
    }

    #[test]
    fn rejects_nonpositive_z() {
        let p = ModelParams::new(5, 1.0).unwrap();
        assert!(matches!(general_equilibrium(&p, 0.0), Err(Error::Domain(_))));
        assert!(matches!(general_equilibrium(&p, -1.0), Err(Error::Domain(_))));
        assert!(find_z_for_mass(&p, -3.0).is_err());
    }

    #[test]
    fn continuous_through_z_one() {
        let p = ModelParams::new(40, 0.3).unwrap();
        let at_one = general_equilibrium(&p, 1.0).unwrap();
        for h in [1e-6, -1e-6] {
            let near = general_equilibrium(&p, 1.0 + h).unwrap();
            for (a, b) in near.densities.iter().zip(&at_one.densities) {
                assert!((a - b).abs() < 1e-4);
            }
            assert!((near.mass - at_one.mass).abs() < 1e-4 * at_one.mass);
        }
        // no cancellation blow-up right next to the pole of alpha
        for h in [1e-12, -1e-12, 1e-9, -1e-9] {
            let near = general_equilibrium(&p, 1.0 + h).unwrap();
            for (a, b) in near.densities.iter().zip(&at_one.densities) {
                assert!((a - b).abs() < 1e3 * h.abs() + 1e-14, "h={h}: {a} vs {b}");
            }
            assert!(residual(&p, &near) < 1e-13);
        }
    }

    #[test]
    fn huge_z_does_not_overflow() {
        let p = ModelParams::new(2000, 0.5).unwrap();
        let e = general_equilibrium(&p, 50.0).unwrap();
        assert!(e.densities.iter().all(|d| d.is_finite() && *d > 0.0));
        assert!(e.mass.is_finite());
        let direct = total_mass(&p, &StateVector::new(e.densities.clone(), 0.0)).unwrap();
        assert_relative_eq!(e.mass, direct, max_relative = 1e-10);
    }

    #[test]
    fn mass_round_trips() {
        let p = ModelParams::new(30, 1.3).unwrap();
        let target = p.a() * 30.0 * 31.0 / 2.0;
        assert_relative_eq!(find_z_for_mass(&p, target).unwrap(), p.a(), max_relative = 1e-10);
        let m2 = mass_of_equilibrium(&p, 2.0).unwrap();
        assert!((find_z_for_mass(&p, m2).unwrap() - 2.0).abs() < 1e-8);
    }

    #[test]
    fn m25_k3_mass_inverts_near_four() {
        let p = ModelParams::new(25, 3.0).unwrap();
        let z = find_z_for_mass(&p, 1300.2).unwrap();
        assert!((mass_of_equilibrium(&p, z).unwrap() - 1300.2).abs() <= 1e-10 * 1300.2);
        assert!(z > 4.0 && z < 4.01, "z = {z}");
    }

    proptest! {
        #[test]
        fn equilibria_are_steady_positive_and_mass_consistent(
            m in 3usize..120, k in 0.01f64..5.0, lz in -3.0f64..3.0,
        ) {
            let p = ModelParams::new(m, k).unwrap();
            let z = lz.exp();
            let e = general_equilibrium(&p, z).unwrap();
            prop_assert!(e.densities.iter().all(|d| *d > 0.0));
            prop_assert_eq!(e.densities[0], z);
            let sup = e.densities.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            prop_assert!(residual(&p, &e) <= 1e-10 * (1.0 + sup * sup));
            let direct = total_mass(&p, &StateVector::new(e.densities.clone(), 0.0)).unwrap();
            prop_assert!((e.mass - direct).abs() <= 1e-10 * direct);
        }
    }
}
