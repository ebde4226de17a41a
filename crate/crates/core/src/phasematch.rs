//! Four-wave-mixing phase mismatch, the phase-matching contour and the
//! group-velocity-matched operating point.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::DispersionProfile;
use crate::error::{Error, Result};
use crate::spectral::{lambda_of, omega_of};

/// Guard band around the degenerate point Ω = 0 (1 THz), rad/s.
pub const DEGENERACY_GUARD: f64 = 2.0 * PI * 1e12;
/// Scan points in Ω used to bracket contour roots.
pub const OMEGA_SCAN_POINTS: usize = 4000;
const MISMATCH_TOL: f64 = 1e-6;
const BRACKET_TOL: f64 = 1e-3;

/// Pump and fiber parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FwmConfig {
    /// Nonlinear coefficient γ, 1/(W·m).
    pub gamma: f64,
    /// Peak pump power, W.
    pub peak_pump_power: f64,
    /// Fiber length, m.
    pub fiber_length: f64,
    pub pump_center: f64,
    pub pump_fwhm_bandwidth: f64,
}

impl Default for FwmConfig {
    fn default() -> Self {
        Self {
            // placeholder typical of small-core PCF; multiplies only the SPM term
            gamma: 0.08,
            peak_pump_power: 0.0,
            fiber_length: 0.65,
            pump_center: 771.0,
            pump_fwhm_bandwidth: 3.0,
        }
    }
}

impl FwmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::Domain(format!("γ must be ≥ 0, got {}", self.gamma)));
        }
        if !(self.peak_pump_power >= 0.0) || !self.peak_pump_power.is_finite() {
            return Err(Error::Domain(format!("P_p must be ≥ 0, got {}", self.peak_pump_power)));
        }
        if !(self.fiber_length > 0.0) {
            return Err(Error::Domain(format!("L must be > 0, got {}", self.fiber_length)));
        }
        if !(self.pump_center > 0.0) || !(self.pump_fwhm_bandwidth > 0.0) {
            return Err(Error::Domain("pump center and bandwidth must be > 0".into()));
        }
        Ok(())
    }

    /// 2γP_p, rad/m.
    pub fn spm_term(&self) -> f64 {
        2.0 * self.gamma * self.peak_pump_power
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourPoint {
    pub pump: f64,
    pub signal: f64,
    pub idler: f64,
    pub residual_mismatch: f64,
}

/// Result of the group-velocity matching search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GvMatch {
    pub pump: f64,
    pub signal: f64,
    pub idler: f64,
    /// 1/v_g(pump) − 1/v_g(idler) at the returned pump, s/m.
    pub delay_mismatch: f64,
}

/// Δk = 2k(ω_p) − 2γP_p − k(ω_s) − k(ω_i) with ω_p = (ω_s + ω_i)/2, rad/m.
pub fn delta_k(profile: &DispersionProfile, config: &FwmConfig, omega_s: f64, omega_i: f64) -> Result<f64> {
    profile.check(omega_s)?;
    profile.check(omega_i)?;
    Ok(mismatch(profile, config.spm_term(), omega_s, omega_i))
}

#[inline]
fn mismatch(profile: &DispersionProfile, spm: f64, omega_s: f64, omega_i: f64) -> f64 {
    let omega_p = 0.5 * (omega_s + omega_i);
    2.0 * profile.k_dispersive(omega_p) - spm - (profile.k_dispersive(omega_s) + profile.k_dispersive(omega_i))
}

/// Non-degenerate roots Ω > Ω_min of Δk(ω_p + Ω, ω_p − Ω), ascending.
pub fn mismatch_roots(profile: &DispersionProfile, config: &FwmConfig, omega_p: f64) -> Result<Vec<f64>> {
    profile.check(omega_p)?;
    let (lo, hi) = profile.domain_omega();
    let omega_max = (hi - omega_p).min(omega_p - lo);
    if omega_max <= DEGENERACY_GUARD {
        return Ok(Vec::new());
    }
    let spm = config.spm_term();
    let f = |big: f64| mismatch(profile, spm, omega_p + big, omega_p - big);
    let n = OMEGA_SCAN_POINTS;
    let at = |i: usize| {
        if i + 1 == n {
            omega_max
        } else {
            DEGENERACY_GUARD + (omega_max - DEGENERACY_GUARD) * i as f64 / (n - 1) as f64
        }
    };

    let mut roots = Vec::new();
    let mut prev = (at(0), f(at(0)));
    if prev.1 == 0.0 {
        roots.push(prev.0);
    }
    for i in 1..n {
        let x = at(i);
        let y = f(x);
        if y == 0.0 {
            roots.push(x);
        } else if prev.1 != 0.0 && prev.1.signum() != y.signum() {
            roots.push(bisect(&f, prev.0, prev.1, x));
        }
        prev = (x, y);
    }
    Ok(roots)
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut fa: f64, mut b: f64) -> f64 {
    loop {
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fm.abs() < MISMATCH_TOL || (b - a).abs() < BRACKET_TOL || mid == a || mid == b {
            return mid;
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
}

fn contour_at(profile: &DispersionProfile, config: &FwmConfig, pump_nm: f64) -> Result<Vec<ContourPoint>> {
    let omega_p = omega_of(pump_nm);
    let roots = mismatch_roots(profile, config, omega_p)?;
    Ok(roots
        .into_iter()
        .map(|big| {
            let (ws, wi) = (omega_p + big, omega_p - big);
            ContourPoint {
                pump: pump_nm,
                signal: lambda_of(ws),
                idler: lambda_of(wi),
                residual_mismatch: mismatch(profile, config.spm_term(), ws, wi),
            }
        })
        .collect())
}

fn pump_grid(range_nm: (f64, f64), steps: usize) -> Result<Vec<f64>> {
    let (a, b) = range_nm;
    if !(a > 0.0 && a <= b) || steps == 0 {
        return Err(Error::Domain(format!(
            "invalid pump range [{a}, {b}] nm with {steps} steps"
        )));
    }
    if steps == 1 || a == b {
        return Ok(vec![a]);
    }
    Ok((0..steps)
        .map(|i| if i + 1 == steps { b } else { a + (b - a) * i as f64 / (steps - 1) as f64 })
        .collect())
}

/// Phase-matched (pump, signal, idler) triples across a pump range, in pump order.
pub fn solve_contour(
    profile: &DispersionProfile,
    config: &FwmConfig,
    pump_range_nm: (f64, f64),
    pump_steps: usize,
) -> Result<Vec<ContourPoint>> {
    let pumps = pump_grid(pump_range_nm, pump_steps)?;
    for &p in [pumps[0], pumps[pumps.len() - 1]].iter() {
        profile.check(omega_of(p))?;
    }
    let per_pump: Vec<Vec<ContourPoint>> = pumps
        .par_iter()
        .map(|&p| contour_at(profile, config, p))
        .collect::<Result<_>>()?;
    Ok(per_pump.into_iter().flatten().collect())
}

/// Idler-side root used to follow the contour: the most non-degenerate branch.
fn outer_root(profile: &DispersionProfile, config: &FwmConfig, omega_p: f64) -> Result<Option<f64>> {
    Ok(mismatch_roots(profile, config, omega_p)?.last().copied())
}

/// Pump wavelength at which pump and idler group delays agree along the
/// phase-matching contour, found by bisection on 1/v_g(p) − 1/v_g(i).
pub fn gv_matched_pump(
    profile: &DispersionProfile,
    config: &FwmConfig,
    pump_range_nm: (f64, f64),
) -> Result<GvMatch> {
    const SCAN: usize = 201;
    let pumps = pump_grid(pump_range_nm, SCAN)?;
    let eval = |omega_p: f64| -> Result<Option<(f64, f64)>> {
        Ok(outer_root(profile, config, omega_p)?.map(|big| {
            let d = profile.beta1_unchecked(omega_p) - profile.beta1_unchecked(omega_p - big);
            (d, big)
        }))
    };

    let samples: Vec<(f64, Option<(f64, f64)>)> = pumps
        .par_iter()
        .map(|&p| Ok((omega_of(p), eval(omega_of(p))?)))
        .collect::<Result<_>>()?;
    if samples.iter().all(|(_, s)| s.is_none()) {
        return Err(Error::NotFound(format!(
            "no phase-matched contour for pumps in [{}, {}] nm",
            pump_range_nm.0, pump_range_nm.1
        )));
    }

    for pair in samples.windows(2) {
        let ((wa, Some((da, _))), (wb, Some((db, _)))) = (pair[0], pair[1]) else {
            continue;
        };
        if da == 0.0 || da.signum() != db.signum() {
            let (mut a, mut fa, mut b) = (wa, da, wb);
            if da != 0.0 {
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if mid == a || mid == b {
                        break;
                    }
                    let Some((fm, _)) = eval(mid)? else { break };
                    if fm == 0.0 {
                        a = mid;
                        b = mid;
                        break;
                    }
                    if fm.signum() == fa.signum() {
                        a = mid;
                        fa = fm;
                    } else {
                        b = mid;
                    }
                }
            }
            let omega_p = if fa.abs() == 0.0 { a } else { 0.5 * (a + b) };
            let (delay, big) = eval(omega_p)?
                .ok_or_else(|| Error::NotFound("contour lost during bisection".into()))?;
            return Ok(GvMatch {
                pump: lambda_of(omega_p),
                signal: lambda_of(omega_p + big),
                idler: lambda_of(omega_p - big),
                delay_mismatch: delay,
            });
        }
    }
    Err(Error::NotFound(format!(
        "pump/idler group delays do not cross in [{}, {}] nm",
        pump_range_nm.0, pump_range_nm.1
    )))
}

pub fn contour_csv_rows(points: &[ContourPoint]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| vec![p.pump, p.signal, p.idler, p.residual_mismatch])
        .collect()
}

pub const CONTOUR_HEADER: [&str; 4] = ["pump_nm", "signal_nm", "idler_nm", "residual"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::test_profile;

    fn cfg() -> FwmConfig {
        FwmConfig {
            peak_pump_power: 0.0,
            ..FwmConfig::default()
        }
    }

    #[test]
    fn degenerate_point_is_matched() {
        let p = test_profile();
        let w = omega_of(771.0);
        assert_eq!(delta_k(&p, &cfg(), w, w).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_in_signal_and_idler() {
        let p = test_profile();
        let c = FwmConfig {
            peak_pump_power: 3.0,
            ..cfg()
        };
        for (s, i) in [(514.0, 1542.0), (600.0, 1100.0), (500.0, 1700.0)] {
            let (ws, wi) = (omega_of(s), omega_of(i));
            assert_eq!(
                delta_k(&p, &c, ws, wi).unwrap().to_bits(),
                delta_k(&p, &c, wi, ws).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn operating_point_is_phase_matched() {
        let p = test_profile();
        let dk = delta_k(&p, &cfg(), omega_of(514.0), omega_of(1542.0)).unwrap();
        assert!(dk.abs() < MISMATCH_TOL, "{dk}");
    }

    #[test]
    fn out_of_domain_frequency() {
        let p = test_profile();
        assert!(matches!(
            delta_k(&p, &cfg(), omega_of(400.0), omega_of(1542.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn spm_term_shifts_linearly() {
        let p = test_profile();
        let (ws, wi) = (omega_of(520.0), omega_of(1500.0));
        let base = delta_k(&p, &cfg(), ws, wi).unwrap();
        for power in [0.5, 2.0, 10.0] {
            let c = FwmConfig {
                peak_pump_power: power,
                ..cfg()
            };
            let shifted = delta_k(&p, &c, ws, wi).unwrap();
            let delta = c.gamma * power;
            assert!((shifted - (base - 2.0 * delta)).abs() < 1e-9, "{shifted} {base}");
        }
    }

    #[test]
    fn contour_through_operating_point() {
        let p = test_profile();
        let pts = solve_contour(&p, &cfg(), (771.0, 771.0), 1).unwrap();
        let best = pts
            .iter()
            .min_by(|a, b| (a.signal - 514.0).abs().total_cmp(&(b.signal - 514.0).abs()))
            .unwrap();
        assert!((best.signal - 514.0).abs() < 2.0, "{best:?}");
        assert!((best.idler - 1542.0).abs() < 6.0, "{best:?}");
    }

    #[test]
    fn contour_points_conserve_energy_and_are_matched() {
        let p = test_profile();
        let pts = solve_contour(&p, &cfg(), (750.0, 790.0), 41).unwrap();
        assert!(!pts.is_empty());
        for pt in &pts {
            let lhs = 2.0 / pt.pump;
            let rhs = 1.0 / pt.signal + 1.0 / pt.idler;
            assert!((lhs - rhs).abs() / lhs < 1e-10, "{pt:?}");
            let dk = delta_k(&p, &cfg(), omega_of(pt.signal), omega_of(pt.idler)).unwrap();
            assert!(dk.abs() < 1e-3, "{pt:?} Δk = {dk}");
            assert!(pt.residual_mismatch.abs() < 1e-3);
        }
    }

    #[test]
    fn contour_stable_under_pump_refinement() {
        let p = test_profile();
        let coarse = solve_contour(&p, &cfg(), (750.0, 790.0), 21).unwrap();
        let fine = solve_contour(&p, &cfg(), (750.0, 790.0), 41).unwrap();
        for c in &coarse {
            let f = fine
                .iter()
                .filter(|f| (f.pump - c.pump).abs() < 1e-9)
                .min_by(|a, b| (a.signal - c.signal).abs().total_cmp(&(b.signal - c.signal).abs()))
                .expect("every coarse pump is on the fine grid");
            assert!((f.signal - c.signal).abs() < 0.01 && (f.idler - c.idler).abs() < 0.01);
        }
    }

    #[test]
    fn spm_contour_continuous_at_zero_power() {
        let p = test_profile();
        let at = |power: f64| {
            let c = FwmConfig {
                peak_pump_power: power,
                ..cfg()
            };
            let roots = mismatch_roots(&p, &c, omega_of(771.0)).unwrap();
            *roots.last().unwrap()
        };
        let r0 = at(0.0);
        let r_small = at(1e-4);
        let r_more = at(1e-2);
        assert!((r_small - r0).abs() <= (r_more - r0).abs());
        assert!((r_small - r0).abs() / r0 < 1e-5);
    }

    #[test]
    fn gv_matched_pump_on_fixture() {
        let p = test_profile();
        let m = gv_matched_pump(&p, &cfg(), (750.0, 790.0)).unwrap();
        assert!((m.pump - 771.0).abs() < 1.0, "{m:?}");
        assert!(m.delay_mismatch.abs() < 1e-18, "{m:?}");
        let wp = omega_of(m.pump);
        let wi = omega_of(m.idler);
        let b1p = p.beta1(wp).unwrap();
        assert!((b1p - p.beta1(wi).unwrap()).abs() / b1p < 1e-6);
    }

    #[test]
    fn gv_match_invariant_under_constant_group_delay() {
        let p = test_profile();
        let a = gv_matched_pump(&p, &cfg(), (750.0, 790.0)).unwrap();
        let q = p.with_added_group_delay(1e-10);
        let b = gv_matched_pump(&q, &cfg(), (750.0, 790.0)).unwrap();
        assert!((a.pump - b.pump).abs() < 1e-9, "{a:?} {b:?}");
    }

    #[test]
    fn gv_match_not_found_outside_crossing() {
        let p = test_profile();
        assert!(matches!(
            gv_matched_pump(&p, &cfg(), (790.0, 800.0)),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn empty_pump_range_rejected() {
        let p = test_profile();
        assert!(solve_contour(&p, &cfg(), (790.0, 750.0), 10).is_err());
        assert!(solve_contour(&p, &cfg(), (750.0, 790.0), 0).is_err());
    }
}
