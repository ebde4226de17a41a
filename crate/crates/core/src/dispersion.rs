//! Propagation constant of the guided mode and the quantities derived from it.
//!
//! `k(ω)` is held as a Taylor expansion about a reference frequency,
//!
//! ```text
//! k(ω) = Σ β_j (ω − ω₀)^j / j!  +  Δn · ω / c
//! ```
//!
//! with β_j in s^j/m. Group delay, GVD and the dispersion parameter are
//! analytic derivatives of that polynomial.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::spectral::{lambda_of, omega_of, SPEED_OF_LIGHT};

/// ps/(nm·km) expressed in s/m².
const PS_PER_NM_KM: f64 = 1e-6;

/// Default number of scan points used to bracket GVD zeros.
pub const ZDW_SCAN_POINTS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct DispersionProfile {
    reference_frequency: f64,
    beta: Vec<f64>,
    index_offset: f64,
    domain_nm: (f64, f64),
}

/// On-disk form of a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFile {
    pub reference_frequency: f64,
    pub beta_coefficients: Vec<f64>,
    #[serde(default)]
    pub index_offset: f64,
    pub domain: [f64; 2],
}

/// One measured point of the dispersion parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DSample {
    pub wavelength: f64,
    /// ps/(nm·km)
    pub d: f64,
}

#[derive(Debug, Clone)]
pub struct DispersionFit {
    pub profile: DispersionProfile,
    /// RMS of the D residuals at the sample points, ps/(nm·km).
    pub residual_rms: f64,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl DispersionProfile {
    /// `beta` holds β₀..β_m; at least β₃ must be present.
    pub fn new(
        reference_frequency: f64,
        beta: Vec<f64>,
        index_offset: f64,
        domain_nm: (f64, f64),
    ) -> Result<Self> {
        if beta.len() < 4 {
            return Err(Error::InvalidProfile(format!(
                "need beta coefficients up to at least third order, got {}",
                beta.len()
            )));
        }
        if beta.iter().any(|b| !b.is_finite()) || !index_offset.is_finite() {
            return Err(Error::InvalidProfile("non-finite coefficient".into()));
        }
        if !(reference_frequency > 0.0) || !reference_frequency.is_finite() {
            return Err(Error::InvalidProfile(format!(
                "reference frequency must be positive, got {reference_frequency}"
            )));
        }
        let (lo, hi) = domain_nm;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::InvalidProfile(format!(
                "invalid evaluation domain [{lo}, {hi}] nm"
            )));
        }
        Ok(Self {
            reference_frequency,
            beta,
            index_offset,
            domain_nm,
        })
    }

    pub fn reference_frequency(&self) -> f64 {
        self.reference_frequency
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn order(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn index_offset(&self) -> f64 {
        self.index_offset
    }

    pub fn domain_nm(&self) -> (f64, f64) {
        self.domain_nm
    }

    /// Evaluation domain in rad/s as `(ω_min, ω_max)`.
    pub fn domain_omega(&self) -> (f64, f64) {
        (omega_of(self.domain_nm.1), omega_of(self.domain_nm.0))
    }

    pub fn with_index_offset(&self, index_offset: f64) -> Self {
        Self {
            index_offset,
            ..self.clone()
        }
    }

    /// Adds `delay · (ω − ω₀)` to k, i.e. a constant to the group delay.
    pub fn with_added_group_delay(&self, delay: f64) -> Self {
        let mut beta = self.beta.clone();
        beta[1] += delay;
        Self {
            beta,
            ..self.clone()
        }
    }

    pub fn contains(&self, omega: f64) -> bool {
        let (lo, hi) = self.domain_omega();
        let slack = 1e-12 * hi;
        omega >= lo - slack && omega <= hi + slack
    }

    pub(crate) fn check(&self, omega: f64) -> Result<()> {
        if self.contains(omega) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "ω = {omega:.6e} rad/s ({:.3} nm) outside profile domain [{}, {}] nm",
                lambda_of(omega),
                self.domain_nm.0,
                self.domain_nm.1
            )))
        }
    }

    /// d^order k / dω^order of the Taylor part, Horner form.
    fn taylor_derivative(&self, omega: f64, order: usize) -> f64 {
        let x = omega - self.reference_frequency;
        let m = self.beta.len() - 1;
        if order > m {
            return 0.0;
        }
        let mut acc = 0.0;
        for j in (order..=m).rev() {
            acc = acc * x + self.beta[j] / factorial(j - order);
        }
        acc
    }

    /// Dispersive part of k: Taylor terms of order ≥ 2. Terms linear in ω
    /// drop out of any energy-conserving combination 2k(ω_p) − k(ω_s) − k(ω_i).
    pub(crate) fn k_dispersive(&self, omega: f64) -> f64 {
        let x = omega - self.reference_frequency;
        let m = self.beta.len() - 1;
        let mut acc = 0.0;
        for j in (2..=m).rev() {
            acc = acc * x + self.beta[j] / factorial(j);
        }
        acc * x * x
    }

    pub(crate) fn beta1_unchecked(&self, omega: f64) -> f64 {
        self.taylor_derivative(omega, 1) + self.index_offset / SPEED_OF_LIGHT
    }

    pub(crate) fn beta2_unchecked(&self, omega: f64) -> f64 {
        self.taylor_derivative(omega, 2)
    }

    /// Propagation constant in rad/m.
    pub fn k(&self, omega: f64) -> Result<f64> {
        self.check(omega)?;
        Ok(self.taylor_derivative(omega, 0) + self.index_offset * omega / SPEED_OF_LIGHT)
    }

    /// Group delay per length dk/dω, s/m.
    pub fn beta1(&self, omega: f64) -> Result<f64> {
        self.check(omega)?;
        Ok(self.beta1_unchecked(omega))
    }

    /// Group-velocity dispersion d²k/dω², s²/m.
    pub fn beta2(&self, omega: f64) -> Result<f64> {
        self.check(omega)?;
        Ok(self.beta2_unchecked(omega))
    }

    pub fn group_velocity(&self, omega: f64) -> Result<f64> {
        let b1 = self.beta1(omega)?;
        if !(b1 > 0.0) {
            return Err(Error::InvalidProfile(format!(
                "dk/dω = {b1:e} s/m is not positive at {:.3} nm",
                lambda_of(omega)
            )));
        }
        Ok(1.0 / b1)
    }

    /// D(λ) = −(2πc/λ²) β₂ in ps/(nm·km).
    pub fn dispersion_parameter(&self, wavelength_nm: f64) -> Result<f64> {
        if !(wavelength_nm > 0.0) {
            return Err(Error::Domain(format!("wavelength {wavelength_nm} nm")));
        }
        let omega = omega_of(wavelength_nm);
        let b2 = self.beta2(omega)?;
        let lambda = wavelength_nm * 1e-9;
        Ok(-(2.0 * PI * SPEED_OF_LIGHT / (lambda * lambda)) * b2 / PS_PER_NM_KM)
    }

    /// Zero-dispersion wavelengths in `range_nm`, ascending.
    pub fn find_zdws(&self, range_nm: (f64, f64)) -> Result<Vec<f64>> {
        self.find_zdws_with(range_nm, ZDW_SCAN_POINTS)
    }

    /// As [`find_zdws`](Self::find_zdws) with an explicit bracketing scan size.
    pub fn find_zdws_with(&self, range_nm: (f64, f64), scan_points: usize) -> Result<Vec<f64>> {
        let (lo_nm, hi_nm) = range_nm;
        if !(lo_nm > 0.0 && lo_nm < hi_nm) {
            return Err(Error::Domain(format!("invalid search range [{lo_nm}, {hi_nm}] nm")));
        }
        let w_lo = omega_of(hi_nm);
        let w_hi = omega_of(lo_nm);
        self.check(w_lo)?;
        self.check(w_hi)?;
        let n = scan_points.max(2);
        let sample = |i: usize| {
            if i + 1 == n {
                w_hi
            } else {
                w_lo + (w_hi - w_lo) * i as f64 / (n - 1) as f64
            }
        };

        let mut roots = Vec::new();
        // last sample with non-zero β₂, and the first zero sample seen after it
        let mut last: Option<(f64, f64)> = None;
        let mut zero_run: Option<f64> = None;
        for i in 0..n {
            let w = sample(i);
            let b = self.beta2_unchecked(w);
            if b == 0.0 {
                zero_run.get_or_insert(w);
                continue;
            }
            if let Some((wp, bp)) = last {
                if bp.signum() != b.signum() {
                    let root = match zero_run {
                        Some(z) => z,
                        None => self.bisect_beta2(wp, w),
                    };
                    roots.push(lambda_of(root));
                }
            }
            last = Some((w, b));
            zero_run = None;
        }
        roots.sort_by(f64::total_cmp);
        Ok(roots)
    }

    fn bisect_beta2(&self, mut a: f64, mut b: f64) -> f64 {
        let mut fa = self.beta2_unchecked(a);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a.min(b) || mid >= a.max(b) {
                break;
            }
            let fm = self.beta2_unchecked(mid);
            if fm == 0.0 {
                return mid;
            }
            if fm.signum() == fa.signum() {
                a = mid;
                fa = fm;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    pub fn to_file(&self) -> ProfileFile {
        ProfileFile {
            reference_frequency: self.reference_frequency,
            beta_coefficients: self.beta.clone(),
            index_offset: self.index_offset,
            domain: [self.domain_nm.0, self.domain_nm.1],
        }
    }

    pub fn from_file(file: ProfileFile) -> Result<Self> {
        Self::new(
            file.reference_frequency,
            file.beta_coefficients,
            file.index_offset,
            (file.domain[0], file.domain[1]),
        )
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ProfileFile = serde_json::from_str(text)
            .map_err(|e| Error::parse("<profile json>", e.to_string()))?;
        Self::from_file(file)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ProfileFile =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        Self::from_file(file)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file()).expect("profile serializes");
        io::write_atomic(path, text.as_bytes())
    }
}

/// Least-squares fit of β₂(ω) to measured D(λ), integrated twice to a profile.
///
/// `degree` is the polynomial degree of β₂ in (ω − ω₀), so the resulting
/// profile carries β₀..β_{degree+2}. β₀ and β₁ are the integration constants.
pub fn fit_from_d_samples(
    samples: &[DSample],
    degree: usize,
    reference_frequency: f64,
    beta0: f64,
    beta1_ref: f64,
    domain_nm: (f64, f64),
) -> Result<DispersionFit> {
    if degree < 3 {
        return Err(Error::Fit(format!("degree must be at least 3, got {degree}")));
    }
    if samples.len() < degree + 1 {
        return Err(Error::Fit(format!(
            "{} samples cannot determine a degree-{degree} fit",
            samples.len()
        )));
    }
    for s in samples {
        if !(s.wavelength > 0.0) || !s.d.is_finite() {
            return Err(Error::Fit(format!("bad sample ({}, {})", s.wavelength, s.d)));
        }
    }
    let offsets: Vec<f64> = samples
        .iter()
        .map(|s| omega_of(s.wavelength) - reference_frequency)
        .collect();
    let beta2: Vec<f64> = samples
        .iter()
        .map(|s| {
            let l = s.wavelength * 1e-9;
            -s.d * PS_PER_NM_KM * l * l / (2.0 * PI * SPEED_OF_LIGHT)
        })
        .collect();

    // scale both axes to O(1) so the Vandermonde system is well conditioned
    let x_scale = offsets.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1.0);
    let y_scale = beta2.iter().fold(0.0_f64, |m, y| m.max(y.abs()));
    let y_scale = if y_scale > 0.0 { y_scale } else { 1.0 };

    let n = samples.len();
    let a = DMatrix::from_fn(n, degree + 1, |i, j| (offsets[i] / x_scale).powi(j as i32));
    let b = DVector::from_iterator(n, beta2.iter().map(|y| y / y_scale));

    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::Fit(format!(
            "rank-deficient system (singular value ratio {:.3e})",
            smin / smax
        )));
    }
    let coeffs = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::Fit(e.to_string()))?;

    let mut beta = vec![beta0, beta1_ref];
    for (j, c) in coeffs.iter().enumerate() {
        beta.push(c * y_scale * factorial(j) / x_scale.powi(j as i32));
    }
    let profile = DispersionProfile::new(reference_frequency, beta, 0.0, domain_nm)?;

    let residual = &a * &coeffs - &b;
    // residuals back to D units, sample by sample
    let mut ss = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let l = s.wavelength * 1e-9;
        let d_res = -(2.0 * PI * SPEED_OF_LIGHT / (l * l)) * residual[i] * y_scale / PS_PER_NM_KM;
        ss += d_res * d_res;
    }
    Ok(DispersionFit {
        profile,
        residual_rms: (ss / n as f64).sqrt(),
    })
}

/// Reads `wavelength_nm, D_ps_per_nm_km` rows (header required, `#` comments allowed).
pub fn read_d_samples(path: &Path) -> Result<Vec<DSample>> {
    let rows = io::read_numeric_csv(path, 2)?;
    Ok(rows
        .into_iter()
        .map(|r| DSample {
            wavelength: r[0],
            d: r[1],
        })
        .collect())
}

pub fn write_d_samples(path: &Path, samples: &[DSample]) -> Result<()> {
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| vec![s.wavelength, s.d]).collect();
    io::write_numeric_csv(path, &["wavelength_nm", "D_ps_per_nm_km"], &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;
    use proptest::prelude::*;

    fn pure_beta1(b1: f64) -> DispersionProfile {
        DispersionProfile::new(omega_of(800.0), vec![5e6, b1, 0.0, 0.0], 0.0, (400.0, 2000.0))
            .unwrap()
    }

    #[test]
    fn k_at_reference_is_beta0() {
        let p = fixture::test_profile();
        let k0 = p.k(p.reference_frequency()).unwrap();
        assert_eq!(k0, p.beta()[0]);
    }

    #[test]
    fn k_matches_naive_power_sum() {
        let p = fixture::test_profile();
        let w = omega_of(771.0) * 1.0003;
        let x = w - p.reference_frequency();
        let naive: f64 = p
            .beta()
            .iter()
            .enumerate()
            .map(|(j, b)| b * x.powi(j as i32) / factorial(j))
            .sum();
        let k = p.k(w).unwrap();
        assert!((k - naive).abs() / naive.abs() < 1e-13);
    }

    #[test]
    fn index_offset_is_linear() {
        let p = fixture::test_profile();
        let q = p.with_index_offset(1e-4);
        for lam in [514.0, 771.0, 1542.0] {
            let w = omega_of(lam);
            let dk = q.k(w).unwrap() - p.k(w).unwrap();
            let expected = 1e-4 * w / SPEED_OF_LIGHT;
            assert!((dk - expected).abs() / expected < 1e-8, "{dk} vs {expected}");
            assert_eq!(q.beta2(w).unwrap(), p.beta2(w).unwrap());
            assert_eq!(
                q.dispersion_parameter(lam).unwrap(),
                p.dispersion_parameter(lam).unwrap()
            );
        }
    }

    #[test]
    fn out_of_domain_is_error() {
        let p = fixture::test_profile();
        let (lo, hi) = p.domain_nm();
        assert!(matches!(p.k(omega_of(lo - 5.0)), Err(Error::Domain(_))));
        assert!(matches!(p.k(omega_of(hi + 5.0)), Err(Error::Domain(_))));
        assert!(p.dispersion_parameter(hi + 1.0).is_err());
        assert!(p.find_zdws((lo - 10.0, hi)).is_err());
    }

    #[test]
    fn too_few_coefficients() {
        assert!(DispersionProfile::new(1e15, vec![1.0, 1.0, 1.0], 0.0, (500.0, 900.0)).is_err());
    }

    #[test]
    fn pure_beta1_group_velocity() {
        let p = pure_beta1(4.9e-9);
        for lam in [450.0, 800.0, 1900.0] {
            let vg = p.group_velocity(omega_of(lam)).unwrap();
            assert!((vg - 1.0 / 4.9e-9).abs() * 4.9e-9 < 1e-14);
        }
        let bad = pure_beta1(-1e-9);
        assert!(matches!(bad.group_velocity(omega_of(800.0)), Err(Error::InvalidProfile(_))));
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let p = fixture::test_profile();
        for lam in [520.0, 700.0, 771.0, 1000.0, 1400.0, 1542.0] {
            let w = omega_of(lam);
            let h = w * 1e-4;
            let fd1 = (p.k(w + h).unwrap() - p.k(w - h).unwrap()) / (2.0 * h);
            let b1 = p.beta1(w).unwrap();
            assert!((fd1 - b1).abs() / b1 < 1e-6, "β1 at {lam}: {fd1} vs {b1}");

            // second derivative from the group delay to avoid cancellation in k
            let fd2 = (p.beta1(w + h).unwrap() - p.beta1(w - h).unwrap()) / (2.0 * h);
            let b2 = p.beta2(w).unwrap();
            let d_fd = -(2.0 * PI * SPEED_OF_LIGHT / (lam * 1e-9).powi(2)) * fd2 / PS_PER_NM_KM;
            let d = p.dispersion_parameter(lam).unwrap();
            let scale = d.abs().max(1e-3);
            assert!((d_fd - d).abs() / scale < 1e-5, "D at {lam}: {d_fd} vs {d} (β2 {b2})");
        }
    }

    #[test]
    fn fixture_zdws_and_sign_pattern() {
        let p = fixture::test_profile();
        let z = p.find_zdws(p.domain_nm()).unwrap();
        assert_eq!(z.len(), 2, "{z:?}");
        assert!((z[0] - 747.0).abs() < 1.0);
        assert!((z[1] - 1260.0).abs() < 1.0);
        for lam in [760.0, 771.0, 1000.0, 1250.0] {
            assert!(p.dispersion_parameter(lam).unwrap() > 0.0, "{lam}");
        }
        for lam in [514.0, 600.0, 740.0, 1270.0, 1542.0] {
            assert!(p.dispersion_parameter(lam).unwrap() < 0.0, "{lam}");
        }
        for r in z {
            assert!(p.dispersion_parameter(r).unwrap().abs() < 1e-6);
        }
    }

    #[test]
    fn constant_gvd_has_no_zdw() {
        let p = DispersionProfile::new(omega_of(800.0), vec![5e6, 4.9e-9, 3e-26, 0.0], 0.0, (400.0, 2000.0))
            .unwrap();
        assert!(p.find_zdws((400.0, 2000.0)).unwrap().is_empty());
    }

    #[test]
    fn zdw_count_matches_scan_sign_changes() {
        let p = fixture::test_profile();
        let (lo, hi) = p.domain_nm();
        let n = ZDW_SCAN_POINTS;
        let (wl, wh) = (omega_of(hi), omega_of(lo));
        let signs: Vec<f64> = (0..n)
            .map(|i| p.beta2_unchecked(wl + (wh - wl) * i as f64 / (n - 1) as f64).signum())
            .collect();
        let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(changes, p.find_zdws((lo, hi)).unwrap().len());
    }

    #[test]
    fn zdws_stable_under_scan_refinement() {
        let p = fixture::test_profile();
        let a = p.find_zdws_with(p.domain_nm(), 2000).unwrap();
        let b = p.find_zdws_with(p.domain_nm(), 4000).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() / x < 1e-9, "{x} vs {y}");
        }
    }

    /// Real roots of c3 x³ + c2 x² + c1 x + c0 via the trigonometric
    /// form of Cardano's method (three-real-root case).
    fn cubic_roots(c3: f64, c2: f64, c1: f64, c0: f64) -> Vec<f64> {
        let (a, b, c) = (c2 / c3, c1 / c3, c0 / c3);
        let p = b - a * a / 3.0;
        let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
        let disc = q * q / 4.0 + p * p * p / 27.0;
        assert!(disc < 0.0, "expected three distinct real roots");
        let r = (-p / 3.0).sqrt();
        let phi = (-q / (2.0 * r * r * r)).clamp(-1.0, 1.0).acos();
        let mut out: Vec<f64> = (0..3)
            .map(|k| 2.0 * r * ((phi - 2.0 * PI * k as f64) / 3.0).cos() - a / 3.0)
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn cubic_gvd_roots_match_closed_form(
            u1 in 0.05f64..0.3, g1 in 0.1f64..0.3, g2 in 0.1f64..0.3, scale in 0.2f64..5.0, flip in any::<bool>()
        ) {
            // roots in units of 1e15 rad/s offsets from ω₀ = ω(900 nm)
            let w0 = omega_of(900.0);
            let s = 1e15;
            let r = [-u1 - g1, -u1, -u1 + g2];
            let amp = if flip { -scale } else { scale } * 1e-27;
            // β₂(x) = amp (x-r0)(x-r1)(x-r2)/s³ expanded in x (rad/s)
            let e1 = r[0] + r[1] + r[2];
            let e2 = r[0] * r[1] + r[0] * r[2] + r[1] * r[2];
            let e3 = r[0] * r[1] * r[2];
            let c3 = amp / (s * s * s);
            let c2 = -amp * e1 / (s * s);
            let c1 = amp * e2 / s;
            let c0 = -amp * e3;
            // β_{j+2} = c_j · j!
            let beta = vec![0.0, 4.9e-9, c0, c1, 2.0 * c2, 6.0 * c3];
            let p = DispersionProfile::new(w0, beta, 0.0, (300.0, 3000.0)).unwrap();
            let found = p.find_zdws((300.0, 3000.0)).unwrap();
            let mut expected: Vec<f64> = cubic_roots(c3 * s * s * s, c2 * s * s, c1 * s, c0)
                .into_iter()
                .map(|u| lambda_of(w0 + u * s))
                .filter(|l| *l > 300.0 && *l < 3000.0)
                .collect();
            expected.sort_by(f64::total_cmp);
            prop_assert_eq!(found.len(), expected.len());
            for (f, e) in found.iter().zip(&expected) {
                prop_assert!((f - e).abs() / e < 1e-9, "{} vs {}", f, e);
            }
        }
    }

    #[test]
    fn fit_recovers_known_profile() {
        let p = fixture::test_profile();
        let samples: Vec<DSample> = (0..40)
            .map(|i| 480.0 + 30.0 * i as f64)
            .map(|l| DSample {
                wavelength: l,
                d: p.dispersion_parameter(l).unwrap(),
            })
            .collect();
        let degree = p.order() - 2;
        let fit = fit_from_d_samples(
            &samples,
            degree,
            p.reference_frequency(),
            p.beta()[0],
            p.beta()[1],
            p.domain_nm(),
        )
        .unwrap();
        let scale = samples
            .iter()
            .map(|s| p.beta2(omega_of(s.wavelength)).unwrap().abs())
            .fold(0.0, f64::max);
        for s in &samples {
            let w = omega_of(s.wavelength);
            let a = p.beta2(w).unwrap();
            let b = fit.profile.beta2(w).unwrap();
            assert!((a - b).abs() / scale < 1e-8, "at {}: {a} vs {b}", s.wavelength);
        }
        assert!(fit.residual_rms < 1e-6);
    }

    #[test]
    fn fitted_root_lies_between_bracketing_samples() {
        // D linear in λ through 1000 nm, sampled symmetrically
        let samples: Vec<DSample> = [940.0, 960.0, 980.0, 1020.0, 1040.0, 1060.0]
            .iter()
            .map(|&l| DSample {
                wavelength: l,
                d: 0.5 * (l - 1000.0),
            })
            .collect();
        let fit =
            fit_from_d_samples(&samples, 3, omega_of(1000.0), 0.0, 4.9e-9, (900.0, 1100.0)).unwrap();
        let z = fit.profile.find_zdws((930.0, 1070.0)).unwrap();
        assert_eq!(z.len(), 1);
        assert!(z[0] > 980.0 && z[0] < 1020.0, "{z:?}");
    }

    #[test]
    fn fit_rejects_rank_deficient_input() {
        let samples = vec![
            DSample { wavelength: 800.0, d: 1.0 };
            6
        ];
        assert!(matches!(
            fit_from_d_samples(&samples, 3, omega_of(800.0), 0.0, 4.9e-9, (500.0, 1000.0)),
            Err(Error::Fit(_))
        ));
        let few = vec![DSample { wavelength: 800.0, d: 1.0 }, DSample { wavelength: 900.0, d: 2.0 }];
        assert!(fit_from_d_samples(&few, 3, omega_of(800.0), 0.0, 4.9e-9, (500.0, 1000.0)).is_err());
    }

    #[test]
    fn digitized_samples_recover_zdws() {
        let samples = fixture::digitized_d_samples();
        let ref_p = fixture::test_profile();
        let fit = fit_from_d_samples(
            &samples,
            6,
            ref_p.reference_frequency(),
            ref_p.beta()[0],
            ref_p.beta()[1],
            ref_p.domain_nm(),
        )
        .unwrap();
        let z = fit.profile.find_zdws((480.0, 1750.0)).unwrap();
        assert_eq!(z.len(), 2, "{z:?}");
        assert!((z[0] - 747.0).abs() < 5.0 && (z[1] - 1260.0).abs() < 5.0, "{z:?}");
    }
}
