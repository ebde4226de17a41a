//! Joint spectral amplitude of the generated pairs: pump envelope times the
//! phase-matching function on a signal × idler grid, plus marginals, widths
//! and the spectrometer-resolution model.

use std::path::Path;

use nalgebra::{Complex, DMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::DispersionProfile;
use crate::error::{Error, Result};
use crate::io;
use crate::phasematch::FwmConfig;
use crate::spectral::{bandwidth_nm_to_angular, lambda_of, omega_of, Grid2D, SpectralAxis};

pub type Complex64 = Complex<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeShape {
    Gaussian,
}

/// Spectral envelope of the pump pulse; `fwhm_bandwidth` is the intensity FWHM in nm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpEnvelope {
    pub shape: EnvelopeShape,
    pub center: f64,
    pub fwhm_bandwidth: f64,
}

impl PumpEnvelope {
    pub fn gaussian(center: f64, fwhm_bandwidth: f64) -> Result<Self> {
        if !(center > 0.0) || !(fwhm_bandwidth > 0.0) || !fwhm_bandwidth.is_finite() {
            return Err(Error::Domain(format!(
                "pump envelope needs positive center and bandwidth, got {center} nm / {fwhm_bandwidth} nm"
            )));
        }
        Ok(Self {
            shape: EnvelopeShape::Gaussian,
            center,
            fwhm_bandwidth,
        })
    }

    pub fn from_config(config: &FwmConfig) -> Result<Self> {
        Self::gaussian(config.pump_center, config.pump_fwhm_bandwidth)
    }

    pub fn center_frequency(&self) -> f64 {
        omega_of(self.center)
    }

    /// Intensity FWHM of one pump photon's spectrum, rad/s.
    pub fn angular_fwhm(&self) -> f64 {
        bandwidth_nm_to_angular(self.fwhm_bandwidth, self.center)
    }

    /// Two-photon envelope α as a function of ω_s + ω_i.
    ///
    /// α is the autoconvolution of the pump amplitude. A Gaussian amplitude
    /// `exp(-2 ln2 δ²/Δω²)` autoconvolves to `exp(-ln2 Σ²/Δω²)` in the
    /// detuning `Σ = ω_s + ω_i - 2ω_p0`.
    pub fn sum_amplitude(&self, omega_sum: f64) -> f64 {
        match self.shape {
            EnvelopeShape::Gaussian => {
                let dw = self.angular_fwhm();
                let x = omega_sum - 2.0 * self.center_frequency();
                (-std::f64::consts::LN_2 * x * x / (dw * dw)).exp()
            }
        }
    }
}

#[inline]
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// f(ω_s, ω_i) sampled on a grid; rows index the signal axis, columns the idler.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSpectrum {
    pub grid: Grid2D,
    pub amplitude: DMatrix<Complex64>,
    pub normalized: bool,
}

impl JointSpectrum {
    pub fn new(grid: Grid2D, amplitude: DMatrix<Complex64>) -> Result<Self> {
        if amplitude.shape() != grid.shape() {
            return Err(Error::Domain(format!(
                "matrix shape {:?} does not match grid {:?}",
                amplitude.shape(),
                grid.shape()
            )));
        }
        if amplitude.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("amplitude contains non-finite values".into()));
        }
        Ok(Self {
            grid,
            amplitude,
            normalized: false,
        })
    }

    /// Samples `f(ω_s, ω_i)` on the grid. Rows are evaluated in parallel.
    pub fn from_fn<F>(grid: Grid2D, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> Complex64 + Sync,
    {
        let ws = grid.signal.frequencies();
        let wi = grid.idler.frequencies();
        let rows: Vec<Vec<Complex64>> = ws
            .par_iter()
            .map(|&s| wi.iter().map(|&i| f(s, i)).collect())
            .collect();
        let (r, c) = grid.shape();
        let m = DMatrix::from_fn(r, c, |i, j| rows[i][j]);
        Self::new(grid, m)
    }

    /// Real, non-negative intensity matrix given directly; amplitude is √I.
    pub fn from_intensity(grid: Grid2D, intensity: &DMatrix<f64>) -> Result<Self> {
        if let Some(v) = intensity.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("intensity must be finite and ≥ 0, found {v}")));
        }
        Self::new(grid, intensity.map(|v| Complex64::new(v.sqrt(), 0.0)))
    }

    pub fn intensity(&self) -> DMatrix<f64> {
        self.amplitude.map(|z| z.norm_sqr())
    }

    /// ΣΣ |f|² Δω_s Δω_i.
    pub fn norm_sqr(&self) -> f64 {
        self.amplitude.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_area()
    }

    pub fn normalize(mut self) -> Result<Self> {
        let n = self.norm_sqr();
        if !(n > 0.0) {
            return Err(Error::Degenerate("joint spectrum is identically zero".into()));
        }
        let s = 1.0 / n.sqrt();
        self.amplitude.iter_mut().for_each(|z| *z *= s);
        self.normalized = true;
        Ok(self)
    }

    /// Signal↔idler exchange.
    pub fn transposed(&self) -> Self {
        Self {
            grid: Grid2D::new(self.grid.idler.clone(), self.grid.signal.clone()),
            amplitude: self.amplitude.transpose(),
            normalized: self.normalized,
        }
    }
}

fn check_axis(profile: &DispersionProfile, axis: &SpectralAxis, name: &str) -> Result<()> {
    for w in [axis.omega_min(), axis.omega_max()] {
        if !profile.contains(w) {
            return Err(Error::Domain(format!(
                "{name} axis [{}, {}] nm leaves the profile domain {:?} nm",
                axis.start_wavelength(),
                axis.stop_wavelength(),
                profile.domain_nm()
            )));
        }
    }
    Ok(())
}

/// f = α(ω_s + ω_i) · sinc(Δk L / 2), normalized on the grid.
pub fn build_jsa(
    profile: &DispersionProfile,
    config: &FwmConfig,
    envelope: &PumpEnvelope,
    grid: &Grid2D,
) -> Result<JointSpectrum> {
    config.validate()?;
    check_axis(profile, &grid.signal, "signal")?;
    check_axis(profile, &grid.idler, "idler")?;
    let spm = config.spm_term();
    let half_l = 0.5 * config.fiber_length;
    let js = JointSpectrum::from_fn(grid.clone(), |ws, wi| {
        let wp = 0.5 * (ws + wi);
        let dk = 2.0 * profile.k_dispersive(wp) - spm - (profile.k_dispersive(ws) + profile.k_dispersive(wi));
        Complex64::new(envelope.sum_amplitude(ws + wi) * sinc(dk * half_l), 0.0)
    })?;
    js.normalize()
}

/// Marginal densities (per rad/s) on the signal and idler axes.
pub fn marginals(js: &JointSpectrum) -> (Vec<f64>, Vec<f64>) {
    let i = js.intensity();
    let (ds, di) = (js.grid.signal.step(), js.grid.idler.step());
    let signal = i.row_iter().map(|r| r.sum() * di).collect();
    let idler = i.column_iter().map(|c| c.sum() * ds).collect();
    (signal, idler)
}

/// ∫ m dω over an axis, by the same rectangle rule used for normalization.
pub fn marginal_integral(m: &[f64], axis: &SpectralAxis) -> f64 {
    m.iter().sum::<f64>() * axis.step()
}

/// Full width at half maximum of `values` sampled at monotone `coords`, by
/// linear interpolation of the half-maximum crossing on each side of the peak.
pub fn fwhm(values: &[f64], coords: &[f64]) -> Result<f64> {
    if values.len() != coords.len() || values.len() < 3 {
        return Err(Error::Domain("need ≥ 3 samples with matching coordinates".into()));
    }
    let (peak, &max) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    if !(max > 0.0) {
        return Err(Error::Degenerate("profile has no positive peak".into()));
    }
    let last = values.len() - 1;
    if peak == 0 || peak == last {
        return Err(Error::PeakAtEdge { index: peak });
    }
    let half = 0.5 * max;
    let cross = |a: usize, b: usize| {
        let t = (half - values[a]) / (values[b] - values[a]);
        coords[a] + t * (coords[b] - coords[a])
    };
    let left = (0..peak)
        .rev()
        .find(|&k| values[k] <= half)
        .map(|k| cross(k, k + 1))
        .ok_or(Error::PeakAtEdge { index: 0 })?;
    let right = (peak + 1..=last)
        .find(|&k| values[k] <= half)
        .map(|k| cross(k, k - 1))
        .ok_or(Error::PeakAtEdge { index: last })?;
    Ok((right - left).abs())
}

/// FWHM in nm of a marginal sampled on `axis`.
pub fn fwhm_of_marginal(intensity: &[f64], axis: &SpectralAxis) -> Result<f64> {
    if intensity.len() != axis.len() {
        return Err(Error::Domain(format!(
            "marginal has {} samples, axis {}",
            intensity.len(),
            axis.len()
        )));
    }
    fwhm(intensity, &axis.wavelengths())
}

/// Wavelength (nm) of the largest sample.
pub fn peak_wavelength(intensity: &[f64], axis: &SpectralAxis) -> f64 {
    let k = intensity
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    lambda_of(axis.frequency(k))
}

/// Wavelength (nm) of the intensity-weighted mean frequency.
pub fn centroid_wavelength(intensity: &[f64], axis: &SpectralAxis) -> f64 {
    let w = axis.frequencies();
    let total: f64 = intensity.iter().sum();
    let mean = intensity.iter().zip(&w).map(|(i, w)| i * w).sum::<f64>() / total;
    lambda_of(mean)
}

/// Redistribution matrix for a Gaussian response of FWHM `resolution_nm`,
/// columns normalized so that the integral is conserved.
fn instrument_kernel(axis: &SpectralAxis, resolution_nm: f64) -> DMatrix<f64> {
    let lam = axis.wavelengths();
    let widths = axis.wavelength_cell_widths();
    let n = lam.len();
    let sigma = resolution_nm / (8.0 * std::f64::consts::LN_2).sqrt();
    let mut k = DMatrix::from_fn(n, n, |i, j| {
        let x = (lam[i] - lam[j]) / sigma;
        (-0.5 * x * x).exp() * widths[i]
    });
    for mut col in k.column_iter_mut() {
        let s = col.sum();
        col /= s;
    }
    k
}

/// Blurs |f|² by Gaussian spectrometer responses (FWHM in nm) along each axis.
///
/// The result is an intensity-domain spectrum: its amplitude is the real
/// square root of the convolved intensity, with no phase information.
pub fn convolve_instrument(js: &JointSpectrum, signal_resolution: f64, idler_resolution: f64) -> Result<JointSpectrum> {
    for (r, axis, name) in [
        (signal_resolution, &js.grid.signal, "signal"),
        (idler_resolution, &js.grid.idler, "idler"),
    ] {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::Domain(format!("{name} resolution must be ≥ 0, got {r}")));
        }
        let span = axis.stop_wavelength() - axis.start_wavelength();
        if r > span {
            return Err(Error::Domain(format!(
                "{name} resolution {r} nm exceeds the axis span {span} nm"
            )));
        }
    }
    let mut i = js.intensity();
    if signal_resolution > 0.0 {
        i = instrument_kernel(&js.grid.signal, signal_resolution) * i;
    }
    if idler_resolution > 0.0 {
        i *= instrument_kernel(&js.grid.idler, idler_resolution).transpose();
    }
    let mut out = JointSpectrum::from_intensity(js.grid.clone(), &i)?;
    out.normalized = js.normalized;
    Ok(out)
}

/// JSI as a matrix: first row holds the idler wavelengths, first column the
/// signal wavelengths.
pub fn write_jsi_matrix(path: &Path, js: &JointSpectrum) -> Result<()> {
    let idler = js.grid.idler.wavelengths();
    let signal = js.grid.signal.wavelengths();
    let i = js.intensity();
    let mut out = String::from("signal_nm\\idler_nm");
    for l in &idler {
        out.push_str(&format!(",{l}"));
    }
    out.push('\n');
    for (r, s) in signal.iter().enumerate() {
        out.push_str(&s.to_string());
        for c in 0..idler.len() {
            out.push_str(&format!(",{}", i[(r, c)]));
        }
        out.push('\n');
    }
    io::write_atomic(path, out.as_bytes())
}

pub const FLAT_JSI_HEADER: [&str; 3] = ["signal_nm", "idler_nm", "intensity"];

pub fn write_jsi_flat(path: &Path, js: &JointSpectrum) -> Result<()> {
    let idler = js.grid.idler.wavelengths();
    let signal = js.grid.signal.wavelengths();
    let i = js.intensity();
    let mut rows = Vec::with_capacity(signal.len() * idler.len());
    for (r, s) in signal.iter().enumerate() {
        for (c, l) in idler.iter().enumerate() {
            rows.push(vec![*s, *l, i[(r, c)]]);
        }
    }
    io::write_numeric_csv(path, &FLAT_JSI_HEADER, &rows)
}

/// Sorted distinct values, merging those closer than `tol`.
fn distinct(mut v: Vec<f64>, tol: f64) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= tol);
    v
}

/// Rebuilds an axis from the wavelengths it must contain. Samples have to sit
/// on a grid uniform in frequency, to within 1% of a step.
fn axis_from_samples(lams: &[f64], path: &Path, name: &str) -> Result<SpectralAxis> {
    let axis = SpectralAxis::new(lams[0], lams[lams.len() - 1], lams.len())
        .map_err(|e| Error::parse(path, format!("{name} axis: {e}")))?;
    let step = axis.step();
    for (k, &l) in lams.iter().rev().enumerate() {
        if (omega_of(l) - axis.frequency(k)).abs() > 0.01 * step {
            return Err(Error::parse(
                path,
                format!("{name} wavelengths are not uniformly spaced in frequency (at {l} nm)"),
            ));
        }
    }
    Ok(axis)
}

/// Reads a flat (signal_nm, idler_nm, intensity) table covering a full grid.
/// The result is normalized; its amplitude is √intensity.
pub fn read_jsi_flat(path: &Path) -> Result<JointSpectrum> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_jsi_flat(file, path)
}

pub fn parse_jsi_flat<R: std::io::Read>(reader: R, origin: &Path) -> Result<JointSpectrum> {
    let rows = io::parse_numeric_csv(reader, origin, 3)?;
    if rows.is_empty() {
        return Err(Error::parse(origin, "no data rows"));
    }
    let tol = |v: &[f64]| {
        let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
        1e-9 * hi.max(lo.abs())
    };
    let s_all: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let i_all: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let (ts, ti) = (tol(&s_all), tol(&i_all));
    let signal = distinct(s_all, ts);
    let idler = distinct(i_all, ti);
    if signal.len() < 2 || idler.len() < 2 {
        return Err(Error::parse(origin, "need at least 2 distinct wavelengths per axis"));
    }
    if signal.len() * idler.len() != rows.len() {
        return Err(Error::parse(
            origin,
            format!(
                "{} rows do not form a full {}×{} grid",
                rows.len(),
                signal.len(),
                idler.len()
            ),
        ));
    }
    let grid = Grid2D::new(
        axis_from_samples(&signal, origin, "signal")?,
        axis_from_samples(&idler, origin, "idler")?,
    );
    // ascending wavelength ↔ descending index
    let index = |v: &[f64], x: f64, t: f64| -> Option<usize> {
        let k = v.partition_point(|&y| y < x - t);
        (k < v.len() && (v[k] - x).abs() <= t).then(|| v.len() - 1 - k)
    };
    let (r, c) = grid.shape();
    let mut m = DMatrix::from_element(r, c, f64::NAN);
    for row in &rows {
        let a = index(&signal, row[0], ts).expect("value taken from the table");
        let b = index(&idler, row[1], ti).expect("value taken from the table");
        if !m[(a, b)].is_nan() {
            return Err(Error::parse(
                origin,
                format!("duplicate sample at ({}, {}) nm", row[0], row[1]),
            ));
        }
        m[(a, b)] = row[2];
    }
    if m.iter().any(|v| v.is_nan()) {
        return Err(Error::parse(origin, "grid has missing samples"));
    }
    JointSpectrum::from_intensity(grid, &m)
        .map_err(|e| Error::parse(origin, e.to_string()))?
        .normalize()
}
