//! Spectral units, axis construction and pulse arithmetic.
//!
//! Everything downstream works in angular frequency (rad/s). Wavelengths in
//! nanometres appear only where values enter or leave the library.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// FWHM time-bandwidth product of a transform-limited Gaussian pulse.
pub const GAUSSIAN_TIME_BANDWIDTH: f64 = 0.441;

const NM: f64 = 1e-9;

/// Converts a vacuum wavelength in nm to angular frequency in rad/s.
pub fn wavelength_to_angular_frequency(wavelength_nm: f64) -> Result<f64> {
    if !(wavelength_nm > 0.0) || !wavelength_nm.is_finite() {
        return Err(Error::Domain(format!(
            "wavelength must be positive and finite, got {wavelength_nm} nm"
        )));
    }
    Ok(2.0 * PI * SPEED_OF_LIGHT / (wavelength_nm * NM))
}

/// Converts angular frequency in rad/s back to a vacuum wavelength in nm.
pub fn angular_frequency_to_wavelength(omega: f64) -> Result<f64> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::Domain(format!(
            "angular frequency must be positive and finite, got {omega} rad/s"
        )));
    }
    Ok(2.0 * PI * SPEED_OF_LIGHT / omega / NM)
}

// Infallible versions for values already validated by a constructor.
#[inline]
pub(crate) fn omega_of(wavelength_nm: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / (wavelength_nm * NM)
}

#[inline]
pub(crate) fn lambda_of(omega: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / omega / NM
}

/// Angular-frequency width of a narrow band of `fwhm_nm` centred on `center_nm`.
pub fn bandwidth_nm_to_angular(fwhm_nm: f64, center_nm: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT * fwhm_nm / (center_nm * center_nm * NM)
}

/// Removes a Gaussian instrument response from a measured width:
/// `sqrt(measured^2 - resolution^2)`.
pub fn fwhm_deconvolve(measured_fwhm: f64, resolution_fwhm: f64) -> Result<f64> {
    if !(resolution_fwhm >= 0.0) {
        return Err(Error::Domain(format!(
            "resolution must be non-negative, got {resolution_fwhm}"
        )));
    }
    if !(measured_fwhm > resolution_fwhm) {
        return Err(Error::InfeasibleDeconvolution {
            measured: measured_fwhm,
            resolution: resolution_fwhm,
        });
    }
    Ok(((measured_fwhm - resolution_fwhm) * (measured_fwhm + resolution_fwhm)).sqrt())
}

/// Width of a Gaussian of width `fwhm` after convolution with a Gaussian response.
pub fn fwhm_convolve(fwhm: f64, resolution_fwhm: f64) -> f64 {
    fwhm.hypot(resolution_fwhm)
}

/// FWHM duration (seconds) of a transform-limited Gaussian pulse with the
/// given spectral FWHM (nm) around `center_nm`.
pub fn transform_limited_duration(fwhm_bandwidth_nm: f64, center_nm: f64) -> Result<f64> {
    if !(fwhm_bandwidth_nm > 0.0) || !(center_nm > 0.0) {
        return Err(Error::Domain(format!(
            "bandwidth and center must be positive, got {fwhm_bandwidth_nm} nm at {center_nm} nm"
        )));
    }
    let delta_nu = SPEED_OF_LIGHT * fwhm_bandwidth_nm * NM / (center_nm * NM).powi(2);
    Ok(GAUSSIAN_TIME_BANDWIDTH / delta_nu)
}

/// Peak power of a pulse train from average power, repetition rate and
/// pulse duration, treating the pulse as rectangular of the given FWHM.
pub fn peak_power(average_power_w: f64, repetition_rate_hz: f64, duration_s: f64) -> Result<f64> {
    if !(average_power_w >= 0.0) || !(repetition_rate_hz > 0.0) || !(duration_s > 0.0) {
        return Err(Error::Domain(
            "peak power needs P_avg >= 0, rep rate > 0 and duration > 0".into(),
        ));
    }
    Ok(average_power_w / repetition_rate_hz / duration_s)
}

/// A spectral window sampled uniformly in angular frequency.
///
/// Samples are ordered by ascending frequency, so index 0 corresponds to
/// `stop_wavelength` and the last index to `start_wavelength`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralAxis {
    start_wavelength: f64,
    stop_wavelength: f64,
    points: usize,
}

impl SpectralAxis {
    pub fn new(start_wavelength: f64, stop_wavelength: f64, points: usize) -> Result<Self> {
        if !(start_wavelength > 0.0) || !stop_wavelength.is_finite() {
            return Err(Error::Domain(format!(
                "axis wavelengths must be positive and finite, got [{start_wavelength}, {stop_wavelength}]"
            )));
        }
        if !(start_wavelength < stop_wavelength) {
            return Err(Error::Domain(format!(
                "axis start {start_wavelength} nm must be below stop {stop_wavelength} nm"
            )));
        }
        if points < 2 {
            return Err(Error::Domain(format!("axis needs at least 2 points, got {points}")));
        }
        Ok(Self {
            start_wavelength,
            stop_wavelength,
            points,
        })
    }

    pub fn start_wavelength(&self) -> f64 {
        self.start_wavelength
    }

    pub fn stop_wavelength(&self) -> f64 {
        self.stop_wavelength
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn omega_min(&self) -> f64 {
        omega_of(self.stop_wavelength)
    }

    pub fn omega_max(&self) -> f64 {
        omega_of(self.start_wavelength)
    }

    /// Sample spacing in rad/s.
    pub fn step(&self) -> f64 {
        (self.omega_max() - self.omega_min()) / (self.points - 1) as f64
    }

    pub fn frequency(&self, index: usize) -> f64 {
        let (lo, hi) = (self.omega_min(), self.omega_max());
        if index + 1 == self.points {
            hi
        } else {
            lo + (hi - lo) * index as f64 / (self.points - 1) as f64
        }
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.frequency(i)).collect()
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        (0..self.points).map(|i| lambda_of(self.frequency(i))).collect()
    }

    /// Wavelength width (nm) of each sample cell, `Δω · λ² / (2πc)`.
    pub fn wavelength_cell_widths(&self) -> Vec<f64> {
        let step = self.step();
        self.wavelengths()
            .into_iter()
            .map(|l| step * (l * NM).powi(2) / (2.0 * PI * SPEED_OF_LIGHT) / NM)
            .collect()
    }

    pub fn center_wavelength(&self) -> f64 {
        lambda_of(0.5 * (self.omega_min() + self.omega_max()))
    }
}

/// Signal × idler sampling grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub signal: SpectralAxis,
    pub idler: SpectralAxis,
}

impl Grid2D {
    pub fn new(signal: SpectralAxis, idler: SpectralAxis) -> Self {
        Self { signal, idler }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.signal.len(), self.idler.len())
    }

    /// Δω_s · Δω_i in (rad/s)².
    pub fn cell_area(&self) -> f64 {
        self.signal.step() * self.idler.step()
    }
}
