//! Schmidt decomposition of a joint spectrum by singular value decomposition.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::jsa::{Complex64, JointSpectrum};
use crate::spectral::Grid2D;

/// Mode functions kept by [`decompose`].
pub const DEFAULT_MODES_KEPT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// The complex amplitude f as given.
    Amplitude,
    /// √|f|², i.e. a coincidence map with flat phase assumed. For a
    /// measured intensity this bounds the purity from above.
    SqrtOfIntensity,
}

#[derive(Debug, Clone)]
pub struct SchmidtResult {
    /// λ_n, descending, summing to 1.
    pub coefficients: Vec<f64>,
    pub schmidt_number: f64,
    pub purity: f64,
    /// Columns are ξ_n^(1)(ω_s), orthonormal under Δω_s quadrature.
    pub signal_modes: DMatrix<Complex64>,
    /// Columns are ξ_n^(2)(ω_i), orthonormal under Δω_i quadrature.
    pub idler_modes: DMatrix<Complex64>,
    /// (ΣΣ |g|² Δω_s Δω_i)^½ of the decomposed function g.
    pub norm: f64,
    pub grid: Grid2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchmidtReport {
    pub lambda: Vec<f64>,
    #[serde(rename = "K")]
    pub k: f64,
    pub purity: f64,
    pub n_modes_stored: usize,
}

impl SchmidtResult {
    pub fn modes_stored(&self) -> usize {
        self.signal_modes.ncols()
    }

    pub fn report(&self) -> SchmidtReport {
        SchmidtReport {
            lambda: self.coefficients.clone(),
            k: self.schmidt_number,
            purity: self.purity,
            n_modes_stored: self.modes_stored(),
        }
    }

    pub fn write_report(&self, path: &Path) -> Result<()> {
        io::write_json(path, &self.report())
    }

    /// Mode functions as CSV: wavelength column, then re/im per stored mode.
    pub fn write_modes(&self, signal_path: &Path, idler_path: &Path, n_modes: usize) -> Result<()> {
        let n = n_modes.min(self.modes_stored());
        for (path, modes, axis, name) in [
            (signal_path, &self.signal_modes, &self.grid.signal, "signal_nm"),
            (idler_path, &self.idler_modes, &self.grid.idler, "idler_nm"),
        ] {
            let mut header = vec![name.to_string()];
            for k in 0..n {
                header.push(format!("mode{k}_re"));
                header.push(format!("mode{k}_im"));
            }
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows: Vec<Vec<f64>> = axis
                .wavelengths()
                .into_iter()
                .enumerate()
                .map(|(r, l)| {
                    let mut row = vec![l];
                    for k in 0..n {
                        row.push(modes[(r, k)].re);
                        row.push(modes[(r, k)].im);
                    }
                    row
                })
                .collect();
            io::write_numeric_csv(path, &header, &rows)?;
        }
        Ok(())
    }

    /// Σ_{n<n_modes} √λ_n ‖g‖ ξ_n^(1)(ω_s) ξ_n^(2)(ω_i), in the units of the
    /// decomposed function.
    pub fn reconstruct(&self, n_modes: usize) -> Result<DMatrix<Complex64>> {
        if n_modes > self.modes_stored() {
            return Err(Error::Range(format!(
                "{n_modes} modes requested, {} stored",
                self.modes_stored()
            )));
        }
        let (r, c) = self.grid.shape();
        let mut out = DMatrix::zeros(r, c);
        for k in 0..n_modes {
            let s = Complex64::new(self.coefficients[k].sqrt() * self.norm, 0.0);
            let u = self.signal_modes.column(k) * s;
            out += u * self.idler_modes.column(k).transpose();
        }
        Ok(out)
    }
}

pub fn purity(result: &SchmidtResult) -> f64 {
    purity_from_k(result.schmidt_number)
}

pub fn purity_from_k(k: f64) -> f64 {
    1.0 / k
}

/// K = 1 / Σ λ_n² for normalized λ.
pub fn schmidt_number(lambdas: &[f64]) -> f64 {
    1.0 / lambdas.iter().map(|l| l * l).sum::<f64>()
}

pub fn decompose(js: &JointSpectrum, source: Source) -> Result<SchmidtResult> {
    decompose_keeping(js, source, DEFAULT_MODES_KEPT)
}

/// As [`decompose`], storing up to `keep` mode pairs.
pub fn decompose_keeping(js: &JointSpectrum, source: Source, keep: usize) -> Result<SchmidtResult> {
    let (ds, di) = (js.grid.signal.step(), js.grid.idler.step());
    let w = (ds * di).sqrt();
    let g: DMatrix<Complex64> = match source {
        Source::Amplitude => js.amplitude.clone(),
        Source::SqrtOfIntensity => js.amplitude.map(|z| Complex64::new(z.norm(), 0.0)),
    };
    let total: f64 = g.iter().map(|z| z.norm_sqr()).sum::<f64>() * w * w;
    if !(total > 0.0) {
        return Err(Error::Degenerate("joint spectrum is identically zero".into()));
    }
    // rescale before the SVD so tiny amplitudes do not underflow
    let scale = 1.0 / (total.sqrt() / w);
    let (sigma, u, v_t) = if g.iter().all(|z| z.im == 0.0) {
        let m = g.map(|z| z.re * scale);
        let svd = m.svd(true, true);
        (
            svd.singular_values.iter().copied().collect::<Vec<f64>>(),
            svd.u.expect("requested").map(|x| Complex64::new(x, 0.0)),
            svd.v_t.expect("requested").map(|x| Complex64::new(x, 0.0)),
        )
    } else {
        let m = g.map(|z| z * scale);
        let svd = m.svd(true, true);
        (
            svd.singular_values.iter().copied().collect::<Vec<f64>>(),
            svd.u.expect("requested"),
            svd.v_t.expect("requested"),
        )
    };

    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    let power: Vec<f64> = order.iter().map(|&k| sigma[k] * sigma[k]).collect();
    let sum: f64 = power.iter().sum();
    let coefficients: Vec<f64> = power.iter().map(|p| p / sum).collect();
    let schmidt_number = schmidt_number(&coefficients);

    let keep = keep.min(order.len());
    let (rows, cols) = js.grid.shape();
    let signal_modes = DMatrix::from_fn(rows, keep, |r, k| u[(r, order[k])] / ds.sqrt());
    // g = U Σ Vᴴ, so the idler function of mode k is row k of Vᴴ
    let idler_modes = DMatrix::from_fn(cols, keep, |c, k| v_t[(order[k], c)] / di.sqrt());

    Ok(SchmidtResult {
        coefficients,
        schmidt_number,
        purity: 1.0 / schmidt_number,
        signal_modes,
        idler_modes,
        norm: total.sqrt(),
        grid: js.grid.clone(),
    })
}
