//! Builds the joint spectral amplitude, blurs it with the spectrometer
//! resolution and reports marginal widths.
//!
//! ```bash
//! cargo run --release -p sfwm --example joint_spectrum [out_dir]
//! ```

use std::path::PathBuf;

use sfwm::fixture::test_profile;
use sfwm::jsa::{build_jsa, convolve_instrument, fwhm_of_marginal, marginals, peak_wavelength, write_jsi_flat, PumpEnvelope};
use sfwm::phasematch::FwmConfig;
use sfwm::spectral::{fwhm_deconvolve, Grid2D, SpectralAxis};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let grid = Grid2D::new(SpectralAxis::new(507.0, 521.0, 256)?, SpectralAxis::new(1470.0, 1630.0, 256)?);
    let js = build_jsa(&test_profile(), &FwmConfig::default(), &PumpEnvelope::gaussian(771.0, 3.0)?, &grid)?;
    let blurred = convolve_instrument(&js, 0.7, 24.0)?;

    for (label, spectrum) in [("model", &js), ("0.7/24 nm instrument", &blurred)] {
        let (s, i) = marginals(spectrum);
        println!(
            "{label:>22}: signal {:.3} nm FWHM at {:.2} nm, idler {:.2} nm FWHM at {:.1} nm",
            fwhm_of_marginal(&s, &grid.signal)?,
            peak_wavelength(&s, &grid.signal),
            fwhm_of_marginal(&i, &grid.idler)?,
            peak_wavelength(&i, &grid.idler),
        );
    }
    let (_, i) = marginals(&blurred);
    let measured = fwhm_of_marginal(&i, &grid.idler)?;
    println!("idler width with the resolution removed: {:.2} nm", fwhm_deconvolve(measured, 24.0)?);

    let path = out.join("jsi_convolved_flat.csv");
    write_jsi_flat(&path, &blurred)?;
    println!("wrote {}", path.display());
    Ok(())
}
