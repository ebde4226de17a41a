//! Schmidt decomposition of model and measured-style joint spectra, and how
//! the heralded purity depends on pump bandwidth.
//!
//! ```bash
//! cargo run --release -p sfwm --example schmidt_purity
//! ```

use sfwm::fixture::test_profile;
use sfwm::jsa::{build_jsa, convolve_instrument, PumpEnvelope};
use sfwm::phasematch::FwmConfig;
use sfwm::schmidt::{decompose, Source};
use sfwm::spectral::{Grid2D, SpectralAxis};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let profile = test_profile();
    let config = FwmConfig::default();
    let grid = Grid2D::new(SpectralAxis::new(507.0, 521.0, 256)?, SpectralAxis::new(1470.0, 1630.0, 256)?);

    println!("pump FWHM   K      purity   λ₁");
    for fwhm in [1.0, 2.0, 3.0, 5.0, 8.0] {
        let js = build_jsa(&profile, &config, &PumpEnvelope::gaussian(771.0, fwhm)?, &grid)?;
        let r = decompose(&js, Source::Amplitude)?;
        println!("{fwhm:6.1} nm {:6.3} {:8.3} {:7.3}", r.schmidt_number, r.purity, r.coefficients[0]);
    }

    let js = build_jsa(&profile, &config, &PumpEnvelope::gaussian(771.0, 3.0)?, &grid)?;
    let blurred = convolve_instrument(&js, 0.7, 24.0)?;
    let r = decompose(&blurred, Source::SqrtOfIntensity)?;
    println!(
        "\nfrom the instrument-limited intensity: K = {:.3}, purity {:.3}, first λ {:?}",
        r.schmidt_number,
        r.purity,
        &r.coefficients[..3]
    );
    Ok(())
}
