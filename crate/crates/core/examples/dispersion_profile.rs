//! Fits a dispersion profile to measured D(λ) samples and locates its
//! zero-dispersion wavelengths.
//!
//! ```bash
//! cargo run -p sfwm --example dispersion_profile
//! ```

use std::path::Path;

use sfwm::dispersion::{fit_from_d_samples, read_d_samples};
use sfwm::spectral::{wavelength_to_angular_frequency, SPEED_OF_LIGHT};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let csv = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/fiber_dispersion.csv");
    let samples = read_d_samples(&csv)?;

    let w0 = wavelength_to_angular_frequency(771.0)?;
    for degree in [4, 6] {
        let fit = fit_from_d_samples(
            &samples,
            degree,
            w0,
            1.45 * w0 / SPEED_OF_LIGHT,
            1.47 / SPEED_OF_LIGHT,
            (450.0, 1800.0),
        )?;
        let p = &fit.profile;
        println!(
            "degree {degree}: residual {:.3} ps/(nm km), ZDWs {:?} nm",
            fit.residual_rms,
            p.find_zdws(p.domain_nm())?
        );
    }

    let fit = fit_from_d_samples(&samples, 6, w0, 1.45 * w0 / SPEED_OF_LIGHT, 1.47 / SPEED_OF_LIGHT, (450.0, 1800.0))?;
    println!("\n  λ (nm)   D fit   D sample");
    for s in samples.iter().step_by(4) {
        println!("{:8.1} {:7.2} {:9.2}", s.wavelength, fit.profile.dispersion_parameter(s.wavelength)?, s.d);
    }
    Ok(())
}
