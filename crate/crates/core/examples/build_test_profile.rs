//! Regenerates the committed fiber fixture.
//!
//! ```bash
//! cargo run -p sfwm --example build_test_profile
//! ```
//!
//! Writes `fixtures/test_profile.json` and the digitized
//! `fixtures/fiber_dispersion.csv` next to this crate's manifest.

use std::path::Path;

use sfwm::dispersion::write_d_samples;
use sfwm::fixture::TestProfileDesign;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let design = TestProfileDesign::default();
    let profile = design.solve()?;
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    profile.save_json(&dir.join("test_profile.json"))?;

    let samples = TestProfileDesign::digitize(&profile, (480.0, 1750.0), 50.0)?;
    write_d_samples(&dir.join("fiber_dispersion.csv"), &samples)?;

    println!("ZDWs: {:?} nm", profile.find_zdws(profile.domain_nm())?);
    for s in &samples {
        println!("{:7.1} nm  D = {:8.2} ps/(nm km)", s.wavelength, s.d);
    }
    Ok(())
}
