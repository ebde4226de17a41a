//! Traces the phase-matching contour of the fixture fiber and finds the pump
//! wavelength at which pump and idler travel at the same group velocity.
//!
//! ```bash
//! cargo run -p sfwm --example phase_matching
//! ```

use sfwm::fixture::test_profile;
use sfwm::phasematch::{gv_matched_pump, solve_contour, FwmConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let profile = test_profile();
    let config = FwmConfig::default();

    println!("pump (nm)  signal (nm)  idler (nm)");
    for p in solve_contour(&profile, &config, (755.0, 787.0), 9)? {
        println!("{:9.2} {:12.3} {:11.2}", p.pump, p.signal, p.idler);
    }

    let gv = gv_matched_pump(&profile, &config, (750.0, 790.0))?;
    println!(
        "\ngroup velocities match at pump {:.3} nm (signal {:.3} nm, idler {:.2} nm), residual {:.1e} s/m",
        gv.pump, gv.signal, gv.idler, gv.delay_mismatch
    );

    // self-phase modulation drags the contour with pump power
    for power in [0.0, 5.0, 20.0] {
        let hot = FwmConfig { peak_pump_power: power, ..config };
        let pts = solve_contour(&profile, &hot, (771.0, 771.0), 1)?;
        let outer = pts.iter().min_by(|a, b| a.signal.total_cmp(&b.signal)).unwrap();
        println!("P = {power:5.1} W: signal {:.3} nm, idler {:.2} nm", outer.signal, outer.idler);
    }
    Ok(())
}
