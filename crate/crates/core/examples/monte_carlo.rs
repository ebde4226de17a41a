//! Monte Carlo of signal TMD clicks and idler clicks, compared cell by cell
//! with the analytic joint distribution.
//!
//! ```bash
//! cargo run --release -p sfwm --example monte_carlo [shots] [seed]
//! ```

use sfwm::counting::{joint_click_probabilities, monte_carlo_run, DetectorModel, SourceState, TmdModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let shots: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1_000_000);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);

    let state = SourceState::new(vec![0.7, 0.2, 0.1], 0.6, 30)?;
    let tmd = TmdModel::default();
    let signal = DetectorModel::new(0.3, 1e-4)?;
    let idler = DetectorModel::new(0.2, 1e-4)?;

    let tally = monte_carlo_run(&state, &tmd, &signal, &idler, shots, seed)?;
    let joint = joint_click_probabilities(&state, &tmd, &signal, &idler)?;
    let mass = joint.sum();

    println!("clicks idler   simulated     analytic        z");
    for m in 0..=tmd.n_bins {
        for flag in [false, true] {
            let p = joint[(m, flag as usize)] / mass;
            let f = tally.fraction(m, flag);
            let sigma = (p * (1.0 - p) / shots as f64).sqrt();
            if p > 1e-9 {
                println!("{m:6} {:5} {f:11.6} {p:12.6} {:8.2}", flag as u8, (f - p) / sigma);
            }
        }
    }
    Ok(())
}
