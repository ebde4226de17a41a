//! Click statistics of a multimode pair source seen through a
//! time-multiplexed detector, and the rate bookkeeping of a coincidence
//! measurement.
//!
//! ```bash
//! cargo run --release -p sfwm --example photon_counting
//! ```

use sfwm::counting::{
    click_count_distribution, click_prob_given_n, conditional_idler_click_prob, fit_gain, rate_report,
    DetectorModel, RateInputs, SourceState, TmdModel,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lambdas = vec![0.84, 0.12, 0.03, 0.01];
    let tmd = TmdModel::default();
    let signal = DetectorModel::new(0.094, 0.0)?;
    let idler = DetectorModel::new(0.055, 0.0)?;

    println!("m   1-(1-η)^m   r0=0.2    r0=0.5    r0=0.8");
    for m in 1..=4 {
        print!("{m}   {:9.5}", click_prob_given_n(&idler, m));
        for r0 in [0.2, 0.5, 0.8] {
            let state = SourceState::new(lambdas.clone(), r0, 30)?;
            print!(" {:9.5}", conditional_idler_click_prob(&state, &tmd, &signal, &idler, m)?);
        }
        println!();
    }

    let template = SourceState::new(lambdas, 0.0, 30)?;
    let r0 = fit_gain(&template, &tmd, &signal, 2, 2200.0 / 1e6)?;
    let dist = click_count_distribution(&template.with_gain(r0)?, &tmd, &signal)?;
    println!("\nr0 = {r0:.4} gives click rates per second:");
    for (m, p) in dist.iter().enumerate().take(5) {
        println!("  {m} clicks: {:10.2}", p * 1e6);
    }

    let report = rate_report(RateInputs {
        signal_rate: 16500.0,
        idler_rate: 6000.0,
        repetition_rate: 1e6,
        raw_coincidence_rate: 1300.0,
        idler_detector_efficiency: 0.25,
    })?;
    println!("\n{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
