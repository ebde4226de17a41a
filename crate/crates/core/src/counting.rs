//! Photon-number statistics of the pair source and the detection chains:
//! binary click detectors, time-multiplexed detectors (TMD), conditional
//! click probabilities, a Monte Carlo cross-check and rate bookkeeping.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_N_MAX: usize = 30;
/// Largest admissible truncation deficit 1 − Σ_{n≤n_max} P_n.
pub const TRUNCATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceState {
    pub schmidt_lambdas: Vec<f64>,
    /// Overall squeezing r₀; mode n is squeezed by r₀√λ_n.
    pub gain: f64,
    pub n_max: usize,
}

impl SourceState {
    pub fn new(schmidt_lambdas: Vec<f64>, gain: f64, n_max: usize) -> Result<Self> {
        if schmidt_lambdas.is_empty() || schmidt_lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::Domain("Schmidt coefficients must be non-negative".into()));
        }
        let sum: f64 = schmidt_lambdas.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("Schmidt coefficients sum to {sum}, not 1")));
        }
        if !(gain >= 0.0) || !gain.is_finite() {
            return Err(Error::Domain(format!("gain r₀ must be ≥ 0, got {gain}")));
        }
        Ok(Self {
            schmidt_lambdas,
            gain,
            n_max,
        })
    }

    pub fn single_mode(gain: f64) -> Result<Self> {
        Self::new(vec![1.0], gain, DEFAULT_N_MAX)
    }

    pub fn with_gain(&self, gain: f64) -> Result<Self> {
        Self::new(self.schmidt_lambdas.clone(), gain, self.n_max)
    }

    pub fn mode_squeezing(&self) -> Vec<f64> {
        self.schmidt_lambdas.iter().map(|l| self.gain * l.sqrt()).collect()
    }

    /// n̄ = Σ sinh² r_n.
    pub fn mean_pairs(&self) -> f64 {
        self.mode_squeezing().iter().map(|r| r.sinh().powi(2)).sum()
    }
}

/// P_n of the total pair number, truncated at n_max and not renormalized.
pub fn pair_number_distribution(state: &SourceState) -> Result<Vec<f64>> {
    let len = state.n_max + 1;
    let mut p = vec![0.0; len];
    p[0] = 1.0;
    for r in state.mode_squeezing() {
        let t = r.tanh().powi(2);
        if t == 0.0 {
            continue;
        }
        let mut geo = Vec::with_capacity(len);
        let mut term = 1.0 - t;
        for _ in 0..len {
            geo.push(term);
            term *= t;
        }
        let mut next = vec![0.0; len];
        for (a, pa) in p.iter().enumerate() {
            if *pa == 0.0 {
                continue;
            }
            for (b, gb) in geo.iter().enumerate().take(len - a) {
                next[a + b] += pa * gb;
            }
        }
        p = next;
    }
    let retained: f64 = p.iter().sum();
    if retained < 1.0 - TRUNCATION_TOLERANCE {
        return Err(Error::Truncation {
            retained,
            n_max: state.n_max,
        });
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub efficiency: f64,
    /// Probability of a dark click per gate (per bin for a TMD).
    pub dark_click_prob: f64,
}

fn check_prob(v: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must lie in [0, 1], got {v}")))
    }
}

impl DetectorModel {
    pub fn new(efficiency: f64, dark_click_prob: f64) -> Result<Self> {
        check_prob(efficiency, "detector efficiency")?;
        check_prob(dark_click_prob, "dark-click probability")?;
        Ok(Self {
            efficiency,
            dark_click_prob,
        })
    }
}

/// 1 − (1 − d)(1 − η)ⁿ.
pub fn click_prob_given_n(detector: &DetectorModel, n: usize) -> f64 {
    let miss = (1.0 - detector.efficiency).powi(n as i32);
    1.0 - (1.0 - detector.dark_click_prob) * miss
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TmdModel {
    pub n_bins: usize,
    pub bin_probabilities: Vec<f64>,
    pub bin_efficiency: f64,
}

/// Bins are tracked as bits of a u64 in the Monte Carlo.
pub const MAX_BINS: usize = 64;

impl TmdModel {
    pub fn uniform(n_bins: usize) -> Result<Self> {
        if n_bins == 0 {
            return Err(Error::Domain("a TMD needs at least one bin".into()));
        }
        Self::new(vec![1.0 / n_bins as f64; n_bins], 1.0)
    }

    pub fn new(bin_probabilities: Vec<f64>, bin_efficiency: f64) -> Result<Self> {
        let n = bin_probabilities.len();
        if n == 0 || n > MAX_BINS {
            return Err(Error::Domain(format!("TMD bin count must be 1..={MAX_BINS}, got {n}")));
        }
        for p in &bin_probabilities {
            check_prob(*p, "bin probability")?;
        }
        let sum: f64 = bin_probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("bin probabilities sum to {sum}, not 1")));
        }
        check_prob(bin_efficiency, "bin efficiency")?;
        Ok(Self {
            n_bins: n,
            bin_probabilities,
            bin_efficiency,
        })
    }
}

impl Default for TmdModel {
    fn default() -> Self {
        Self::uniform(8).expect("8 bins are valid")
    }
}

fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    if p <= 0.0 {
        out[0] = 1.0;
        return out;
    }
    if p >= 1.0 {
        out[n] = 1.0;
        return out;
    }
    let ln_q = (1.0 - p).ln();
    let ln_ratio = p.ln() - ln_q;
    let mut ln_c = 0.0;
    for (k, slot) in out.iter_mut().enumerate() {
        if k > 0 {
            ln_c += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        *slot = (ln_c + k as f64 * ln_ratio + n as f64 * ln_q).exp();
    }
    out
}

/// Distribution of the number of clicking bins (0..=n_bins) when `n` photons
/// reach the TMD. Each photon survives with probability η·bin_efficiency and
/// lands in bin b with probability p_b; every bin also fires on its own with
/// the dark-click probability.
pub fn tmd_click_distribution(tmd: &TmdModel, detector: &DetectorModel, n: usize) -> Vec<f64> {
    let bins = tmd.n_bins;
    let d = detector.dark_click_prob;
    let survive = binomial_pmf(n, detector.efficiency * tmd.bin_efficiency);

    // state[k][c]: k photons still to place, c clicks so far
    let mut state = vec![vec![0.0; bins + 1]; n + 1];
    state[..=n].iter_mut().zip(&survive).for_each(|(row, p)| row[0] = *p);
    let mut tail: f64 = tmd.bin_probabilities.iter().sum();
    for &pb in &tmd.bin_probabilities {
        let q = if tail > 0.0 { (pb / tail).min(1.0) } else { 0.0 };
        let mut next = vec![vec![0.0; bins + 1]; n + 1];
        for k in 0..=n {
            if state[k].iter().all(|v| *v == 0.0) {
                continue;
            }
            let split = binomial_pmf(k, q);
            for (j, pj) in split.iter().enumerate() {
                if *pj == 0.0 {
                    continue;
                }
                let fire = if j > 0 { 1.0 } else { d };
                for c in 0..bins {
                    let w = state[k][c] * pj;
                    if w == 0.0 {
                        continue;
                    }
                    next[k - j][c + 1] += w * fire;
                    next[k - j][c] += w * (1.0 - fire);
                }
            }
        }
        state = next;
        tail -= pb;
    }
    state.into_iter().fold(vec![0.0; bins + 1], |mut acc, row| {
        acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
        acc
    })
}

/// P(m signal clicks) over the whole pair distribution.
pub fn click_count_distribution(state: &SourceState, tmd: &TmdModel, detector: &DetectorModel) -> Result<Vec<f64>> {
    let pn = pair_number_distribution(state)?;
    let mut out = vec![0.0; tmd.n_bins + 1];
    for (n, p) in pn.iter().enumerate() {
        for (m, t) in tmd_click_distribution(tmd, detector, n).iter().enumerate() {
            out[m] += p * t;
        }
    }
    Ok(out)
}

/// Joint probabilities P(m signal clicks, idler flag), (n_bins+1) × 2.
pub fn joint_click_probabilities(
    state: &SourceState,
    signal_tmd: &TmdModel,
    signal_detector: &DetectorModel,
    idler_detector: &DetectorModel,
) -> Result<DMatrix<f64>> {
    let pn = pair_number_distribution(state)?;
    let mut out = DMatrix::zeros(signal_tmd.n_bins + 1, 2);
    for (n, p) in pn.iter().enumerate() {
        let ci = click_prob_given_n(idler_detector, n);
        for (m, t) in tmd_click_distribution(signal_tmd, signal_detector, n).iter().enumerate() {
            out[(m, 1)] += p * t * ci;
            out[(m, 0)] += p * t * (1.0 - ci);
        }
    }
    Ok(out)
}

/// P(idler click | m signal clicks), exact on the truncated distribution.
pub fn conditional_idler_click_prob(
    state: &SourceState,
    signal_tmd: &TmdModel,
    signal_detector: &DetectorModel,
    idler_detector: &DetectorModel,
    m: usize,
) -> Result<f64> {
    if m > signal_tmd.n_bins {
        return Err(Error::Range(format!(
            "{m} clicks requested from a {}-bin detector",
            signal_tmd.n_bins
        )));
    }
    let pn = pair_number_distribution(state)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (n, p) in pn.iter().enumerate() {
        let t = tmd_click_distribution(signal_tmd, signal_detector, n)[m];
        num += p * t * click_prob_given_n(idler_detector, n);
        den += p * t;
    }
    if !(den > 0.0) {
        return Err(Error::ZeroProbabilityCondition { clicks: m });
    }
    Ok(num / den)
}

/// Joint counts of signal clicks (rows) × idler click flag (columns).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub shots: u64,
    pub seed: u64,
    pub counts: Vec<[u64; 2]>,
}

impl Tally {
    pub fn fraction(&self, m: usize, idler: bool) -> f64 {
        self.counts[m][idler as usize] as f64 / self.shots as f64
    }
}

fn sample_index(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Simulates `shots` pulses. Shot `k` draws from a ChaCha8 stream keyed by
/// (seed, k), so tallies do not depend on how shots are split across threads.
/// Pair numbers are drawn from P_n renormalized over 0..=n_max.
pub fn monte_carlo_run(
    state: &SourceState,
    signal_tmd: &TmdModel,
    signal_detector: &DetectorModel,
    idler_detector: &DetectorModel,
    shots: u64,
    seed: u64,
) -> Result<Tally> {
    if shots == 0 {
        return Err(Error::Domain("need at least one shot".into()));
    }
    let pn = pair_number_distribution(state)?;
    let total: f64 = pn.iter().sum();
    let mut acc = 0.0;
    let pair_cdf: Vec<f64> = pn
        .iter()
        .map(|p| {
            acc += p / total;
            acc
        })
        .collect();
    let mut acc = 0.0;
    let bin_cdf: Vec<f64> = signal_tmd
        .bin_probabilities
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    let s_survive = signal_detector.efficiency * signal_tmd.bin_efficiency;
    let (s_dark, i_eff, i_dark) = (
        signal_detector.dark_click_prob,
        idler_detector.efficiency,
        idler_detector.dark_click_prob,
    );
    let bins = signal_tmd.n_bins;
    let base = ChaCha8Rng::seed_from_u64(seed);

    let counts = (0..shots)
        .into_par_iter()
        .fold(
            || vec![[0u64; 2]; bins + 1],
            |mut counts, shot| {
                let mut rng = base.clone();
                rng.set_stream(shot);
                let n = sample_index(&pair_cdf, rng.random::<f64>());
                let mut occupied = 0u64;
                for _ in 0..n {
                    if rng.random::<f64>() < s_survive {
                        occupied |= 1 << sample_index(&bin_cdf, rng.random::<f64>());
                    }
                }
                if s_dark > 0.0 {
                    for b in 0..bins {
                        if rng.random::<f64>() < s_dark {
                            occupied |= 1 << b;
                        }
                    }
                }
                let mut idler = false;
                for _ in 0..n {
                    idler |= rng.random::<f64>() < i_eff;
                }
                if i_dark > 0.0 {
                    idler |= rng.random::<f64>() < i_dark;
                }
                counts[occupied.count_ones() as usize][idler as usize] += 1;
                counts
            },
        )
        .reduce(
            || vec![[0u64; 2]; bins + 1],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    x[0] += y[0];
                    x[1] += y[1];
                }
                a
            },
        );
    Ok(Tally { shots, seed, counts })
}

/// Accidental coincidences R_s R_i / f_rep.
pub fn accidental_rate(signal_rate: f64, idler_rate: f64, repetition_rate: f64) -> Result<f64> {
    if !(signal_rate >= 0.0) || !(idler_rate >= 0.0) || !(repetition_rate > 0.0) {
        return Err(Error::Domain("rates must be ≥ 0 and the repetition rate > 0".into()));
    }
    Ok(signal_rate * idler_rate / repetition_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeraldingEfficiency {
    pub value: f64,
    /// Set when the rates imply an efficiency above 1.
    pub inconsistent: bool,
}

/// η_h = R_c / (R_s η_det).
pub fn heralding_efficiency(coincidence_rate: f64, herald_rate: f64, detector_efficiency: f64) -> Result<HeraldingEfficiency> {
    if !(coincidence_rate >= 0.0) || !(herald_rate > 0.0) {
        return Err(Error::Domain("need R_c ≥ 0 and R_s > 0".into()));
    }
    if !(detector_efficiency > 0.0 && detector_efficiency <= 1.0) {
        return Err(Error::Domain(format!(
            "detector efficiency must lie in (0, 1], got {detector_efficiency}"
        )));
    }
    let value = coincidence_rate / (herald_rate * detector_efficiency);
    Ok(HeraldingEfficiency {
        value,
        inconsistent: value > 1.0,
    })
}

/// Overall detection efficiency of one arm: R_c / R_other.
pub fn detection_efficiency(coincidence_rate: f64, other_arm_rate: f64) -> Result<f64> {
    if !(coincidence_rate >= 0.0) || !(other_arm_rate > 0.0) {
        return Err(Error::Domain("need R_c ≥ 0 and R_other > 0".into()));
    }
    Ok(coincidence_rate / other_arm_rate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateInputs {
    pub signal_rate: f64,
    pub idler_rate: f64,
    pub repetition_rate: f64,
    pub raw_coincidence_rate: f64,
    /// Efficiency of the idler-arm detector alone, used for η_h.
    pub idler_detector_efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub inputs: RateInputs,
    pub accidentals: f64,
    pub corrected_coincidences: f64,
    /// R_c / R_i.
    pub signal_detection_efficiency: f64,
    /// R_c / R_s.
    pub idler_detection_efficiency: f64,
    pub heralding_efficiency: HeraldingEfficiency,
}

pub fn rate_report(inputs: RateInputs) -> Result<RateReport> {
    let accidentals = accidental_rate(inputs.signal_rate, inputs.idler_rate, inputs.repetition_rate)?;
    let corrected = (inputs.raw_coincidence_rate - accidentals).max(0.0);
    Ok(RateReport {
        accidentals,
        corrected_coincidences: corrected,
        signal_detection_efficiency: detection_efficiency(corrected, inputs.idler_rate)?,
        idler_detection_efficiency: detection_efficiency(corrected, inputs.signal_rate)?,
        heralding_efficiency: heralding_efficiency(corrected, inputs.signal_rate, inputs.idler_detector_efficiency)?,
        inputs,
    })
}

/// r₀ at which P(m signal clicks) per pulse equals `target`, by bisection on
/// the low-gain branch where that probability grows with r₀.
pub fn fit_gain(
    template: &SourceState,
    tmd: &TmdModel,
    detector: &DetectorModel,
    m: usize,
    target: f64,
) -> Result<f64> {
    if m > tmd.n_bins || !(target > 0.0 && target < 1.0) {
        return Err(Error::Domain(format!("cannot fit P({m} clicks) = {target}")));
    }
    let prob = |r: f64| -> Result<f64> { Ok(click_count_distribution(&template.with_gain(r)?, tmd, detector)?[m]) };
    let mut lo = 0.0;
    let mut hi = 0.05;
    let mut last = prob(lo)?;
    loop {
        let v = prob(hi)?;
        if v >= target {
            break;
        }
        if v < last || hi > 5.0 {
            return Err(Error::Fit(format!(
                "P({m} clicks) never reaches {target} (max ≈ {last:.3e})"
            )));
        }
        last = v;
        lo = hi;
        hi *= 1.5;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if prob(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn det(eta: f64) -> DetectorModel {
        DetectorModel::new(eta, 0.0).unwrap()
    }

    #[test]
    fn single_mode_is_thermal() {
        let r0: f64 = 0.4;
        let p = pair_number_distribution(&SourceState::single_mode(r0).unwrap()).unwrap();
        let t = r0.tanh().powi(2);
        for (n, v) in p.iter().enumerate() {
            assert!((v - (1.0 - t) * t.powi(n as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn vacuum_at_zero_gain() {
        let p = pair_number_distribution(&SourceState::single_mode(0.0).unwrap()).unwrap();
        assert_eq!(p[0], 1.0);
        assert!(p[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn two_modes_match_direct_convolution() {
        // n̄ = 2 sinh²(r₀/√2) = 0.1
        let r = (0.05f64).sqrt().asinh();
        let r0 = r * 2f64.sqrt();
        let state = SourceState::new(vec![0.5, 0.5], r0, 20).unwrap();
        let p = pair_number_distribution(&state).unwrap();
        let t = r.tanh().powi(2);
        let g = |k: usize| (1.0 - t) * t.powi(k as i32);
        for n in 0..=20 {
            let direct: f64 = (0..=n).map(|k| g(k) * g(n - k)).sum();
            assert!((p[n] - direct).abs() < 1e-15, "{n}");
        }
        assert!((state.mean_pairs() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn truncation_error_reported() {
        let state = SourceState::new(vec![1.0], 2.0, 10).unwrap();
        assert!(matches!(pair_number_distribution(&state), Err(Error::Truncation { .. })));
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(SourceState::new(vec![0.5, 0.4], 0.1, 30).is_err());
        assert!(SourceState::new(vec![1.0], -0.1, 30).is_err());
        assert!(DetectorModel::new(1.2, 0.0).is_err());
        assert!(TmdModel::new(vec![0.5, 0.4], 1.0).is_err());
        assert!(TmdModel::uniform(0).is_err());
    }

    #[test]
    fn click_formula_values() {
        let d = det(0.055);
        assert_eq!(click_prob_given_n(&d, 0), 0.0);
        assert!((click_prob_given_n(&d, 1) - 0.055).abs() < 1e-15);
        assert!((click_prob_given_n(&d, 2) - 0.106975).abs() < 1e-15);
        assert!((click_prob_given_n(&d, 3) - 0.156091375).abs() < 1e-15);
        let dark = DetectorModel::new(0.055, 0.01).unwrap();
        assert!((click_prob_given_n(&dark, 0) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn tmd_single_photon() {
        let tmd = TmdModel::new(vec![0.125; 8], 0.8).unwrap();
        let p = tmd_click_distribution(&tmd, &det(0.5), 1);
        assert!((p[1] - 0.4).abs() < 1e-15);
        assert!((p[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn tmd_two_photon_collision() {
        let p = tmd_click_distribution(&TmdModel::uniform(8).unwrap(), &det(1.0), 2);
        assert!((p[2] - 7.0 / 8.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 8.0).abs() < 1e-15);
    }

    /// Enumerates every survival pattern and bin assignment.
    fn brute_force(n: usize, probs: &[f64], s: f64, d: f64) -> Vec<f64> {
        let bins = probs.len();
        let mut out = vec![0.0; bins + 1];
        let outcomes = bins + 1; // bin index or lost
        let total = outcomes.pow(n as u32);
        for code in 0..total {
            let mut c = code;
            let mut w = 1.0;
            let mut occ = vec![false; bins];
            for _ in 0..n {
                let o = c % outcomes;
                c /= outcomes;
                if o == bins {
                    w *= 1.0 - s;
                } else {
                    w *= s * probs[o];
                    occ[o] = true;
                }
            }
            // dark clicks on the empty bins
            let empty: Vec<usize> = (0..bins).filter(|b| !occ[*b]).collect();
            let base = bins - empty.len();
            for mask in 0..(1usize << empty.len()) {
                let k = mask.count_ones() as usize;
                let pw = d.powi(k as i32) * (1.0 - d).powi((empty.len() - k) as i32);
                out[base + k] += w * pw;
            }
        }
        out
    }

    #[test]
    fn tmd_three_photons_match_enumeration() {
        let tmd = TmdModel::uniform(8).unwrap();
        let got = tmd_click_distribution(&tmd, &det(0.5), 3);
        let want = brute_force(3, &tmd.bin_probabilities, 0.5, 0.0);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-14, "{got:?} {want:?}");
        }
    }

    #[test]
    fn tmd_unequal_bins_with_darks_match_enumeration() {
        let probs = vec![0.4, 0.3, 0.2, 0.1];
        let tmd = TmdModel::new(probs.clone(), 0.9).unwrap();
        let d = DetectorModel::new(0.7, 0.03).unwrap();
        for n in 0..=4 {
            let got = tmd_click_distribution(&tmd, &d, n);
            let want = brute_force(n, &probs, 0.7 * 0.9, 0.03);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-14, "n = {n}: {got:?} {want:?}");
            }
        }
    }

    #[test]
    fn single_bin_tmd_reduces_to_click_formula() {
        let tmd = TmdModel::uniform(1).unwrap();
        for (eta, dark) in [(0.055, 0.0), (0.3, 0.01), (1.0, 0.2)] {
            let d = DetectorModel::new(eta, dark).unwrap();
            for n in 0..12 {
                let p = tmd_click_distribution(&tmd, &d, n);
                assert!((p[1] - click_prob_given_n(&d, n)).abs() < 1e-14);
                assert!((p[0] + p[1] - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn conditional_low_gain_limit() {
        let state = SourceState::single_mode(1e-4).unwrap();
        let p = conditional_idler_click_prob(&state, &TmdModel::default(), &det(0.094), &det(0.055), 1).unwrap();
        assert!((p - 0.055).abs() < 1e-6, "{p}");
    }

    #[test]
    fn conditional_zero_probability() {
        let state = SourceState::single_mode(0.0).unwrap();
        assert!(matches!(
            conditional_idler_click_prob(&state, &TmdModel::default(), &det(0.5), &det(0.5), 2),
            Err(Error::ZeroProbabilityCondition { clicks: 2 })
        ));
        assert!(matches!(
            conditional_idler_click_prob(&state, &TmdModel::default(), &det(0.5), &det(0.5), 9),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn conditional_above_lower_envelope_and_monotone() {
        let lambdas = vec![0.7, 0.2, 0.1];
        let (ds, di) = (det(0.094), det(0.055));
        let tmd = TmdModel::default();
        let mut prev_gain = [0.0; 4];
        for r0 in [0.05, 0.2, 0.4, 0.6] {
            let state = SourceState::new(lambdas.clone(), r0, 40).unwrap();
            let mut prev_m = 0.0;
            for m in 1..=3 {
                let p = conditional_idler_click_prob(&state, &tmd, &ds, &di, m).unwrap();
                assert!(p >= 1.0 - (1.0 - 0.055f64).powi(m as i32) - 1e-12);
                assert!(p >= prev_m, "m");
                assert!(p >= prev_gain[m], "gain");
                prev_m = p;
                prev_gain[m] = p;
            }
        }
    }

    #[test]
    fn joint_probabilities_sum_to_retained_mass() {
        let state = SourceState::new(vec![0.6, 0.4], 0.5, 30).unwrap();
        let j = joint_click_probabilities(&state, &TmdModel::default(), &det(0.3), &det(0.2)).unwrap();
        let mass: f64 = pair_number_distribution(&state).unwrap().iter().sum();
        assert!((j.sum() - mass).abs() < 1e-12);
        assert!(j.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn monte_carlo_dark_free_vacuum() {
        let state = SourceState::single_mode(0.0).unwrap();
        let t = monte_carlo_run(&state, &TmdModel::uniform(1).unwrap(), &det(1.0), &det(1.0), 10_000, 3).unwrap();
        assert_eq!(t.counts[0][0], 10_000);
    }

    #[test]
    fn monte_carlo_repeatable_and_thread_independent() {
        let state = SourceState::new(vec![0.8, 0.2], 0.5, 30).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| monte_carlo_run(&state, &TmdModel::default(), &det(0.3), &det(0.2), 50_000, 11).unwrap())
        };
        let a = run(1);
        assert_eq!(a, run(4));
        assert_eq!(a, run(3));
        let other = monte_carlo_run(&state, &TmdModel::default(), &det(0.3), &det(0.2), 50_000, 12).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn monte_carlo_agrees_with_analytic() {
        let state = SourceState::new(vec![0.6, 0.3, 0.1], 0.8, 40).unwrap();
        let tmd = TmdModel::new(vec![0.2, 0.15, 0.15, 0.1, 0.1, 0.1, 0.1, 0.1], 0.9).unwrap();
        let (ds, di) = (DetectorModel::new(0.5, 0.002).unwrap(), DetectorModel::new(0.3, 0.001).unwrap());
        let shots = 1_000_000;
        let t = monte_carlo_run(&state, &tmd, &ds, &di, shots, 2024).unwrap();
        let j = joint_click_probabilities(&state, &tmd, &ds, &di).unwrap();
        let mass = j.sum();
        for m in 0..=tmd.n_bins {
            for f in 0..2 {
                let p = j[(m, f)] / mass;
                let sigma = (p * (1.0 - p) / shots as f64).sqrt();
                let got = t.fraction(m, f == 1);
                if p == 0.0 {
                    assert_eq!(got, 0.0);
                } else {
                    assert!((got - p).abs() <= 5.0 * sigma + 1e-12, "({m},{f}): {got} vs {p} ± {sigma}");
                }
            }
        }
    }

    #[test]
    fn rate_examples() {
        assert!((accidental_rate(16500.0, 6000.0, 1e6).unwrap() - 99.0).abs() < 1e-9);
        assert_eq!(accidental_rate(16500.0, 0.0, 1e6).unwrap(), 0.0);
        assert!((accidental_rate(16500.0, 6000.0, 2e6).unwrap() - 49.5).abs() < 1e-9);
        let h = heralding_efficiency(1200.0, 16500.0, 0.25).unwrap();
        assert!((h.value - 0.290909).abs() < 1e-6 && !h.inconsistent);
        assert_eq!(heralding_efficiency(7.0, 7.0, 1.0).unwrap().value, 1.0);
        assert!(heralding_efficiency(2000.0, 1000.0, 1.0).unwrap().inconsistent);
        assert!((detection_efficiency(1200.0, 6000.0).unwrap() - 0.2).abs() < 1e-15);
        assert!((detection_efficiency(1200.0, 16500.0).unwrap() - 0.072727).abs() < 1e-6);
    }

    #[test]
    fn rate_report_from_raw_counts() {
        let r = rate_report(RateInputs {
            signal_rate: 16500.0,
            idler_rate: 6000.0,
            repetition_rate: 1e6,
            raw_coincidence_rate: 1300.0,
            idler_detector_efficiency: 0.25,
        })
        .unwrap();
        assert!((r.accidentals - 99.0).abs() < 1e-9);
        assert!((r.corrected_coincidences - 1201.0).abs() < 1e-9);
        assert!((r.signal_detection_efficiency - 0.2002).abs() < 1e-4);
        assert!((r.idler_detection_efficiency - 0.0728).abs() < 1e-4);
        assert!((r.heralding_efficiency.value - 0.2912).abs() < 1e-4);
    }

    #[test]
    fn gain_fit_hits_target() {
        let template = SourceState::new(vec![0.7, 0.3], 0.0, 30).unwrap();
        let tmd = TmdModel::default();
        let d = det(0.094);
        let r0 = fit_gain(&template, &tmd, &d, 2, 2.2e-3).unwrap();
        let p = click_count_distribution(&template.with_gain(r0).unwrap(), &tmd, &d).unwrap()[2];
        assert!((p - 2.2e-3).abs() < 1e-12, "{p}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn click_prob_increasing(eta in 0.001f64..0.999, n in 0usize..40) {
            let d = det(eta);
            let (a, b) = (click_prob_given_n(&d, n), click_prob_given_n(&d, n + 1));
            // strict while the miss probability is resolvable next to 1
            if (1.0 - eta).powi(n as i32 + 1) > 1e-12 {
                prop_assert!(b > a);
            } else {
                prop_assert!(b >= a);
            }
        }

        #[test]
        fn tmd_distribution_is_probability(eta in 0.0f64..1.0, dark in 0.0f64..0.2, n in 0usize..15, bins in 1usize..10) {
            let p = tmd_click_distribution(&TmdModel::uniform(bins).unwrap(), &DetectorModel::new(eta, dark).unwrap(), n);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|v| *v >= -1e-15 && *v <= 1.0 + 1e-15));
        }

        #[test]
        fn pair_distribution_within_deficit(l in 0.05f64..0.95, r0 in 0.0f64..0.8) {
            let state = SourceState::new(vec![l, 1.0 - l], r0, 40).unwrap();
            let p = pair_number_distribution(&state).unwrap();
            let s: f64 = p.iter().sum();
            prop_assert!(s <= 1.0 + 1e-12 && s > 1.0 - TRUNCATION_TOLERANCE);
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
