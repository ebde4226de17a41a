//! Command-line front end. `sfwm <command> [--key value ...]` where every
//! setting is a dotted config key, given in a flat JSON file (`--config`) or
//! as a kebab-case flag (`pump.center_nm` ↔ `--pump-center-nm`).
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 the computation
//! itself is infeasible (no contour, zero-probability conditioning, ...).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::counting::{self, DetectorModel, RateInputs, SourceState, TmdModel};
use crate::dispersion::{self, DispersionProfile};
use crate::error::{Error, Result};
use crate::fixture;
use crate::io;
use crate::jsa::{self, JointSpectrum, PumpEnvelope};
use crate::phasematch::{self, FwmConfig};
use crate::schmidt::{self, Source};
use crate::spectral::{self, omega_of, Grid2D, SpectralAxis};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

/// Every setting of a run. Field names are the dotted config keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `fixture`, `coefficients` (profile JSON) or `d_samples` (D(λ) CSV to fit).
    #[serde(rename = "profile.source")]
    pub profile_source: String,
    #[serde(rename = "profile.path")]
    pub profile_path: Option<PathBuf>,
    /// Degree of the β₂ polynomial when fitting D samples.
    #[serde(rename = "profile.fit_degree")]
    pub profile_fit_degree: usize,
    #[serde(rename = "profile.reference_nm")]
    pub profile_reference_nm: f64,
    #[serde(rename = "profile.effective_index")]
    pub profile_effective_index: f64,
    #[serde(rename = "profile.group_index")]
    pub profile_group_index: f64,
    #[serde(rename = "profile.domain_min_nm")]
    pub profile_domain_min_nm: f64,
    #[serde(rename = "profile.domain_max_nm")]
    pub profile_domain_max_nm: f64,

    #[serde(rename = "dispersion.step_nm")]
    pub dispersion_step_nm: f64,

    #[serde(rename = "pump.center_nm")]
    pub pump_center_nm: f64,
    #[serde(rename = "pump.fwhm_nm")]
    pub pump_fwhm_nm: f64,
    #[serde(rename = "pump.peak_power_w")]
    pub pump_peak_power_w: f64,
    #[serde(rename = "pump.range_min_nm")]
    pub pump_range_min_nm: f64,
    #[serde(rename = "pump.range_max_nm")]
    pub pump_range_max_nm: f64,
    #[serde(rename = "pump.steps")]
    pub pump_steps: usize,

    #[serde(rename = "fiber.gamma")]
    pub fiber_gamma: f64,
    #[serde(rename = "fiber.length_m")]
    pub fiber_length_m: f64,

    #[serde(rename = "grid.signal_min_nm")]
    pub grid_signal_min_nm: f64,
    #[serde(rename = "grid.signal_max_nm")]
    pub grid_signal_max_nm: f64,
    #[serde(rename = "grid.idler_min_nm")]
    pub grid_idler_min_nm: f64,
    #[serde(rename = "grid.idler_max_nm")]
    pub grid_idler_max_nm: f64,
    #[serde(rename = "grid.signal_points")]
    pub grid_signal_points: usize,
    #[serde(rename = "grid.idler_points")]
    pub grid_idler_points: usize,

    #[serde(rename = "instrument.signal_resolution_nm")]
    pub instrument_signal_resolution_nm: f64,
    #[serde(rename = "instrument.idler_resolution_nm")]
    pub instrument_idler_resolution_nm: f64,

    #[serde(rename = "schmidt.modes_kept")]
    pub schmidt_modes_kept: usize,
    /// Flat JSI CSV to decompose instead of the model.
    #[serde(rename = "schmidt.input")]
    pub schmidt_input: Option<PathBuf>,

    #[serde(rename = "detectors.signal_efficiency")]
    pub detectors_signal_efficiency: f64,
    #[serde(rename = "detectors.signal_dark_prob")]
    pub detectors_signal_dark_prob: f64,
    #[serde(rename = "detectors.idler_efficiency")]
    pub detectors_idler_efficiency: f64,
    #[serde(rename = "detectors.idler_dark_prob")]
    pub detectors_idler_dark_prob: f64,

    #[serde(rename = "tmd.bins")]
    pub tmd_bins: usize,
    #[serde(rename = "tmd.bin_probabilities")]
    pub tmd_bin_probabilities: Option<Vec<f64>>,
    #[serde(rename = "tmd.bin_efficiency")]
    pub tmd_bin_efficiency: f64,

    /// Schmidt coefficients of the source; null takes them from the model JSA.
    #[serde(rename = "source.lambdas")]
    pub source_lambdas: Option<Vec<f64>>,
    /// Gains r₀ for the conditional-click table.
    #[serde(rename = "source.gains")]
    pub source_gains: Vec<f64>,
    #[serde(rename = "source.n_max")]
    pub source_n_max: usize,
    /// Two-click rate (1/s) to calibrate r₀ against; null skips calibration.
    #[serde(rename = "source.two_click_rate")]
    pub source_two_click_rate: Option<f64>,
    #[serde(rename = "source.max_clicks")]
    pub source_max_clicks: usize,

    #[serde(rename = "rates.signal_rate")]
    pub rates_signal_rate: f64,
    #[serde(rename = "rates.idler_rate")]
    pub rates_idler_rate: f64,
    #[serde(rename = "rates.repetition_rate")]
    pub rates_repetition_rate: f64,
    #[serde(rename = "rates.raw_coincidence_rate")]
    pub rates_raw_coincidence_rate: f64,
    #[serde(rename = "rates.idler_detector_efficiency")]
    pub rates_idler_detector_efficiency: f64,

    #[serde(rename = "run.shots")]
    pub run_shots: u64,
    #[serde(rename = "run.seed")]
    pub run_seed: u64,
    /// Worker threads, 0 = all cores. Results do not depend on it.
    #[serde(rename = "run.threads")]
    pub run_threads: usize,
    #[serde(rename = "run.out")]
    pub run_out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            profile_source: "fixture".into(),
            profile_path: None,
            profile_fit_degree: 6,
            profile_reference_nm: 771.0,
            profile_effective_index: 1.45,
            profile_group_index: 1.47,
            profile_domain_min_nm: 450.0,
            profile_domain_max_nm: 1800.0,
            dispersion_step_nm: 1.0,
            pump_center_nm: 771.0,
            pump_fwhm_nm: 3.0,
            pump_peak_power_w: 0.0,
            pump_range_min_nm: 750.0,
            pump_range_max_nm: 790.0,
            pump_steps: 81,
            fiber_gamma: 0.08,
            fiber_length_m: 0.65,
            grid_signal_min_nm: 507.0,
            grid_signal_max_nm: 521.0,
            grid_idler_min_nm: 1470.0,
            grid_idler_max_nm: 1630.0,
            grid_signal_points: 512,
            grid_idler_points: 512,
            instrument_signal_resolution_nm: 0.7,
            instrument_idler_resolution_nm: 24.0,
            schmidt_modes_kept: schmidt::DEFAULT_MODES_KEPT,
            schmidt_input: None,
            detectors_signal_efficiency: 0.094,
            detectors_signal_dark_prob: 0.0,
            detectors_idler_efficiency: 0.055,
            detectors_idler_dark_prob: 0.0,
            tmd_bins: 8,
            tmd_bin_probabilities: None,
            tmd_bin_efficiency: 1.0,
            source_lambdas: None,
            source_gains: vec![0.1, 0.3, 0.5, 0.7],
            source_n_max: counting::DEFAULT_N_MAX,
            source_two_click_rate: Some(2200.0),
            source_max_clicks: 3,
            rates_signal_rate: 16500.0,
            rates_idler_rate: 6000.0,
            rates_repetition_rate: 1e6,
            rates_raw_coincidence_rate: 1300.0,
            rates_idler_detector_efficiency: 0.25,
            run_shots: 1_000_000,
            run_seed: 1,
            run_threads: 0,
            run_out: PathBuf::from("sfwm-out"),
        }
    }
}

/// `pump.center_nm` → `pump-center-nm`.
pub fn flag_for_key(key: &str) -> String {
    key.replace(['.', '_'], "-")
}

fn known_keys() -> Vec<String> {
    match serde_json::to_value(RunConfig::default()).expect("config serializes") {
        Value::Object(m) => m.keys().cloned().collect(),
        _ => unreachable!("config is a struct"),
    }
}

/// Parses a command-line value: JSON when it parses as JSON, else a string.
fn parse_flag_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()))
}

impl RunConfig {
    /// Builds a config from flat key/value pairs layered over the defaults.
    /// Unknown keys and ill-typed values are reported by key.
    pub fn from_map(map: &Map<String, Value>) -> Result<Self> {
        let keys = known_keys();
        let mut merged = match serde_json::to_value(Self::default()).expect("config serializes") {
            Value::Object(m) => m,
            _ => unreachable!(),
        };
        for (k, v) in map {
            if !keys.contains(k) {
                return Err(Error::config(k.clone(), "unknown key"));
            }
            let mut single = merged.clone();
            single.insert(k.clone(), v.clone());
            if let Err(e) = serde_json::from_value::<Self>(Value::Object(single)) {
                return Err(Error::config(k.clone(), format!("invalid value {v}: {e}")));
            }
            merged.insert(k.clone(), v.clone());
        }
        let cfg: Self = serde_json::from_value(Value::Object(merged)).map_err(|e| Error::config("config", e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &Map<String, Value>) -> Result<Self> {
        let mut map = Map::new();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => map = m,
                Ok(_) => return Err(Error::parse(p, "config must be a flat JSON object")),
                Err(e) => return Err(Error::parse(p, e.to_string())),
            }
        }
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        let cfg = Self::from_map(&map)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks on every key, run before any computation.
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, key: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be > 0, got {v}")))
            }
        };
        let non_negative = |v: f64, key: &str| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be ≥ 0, got {v}")))
            }
        };
        let probability = |v: f64, key: &str| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(key, format!("must lie in [0, 1], got {v}")))
            }
        };
        let ordered = |lo: f64, hi: f64, key: &str| {
            if lo > 0.0 && lo < hi {
                Ok(())
            } else {
                Err(Error::config(key, format!("empty or invalid range [{lo}, {hi}] nm")))
            }
        };

        match self.profile_source.as_str() {
            "fixture" => {}
            "coefficients" | "d_samples" => match &self.profile_path {
                None => return Err(Error::config("profile.path", "required for this profile.source")),
                Some(p) if !p.is_file() => {
                    return Err(Error::config(
                        "profile.path",
                        format!("file not found: {}", p.display()),
                    ))
                }
                Some(_) => {}
            },
            other => {
                return Err(Error::config(
                    "profile.source",
                    format!("`{other}` is not one of fixture, coefficients, d_samples"),
                ))
            }
        }
        if self.profile_fit_degree < 3 {
            return Err(Error::config("profile.fit_degree", "must be ≥ 3"));
        }
        positive(self.profile_reference_nm, "profile.reference_nm")?;
        positive(self.profile_effective_index, "profile.effective_index")?;
        positive(self.profile_group_index, "profile.group_index")?;
        ordered(self.profile_domain_min_nm, self.profile_domain_max_nm, "profile.domain_min_nm")?;
        positive(self.dispersion_step_nm, "dispersion.step_nm")?;

        positive(self.pump_center_nm, "pump.center_nm")?;
        positive(self.pump_fwhm_nm, "pump.fwhm_nm")?;
        non_negative(self.pump_peak_power_w, "pump.peak_power_w")?;
        if !(self.pump_range_min_nm > 0.0)
            || self.pump_range_min_nm > self.pump_range_max_nm
            || (self.pump_range_min_nm == self.pump_range_max_nm && self.pump_steps > 1)
        {
            return Err(Error::config(
                "pump.range_min_nm",
                format!(
                    "empty pump range [{}, {}] nm",
                    self.pump_range_min_nm, self.pump_range_max_nm
                ),
            ));
        }
        if self.pump_steps == 0 {
            return Err(Error::config("pump.steps", "must be ≥ 1"));
        }
        non_negative(self.fiber_gamma, "fiber.gamma")?;
        positive(self.fiber_length_m, "fiber.length_m")?;

        ordered(self.grid_signal_min_nm, self.grid_signal_max_nm, "grid.signal_min_nm")?;
        ordered(self.grid_idler_min_nm, self.grid_idler_max_nm, "grid.idler_min_nm")?;
        for (v, key) in [
            (self.grid_signal_points, "grid.signal_points"),
            (self.grid_idler_points, "grid.idler_points"),
        ] {
            if v < 3 {
                return Err(Error::config(key, format!("need ≥ 3 points, got {v}")));
            }
        }
        non_negative(self.instrument_signal_resolution_nm, "instrument.signal_resolution_nm")?;
        non_negative(self.instrument_idler_resolution_nm, "instrument.idler_resolution_nm")?;
        if self.schmidt_modes_kept == 0 {
            return Err(Error::config("schmidt.modes_kept", "must be ≥ 1"));
        }
        if let Some(p) = &self.schmidt_input {
            if !p.is_file() {
                return Err(Error::config("schmidt.input", format!("file not found: {}", p.display())));
            }
        }

        probability(self.detectors_signal_efficiency, "detectors.signal_efficiency")?;
        probability(self.detectors_signal_dark_prob, "detectors.signal_dark_prob")?;
        probability(self.detectors_idler_efficiency, "detectors.idler_efficiency")?;
        probability(self.detectors_idler_dark_prob, "detectors.idler_dark_prob")?;
        self.tmd().map_err(|e| Error::config("tmd", e.to_string()))?;
        if let Some(l) = &self.source_lambdas {
            SourceState::new(l.clone(), 0.0, self.source_n_max).map_err(|e| Error::config("source.lambdas", e.to_string()))?;
        }
        if self.source_gains.is_empty() {
            return Err(Error::config("source.gains", "need at least one gain"));
        }
        for g in &self.source_gains {
            non_negative(*g, "source.gains")?;
        }
        if self.source_n_max == 0 {
            return Err(Error::config("source.n_max", "must be ≥ 1"));
        }
        if let Some(r) = self.source_two_click_rate {
            if !(r > 0.0 && r < self.rates_repetition_rate) {
                return Err(Error::config(
                    "source.two_click_rate",
                    "must lie between 0 and the repetition rate",
                ));
            }
            if self.tmd_bins < 2 {
                return Err(Error::config("source.two_click_rate", "needs tmd.bins ≥ 2"));
            }
        }
        if self.source_max_clicks == 0 || self.source_max_clicks > self.tmd_bins {
            return Err(Error::config("source.max_clicks", format!("must lie in 1..={}", self.tmd_bins)));
        }

        non_negative(self.rates_signal_rate, "rates.signal_rate")?;
        non_negative(self.rates_idler_rate, "rates.idler_rate")?;
        positive(self.rates_repetition_rate, "rates.repetition_rate")?;
        non_negative(self.rates_raw_coincidence_rate, "rates.raw_coincidence_rate")?;
        if !(self.rates_idler_detector_efficiency > 0.0 && self.rates_idler_detector_efficiency <= 1.0) {
            return Err(Error::config("rates.idler_detector_efficiency", "must lie in (0, 1]"));
        }
        if self.rates_signal_rate == 0.0 || self.rates_idler_rate == 0.0 {
            return Err(Error::config("rates.signal_rate", "singles rates must be > 0"));
        }
        if self.run_shots == 0 {
            return Err(Error::config("run.shots", "must be ≥ 1"));
        }
        Ok(())
    }

    pub fn profile(&self) -> Result<DispersionProfile> {
        let domain = (self.profile_domain_min_nm, self.profile_domain_max_nm);
        match self.profile_source.as_str() {
            "fixture" => Ok(fixture::test_profile()),
            "coefficients" => DispersionProfile::load_json(self.profile_path.as_deref().expect("validated")),
            _ => {
                let samples = dispersion::read_d_samples(self.profile_path.as_deref().expect("validated"))?;
                let w0 = omega_of(self.profile_reference_nm);
                let c = spectral::SPEED_OF_LIGHT;
                Ok(dispersion::fit_from_d_samples(
                    &samples,
                    self.profile_fit_degree,
                    w0,
                    self.profile_effective_index * w0 / c,
                    self.profile_group_index / c,
                    domain,
                )?
                .profile)
            }
        }
    }

    pub fn fwm(&self) -> FwmConfig {
        FwmConfig {
            gamma: self.fiber_gamma,
            peak_pump_power: self.pump_peak_power_w,
            fiber_length: self.fiber_length_m,
            pump_center: self.pump_center_nm,
            pump_fwhm_bandwidth: self.pump_fwhm_nm,
        }
    }

    pub fn envelope(&self) -> Result<PumpEnvelope> {
        PumpEnvelope::gaussian(self.pump_center_nm, self.pump_fwhm_nm)
    }

    pub fn grid(&self) -> Result<Grid2D> {
        Ok(Grid2D::new(
            SpectralAxis::new(self.grid_signal_min_nm, self.grid_signal_max_nm, self.grid_signal_points)?,
            SpectralAxis::new(self.grid_idler_min_nm, self.grid_idler_max_nm, self.grid_idler_points)?,
        ))
    }

    pub fn tmd(&self) -> Result<TmdModel> {
        match &self.tmd_bin_probabilities {
            Some(p) => {
                if p.len() != self.tmd_bins {
                    return Err(Error::config(
                        "tmd.bin_probabilities",
                        format!("has {} entries for {} bins", p.len(), self.tmd_bins),
                    ));
                }
                TmdModel::new(p.clone(), self.tmd_bin_efficiency)
            }
            None => {
                let mut t = TmdModel::uniform(self.tmd_bins)?;
                t = TmdModel::new(t.bin_probabilities, self.tmd_bin_efficiency)?;
                Ok(t)
            }
        }
    }

    pub fn signal_detector(&self) -> Result<DetectorModel> {
        DetectorModel::new(self.detectors_signal_efficiency, self.detectors_signal_dark_prob)
    }

    pub fn idler_detector(&self) -> Result<DetectorModel> {
        DetectorModel::new(self.detectors_idler_efficiency, self.detectors_idler_dark_prob)
    }

    pub fn rate_inputs(&self) -> RateInputs {
        RateInputs {
            signal_rate: self.rates_signal_rate,
            idler_rate: self.rates_idler_rate,
            repetition_rate: self.rates_repetition_rate,
            raw_coincidence_rate: self.rates_raw_coincidence_rate,
            idler_detector_efficiency: self.rates_idler_detector_efficiency,
        }
    }
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::Parse { .. } | Error::Io { .. } => EXIT_USAGE,
        _ => EXIT_INFEASIBLE,
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    config: &'a RunConfig,
    outputs: Vec<String>,
}

fn write_manifest(out: &Path, command: &str, config: &RunConfig, result: &Result<Vec<PathBuf>>) -> Result<()> {
    let (status, error, outputs) = match result {
        Ok(files) => (
            "ok",
            None,
            files
                .iter()
                .map(|p| p.strip_prefix(out).unwrap_or(p).display().to_string())
                .collect(),
        ),
        Err(e) => ("failed", Some(e.to_string()), Vec::new()),
    };
    io::write_json(
        &out.join("manifest.json"),
        &Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            status,
            error,
            config,
            outputs,
        },
    )
}

#[derive(Debug, Serialize)]
struct ZdwReport {
    zdws_nm: Vec<f64>,
    domain_nm: (f64, f64),
}

pub fn cmd_dispersion(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let profile = config.profile()?;
    let (lo, hi) = profile.domain_nm();
    let mut rows = Vec::new();
    let mut lam = lo;
    while lam <= hi + 1e-9 {
        let l = lam.min(hi);
        let w = omega_of(l);
        rows.push(vec![l, profile.dispersion_parameter(l)?, profile.beta2(w)?]);
        lam += config.dispersion_step_nm;
    }
    let curve = out.join("dispersion_curve.csv");
    io::write_numeric_csv(&curve, &["wavelength_nm", "D_ps_per_nm_km", "beta2_s2_per_m"], &rows)?;
    let zdws = profile.find_zdws((lo, hi))?;
    let report = out.join("zdw.json");
    io::write_json(&report, &ZdwReport { zdws_nm: zdws, domain_nm: (lo, hi) })?;
    let prof = out.join("profile.json");
    profile.save_json(&prof)?;
    Ok(vec![curve, report, prof])
}

#[derive(Debug, Serialize)]
struct GvReport {
    found: bool,
    #[serde(flatten)]
    matched: Option<phasematch::GvMatch>,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
}

pub fn cmd_phasematch(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let profile = config.profile()?;
    let fwm = config.fwm();
    let range = (config.pump_range_min_nm, config.pump_range_max_nm);
    let points = phasematch::solve_contour(&profile, &fwm, range, config.pump_steps)?;
    if points.is_empty() {
        return Err(Error::NotFound(format!(
            "no phase-matched signal/idler pair for pumps in [{}, {}] nm",
            range.0, range.1
        )));
    }
    let contour = out.join("contour.csv");
    io::write_numeric_csv(&contour, &phasematch::CONTOUR_HEADER, &phasematch::contour_csv_rows(&points))?;
    let report = match phasematch::gv_matched_pump(&profile, &fwm, range) {
        Ok(m) => GvReport {
            found: true,
            matched: Some(m),
            message: None,
        },
        Err(e @ Error::NotFound(_)) => GvReport {
            found: false,
            matched: None,
            message: Some(e.to_string()),
        },
        Err(e) => return Err(e),
    };
    let gv = out.join("gv_match.json");
    io::write_json(&gv, &report)?;
    Ok(vec![contour, gv])
}

#[derive(Debug, Clone, Serialize)]
pub struct ArmWidths {
    pub model_fwhm_nm: f64,
    pub convolved_fwhm_nm: f64,
    pub resolution_nm: f64,
    /// Convolved width with the resolution removed in quadrature.
    pub deconvolved_fwhm_nm: Option<f64>,
    pub peak_nm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct JsaSummary {
    pub signal: ArmWidths,
    pub idler: ArmWidths,
    pub model: schmidt::SchmidtReport,
    pub convolved_sqrt: schmidt::SchmidtReport,
}

/// Model JSA, instrument-convolved JSI and both Schmidt analyses.
pub fn jsa_pipeline(config: &RunConfig) -> Result<(JointSpectrum, JointSpectrum, JsaSummary)> {
    let profile = config.profile()?;
    let js = jsa::build_jsa(&profile, &config.fwm(), &config.envelope()?, &config.grid()?)?;
    let (rs, ri) = (config.instrument_signal_resolution_nm, config.instrument_idler_resolution_nm);
    let conv = jsa::convolve_instrument(&js, rs, ri)?;
    let (ms, mi) = jsa::marginals(&js);
    let (cs, ci) = jsa::marginals(&conv);
    let arm = |m: &[f64], c: &[f64], axis: &SpectralAxis, res: f64| -> Result<ArmWidths> {
        let conv_w = jsa::fwhm_of_marginal(c, axis)?;
        Ok(ArmWidths {
            model_fwhm_nm: jsa::fwhm_of_marginal(m, axis)?,
            convolved_fwhm_nm: conv_w,
            resolution_nm: res,
            deconvolved_fwhm_nm: spectral::fwhm_deconvolve(conv_w, res).ok(),
            peak_nm: jsa::peak_wavelength(m, axis),
        })
    };
    let keep = config.schmidt_modes_kept;
    let summary = JsaSummary {
        signal: arm(&ms, &cs, &js.grid.signal, rs)?,
        idler: arm(&mi, &ci, &js.grid.idler, ri)?,
        model: schmidt::decompose_keeping(&js, Source::Amplitude, keep)?.report(),
        convolved_sqrt: schmidt::decompose_keeping(&conv, Source::SqrtOfIntensity, keep)?.report(),
    };
    Ok((js, conv, summary))
}

fn write_marginals(path: &Path, axis: &SpectralAxis, model: &[f64], conv: &[f64], w: &ArmWidths, name: &str) -> Result<()> {
    let mut text = format!(
        "# {name} FWHM: model {:.4} nm, convolved {:.4} nm, resolution {} nm, deconvolved {}\n",
        w.model_fwhm_nm,
        w.convolved_fwhm_nm,
        w.resolution_nm,
        w.deconvolved_fwhm_nm
            .map(|d| format!("{d:.4} nm"))
            .unwrap_or_else(|| "n/a".into())
    );
    let rows: Vec<Vec<f64>> = axis
        .wavelengths()
        .into_iter()
        .zip(model.iter().zip(conv))
        .map(|(l, (m, c))| vec![l, *m, *c])
        .collect();
    text.push_str(&io::csv_string(&[&format!("{name}_nm"), "model", "convolved"], &rows));
    io::write_atomic(path, text.as_bytes())
}

pub fn cmd_jsa_schmidt(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let keep = config.schmidt_modes_kept;
    if let Some(input) = &config.schmidt_input {
        let js = jsa::read_jsi_flat(input)?;
        let r = schmidt::decompose_keeping(&js, Source::SqrtOfIntensity, keep)?;
        let report = out.join("schmidt_input.json");
        r.write_report(&report)?;
        return Ok(vec![report]);
    }
    let (js, conv, summary) = jsa_pipeline(config)?;
    let mut files = Vec::new();
    for (name, spectrum) in [("jsi_model", &js), ("jsi_convolved", &conv)] {
        let m = out.join(format!("{name}.csv"));
        jsa::write_jsi_matrix(&m, spectrum)?;
        let f = out.join(format!("{name}_flat.csv"));
        jsa::write_jsi_flat(&f, spectrum)?;
        files.extend([m, f]);
    }
    let (ms, mi) = jsa::marginals(&js);
    let (cs, ci) = jsa::marginals(&conv);
    let sig = out.join("marginals_signal.csv");
    write_marginals(&sig, &js.grid.signal, &ms, &cs, &summary.signal, "signal")?;
    let idl = out.join("marginals_idler.csv");
    write_marginals(&idl, &js.grid.idler, &mi, &ci, &summary.idler, "idler")?;
    files.extend([sig, idl]);

    let model = schmidt::decompose_keeping(&js, Source::Amplitude, keep)?;
    let convolved = schmidt::decompose_keeping(&conv, Source::SqrtOfIntensity, keep)?;
    for (name, r) in [("model", &model), ("convolved_sqrt", &convolved)] {
        let p = out.join(format!("schmidt_{name}.json"));
        r.write_report(&p)?;
        let s = out.join(format!("modes_{name}_signal.csv"));
        let i = out.join(format!("modes_{name}_idler.csv"));
        r.write_modes(&s, &i, 4)?;
        files.extend([p, s, i]);
    }
    let w = out.join("jsa_summary.json");
    io::write_json(&w, &summary)?;
    files.push(w);
    Ok(files)
}

#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub two_click_rate: f64,
    pub fitted_gain: f64,
    pub mean_pairs: f64,
    /// Predicted click rates per second for m = 0..=n_bins.
    pub click_rates: Vec<f64>,
}

/// Schmidt coefficients of the configured source.
pub fn source_lambdas(config: &RunConfig) -> Result<Vec<f64>> {
    match &config.source_lambdas {
        Some(l) => Ok(l.clone()),
        None => {
            let profile = config.profile()?;
            let js = jsa::build_jsa(&profile, &config.fwm(), &config.envelope()?, &config.grid()?)?;
            Ok(schmidt::decompose(&js, Source::Amplitude)?.coefficients)
        }
    }
}

pub fn calibrate(config: &RunConfig, lambdas: &[f64]) -> Result<Option<Calibration>> {
    let Some(rate) = config.source_two_click_rate else {
        return Ok(None);
    };
    let template = SourceState::new(lambdas.to_vec(), 0.0, config.source_n_max)?;
    let tmd = config.tmd()?;
    let det = config.signal_detector()?;
    let rep = config.rates_repetition_rate;
    let r0 = counting::fit_gain(&template, &tmd, &det, 2, rate / rep)?;
    let state = template.with_gain(r0)?;
    let dist = counting::click_count_distribution(&state, &tmd, &det)?;
    Ok(Some(Calibration {
        two_click_rate: rate,
        fitted_gain: r0,
        mean_pairs: state.mean_pairs(),
        click_rates: dist.iter().map(|p| p * rep).collect(),
    }))
}

pub fn cmd_counting(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let lambdas = source_lambdas(config)?;
    let tmd = config.tmd()?;
    let (ds, di) = (config.signal_detector()?, config.idler_detector()?);
    let mut files = Vec::new();

    let mut header = vec!["m".to_string(), "lower_envelope".to_string()];
    header.extend(config.source_gains.iter().map(|g| format!("r0={g}")));
    let mut rows = Vec::new();
    for m in 1..=config.source_max_clicks {
        let mut row = vec![m as f64, 1.0 - (1.0 - config.detectors_idler_efficiency).powi(m as i32)];
        for &g in &config.source_gains {
            let state = SourceState::new(lambdas.clone(), g, config.source_n_max)?;
            row.push(counting::conditional_idler_click_prob(&state, &tmd, &ds, &di, m)?);
        }
        rows.push(row);
    }
    let table = out.join("conditional_clicks.csv");
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    io::write_numeric_csv(&table, &h, &rows)?;
    files.push(table);

    let calibration = calibrate(config, &lambdas)?;
    let mc_gain = calibration
        .as_ref()
        .map(|c| c.fitted_gain)
        .unwrap_or(config.source_gains[0]);
    if let Some(c) = &calibration {
        let p = out.join("calibration.json");
        io::write_json(&p, c)?;
        files.push(p);
    }

    let state = SourceState::new(lambdas.clone(), mc_gain, config.source_n_max)?;
    let tally = counting::monte_carlo_run(&state, &tmd, &ds, &di, config.run_shots, config.run_seed)?;
    let tally_path = out.join("tally.json");
    io::write_json(&tally_path, &tally)?;
    let joint = counting::joint_click_probabilities(&state, &tmd, &ds, &di)?;
    let mass = joint.sum();
    let n = config.run_shots as f64;
    let mut cmp = Vec::new();
    for m in 0..=tmd.n_bins {
        for flag in 0..2 {
            let p = joint[(m, flag)] / mass;
            let sigma = (p * (1.0 - p) / n).sqrt();
            let f = tally.fraction(m, flag == 1);
            let z = if sigma > 0.0 { (f - p) / sigma } else { 0.0 };
            cmp.push(vec![m as f64, flag as f64, f, p, sigma, z]);
        }
    }
    let cmp_path = out.join("monte_carlo_vs_analytic.csv");
    io::write_numeric_csv(
        &cmp_path,
        &["signal_clicks", "idler_click", "mc_fraction", "analytic", "sigma", "z"],
        &cmp,
    )?;
    files.extend([tally_path, cmp_path]);

    let rates = out.join("rates.json");
    io::write_json(&rates, &counting::rate_report(config.rate_inputs())?)?;
    files.push(rates);
    Ok(files)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub quantity: String,
    pub model: f64,
    pub reference: f64,
    pub tolerance: String,
    pub pass: bool,
}

fn row(quantity: &str, model: f64, reference: f64, pass: bool, tolerance: &str) -> SummaryRow {
    SummaryRow {
        quantity: quantity.into(),
        model,
        reference,
        tolerance: tolerance.into(),
        pass,
    }
}

/// Runs the four commands on the shipped fixture into subdirectories and
/// tabulates the headline quantities against their reference values.
pub fn cmd_reproduce(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for (name, f) in [
        ("dispersion", cmd_dispersion as fn(&RunConfig, &Path) -> Result<Vec<PathBuf>>),
        ("phasematch", cmd_phasematch),
        ("jsa_schmidt", cmd_jsa_schmidt),
        ("counting", cmd_counting),
    ] {
        let dir = out.join(name);
        let result = f(config, &dir);
        write_manifest(&dir, name, config, &result)?;
        files.extend(result?);
    }

    let profile = config.profile()?;
    let fwm = config.fwm();
    let zdws = profile.find_zdws(profile.domain_nm())?;
    let gv = phasematch::gv_matched_pump(&profile, &fwm, (config.pump_range_min_nm, config.pump_range_max_nm))?;
    let contour = phasematch::solve_contour(&profile, &fwm, (config.pump_center_nm, config.pump_center_nm), 1)?;
    let pt = contour
        .iter()
        .min_by(|a, b| (a.signal - 514.0).abs().total_cmp(&(b.signal - 514.0).abs()))
        .ok_or_else(|| Error::NotFound("no contour at the pump center".into()))?;
    let (_, _, js) = jsa_pipeline(config)?;
    let lambdas = source_lambdas(config)?;
    let cal = calibrate(config, &lambdas)?;
    let rates = counting::rate_report(config.rate_inputs())?;
    let within = |v: f64, r: f64, tol: f64| (v - r).abs() <= tol;

    let mut rows = vec![
        row("ZDW 1 (nm)", zdws.first().copied().unwrap_or(f64::NAN), 747.0, zdws.first().is_some_and(|z| within(*z, 747.0, 1.0)), "±1"),
        row("ZDW 2 (nm)", zdws.get(1).copied().unwrap_or(f64::NAN), 1260.0, zdws.get(1).is_some_and(|z| within(*z, 1260.0, 1.0)), "±1"),
        row("signal at pump center (nm)", pt.signal, 514.0, within(pt.signal, 514.0, 2.0), "±2"),
        row("idler at pump center (nm)", pt.idler, 1542.0, within(pt.idler, 1542.0, 6.0), "±6"),
        row("GV-matched pump (nm)", gv.pump, 771.0, within(gv.pump, 771.0, 1.0), "±1"),
        row("model signal FWHM (nm)", js.signal.model_fwhm_nm, 1.2, within(js.signal.model_fwhm_nm, 1.2, 0.3), "±25%"),
        row("model idler FWHM (nm)", js.idler.model_fwhm_nm, 35.0, within(js.idler.model_fwhm_nm, 35.0, 8.75), "±25%"),
        row("convolved signal FWHM (nm)", js.signal.convolved_fwhm_nm, 1.4, within(js.signal.convolved_fwhm_nm, 1.4, 0.35), "±25%"),
        row("convolved idler FWHM (nm)", js.idler.convolved_fwhm_nm, 42.5, within(js.idler.convolved_fwhm_nm, 42.5, 10.625), "±25%"),
        row("Schmidt K (convolved, sqrt)", js.convolved_sqrt.k, 1.22, within(js.convolved_sqrt.k, 1.22, 0.05), "±0.05"),
        row("purity (convolved, sqrt)", js.convolved_sqrt.purity, 0.82, (0.77..=0.87).contains(&js.convolved_sqrt.purity), "[0.77, 0.87]"),
        row("accidentals (1/s)", rates.accidentals, 100.0, within(rates.accidentals, 100.0, 2.0), "±2"),
        row("signal-arm efficiency", rates.signal_detection_efficiency, 0.20, within(rates.signal_detection_efficiency, 0.20, 0.01), "±1 pp"),
        row("idler-arm efficiency", rates.idler_detection_efficiency, 0.07, within(rates.idler_detection_efficiency, 0.07, 0.01), "±1 pp"),
        row("heralding efficiency", rates.heralding_efficiency.value, 0.28, within(rates.heralding_efficiency.value, 0.28, 0.02), "±2 pp"),
    ];
    if let Some(c) = &cal {
        let r3 = c.click_rates.get(3).copied().unwrap_or(f64::NAN);
        let r4 = c.click_rates.get(4).copied().unwrap_or(f64::NAN);
        rows.push(row("three-click rate (1/s)", r3, 40.0, (40.0 / 3.0..=120.0).contains(&r3), "×3"));
        rows.push(row("four-click rate (1/s)", r4, 0.5, (0.1..=2.5).contains(&r4), "×5"));
    }

    let json = out.join("summary.json");
    io::write_json(&json, &rows)?;
    let mut text = format!("{:<32} {:>12} {:>10} {:>14}  {}\n", "quantity", "model", "reference", "tolerance", "ok");
    for r in &rows {
        text.push_str(&format!(
            "{:<32} {:>12.5} {:>10} {:>14}  {}\n",
            r.quantity,
            r.model,
            r.reference,
            r.tolerance,
            if r.pass { "yes" } else { "NO" }
        ));
    }
    let txt = out.join("summary.txt");
    io::write_atomic(&txt, text.as_bytes())?;
    files.extend([json, txt]);
    Ok(files)
}

#[derive(Parser, Debug)]
#[command(name = "sfwm", version, about = "Photon-pair source modelling for four-wave mixing in fiber")]
struct Cli {
    /// Flat JSON file of dotted config keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Settings {
    /// Config overrides as `--dotted-key-in-kebab-case value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0.., value_name = "SETTING")]
    settings: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// D(λ) curve and zero-dispersion wavelengths.
    Dispersion(Settings),
    /// Phase-matching contour and group-velocity-matched pump.
    Phasematch(Settings),
    /// Joint spectrum, instrument convolution and Schmidt analysis.
    JsaSchmidt(Settings),
    /// Click statistics, Monte Carlo tallies and rate report.
    Counting(Settings),
    /// All of the above on the shipped fixture, with a summary table.
    ReproducePaper(Settings),
}

/// Splits `--flag value` / `--flag=value` pairs into config overrides.
fn parse_settings(args: &[String]) -> Result<Map<String, Value>> {
    let by_flag: Vec<(String, String)> = known_keys().into_iter().map(|k| (flag_for_key(&k), k)).collect();
    let mut map = Map::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            return Err(Error::config(arg.clone(), "expected a --setting flag"));
        };
        let (flag, value) = match flag.split_once('=') {
            Some((f, v)) => (f.to_owned(), v.to_owned()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::config(flag.to_owned(), "missing value"))?;
                (flag.to_owned(), v.clone())
            }
        };
        let key = match flag.as_str() {
            "config" => "config".to_owned(),
            "out" => "run.out".to_owned(),
            "seed" => "run.seed".to_owned(),
            "threads" => "run.threads".to_owned(),
            f => by_flag
                .iter()
                .find(|(fl, _)| fl == f)
                .map(|(_, k)| k.clone())
                .ok_or_else(|| Error::config(format!("--{f}"), "unknown setting"))?,
        };
        map.insert(key, parse_flag_value(&value));
    }
    Ok(map)
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let (name, settings) = match &cli.command {
        Command::Dispersion(s) => ("dispersion", s),
        Command::Phasematch(s) => ("phasematch", s),
        Command::JsaSchmidt(s) => ("jsa-schmidt", s),
        Command::Counting(s) => ("counting", s),
        Command::ReproducePaper(s) => ("reproduce-paper", s),
    };

    let config = (|| -> Result<RunConfig> {
        let mut overrides = parse_settings(&settings.settings)?;
        let mut config_path = cli.config.clone();
        if let Some(Value::String(p)) = overrides.remove("config") {
            config_path = Some(PathBuf::from(p));
        }
        if let Some(o) = &cli.out {
            overrides.insert("run.out".into(), Value::String(o.display().to_string()));
        }
        if let Some(s) = cli.seed {
            overrides.insert("run.seed".into(), Value::from(s));
        }
        if let Some(t) = cli.threads {
            overrides.insert("run.threads".into(), Value::from(t));
        }
        RunConfig::load(config_path.as_deref(), &overrides)
    })();
    let config = match config {
        Ok(c) => c,
        Err(e) => {
            eprintln!("sfwm {name}: {e}");
            return exit_code(&e);
        }
    };

    let pool = match rayon::ThreadPoolBuilder::new().num_threads(config.run_threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("sfwm {name}: cannot start worker threads: {e}");
            return EXIT_USAGE;
        }
    };
    let out = config.run_out.clone();
    let result = pool.install(|| match &cli.command {
        Command::Dispersion(_) => cmd_dispersion(&config, &out),
        Command::Phasematch(_) => cmd_phasematch(&config, &out),
        Command::JsaSchmidt(_) => cmd_jsa_schmidt(&config, &out),
        Command::Counting(_) => cmd_counting(&config, &out),
        Command::ReproducePaper(_) => cmd_reproduce(&config, &out),
    });
    if let Err(e) = write_manifest(&out, name, &config, &result) {
        eprintln!("sfwm {name}: {e}");
        return exit_code(&e);
    }
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            if let Command::ReproducePaper(_) = cli.command {
                if let Ok(text) = std::fs::read_to_string(out.join("summary.txt")) {
                    print!("{text}");
                }
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("sfwm {name}: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_are_kebab_case_of_keys() {
        assert_eq!(flag_for_key("pump.center_nm"), "pump-center-nm");
        let keys = known_keys();
        assert!(keys.contains(&"detectors.idler_efficiency".to_string()));
        let flags: std::collections::HashSet<String> = keys.iter().map(|k| flag_for_key(k)).collect();
        assert_eq!(flags.len(), keys.len(), "flag names must be unique");
    }

    #[test]
    fn overrides_layer_over_defaults() {
        let args: Vec<String> = ["--pump-center-nm", "780", "--tmd-bins=4", "--profile-source", "fixture"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let map = parse_settings(&args).unwrap();
        let cfg = RunConfig::from_map(&map).unwrap();
        assert_eq!(cfg.pump_center_nm, 780.0);
        assert_eq!(cfg.tmd_bins, 4);
        assert_eq!(cfg.grid_signal_points, 512);
    }

    #[test]
    fn unknown_and_ill_typed_keys_are_named() {
        let err = parse_settings(&["--no-such-key".into(), "1".into()]).unwrap_err();
        assert!(err.to_string().contains("no-such-key"));
        let mut map = Map::new();
        map.insert("pump.steps".into(), Value::String("many".into()));
        let err = RunConfig::from_map(&map).unwrap_err();
        assert!(err.to_string().contains("pump.steps"), "{err}");
    }

    #[test]
    fn validation_names_the_key() {
        let cfg = RunConfig {
            pump_range_min_nm: 790.0,
            pump_range_max_nm: 750.0,
            ..RunConfig::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "pump.range_min_nm"));
        assert_eq!(exit_code(&err), EXIT_USAGE);
    }

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn manifest_config_round_trips() {
        let cfg = RunConfig::default();
        let v = serde_json::to_value(&cfg).unwrap();
        let back = RunConfig::from_map(v.as_object().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
