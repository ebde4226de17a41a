//! The canonical fiber used throughout the crate's tests and examples.
//!
//! No coefficient set for the real fiber is available, so the shipped profile
//! is constructed to satisfy the operating-point constraints of the source:
//!
//! * GVD zeros at 747 nm and 1260 nm,
//! * pump (771 nm) and idler (1542 nm) group delays equal,
//! * 771 nm → 514 nm + 1542 nm phase matched with no SPM term,
//! * a fixed signal–pump group-delay walk-off, which sets the signal bandwidth
//!   through the sinc phase-matching function.
//!
//! All four are linear in β₂..β_m, so the coefficients come from an
//! equality-constrained least-squares problem: match a smooth
//! `s·(λ − 747)(1260 − λ)` shape for D(λ) (with free scale `s`) subject to the
//! constraints. `examples/build_test_profile.rs` regenerates the committed
//! JSON and digitized CSV from this module.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::dispersion::{DSample, DispersionProfile};
use crate::error::{Error, Result};
use crate::io;
use crate::spectral::{omega_of, SPEED_OF_LIGHT};

const PROFILE_JSON: &str = include_str!("../fixtures/test_profile.json");
const DIGITIZED_CSV: &str = include_str!("../fixtures/fiber_dispersion.csv");

/// The committed test profile.
pub fn test_profile() -> DispersionProfile {
    DispersionProfile::from_json_str(PROFILE_JSON).expect("committed fixture parses")
}

/// D(λ) samples read off the test profile at 50 nm spacing and rounded to
/// 0.01 ps/(nm·km), standing in for a digitized measurement.
pub fn digitized_d_samples() -> Vec<DSample> {
    io::parse_numeric_csv(DIGITIZED_CSV.as_bytes(), Path::new("fiber_dispersion.csv"), 2)
        .expect("committed fixture parses")
        .into_iter()
        .map(|r| DSample {
            wavelength: r[0],
            d: r[1],
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TestProfileDesign {
    pub pump_nm: f64,
    pub signal_nm: f64,
    pub idler_nm: f64,
    pub zdw_nm: [f64; 2],
    /// β₁(ω_s) − β₁(ω_p), s/m.
    pub signal_walk_off: f64,
    /// β₁(ω_i) − β₁(ω_p), s/m; zero puts group-velocity matching exactly at the pump.
    pub idler_walk_off: f64,
    /// Highest Taylor order of k.
    pub order: usize,
    /// Effective index used for β₀ = n ω₀ / c.
    pub effective_index: f64,
    /// Group index at the pump, β₁ = n_g / c.
    pub group_index: f64,
    pub domain_nm: (f64, f64),
    /// Wavelength window and sample count for the D-shape objective.
    pub shape_window_nm: (f64, f64),
    pub shape_points: usize,
}

impl Default for TestProfileDesign {
    fn default() -> Self {
        Self {
            pump_nm: 771.0,
            signal_nm: 514.0,
            idler_nm: 1542.0,
            zdw_nm: [747.0, 1260.0],
            signal_walk_off: 0.805e-12,
            idler_walk_off: 0.0,
            order: 8,
            effective_index: 1.45,
            group_index: 1.47,
            domain_nm: (450.0, 1800.0),
            shape_window_nm: (480.0, 1750.0),
            shape_points: 300,
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl TestProfileDesign {
    pub fn solve(&self) -> Result<DispersionProfile> {
        if self.order < 4 {
            return Err(Error::Fit("need order ≥ 4 to meet five constraints".into()));
        }
        let w0 = omega_of(self.pump_nm);
        // offsets in units of S keep every column O(1)
        let scale = 1e15;
        let u = |lam: f64| (omega_of(lam) - w0) / scale;
        let ks: Vec<usize> = (2..=self.order).collect();
        let n = ks.len();

        let gvd_row = |x: f64| -> Vec<f64> {
            ks.iter().map(|&k| x.powi(k as i32 - 2) / factorial(k - 2)).collect()
        };
        let delay_row = |x: f64| -> Vec<f64> {
            ks.iter().map(|&k| x.powi(k as i32 - 1) / factorial(k - 1)).collect()
        };
        let (us, ui) = (u(self.signal_nm), u(self.idler_nm));
        let mismatch_row: Vec<f64> = ks
            .iter()
            .map(|&k| (us.powi(k as i32) + ui.powi(k as i32)) / factorial(k))
            .collect();

        let constraints = [
            gvd_row(u(self.zdw_nm[0])),
            gvd_row(u(self.zdw_nm[1])),
            delay_row(ui),
            mismatch_row,
            delay_row(us),
        ];
        let rhs = [0.0, 0.0, self.idler_walk_off * scale, 0.0, self.signal_walk_off * scale];
        let m = constraints.len();

        // objective rows: D(λ_j) − s·T(λ_j), unknowns (v, s)
        let (a, b) = self.shape_window_nm;
        let np = self.shape_points.max(n + 2);
        let mut obj = DMatrix::<f64>::zeros(np, n + 1);
        for j in 0..np {
            let lam = a + (b - a) * j as f64 / (np - 1) as f64;
            let l = lam * 1e-9;
            let d_per_beta2 = -(2.0 * PI * SPEED_OF_LIGHT / (l * l)) / 1e-6 / (scale * scale);
            for (c, val) in gvd_row(u(lam)).into_iter().enumerate() {
                obj[(j, c)] = d_per_beta2 * val;
            }
            obj[(j, n)] = -(lam - self.zdw_nm[0]) * (self.zdw_nm[1] - lam) / 1e4;
        }

        // KKT system [HᵀH Cᵀ; C 0] [v; μ] = [0; d]
        let dim = n + 1 + m;
        let h = obj.transpose() * &obj;
        let mut kkt = DMatrix::<f64>::zeros(dim, dim);
        kkt.view_mut((0, 0), (n + 1, n + 1)).copy_from(&h);
        for (r, row) in constraints.iter().enumerate() {
            for (c, val) in row.iter().enumerate() {
                kkt[(n + 1 + r, c)] = *val;
                kkt[(c, n + 1 + r)] = *val;
            }
        }
        let mut rhs_full = DVector::<f64>::zeros(dim);
        for (r, v) in rhs.iter().enumerate() {
            rhs_full[n + 1 + r] = *v;
        }
        let sol = kkt
            .lu()
            .solve(&rhs_full)
            .ok_or_else(|| Error::Fit("singular KKT system".into()))?;

        let mut beta = vec![
            self.effective_index * w0 / SPEED_OF_LIGHT,
            self.group_index / SPEED_OF_LIGHT,
        ];
        for (i, &k) in ks.iter().enumerate() {
            beta.push(sol[i] / scale.powi(k as i32));
        }
        let profile = DispersionProfile::new(w0, beta, 0.0, self.domain_nm)?;

        let zdws = profile.find_zdws(self.domain_nm)?;
        if zdws.len() != 2 {
            return Err(Error::Fit(format!(
                "constructed profile has {} GVD zeros in the domain: {zdws:?}",
                zdws.len()
            )));
        }
        Ok(profile)
    }

    /// D samples on a regular wavelength grid, rounded like digitized data.
    pub fn digitize(profile: &DispersionProfile, window_nm: (f64, f64), step_nm: f64) -> Result<Vec<DSample>> {
        let mut out = Vec::new();
        let mut lam = window_nm.0;
        while lam <= window_nm.1 + 1e-9 {
            let d = profile.dispersion_parameter(lam)?;
            out.push(DSample {
                wavelength: lam,
                d: (d * 100.0).round() / 100.0,
            });
            lam += step_nm;
        }
        Ok(out)
    }
}
