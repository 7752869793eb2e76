//! Closed-form link model: sifted signal rate, background per gate, the
//! resulting error rate and the largest tolerable background.
//!
//! ```text
//! S     = R M T η / 4
//! P_b   = B t
//! E     = E_base + 4 B t / (M T η)
//! B_max = M T η / (75.5 t)
//! ```
//!
//! The 75.5 in `B_max` is the rounded value of `4 / (0.08 - 0.027) = 75.47`,
//! i.e. the background at which `E` reaches 0.08 when `E_base = 0.027`.

use std::io::{self, Write};

use crate::params::SystemParams;

/// Error rate up to which reconciliation is taken to work efficiently.
pub const WORKABLE_ERROR: f64 = 0.08;
/// Constant of the background bound as printed.
pub const BACKGROUND_BOUND_CONSTANT: f64 = 75.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePrediction {
    /// Sifted signal counts per second.
    pub sifted_rate: f64,
    /// Background probability per gate per detector.
    pub background_per_gate: f64,
    pub error_rate: f64,
    /// Largest background (per detector) keeping the error rate below 0.08.
    pub max_background: f64,
}

pub fn sifted_rate(p: &SystemParams) -> f64 {
    p.repetition_rate_hz * p.mean_photon_number * p.channel_transmission * p.detection_efficiency / 4.0
}

/// `E_base + 4 B t / (M T η)` with an explicit efficiency.
pub fn error_rate(p: &SystemParams, background_cps: f64, efficiency: f64) -> f64 {
    p.base_error_rate
        + 4.0 * background_cps * p.gate_width_s
            / (p.mean_photon_number * p.channel_transmission * efficiency)
}

pub fn predict(p: &SystemParams) -> RatePrediction {
    let mt_eta = p.mean_photon_number * p.channel_transmission * p.detection_efficiency;
    RatePrediction {
        sifted_rate: sifted_rate(p),
        background_per_gate: p.background_rate_cps * p.gate_width_s,
        error_rate: error_rate(p, p.background_rate_cps, p.detection_efficiency),
        max_background: mt_eta / (BACKGROUND_BOUND_CONSTANT * p.gate_width_s),
    }
}

/// Predicted error rate at two detector efficiencies for each background value.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBand {
    pub background: Vec<f64>,
    pub eta_low: f64,
    pub eta_high: f64,
    /// Error rate with `eta_low` (the upper curve).
    pub upper: Vec<f64>,
    /// Error rate with `eta_high` (the lower curve).
    pub lower: Vec<f64>,
}

impl ErrorBand {
    pub fn contains(&self, index: usize, e: f64, slack: f64) -> bool {
        e >= self.lower[index] - slack && e <= self.upper[index] + slack
    }

    /// Writes `B,E_pred_low,E_pred_high,E_sim` rows; `simulated` may be shorter
    /// than the grid, missing values are left empty.
    pub fn write_csv<W: Write>(&self, mut w: W, simulated: &[f64]) -> io::Result<()> {
        writeln!(w, "B,E_pred_low,E_pred_high,E_sim")?;
        for (i, b) in self.background.iter().enumerate() {
            let sim = simulated.get(i).map(|e| e.to_string()).unwrap_or_default();
            writeln!(w, "{b},{},{},{sim}", self.lower[i], self.upper[i])?;
        }
        Ok(())
    }
}

pub fn error_band(p: &SystemParams, background: &[f64], eta_low: f64, eta_high: f64) -> ErrorBand {
    ErrorBand {
        background: background.to_vec(),
        eta_low,
        eta_high,
        upper: background.iter().map(|&b| error_rate(p, b, eta_low)).collect(),
        lower: background.iter().map(|&b| error_rate(p, b, eta_high)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_point() {
        let p = SystemParams::default();
        let r = predict(&p);
        assert!((r.sifted_rate - 16_875.0).abs() < 1e-9);
        assert_eq!(r.error_rate, 0.027);
        assert_eq!(r.background_per_gate, 0.0);
        assert!((r.max_background - 35_761.589).abs() < 1e-2);
    }

    #[test]
    fn error_at_bound_is_workable_limit() {
        let mut p = SystemParams::default();
        p.background_rate_cps = predict(&p).max_background;
        let e = predict(&p).error_rate;
        // 75.5 vs 75.47: agreement to three significant figures.
        assert!((e - WORKABLE_ERROR).abs() / WORKABLE_ERROR < 5e-4, "{e}");
        assert!((4.0 / (WORKABLE_ERROR - 0.027) - 75.47).abs() < 0.01);
    }

    #[test]
    fn band_shape() {
        let p = SystemParams::default();
        let grid = [0.0, 5e3, 26e3];
        let band = error_band(&p, &grid, 0.045, 0.055);
        assert!((band.upper[2] - 0.065_518_5).abs() < 1e-6);
        assert_eq!(band.upper[0], band.lower[0]);
        for i in 1..grid.len() {
            assert!(band.lower[i] < band.upper[i]);
        }
        let mut out = Vec::new();
        band.write_csv(&mut out, &[0.03]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("B,E_pred_low,E_pred_high,E_sim\n0,0.027,0.027,0.03\n"));
    }
}
