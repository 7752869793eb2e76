//! Physical and protocol constants of the link.

use std::fmt;

/// FWHM of a Gaussian divided by its standard deviation, `2 sqrt(2 ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Polarization states of the four LEDs and the four receiver channels.
///
/// The discriminant doubles as the detector index: detector `d` sits behind a
/// polarizer oriented at `Polarization::from_index(d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarization {
    Deg0 = 0,
    Deg45 = 1,
    Deg90 = 2,
    Deg135 = 3,
}

/// Measurement basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    Rect,
    Diag,
}

impl Polarization {
    pub const ALL: [Polarization; 4] = [
        Polarization::Deg0,
        Polarization::Deg45,
        Polarization::Deg90,
        Polarization::Deg135,
    ];

    pub fn from_index(i: usize) -> Polarization {
        Self::ALL[i & 3]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// 0° and 45° encode 0; 90° and 135° encode 1.
    pub fn bit(self) -> u8 {
        match self {
            Polarization::Deg0 | Polarization::Deg45 => 0,
            Polarization::Deg90 | Polarization::Deg135 => 1,
        }
    }

    pub fn basis(self) -> Basis {
        match self {
            Polarization::Deg0 | Polarization::Deg90 => Basis::Rect,
            Polarization::Deg45 | Polarization::Deg135 => Basis::Diag,
        }
    }

    /// Same basis, opposite bit.
    pub fn orthogonal(self) -> Polarization {
        Self::from_index(self.index() ^ 2)
    }

    pub fn degrees(self) -> u32 {
        45 * self as u32
    }
}

impl Basis {
    pub fn other(self) -> Basis {
        match self {
            Basis::Rect => Basis::Diag,
            Basis::Diag => Basis::Rect,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Basis::Rect => 0,
            Basis::Diag => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Basis> {
        match c {
            0 => Some(Basis::Rect),
            1 => Some(Basis::Diag),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamsError {
    #[error("parameter {name} = {value} out of range: {why}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        why: &'static str,
    },
}

/// All link constants. Rates are per second, times in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// R, pulse repetition rate.
    pub repetition_rate_hz: f64,
    /// M, mean photon number per pulse.
    pub mean_photon_number: f64,
    /// T, lumped channel transmission including geometric loss.
    pub channel_transmission: f64,
    /// η, detection system efficiency per detector.
    pub detection_efficiency: f64,
    /// t, width of the time synchronization gate.
    pub gate_width_s: f64,
    pub pulse_period_s: f64,
    /// Standard deviation of the Gaussian arrival-time spread.
    pub pulse_jitter_rms_s: f64,
    /// B, background counts per second (dark counts included). The error
    /// model reads it as the rate per demultiplexed channel; `add_background`
    /// applies it to every detector as given.
    pub background_rate_cps: f64,
    /// Per-channel bit error rates for 0°, 45°, 90°, 135°.
    pub base_ber_per_channel: [f64; 4],
    /// E_base used by the analytic model; nominally the channel average.
    pub base_error_rate: f64,
    /// n_s, bits subtracted from the final key length.
    pub safety_margin_bits: u32,
    /// Receiver dead time; collisions closer than this on one line are dropped.
    pub dead_time_s: f64,
    /// Linear dilation of Bob's timebase relative to Alice's.
    pub clock_skew_ppm: f64,
    /// Delay of the second detector pair when folded onto two input lines.
    pub demux_delay_s: f64,
    /// Background-only time recorded before Alice starts transmitting.
    pub lead_in_s: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            repetition_rate_hz: 5.0e6,
            mean_photon_number: 0.3,
            channel_transmission: 1.0,
            detection_efficiency: 0.045,
            gate_width_s: 5.0e-9,
            pulse_period_s: 200.0e-9,
            pulse_jitter_rms_s: 2.4e-9 / FWHM_PER_SIGMA,
            background_rate_cps: 0.0,
            base_ber_per_channel: [0.0132, 0.0254, 0.0220, 0.0475],
            base_error_rate: 0.027,
            safety_margin_bits: 100,
            dead_time_s: 0.0,
            clock_skew_ppm: 10.0,
            demux_delay_s: 40.0e-9,
            lead_in_s: 0.05,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        fn bad(name: &'static str, value: f64, why: &'static str) -> Result<(), ParamsError> {
            Err(ParamsError::OutOfRange { name, value, why })
        }
        let p = self;
        if !(p.repetition_rate_hz > 0.0) {
            return bad("repetition_rate_hz", p.repetition_rate_hz, "must be > 0");
        }
        if !(p.mean_photon_number > 0.0) {
            return bad("mean_photon_number", p.mean_photon_number, "must be > 0");
        }
        if !(p.channel_transmission > 0.0 && p.channel_transmission <= 1.0) {
            return bad("channel_transmission", p.channel_transmission, "must be in (0, 1]");
        }
        if !(p.detection_efficiency > 0.0 && p.detection_efficiency <= 1.0) {
            return bad("detection_efficiency", p.detection_efficiency, "must be in (0, 1]");
        }
        if !(p.gate_width_s > 0.0) {
            return bad("gate_width_s", p.gate_width_s, "must be > 0");
        }
        if !(p.pulse_period_s > 0.0) {
            return bad("pulse_period_s", p.pulse_period_s, "must be > 0");
        }
        if p.gate_width_s > p.pulse_period_s {
            return bad("gate_width_s", p.gate_width_s, "must not exceed the pulse period");
        }
        if !(p.background_rate_cps >= 0.0) {
            return bad("background_rate_cps", p.background_rate_cps, "must be >= 0");
        }
        for &ber in &p.base_ber_per_channel {
            if !(0.0..0.5).contains(&ber) {
                return bad("base_ber_per_channel", ber, "each must be in [0, 0.5)");
            }
        }
        if !(0.0..0.5).contains(&p.base_error_rate) {
            return bad("base_error_rate", p.base_error_rate, "must be in [0, 0.5)");
        }
        if !(p.pulse_jitter_rms_s >= 0.0) {
            return bad("pulse_jitter_rms_s", p.pulse_jitter_rms_s, "must be >= 0");
        }
        if !(p.dead_time_s >= 0.0) {
            return bad("dead_time_s", p.dead_time_s, "must be >= 0");
        }
        if !(p.demux_delay_s >= 0.0 && p.demux_delay_s < p.pulse_period_s / 2.0) {
            return bad("demux_delay_s", p.demux_delay_s, "must be in [0, period/2)");
        }
        if !(p.lead_in_s >= 0.0) {
            return bad("lead_in_s", p.lead_in_s, "must be >= 0");
        }
        if !p.clock_skew_ppm.is_finite() || p.clock_skew_ppm.abs() >= 1e4 {
            return bad("clock_skew_ppm", p.clock_skew_ppm, "must be finite and |skew| < 1e4");
        }
        Ok(())
    }

    /// Mean of the four per-channel error rates.
    pub fn mean_channel_ber(&self) -> f64 {
        self.base_ber_per_channel.iter().sum::<f64>() / 4.0
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}°", self.degrees())
    }
}
