//! Parameter sweeps over the background rate or the gate width, written as
//! self-describing CSV.
//!
//! Every point runs the full pipeline. The link simulation for a given
//! `(B, repetition)` is seeded by `master.derive("link/B=<B>/rep=<r>")`, so
//! it is identical across gate widths and across both sweep kinds.

use std::io::Write;
use std::str::FromStr;

use crate::params::SystemParams;
use crate::pipeline::{predictions, process_link, simulate_link, KeyStores, Predictions, YieldReport};
use crate::seed::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Background,
    Gate,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Background => "background",
            SweepAxis::Gate => "gate",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "background" => Ok(SweepAxis::Background),
            "gate" | "gate_width" => Ok(SweepAxis::Gate),
            _ => Err(ConfigError::BadValue {
                key: "sweep".into(),
                value: s.into(),
            }),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("unknown key {0}")]
    UnknownKey(String),
    #[error("bad value for {key}: {value}")]
    BadValue { key: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

/// Everything a sweep or a single run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: SystemParams,
    pub axis: SweepAxis,
    /// Background values (background sweep) or gate widths in ns (gate sweep).
    pub values: Vec<f64>,
    /// Background grid of a gate sweep.
    pub backgrounds: Vec<f64>,
    pub seconds: f64,
    pub reps: usize,
    pub seed: Seed,
    /// Pad bytes of the in-memory stores created for each point.
    pub otp_bytes: usize,
}

pub const DEFAULT_BACKGROUNDS: [f64; 6] = [0.0, 5000.0, 10000.0, 15000.0, 20000.0, 26000.0];
pub const DEFAULT_GATES_NS: [f64; 3] = [3.0, 5.0, 7.0];

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: SystemParams::default(),
            axis: SweepAxis::Background,
            values: DEFAULT_BACKGROUNDS.to_vec(),
            backgrounds: (0..=8).map(|i| f64::from(i) * 5000.0).collect(),
            seconds: 1.0,
            reps: 1,
            seed: Seed::from_u64(0),
            otp_bytes: 4096,
        }
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
    })
}

impl RunConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    /// Sets one key; the names match the config file.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let p = &mut self.params;
        let f = |v: &str| parse_num::<f64>(key, v);
        match key {
            "repetition_rate_hz" => p.repetition_rate_hz = f(value)?,
            "mean_photon_number" => p.mean_photon_number = f(value)?,
            "channel_transmission" => p.channel_transmission = f(value)?,
            "detection_efficiency" => p.detection_efficiency = f(value)?,
            "gate_width_s" => p.gate_width_s = f(value)?,
            "pulse_period_s" => p.pulse_period_s = f(value)?,
            "pulse_jitter_rms_s" => p.pulse_jitter_rms_s = f(value)?,
            "background_rate_cps" => p.background_rate_cps = f(value)?,
            "base_ber_per_channel" => {
                let v = parse_list(key, value)?;
                p.base_ber_per_channel = v.try_into().map_err(|_| ConfigError::BadValue {
                    key: key.into(),
                    value: value.into(),
                })?;
            }
            "base_error_rate" => p.base_error_rate = f(value)?,
            "safety_margin_bits" => p.safety_margin_bits = parse_num(key, value)?,
            "dead_time_s" => p.dead_time_s = f(value)?,
            "clock_skew_ppm" => p.clock_skew_ppm = f(value)?,
            "demux_delay_s" => p.demux_delay_s = f(value)?,
            "lead_in_s" => p.lead_in_s = f(value)?,
            "sweep" => self.set_axis(value.parse()?),
            "values" => self.values = parse_list(key, value)?,
            "backgrounds" => self.backgrounds = parse_list(key, value)?,
            "duration" | "duration_s" => self.seconds = f(value)?,
            "reps" | "repetitions" => self.reps = parse_num(key, value)?,
            "seed" => {
                self.seed = Seed::from_hex(value).map_err(|_| ConfigError::BadValue {
                    key: key.into(),
                    value: value.into(),
                })?
            }
            "otp_bytes" => self.otp_bytes = parse_num(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Switches the axis; axis values still at the old axis' defaults move
    /// to the new axis' defaults.
    pub fn set_axis(&mut self, axis: SweepAxis) {
        let default_for = |a: SweepAxis| match a {
            SweepAxis::Background => DEFAULT_BACKGROUNDS.to_vec(),
            SweepAxis::Gate => DEFAULT_GATES_NS.to_vec(),
        };
        if self.values == default_for(self.axis) {
            self.values = default_for(axis);
        }
        self.axis = axis;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let bad = |what: &str| Err(ConfigError::Invalid(what.into()));
        if self.reps == 0 {
            return bad("repetitions must be >= 1");
        }
        if !(self.seconds > 0.0 && self.seconds.is_finite()) {
            return bad("duration must be positive");
        }
        if self.values.is_empty() {
            return bad("no axis values");
        }
        let all = self.values.iter().chain(&self.backgrounds);
        if all.clone().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("axis values must be finite and non-negative");
        }
        if self.axis == SweepAxis::Gate {
            if self.backgrounds.is_empty() {
                return bad("gate sweep needs a background grid");
            }
            let period_ns = self.params.pulse_period_s * 1e9;
            if self.values.iter().any(|&g| g <= 0.0 || g > period_ns) {
                return bad("gate widths must be in (0, pulse period]");
            }
        }
        Ok(())
    }

    fn link_seed(&self, background: f64, rep: usize) -> Seed {
        self.seed.derive(&format!("link/B={background}/rep={rep}"))
    }

    fn protocol_seed(&self, background: f64, rep: usize) -> Seed {
        self.seed.derive(&format!("protocol/B={background}/rep={rep}"))
    }

    fn stores(&self, background: f64, rep: usize) -> KeyStores {
        KeyStores::in_memory(self.otp_bytes, self.seed.derive(&format!("otp/B={background}/rep={rep}")))
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub rep: usize,
    pub params: SystemParams,
    pub predicted: Predictions,
    pub report: YieldReport,
    /// Gate with the highest mean secret rate at this background (gate sweeps).
    pub best_gate_ns: Option<f64>,
}

pub const CSV_HEADER: &[&str] = &[
    "axis",
    "rep",
    "B",
    "gate_ns",
    "seconds",
    "seed",
    "R",
    "M",
    "T",
    "eta",
    "period_ns",
    "jitter_rms_ns",
    "skew_ppm",
    "dead_time_ns",
    "n_s",
    "ber_0",
    "ber_45",
    "ber_90",
    "ber_135",
    "E_base",
    "demux_delay_ns",
    "lead_in_s",
    "B_detector",
    "S_pred",
    "E_pred_low",
    "E_pred_high",
    "B_max",
    "gated_events",
    "sifted_rate",
    "n_rec",
    "n_err",
    "epsilon",
    "code_rate",
    "E_ec",
    "b",
    "n_fin",
    "secret_bits_per_s",
    "keys_match",
    "otp_remaining",
    "status",
    "fail_stage",
    "fail_kind",
    "best_gate_ns",
];

fn num(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        String::new()
    }
}

impl SweepRow {
    pub fn record(&self, master: Seed) -> Vec<String> {
        let p = &self.params;
        let r = &self.report;
        let (status, stage, kind) = match &r.failure {
            None => ("ok", "", ""),
            Some(f) => ("failed", f.stage.name(), f.kind.as_str()),
        };
        vec![
            self.axis.name().into(),
            self.rep.to_string(),
            num(r.background),
            num(r.gate_ns),
            num(r.seconds),
            master.to_hex(),
            num(p.repetition_rate_hz),
            num(p.mean_photon_number),
            num(p.channel_transmission),
            num(p.detection_efficiency),
            num(p.pulse_period_s * 1e9),
            num(p.pulse_jitter_rms_s * 1e9),
            num(p.clock_skew_ppm),
            num(p.dead_time_s * 1e9),
            p.safety_margin_bits.to_string(),
            num(p.base_ber_per_channel[0]),
            num(p.base_ber_per_channel[1]),
            num(p.base_ber_per_channel[2]),
            num(p.base_ber_per_channel[3]),
            num(p.base_error_rate),
            num(p.demux_delay_s * 1e9),
            num(p.lead_in_s),
            num(crate::pipeline::detector_background(r.background)),
            num(self.predicted.sifted_rate),
            num(self.predicted.error_low),
            num(self.predicted.error_high),
            num(self.predicted.max_background),
            r.gated_events.to_string(),
            num(r.sifted_rate),
            r.n_rec.to_string(),
            r.n_err.to_string(),
            num(r.epsilon),
            num(r.code_rate),
            num(r.e_ec),
            num(r.b),
            r.n_fin.to_string(),
            num(r.secret_bits_per_s),
            r.keys_match.to_string(),
            r.otp_remaining.to_string(),
            status.into(),
            stage.into(),
            kind.into(),
            self.best_gate_ns.map(num).unwrap_or_default(),
        ]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("writing output: {0}")]
    Output(#[from] csv::Error),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
}

/// Streams rows to `out` as they complete, so a failure leaves every
/// finished row on disk.
struct RowSink<W: Write> {
    writer: csv::Writer<W>,
    master: Seed,
    rows: Vec<SweepRow>,
}

impl<W: Write> RowSink<W> {
    fn new(out: W, master: Seed) -> Result<Self, SweepError> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(CSV_HEADER)?;
        writer.flush()?;
        Ok(RowSink {
            writer,
            master,
            rows: Vec::new(),
        })
    }

    fn push(&mut self, row: SweepRow) -> Result<(), SweepError> {
        self.writer.write_record(row.record(self.master))?;
        self.writer.flush()?;
        self.rows.push(row);
        Ok(())
    }
}

/// Chooses the pad stores for a point: the shared stores if given, else a
/// fresh pair derived from the master seed.
fn with_stores<T>(
    cfg: &RunConfig,
    shared: &mut Option<&mut KeyStores>,
    b: f64,
    rep: usize,
    f: impl FnOnce(&mut KeyStores) -> T,
) -> T {
    match shared {
        Some(s) => f(s),
        None => f(&mut cfg.stores(b, rep)),
    }
}

fn run_point(cfg: &RunConfig, params: &SystemParams, b: f64, rep: usize, stores: &mut KeyStores) -> YieldReport {
    let mut p = params.clone();
    p.background_rate_cps = b;
    match simulate_link(&p, b, cfg.seconds, cfg.link_seed(b, rep)) {
        Ok(link) => process_link(&link, &p, b, stores, cfg.protocol_seed(b, rep)),
        Err(f) => failed_report(b, &p, cfg.seconds, f),
    }
}

fn failed_report(b: f64, p: &SystemParams, seconds: f64, f: crate::pipeline::Failure) -> YieldReport {
    let mut r = YieldReport::empty(b, p.gate_width_s, seconds);
    r.failure = Some(f);
    r
}

/// One row per `(B, repetition)` at the configured gate.
pub fn sweep_background<W: Write>(
    cfg: &RunConfig,
    mut shared: Option<&mut KeyStores>,
    out: W,
) -> Result<Vec<SweepRow>, SweepError> {
    cfg.validate()?;
    let mut sink = RowSink::new(out, cfg.seed)?;
    for &b in &cfg.values {
        for rep in 0..cfg.reps {
            let report = with_stores(cfg, &mut shared, b, rep, |s| run_point(cfg, &cfg.params, b, rep, s));
            sink.push(SweepRow {
                axis: SweepAxis::Background,
                rep,
                params: cfg.params.clone(),
                predicted: predictions(&cfg.params, b),
                report,
                best_gate_ns: None,
            })?;
        }
    }
    Ok(sink.rows)
}

/// One row per `(B, repetition, gate)`. The same simulated link is processed
/// at every gate width.
pub fn sweep_gate<W: Write>(
    cfg: &RunConfig,
    mut shared: Option<&mut KeyStores>,
    out: W,
) -> Result<Vec<SweepRow>, SweepError> {
    cfg.validate()?;
    let mut sink = RowSink::new(out, cfg.seed)?;
    for &b in &cfg.backgrounds {
        let mut rows = Vec::new();
        for rep in 0..cfg.reps {
            let mut base = cfg.params.clone();
            base.background_rate_cps = b;
            let link = simulate_link(&base, b, cfg.seconds, cfg.link_seed(b, rep));
            for &gate in &cfg.values {
                let mut p = base.clone();
                p.gate_width_s = gate * 1e-9;
                let report = match &link {
                    Ok(link) => with_stores(cfg, &mut shared, b, rep, |s| {
                        process_link(link, &p, b, s, cfg.protocol_seed(b, rep))
                    }),
                    Err(f) => failed_report(b, &p, cfg.seconds, f.clone()),
                };
                rows.push(SweepRow {
                    axis: SweepAxis::Gate,
                    rep,
                    params: p.clone(),
                    predicted: predictions(&p, b),
                    report,
                    best_gate_ns: None,
                });
            }
        }
        let best = best_gate(&rows, &cfg.values);
        for mut row in rows {
            row.best_gate_ns = best;
            sink.push(row)?;
        }
    }
    Ok(sink.rows)
}

/// Gate with the highest mean secret rate over the rows; ties go to the wider gate.
pub fn best_gate(rows: &[SweepRow], gates_ns: &[f64]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &g in gates_ns {
        let rates: Vec<f64> = rows
            .iter()
            .filter(|r| (r.report.gate_ns - g).abs() < 1e-6)
            .map(|r| r.report.secret_bits_per_s)
            .collect();
        if rates.is_empty() {
            continue;
        }
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        let better = match best {
            None => true,
            Some((bg, bm)) => mean > bm || (mean == bm && g > bg),
        };
        if better {
            best = Some((g, mean));
        }
    }
    best.map(|(g, _)| g)
}
