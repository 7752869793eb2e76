//! Monte-Carlo model of the transmitter, the free-space link and the
//! grating receiver.
//!
//! Alice drives one of four LEDs per pulse. Bob's receiver sends each arriving
//! photon to one of four polarizer-covered detectors at random (the grating),
//! so a photon only registers on a same-basis detector a quarter of the time.
//! Detector clicks are timestamped by a two-input card: detectors 2 and 3 are
//! delayed and folded onto the inputs of detectors 0 and 1.

use std::io::{self, BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::params::{Polarization, SystemParams};
use crate::seed::Seed;

pub const PS_PER_S: f64 = 1.0e12;

pub fn seconds_to_ps(t: f64) -> i64 {
    (t * PS_PER_S).round() as i64
}

pub fn ps_to_seconds(t: i64) -> f64 {
    t as f64 / PS_PER_S
}

#[derive(Debug, thiserror::Error)]
pub enum PhotonicsError {
    #[error("a record needs at least one pulse")]
    NoPulses,
    #[error("invalid parameters: {0}")]
    Params(#[from] crate::params::ParamsError),
    #[error("demux delay {delay_s} s must be below half the pulse period {period_s} s")]
    DelayTooLong { delay_s: f64, period_s: f64 },
    #[error("tag stream line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Alice's private transmission log.
#[derive(Debug, Clone, PartialEq)]
pub struct AliceRecord {
    pub states: Vec<Polarization>,
    /// Time of pulse 0 on the true (Alice) clock.
    pub start_time_s: f64,
    pub period_s: f64,
    pub seed: Seed,
}

impl AliceRecord {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn pulse_time(&self, index: usize) -> f64 {
        self.start_time_s + index as f64 * self.period_s
    }

    pub fn end_time_s(&self) -> f64 {
        self.pulse_time(self.states.len())
    }

    pub fn bit(&self, index: usize) -> u8 {
        self.states[index].bit()
    }

    pub fn basis(&self, index: usize) -> crate::params::Basis {
        self.states[index].basis()
    }
}

/// Where a detection came from. Only test oracles may look at this.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Signal { pulse: u64 },
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionEvent {
    pub time_s: f64,
    pub detector: u8,
    pub origin: Origin,
}

/// Uniform random polarization per pulse.
pub fn generate_alice_record(
    params: &SystemParams,
    n_pulses: usize,
    seed: Seed,
) -> Result<AliceRecord, PhotonicsError> {
    if n_pulses == 0 {
        return Err(PhotonicsError::NoPulses);
    }
    let mut rng = seed.rng();
    let mut states = Vec::with_capacity(n_pulses);
    while states.len() < n_pulses {
        let w: u32 = rng.random();
        for j in 0..16 {
            if states.len() == n_pulses {
                break;
            }
            states.push(Polarization::from_index(((w >> (2 * j)) & 3) as usize));
        }
    }
    let start_time_s = params.lead_in_s + rng.random::<f64>() * params.pulse_period_s;
    Ok(AliceRecord {
        states,
        start_time_s,
        period_s: params.pulse_period_s,
        seed,
    })
}

/// Signal detections for every pulse of `record`, in time order.
///
/// Per pulse the photon number is Poisson(M); each photon survives the link
/// and detector with probability T·η and then picks a detector uniformly.
/// On the matching detector it registers with probability `1 - BER_d`, on the
/// orthogonal same-basis detector with probability `BER_d`, and on either
/// conjugate-basis detector with probability 1/2.
pub fn simulate_detections(
    record: &AliceRecord,
    params: &SystemParams,
    seed: Seed,
) -> Result<Vec<DetectionEvent>, PhotonicsError> {
    params.validate()?;
    let mut rng = seed.rng();
    let survive = params.channel_transmission * params.detection_efficiency;
    let photons = Poisson::new(params.mean_photon_number).expect("M > 0 checked by validate");
    let jitter = Normal::new(0.0, params.pulse_jitter_rms_s).expect("jitter >= 0");
    // Most pulses are empty; skip them with a single uniform draw.
    let p_empty = (-params.mean_photon_number).exp();

    let mut events = Vec::new();
    for (pulse, &state) in record.states.iter().enumerate() {
        if rng.random::<f64>() < p_empty {
            continue;
        }
        // Conditioned on at least one photon.
        let n = loop {
            let k = photons.sample(&mut rng) as u64;
            if k > 0 {
                break k;
            }
        };
        for _ in 0..n {
            if rng.random::<f64>() >= survive {
                continue;
            }
            let detector = Polarization::from_index(rng.random_range(0..4usize));
            let ber = params.base_ber_per_channel[detector.index()];
            let u: f64 = rng.random();
            let registers = if detector == state {
                u >= ber
            } else if detector == state.orthogonal() {
                u < ber
            } else {
                u < 0.5
            };
            if registers {
                events.push(DetectionEvent {
                    time_s: record.pulse_time(pulse) + jitter.sample(&mut rng),
                    detector: detector as u8,
                    origin: Origin::Signal {
                        pulse: pulse as u64,
                    },
                });
            }
        }
    }
    events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
    Ok(events)
}

/// Merges a homogeneous Poisson background of rate B per detector over
/// `[0, duration_s)` into `events`.
pub fn add_background(
    events: Vec<DetectionEvent>,
    params: &SystemParams,
    duration_s: f64,
    seed: Seed,
) -> Vec<DetectionEvent> {
    let mean = params.background_rate_cps * duration_s;
    if mean <= 0.0 {
        return events;
    }
    let mut rng = seed.rng();
    let count = Poisson::new(mean).expect("positive mean");
    let mut out = events;
    for detector in 0..4u8 {
        let n = count.sample(&mut rng) as usize;
        out.reserve(n);
        for _ in 0..n {
            out.push(DetectionEvent {
                time_s: rng.random::<f64>() * duration_s,
                detector,
                origin: Origin::Background,
            });
        }
    }
    out.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
    out
}

/// One timestamp from the two-input card.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Tag {
    pub time_ps: i64,
    pub line: u8,
}

/// Ordered detector time tags as seen by Bob's software.
#[derive(Debug, Clone, PartialEq)]
pub struct TagStream {
    pub tags: Vec<Tag>,
    pub clock_skew_ppm: f64,
    pub duration_s: f64,
}

impl TagStream {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Writes `time_ps<TAB>line` per tag.
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        for t in &self.tags {
            writeln!(w, "{}\t{}", t.time_ps, t.line)?;
        }
        Ok(())
    }

    /// Parses the text form, enforcing strictly increasing times and labels in 0..=3.
    pub fn read_text<R: BufRead>(r: R) -> Result<TagStream, PhotonicsError> {
        let mut tags: Vec<Tag> = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: &str| PhotonicsError::Parse {
                line: lineno,
                msg: msg.to_string(),
            };
            let (t, l) = line.split_once('\t').ok_or_else(|| err("expected time_ps<TAB>line"))?;
            let time_ps: i64 = t.trim().parse().map_err(|_| err("bad time"))?;
            let label: u8 = l.trim().parse().map_err(|_| err("bad line label"))?;
            if label > 3 {
                return Err(err("line label outside 0..=3"));
            }
            if let Some(prev) = tags.last() {
                if time_ps <= prev.time_ps {
                    return Err(err("times must be strictly increasing"));
                }
            }
            tags.push(Tag {
                time_ps,
                line: label,
            });
        }
        let duration_s = tags.last().map_or(0.0, |t| ps_to_seconds(t.time_ps));
        Ok(TagStream {
            tags,
            clock_skew_ppm: 0.0,
            duration_s,
        })
    }
}

/// Settings of the timestamping card.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuxConfig {
    pub delay_s: f64,
    pub dead_time_s: f64,
    pub clock_skew_ppm: f64,
    pub pulse_period_s: f64,
}

impl MuxConfig {
    pub fn from_params(p: &SystemParams) -> Self {
        MuxConfig {
            delay_s: p.demux_delay_s,
            dead_time_s: p.dead_time_s,
            clock_skew_ppm: p.clock_skew_ppm,
            pulse_period_s: p.pulse_period_s,
        }
    }
}

/// Ground truth for one emitted tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagTruth {
    pub origin: Origin,
    pub detector: u8,
}

/// Output of [`multiplex_two_channel`]: the protocol-facing stream plus the
/// oracle-only truth labels, index-aligned with `stream.tags`.
#[derive(Debug, Clone)]
pub struct Multiplexed {
    pub stream: TagStream,
    pub truth: Vec<TagTruth>,
    /// Tags dropped because they fell within the dead time of the previous tag on their line.
    pub collisions: usize,
}

/// Folds detectors 2 and 3 onto lines 0 and 1 with an extra delay, applies
/// Bob's clock skew, and quantizes to picoseconds.
pub fn multiplex_two_channel(
    events: &[DetectionEvent],
    cfg: &MuxConfig,
    duration_s: f64,
) -> Result<Multiplexed, PhotonicsError> {
    if !(cfg.delay_s < cfg.pulse_period_s / 2.0) {
        return Err(PhotonicsError::DelayTooLong {
            delay_s: cfg.delay_s,
            period_s: cfg.pulse_period_s,
        });
    }
    let dilation = 1.0 + cfg.clock_skew_ppm * 1e-6;
    let mut raw: Vec<(Tag, TagTruth)> = events
        .iter()
        .map(|e| {
            let delay = if e.detector >= 2 { cfg.delay_s } else { 0.0 };
            let tag = Tag {
                time_ps: seconds_to_ps((e.time_s + delay) * dilation),
                line: e.detector & 1,
            };
            (
                tag,
                TagTruth {
                    origin: e.origin,
                    detector: e.detector,
                },
            )
        })
        .collect();
    raw.sort_by_key(|(t, _)| *t);

    // At least 1 ps so that the output is strictly increasing after quantization.
    let resolution = seconds_to_ps(cfg.dead_time_s).max(1);
    let mut last_on_line = [i64::MIN; 2];
    let mut last_any = i64::MIN;
    let mut collisions = 0;
    let mut tags = Vec::with_capacity(raw.len());
    let mut truth = Vec::with_capacity(raw.len());
    for (tag, tt) in raw {
        let line = tag.line as usize;
        let blocked_line = last_on_line[line] != i64::MIN && tag.time_ps - last_on_line[line] < resolution;
        let same_instant = tag.time_ps == last_any;
        if blocked_line || same_instant {
            collisions += 1;
            continue;
        }
        last_on_line[line] = tag.time_ps;
        last_any = tag.time_ps;
        tags.push(tag);
        truth.push(tt);
    }
    Ok(Multiplexed {
        stream: TagStream {
            tags,
            clock_skew_ppm: cfg.clock_skew_ppm,
            duration_s: duration_s * dilation,
        },
        truth,
        collisions,
    })
}
