//! One complete key exchange: simulate the link, recover timing, sift,
//! estimate the error, reconcile and compress, with pad bytes drawn from
//! both parties' OTP stores.
//!
//! The background axis value `B` is the rate seen by one demultiplexed
//! channel. Each tagger line carries two detectors, so every detector is
//! simulated with `B / 2` counts per second and the demultiplexed channel
//! ends up with `B`, the quantity that enters `E = E_base + 4Bt/(MTη)`.

use std::fmt::Debug;

use crate::channel::{ClassicalChannel, Direction, Message};
use crate::otp::{BudgetDecision, OtpError, OtpStore, Purpose, SessionCost};
use crate::params::SystemParams;
use crate::photonics::{
    add_background, generate_alice_record, multiplex_two_channel, AliceRecord, Multiplexed, MuxConfig,
};
use crate::privacy::{compress, final_length, secure_fraction, YieldInputs};
use crate::rate_model;
use crate::reconcile::{reconcile_keys, ReconcileConfig};
use crate::seed::Seed;
use crate::sifting::{estimate_error, sift, DEFAULT_SUBSET_FRACTION};
use crate::sync::{choose_revealed, detect_start, lock_clock, reveal, sparse_align, AlignConfig, SyncConfig};

/// Detectors sharing one tagger line.
pub const DETECTORS_PER_LINE: f64 = 2.0;
/// Events Bob reveals for alignment.
pub const ALIGN_REVEAL_COUNT: usize = 200;
/// Offsets scanned on either side of zero during alignment.
pub const ALIGN_SEARCH_RANGE: i64 = 100_000;

/// Per-detector background rate for a background axis value.
pub fn detector_background(axis_b: f64) -> f64 {
    axis_b / DETECTORS_PER_LINE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Budget,
    Simulate,
    DetectStart,
    LockClock,
    Align,
    Sift,
    EstimateError,
    Reconcile,
    Privacy,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Budget => "budget",
            Stage::Simulate => "simulate",
            Stage::DetectStart => "detect_start",
            Stage::LockClock => "lock_clock",
            Stage::Align => "sparse_align",
            Stage::Sift => "sift",
            Stage::EstimateError => "estimate_error",
            Stage::Reconcile => "reconcile",
            Stage::Privacy => "privacy",
        }
    }
}

/// Where and why a run stopped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub stage: Stage,
    /// Error variant name, e.g. `QberAboveThreshold`.
    pub kind: String,
    pub message: String,
}

impl Failure {
    fn new<E: Debug + std::fmt::Display>(stage: Stage, e: E) -> Self {
        let dbg = format!("{e:?}");
        let kind = dbg
            .split(|c: char| !c.is_alphanumeric() && c != '_')
            .next()
            .unwrap_or_default()
            .to_string();
        Failure {
            stage,
            kind,
            message: e.to_string(),
        }
    }
}

/// Outcome of one run. Fields after the failure point keep their defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldReport {
    /// Background axis value (per demultiplexed channel).
    pub background: f64,
    pub gate_ns: f64,
    pub seconds: f64,
    /// Tags Bob kept inside the gate.
    pub gated_events: usize,
    /// Sifted bits per second, before estimation.
    pub sifted_rate: f64,
    pub n_rec: usize,
    pub n_err: usize,
    pub epsilon: f64,
    pub code_rate: f64,
    pub e_ec: f64,
    pub b: f64,
    pub n_fin: usize,
    pub secret_bits_per_s: f64,
    pub keys_match: bool,
    pub otp_remaining: usize,
    pub failure: Option<Failure>,
}

impl YieldReport {
    pub(crate) fn empty(background: f64, gate_s: f64, seconds: f64) -> Self {
        YieldReport {
            background,
            gate_ns: (gate_s * 1e12).round() / 1e3,
            seconds,
            gated_events: 0,
            sifted_rate: 0.0,
            n_rec: 0,
            n_err: 0,
            epsilon: f64::NAN,
            code_rate: f64::NAN,
            e_ec: f64::NAN,
            b: f64::NAN,
            n_fin: 0,
            secret_bits_per_s: 0.0,
            keys_match: false,
            otp_remaining: 0,
            failure: None,
        }
    }

    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

/// Simulated quantum link output: Alice's record and Bob's tag stream.
#[derive(Debug, Clone)]
pub struct LinkRecord {
    pub alice: AliceRecord,
    pub bob: Multiplexed,
    pub seconds: f64,
}

/// Alice's and Bob's pad stores, kept in lockstep.
#[derive(Debug)]
pub struct KeyStores {
    pub alice: OtpStore,
    pub bob: OtpStore,
    pub cost: SessionCost,
    /// Consecutive failed attempts, reset by a success.
    pub failed_runs: u32,
}

impl KeyStores {
    /// Two in-memory stores holding the same `bytes` pad drawn from `seed`.
    pub fn in_memory(bytes: usize, seed: Seed) -> Self {
        let mut rng = seed.rng();
        let mut pad = vec![0u8; bytes];
        rand::RngCore::fill_bytes(&mut rng, &mut pad);
        KeyStores::new(OtpStore::in_memory(pad.clone()), OtpStore::in_memory(pad))
    }

    pub fn new(alice: OtpStore, bob: OtpStore) -> Self {
        KeyStores {
            alice,
            bob,
            cost: SessionCost::default(),
            failed_runs: 0,
        }
    }

    fn take(&mut self, n: usize, purpose: Purpose) -> Result<[u8; 32], OtpError> {
        let a = self.alice.consume(n, purpose)?;
        let b = self.bob.consume(n, purpose)?;
        assert_eq!(a, b, "pad stores out of step");
        let mut seed = [0u8; 32];
        let k = a.len().min(32);
        seed[..k].copy_from_slice(&a[..k]);
        Ok(seed)
    }
}

/// Simulates `seconds` of transmission with the axis background `axis_b`.
/// The result depends only on `params`, `axis_b`, `seconds` and `seed`; the
/// gate width plays no part, so one link can be post-processed at many gates.
pub fn simulate_link(params: &SystemParams, axis_b: f64, seconds: f64, seed: Seed) -> Result<LinkRecord, Failure> {
    let n_pulses = (seconds * params.repetition_rate_hz).round() as usize;
    let alice = generate_alice_record(params, n_pulses, seed.derive("alice"))
        .map_err(|e| Failure::new(Stage::Simulate, e))?;
    let signal = crate::photonics::simulate_detections(&alice, params, seed.derive("detections"))
        .map_err(|e| Failure::new(Stage::Simulate, e))?;
    let duration = alice.end_time_s() + params.lead_in_s;
    let mut bg = params.clone();
    bg.background_rate_cps = detector_background(axis_b);
    let events = add_background(signal, &bg, duration, seed.derive("background"));
    let bob = multiplex_two_channel(&events, &MuxConfig::from_params(params), duration)
        .map_err(|e| Failure::new(Stage::Simulate, e))?;
    Ok(LinkRecord { alice, bob, seconds })
}

/// Runs timing recovery and all post-processing on `link` with the gate
/// width in `params`. Pad bytes for authentication and both seeds are
/// consumed up front, so a failed attempt costs exactly one session.
pub fn process_link(
    link: &LinkRecord,
    params: &SystemParams,
    axis_b: f64,
    stores: &mut KeyStores,
    seed: Seed,
) -> YieldReport {
    let mut report = YieldReport::empty(axis_b, params.gate_width_s, link.seconds);
    let result = run_stages(link, params, stores, seed, &mut report);
    report.otp_remaining = stores.alice.remaining();
    match result {
        Ok(()) => stores.failed_runs = 0,
        Err(f) => {
            if f.stage != Stage::Budget {
                stores.failed_runs += 1;
            }
            report.failure = Some(f);
        }
    }
    report
}

fn run_stages(
    link: &LinkRecord,
    params: &SystemParams,
    stores: &mut KeyStores,
    seed: Seed,
    report: &mut YieldReport,
) -> Result<(), Failure> {
    let cost = stores.cost;
    match stores.alice.session_budget(stores.failed_runs, cost.total()) {
        BudgetDecision::Go => {}
        other => {
            return Err(Failure {
                stage: Stage::Budget,
                kind: format!("{other:?}"),
                message: "session budget refused the attempt".into(),
            })
        }
    }
    let budget = |e| Failure::new(Stage::Budget, e);
    stores.take(cost.auth, Purpose::Auth).map_err(budget)?;
    let fg_seed = Seed::from_bytes(stores.take(cost.fg_seed, Purpose::FgSeed).map_err(budget)?);
    let pa_offset = stores.alice.consumed_offset();
    let pa_seed = Seed::from_bytes(stores.take(cost.pa_seed, Purpose::PaSeed).map_err(budget)?);

    let mut channel = ClassicalChannel::new();
    let sync_cfg = SyncConfig::from_params(params);
    let stream = &link.bob.stream;
    let start = detect_start(stream, &sync_cfg).map_err(|e| Failure::new(Stage::DetectStart, e))?;
    let gated = lock_clock(stream, start, &sync_cfg).map_err(|e| Failure::new(Stage::LockClock, e))?;
    report.gated_events = gated.events.len();

    let picked = choose_revealed(&gated, ALIGN_REVEAL_COUNT, seed.derive("align/reveal"));
    let Message::AlignReveal(revealed) = channel.send(Direction::BobToAlice, &Message::AlignReveal(reveal(&gated, &picked)))
    else {
        unreachable!()
    };
    let alignment = sparse_align(&revealed, &link.alice, 0, ALIGN_SEARCH_RANGE, &AlignConfig::default())
        .map_err(|e| Failure::new(Stage::Align, e))?;
    channel.send(Direction::AliceToBob, &Message::AlignReply(alignment.start_offset_pulses));

    let (alice_key, bob_key) = sift(&gated, &alignment, &link.alice, &mut channel);
    report.n_rec = alice_key.n_rec;
    report.sifted_rate = alice_key.n_rec as f64 / link.seconds;

    let est = estimate_error(
        &alice_key,
        &bob_key,
        DEFAULT_SUBSET_FRACTION,
        seed.derive("estimate"),
        &mut channel,
    )
    .map_err(|e| Failure::new(Stage::EstimateError, e))?;
    report.epsilon = est.epsilon;
    report.n_err = est.n_err;

    let rec = reconcile_keys(
        &est.alice.bits,
        &est.bob.bits,
        est.epsilon,
        est.n_err,
        fg_seed,
        &ReconcileConfig::default(),
        &mut channel,
    )
    .map_err(|e| Failure::new(Stage::Reconcile, e))?;
    report.code_rate = rec.rate;
    report.e_ec = rec.efficiency();

    let inputs = YieldInputs {
        n_rec: report.n_rec as u64,
        n_err: report.n_err as u64,
        epsilon: est.epsilon,
        e_ec: report.e_ec,
        mean_photon_number: params.mean_photon_number,
        channel_transmission: params.channel_transmission,
        safety_margin_bits: u64::from(params.safety_margin_bits),
    };
    report.b = secure_fraction(params.mean_photon_number, params.channel_transmission);
    let n_fin = (final_length(&inputs) as usize).min(rec.alice.len());
    channel.send(
        Direction::AliceToBob,
        &Message::PaSeed {
            otp_offset: pa_offset,
            input_len: rec.alice.len() as u32,
            output_len: n_fin as u32,
        },
    );
    let privacy = |e| Failure::new(Stage::Privacy, e);
    let alice_final = compress(&rec.alice, n_fin, pa_seed).map_err(privacy)?;
    let bob_final = compress(&rec.bob, n_fin, pa_seed).map_err(privacy)?;
    report.n_fin = n_fin;
    report.secret_bits_per_s = n_fin as f64 / link.seconds;
    report.keys_match = alice_final == bob_final;

    let top_up = |e| Failure::new(Stage::Privacy, e);
    stores.alice.top_up(&crate::bits::pack(&alice_final)).map_err(top_up)?;
    stores.bob.top_up(&crate::bits::pack(&bob_final)).map_err(top_up)?;
    Ok(())
}

/// Settings of a single end-to-end run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub params: SystemParams,
    /// Background axis value.
    pub background: f64,
    pub seconds: f64,
    pub seed: Seed,
}

/// Simulates and processes one run. Seeds fan out from `spec.seed` by label.
pub fn run_once(spec: &RunSpec, stores: &mut KeyStores) -> YieldReport {
    let mut params = spec.params.clone();
    params.background_rate_cps = spec.background;
    match simulate_link(&params, spec.background, spec.seconds, spec.seed.derive("link")) {
        Ok(link) => process_link(&link, &params, spec.background, stores, spec.seed.derive("protocol")),
        Err(f) => {
            let mut r = YieldReport::empty(spec.background, params.gate_width_s, spec.seconds);
            r.failure = Some(f);
            r
        }
    }
}

/// Rate-model predictions stored next to each simulated row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Predictions {
    pub sifted_rate: f64,
    /// Predicted error with η = 0.055.
    pub error_low: f64,
    /// Predicted error with η = 0.045.
    pub error_high: f64,
    pub max_background: f64,
}

pub const BAND_ETA_LOW: f64 = 0.045;
pub const BAND_ETA_HIGH: f64 = 0.055;

pub fn predictions(params: &SystemParams, axis_b: f64) -> Predictions {
    let mut p = params.clone();
    p.background_rate_cps = axis_b;
    let r = rate_model::predict(&p);
    Predictions {
        sifted_rate: r.sifted_rate,
        error_low: rate_model::error_rate(&p, axis_b, BAND_ETA_HIGH),
        error_high: rate_model::error_rate(&p, axis_b, BAND_ETA_LOW),
        max_background: r.max_background,
    }
}
