//! Recovering pulse slots from Bob's raw tag stream.
//!
//! There is no timing reference between Alice and Bob. Bob finds the start of
//! the transmission from the jump in tag rate, locks a 200 ns grid onto the
//! tags themselves, keeps only tags inside the time gate, and undoes the
//! two-line multiplexing by phase: tags near the grid are detectors 0/1, tags
//! one demux delay later are detectors 2/3. Finally Alice locates Bob's slot
//! numbering inside her record by correlating a small revealed subset.

use std::io::{self, Write};

use rand::seq::index;

use crate::params::{Basis, Polarization, SystemParams};
use crate::photonics::{ps_to_seconds, AliceRecord, TagStream};
use crate::seed::Seed;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SyncError {
    #[error("no jump in tag rate found; signal too weak against background")]
    NoJumpFound,
    #[error("lost clock lock in drift interval starting at {interval_start_s:.6} s (peak/mean {peak_to_mean:.2})")]
    LockLost {
        interval_start_s: f64,
        peak_to_mean: f64,
    },
    #[error("alignment ambiguous: best score {best:.3}, runner-up {runner_up:.3}")]
    AmbiguousAlignment { best: f64, runner_up: f64 },
    #[error("revealed subset has {got} events, need at least {need}")]
    SubsetTooSmall { got: usize, need: usize },
    #[error("invalid sync configuration: {0}")]
    Config(&'static str),
}

/// Tunables of the synchronization routine.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncConfig {
    pub period_s: f64,
    pub gate_width_s: f64,
    /// Phase and period are re-estimated once per interval.
    pub drift_update_interval_s: f64,
    /// Minimum number of tags on either side of a candidate start.
    pub start_detect_window: usize,
    /// Required ratio of post-start to pre-start tag rate.
    pub start_detect_ratio: f64,
    /// Required log-likelihood gain of the two-rate model over a single rate.
    pub start_detect_min_llr: f64,
    pub demux_delay_s: f64,
    /// Largest clock skew searched during acquisition.
    pub max_skew_ppm: f64,
    /// Length of the first window used to find the grid.
    pub acquisition_window_s: f64,
    /// Tags earlier than `start - start_margin_s` are ignored.
    pub start_margin_s: f64,
    /// Minimum peak/mean ratio of a drift interval's phase histogram.
    pub lock_peak_ratio: f64,
    /// Bin width of the reported residual-phase histogram.
    pub histogram_bin_s: f64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        SyncConfig {
            period_s: 200e-9,
            gate_width_s: 5e-9,
            drift_update_interval_s: 0.1,
            start_detect_window: 256,
            start_detect_ratio: 1.2,
            start_detect_min_llr: 25.0,
            demux_delay_s: 40e-9,
            max_skew_ppm: 50.0,
            acquisition_window_s: 4e-3,
            start_margin_s: 1e-3,
            lock_peak_ratio: 3.0,
            histogram_bin_s: 0.5e-9,
        }
    }
}

impl SyncConfig {
    pub fn from_params(p: &SystemParams) -> Self {
        SyncConfig {
            period_s: p.pulse_period_s,
            gate_width_s: p.gate_width_s,
            demux_delay_s: p.demux_delay_s,
            ..SyncConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), SyncError> {
        if !(self.period_s > 0.0) {
            return Err(SyncError::Config("period must be positive"));
        }
        if !(self.gate_width_s > 0.0) {
            return Err(SyncError::Config("gate width must be positive"));
        }
        if !(self.drift_update_interval_s > 0.0) {
            return Err(SyncError::Config("drift update interval must be positive"));
        }
        if !(self.demux_delay_s >= 0.0 && self.demux_delay_s < self.period_s / 2.0) {
            return Err(SyncError::Config("demux delay must be in [0, period/2)"));
        }
        if self.start_detect_window == 0 {
            return Err(SyncError::Config("start detect window must be positive"));
        }
        if !(self.acquisition_window_s > 0.0 && self.max_skew_ppm >= 0.0) {
            return Err(SyncError::Config("bad acquisition settings"));
        }
        Ok(())
    }
}

/// Finds the transmission start as the most likely change point of a
/// piecewise-constant tag rate.
///
/// Every split leaving at least `start_detect_window` tags on each side (plus
/// the split before the very first tag) is scored by the Poisson
/// log-likelihood of "rate r0 before, r1 after"; only upward steps count, so
/// a quiet tail after the transmission ends is ignored. The best split is accepted
/// if its likelihood gain and its rate ratio both clear the configured
/// thresholds. The pre-start rate uses an add-one estimate so that a short
/// empty lead-in does not count as infinitely strong evidence.
pub fn detect_start(stream: &TagStream, cfg: &SyncConfig) -> Result<f64, SyncError> {
    cfg.validate()?;
    let n = stream.tags.len();
    if n == 0 {
        return Err(SyncError::NoJumpFound);
    }
    let times: Vec<f64> = stream.tags.iter().map(|t| ps_to_seconds(t.time_ps)).collect();
    let end = stream.duration_s.max(times[n - 1] + 1e-12);
    let nf = n as f64;
    let null_ll = nf * (nf / end).ln();

    let ll_split = |i: usize| -> f64 {
        let t = times[i];
        let before = i as f64;
        let after = (n - i) as f64;
        let mut ll = after * (after / (end - t)).ln();
        if i > 0 {
            ll += before * (before / t).ln();
        }
        ll
    };

    let k = cfg.start_detect_window;
    let mut best: Option<(usize, f64)> = None;
    let mut consider = |i: usize| {
        let t = times[i];
        if (i as f64) / t.max(1e-12) >= (n - i) as f64 / (end - t) {
            return;
        }
        let ll = ll_split(i);
        if best.is_none_or(|(_, b)| ll > b) {
            best = Some((i, ll));
        }
    };
    if times[0] > 0.0 && n >= k {
        consider(0);
    }
    if n >= 2 * k {
        for i in k..=(n - k) {
            consider(i);
        }
    }
    let (i, ll) = best.ok_or(SyncError::NoJumpFound)?;
    let t = times[i];
    let rate_before = (i as f64 + 1.0) / t.max(1e-12);
    let rate_after = (n - i) as f64 / (end - t);
    if ll - null_ll < cfg.start_detect_min_llr || rate_after <= cfg.start_detect_ratio * rate_before {
        return Err(SyncError::NoJumpFound);
    }
    Ok(t)
}

/// One gated, demultiplexed detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatedEvent {
    pub slot: i64,
    pub detector: u8,
    /// Index of the source tag in the input stream.
    pub tag_index: usize,
}

impl GatedEvent {
    pub fn polarization(&self) -> Polarization {
        Polarization::from_index(self.detector as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatedEvents {
    /// Sorted by slot, then detector.
    pub events: Vec<GatedEvent>,
    pub recovered_period_s: f64,
    pub histogram_bin_s: f64,
    /// Counts of all processed tags versus phase relative to the recovered grid.
    pub phase_histogram: Vec<u64>,
    pub drift_intervals: usize,
}

impl GatedEvents {
    /// Writes the residual-phase histogram as `phase_ps,count` CSV.
    pub fn write_phase_histogram_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "phase_ps,count")?;
        for (i, c) in self.phase_histogram.iter().enumerate() {
            let phase_ps = (i as f64 * self.histogram_bin_s * 1e12).round() as i64;
            writeln!(w, "{phase_ps},{c}")?;
        }
        Ok(())
    }
}

/// Linear grid: slot `k` is expected at `anchor + (k - anchor_slot) * period`.
#[derive(Debug, Clone, Copy)]
struct Grid {
    anchor: f64,
    anchor_slot: i64,
    period: f64,
}

impl Grid {
    fn slot_near(&self, t: f64) -> i64 {
        self.anchor_slot + ((t - self.anchor) / self.period).round() as i64
    }

    fn time_of(&self, slot: i64) -> f64 {
        self.anchor + (slot - self.anchor_slot) as f64 * self.period
    }

    /// Residual of `t` relative to the nearest grid point, in `[-P/2, P/2]`.
    fn residual(&self, t: f64) -> f64 {
        t - self.time_of(self.slot_near(t))
    }

    fn rebased(&self, t: f64) -> Grid {
        let slot = self.slot_near(t);
        Grid {
            anchor: self.time_of(slot),
            anchor_slot: slot,
            period: self.period,
        }
    }

    /// Chooses the nearer of the direct and delayed peaks for `t`.
    /// Returns `(slot, delayed, |offset from peak centre|)`.
    fn classify(&self, t: f64, delay: f64) -> (i64, bool, f64) {
        let sd = self.slot_near(t);
        let rd = (t - self.time_of(sd)).abs();
        let sx = self.slot_near(t - delay);
        let rx = (t - delay - self.time_of(sx)).abs();
        if rx < rd {
            (sx, true, rx)
        } else {
            (sd, false, rd)
        }
    }
}

/// Least-squares fit of residual = α + β·(t − anchor) over tags near either
/// peak; returns the corrected grid, or the input grid when too few tags.
fn refine(grid: Grid, times: &[f64], window: f64, delay: f64) -> Grid {
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut n = 0.0;
    for &t in times {
        let (slot, delayed, _) = grid.classify(t, delay);
        let r = t - if delayed { delay } else { 0.0 } - grid.time_of(slot);
        if r.abs() > window {
            continue;
        }
        let x = t - grid.anchor;
        sx += x;
        sy += r;
        sxx += x * x;
        sxy += x * r;
        n += 1.0;
    }
    if n < 8.0 {
        return grid;
    }
    let var = n * sxx - sx * sx;
    let (alpha, beta) = if var > 0.0 {
        let beta = (n * sxy - sx * sy) / var;
        ((sy - beta * sx) / n, beta)
    } else {
        (sy / n, 0.0)
    };
    Grid {
        anchor: grid.anchor + alpha,
        anchor_slot: grid.anchor_slot,
        period: grid.period * (1.0 + beta),
    }
}

/// Width used for acquisition, fitting and the lock check: the gate, but no
/// wider than a twentieth of the period so that wide gates still resolve
/// the pulse peaks.
fn timing_window(cfg: &SyncConfig) -> f64 {
    cfg.gate_width_s.min(cfg.period_s / 20.0)
}

/// Coarse search over candidate periods: fold the acquisition window at each
/// period and score the best pair of gate-wide windows one demux delay apart.
fn acquire(times: &[f64], start: f64, cfg: &SyncConfig) -> Option<Grid> {
    let window = cfg.acquisition_window_s;
    let tags: Vec<f64> = times
        .iter()
        .copied()
        .filter(|&t| t >= start && t < start + window)
        .collect();
    if tags.len() < 8 {
        return None;
    }
    let bin = timing_window(cfg) / 4.0;
    let nbins = (cfg.period_s / bin).ceil() as usize;
    let delay_bins = (cfg.demux_delay_s / bin).round() as usize;
    let width_bins = 4usize;
    // Phase walk across the window at one step stays below half a bin.
    let step_ppm = (bin / 2.0) / window * 1e6;
    let steps = (cfg.max_skew_ppm / step_ppm).ceil() as i64;

    let mut hist = vec![0u32; nbins];
    let mut best: Option<(u32, f64, usize)> = None;
    for s in -steps..=steps {
        let period = cfg.period_s * (1.0 + s as f64 * step_ppm * 1e-6);
        let bw = period / nbins as f64;
        hist.iter_mut().for_each(|h| *h = 0);
        for &t in &tags {
            let phase = (t - start).rem_euclid(period);
            let b = ((phase / bw) as usize).min(nbins - 1);
            hist[b] += 1;
        }
        for b in 0..nbins {
            let mut score = 0;
            for j in 0..width_bins {
                score += hist[(b + j) % nbins];
                score += hist[(b + delay_bins + j) % nbins];
            }
            if best.is_none_or(|(bs, _, _)| score > bs) {
                best = Some((score, period, b));
            }
        }
    }
    let (_, period, b) = best?;
    let bw = period / nbins as f64;
    let phase = (b as f64 + width_bins as f64 / 2.0) * bw;
    Some(Grid {
        anchor: start + phase,
        anchor_slot: 0,
        period,
    })
}

/// Locks a pulse grid onto the stream and returns the gated, demultiplexed
/// events.
///
/// Slot 0 is the first grid point at or after `start - start_margin_s`.
/// Drift intervals that fail the lock check are fatal only if lock returns
/// later; a run of failures up to the end of the stream is taken as the end
/// of the transmission and those intervals are dropped.
pub fn lock_clock(stream: &TagStream, start: f64, cfg: &SyncConfig) -> Result<GatedEvents, SyncError> {
    cfg.validate()?;
    let times: Vec<f64> = stream.tags.iter().map(|t| ps_to_seconds(t.time_ps)).collect();
    let begin = (start - cfg.start_margin_s).max(0.0);
    let first = times.partition_point(|&t| t < begin);
    let delay = cfg.demux_delay_s;
    let half_gate = cfg.gate_width_s / 2.0;
    let fit_window = timing_window(cfg);

    let mut grid = acquire(&times[first..], start, cfg).ok_or(SyncError::LockLost {
        interval_start_s: start,
        peak_to_mean: 0.0,
    })?;

    // Progressive refinement: each pass extends the window while the
    // remaining period error keeps the phase walk inside the fit window.
    let mut w = cfg.acquisition_window_s;
    let last_time = times.last().copied().unwrap_or(start);
    loop {
        let hi = times.partition_point(|&t| t < start + w);
        for _ in 0..2 {
            grid = refine(grid, &times[first..hi], fit_window, delay);
        }
        if w >= cfg.drift_update_interval_s || start + w >= last_time {
            break;
        }
        w = (w * 4.0).min(cfg.drift_update_interval_s);
    }

    // Renumber so that slot 0 sits at the first grid point >= begin.
    let k_begin = ((begin - grid.anchor) / grid.period).ceil() as i64;
    grid.anchor_slot -= k_begin;
    grid = grid.rebased(grid.time_of(0));

    let nbins_hist = (cfg.period_s / cfg.histogram_bin_s).ceil() as usize;
    let mut phase_histogram = vec![0u64; nbins_hist];
    let lock_bin = timing_window(cfg) / 4.0;
    let lock_bins = (cfg.period_s / lock_bin).ceil() as usize;
    let mut lock_hist = vec![0u32; lock_bins];

    let mut events: Vec<GatedEvent> = Vec::new();
    let mut anchors: Vec<(f64, f64)> = Vec::new();
    let mut intervals = 0usize;
    let mut block_start = begin;
    let mut idx = first;
    let mut lost: Option<SyncError> = None;
    let mut locked_blocks = 0usize;
    while idx < times.len() {
        let block_end = block_start + cfg.drift_update_interval_s;
        let hi = times.partition_point(|&t| t < block_end).max(idx);
        let block = &times[idx..hi];
        intervals += 1;

        let mut local = grid.rebased(block_start.max(grid.anchor));
        if block.len() >= 32 {
            for _ in 0..2 {
                local = refine(local, block, fit_window, delay);
            }
            lock_hist.iter_mut().for_each(|h| *h = 0);
            for &t in block {
                let phase = grid_phase(&local, t);
                let b = ((phase / local.period * lock_bins as f64) as usize).min(lock_bins - 1);
                lock_hist[b] += 1;
            }
            let peak = *lock_hist.iter().max().unwrap_or(&0) as f64;
            let mean = block.len() as f64 / lock_bins as f64;
            if peak < cfg.lock_peak_ratio * mean {
                lost.get_or_insert(SyncError::LockLost {
                    interval_start_s: block_start,
                    peak_to_mean: peak / mean,
                });
                idx = hi;
                block_start = block_end;
                continue;
            }
            if let Some(e) = lost {
                return Err(e);
            }
            locked_blocks += 1;
        }
        anchors.push((local.anchor_slot as f64, local.anchor));

        for (j, &t) in block.iter().enumerate() {
            let phase = grid_phase(&local, t);
            let hb = ((phase / local.period * nbins_hist as f64) as usize).min(nbins_hist - 1);
            phase_histogram[hb] += 1;

            let (slot, delayed, off) = local.classify(t, delay);
            if off > half_gate || slot < 0 {
                continue;
            }
            let line = stream.tags[idx + j].line & 1;
            events.push(GatedEvent {
                slot,
                detector: line + if delayed { 2 } else { 0 },
                tag_index: idx + j,
            });
        }
        grid = local;
        idx = hi;
        block_start = block_end;
    }

    if locked_blocks == 0 {
        if let Some(e) = lost {
            return Err(e);
        }
    }

    // Keep the first event per (slot, detector).
    events.sort_by_key(|e| (e.slot, e.detector, e.tag_index));
    events.dedup_by_key(|e| (e.slot, e.detector));

    Ok(GatedEvents {
        events,
        recovered_period_s: fit_period(&anchors).unwrap_or(grid.period),
        histogram_bin_s: cfg.histogram_bin_s,
        phase_histogram,
        drift_intervals: intervals,
    })
}

/// Phase of `t` relative to the grid, in `[0, P)`.
fn grid_phase(grid: &Grid, t: f64) -> f64 {
    grid.residual(t).rem_euclid(grid.period)
}

/// Slope of anchor time against slot index.
fn fit_period(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// A detection Bob discloses for alignment: its slot, bit and basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RevealedEvent {
    pub slot: i64,
    pub bit: u8,
    pub basis: Basis,
}

/// Bob's random choice of events to reveal. Returns indices into `gated.events`, sorted.
pub fn choose_revealed(gated: &GatedEvents, count: usize, seed: Seed) -> Vec<usize> {
    let n = gated.events.len();
    let count = count.min(n);
    let mut rng = seed.rng();
    let mut picked = index::sample(&mut rng, n, count).into_vec();
    picked.sort_unstable();
    picked
}

pub fn reveal(gated: &GatedEvents, indices: &[usize]) -> Vec<RevealedEvent> {
    indices
        .iter()
        .map(|&i| {
            let p = gated.events[i].polarization();
            RevealedEvent {
                slot: gated.events[i].slot,
                bit: p.bit(),
                basis: p.basis(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignConfig {
    pub min_subset: usize,
    pub margin: f64,
    /// Offsets with fewer basis-matched revealed events than this are not scored.
    pub min_matched: usize,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            min_subset: 200,
            margin: 0.1,
            min_matched: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    /// Alice's pulse index = Bob's slot + offset.
    pub start_offset_pulses: i64,
    pub match_score: f64,
    pub runner_up_score: f64,
    pub revealed: Vec<RevealedEvent>,
}

/// Alice's side of the sparse correlation: scans offsets in
/// `center ± search_range` and returns the one whose basis-matched revealed
/// bits agree best with her record.
pub fn sparse_align(
    revealed: &[RevealedEvent],
    alice: &AliceRecord,
    center: i64,
    search_range: i64,
    cfg: &AlignConfig,
) -> Result<AlignmentResult, SyncError> {
    if revealed.len() < cfg.min_subset {
        return Err(SyncError::SubsetTooSmall {
            got: revealed.len(),
            need: cfg.min_subset,
        });
    }
    let len = alice.len() as i64;
    let codes: Vec<u8> = alice.states.iter().map(|s| s.index() as u8).collect();
    let lo = center - search_range;
    let width = (2 * search_range + 1) as usize;
    let mut matched = vec![0u32; width];
    let mut agree = vec![0u32; width];
    for ev in revealed {
        let want = ev.bit << 1 | ev.basis.code();
        // Offsets for which slot + offset lands inside the record.
        let first = (-ev.slot - lo).clamp(0, width as i64) as usize;
        let last = (len - ev.slot - lo).clamp(0, width as i64) as usize;
        if first >= last {
            continue;
        }
        let base = (ev.slot + lo + first as i64) as usize;
        let states = &codes[base..base + (last - first)];
        for ((m, a), &st) in matched[first..last]
            .iter_mut()
            .zip(agree[first..last].iter_mut())
            .zip(states)
        {
            *m += u32::from(st & 1 == want & 1);
            *a += u32::from(st == want);
        }
    }
    let mut best = (f64::NEG_INFINITY, 0i64);
    let mut runner_up = f64::NEG_INFINITY;
    for (k, (&m, &a)) in matched.iter().zip(&agree).enumerate() {
        if (m as usize) < cfg.min_matched {
            continue;
        }
        let score = a as f64 / m as f64;
        if score > best.0 {
            runner_up = best.0;
            best = (score, lo + k as i64);
        } else if score > runner_up {
            runner_up = score;
        }
    }
    if best.0 == f64::NEG_INFINITY {
        return Err(SyncError::AmbiguousAlignment {
            best: 0.0,
            runner_up: 0.0,
        });
    }
    let runner_up = runner_up.max(0.0);
    if best.0 - runner_up < cfg.margin {
        return Err(SyncError::AmbiguousAlignment {
            best: best.0,
            runner_up,
        });
    }
    Ok(AlignmentResult {
        start_offset_pulses: best.1,
        match_score: best.0,
        runner_up_score: runner_up,
        revealed: revealed.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonics::Tag;
    use rand::Rng;

    fn stream_from_times(times: &[f64], duration: f64) -> TagStream {
        TagStream {
            tags: times
                .iter()
                .map(|&t| Tag {
                    time_ps: (t * 1e12).round() as i64,
                    line: 0,
                })
                .collect(),
            clock_skew_ppm: 0.0,
            duration_s: duration,
        }
    }

    fn poisson_times(rate: f64, from: f64, to: f64, rng: &mut impl Rng) -> Vec<f64> {
        let mut t = from;
        let mut out = Vec::new();
        loop {
            t += -(1.0 - rng.random::<f64>()).ln() / rate;
            if t >= to {
                return out;
            }
            out.push(t);
        }
    }

    #[test]
    fn start_found_near_rate_jump() {
        let mut rng = Seed::from_u64(1).rng();
        let mut times = poisson_times(1_000.0, 0.0, 1.0, &mut rng);
        times.extend(poisson_times(10_000.0, 0.5, 1.0, &mut rng));
        times.sort_by(f64::total_cmp);
        let s = stream_from_times(&times, 1.0);
        let t0 = detect_start(&s, &SyncConfig::default()).unwrap();
        assert!((0.4..=0.6).contains(&t0), "{t0}");
    }

    #[test]
    fn pure_background_has_no_jump() {
        for seed in 0..5 {
            let mut rng = Seed::from_u64(100 + seed).rng();
            let times = poisson_times(20_000.0, 0.0, 1.0, &mut rng);
            let s = stream_from_times(&times, 1.0);
            assert_eq!(detect_start(&s, &SyncConfig::default()), Err(SyncError::NoJumpFound));
        }
        assert_eq!(
            detect_start(&stream_from_times(&[], 1.0), &SyncConfig::default()),
            Err(SyncError::NoJumpFound)
        );
    }

    #[test]
    fn zero_background_start_is_first_tag() {
        let mut rng = Seed::from_u64(5).rng();
        let times = poisson_times(30_000.0, 0.05, 1.0, &mut rng);
        let s = stream_from_times(&times, 1.0);
        let t0 = detect_start(&s, &SyncConfig::default()).unwrap();
        assert_eq!(t0, ps_to_seconds(s.tags[0].time_ps));
    }

    #[test]
    fn grid_classify_picks_nearer_peak() {
        let g = Grid {
            anchor: 1e-3,
            anchor_slot: 10,
            period: 200e-9,
        };
        let (slot, delayed, _) = g.classify(1e-3 + 3.0 * 200e-9 + 1e-9, 40e-9);
        assert_eq!((slot, delayed), (13, false));
        let (slot, delayed, off) = g.classify(1e-3 + 3.0 * 200e-9 + 41e-9, 40e-9);
        assert_eq!((slot, delayed), (13, true));
        assert!((off - 1e-9).abs() < 1e-15);
        // Just before a grid point but closer to the previous slot's delayed peak.
        let (slot, delayed, _) = g.classify(1e-3 + 3.0 * 200e-9 - 150e-9, 40e-9);
        assert_eq!((slot, delayed), (12, true));
    }

    fn alice(n: usize, seed: u64) -> AliceRecord {
        crate::photonics::generate_alice_record(&SystemParams::default(), n, Seed::from_u64(seed)).unwrap()
    }

    #[test]
    fn align_error_free_at_zero() {
        let a = alice(50_000, 3);
        let revealed: Vec<RevealedEvent> = (0..400)
            .map(|i| {
                let slot = i * 97;
                RevealedEvent {
                    slot,
                    bit: a.bit(slot as usize),
                    basis: a.basis(slot as usize),
                }
            })
            .collect();
        let r = sparse_align(&revealed, &a, 0, 1000, &AlignConfig::default()).unwrap();
        assert_eq!(r.start_offset_pulses, 0);
        assert_eq!(r.match_score, 1.0);
    }

    #[test]
    fn align_too_small_subset() {
        let a = alice(1000, 3);
        let err = sparse_align(&[], &a, 0, 10, &AlignConfig::default()).unwrap_err();
        assert_eq!(err, SyncError::SubsetTooSmall { got: 0, need: 200 });
    }
}
