//! Persistent one-time-pad store.
//!
//! The pad is shared secret material that QKD runs replenish ("top up") and
//! that every session spends: factor-graph seeds, privacy-amplification
//! seeds and authentication. Bytes are handed out strictly in order and each
//! byte at most once; consumed bytes are zeroed in the persisted file.
//!
//! # File format
//!
//! All integers little-endian.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "QOTP"
//! 4       2     version (1)
//! 6       2     reserved, 0
//! 8       8     consumed_offset
//! 16      8     pad_len
//! 24      4     ledger_count
//! 28      4     reserved, 0
//! 32      32·k  ledger entries:
//!                 purpose u8 (1 fg_seed, 2 pa_seed, 3 auth, 4 export)
//!                 reserved [u8; 7]
//!                 offset u64, length u64, unix_time u64
//! ...     p     pad bytes; bytes before consumed_offset are zero
//! ...     32    SHA-256 of everything above
//! ```
//!
//! Every mutation writes the full image to `<path>.tmp`, syncs it and renames
//! it over `<path>`, so a reader sees either the old or the new state. The
//! new offset is on disk before any consumed byte is returned.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

const MAGIC: &[u8; 4] = b"QOTP";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 32;
const ENTRY_LEN: usize = 32;
const TRAILER_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    FgSeed = 1,
    PaSeed = 2,
    Auth = 3,
    Export = 4,
}

impl Purpose {
    fn from_code(c: u8) -> Option<Purpose> {
        match c {
            1 => Some(Purpose::FgSeed),
            2 => Some(Purpose::PaSeed),
            3 => Some(Purpose::Auth),
            4 => Some(Purpose::Export),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Purpose::FgSeed => "fg_seed",
            Purpose::PaSeed => "pa_seed",
            Purpose::Auth => "auth",
            Purpose::Export => "export",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LedgerEntry {
    pub purpose: Purpose,
    pub offset: u64,
    pub length: u64,
    pub unix_time: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum OtpError {
    #[error("pad depleted: requested {requested} bytes, {remaining} remaining")]
    PadDepleted { requested: usize, remaining: usize },
    #[error("storage failure: {0}")]
    StorageFailure(#[from] io::Error),
    #[error("store file corrupt: {0}")]
    Corrupt(&'static str),
}

/// Where a simulated crash interrupts the next persist.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrashPoint {
    BeforeWrite,
    TornTempWrite,
    BeforeRename,
    AfterRename,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetDecision {
    Go,
    /// Not enough pad left for another attempt with the configured reserve.
    NoGoLowPad,
    /// Too many attempts have failed in a row; retry in better conditions.
    NoGoTooManyFailures,
}

/// Pad bytes spent by one QKD session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionCost {
    pub auth: usize,
    pub fg_seed: usize,
    pub pa_seed: usize,
}

impl Default for SessionCost {
    fn default() -> Self {
        SessionCost {
            auth: 32,
            fg_seed: 32,
            pa_seed: 32,
        }
    }
}

impl SessionCost {
    pub fn total(&self) -> usize {
        self.auth + self.fg_seed + self.pa_seed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetPolicy {
    pub reserve_factor: f64,
    pub max_failed_attempts: u32,
}

impl Default for BudgetPolicy {
    fn default() -> Self {
        BudgetPolicy {
            reserve_factor: 2.0,
            max_failed_attempts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct State {
    pad: Vec<u8>,
    consumed: u64,
    ledger: Vec<LedgerEntry>,
}

impl State {
    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + ENTRY_LEN * self.ledger.len() + self.pad.len() + TRAILER_LEN);
        out.extend_from_slice(MAGIC);
        out.extend(VERSION.to_le_bytes());
        out.extend(0u16.to_le_bytes());
        out.extend(self.consumed.to_le_bytes());
        out.extend((self.pad.len() as u64).to_le_bytes());
        out.extend((self.ledger.len() as u32).to_le_bytes());
        out.extend(0u32.to_le_bytes());
        for e in &self.ledger {
            out.push(e.purpose as u8);
            out.extend([0u8; 7]);
            out.extend(e.offset.to_le_bytes());
            out.extend(e.length.to_le_bytes());
            out.extend(e.unix_time.to_le_bytes());
        }
        let consumed = self.consumed as usize;
        out.extend(std::iter::repeat_n(0u8, consumed));
        out.extend_from_slice(&self.pad[consumed..]);
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    fn decode(bytes: &[u8]) -> Result<State, OtpError> {
        let corrupt = OtpError::Corrupt;
        if bytes.len() < HEADER_LEN + TRAILER_LEN {
            return Err(corrupt("truncated"));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - TRAILER_LEN);
        if Sha256::digest(body).as_slice() != trailer {
            return Err(corrupt("checksum mismatch"));
        }
        if &body[0..4] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let u16_at = |o: usize| u16::from_le_bytes(body[o..o + 2].try_into().unwrap());
        let u32_at = |o: usize| u32::from_le_bytes(body[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(body[o..o + 8].try_into().unwrap());
        if u16_at(4) != VERSION {
            return Err(corrupt("unsupported version"));
        }
        let consumed = u64_at(8);
        let pad_len = u64_at(16) as usize;
        let count = u32_at(24) as usize;
        let pad_start = HEADER_LEN + ENTRY_LEN * count;
        if body.len() != pad_start + pad_len || consumed as usize > pad_len {
            return Err(corrupt("length fields inconsistent"));
        }
        let mut ledger = Vec::with_capacity(count);
        for i in 0..count {
            let o = HEADER_LEN + ENTRY_LEN * i;
            let purpose = Purpose::from_code(body[o]).ok_or(corrupt("bad purpose code"))?;
            ledger.push(LedgerEntry {
                purpose,
                offset: u64_at(o + 8),
                length: u64_at(o + 16),
                unix_time: u64_at(o + 24),
            });
        }
        Ok(State {
            pad: body[pad_start..].to_vec(),
            consumed,
            ledger,
        })
    }
}

/// Persistent, append-only one-time pad.
#[derive(Debug)]
pub struct OtpStore {
    state: State,
    path: Option<PathBuf>,
    crash: Option<CrashPoint>,
    policy: BudgetPolicy,
}

impl OtpStore {
    /// Store that lives only in memory; persistence is a no-op.
    pub fn in_memory(pad: Vec<u8>) -> Self {
        OtpStore {
            state: State {
                pad,
                consumed: 0,
                ledger: Vec::new(),
            },
            path: None,
            crash: None,
            policy: BudgetPolicy::default(),
        }
    }

    /// Creates a new store file; fails if it already exists.
    pub fn create(path: impl AsRef<Path>, pad: Vec<u8>) -> Result<Self, OtpError> {
        let path = path.as_ref().to_path_buf();
        if path.exists() {
            return Err(OtpError::StorageFailure(io::Error::new(
                io::ErrorKind::AlreadyExists,
                format!("{} already exists", path.display()),
            )));
        }
        let mut store = Self::in_memory(pad);
        store.path = Some(path);
        let state = store.state.clone();
        store.persist(&state)?;
        Ok(store)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, OtpError> {
        let path = path.as_ref().to_path_buf();
        let mut bytes = Vec::new();
        File::open(&path)?.read_to_end(&mut bytes)?;
        Ok(OtpStore {
            state: State::decode(&bytes)?,
            path: Some(path),
            crash: None,
            policy: BudgetPolicy::default(),
        })
    }

    /// Reads only the header of a store file and returns the unconsumed byte count.
    pub fn read_remaining(path: impl AsRef<Path>) -> Result<usize, OtpError> {
        let mut header = [0u8; HEADER_LEN];
        File::open(path)?.read_exact(&mut header)?;
        if &header[0..4] != MAGIC {
            return Err(OtpError::Corrupt("bad magic"));
        }
        let consumed = u64::from_le_bytes(header[8..16].try_into().unwrap());
        let pad_len = u64::from_le_bytes(header[16..24].try_into().unwrap());
        Ok(pad_len.saturating_sub(consumed) as usize)
    }

    pub fn with_policy(mut self, policy: BudgetPolicy) -> Self {
        self.policy = policy;
        self
    }

    /// Makes the next persist fail at `point`, as if the process died there.
    pub fn inject_crash(&mut self, point: CrashPoint) {
        self.crash = Some(point);
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn remaining(&self) -> usize {
        self.state.pad.len() - self.state.consumed as usize
    }

    pub fn consumed_offset(&self) -> u64 {
        self.state.consumed
    }

    pub fn pad_len(&self) -> usize {
        self.state.pad.len()
    }

    pub fn ledger(&self) -> &[LedgerEntry] {
        &self.state.ledger
    }

    /// Hands out the next `n_bytes` of pad. The advanced offset is persisted
    /// before the bytes are returned; on error nothing is returned.
    pub fn consume(&mut self, n_bytes: usize, purpose: Purpose) -> Result<Vec<u8>, OtpError> {
        let remaining = self.remaining();
        if n_bytes > remaining {
            return Err(OtpError::PadDepleted {
                requested: n_bytes,
                remaining,
            });
        }
        let start = self.state.consumed as usize;
        let bytes = self.state.pad[start..start + n_bytes].to_vec();
        let mut next = self.state.clone();
        next.pad[start..start + n_bytes].fill(0);
        next.consumed += n_bytes as u64;
        next.ledger.push(LedgerEntry {
            purpose,
            offset: start as u64,
            length: n_bytes as u64,
            unix_time: unix_now(),
        });
        self.persist(&next)?;
        self.state = next;
        Ok(bytes)
    }

    /// Appends fresh secret bytes from a verified QKD run.
    pub fn top_up(&mut self, new_secret: &[u8]) -> Result<(), OtpError> {
        let mut next = self.state.clone();
        next.pad.extend_from_slice(new_secret);
        self.persist(&next)?;
        self.state = next;
        Ok(())
    }

    /// Whether another QKD attempt may spend pad bytes on authentication and seeds.
    pub fn session_budget(&self, failed_runs: u32, per_attempt_cost: usize) -> BudgetDecision {
        if failed_runs >= self.policy.max_failed_attempts {
            return BudgetDecision::NoGoTooManyFailures;
        }
        if (self.remaining() as f64) < per_attempt_cost as f64 * self.policy.reserve_factor {
            return BudgetDecision::NoGoLowPad;
        }
        BudgetDecision::Go
    }

    fn persist(&mut self, next: &State) -> Result<(), OtpError> {
        let Some(path) = self.path.clone() else {
            return Ok(());
        };
        let crash = self.crash.take();
        let fail = |p: CrashPoint| -> Result<(), OtpError> {
            if crash == Some(p) {
                Err(OtpError::StorageFailure(io::Error::other(format!("injected crash at {p:?}"))))
            } else {
                Ok(())
            }
        };
        fail(CrashPoint::BeforeWrite)?;
        let image = next.encode();
        let tmp = tmp_path(&path);
        {
            let mut f = OpenOptions::new().write(true).create(true).truncate(true).open(&tmp)?;
            if crash == Some(CrashPoint::TornTempWrite) {
                f.write_all(&image[..image.len() / 2])?;
                fail(CrashPoint::TornTempWrite)?;
            }
            f.write_all(&image)?;
            f.sync_all()?;
        }
        fail(CrashPoint::BeforeRename)?;
        fs::rename(&tmp, &path)?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            // Directory fsync is best-effort; not every platform supports it.
            if let Ok(d) = File::open(dir) {
                let _ = d.sync_all();
            }
        }
        fail(CrashPoint::AfterRename)?;
        Ok(())
    }
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".tmp");
    PathBuf::from(s)
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
