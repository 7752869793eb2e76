//! The public classical channel between Alice and Bob.
//!
//! Every protocol message is encoded into a frame, logged, and decoded again
//! on the receiving side. Frame layout (all integers big-endian):
//!
//! ```text
//! +---------+----------------+------------------+
//! | type u8 | length u32     | payload (length) |
//! +---------+----------------+------------------+
//! ```
//!
//! | type | message          | payload                                               |
//! |------|------------------|-------------------------------------------------------|
//! | 0x01 | basis-announce   | count u32, then count × (slot i64, basis u8)          |
//! | 0x02 | match-reply      | count u32, then count × slot i64                      |
//! | 0x03 | subset-reveal    | count u32, count × position u32, packed bits          |
//! | 0x04 | syndrome         | n u32, m u32, graph fingerprint u64, packed m bits    |
//! | 0x05 | pa-seed          | OTP offset u64, input length u32, output length u32   |
//! | 0x06 | align-reveal     | count u32, then count × (slot i64, bit u8, basis u8)  |
//! | 0x07 | align-reply      | offset i64                                            |
//! | 0x08 | hash-check       | 64-bit hash u64                                       |
//!
//! Packed bits are LSB-first within each byte. Basis codes: 0 rectilinear, 1 diagonal.

use crate::bits;
use crate::params::Basis;
use crate::sync::RevealedEvent;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame truncated")]
    Truncated,
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("payload malformed: {0}")]
    Malformed(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    BasisAnnounce(Vec<(i64, Basis)>),
    MatchReply(Vec<i64>),
    SubsetReveal { positions: Vec<u32>, bits: Vec<u8> },
    Syndrome { n: u32, m: u32, graph: u64, bits: Vec<u8> },
    PaSeed { otp_offset: u64, input_len: u32, output_len: u32 },
    AlignReveal(Vec<RevealedEvent>),
    AlignReply(i64),
    HashCheck(u64),
}

impl Message {
    pub fn type_code(&self) -> u8 {
        match self {
            Message::BasisAnnounce(_) => 0x01,
            Message::MatchReply(_) => 0x02,
            Message::SubsetReveal { .. } => 0x03,
            Message::Syndrome { .. } => 0x04,
            Message::PaSeed { .. } => 0x05,
            Message::AlignReveal(_) => 0x06,
            Message::AlignReply(_) => 0x07,
            Message::HashCheck(_) => 0x08,
        }
    }

    fn payload(&self) -> Vec<u8> {
        let mut p = Vec::new();
        match self {
            Message::BasisAnnounce(entries) => {
                p.extend((entries.len() as u32).to_be_bytes());
                for (slot, basis) in entries {
                    p.extend(slot.to_be_bytes());
                    p.push(basis.code());
                }
            }
            Message::MatchReply(slots) => {
                p.extend((slots.len() as u32).to_be_bytes());
                for s in slots {
                    p.extend(s.to_be_bytes());
                }
            }
            Message::SubsetReveal { positions, bits: b } => {
                p.extend((positions.len() as u32).to_be_bytes());
                for pos in positions {
                    p.extend(pos.to_be_bytes());
                }
                p.extend(bits::pack(b));
            }
            Message::Syndrome { n, m, graph, bits: b } => {
                p.extend(n.to_be_bytes());
                p.extend(m.to_be_bytes());
                p.extend(graph.to_be_bytes());
                p.extend(bits::pack(b));
            }
            Message::PaSeed {
                otp_offset,
                input_len,
                output_len,
            } => {
                p.extend(otp_offset.to_be_bytes());
                p.extend(input_len.to_be_bytes());
                p.extend(output_len.to_be_bytes());
            }
            Message::AlignReveal(events) => {
                p.extend((events.len() as u32).to_be_bytes());
                for e in events {
                    p.extend(e.slot.to_be_bytes());
                    p.push(e.bit);
                    p.push(e.basis.code());
                }
            }
            Message::AlignReply(offset) => p.extend(offset.to_be_bytes()),
            Message::HashCheck(h) => p.extend(h.to_be_bytes()),
        }
        p
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload = self.payload();
        let mut frame = Vec::with_capacity(5 + payload.len());
        frame.push(self.type_code());
        frame.extend((payload.len() as u32).to_be_bytes());
        frame.extend(payload);
        frame
    }

    /// Decodes one frame; returns the message and the number of bytes consumed.
    pub fn decode(frame: &[u8]) -> Result<(Message, usize), FrameError> {
        if frame.len() < 5 {
            return Err(FrameError::Truncated);
        }
        let kind = frame[0];
        let len = u32::from_be_bytes(frame[1..5].try_into().unwrap()) as usize;
        let payload = frame.get(5..5 + len).ok_or(FrameError::Truncated)?;
        let mut r = Reader { buf: payload };
        let msg = match kind {
            0x01 => {
                let count = r.u32()? as usize;
                let mut entries = Vec::with_capacity(count.min(payload.len()));
                for _ in 0..count {
                    let slot = r.i64()?;
                    let basis = Basis::from_code(r.u8()?).ok_or(FrameError::Malformed("basis code"))?;
                    entries.push((slot, basis));
                }
                Message::BasisAnnounce(entries)
            }
            0x02 => {
                let count = r.u32()? as usize;
                let mut slots = Vec::with_capacity(count.min(payload.len()));
                for _ in 0..count {
                    slots.push(r.i64()?);
                }
                Message::MatchReply(slots)
            }
            0x03 => {
                let count = r.u32()? as usize;
                let mut positions = Vec::with_capacity(count.min(payload.len()));
                for _ in 0..count {
                    positions.push(r.u32()?);
                }
                let b = bits::unpack(r.take(count.div_ceil(8))?, count).ok_or(FrameError::Truncated)?;
                Message::SubsetReveal { positions, bits: b }
            }
            0x04 => {
                let n = r.u32()?;
                let m = r.u32()?;
                let graph = r.u64()?;
                let b = bits::unpack(r.take((m as usize).div_ceil(8))?, m as usize).ok_or(FrameError::Truncated)?;
                Message::Syndrome { n, m, graph, bits: b }
            }
            0x05 => Message::PaSeed {
                otp_offset: r.u64()?,
                input_len: r.u32()?,
                output_len: r.u32()?,
            },
            0x06 => {
                let count = r.u32()? as usize;
                let mut events = Vec::with_capacity(count.min(payload.len()));
                for _ in 0..count {
                    let slot = r.i64()?;
                    let bit = r.u8()?;
                    let basis = Basis::from_code(r.u8()?).ok_or(FrameError::Malformed("basis code"))?;
                    if bit > 1 {
                        return Err(FrameError::Malformed("bit value"));
                    }
                    events.push(RevealedEvent { slot, bit, basis });
                }
                Message::AlignReveal(events)
            }
            0x07 => Message::AlignReply(r.i64()?),
            0x08 => Message::HashCheck(r.u64()?),
            other => return Err(FrameError::UnknownType(other)),
        };
        if !r.buf.is_empty() {
            return Err(FrameError::Malformed("trailing bytes"));
        }
        Ok((msg, 5 + len))
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FrameError> {
        if self.buf.len() < n {
            return Err(FrameError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8, FrameError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, FrameError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, FrameError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn i64(&mut self) -> Result<i64, FrameError> {
        Ok(i64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    AliceToBob,
    BobToAlice,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggedFrame {
    pub direction: Direction,
    pub frame: Vec<u8>,
}

/// Reliable, ordered, public transport. Everything sent is kept in the log.
#[derive(Debug, Default, Clone)]
pub struct ClassicalChannel {
    log: Vec<LoggedFrame>,
}

impl ClassicalChannel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Frames `msg`, records it, and hands the decoded copy to the receiver.
    pub fn send(&mut self, direction: Direction, msg: &Message) -> Message {
        let frame = msg.encode();
        let (received, used) = Message::decode(&frame).expect("own encoding must decode");
        debug_assert_eq!(used, frame.len());
        self.log.push(LoggedFrame { direction, frame });
        received
    }

    pub fn log(&self) -> &[LoggedFrame] {
        &self.log
    }

    pub fn bytes_sent(&self) -> usize {
        self.log.iter().map(|f| f.frame.len()).sum()
    }
}
