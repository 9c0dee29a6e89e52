//! The 12-bit self-clocking blink line code.
//!
//! A message byte travels as a [`Packet`]: two start bits, eight payload bits
//! and two stop bits. Each bit holds the LED in one state for
//! `frames_per_bit` camera frames, so at the default 30 fps and 12 frames per
//! bit the link runs at 2.5 bit/s and one packet lasts 4.8 s.
//!
//! The idle level is LED off. The default start pattern `[1, 0]` therefore
//! always opens a packet with a rising edge, which is what the receiver locks
//! its bit clock onto.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of bits in one packet.
pub const PACKET_BITS: usize = 12;
/// Number of start bits at the head of a packet.
pub const START_BITS: usize = 2;
/// Number of payload bits.
pub const PAYLOAD_BITS: usize = 8;
/// Number of stop bits at the tail of a packet.
pub const STOP_BITS: usize = 2;

/// LED level between packets.
pub const IDLE_LEVEL: bool = false;

/// Alert payload transmitted by a compromised drone (ASCII `'S'`).
pub const SOS: Payload = Payload(0x53);

/// Which framing field failed validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FramingPosition {
    Start,
    Stop,
}

impl fmt::Display for FramingPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FramingPosition::Start => f.write_str("start"),
            FramingPosition::Stop => f.write_str("stop"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("framing error: {position} bits do not match the configured pattern")]
    Framing { position: FramingPosition },
    #[error("expected {expected} bits, got {got}")]
    Length { expected: usize, got: usize },
    #[error("no payloads to encode")]
    EmptyInput,
    #[error("invalid line code configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed waveform text at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// An 8-bit message payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Payload(pub u8);

impl Payload {
    pub fn value(self) -> u8 {
        self.0
    }

    /// Every payload from `0x00` to `0xFF`, in order.
    pub fn all() -> impl Iterator<Item = Payload> {
        (0..=u8::MAX).map(Payload)
    }
}

impl From<u8> for Payload {
    fn from(v: u8) -> Self {
        Payload(v)
    }
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:02X}", self.0)
    }
}

impl FromStr for Payload {
    type Err = std::num::ParseIntError;

    /// Accepts decimal, `0x` hexadecimal or `0b` binary.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let v = if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
            u8::from_str_radix(hex, 16)?
        } else if let Some(bin) = s.strip_prefix("0b").or_else(|| s.strip_prefix("0B")) {
            u8::from_str_radix(bin, 2)?
        } else {
            s.parse::<u8>()?
        };
        Ok(Payload(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BitOrder {
    #[default]
    MsbFirst,
    LsbFirst,
}

/// Framing and timing parameters of the line code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineCodeConfig {
    pub start_pattern: [bool; START_BITS],
    pub stop_pattern: [bool; STOP_BITS],
    pub bit_order: BitOrder,
    pub frames_per_bit: usize,
    /// Camera frame rate in frames per second.
    pub fps: f64,
    /// LED-off frames before, between and after packets in a message stream.
    pub idle_frames: usize,
}

impl Default for LineCodeConfig {
    fn default() -> Self {
        LineCodeConfig {
            start_pattern: [true, false],
            stop_pattern: [false, true],
            bit_order: BitOrder::MsbFirst,
            frames_per_bit: 12,
            fps: 30.0,
            idle_frames: 24,
        }
    }
}

impl LineCodeConfig {
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.frames_per_bit == 0 {
            return Err(CodecError::InvalidConfig("frames_per_bit must be at least 1".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(CodecError::InvalidConfig("fps must be a positive number".into()));
        }
        // The packet must leave the idle level somewhere inside the start
        // flag, otherwise there is no edge to recover the clock from.
        if self.start_pattern.iter().all(|&b| b == IDLE_LEVEL) {
            return Err(CodecError::InvalidConfig(
                "start_pattern must contain a transition away from the idle level".into(),
            ));
        }
        Ok(())
    }

    /// Bits per second on the optical channel.
    pub fn bit_rate(&self) -> f64 {
        self.fps / self.frames_per_bit as f64
    }

    /// Duration of one bit in seconds.
    pub fn bit_duration(&self) -> f64 {
        self.frames_per_bit as f64 / self.fps
    }

    /// Frames occupied by one packet.
    pub fn packet_frames(&self) -> usize {
        PACKET_BITS * self.frames_per_bit
    }

    /// Duration of one packet in seconds.
    pub fn packet_duration(&self) -> f64 {
        self.packet_frames() as f64 / self.fps
    }
}

/// One 12-bit packet, ordered start, payload, stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Packet {
    bits: [bool; PACKET_BITS],
}

impl Packet {
    pub fn bits(&self) -> &[bool; PACKET_BITS] {
        &self.bits
    }

    pub fn start(&self) -> &[bool] {
        &self.bits[..START_BITS]
    }

    pub fn payload_bits(&self) -> &[bool] {
        &self.bits[START_BITS..START_BITS + PAYLOAD_BITS]
    }

    pub fn stop(&self) -> &[bool] {
        &self.bits[START_BITS + PAYLOAD_BITS..]
    }
}

fn payload_to_bits(payload: Payload, order: BitOrder) -> [bool; PAYLOAD_BITS] {
    let mut out = [false; PAYLOAD_BITS];
    for (i, bit) in out.iter_mut().enumerate() {
        let shift = match order {
            BitOrder::MsbFirst => PAYLOAD_BITS - 1 - i,
            BitOrder::LsbFirst => i,
        };
        *bit = (payload.0 >> shift) & 1 == 1;
    }
    out
}

fn bits_to_payload(bits: &[bool], order: BitOrder) -> Payload {
    let mut v = 0u8;
    for (i, &bit) in bits.iter().enumerate() {
        let shift = match order {
            BitOrder::MsbFirst => PAYLOAD_BITS - 1 - i,
            BitOrder::LsbFirst => i,
        };
        v |= (bit as u8) << shift;
    }
    Payload(v)
}

pub fn encode_packet(payload: Payload, config: &LineCodeConfig) -> Packet {
    let mut bits = [false; PACKET_BITS];
    bits[..START_BITS].copy_from_slice(&config.start_pattern);
    bits[START_BITS..START_BITS + PAYLOAD_BITS]
        .copy_from_slice(&payload_to_bits(payload, config.bit_order));
    bits[START_BITS + PAYLOAD_BITS..].copy_from_slice(&config.stop_pattern);
    Packet { bits }
}

/// Validates framing and extracts the payload from a 12-bit sequence.
pub fn decode_packet(bits: &[bool], config: &LineCodeConfig) -> Result<Payload, CodecError> {
    if bits.len() != PACKET_BITS {
        return Err(CodecError::Length {
            expected: PACKET_BITS,
            got: bits.len(),
        });
    }
    if bits[..START_BITS] != config.start_pattern {
        return Err(CodecError::Framing {
            position: FramingPosition::Start,
        });
    }
    if bits[START_BITS + PAYLOAD_BITS..] != config.stop_pattern {
        return Err(CodecError::Framing {
            position: FramingPosition::Stop,
        });
    }
    Ok(bits_to_payload(
        &bits[START_BITS..START_BITS + PAYLOAD_BITS],
        config.bit_order,
    ))
}

/// Frame-level LED states as seen by an ideal camera.
#[derive(Debug, Clone, PartialEq)]
pub struct LedWaveform {
    pub frames: Vec<bool>,
    pub fps: f64,
}

impl LedWaveform {
    pub fn new(frames: Vec<bool>, fps: f64) -> Self {
        LedWaveform { frames, fps }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }

    /// Serializes to the line format: an `fps=<real>` header, then one `0`
    /// or `1` per frame.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.frames.len() * 2 + 16);
        out.push_str(&format!("fps={}\n", self.fps));
        for &f in &self.frames {
            out.push(if f { '1' } else { '0' });
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CodecError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (line, header) = lines.next().ok_or(CodecError::Parse {
            line: 1,
            reason: "missing fps header".into(),
        })?;
        let fps = header
            .strip_prefix("fps=")
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|v| v.is_finite() && *v > 0.0)
            .ok_or_else(|| CodecError::Parse {
                line,
                reason: format!("expected `fps=<positive real>`, found `{header}`"),
            })?;
        let frames = lines
            .map(|(line, l)| match l {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(CodecError::Parse {
                    line,
                    reason: format!("expected 0 or 1, found `{other}`"),
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LedWaveform { frames, fps })
    }
}

/// Expands each packet bit into `frames_per_bit` identical frames.
pub fn packet_to_waveform(packet: &Packet, config: &LineCodeConfig) -> LedWaveform {
    let frames = packet
        .bits()
        .iter()
        .flat_map(|&b| std::iter::repeat_n(b, config.frames_per_bit))
        .collect();
    LedWaveform::new(frames, config.fps)
}

/// Lays packets out as `idle, packet, idle, packet, ..., idle`.
pub fn encode_message_stream(
    payloads: &[Payload],
    config: &LineCodeConfig,
) -> Result<LedWaveform, CodecError> {
    if payloads.is_empty() {
        return Err(CodecError::EmptyInput);
    }
    config.validate()?;
    let per_packet = config.packet_frames() + config.idle_frames;
    let mut frames = Vec::with_capacity(config.idle_frames + payloads.len() * per_packet);
    frames.extend(std::iter::repeat_n(IDLE_LEVEL, config.idle_frames));
    for &p in payloads {
        let wave = packet_to_waveform(&encode_packet(p, config), config);
        frames.extend_from_slice(&wave.frames);
        frames.extend(std::iter::repeat_n(IDLE_LEVEL, config.idle_frames));
    }
    Ok(LedWaveform::new(frames, config.fps))
}
