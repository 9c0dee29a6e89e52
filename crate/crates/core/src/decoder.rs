//! Bit-clock recovery and packet decoding from per-frame classifier scores.
//!
//! Decoding a packet takes three steps:
//!
//! 1. **Sync.** The idle-then-start-flag waveform is used as a `±1` template
//!    over the centred score stream `2s - 1`. The stream is averaged over
//!    each bit-sized template segment and each segment's agreement with the
//!    template is saturated at [`SEGMENT_SATURATION`] of the RMS segment
//!    mean; a packet is detected
//!    at the first offset where the mean agreement reaches
//!    [`DecoderConfig::min_correlation`]. Averaging first means a handful of
//!    misclassified frames cannot hide a flag. The packet start is then
//!    placed at the peak of the frame-level matched filter near that offset.
//! 2. **Period.** Frames per bit are refined over a ±5% grid. For each
//!    candidate period the packet is sliced, its bits are decided, and the
//!    stretched idle+packet template built from those decisions is
//!    re-correlated with the stream. The best candidate wins; ties go to the
//!    candidate closest to nominal.
//! 3. **Bits.** Each bit is the mean of the raw scores inside its window,
//!    compared against the threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::FrameScores;
use crate::codec::{decode_packet, LineCodeConfig, Payload, IDLE_LEVEL, PACKET_BITS, START_BITS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error("no start flag found (best correlation {best_correlation:.3})")]
    NoSync { best_correlation: f64 },
    #[error("stream has {len} frames, the start flag template needs {needed}")]
    StreamTooShort { len: usize, needed: usize },
    #[error("bit {bit} has {available} frames, at least {needed:.1} required")]
    Truncated { bit: usize, available: usize, needed: f64 },
    #[error("invalid decoder configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    /// A bit is 1 when its mean score is at least this value.
    pub threshold: f64,
    pub line_code: LineCodeConfig,
    /// Minimum normalized start-flag correlation that counts as a packet.
    pub min_correlation: f64,
    /// Stride of the coarse start-flag scan, in frames.
    pub search_step: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            threshold: 0.5,
            line_code: LineCodeConfig::default(),
            min_correlation: 0.75,
            search_step: 1,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        self.line_code
            .validate()
            .map_err(|e| DecodeError::InvalidConfig(e.to_string()))?;
        let bad = |msg: String| Err(DecodeError::InvalidConfig(msg));
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} is outside (0, 1)", self.threshold));
        }
        if !(self.min_correlation > 0.0 && self.min_correlation <= 1.0) {
            return bad(format!("min_correlation {} is outside (0, 1]", self.min_correlation));
        }
        if self.search_step == 0 {
            return bad("search_step must be at least 1".into());
        }
        Ok(())
    }
}

/// Recovered bit clock of one packet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockEstimate {
    /// First frame of the first start bit.
    pub packet_start: usize,
    pub frames_per_bit: f64,
    /// Normalized start-flag correlation at `packet_start`.
    pub correlation: f64,
}

impl ClockEstimate {
    /// Frame index of the boundary before bit `k`, rounded half up.
    pub fn bit_edge(&self, k: usize) -> usize {
        round_half_up(self.packet_start as f64 + k as f64 * self.frames_per_bit)
    }

    /// One past the last frame of the packet.
    pub fn packet_end(&self) -> usize {
        self.bit_edge(PACKET_BITS)
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitDecision {
    pub value: bool,
    #[serde(rename = "mean")]
    pub mean_score: f64,
    pub confidence: f64,
}

impl BitDecision {
    pub fn from_mean(mean_score: f64, threshold: f64) -> Self {
        BitDecision {
            value: mean_score >= threshold,
            mean_score,
            confidence: (2.0 * mean_score - 1.0).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeStatus {
    Ok,
    FramingError,
    /// The stream ended before the packet was complete.
    LowConfidence,
    NoSync,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeReport {
    pub payload: Option<Payload>,
    /// Twelve decisions, or none when the packet could not be sliced.
    pub bits: Vec<BitDecision>,
    pub clock: Option<ClockEstimate>,
    pub status: DecodeStatus,
}

impl DecodeReport {
    pub fn no_sync() -> Self {
        DecodeReport {
            payload: None,
            bits: Vec::new(),
            clock: None,
            status: DecodeStatus::NoSync,
        }
    }

    pub fn record(&self) -> ReportRecord {
        ReportRecord {
            payload: self.payload.map(Payload::value),
            status: self.status,
            packet_start: self.clock.map(|c| c.packet_start),
            frames_per_bit: self.clock.map(|c| c.frames_per_bit),
            correlation: self.clock.map(|c| c.correlation),
            bits: self.bits.clone(),
        }
    }

    /// One-line JSON form, as written by the `decode` command.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.record()).expect("report serializes")
    }
}

/// Flat serialized form of a [`DecodeReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub payload: Option<u8>,
    pub status: DecodeStatus,
    pub packet_start: Option<usize>,
    pub frames_per_bit: Option<f64>,
    pub correlation: Option<f64>,
    pub bits: Vec<BitDecision>,
}

impl From<ReportRecord> for DecodeReport {
    fn from(r: ReportRecord) -> Self {
        let clock = match (r.packet_start, r.frames_per_bit, r.correlation) {
            (Some(packet_start), Some(frames_per_bit), Some(correlation)) => Some(ClockEstimate {
                packet_start,
                frames_per_bit,
                correlation,
            }),
            _ => None,
        };
        DecodeReport {
            payload: r.payload.map(Payload),
            bits: r.bits,
            clock,
            status: r.status,
        }
    }
}

fn level(bit: bool) -> f64 {
    if bit {
        1.0
    } else {
        -1.0
    }
}

/// Idle frames followed by the start pattern, as `±1` levels.
pub fn start_flag_template(config: &DecoderConfig) -> Vec<f64> {
    let lc = &config.line_code;
    let mut t = vec![level(IDLE_LEVEL); lc.idle_frames];
    for &bit in &lc.start_pattern {
        t.extend(std::iter::repeat_n(level(bit), lc.frames_per_bit));
    }
    t
}

/// Relative half-width of the frames-per-bit refinement grid.
pub const PERIOD_SEARCH_SPAN: f64 = 0.05;
/// Grid points on each side of the nominal period.
pub const PERIOD_SEARCH_STEPS: i32 = 10;

/// Fraction of the RMS segment mean at which a start-flag segment counts as
/// a full match.
pub const SEGMENT_SATURATION: f64 = 0.5;

/// Centred scores `2s - 1` with prefix sums, prepared once per stream.
struct SyncStream {
    values: Vec<f64>,
    sums: Vec<f64>,
    energy: Vec<f64>,
}

impl SyncStream {
    fn new(scores: &[f64]) -> Self {
        let values: Vec<f64> = scores.iter().map(|s| 2.0 * s - 1.0).collect();
        let mut sums = Vec::with_capacity(values.len() + 1);
        let mut energy = Vec::with_capacity(values.len() + 1);
        let (mut s, mut e) = (0.0, 0.0);
        sums.push(s);
        energy.push(e);
        for v in &values {
            s += v;
            e += v * v;
            sums.push(s);
            energy.push(e);
        }
        SyncStream { values, sums, energy }
    }

    fn len(&self) -> usize {
        self.values.len()
    }

    fn sum(&self, lo: usize, hi: usize) -> f64 {
        self.sums[hi] - self.sums[lo]
    }
}

/// A run of constant level inside the start-flag template.
#[derive(Debug, Clone, Copy)]
struct Segment {
    offset: usize,
    len: usize,
    level: f64,
}

/// The start-flag template as bit-sized segments. The idle run is cut into
/// bit periods counted back from the start flag.
struct FlagTemplate {
    segments: Vec<Segment>,
    len: usize,
}

impl FlagTemplate {
    fn new(config: &DecoderConfig) -> Self {
        let lc = &config.line_code;
        let fpb = lc.frames_per_bit;
        let idle = lc.idle_frames;
        let mut segments = Vec::new();
        let head = idle % fpb;
        if head > 0 {
            segments.push(Segment {
                offset: 0,
                len: head,
                level: level(IDLE_LEVEL),
            });
        }
        for k in 0..idle / fpb {
            segments.push(Segment {
                offset: head + k * fpb,
                len: fpb,
                level: level(IDLE_LEVEL),
            });
        }
        for (k, &bit) in lc.start_pattern.iter().enumerate() {
            segments.push(Segment {
                offset: idle + k * fpb,
                len: fpb,
                level: level(bit),
            });
        }
        FlagTemplate {
            segments,
            len: idle + lc.start_pattern.len() * fpb,
        }
    }

    /// Length-weighted mean agreement between the template and the stream
    /// averaged over each segment. Segment means are measured against their
    /// RMS over the window, so the gate does not depend on the score scale; a
    /// segment agrees fully once its mean reaches [`SEGMENT_SATURATION`] of
    /// that RMS on the template's side, and counts against the flag
    /// symmetrically. This is the gate against `min_correlation`.
    fn gate(&self, sync: &SyncStream, offset: usize) -> f64 {
        let means: Vec<f64> = self
            .segments
            .iter()
            .map(|s| {
                let lo = offset + s.offset;
                sync.sum(lo, lo + s.len) / s.len as f64
            })
            .collect();
        let power: f64 = self
            .segments
            .iter()
            .zip(&means)
            .map(|(s, m)| s.len as f64 * m * m)
            .sum::<f64>()
            / self.len as f64;
        if power <= 0.0 {
            return 0.0;
        }
        let full = SEGMENT_SATURATION * power.sqrt();
        let agreement: f64 = self
            .segments
            .iter()
            .zip(&means)
            .map(|(s, m)| s.len as f64 * (s.level * m / full).clamp(-1.0, 1.0))
            .sum();
        agreement / self.len as f64
    }

    /// Frame-level cosine similarity, used to place the flag exactly.
    fn matched(&self, sync: &SyncStream, offset: usize) -> f64 {
        let dot: f64 = self
            .segments
            .iter()
            .map(|s| s.level * sync.sum(offset + s.offset, offset + s.offset + s.len))
            .sum();
        let energy = sync.energy[offset + self.len] - sync.energy[offset];
        if energy <= 0.0 {
            return 0.0;
        }
        dot / ((self.len as f64).sqrt() * energy.sqrt())
    }
}

/// Locates the first start flag whose first start bit is at or after
/// `earliest_start`.
fn sync_from(sync: &SyncStream, earliest_start: usize, config: &DecoderConfig) -> Result<ClockEstimate, DecodeError> {
    let template = FlagTemplate::new(config);
    let idle = config.line_code.idle_frames;
    let fpb = config.line_code.frames_per_bit;
    if sync.len() < template.len {
        return Err(DecodeError::StreamTooShort {
            len: sync.len(),
            needed: template.len,
        });
    }
    let last = sync.len() - template.len;
    let first_offset = earliest_start.saturating_sub(idle);

    let mut best_seen = f64::NEG_INFINITY;
    let mut crossing = None;
    let mut offset = first_offset;
    while offset <= last {
        let c = template.gate(sync, offset);
        best_seen = best_seen.max(c);
        if c >= config.min_correlation {
            crossing = Some(offset);
            break;
        }
        offset += config.search_step;
    }
    let Some(crossing) = crossing else {
        return Err(DecodeError::NoSync {
            best_correlation: if best_seen.is_finite() { best_seen } else { 0.0 },
        });
    };

    // The gate opens up to half a bit early, so look a bit and a half ahead
    // for the matched-filter peak.
    let lo = (crossing + 1).saturating_sub(config.search_step).max(first_offset);
    let hi = (crossing + fpb + fpb / 2).min(last);
    let mut best = (crossing, f64::NEG_INFINITY);
    for o in lo..=hi {
        let c = template.matched(sync, o);
        if c > best.1 {
            best = (o, c);
        }
    }

    let packet_start = best.0 + idle;
    let frames_per_bit = refine_period(sync, packet_start, config);
    Ok(ClockEstimate {
        packet_start,
        frames_per_bit,
        correlation: template.gate(sync, best.0),
    })
}

/// Decision-directed period search over `nominal * (1 ± k * step)`.
fn refine_period(sync: &SyncStream, packet_start: usize, config: &DecoderConfig) -> f64 {
    let nominal = config.line_code.frames_per_bit as f64;
    let step = PERIOD_SEARCH_SPAN / PERIOD_SEARCH_STEPS as f64;
    let candidates: Vec<f64> = std::iter::once(0)
        .chain((1..=PERIOD_SEARCH_STEPS).flat_map(|k| [-k, k]))
        .map(|k| nominal * (1.0 + k as f64 * step))
        .collect();

    // Score every candidate over the same frames, or a short period could
    // win by leaving the stop bit out. Frames past a candidate's packet end
    // are expected to be idle, for at most one idle gap.
    let end_at = |period: f64| round_half_up(packet_start as f64 + PACKET_BITS as f64 * period);
    let shortest = end_at(nominal * (1.0 - PERIOD_SEARCH_SPAN));
    let longest = end_at(nominal * (1.0 + PERIOD_SEARCH_SPAN));
    let span_end = longest
        .min(shortest + config.line_code.idle_frames)
        .min(sync.len());

    let mut best = (nominal, f64::NEG_INFINITY);
    // Candidates come in order of distance from nominal, so ties keep the
    // closer one.
    for period in candidates {
        if let Some(c) = packet_correlation(sync, packet_start, period, span_end, config) {
            if c > best.1 {
                best = (period, c);
            }
        }
    }
    best.0
}

/// Correlation of the stream with the idle+packet+idle template rebuilt from
/// the bits decided at `period`, over frames up to `span_end` or the packet
/// end, whichever is later. `None` when the packet does not fit.
fn packet_correlation(
    sync: &SyncStream,
    packet_start: usize,
    period: f64,
    span_end: usize,
    config: &DecoderConfig,
) -> Option<f64> {
    let begin = packet_start.checked_sub(config.line_code.idle_frames)?;
    let clock = ClockEstimate {
        packet_start,
        frames_per_bit: period,
        correlation: 0.0,
    };
    let packet_end = clock.packet_end();
    if packet_end > sync.len() {
        return None;
    }
    let end = packet_end.max(span_end);
    let threshold = 2.0 * config.threshold - 1.0;
    let idle = level(IDLE_LEVEL);
    let mut dot = idle * (sync.sum(begin, packet_start) + sync.sum(packet_end, end));
    for k in 0..PACKET_BITS {
        let (lo, hi) = (clock.bit_edge(k), clock.bit_edge(k + 1));
        if hi == lo {
            continue;
        }
        let sum = sync.sum(lo, hi);
        dot += level(sum / (hi - lo) as f64 >= threshold) * sum;
    }
    let x_energy = sync.energy[end] - sync.energy[begin];
    if x_energy <= 0.0 {
        return Some(0.0);
    }
    Some(dot / (((end - begin) as f64).sqrt() * x_energy.sqrt()))
}

/// Finds the first packet start flag in the stream.
pub fn recover_clock(scores: &FrameScores, config: &DecoderConfig) -> Result<ClockEstimate, DecodeError> {
    config.validate()?;
    let sync = SyncStream::new(&scores.scores);
    sync_from(&sync, 0, config)
}

/// Averages and thresholds the raw scores inside each of the 12 bit windows.
///
/// Windows may be cut short by the end of the stream, but each needs at least
/// half a bit period of frames.
pub fn estimate_bits(
    scores: &FrameScores,
    clock: &ClockEstimate,
    config: &DecoderConfig,
) -> Result<Vec<BitDecision>, DecodeError> {
    let n = scores.len();
    let needed = clock.frames_per_bit / 2.0;
    (0..PACKET_BITS)
        .map(|k| {
            let lo = clock.bit_edge(k).min(n);
            let hi = clock.bit_edge(k + 1).min(n);
            let window = &scores.scores[lo..hi];
            if (window.len() as f64) < needed || window.is_empty() {
                return Err(DecodeError::Truncated {
                    bit: k,
                    available: window.len(),
                    needed,
                });
            }
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            Ok(BitDecision::from_mean(mean, config.threshold))
        })
        .collect()
}

fn decode_reports(scores: &FrameScores, config: &DecoderConfig, limit: usize) -> Result<Vec<DecodeReport>, DecodeError> {
    config.validate()?;
    let mut reports = Vec::new();
    if scores.is_empty() {
        return Ok(reports);
    }
    let sync = SyncStream::new(&scores.scores);
    let mut earliest = 0;
    // End of the last rejected packet. Retries that fail again inside it are
    // the same garbage seen one bit later and are not reported again.
    let mut rejected_until = 0;
    while reports.len() < limit {
        let Ok(clock) = sync_from(&sync, earliest, config) else {
            break;
        };
        let bits = match estimate_bits(scores, &clock, config) {
            Ok(bits) => bits,
            Err(_) => {
                if clock.packet_start >= rejected_until {
                    reports.push(DecodeReport {
                        payload: None,
                        bits: Vec::new(),
                        clock: Some(clock),
                        status: DecodeStatus::LowConfidence,
                    });
                }
                break;
            }
        };
        let values: Vec<bool> = bits.iter().map(|b| b.value).collect();
        match decode_packet(&values, &config.line_code) {
            Ok(payload) => {
                reports.push(DecodeReport {
                    payload: Some(payload),
                    bits,
                    clock: Some(clock),
                    status: DecodeStatus::Ok,
                });
                // The next start bit is at least an idle gap away. Resuming
                // half a bit short of the gap's middle tolerates a long period
                // estimate, and keeps the last stop bit (which followed by
                // idle looks like a start flag) out of reach.
                let margin = (config.line_code.idle_frames as f64 - clock.frames_per_bit) / 2.0;
                earliest = round_half_up(clock.packet_end() as f64 + margin);
            }
            Err(_) => {
                if clock.packet_start >= rejected_until {
                    reports.push(DecodeReport {
                        payload: None,
                        bits,
                        clock: Some(clock),
                        status: DecodeStatus::FramingError,
                    });
                    rejected_until = clock.packet_end();
                }
                earliest = clock.bit_edge(1);
            }
        }
    }
    Ok(reports)
}

/// Decodes every packet in the stream, in order.
///
/// After a good packet the search resumes inside the following idle gap;
/// after a framing error it resumes one bit period past the rejected start.
/// Failed retries that start inside an already rejected packet produce no
/// further report. Decoding stops when no further start flag is found or the
/// stream ends mid-packet.
pub fn decode_stream(scores: &FrameScores, config: &DecoderConfig) -> Result<Vec<DecodeReport>, DecodeError> {
    decode_reports(scores, config, usize::MAX)
}

/// The first packet of the stream, or a `NoSync` report.
pub fn decode_single(scores: &FrameScores, config: &DecoderConfig) -> Result<DecodeReport, DecodeError> {
    Ok(decode_reports(scores, config, 1)?
        .into_iter()
        .next()
        .unwrap_or_else(DecodeReport::no_sync))
}

/// Start, payload or stop role of bit `k` within a packet.
pub fn bit_role(k: usize) -> BitRole {
    if k < START_BITS {
        BitRole::Start
    } else if k < PACKET_BITS - crate::codec::STOP_BITS {
        BitRole::Payload
    } else {
        BitRole::Stop
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitRole {
    Start,
    Payload,
    Stop,
}
