//! Link layer for LED-blink messaging between drones.
//!
//! A transmitter blinks its LEDs to send 8-bit messages in 12-bit packets;
//! an observer films it and runs a per-frame classifier that estimates the LED
//! state. This crate provides the pieces on both sides of that optical link:
//!
//! - [`codec`]: the self-clocking line code and frame-level waveforms.
//! - [`channel`]: a seeded simulation of the camera and classifier.
//! - [`decoder`]: bit-clock recovery, bit slicing and packet decoding.
//! - [`ecc`]: an optional extended Hamming(8,4) layer inside the payload.
//! - [`metrics`]: ROC/AUC, confusion matrices and link error rates.
//! - [`harness`]: config-driven experiments, sweeps, SVG traces and the CLI.
//!
//! ```
//! use uvclink::channel::{sample_scores, ChannelConfig, ScoreModel};
//! use uvclink::codec::{encode_message_stream, LineCodeConfig, SOS};
//! use uvclink::decoder::{decode_single, DecodeStatus, DecoderConfig};
//!
//! let wave = encode_message_stream(&[SOS], &LineCodeConfig::default()).unwrap();
//! let channel = ChannelConfig {
//!     score_model: ScoreModel::Flip { p: 0.049 },
//!     seed: 1,
//!     ..Default::default()
//! };
//! let scores = sample_scores(&wave, &channel).unwrap();
//! let report = decode_single(&scores, &DecoderConfig::default()).unwrap();
//! assert_eq!(report.status, DecodeStatus::Ok);
//! assert_eq!(report.payload, Some(SOS));
//! ```

pub mod channel;
pub mod codec;
pub mod decoder;
pub mod ecc;
pub mod harness;
pub mod metrics;
