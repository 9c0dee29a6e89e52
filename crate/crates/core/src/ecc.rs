//! Extended Hamming(8,4) SECDED inside the 8-bit payload.
//!
//! Codeword positions are numbered 1..=8 and stored in byte bit `position - 1`.
//! Parity bits sit at positions 1, 2 and 4, data bits at 3, 5, 6 and 7, and
//! position 8 holds the overall parity.

use serde::{Deserialize, Serialize};

use crate::codec::Payload;

const DATA_POSITIONS: [u8; 4] = [3, 5, 6, 7];
const PARITY_POSITIONS: [u8; 3] = [1, 2, 4];
const OVERALL_POSITION: u8 = 8;

fn bit_at(byte: u8, position: u8) -> bool {
    (byte >> (position - 1)) & 1 == 1
}

fn with_bit(byte: u8, position: u8, value: bool) -> u8 {
    let mask = 1 << (position - 1);
    if value {
        byte | mask
    } else {
        byte & !mask
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EccCodeword(pub u8);

impl From<EccCodeword> for Payload {
    fn from(c: EccCodeword) -> Payload {
        Payload(c.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EccStatus {
    Clean,
    /// `bit_index` is the zero-based byte bit that was flipped back.
    Corrected { bit_index: u8 },
    Uncorrectable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EccResult {
    pub data: Option<u8>,
    #[serde(flatten)]
    pub status: EccStatus,
}

/// Encodes the low nibble of `data`.
///
/// # Panics
///
/// Panics if `data > 15`.
pub fn ecc_encode(data: u8) -> EccCodeword {
    assert!(data < 16, "ecc_encode takes a 4-bit datum, got {data}");
    let mut byte = 0u8;
    for (i, &pos) in DATA_POSITIONS.iter().enumerate() {
        byte = with_bit(byte, pos, (data >> i) & 1 == 1);
    }
    for &p in &PARITY_POSITIONS {
        let parity = (1..=7u8)
            .filter(|&pos| pos != p && pos & p != 0)
            .fold(false, |acc, pos| acc ^ bit_at(byte, pos));
        byte = with_bit(byte, p, parity);
    }
    let overall = (byte & 0x7F).count_ones() % 2 == 1;
    EccCodeword(with_bit(byte, OVERALL_POSITION, overall))
}

fn syndrome(byte: u8) -> u8 {
    (1..=7u8)
        .filter(|&pos| bit_at(byte, pos))
        .fold(0, |acc, pos| acc ^ pos)
}

fn extract(byte: u8) -> u8 {
    DATA_POSITIONS
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &pos)| acc | ((bit_at(byte, pos) as u8) << i))
}

pub fn ecc_decode(byte: u8) -> EccResult {
    let s = syndrome(byte);
    let odd = byte.count_ones() % 2 == 1;
    match (s, odd) {
        (0, false) => EccResult {
            data: Some(extract(byte)),
            status: EccStatus::Clean,
        },
        (0, true) => EccResult {
            data: Some(extract(byte)),
            status: EccStatus::Corrected {
                bit_index: OVERALL_POSITION - 1,
            },
        },
        (s, true) => EccResult {
            data: Some(extract(byte ^ (1 << (s - 1)))),
            status: EccStatus::Corrected { bit_index: s - 1 },
        },
        (_, false) => EccResult {
            data: None,
            status: EccStatus::Uncorrectable,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_codewords() {
        assert_eq!(ecc_encode(0), EccCodeword(0x00));
        assert_eq!(ecc_encode(0b1111), EccCodeword(0xFF));
        // d0 at position 3 is covered by parity 1 and 2, and the overall bit.
        assert_eq!(ecc_encode(0b0001), EccCodeword(0b1000_0111));
    }

    #[test]
    fn round_trip() {
        for d in 0..16 {
            assert_eq!(
                ecc_decode(ecc_encode(d).0),
                EccResult {
                    data: Some(d),
                    status: EccStatus::Clean
                }
            );
        }
    }

    #[test]
    fn linear() {
        for a in 0..16 {
            for b in 0..16 {
                assert_eq!(ecc_encode(a ^ b).0, ecc_encode(a).0 ^ ecc_encode(b).0);
            }
        }
    }

    #[test]
    fn overall_parity_flip() {
        let c = ecc_encode(9).0 ^ 0x80;
        assert_eq!(
            ecc_decode(c),
            EccResult {
                data: Some(9),
                status: EccStatus::Corrected { bit_index: 7 }
            }
        );
    }

    #[test]
    #[should_panic]
    fn rejects_wide_datum() {
        ecc_encode(16);
    }
}
