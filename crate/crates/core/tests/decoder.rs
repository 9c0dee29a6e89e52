use proptest::prelude::*;
use rayon::prelude::*;

use uvclink::channel::{sample_scores, ChannelConfig, FrameScores, ScoreModel};
use uvclink::codec::{encode_message_stream, LineCodeConfig, Payload, SOS};
use uvclink::decoder::*;
use uvclink::metrics::link_stats;

fn noisy(p: f64, seed: u64) -> ChannelConfig {
    ChannelConfig {
        score_model: ScoreModel::Flip { p },
        seed,
        ..Default::default()
    }
}

fn scores_for(payloads: &[Payload], channel: &ChannelConfig) -> FrameScores {
    let wave = encode_message_stream(payloads, &LineCodeConfig::default()).unwrap();
    sample_scores(&wave, channel).unwrap()
}

fn with_idle_prefix(scores: &FrameScores, k: usize) -> FrameScores {
    let mut s = vec![0.0; k];
    s.extend_from_slice(&scores.scores);
    FrameScores::new(s, scores.fps)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn prepending_idle_shifts_a_clean_packet(p in any::<u8>(), k in 0usize..300) {
        let dec = DecoderConfig::default();
        let scores = scores_for(&[Payload(p)], &noisy(0.0, 0));
        let base = decode_single(&scores, &dec).unwrap();
        let shifted = decode_single(&with_idle_prefix(&scores, k), &dec).unwrap();
        let b = base.clock.unwrap();
        prop_assert_eq!(b.packet_start, 24);
        prop_assert!((b.correlation - 1.0).abs() < 1e-12);
        prop_assert_eq!(shifted.clock.unwrap().packet_start, 24 + k);
        prop_assert_eq!(shifted.clock.unwrap().frames_per_bit, b.frames_per_bit);
        prop_assert_eq!(shifted.bits, base.bits);
        prop_assert_eq!(shifted.payload, Some(Payload(p)));
    }

    #[test]
    fn prepending_idle_shifts_a_noisy_packet(p in any::<u8>(), k in 0usize..300, seed in 0u64..1000) {
        let dec = DecoderConfig::default();
        // The base stream keeps a bit period of extra idle so that its own
        // search is not clipped by the start of the trace.
        let scores = with_idle_prefix(&scores_for(&[Payload(p)], &noisy(0.049, seed)), 12);
        let base = decode_single(&scores, &dec).unwrap();
        let shifted = decode_single(&with_idle_prefix(&scores, k), &dec).unwrap();
        prop_assert_eq!(shifted.status, base.status);
        prop_assert_eq!(shifted.payload, base.payload);
        let (b, s) = (base.clock.unwrap(), shifted.clock.unwrap());
        prop_assert_eq!(s.packet_start, b.packet_start + k);
        prop_assert_eq!(s.frames_per_bit, b.frames_per_bit);
    }

    #[test]
    fn lower_threshold_never_clears_a_bit(p in any::<u8>(), seed in 0u64..1000, t in 0.05f64..0.9, dt in 0.0f64..0.09) {
        let mut scores = scores_for(&[Payload(p)], &ChannelConfig {
            score_model: ScoreModel::Beta { a_on: 3.0, b_on: 1.5 },
            seed,
            ..Default::default()
        });
        // Trailing idle so a late lock still has whole bit windows.
        scores.scores.extend([0.0; 200]);
        let clock = recover_clock(&scores, &DecoderConfig::default());
        prop_assume!(clock.is_ok());
        let clock = clock.unwrap();
        let at = |threshold: f64| {
            estimate_bits(&scores, &clock, &DecoderConfig { threshold, ..Default::default() }).unwrap()
        };
        for (low, high) in at(t).iter().zip(at(t + dt)) {
            prop_assert!(low.value || !high.value);
            prop_assert_eq!(low.mean_score, high.mean_score);
        }
    }

    #[test]
    fn clean_streams_decode_in_order(payloads in prop::collection::vec(any::<u8>(), 1..12)) {
        let payloads: Vec<Payload> = payloads.into_iter().map(Payload).collect();
        let scores = FrameScores::from_waveform(
            &encode_message_stream(&payloads, &LineCodeConfig::default()).unwrap(),
        );
        let reports = decode_stream(&scores, &DecoderConfig::default()).unwrap();
        prop_assert_eq!(reports.len(), payloads.len());
        for (i, (r, p)) in reports.iter().zip(&payloads).enumerate() {
            prop_assert_eq!(r.status, DecodeStatus::Ok);
            prop_assert_eq!(r.payload, Some(*p));
            prop_assert_eq!(r.clock.unwrap().packet_start, 24 + 168 * i);
            prop_assert_eq!(r.clock.unwrap().frames_per_bit, 12.0);
        }
    }
}

#[test]
fn all_payloads_in_one_stream() {
    let payloads: Vec<Payload> = Payload::all().collect();
    let dec = DecoderConfig::default();
    let reports = decode_stream(&scores_for(&payloads, &noisy(0.049, 1)), &dec).unwrap();
    let stats = link_stats(&payloads, &reports, &dec.line_code);
    assert_eq!(stats.messages_ok, 256, "{stats:?}");
    assert_eq!(stats.bit_errors, 0);
}

#[test]
fn packet_failure_rate_at_accuracy_0951() {
    let payloads: Vec<Payload> = Payload::all().collect();
    let dec = DecoderConfig::default();
    let (ok, total) = (100u64..140)
        .into_par_iter()
        .map(|seed| {
            let reports = decode_stream(&scores_for(&payloads, &noisy(0.049, seed)), &dec).unwrap();
            let s = link_stats(&payloads, &reports, &dec.line_code);
            (s.messages_ok, s.messages_total)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    assert_eq!(total, 10_240);
    let failure = 1.0 - ok as f64 / total as f64;
    assert!(failure <= 5e-3, "{failure}");
}

#[test]
fn drifted_clock_is_recovered() {
    for (drift, seed) in [(1.015, 1), (0.985, 2), (1.03, 3), (0.97, 4)] {
        let channel = ChannelConfig { drift, ..noisy(0.02, seed) };
        let r = decode_single(&scores_for(&[Payload(0x96)], &channel), &DecoderConfig::default()).unwrap();
        assert_eq!(r.payload, Some(Payload(0x96)), "drift {drift}");
        let fpb = r.clock.unwrap().frames_per_bit;
        assert!((fpb / 12.0 - drift).abs() < 0.006, "drift {drift}: {fpb}");
    }
}

#[test]
fn repeated_sos() {
    let sent = vec![SOS; 20];
    let reports = decode_stream(&scores_for(&sent, &noisy(0.049, 7)), &DecoderConfig::default()).unwrap();
    assert_eq!(reports.len(), 20);
    assert!(reports.iter().all(|r| r.status == DecodeStatus::Ok && r.payload == Some(SOS)));
}

#[test]
fn idle_only_stream_has_no_sync() {
    let idle = FrameScores::new(vec![0.0; 500], 30.0);
    let dec = DecoderConfig::default();
    assert!(matches!(recover_clock(&idle, &dec), Err(DecodeError::NoSync { .. })));
    assert_eq!(decode_single(&idle, &dec).unwrap(), DecodeReport::no_sync());
    assert!(decode_stream(&idle, &dec).unwrap().is_empty());
    assert!(decode_stream(&FrameScores::new(vec![], 30.0), &dec).unwrap().is_empty());
}

#[test]
fn short_stream_is_reported() {
    let short = FrameScores::new(vec![1.0; 10], 30.0);
    assert!(matches!(
        recover_clock(&short, &DecoderConfig::default()),
        Err(DecodeError::StreamTooShort { .. })
    ));
}

#[test]
fn stream_cut_mid_packet_is_low_confidence() {
    let scores = scores_for(&[Payload(0x53)], &noisy(0.0, 0));
    let cut = FrameScores::new(scores.scores[..24 + 100].to_vec(), 30.0);
    let r = decode_single(&cut, &DecoderConfig::default()).unwrap();
    assert_eq!(r.status, DecodeStatus::LowConfidence);
    assert_eq!(r.payload, None);
    assert!(r.bits.is_empty());
    assert_eq!(r.clock.unwrap().packet_start, 24);
}

#[test]
fn broken_stop_bit_is_a_framing_error() {
    let mut scores = scores_for(&[Payload(0x53)], &noisy(0.0, 0));
    for s in &mut scores.scores[24 + 11 * 12..24 + 12 * 12] {
        *s = 0.0;
    }
    let r = decode_single(&scores, &DecoderConfig::default()).unwrap();
    assert_eq!(r.status, DecodeStatus::FramingError);
    assert_eq!(r.bits.len(), 12);
    assert!(!r.bits[11].value);
}

#[test]
fn bit_decisions() {
    let tie = BitDecision::from_mean(0.5, 0.5);
    assert!(tie.value);
    assert_eq!(tie.confidence, 0.0);
    let low = BitDecision::from_mean(0.1, 0.5);
    assert!(!low.value);
    assert!((low.confidence - 0.8).abs() < 1e-12);
}

#[test]
fn bit_roles() {
    let roles: Vec<BitRole> = (0..12).map(bit_role).collect();
    assert_eq!(roles.iter().filter(|&&r| r == BitRole::Start).count(), 2);
    assert_eq!(roles.iter().filter(|&&r| r == BitRole::Payload).count(), 8);
    assert_eq!(roles.iter().filter(|&&r| r == BitRole::Stop).count(), 2);
    assert_eq!(roles[0], BitRole::Start);
    assert_eq!(roles[11], BitRole::Stop);
}

#[test]
fn template_is_idle_then_start_flag() {
    let t = start_flag_template(&DecoderConfig::default());
    assert_eq!(t.len(), 24 + 24);
    assert!(t[..24].iter().all(|&v| v == -1.0));
    assert!(t[24..36].iter().all(|&v| v == 1.0));
    assert!(t[36..].iter().all(|&v| v == -1.0));
}

#[test]
fn invalid_configs() {
    let scores = FrameScores::new(vec![0.0; 100], 30.0);
    for bad in [
        DecoderConfig { threshold: 0.0, ..Default::default() },
        DecoderConfig { threshold: 1.0, ..Default::default() },
        DecoderConfig { min_correlation: 0.0, ..Default::default() },
        DecoderConfig { min_correlation: 1.5, ..Default::default() },
        DecoderConfig { search_step: 0, ..Default::default() },
    ] {
        assert!(matches!(decode_stream(&scores, &bad), Err(DecodeError::InvalidConfig(_))));
    }
}

#[test]
fn report_json_round_trip() {
    let scores = scores_for(&[Payload(0x42)], &noisy(0.049, 3));
    let r = decode_single(&scores, &DecoderConfig::default()).unwrap();
    let record: ReportRecord = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(DecodeReport::from(record), r);
    let none: ReportRecord = serde_json::from_str(&DecodeReport::no_sync().to_json()).unwrap();
    assert_eq!(DecodeReport::from(none), DecodeReport::no_sync());
}
