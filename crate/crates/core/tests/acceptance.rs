//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::beta::beta_reg;

use uvclink::channel::{calibrate_score_model, sample_scores, ChannelConfig, ScoreModel};
use uvclink::codec::{encode_message_stream, LineCodeConfig, Payload};
use uvclink::decoder::{decode_single, decode_stream, DecodeStatus, DecoderConfig};
use uvclink::ecc::{ecc_decode, ecc_encode, EccStatus};
use uvclink::harness::{run_experiment, ExperimentConfig, REPORTS_FILE, STATS_FILE};
use uvclink::metrics::roc_auc;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn clean_channel(lead_offset: usize, drift: f64) -> ChannelConfig {
    ChannelConfig {
        score_model: ScoreModel::Flip { p: 0.0 },
        drift,
        lead_offset,
        ..Default::default()
    }
}

fn round_trip() -> Outcome {
    let lc = LineCodeConfig::default();
    let dec = DecoderConfig::default();
    let start = Instant::now();
    let failures: usize = (0..=255u8)
        .into_par_iter()
        .map(|p| {
            let wave = encode_message_stream(&[Payload(p)], &lc).unwrap();
            (0..144)
                .filter(|&lead| {
                    let scores = sample_scores(&wave, &clean_channel(lead, 1.0)).unwrap();
                    let r = decode_single(&scores, &dec).unwrap();
                    !(r.status == DecodeStatus::Ok && r.payload == Some(Payload(p)))
                })
                .count()
        })
        .sum();
    let elapsed = start.elapsed();
    check(
        failures == 0 && elapsed < Duration::from_secs(10),
        format!("{} of 36864 payload x offset cases failed, {elapsed:.2?} (limit 10 s)", failures),
    )
}

/// `P(Bin(n, p) >= k)` by summing the probability mass directly.
fn binomial_tail(n: u64, p: f64, k: u64) -> f64 {
    let choose = |n: u64, r: u64| (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    (k..=n)
        .map(|j| choose(n, j) * p.powi(j as i32) * (1.0 - p).powi((n - j) as i32))
        .sum()
}

fn noisy_range_experiment() -> Outcome {
    let p = 1.0 - 0.951;
    let tail = binomial_tail(12, p, 6);
    // Same tail through the regularized incomplete beta identity.
    let tail_beta = beta_reg(6.0, 7.0, p);
    let per_packet = 1.0 - (1.0 - tail).powi(12);
    if (tail - tail_beta).abs() > 1e-15 || per_packet > 1.6e-4 {
        return Err(format!("binomial oracle disagrees: sum {tail:e}, beta {tail_beta:e}"));
    }

    let mut cfg = ExperimentConfig::load(Some(&config_path("range256.json")), &[]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    cfg.output_dir = dir.path().to_path_buf();
    let start = Instant::now();
    let outcome = run_experiment(&cfg).unwrap();
    let elapsed = start.elapsed();
    let s = &outcome.stats;
    check(
        cfg.trials >= 40
            && s.messages_total >= 10_240
            && s.message_success_rate >= 0.995
            && elapsed < Duration::from_secs(60),
        format!(
            "success {}/{} = {:.5}, ber {:.2e}, {} trials, {elapsed:.2?}; bit tail {tail:.4e}, packet bound {per_packet:.4e}",
            s.messages_ok, s.messages_total, s.message_success_rate, s.ber, cfg.trials
        ),
    )
}

fn calibration() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for target_auc in [0.9888, 0.9879] {
        match calibrate_score_model(target_auc, 0.951, 0.005) {
            Ok(c) => {
                let hit = (c.empirical_auc - target_auc).abs() <= 0.005
                    && (c.empirical_accuracy - 0.951).abs() <= 0.005
                    && c.samples_per_class >= 100_000;
                ok &= hit;
                lines.push(format!(
                    "target {target_auc}: auc {:.5}, acc {:.5} on {} per class",
                    c.empirical_auc, c.empirical_accuracy, c.samples_per_class
                ));
            }
            Err(e) => {
                ok = false;
                lines.push(format!("target {target_auc}: {e}"));
            }
        }
    }
    check(ok, lines.join("; "))
}

fn brute_force_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    let mut twice: u128 = 0;
    for &p in &pos {
        for &n in &neg {
            twice += if p > n {
                2
            } else if p == n {
                1
            } else {
                0
            };
        }
    }
    twice as f64 / (2 * pos.len() as u128 * neg.len() as u128) as f64
}

fn auc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for instance in 0..100 {
        let n_pos = rng.random_range(1..=1000);
        let n_neg = rng.random_range(1..=1000);
        // Every other instance draws from a coarse grid to force ties.
        let levels = if instance % 2 == 0 { 0 } else { rng.random_range(2..=40) };
        let mut draw = |shift: f64| {
            let x: f64 = (rng.random::<f64>() + shift).min(1.0);
            if levels == 0 {
                x
            } else {
                (x * levels as f64).round() / levels as f64
            }
        };
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n_pos {
            scores.push(draw(0.3));
            labels.push(true);
        }
        for _ in 0..n_neg {
            scores.push(draw(0.0));
            labels.push(false);
        }
        if roc_auc(&scores, &labels).unwrap().auc != brute_force_auc(&scores, &labels) {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("{mismatches} of 100 instances differ from pair counting"))
}

fn ecc_exhaustive() -> Outcome {
    let start = Instant::now();
    let (mut corrected, mut flagged, mut wrong) = (0, 0, 0);
    for d in 0..16u8 {
        let cw = ecc_encode(d).0;
        for i in 0..8u8 {
            let r = ecc_decode(cw ^ (1 << i));
            if r.data == Some(d) && r.status == (EccStatus::Corrected { bit_index: i }) {
                corrected += 1;
            } else {
                wrong += 1;
            }
            for j in i + 1..8 {
                let r = ecc_decode(cw ^ (1 << i) ^ (1 << j));
                if r.data.is_none() && r.status == EccStatus::Uncorrectable {
                    flagged += 1;
                } else {
                    wrong += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        corrected == 128 && flagged == 448 && wrong == 0 && elapsed < Duration::from_secs(1),
        format!("{corrected}/128 single errors corrected, {flagged}/448 double errors flagged, {wrong} miscorrections, {elapsed:.2?}"),
    )
}

fn clock_robustness() -> Outcome {
    let lc = LineCodeConfig::default();
    let dec = DecoderConfig::default();
    let payloads: Vec<Payload> = Payload::all().collect();
    let wave = encode_message_stream(&payloads, &lc).unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    for drift in [0.985, 1.0, 1.015] {
        let scores = sample_scores(&wave, &clean_channel(0, drift)).unwrap();
        let reports = decode_stream(&scores, &dec).unwrap();
        let good = reports
            .iter()
            .zip(&payloads)
            .filter(|(r, &p)| r.status == DecodeStatus::Ok && r.payload == Some(p))
            .count();
        ok &= good == 256 && reports.len() == 256;
        lines.push(format!("drift {drift}: {good}/256"));
    }

    let bad_shifts: usize = (0..=255u8)
        .into_par_iter()
        .map(|p| {
            let wave = encode_message_stream(&[Payload(p)], &lc).unwrap();
            let start_at = |k: usize| {
                let scores = sample_scores(&wave, &clean_channel(k, 1.0)).unwrap();
                decode_single(&scores, &dec).unwrap().clock.map(|c| c.packet_start)
            };
            let base = start_at(0);
            (0..144).filter(|&k| start_at(k) != base.map(|b| b + k)).count()
        })
        .sum();
    ok &= bad_shifts == 0;
    lines.push(format!("{bad_shifts} of 36864 idle shifts misplaced packet_start"));
    check(ok, lines.join(", "))
}

fn determinism() -> Outcome {
    let base = ExperimentConfig::load(Some(&config_path("range256.json")), &[]).unwrap();
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            output_dir: dir.path().to_path_buf(),
            ..base.clone()
        };
        run_experiment(&cfg).unwrap();
        let read = |name| std::fs::read(dir.path().join(name)).unwrap();
        (read(STATS_FILE), read(REPORTS_FILE))
    };
    let first = run();
    let second = run();
    check(
        first == second,
        format!(
            "two runs wrote {} + {} bytes, identical: {}",
            first.0.len(),
            first.1.len(),
            first == second
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        ("1 protocol round-trip", round_trip),
        ("2 noisy 256-payload experiment", noisy_range_experiment),
        ("3 classifier surrogate calibration", calibration),
        ("4 AUC oracle equivalence", auc_oracle),
        ("5 ECC exhaustive", ecc_exhaustive),
        ("6 clock robustness", clock_robustness),
        ("7 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
