use rayon::prelude::*;

use super::{write_file, ExperimentConfig, HarnessError};
use crate::channel::{sample_scores, ChannelConfig};
use crate::codec::encode_message_stream;
use crate::decoder::{decode_stream, DecodeReport};
use crate::metrics::{link_stats, LinkStats};

pub const STATS_FILE: &str = "stats.csv";
pub const REPORTS_FILE: &str = "reports.jsonl";

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub stats: LinkStats,
    pub reports: Vec<DecodeReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    /// Totals over all trials.
    pub stats: LinkStats,
    pub trials: Vec<TrialOutcome>,
}

fn stats_row(label: &str, seed: &str, s: &LinkStats) -> String {
    format!(
        "{label},{seed},{},{},{},{},{},{}\n",
        s.bit_errors, s.bits_total, s.ber, s.messages_ok, s.messages_total, s.message_success_rate
    )
}

impl ExperimentOutcome {
    /// One row per trial followed by a `total` row.
    pub fn stats_csv(&self) -> String {
        let mut out =
            String::from("trial,seed,bit_errors,bits_total,ber,messages_ok,messages_total,message_success_rate\n");
        for t in &self.trials {
            out.push_str(&stats_row(&t.trial.to_string(), &t.seed.to_string(), &t.stats));
        }
        out.push_str(&stats_row("total", "", &self.stats));
        out
    }

    /// Every report as one JSON object per line, trials in order.
    pub fn reports_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.trials {
            for r in &t.reports {
                out.push_str(&r.to_json());
                out.push('\n');
            }
        }
        out
    }
}

/// Runs every trial in memory. Trial `t` uses channel seed `seed + t`;
/// trials run in parallel and are collected in order.
pub fn simulate_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    config.validate()?;
    let payloads = config.payload_set.payloads();
    let waveform = encode_message_stream(&payloads, &config.line_code)?;
    let decoder = config.decoder_config();

    let trials = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = config.channel.seed.wrapping_add(trial as u64);
            let channel = ChannelConfig {
                seed,
                ..config.channel.clone()
            };
            let scores = sample_scores(&waveform, &channel)?;
            let reports = decode_stream(&scores, &decoder)?;
            let stats = link_stats(&payloads, &reports, &config.line_code);
            Ok(TrialOutcome {
                trial,
                seed,
                stats,
                reports,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;

    let stats = trials
        .iter()
        .fold(LinkStats::default(), |acc, t| acc.merge(&t.stats));
    Ok(ExperimentOutcome { stats, trials })
}

/// Runs the experiment and writes `stats.csv` and `reports.jsonl` into
/// `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    let outcome = simulate_experiment(config)?;
    write_file(&config.output_dir.join(STATS_FILE), &outcome.stats_csv())?;
    write_file(&config.output_dir.join(REPORTS_FILE), &outcome.reports_jsonl())?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::SOS;
    use crate::decoder::DecodeStatus;
    use crate::harness::PayloadSet;

    #[test]
    fn clean_range_decodes_everything() {
        let outcome = simulate_experiment(&ExperimentConfig::default()).unwrap();
        assert_eq!(outcome.stats.messages_total, 256);
        assert_eq!(outcome.stats.message_success_rate, 1.0);
        assert_eq!(outcome.stats.ber, 0.0);
    }

    #[test]
    fn sos_repeated() {
        let cfg = ExperimentConfig {
            payload_set: PayloadSet::Sos { repeat: 10 },
            ..Default::default()
        };
        let outcome = simulate_experiment(&cfg).unwrap();
        let reports = &outcome.trials[0].reports;
        assert_eq!(reports.len(), 10);
        assert!(reports
            .iter()
            .all(|r| r.status == DecodeStatus::Ok && r.payload == Some(SOS)));
    }

    #[test]
    fn stats_csv_has_total_row() {
        let cfg = ExperimentConfig {
            payload_set: PayloadSet::Sos { repeat: 2 },
            trials: 3,
            ..Default::default()
        };
        let csv = simulate_experiment(&cfg).unwrap().stats_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[4], "total,,0,72,0,6,6,1");
    }
}
