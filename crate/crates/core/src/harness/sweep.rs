use super::experiment::simulate_experiment;
use super::{write_file, HarnessError, SweepSpec};
use crate::metrics::LinkStats;

pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub stats: LinkStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub parameter: &'static str,
    pub rows: Vec<SweepRow>,
    /// Monotonicity violations larger than sampling noise.
    pub warnings: Vec<String>,
}

impl SweepOutcome {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "parameter,value,ber,message_success_rate,bit_errors,bits_total,messages_ok,messages_total\n",
        );
        for r in &self.rows {
            let s = &r.stats;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                self.parameter,
                r.value,
                s.ber,
                s.message_success_rate,
                s.bit_errors,
                s.bits_total,
                s.messages_ok,
                s.messages_total
            ));
        }
        out
    }
}

/// Three standard errors of the difference of two success rates, plus one
/// message of slack.
fn noise_margin(a: &LinkStats, b: &LinkStats) -> f64 {
    let var = |s: &LinkStats| {
        let p = s.message_success_rate;
        p * (1.0 - p) / s.messages_total.max(1) as f64
    };
    3.0 * (var(a) + var(b)).sqrt() + 1.0 / a.messages_total.min(b.messages_total).max(1) as f64
}

/// Runs one experiment per grid point, without writing files.
pub fn simulate_sweep(spec: &SweepSpec) -> Result<SweepOutcome, HarnessError> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.grid.len());
    for (i, &value) in spec.grid.iter().enumerate() {
        let outcome = simulate_experiment(&spec.point(i)?)?;
        rows.push(SweepRow {
            value,
            stats: outcome.stats,
        });
    }

    let mut warnings = Vec::new();
    if spec.parameter.degrades_monotonically() {
        for w in rows.windows(2) {
            let (prev, next) = (&w[0].stats, &w[1].stats);
            if next.message_success_rate > prev.message_success_rate + noise_margin(prev, next) {
                let msg = format!(
                    "success rate rises from {} at {}={} to {} at {}={}",
                    prev.message_success_rate,
                    spec.parameter.name(),
                    w[0].value,
                    next.message_success_rate,
                    spec.parameter.name(),
                    w[1].value
                );
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    Ok(SweepOutcome {
        parameter: spec.parameter.name(),
        rows,
        warnings,
    })
}

/// Runs the sweep and writes `sweep.csv` into the base experiment's output
/// directory.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutcome, HarnessError> {
    let outcome = simulate_sweep(spec)?;
    write_file(&spec.base.output_dir.join(SWEEP_FILE), &outcome.to_csv())?;
    Ok(outcome)
}
