use std::fmt::Write as _;
use std::path::Path;

use super::{write_file, HarnessError};
use crate::channel::FrameScores;
use crate::codec::PACKET_BITS;
use crate::decoder::{bit_role, BitRole, DecodeReport};

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 40.0;

fn role_class(role: BitRole) -> &'static str {
    match role {
        BitRole::Start => "start",
        BitRole::Payload => "payload",
        BitRole::Stop => "stop",
    }
}

fn role_color(role: BitRole) -> &'static str {
    match role {
        BitRole::Start => "#1f77b4",
        BitRole::Payload => "#2ca02c",
        BitRole::Stop => "#d62728",
    }
}

/// Renders one decoded packet: a dot per frame score, a shaded band per bit
/// window, and the bit means. Bits are coloured by role.
pub fn render_trace(report: &DecodeReport, scores: &FrameScores) -> Result<String, HarnessError> {
    let clock = report
        .clock
        .ok_or_else(|| HarnessError::Trace("report has no recovered bit clock".into()))?;
    let start = clock.packet_start.min(scores.len());
    let end = clock.packet_end().min(scores.len());
    if start >= end {
        return Err(HarnessError::Trace("packet lies outside the score stream".into()));
    }

    let span = (end - start) as f64;
    let x = |frame: f64| MARGIN + (frame - start as f64) / span * (WIDTH - 2.0 * MARGIN);
    let y = |score: f64| HEIGHT - MARGIN - score * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    for k in 0..PACKET_BITS {
        let lo = clock.bit_edge(k).min(end);
        let hi = clock.bit_edge(k + 1).min(end);
        let role = bit_role(k);
        let opacity = if k % 2 == 0 { 0.12 } else { 0.24 };
        let _ = writeln!(
            svg,
            r#"<rect class="bit-band role-{}" x="{:.2}" y="{MARGIN}" width="{:.2}" height="{:.2}" fill="{}" fill-opacity="{opacity}"/>"#,
            role_class(role),
            x(lo as f64),
            x(hi as f64) - x(lo as f64),
            HEIGHT - 2.0 * MARGIN,
            role_color(role),
        );
        if let Some(bit) = report.bits.get(k) {
            let _ = writeln!(
                svg,
                r#"<line class="bit-mean" x1="{:.2}" x2="{:.2}" y1="{:.2}" y2="{:.2}" stroke="{}" stroke-width="2"/>"#,
                x(lo as f64),
                x(hi as f64),
                y(bit.mean_score),
                y(bit.mean_score),
                role_color(role),
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
                (x(lo as f64) + x(hi as f64)) / 2.0,
                MARGIN - 8.0,
                bit.value as u8,
            );
        }
    }

    let _ = writeln!(
        svg,
        r##"<line x1="{MARGIN}" x2="{:.2}" y1="{:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="4 4"/>"##,
        WIDTH - MARGIN,
        y(0.5),
        y(0.5),
    );

    let mut k = 0;
    for frame in start..end {
        while k + 1 < PACKET_BITS && frame >= clock.bit_edge(k + 1) {
            k += 1;
        }
        let _ = writeln!(
            svg,
            r#"<circle class="score" cx="{:.2}" cy="{:.2}" r="2.5" fill="{}"/>"#,
            x(frame as f64 + 0.5),
            y(scores.scores[frame]),
            role_color(bit_role(k)),
        );
    }

    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="{:.2}" font-size="12">frames {start}..{end}, {:.3} frames/bit</text>"#,
        HEIGHT - 10.0,
        clock.frames_per_bit,
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes [`render_trace`] to `path`. Nothing is written when the report has
/// no clock.
pub fn emit_trace(report: &DecodeReport, scores: &FrameScores, path: &Path) -> Result<(), HarnessError> {
    let svg = render_trace(report, scores)?;
    write_file(path, &svg)
}
