//! Plot data: per size, a bar table of bit share and propagation ratio
//! per group, and a box table of propagated magnitudes. Optional SVG
//! renderings are derived from the same tables.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{CampaignReport, SizeReport};
use crate::error::Result;

pub fn bar_path(dir: &Path, report: &SizeReport) -> PathBuf {
    dir.join(format!("bars_{}.csv", report.size))
}

pub fn box_path(dir: &Path, report: &SizeReport) -> PathBuf {
    dir.join(format!("boxes_{}.csv", report.size))
}

fn provenance(report: &CampaignReport) -> Result<String> {
    Ok(format!(
        "# {}\n# config {}\n",
        report.header.tool,
        serde_json::to_string(&report.header.config)?
    ))
}

pub fn bar_table(size: &SizeReport) -> String {
    let mut out = String::from("group,ff_ratio,propagation_ratio,ci95_lo,ci95_hi\n");
    for g in &size.groups {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            g.group, g.ff_ratio, g.propagation_ratio, g.propagation_ci95[0], g.propagation_ci95[1]
        );
    }
    out
}

/// Groups without propagated faults have empty cells.
pub fn box_table(size: &SizeReport) -> String {
    let mut out = String::from("group,min,q1,median,q3,max\n");
    for g in &size.groups {
        match &g.magnitude {
            Some(m) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    g.group, m.min, m.q1, m.median, m.q3, m.max
                );
            }
            None => {
                let _ = writeln!(out, "{},,,,,", g.group);
            }
        }
    }
    out
}

pub fn write_plot_data(dir: &Path, report: &CampaignReport) -> Result<()> {
    let head = provenance(report)?;
    for size in &report.sizes {
        fs::write(bar_path(dir, size), format!("{head}{}", bar_table(size)))?;
        fs::write(box_path(dir, size), format!("{head}{}", box_table(size)))?;
    }
    Ok(())
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const LEFT: f64 = 60.0;
const BOTTOM: f64 = 110.0;
const TOP: f64 = 30.0;

fn frame(title: &str, y_label: &str) -> String {
    let mut s = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="18" text-anchor="middle" font-size="14">{title}</text>
<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{y_label}</text>
"#,
        WIDTH / 2.0,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        (TOP + HEIGHT - BOTTOM) / 2.0,
    );
    let base = HEIGHT - BOTTOM;
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{base}" stroke="black"/><line x1="{LEFT}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#,
        WIDTH - 10.0
    );
    s
}

fn group_label(s: &mut String, x: f64, name: &str) {
    let y = HEIGHT - BOTTOM + 8.0;
    let _ = writeln!(
        s,
        r#"<text x="{x:.1}" y="{y}" transform="rotate(45 {x:.1} {y})">{name}</text>"#
    );
}

/// Grouped bars: bit share and propagation ratio on a 0..1 axis.
pub fn bar_svg(size: &SizeReport) -> String {
    let mut s = frame(
        &format!("{} flip-flop share and propagation ratio", size.size),
        "ratio",
    );
    let plot_h = HEIGHT - BOTTOM - TOP;
    let slot = (WIDTH - LEFT - 10.0) / size.groups.len() as f64;
    let bar = slot * 0.35;
    let y = |v: f64| HEIGHT - BOTTOM - v.clamp(0.0, 1.0) * plot_h;
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{tick}</text>"#,
            LEFT - 4.0,
            y(tick) + 4.0
        );
    }
    for (i, g) in size.groups.iter().enumerate() {
        let x0 = LEFT + i as f64 * slot + slot * 0.12;
        for (k, (v, colour)) in [(g.ff_ratio, "#9ecae1"), (g.propagation_ratio, "#de2d26")]
            .into_iter()
            .enumerate()
        {
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="{bar:.1}" height="{:.1}" fill="{colour}"/>"#,
                x0 + k as f64 * bar,
                y(v),
                HEIGHT - BOTTOM - y(v)
            );
        }
        group_label(&mut s, x0, g.group.name());
    }
    s.push_str("</svg>\n");
    s
}

/// Box plot of propagated magnitudes on a log2 axis; whiskers are the
/// sample minimum and maximum.
pub fn box_svg(size: &SizeReport) -> String {
    let mut s = frame(
        &format!("{} output fault magnitude", size.size),
        "|delta| (log2)",
    );
    let plot_h = HEIGHT - BOTTOM - TOP;
    let top = 8.0;
    let y = |v: f64| HEIGHT - BOTTOM - (v.max(1.0).log2() / top).clamp(0.0, 1.0) * plot_h;
    for e in 0..=8 {
        let v = f64::from(1u32 << e);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{v}</text>"#,
            LEFT - 4.0,
            y(v) + 4.0
        );
    }
    let slot = (WIDTH - LEFT - 10.0) / size.groups.len() as f64;
    for (i, g) in size.groups.iter().enumerate() {
        let cx = LEFT + (i as f64 + 0.5) * slot;
        if let Some(m) = &g.magnitude {
            let w = slot * 0.3;
            let _ = writeln!(
                s,
                r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
                y(m.min as f64),
                y(m.max as f64)
            );
            let _ = writeln!(
                s,
                r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#fdae6b" stroke="black"/>"##,
                cx - w,
                y(m.q3),
                2.0 * w,
                (y(m.q1) - y(m.q3)).max(1.0)
            );
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black" stroke-width="2"/>"#,
                cx - w,
                y(m.median),
                cx + w,
                y(m.median)
            );
        }
        group_label(&mut s, cx - slot * 0.3, g.group.name());
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_svg(dir: &Path, report: &CampaignReport) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for size in &report.sizes {
        for (path, body) in [
            (bar_path(dir, size).with_extension("svg"), bar_svg(size)),
            (box_path(dir, size).with_extension("svg"), box_svg(size)),
        ] {
            fs::write(&path, body)?;
            written.push(path);
        }
    }
    Ok(written)
}
