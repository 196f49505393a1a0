//! Static SVG line plots, one file per panel.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lfstl::{Order, Trajectory};

const W: f64 = 720.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;
const MAX_POINTS: usize = 2000;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

struct Series {
    label: String,
    values: Vec<f64>,
}

/// Writes the error, barrier and input panels; returns the paths.
pub fn write_all(traj: &Trajectory, dir: &Path, name: &str) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let n = traj.layout.agents;
    let leader = n - 1;
    let times: Vec<f64> = traj.times().collect();
    let col = |i: usize| traj.states.iter().map(|x| x[i]).collect::<Vec<f64>>();
    let errors = |offset: usize, sym: &str| -> Vec<Series> {
        (0..leader)
            .map(|i| Series {
                label: format!("{sym}{} - {sym}{}", i + 1, n),
                values: col(offset + i)
                    .iter()
                    .zip(col(offset + leader))
                    .map(|(a, b)| a - b)
                    .collect(),
            })
            .collect()
    };
    let mut panels: Vec<(&str, &str, Vec<Series>)> = Vec::new();
    match traj.layout.order {
        Order::First => panels.push(("errors", "Position errors", errors(0, "x"))),
        Order::Second => {
            panels.push(("position_errors", "Position errors", errors(0, "p")));
            panels.push(("velocity_errors", "Velocity errors", errors(n, "v")));
        }
    }
    let mut barrier = vec![Series {
        label: "h".into(),
        values: traj.h.clone(),
    }];
    if traj
        .psi1
        .iter()
        .zip(&traj.h)
        .any(|(a, b)| a != b && !(a.is_nan() && b.is_nan()))
    {
        barrier.push(Series {
            label: "psi".into(),
            values: traj.psi1.clone(),
        });
    }
    panels.push(("barrier", "Barrier values", barrier));
    panels.push((
        "input",
        "Leader input",
        vec![Series {
            label: "u".into(),
            values: traj.u.clone(),
        }],
    ));

    let mut written = Vec::new();
    for (suffix, title, series) in panels {
        let path = dir.join(format!("{name}_{suffix}.svg"));
        fs::write(&path, render(title, &times, &series))
            .with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

fn render(title: &str, times: &[f64], series: &[Series]) -> String {
    let t_lo = times.first().copied().unwrap_or(0.0);
    let t_hi = times.last().copied().unwrap_or(1.0).max(t_lo + 1e-9);
    let finite = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .filter(|v| v.is_finite());
    let (mut y_lo, mut y_hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !y_lo.is_finite() {
        (y_lo, y_hi) = (-1.0, 1.0);
    }
    if y_hi - y_lo < 1e-12 {
        y_lo -= 1.0;
        y_hi += 1.0;
    }
    let sx = |t: f64| PAD + (t - t_lo) / (t_hi - t_lo) * (W - 2.0 * PAD);
    let sy = |v: f64| H - PAD - (v - y_lo) / (y_hi - y_lo) * (H - 2.0 * PAD);
    let stride = times.len().div_ceil(MAX_POINTS).max(1);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{title}</text>"#,
        W / 2.0
    );
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    if y_lo < 0.0 && y_hi > 0.0 {
        let y0 = sy(0.0);
        let _ = writeln!(
            s,
            r##"<line x1="{PAD}" y1="{y0:.2}" x2="{}" y2="{y0:.2}" stroke="#999" stroke-dasharray="4 4"/>"##,
            W - PAD
        );
    }
    for (v, y) in [(y_lo, H - PAD), (y_hi, PAD)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" font-size="10" text-anchor="end">{v:.3}</text>"#,
            PAD - 4.0,
            y + 3.0
        );
    }
    for (t, anchor) in [(t_lo, "start"), (t_hi, "end")] {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" font-size="10" text-anchor="{anchor}">{t}</text>"#,
            sx(t),
            H - PAD + 14.0
        );
    }
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        // Break the polyline at non-finite values.
        let mut segment: Vec<String> = Vec::new();
        let flush = |seg: &mut Vec<String>, s: &mut String| {
            if seg.len() > 1 {
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
                    seg.join(" ")
                );
            }
            seg.clear();
        };
        for k in (0..times.len()).step_by(stride) {
            let v = ser.values[k];
            if v.is_finite() {
                segment.push(format!("{:.2},{:.2}", sx(times[k]), sy(v)));
            } else {
                flush(&mut segment, &mut s);
            }
        }
        flush(&mut segment, &mut s);
        let ly = PAD + 14.0 + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" font-size="11" fill="{color}">{}</text>"#,
            W - PAD - 90.0,
            ser.label
        );
    }
    s.push_str("</svg>\n");
    s
}
