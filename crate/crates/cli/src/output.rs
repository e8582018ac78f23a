//! File writers: trajectory CSV and SVG error plots.

use std::fmt::Write as _;
use std::io::{self, Write};

use elc::analysis::derived_channels;
use elc::{Scenario, TrajectoryLog};

/// Every float is written with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `t`, then the flattened state in layout order, then derived channels.
pub fn write_trajectory_csv<W: Write>(mut out: W, log: &TrajectoryLog, scenario: &Scenario) -> io::Result<()> {
    let derived = derived_channels(log, scenario);
    let mut header = vec!["t".to_string()];
    header.extend(log.layout.column_names());
    header.extend(derived.names.iter().cloned());
    writeln!(out, "{}", header.join(","))?;
    let mut line = String::new();
    for (k, x) in log.states.iter().enumerate() {
        line.clear();
        line.push_str(&fmt_f64(log.times[k]));
        for v in x.iter().chain(derived.values.iter().map(|c| &c[k])) {
            line.push(',');
            line.push_str(&fmt_f64(*v));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()
}

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Line plot with a log10 y axis. Non-positive values are drawn at the floor.
pub fn svg_log_plot(title: &str, times: &[f64], series: &[(String, Vec<f64>)]) -> String {
    const W: f64 = 800.0;
    const H: f64 = 420.0;
    const L: f64 = 70.0;
    const R: f64 = 150.0;
    const T: f64 = 40.0;
    const B: f64 = 50.0;
    const FLOOR: f64 = 1e-16;

    let t0 = times.first().copied().unwrap_or(0.0);
    let t1 = times.last().copied().unwrap_or(1.0).max(t0 + f64::EPSILON);
    let logs = |v: &[f64]| v.iter().map(|&y| y.max(FLOOR).log10()).collect::<Vec<_>>();
    let all: Vec<Vec<f64>> = series.iter().map(|(_, v)| logs(v)).collect();
    let lo = all.iter().flatten().copied().fold(f64::INFINITY, f64::min).floor();
    let hi = all.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max).ceil();
    let (lo, hi) = if lo.is_finite() && hi > lo {
        (lo, hi)
    } else {
        (-1.0, 1.0)
    };
    let x = |t: f64| L + (t - t0) / (t1 - t0) * (W - L - R);
    let y = |v: f64| T + (hi - v) / (hi - lo) * (H - T - B);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-size="15">{title}</text>"#, L);
    let _ = writeln!(
        s,
        r#"<rect x="{L}" y="{T}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - L - R,
        H - T - B
    );
    let step = ((hi - lo) / 8.0).ceil().max(1.0);
    let mut e = lo;
    while e <= hi {
        let _ = writeln!(
            s,
            r##"<line x1="{L}" x2="{}" y1="{yy:.1}" y2="{yy:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">1e{e}</text>"##,
            W - R,
            L - 6.0,
            y(e) + 4.0,
            yy = y(e)
        );
        e += step;
    }
    for k in 0..=5 {
        let t = t0 + (t1 - t0) * k as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{t:.1}</text>"#,
            x(t),
            H - B + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{}" text-anchor="middle">t [s]</text>"#,
        x((t0 + t1) / 2.0),
        H - 10.0
    );
    for (j, ((name, _), ys)) in series.iter().zip(&all).enumerate() {
        let color = COLORS[j % COLORS.len()];
        // One point per horizontal pixel is plenty.
        let stride = (times.len() / 2000).max(1);
        let points: Vec<String> = (0..times.len())
            .step_by(stride)
            .map(|k| format!("{:.1},{:.1}", x(times[k]), y(ys[k])))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            points.join(" ")
        );
        let ly = T + 16.0 * (j as f64 + 1.0);
        let _ = writeln!(
            s,
            r#"<line x1="{}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{name}</text>"#,
            W - R + 10.0,
            W - R + 30.0,
            W - R + 35.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use elc::scenario::{builtin_example, DEFAULT_SEED};
    use elc::simulate;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_shape() {
        let mut sc = builtin_example(DEFAULT_SEED);
        sc.integrator.horizon = 0.05;
        let log = simulate(&sc).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &log, &sc).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), log.len() + 1);
        let header: Vec<&str> = lines[0].split(',').collect();
        assert_eq!(header[0], "t");
        assert_eq!(header[1], "v[1]");
        assert_eq!(*header.last().unwrap(), "V");
        // 1 + state + 4 channel kinds x 4 followers + V
        assert_eq!(header.len(), 1 + log.layout.dim() + 16 + 1);
        let first: Vec<f64> = lines[1].split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(first.len(), header.len());
        assert_eq!(&first[1..1 + log.layout.dim()], log.states[0].as_slice());
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let t: Vec<f64> = (0..100).map(|k| k as f64 * 0.1).collect();
        let svg = svg_log_plot("decay", &t, &[("e".into(), t.iter().map(|x| (-x).exp()).collect())]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }
}
