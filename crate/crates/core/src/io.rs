//! Run artifacts: iteration CSV, summaries, replay manifests and plots.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::IterationLog;
use crate::config::ExperimentConfig;
use crate::experiments::Curve;
use crate::{Error, Result};

pub const ITERATION_CSV_VERSION: u32 = 1;
pub const MANIFEST_VERSION: u32 = 1;

pub const ITERATION_CSV_COLUMNS: &str =
    "iteration,k,j,reward,r_bar_k,mean_expected_reward,performance,rho,weights_checksum";

/// Streams one row per iteration. `rho` is written as 32 counts separated
/// by spaces; the checksum column is empty except on checksum iterations.
pub struct IterationCsv<W: Write> {
    out: W,
}

impl<W: Write> IterationCsv<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "# neuroloop iterations v{ITERATION_CSV_VERSION}")?;
        writeln!(out, "{ITERATION_CSV_COLUMNS}")?;
        Ok(IterationCsv { out })
    }

    pub fn write(&mut self, log: &IterationLog) -> Result<()> {
        let rho: Vec<String> = log.rho.iter().map(|c| c.to_string()).collect();
        writeln!(
            self.out,
            "{},{},{},{},{},{},{},{},{}",
            log.iteration,
            log.k,
            log.j,
            log.reward,
            log.r_bar_k,
            log.mean_expected_reward,
            log.performance,
            rho.join(" "),
            log.checksum.as_deref().unwrap_or("")
        )?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Everything needed to re-execute a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub tool_version: String,
    /// Fully resolved config, calibration included.
    pub config: ExperimentConfig,
    pub checksum_every: u64,
    /// RFC 3339 wall-clock times; informational only.
    #[serde(default)]
    pub started: String,
    #[serde(default)]
    pub finished: String,
    /// Output file name to SHA-256.
    pub outputs: std::collections::BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(config: ExperimentConfig, checksum_every: u64) -> Self {
        Manifest {
            version: MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            checksum_every,
            started: String::new(),
            finished: String::new(),
            outputs: Default::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Parse(format!("unsupported manifest version {}", m.version)));
        }
        m.config.validate()?;
        Ok(m)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn curve_csv(curve: &Curve) -> String {
    let mut s = String::from("# neuroloop curve v1\niteration,mean_reward,std_reward,mean_performance,std_performance\n");
    for k in 0..curve.iterations.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            curve.iterations[k], curve.mean_reward[k], curve.std_reward[k], curve.mean_performance[k], curve.std_performance[k]
        );
    }
    s
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(s: &mut String, x_label: &str, y_label: &str, y_max: f64) {
    let (x0, y0, x1, y1) = (MARGIN, H - MARGIN, W - MARGIN / 2.0, MARGIN);
    let _ = writeln!(s, r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" stroke="black" fill="none"/>"#);
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let y = y0 - (y0 - y1) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#, x0 - 4.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

/// Mean reward and performance with a one-std band.
pub fn curve_svg(curve: &Curve, title: &str) -> String {
    let mut s = svg_open(title);
    axes(&mut s, "iteration", "mean expected reward / performance", 1.0);
    let n = curve.iterations.len();
    if n >= 2 {
        let x_max = *curve.iterations.last().unwrap() as f64;
        let px = |i: u64| MARGIN + (W - 1.5 * MARGIN) * i as f64 / x_max;
        let py = |v: f64| (H - MARGIN) - (H - 2.0 * MARGIN) * v.clamp(0.0, 1.0);
        for (mean, std, color) in [
            (&curve.mean_reward, &curve.std_reward, "#1f77b4"),
            (&curve.mean_performance, &curve.std_performance, "#ff7f0e"),
        ] {
            let mut band = String::new();
            for k in 0..n {
                let _ = write!(band, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, px(curve.iterations[k]), py(mean[k] + std[k]));
            }
            for k in (0..n).rev() {
                let _ = write!(band, "L{:.2},{:.2} ", px(curve.iterations[k]), py(mean[k] - std[k]));
            }
            let _ = writeln!(s, r#"<path d="{band}Z" fill="{color}" fill-opacity="0.25" stroke="none"/>"#);
            let mut line = String::new();
            for k in 0..n {
                let _ = write!(line, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, px(curve.iterations[k]), py(mean[k]));
            }
            let _ = writeln!(s, r#"<path d="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>"#);
        }
        let _ = writeln!(s, r##"<text x="{}" y="{}" fill="#1f77b4">reward</text>"##, W - 140.0, MARGIN + 10.0);
        let _ = writeln!(s, r##"<text x="{}" y="{}" fill="#ff7f0e">performance</text>"##, W - 140.0, MARGIN + 26.0);
    }
    s.push_str("</svg>\n");
    s
}

/// Bars with one-std error bars.
pub fn bar_svg(labels: &[String], means: &[f64], stds: &[f64], title: &str) -> String {
    let mut s = svg_open(title);
    let y_max = means.iter().zip(stds).map(|(m, d)| m + d).fold(1.0, f64::max);
    axes(&mut s, "", "mean expected reward", y_max);
    let n = labels.len().max(1) as f64;
    let slot = (W - 1.5 * MARGIN) / n;
    let py = |v: f64| (H - MARGIN) - (H - 2.0 * MARGIN) * (v / y_max).clamp(0.0, 1.0);
    for (k, label) in labels.iter().enumerate() {
        let x = MARGIN + slot * (k as f64 + 0.2);
        let w = slot * 0.6;
        let (m, d) = (means[k], stds[k]);
        let _ = writeln!(
            s,
            r##"<rect x="{x:.2}" y="{:.2}" width="{w:.2}" height="{:.2}" fill="#1f77b4"/>"##,
            py(m),
            (H - MARGIN) - py(m)
        );
        let cx = x + w / 2.0;
        let _ = writeln!(s, r#"<path d="M{cx:.2},{:.2} L{cx:.2},{:.2}" stroke="black"/>"#, py(m + d), py(m - d));
        let _ = writeln!(s, r#"<text x="{cx:.2}" y="{}" text-anchor="middle">{}</text>"#, H - MARGIN + 16.0, escape(label));
    }
    s.push_str("</svg>\n");
    s
}

/// Grey-scale 32x32 weight matrix, inputs down, units across.
pub fn matrix_svg(mean: &[f64], title: &str) -> String {
    let mut s = svg_open(title);
    let cell = (H - 2.0 * MARGIN) / 32.0;
    let x0 = (W - 32.0 * cell) / 2.0;
    for m in 0..32 {
        for n in 0..32 {
            let g = 255.0 - (mean[m * 32 + n] / 63.0).clamp(0.0, 1.0) * 255.0;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="rgb({g:.0},{g:.0},{g:.0})"/>"#,
                x0 + n as f64 * cell,
                MARGIN + m as f64 * cell
            );
        }
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">action unit</text>"#, W / 2.0, H - 20.0);
    s.push_str("</svg>\n");
    s
}
