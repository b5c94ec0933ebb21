use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::experiments::{CurveSet, ExperimentResult, Figure};
use crate::io::{fmt_f64, read_json, sha256_hex, to_json_bytes};
use crate::solvers::Method;

/// Result file; it embeds the spec, so it doubles as the manifest.
pub const RESULT_FILE: &str = "manifest.json";

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

fn method_header(first: &[&str], set: &CurveSet) -> Vec<String> {
    first
        .iter()
        .map(|s| s.to_string())
        .chain(set.curves.iter().map(|c| c.method.name().to_string()))
        .collect()
}

/// Every emitted file except the manifest, as `(name, bytes)` in a fixed
/// order. Output is a pure function of `result`.
pub fn render_files(result: &ExperimentResult) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    match result.spec.figure {
        Figure::Fig3 => {
            let header: Vec<String> = ["scale", "trial", "method", "ratio", "horizon"].map(String::from).to_vec();
            let rows = result.points.iter().map(|p| {
                vec![
                    fmt_f64(p.scale),
                    p.trial.to_string(),
                    p.method.name().to_string(),
                    fmt_f64(p.ratio),
                    fmt_f64(p.horizon),
                ]
            });
            files.push(("data.csv".to_string(), csv_bytes(&header, rows)?));
        }
        Figure::Fig1 | Figure::Fig2 => {
            let mut data_rows = Vec::new();
            let mut data_header = Vec::new();
            for set in &result.curves {
                let len = set.curves.first().map_or(0, |c| c.sq_errors.len());
                let row = |k: usize| -> Vec<String> {
                    std::iter::once(k.to_string())
                        .chain(set.curves.iter().map(|c| fmt_f64(c.sq_errors[k])))
                        .collect()
                };
                let name = format!("curves_{}.csv", set.ensemble.name());
                files.push((name, csv_bytes(&method_header(&["k"], set), (0..len).map(row))?));
                for k in 0..len {
                    let mut r = vec![set.ensemble.name().to_string()];
                    r.extend(row(k));
                    data_rows.push(r);
                }
                data_header = method_header(&["ensemble", "k"], set);
                if set.curves.iter().all(|c| c.band.is_some()) {
                    let header: Vec<String> = std::iter::once("k".to_string())
                        .chain(set.curves.iter().flat_map(|c| {
                            [format!("{}_min", c.method.name()), format!("{}_max", c.method.name())]
                        }))
                        .collect();
                    let rows = (0..len).map(|k| {
                        std::iter::once(k.to_string())
                            .chain(set.curves.iter().flat_map(|c| {
                                let (lo, hi) = c.band.as_ref().expect("checked");
                                [fmt_f64(lo[k]), fmt_f64(hi[k])]
                            }))
                            .collect()
                    });
                    files.push((format!("band_{}.csv", set.ensemble.name()), csv_bytes(&header, rows)?));
                }
            }
            files.insert(0, ("data.csv".to_string(), csv_bytes(&data_header, data_rows.into_iter())?));
        }
    }
    files.push(("plot.svg".to_string(), render_svg(result).into_bytes()));
    Ok(files)
}

/// Writes the manifest and every rendered file; returns file checksums.
pub fn emit(result: &ExperimentResult, dir: &Path) -> Result<BTreeMap<String, String>> {
    fs::create_dir_all(dir)?;
    let mut sums = BTreeMap::new();
    let manifest = to_json_bytes(result)?;
    fs::write(dir.join(RESULT_FILE), &manifest)?;
    sums.insert(RESULT_FILE.to_string(), sha256_hex(&manifest));
    for (name, bytes) in render_files(result)? {
        fs::write(dir.join(&name), &bytes)?;
        sums.insert(name, sha256_hex(&bytes));
    }
    Ok(sums)
}

pub fn load_result(dir: &Path) -> Result<ExperimentResult> {
    read_json(&dir.join(RESULT_FILE))
}

fn color(method: Method) -> &'static str {
    match method {
        Method::Rk => "#d62728",
        Method::Qrk => "#1f77b4",
        Method::Dqrk => "#2ca02c",
    }
}

const WIDTH: f64 = 760.0;
const PANEL: f64 = 380.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 110.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;
const MAX_POINTS: usize = 2000;

struct Axes {
    top: f64,
    x: (f64, f64),
    y: (f64, f64),
    x_log: bool,
}

impl Axes {
    fn px(&self, x: f64) -> f64 {
        let x = if self.x_log { x.max(f64::MIN_POSITIVE).log10() } else { x };
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let y = y.max(10f64.powf(self.y.0)).log10();
        self.top + PANEL - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (PANEL - TOP - BOTTOM)
    }
}

fn decades(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| *v > 0.0 && v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let (a, b) = (lo.log10().floor(), hi.log10().ceil());
    if a == b {
        (a, a + 1.0)
    } else {
        (a, b)
    }
}

fn log_grid(svg: &mut String, ax: &Axes, vertical: bool) {
    let (lo, hi) = if vertical { ax.x } else { ax.y };
    let x0 = LEFT;
    let x1 = WIDTH - RIGHT;
    let y0 = ax.top + TOP;
    let y1 = ax.top + PANEL - BOTTOM;
    let mut e = lo;
    while e <= hi {
        for d in 1..10 {
            let v = 10f64.powf(e) * d as f64;
            if v.log10() > hi + 1e-12 {
                break;
            }
            let (stroke, width) = if d == 1 { ("#bbbbbb", 0.8) } else { ("#e6e6e6", 0.5) };
            if vertical {
                let x = ax.px(v);
                let _ = writeln!(svg, r##"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{y1:.2}" stroke="{stroke}" stroke-width="{width}"/>"##);
                if d == 1 {
                    let _ = writeln!(svg, r##"<text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle">1e{}</text>"##, y1 + 16.0, e as i64);
                }
            } else {
                let y = ax.py(v);
                let _ = writeln!(svg, r##"<line x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="{stroke}" stroke-width="{width}"/>"##);
                if d == 1 {
                    let _ = writeln!(svg, r##"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">1e{}</text>"##, x0 - 6.0, y + 4.0, e as i64);
                }
            }
        }
        e += 1.0;
    }
}

fn frame(svg: &mut String, ax: &Axes, title: &str, xlabel: &str, ylabel: &str) {
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, ax.top + TOP, ax.top + PANEL - BOTTOM);
    let _ = writeln!(svg, r##"<rect x="{x0}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#333333"/>"##, x1 - x0, y1 - y0);
    let _ = writeln!(svg, r##"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">{title}</text>"##, (x0 + x1) / 2.0, ax.top + 22.0);
    let _ = writeln!(svg, r##"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{xlabel}</text>"##, (x0 + x1) / 2.0, y1 + 36.0);
    let cy = (y0 + y1) / 2.0;
    let _ = writeln!(svg, r##"<text x="18" y="{cy:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 18 {cy:.2})">{ylabel}</text>"##);
}

fn legend(svg: &mut String, ax: &Axes, methods: &[Method]) {
    for (i, m) in methods.iter().enumerate() {
        let y = ax.top + TOP + 16.0 + 18.0 * i as f64;
        let x = WIDTH - RIGHT + 12.0;
        let _ = writeln!(svg, r##"<rect x="{x:.2}" y="{:.2}" width="14" height="4" fill="{}"/>"##, y - 4.0, color(*m));
        let _ = writeln!(svg, r##"<text x="{:.2}" y="{y:.2}" font-size="12">{}</text>"##, x + 20.0, m.name());
    }
}

fn linear_ticks(svg: &mut String, ax: &Axes) {
    let y1 = ax.top + PANEL - BOTTOM;
    for i in 0..=4 {
        let v = ax.x.0 + (ax.x.1 - ax.x.0) * i as f64 / 4.0;
        let x = ax.px(v);
        let _ = writeln!(svg, r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{y1:.2}" stroke="#e6e6e6" stroke-width="0.5"/>"##, ax.top + TOP);
        let _ = writeln!(svg, r##"<text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"##, y1 + 16.0, v.round() as i64);
    }
}

fn stride(len: usize) -> usize {
    len.div_ceil(MAX_POINTS).max(1)
}

fn sampled(len: usize) -> impl Iterator<Item = usize> {
    let s = stride(len);
    (0..len).step_by(s).chain((len > 0 && (len - 1) % s != 0).then_some(len - 1))
}

/// Self-contained SVG: error curves on a log scale (fig1, fig2), one panel
/// per ensemble, or a log-log scatter of horizon against ratio (fig3).
pub fn render_svg(result: &ExperimentResult) -> String {
    let mut svg = String::new();
    let panels = if result.spec.figure == Figure::Fig3 { 1 } else { result.curves.len().max(1) };
    let height = PANEL * panels as f64;
    let _ = writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">"##
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="white"/>"##);
    if result.spec.figure == Figure::Fig3 {
        let ax = Axes {
            top: 0.0,
            x: decades(result.points.iter().map(|p| p.ratio)),
            y: decades(result.points.iter().map(|p| p.horizon)),
            x_log: true,
        };
        log_grid(&mut svg, &ax, true);
        log_grid(&mut svg, &ax, false);
        for p in &result.points {
            let _ = writeln!(
                svg,
                r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}" fill-opacity="0.7"/>"##,
                ax.px(p.ratio),
                ax.py(p.horizon),
                color(p.method)
            );
        }
        frame(&mut svg, &ax, "error horizon vs corruption ratio", "largest / tail corruption magnitude", "horizon");
        legend(&mut svg, &ax, &result.spec.methods);
    } else {
        for (i, set) in result.curves.iter().enumerate() {
            let len = set.curves.first().map_or(1, |c| c.sq_errors.len());
            let ax = Axes {
                top: PANEL * i as f64,
                x: (0.0, (len - 1).max(1) as f64),
                y: decades(set.curves.iter().flat_map(|c| {
                    c.sq_errors.iter().copied().chain(c.band.iter().flat_map(|(lo, hi)| lo.iter().chain(hi).copied()))
                })),
                x_log: false,
            };
            log_grid(&mut svg, &ax, false);
            linear_ticks(&mut svg, &ax);
            for c in &set.curves {
                if let Some((lo, hi)) = &c.band {
                    let mut pts = String::new();
                    for k in sampled(hi.len()) {
                        let _ = write!(pts, "{:.2},{:.2} ", ax.px(k as f64), ax.py(hi[k]));
                    }
                    let back: Vec<usize> = sampled(lo.len()).collect();
                    for &k in back.iter().rev() {
                        let _ = write!(pts, "{:.2},{:.2} ", ax.px(k as f64), ax.py(lo[k]));
                    }
                    let _ = writeln!(svg, r##"<polygon points="{}" fill="{}" fill-opacity="0.15" stroke="none"/>"##, pts.trim_end(), color(c.method));
                }
                let mut pts = String::new();
                for k in sampled(c.sq_errors.len()) {
                    let _ = write!(pts, "{:.2},{:.2} ", ax.px(k as f64), ax.py(c.sq_errors[k]));
                }
                let _ = writeln!(svg, r##"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.2"/>"##, pts.trim_end(), color(c.method));
            }
            let title = format!("{} ({})", result.spec.figure, set.ensemble.name());
            frame(&mut svg, &ax, &title, "iteration k", "squared error");
            legend(&mut svg, &ax, &set.curves.iter().map(|c| c.method).collect::<Vec<_>>());
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{run_fig2, run_fig3, ExperimentSpec};

    fn tiny(figure: Figure) -> ExperimentSpec {
        ExperimentSpec {
            m: 60,
            n: 5,
            iterations: 400,
            trials: 2,
            scales: vec![1.0, 10.0],
            seed: 9,
            band_seeds: 1,
            ..ExperimentSpec::desk(figure)
        }
    }

    #[test]
    fn fig2_files_and_round_trip() {
        let r = run_fig2(&tiny(Figure::Fig2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let sums = emit(&r, dir.path()).unwrap();
        let names: Vec<&str> = sums.keys().map(String::as_str).collect();
        assert_eq!(
            names,
            ["band_gaussian.csv", "band_uniform.csv", "curves_gaussian.csv", "curves_uniform.csv", "data.csv", "manifest.json", "plot.svg"]
        );
        let curves = fs::read_to_string(dir.path().join("curves_gaussian.csv")).unwrap();
        assert!(curves.starts_with("k,rk,qrk,dqrk\n"));
        assert_eq!(curves.lines().count(), 402);
        let back = load_result(dir.path()).unwrap();
        assert_eq!(back, r);
        for (name, bytes) in render_files(&back).unwrap() {
            assert_eq!(fs::read(dir.path().join(&name)).unwrap(), bytes, "{name}");
        }
    }

    #[test]
    fn fig3_csv_schema() {
        let r = run_fig3(&tiny(Figure::Fig3)).unwrap();
        let files = render_files(&r).unwrap();
        let data = String::from_utf8(files[0].1.clone()).unwrap();
        assert!(data.starts_with("scale,trial,method,ratio,horizon\n"));
        assert_eq!(data.lines().count(), 1 + 2 * 2 * 2);
        let svg = String::from_utf8(files[1].1.clone()).unwrap();
        assert_eq!(svg.matches("<circle").count(), 8);
    }

    #[test]
    fn svg_is_well_formed() {
        let r = run_fig2(&tiny(Figure::Fig2)).unwrap();
        let svg = render_svg(&r);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 6);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
