use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::Projection2D;
use crate::dataspec::Manifest;
use crate::error::{Error, Result};

const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#637939",
];

fn check_rows(p: &Projection2D, manifest: &Manifest) -> Result<()> {
    if p.points.len() != manifest.len() {
        return Err(Error::shape(format!(
            "projection has {} points but manifest has {} entries",
            p.points.len(),
            manifest.len()
        )));
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// CSV with header `id,tone,corpus,x,y,method`; coordinates at `f32`
/// precision. With `with_meta`, a leading `# {json}` line records the method
/// parameters.
pub fn render_csv(p: &Projection2D, manifest: &Manifest, with_meta: bool) -> Result<String> {
    check_rows(p, manifest)?;
    let mut out = String::new();
    if with_meta {
        let mut meta = serde_json::to_value(&p.meta)?;
        meta["method"] = p.method.as_str().into();
        if let Some(kl) = p.kl_final {
            meta["kl_final"] = kl.into();
        }
        writeln!(out, "# {}", serde_json::to_string(&meta)?).unwrap();
    }
    out.push_str("id,tone,corpus,x,y,method\n");
    for (e, q) in manifest.entries().iter().zip(&p.points) {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            csv_field(&e.id),
            csv_field(&e.tone),
            e.corpus.as_str(),
            q[0] as f32,
            q[1] as f32,
            p.method.as_str()
        )
        .unwrap();
    }
    Ok(out)
}

pub fn export_projection(
    p: &Projection2D,
    manifest: &Manifest,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let text = render_csv(p, manifest, false)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn export_projection_with_meta(
    p: &Projection2D,
    manifest: &Manifest,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let text = render_csv(p, manifest, true)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 40.0;
const LEGEND_W: f64 = 160.0;

/// Static scatter plot colored by tone, with a tone legend on the right.
pub fn render_svg(p: &Projection2D, manifest: &Manifest, title: &str) -> Result<String> {
    check_rows(p, manifest)?;
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for q in &p.points {
        x0 = x0.min(q[0]);
        x1 = x1.max(q[0]);
        y0 = y0.min(q[1]);
        y1 = y1.max(q[1]);
    }
    let span = |a: f64, b: f64| if b > a { b - a } else { 1.0 };
    let plot_w = WIDTH - 2.0 * MARGIN - LEGEND_W;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let sx = |v: f64| MARGIN + (v - x0) / span(x0, x1) * plot_w;
    let sy = |v: f64| HEIGHT - MARGIN - (v - y0) / span(y0, y1) * plot_h;

    let labels = manifest.label_set();
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        MARGIN + plot_w / 2.0,
        xml_escape(title)
    )
    .unwrap();
    for (e, q) in manifest.entries().iter().zip(&p.points) {
        let c = PALETTE[labels.index_of(&e.tone).unwrap_or(0) % PALETTE.len()];
        writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{c}"/>"#,
            sx(q[0]),
            sy(q[1])
        )
        .unwrap();
    }
    let lx = WIDTH - LEGEND_W;
    for (k, name) in labels.labels().iter().enumerate() {
        let y = MARGIN + 18.0 * k as f64;
        let c = PALETTE[k % PALETTE.len()];
        writeln!(out, r#"<circle cx="{lx}" cy="{y}" r="5" fill="{c}"/>"#).unwrap();
        writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 12.0,
            y + 4.0,
            xml_escape(name)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn write_svg(
    p: &Projection2D,
    manifest: &Manifest,
    title: &str,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let svg = render_svg(p, manifest, title)?;
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataspec::{Corpus, UtteranceRecord};
    use crate::projection::{Method, ProjectionMeta};

    fn manifest(n: usize) -> Manifest {
        Manifest::new(
            (0..n)
                .map(|i| UtteranceRecord {
                    id: format!("u{i}"),
                    corpus: Corpus::Business,
                    transcript_key: "k".into(),
                    tone: if i % 2 == 0 {
                        "calm".into()
                    } else {
                        "angry".into()
                    },
                    speaker: "s".into(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn proj(points: Vec<[f64; 2]>) -> Projection2D {
        Projection2D {
            points,
            method: Method::Pca,
            meta: ProjectionMeta::default(),
            kl_final: None,
        }
    }

    #[test]
    fn csv_shape_and_precision() {
        let p = proj(vec![[0.1, -2.0], [1.0 / 3.0, 1e-7]]);
        let text = render_csv(&p, &manifest(2), false).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "id,tone,corpus,x,y,method");
        let f: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(f[0], "u1");
        assert_eq!(f[1], "angry");
        assert_eq!(f[3].parse::<f32>().unwrap(), (1.0f64 / 3.0) as f32);
        assert_eq!(f[4].parse::<f32>().unwrap(), 1e-7f32);
        assert_eq!(f[5], "pca");
    }

    #[test]
    fn row_mismatch_rejected() {
        let p = proj(vec![[0.0, 0.0]]);
        assert!(render_csv(&p, &manifest(2), false).is_err());
        assert!(render_svg(&p, &manifest(2), "t").is_err());
    }

    #[test]
    fn svg_has_points_and_legend() {
        let p = proj(vec![[0.0, 0.0], [1.0, 1.0], [2.0, 0.5]]);
        let svg = render_svg(&p, &manifest(3), "a < b").unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains(r#"width="800" height="600""#));
        assert_eq!(svg.matches("<circle").count(), 3 + 2);
        assert!(svg.contains("a &lt; b"));
    }
}
