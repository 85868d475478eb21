//! Minimal deterministic SVG plots of planar curves and point clouds.

use std::fmt::Write as _;

use crate::ellipsoid::Ellipsoid;
use crate::error::{Error, Result};

pub const ELLIPSE_SEGMENTS: usize = 256;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    /// Closed polyline.
    Outline,
    /// Individual markers.
    Points,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub points: Vec<[f64; 2]>,
    pub kind: CurveKind,
}

impl Curve {
    pub fn outline(label: impl Into<String>, points: Vec<[f64; 2]>) -> Self {
        Self {
            label: label.into(),
            points,
            kind: CurveKind::Outline,
        }
    }

    pub fn points(label: impl Into<String>, points: Vec<[f64; 2]>) -> Self {
        Self {
            label: label.into(),
            points,
            kind: CurveKind::Points,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    pub width: u32,
    pub height: u32,
    pub margin: f64,
    pub title: Option<String>,
    pub x_label: String,
    pub y_label: String,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self {
            width: 640,
            height: 640,
            margin: 48.0,
            title: None,
            x_label: "x1".into(),
            y_label: "x2".into(),
        }
    }
}

/// Boundary of a planar ellipsoid at `segments` equispaced angles.
pub fn ellipse_polyline(e: &Ellipsoid, segments: usize) -> Result<Vec<[f64; 2]>> {
    if e.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: e.dim(),
        });
    }
    let l = e.factor();
    let c = e.center();
    Ok((0..segments)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / segments as f64;
            let (s, co) = t.sin_cos();
            [
                c[0] + l[(0, 0)] * co,
                c[1] + l[(1, 0)] * co + l[(1, 1)] * s,
            ]
        })
        .collect())
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render_svg(curves: &[Curve], style: &PlotStyle) -> Result<String> {
    let all = curves.iter().flat_map(|c| c.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in all {
        if !p[0].is_finite() || !p[1].is_finite() {
            return Err(Error::NonFinite);
        }
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    if !x0.is_finite() {
        return Err(Error::EmptyPlot);
    }
    // equal aspect, padded by 5%
    let span = (x1 - x0).max(y1 - y0).max(1e-12) * 1.05;
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let (w, h, m) = (style.width as f64, style.height as f64, style.margin);
    let scale = ((w - 2.0 * m).min(h - 2.0 * m)) / span;
    let to_px = |p: &[f64; 2]| (w / 2.0 + (p[0] - cx) * scale, h / 2.0 - (p[1] - cy) * scale);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        style.width, style.height, style.width, style.height
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);

    // axes through the origin when visible, else along the frame
    let (ox, oy) = to_px(&[0.0, 0.0]);
    let ax_y = oy.clamp(m, h - m);
    let ax_x = ox.clamp(m, w - m);
    let _ = writeln!(
        out,
        r##"<g stroke="#888" stroke-width="1"><line x1="{m:.2}" y1="{ax_y:.2}" x2="{:.2}" y2="{ax_y:.2}"/><line x1="{ax_x:.2}" y1="{m:.2}" x2="{ax_x:.2}" y2="{:.2}"/></g>"##,
        w - m,
        h - m
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">{}</text>"#,
        w - m,
        ax_y - 4.0,
        escape(&style.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="12">{}</text>"#,
        ax_x + 4.0,
        m + 12.0,
        escape(&style.y_label)
    );
    if let Some(title) = &style.title {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">{}</text>"#,
            w / 2.0,
            m / 2.0,
            escape(title)
        );
    }

    for (i, curve) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        match curve.kind {
            CurveKind::Outline => {
                let pts: Vec<String> = curve
                    .points
                    .iter()
                    .map(|p| {
                        let (x, y) = to_px(p);
                        format!("{x:.2},{y:.2}")
                    })
                    .collect();
                let _ = writeln!(
                    out,
                    r#"<polygon points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                    pts.join(" ")
                );
            }
            CurveKind::Points => {
                let _ = writeln!(out, r#"<g fill="{color}">"#);
                for p in &curve.points {
                    let (x, y) = to_px(p);
                    let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.5"/>"#);
                }
                let _ = writeln!(out, "</g>");
            }
        }
        let ly = m + 16.0 * (i as f64 + 1.0);
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{color}"/><text x="{:.2}" y="{:.2}" font-size="12">{}</text>"#,
            m,
            ly - 9.0,
            m + 14.0,
            ly,
            escape(&curve.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
