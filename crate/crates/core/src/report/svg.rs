//! Deterministic hand-written SVG charts.
//!
//! Output depends only on the numbers passed in; coordinates are printed
//! with two decimals so identical inputs give identical bytes.

use std::fmt::Write;

use serde::Serialize;
use thiserror::Error;

use super::{AnalysisKind, BlockResult};
use crate::stats::{ControlLimits, FrequencyTable};

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 300.0;
const LEFT: f64 = 56.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 28.0;
const BOTTOM: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Chart {
    pub name: String,
    pub svg: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("no chart for {0} blocks")]
    Unsupported(&'static str),
}

/// Charts for one computed block. Summary and crosstab blocks are tables
/// only and report [`RenderError::Unsupported`].
pub fn render_chart_svg(result: &BlockResult) -> Result<Vec<Chart>, RenderError> {
    match result {
        BlockResult::Frequency { items } => Ok(items
            .iter()
            .map(|i| Chart {
                name: i.field.clone(),
                svg: bar_chart(&i.field, &i.table),
            })
            .collect()),
        BlockResult::Likert { items } => Ok(items
            .iter()
            .map(|i| Chart {
                name: i.field.clone(),
                svg: bar_chart(&i.field, &i.profile.frequencies),
            })
            .collect()),
        BlockResult::XbarR(c) => Ok(vec![
            Chart {
                name: "xbar".into(),
                svg: control_chart("X-bar", &c.xbar_points, &c.xbar_limits),
            },
            Chart {
                name: "r".into(),
                svg: control_chart("Range", &c.r_points, &c.r_limits),
            },
        ]),
        BlockResult::Pca(p) => {
            let pc = |k: usize| -> Vec<f64> {
                if k < p.scores.cols() {
                    p.scores.column(k)
                } else {
                    vec![0.0; p.scores.rows()]
                }
            };
            let points: Vec<(f64, f64)> = pc(0).into_iter().zip(pc(1)).collect();
            let labels: Vec<String> = (1..=p.eigenvalues.len()).map(|k| format!("PC{k}")).collect();
            Ok(vec![
                Chart {
                    name: "scores".into(),
                    svg: scatter_chart("Scores PC1 / PC2", &points),
                },
                Chart {
                    name: "scree".into(),
                    svg: bars("Eigenvalues", &labels, &p.eigenvalues),
                },
            ])
        }
        BlockResult::Summary { .. } => Err(RenderError::Unsupported(AnalysisKind::Summary.as_str())),
        BlockResult::Crosstab(_) => Err(RenderError::Unsupported(AnalysisKind::Crosstab.as_str())),
    }
}

pub fn bar_chart(title: &str, table: &FrequencyTable) -> String {
    let values: Vec<f64> = table.counts.iter().map(|&c| c as f64).collect();
    bars(title, &table.categories, &values)
}

fn bars(title: &str, labels: &[String], values: &[f64]) -> String {
    let mut out = open(title);
    let max = values.iter().copied().fold(0.0_f64, f64::max);
    let top = if max > 0.0 { max } else { 1.0 };
    axes(&mut out, 0.0, top);
    let slot = plot_width() / labels.len().max(1) as f64;
    for (i, (label, &v)) in labels.iter().zip(values).enumerate() {
        let h = (v.max(0.0) / top) * plot_height();
        let x = LEFT + slot * i as f64 + slot * 0.15;
        let _ = writeln!(
            out,
            r#"<rect class="bar" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}"><title>{}: {}</title></rect>"#,
            x,
            TOP + plot_height() - h,
            slot * 0.7,
            h,
            escape(label),
            v
        );
        let _ = writeln!(
            out,
            r#"<text class="label" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + slot * (i as f64 + 0.5),
            HEIGHT - BOTTOM + 16.0,
            escape(label)
        );
    }
    close(out)
}

pub fn control_chart(title: &str, points: &[f64], limits: &ControlLimits) -> String {
    let mut out = open(title);
    let lo = points.iter().copied().fold(limits.lcl, f64::min);
    let hi = points.iter().copied().fold(limits.ucl, f64::max);
    let pad = if hi > lo { (hi - lo) * 0.05 } else { 1.0 };
    let (lo, hi) = (lo - pad, hi + pad);
    axes(&mut out, lo, hi);
    let y = |v: f64| TOP + plot_height() * (hi - v) / (hi - lo);
    let x = |i: usize| {
        if points.len() <= 1 {
            LEFT + plot_width() / 2.0
        } else {
            LEFT + plot_width() * i as f64 / (points.len() - 1) as f64
        }
    };
    for (class, v) in [("ucl", limits.ucl), ("cl", limits.cl), ("lcl", limits.lcl)] {
        let _ = writeln!(
            out,
            r#"<line class="ref {class}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"><title>{} = {}</title></line>"#,
            LEFT,
            y(v),
            WIDTH - RIGHT,
            y(v),
            class.to_uppercase(),
            v
        );
    }
    if !points.is_empty() {
        let path: Vec<String> = points
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v)))
            .collect();
        let _ = writeln!(out, r#"<polyline class="series" fill="none" points="{}"/>"#, path.join(" "));
    }
    for (i, &v) in points.iter().enumerate() {
        let class = if limits.violates(v) { "point out" } else { "point" };
        let _ = writeln!(
            out,
            r#"<circle class="{class}" cx="{:.2}" cy="{:.2}" r="3"><title>{}: {}</title></circle>"#,
            x(i),
            y(v),
            i + 1,
            v
        );
    }
    close(out)
}

pub fn scatter_chart(title: &str, points: &[(f64, f64)]) -> String {
    let mut out = open(title);
    let span = |sel: fn(&(f64, f64)) -> f64| {
        let lo = points.iter().map(sel).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(sel).fold(f64::NEG_INFINITY, f64::max);
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0)
        } else {
            let pad = (hi - lo) * 0.05;
            (lo - pad, hi + pad)
        }
    };
    let (x_lo, x_hi) = span(|p| p.0);
    let (y_lo, y_hi) = span(|p| p.1);
    axes(&mut out, y_lo, y_hi);
    for (i, &(a, b)) in points.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="3"><title>{}</title></circle>"#,
            LEFT + plot_width() * (a - x_lo) / (x_hi - x_lo),
            TOP + plot_height() * (y_hi - b) / (y_hi - y_lo),
            i + 1
        );
    }
    close(out)
}

fn plot_width() -> f64 {
    WIDTH - LEFT - RIGHT
}

fn plot_height() -> f64 {
    HEIGHT - TOP - BOTTOM
}

fn open(title: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" role="img">"#
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let _ = writeln!(
        out,
        r#"<text class="title" x="{:.2}" y="18" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    out
}

fn axes(out: &mut String, lo: f64, hi: f64) {
    let base = TOP + plot_height();
    let _ = writeln!(
        out,
        r#"<path class="axis" fill="none" d="M{LEFT:.2},{TOP:.2} V{base:.2} H{:.2}"/>"#,
        WIDTH - RIGHT
    );
    for (v, y) in [(hi, TOP), (lo, base)] {
        let _ = writeln!(
            out,
            r#"<text class="tick" x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 4.0,
            y + 4.0,
            tick(v)
        );
    }
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn close(mut out: String) -> String {
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::frequency_table;

    #[test]
    fn bar_chart_has_one_rect_per_category() {
        let t = frequency_table(&["a", "b", "a", "<c&>"]);
        let svg = bar_chart("Q & A", &t);
        assert_eq!(svg.matches(r#"class="bar""#).count(), 3);
        assert!(svg.contains("Q &amp; A"));
        assert!(svg.contains("&lt;c&amp;&gt;"));
        assert!(!svg.contains("<c&>"));
    }

    #[test]
    fn control_chart_marks_points_and_limits() {
        let limits = ControlLimits { lcl: 0.0, cl: 1.0, ucl: 2.0 };
        let svg = control_chart("X", &[0.5, 1.0, 2.5, 1.5], &limits);
        assert_eq!(svg.matches("<circle").count(), 4);
        assert_eq!(svg.matches(r#"class="point out""#).count(), 1);
        for c in ["ucl", "cl", "lcl"] {
            assert!(svg.contains(&format!(r#"class="ref {c}""#)));
        }
    }

    #[test]
    fn degenerate_inputs_stay_finite() {
        let limits = ControlLimits { lcl: 3.0, cl: 3.0, ucl: 3.0 };
        for svg in [
            control_chart("flat", &[3.0, 3.0], &limits),
            control_chart("none", &[], &limits),
            scatter_chart("one", &[(0.0, 0.0)]),
            scatter_chart("empty", &[]),
            bars("zero", &["a".into()], &[0.0]),
        ] {
            assert!(!svg.contains("NaN") && !svg.contains("inf"), "{svg}");
        }
    }

    #[test]
    fn tick_formatting() {
        assert_eq!(tick(2.5), "2.5");
        assert_eq!(tick(74.0), "74");
        assert_eq!(tick(-0.0001), "0");
        assert_eq!(tick(0.0123), "0.012");
    }
}
