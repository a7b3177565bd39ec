//! Minimal static SVG charts for the report figures.

use std::fmt::Write;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Five-number summary with 1.5 IQR whiskers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub mean: f64,
}

/// Linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Option<BoxStats> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let (q1, q3) = (quantile(&v, 0.25), quantile(&v, 0.75));
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        Some(BoxStats {
            n: v.len(),
            min: v[0],
            q1,
            median: quantile(&v, 0.5),
            q3,
            max: v[v.len() - 1],
            whisker_lo: *v.iter().find(|x| **x >= lo_fence).expect("q1 is inside"),
            whisker_hi: *v
                .iter()
                .rev()
                .find(|x| **x <= hi_fence)
                .expect("q3 is inside"),
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }
}

/// Plot area with a linear y axis.
struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    lo: f64,
    hi: f64,
}

impl Frame {
    fn y(&self, v: f64) -> f64 {
        self.y0 + self.h * (1.0 - (v - self.lo) / (self.hi - self.lo))
    }

    fn axes(&self, s: &mut String, ylabel: &str) {
        let _ = write!(
            s,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444"/>"##,
            self.x0, self.y0, self.w, self.h
        );
        for k in 0..=4 {
            let v = self.lo + (self.hi - self.lo) * k as f64 / 4.0;
            let y = self.y(v);
            let _ = write!(
                s,
                r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{v:.2}</text>"##,
                self.x0,
                self.x0 + self.w,
                self.x0 - 4.0,
                y + 3.0
            );
        }
        let _ = write!(
            s,
            r#"<text x="12" y="{:.1}" font-size="11" transform="rotate(-90 12 {:.1})" text-anchor="middle">{}</text>"#,
            self.y0 + self.h / 2.0,
            self.y0 + self.h / 2.0,
            esc(ylabel)
        );
    }
}

fn open(w: f64, h: f64, title: &str) -> String {
    format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" font-family="sans-serif"><rect width="100%" height="100%" fill="white"/><text x="{:.1}" y="18" font-size="13" text-anchor="middle">{}</text>"#,
        w / 2.0,
        esc(title)
    )
}

fn padded_range(values: impl Iterator<Item = f64>, floor: Option<f64>) -> (f64, f64) {
    let (mut lo, mut hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if let Some(f) = floor {
        lo = lo.min(f);
    }
    if hi - lo < 1e-9 {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn x_label(s: &mut String, x: f64, y: f64, text: &str) {
    let _ = write!(
        s,
        r#"<text x="{x:.1}" y="{y:.1}" font-size="10" text-anchor="end" transform="rotate(-35 {x:.1} {y:.1})">{}</text>"#,
        esc(text)
    );
}

pub fn boxplot(title: &str, ylabel: &str, boxes: &[(String, Option<BoxStats>)]) -> String {
    let slot = 56.0;
    let (w, h) = (90.0 + slot * boxes.len().max(1) as f64, 420.0);
    let (lo, hi) = padded_range(
        boxes
            .iter()
            .filter_map(|(_, b)| *b)
            .flat_map(|b| [b.min, b.max]),
        None,
    );
    let f = Frame {
        x0: 60.0,
        y0: 34.0,
        w: w - 80.0,
        h: 250.0,
        lo,
        hi,
    };
    let mut s = open(w, h, title);
    f.axes(&mut s, ylabel);
    for (i, (label, b)) in boxes.iter().enumerate() {
        let cx = f.x0 + slot * (i as f64 + 0.5);
        x_label(&mut s, cx, f.y0 + f.h + 14.0, label);
        let Some(b) = b else { continue };
        let half = slot * 0.3;
        let _ = write!(
            s,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/><rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{}" fill-opacity="0.5" stroke="black"/><line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black" stroke-width="2"/>"#,
            f.y(b.whisker_lo),
            f.y(b.whisker_hi),
            cx - half,
            f.y(b.q3),
            2.0 * half,
            (f.y(b.q1) - f.y(b.q3)).max(0.5),
            color(i),
            cx - half,
            f.y(b.median),
            cx + half,
            f.y(b.median)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
    pub dashed: bool,
}

/// Lines over categorical x positions; NaN values break the line.
pub fn lines(title: &str, ylabel: &str, x: &[String], series: &[Series]) -> String {
    let (w, h) = (620.0, 360.0 + 14.0 * series.len() as f64);
    let (lo, hi) = padded_range(series.iter().flat_map(|s| s.values.iter().copied()), None);
    let f = Frame {
        x0: 60.0,
        y0: 34.0,
        w: 420.0,
        h: 240.0,
        lo,
        hi,
    };
    let mut s = open(w, h, title);
    f.axes(&mut s, ylabel);
    let step = f.w / x.len().max(1) as f64;
    let px = |i: usize| f.x0 + step * (i as f64 + 0.5);
    for (i, l) in x.iter().enumerate() {
        x_label(&mut s, px(i), f.y0 + f.h + 14.0, l);
    }
    for (k, se) in series.iter().enumerate() {
        let dash = if se.dashed {
            r#" stroke-dasharray="5 3""#
        } else {
            ""
        };
        let mut path = String::new();
        let mut pen_down = false;
        for (i, v) in se.values.iter().enumerate() {
            if !v.is_finite() {
                pen_down = false;
                continue;
            }
            let _ = write!(
                path,
                "{}{:.1} {:.1} ",
                if pen_down { "L" } else { "M" },
                px(i),
                f.y(*v)
            );
            pen_down = true;
            let _ = write!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{}"/>"#,
                px(i),
                f.y(*v),
                color(k)
            );
        }
        if !path.is_empty() {
            let _ = write!(
                s,
                r#"<path d="{}" fill="none" stroke="{}"{dash}/>"#,
                path.trim_end(),
                color(k)
            );
        }
        let ly = f.y0 + f.h + 70.0 + 14.0 * k as f64;
        let _ = write!(
            s,
            r#"<line x1="60" y1="{:.1}" x2="80" y2="{:.1}" stroke="{}"{dash}/><text x="86" y="{:.1}" font-size="10">{}</text>"#,
            ly,
            ly,
            color(k),
            ly + 3.0,
            esc(&se.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// One group of bars per entry, bars coloured by category.
pub fn grouped_bars(title: &str, categories: &[&str], groups: &[(String, Vec<f64>)]) -> String {
    let slot = 30.0 + 14.0 * categories.len() as f64;
    let (w, h) = (140.0 + slot * groups.len().max(1) as f64, 440.0);
    let f = Frame {
        x0: 60.0,
        y0: 34.0,
        w: slot * groups.len().max(1) as f64,
        h: 220.0,
        lo: 0.0,
        hi: 1.0,
    };
    let mut s = open(w, h, title);
    f.axes(&mut s, "fraction of patients");
    for (g, (name, values)) in groups.iter().enumerate() {
        let gx = f.x0 + slot * g as f64 + 15.0;
        for (c, v) in values.iter().enumerate() {
            let v = if v.is_finite() {
                v.clamp(0.0, 1.0)
            } else {
                0.0
            };
            let _ = write!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="12" height="{:.1}" fill="{}"/>"#,
                gx + 14.0 * c as f64,
                f.y(v),
                f.y(0.0) - f.y(v),
                color(c)
            );
        }
        x_label(&mut s, gx + slot / 2.0, f.y0 + f.h + 14.0, name);
    }
    for (c, name) in categories.iter().enumerate() {
        let ly = 60.0 + 14.0 * c as f64;
        let lx = f.x0 + f.w + 12.0;
        let _ = write!(
            s,
            r#"<rect x="{lx:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{ly:.1}" font-size="10">{}</text>"#,
            ly - 9.0,
            color(c),
            lx + 14.0,
            esc(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Grid of (dsc, rel_err) scatter panels, one row per feature.
pub fn scatter_grid(
    title: &str,
    rows: &[String],
    cols: &[String],
    points: &[Vec<Vec<(f64, f64)>>],
) -> String {
    let (pw, ph) = (150.0, 120.0);
    let (x0, y0) = (200.0, 50.0);
    let w = x0 + pw * cols.len().max(1) as f64 + 20.0;
    let h = y0 + ph * rows.len().max(1) as f64 + 30.0;
    let mut s = open(w, h, title);
    for (c, name) in cols.iter().enumerate() {
        let _ = write!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
            x0 + pw * (c as f64 + 0.5),
            y0 - 8.0,
            esc(name)
        );
    }
    for (r, name) in rows.iter().enumerate() {
        let py = y0 + ph * r as f64;
        let _ = write!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="end">{}</text>"#,
            x0 - 8.0,
            py + ph / 2.0,
            esc(name)
        );
        let emax = points[r]
            .iter()
            .flatten()
            .map(|p| p.1)
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max)
            .max(1e-9);
        for c in 0..cols.len() {
            let (bx, by, bw, bh) = (x0 + pw * c as f64 + 6.0, py + 6.0, pw - 12.0, ph - 16.0);
            let _ = write!(
                s,
                r##"<rect x="{bx:.1}" y="{by:.1}" width="{bw:.1}" height="{bh:.1}" fill="none" stroke="#999"/>"##
            );
            for &(d, e) in &points[r][c] {
                if !(d.is_finite() && e.is_finite()) {
                    continue;
                }
                let _ = write!(
                    s,
                    r#"<circle cx="{:.1}" cy="{:.1}" r="1.8" fill="{}" fill-opacity="0.7"/>"#,
                    bx + bw * d.clamp(0.0, 1.0),
                    by + bh * (1.0 - e / emax),
                    color(c)
                );
            }
        }
    }
    let _ = write!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">x: DSC in [0, 1]; y: relative error, 0 to row maximum</text>"#,
        w / 2.0,
        h - 8.0
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_interpolate() {
        let b = BoxStats::from_values(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (2.0, 3.0, 4.0));
        assert_eq!(b.whisker_hi, 4.0);
        assert_eq!(b.max, 100.0);
        assert!(BoxStats::from_values(&[f64::NAN]).is_none());
    }

    #[test]
    fn charts_are_well_formed() {
        let b = BoxStats::from_values(&[0.4, 0.5, 0.6]);
        let svg = boxplot(
            "AUC",
            "ROC-AUC",
            &[("a<b".into(), b), ("empty".into(), None)],
        );
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b"));
        let l = lines(
            "t",
            "icc",
            &["x1".into(), "x2".into()],
            &[Series {
                name: "f".into(),
                values: vec![0.5, f64::NAN],
                dashed: true,
            }],
        );
        assert!(l.contains("stroke-dasharray"));
    }
}
