//! Distance-matched precision/recall.
//!
//! A detection is a true positive when it claims a ground-truth point within
//! the match radius. Matching is greedy and one-to-one: detections are taken in
//! confidence order and each claims the nearest unclaimed ground-truth point.
//! Counts are pooled across volumes before precision and recall are computed.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::volume::within_radius;

pub const DEFAULT_MATCH_RADIUS: f64 = 30.0;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    /// `(detection index, ground-truth index)`, in detection order.
    pub tp: Vec<(usize, usize)>,
    pub fp: Vec<usize>,
    #[serde(rename = "fn")]
    pub fn_: Vec<usize>,
}

pub fn match_detections(dets: &PointSet, gt: &PointSet, r_match: f64) -> Result<MatchResult> {
    dets.validate_detections()?;
    let mut claimed = vec![false; gt.len()];
    let mut result = MatchResult::default();
    for (di, d) in dets.iter().enumerate() {
        let best = gt
            .iter()
            .enumerate()
            .filter(|(gi, _)| !claimed[*gi])
            .map(|(gi, g)| (d.position.distance_sq(&g.position), gi))
            .filter(|&(d2, _)| within_radius(d2, r_match))
            .min();
        match best {
            Some((_, gi)) => {
                claimed[gi] = true;
                result.tp.push((di, gi));
            }
            None => result.fp.push(di),
        }
    }
    result.fn_ = (0..gt.len()).filter(|&g| !claimed[g]).collect();
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrRow {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl PrRow {
    fn from_counts(threshold: f64, tp: usize, fp: usize, total_gt: usize) -> Self {
        let precision = if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if total_gt == 0 {
            0.0
        } else {
            tp as f64 / total_gt as f64
        };
        Self {
            threshold,
            precision,
            recall,
            tp,
            fp,
            fn_: total_gt - tp,
        }
    }
}

/// Rows ordered by decreasing threshold, starting with a `+inf` row at which
/// nothing is detected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub rows: Vec<PrRow>,
    pub match_radius: f64,
}

/// Pooled curve over paired per-volume detections and ground truth, with one
/// row per distinct detection confidence.
pub fn pr_curve(dets_per_volume: &[PointSet], gt_per_volume: &[PointSet], r_match: f64) -> Result<PrCurve> {
    if dets_per_volume.len() != gt_per_volume.len() {
        return Err(Error::invalid(format!(
            "{} detection sets but {} ground-truth sets",
            dets_per_volume.len(),
            gt_per_volume.len()
        )));
    }
    // Greedy matching of a confidence-sorted prefix is the prefix of the full
    // greedy matching, so one pass per volume serves every threshold.
    let mut scored: Vec<(f32, bool)> = Vec::new();
    let mut total_gt = 0;
    for (dets, gt) in dets_per_volume.iter().zip(gt_per_volume) {
        let m = match_detections(dets, gt, r_match)?;
        total_gt += gt.len();
        let mut hit = vec![false; dets.len()];
        for &(d, _) in &m.tp {
            hit[d] = true;
        }
        scored.extend((0..dets.len()).map(|i| (dets.confidence(i), hit[i])));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut rows = vec![PrRow::from_counts(f64::INFINITY, 0, 0, total_gt)];
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < scored.len() {
        let tau = scored[i].0;
        while i < scored.len() && scored[i].0 == tau {
            if scored[i].1 {
                tp += 1
            } else {
                fp += 1
            }
            i += 1;
        }
        rows.push(PrRow::from_counts(tau as f64, tp, fp, total_gt));
    }
    Ok(PrCurve {
        rows,
        match_radius: r_match,
    })
}

/// Step-wise area under the curve: `Σ (R_k − R_{k−1}) · P_k` in row order.
pub fn average_precision(curve: &PrCurve) -> f64 {
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for row in &curve.rows {
        area += (row.recall - prev_recall) * row.precision;
        prev_recall = row.recall;
    }
    area.clamp(0.0, 1.0)
}

/// Precision at the highest threshold whose recall reaches `target`, if any.
pub fn precision_at_recall(curve: &PrCurve, target: f64) -> Option<f64> {
    curve.rows.iter().find(|r| r.recall >= target).map(|r| r.precision)
}

/// Counts for the detections with confidence `>= tau`: the lowest-threshold row
/// still at or above `tau`, or the `+inf` row if there is none.
pub fn operating_point(curve: &PrCurve, tau: f64) -> PrRow {
    curve
        .rows
        .iter()
        .rev()
        .find(|r| r.threshold >= tau)
        .copied()
        .unwrap_or(curve.rows[0])
}

fn fmt_threshold(t: f64) -> String {
    if t.is_infinite() {
        "inf".to_string()
    } else {
        format!("{t}")
    }
}

pub fn pr_csv(curve: &PrCurve) -> String {
    let mut s = String::from("threshold,precision,recall,tp,fp,fn\n");
    for r in &curve.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            fmt_threshold(r.threshold),
            r.precision,
            r.recall,
            r.tp,
            r.fp,
            r.fn_
        );
    }
    s
}

pub fn write_pr_csv(curve: &PrCurve, path: &Path) -> Result<()> {
    std::fs::write(path, pr_csv(curve)).map_err(|e| Error::io(path, e))
}

/// Standalone SVG plot, recall on x and precision on y, both over `[0, 1]`.
pub fn pr_svg(curve: &PrCurve) -> String {
    const W: f64 = 480.0;
    const H: f64 = 480.0;
    const M: f64 = 50.0;
    let px = |r: f64| M + r * (W - 2.0 * M);
    let py = |p: f64| H - M - p * (H - 2.0 * M);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    for k in 0..=10 {
        let t = k as f64 / 10.0;
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#ddd"/><line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#ddd"/>"##,
            px(t),
            py(0.0),
            px(t),
            py(1.0),
            px(0.0),
            py(t),
            px(1.0),
            py(t)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{t:.1}</text><text x="{:.1}" y="{:.1}" text-anchor="end">{t:.1}</text>"#,
            px(t),
            py(0.0) + 16.0,
            px(0.0) - 6.0,
            py(t) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * M,
        H - 2.0 * M
    );
    let pts: Vec<String> = curve
        .rows
        .iter()
        .map(|r| format!("{:.2},{:.2}", px(r.recall), py(r.precision)))
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#c0392b" stroke-width="2"/>"##,
        pts.join(" ")
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">recall</text>"#,
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">precision</text>"#,
        H / 2.0,
        H / 2.0
    );
    s.push_str("</svg>\n");
    s
}

pub fn write_pr_svg(curve: &PrCurve, path: &Path) -> Result<()> {
    std::fs::write(path, pr_svg(curve)).map_err(|e| Error::io(path, e))
}
