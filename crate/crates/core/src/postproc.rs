//! Voxel predictions to ranked object detections.
//!
//! Predictions are first smoothed with a mean filter (a Euclidean ball by
//! default), then peaks are extracted greedily: take the global maximum, emit
//! it, zero everything within `r_n`, repeat.

use serde::{Deserialize, Serialize};

use crate::par;
use crate::points::{Point, PointSet};
use crate::volume::{ball_rows, clip_span, for_each_in_ball, Volume3};

pub const DEFAULT_AVERAGING_RADIUS: f64 = 7.0;
pub const DEFAULT_NMS_RADIUS: f64 = 21.0;
pub const DEFAULT_CONFIDENCE_FLOOR: f32 = 1e-6;

/// Shape of the averaging filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AveragingWindow {
    /// Closed Euclidean ball of radius `r_a`.
    #[default]
    Ball,
    /// Axis-aligned cube of half-width `floor(r_a)`.
    Cube,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostprocConfig {
    pub r_a: f64,
    pub r_n: f64,
    pub confidence_floor: f32,
    pub max_detections: Option<usize>,
    #[serde(default)]
    pub window: AveragingWindow,
}

impl Default for PostprocConfig {
    fn default() -> Self {
        Self {
            r_a: DEFAULT_AVERAGING_RADIUS,
            r_n: DEFAULT_NMS_RADIUS,
            confidence_floor: DEFAULT_CONFIDENCE_FLOOR,
            max_detections: None,
            window: AveragingWindow::Ball,
        }
    }
}

impl PostprocConfig {
    pub fn warn_if_unusual(&self) {
        if self.r_n < self.r_a {
            log::warn!(
                "suppression radius {} is smaller than averaging radius {}",
                self.r_n,
                self.r_a
            );
        }
    }
}

/// Ball mean filter; each output is normalized by the number of in-bounds
/// voxels in its ball, so constants are preserved up to the faces.
pub fn average_predictions(pred: &Volume3, r_a: f64) -> Volume3 {
    average_predictions_with(pred, r_a, AveragingWindow::Ball)
}

pub fn average_predictions_with(pred: &Volume3, r_a: f64, window: AveragingWindow) -> Volume3 {
    match window {
        AveragingWindow::Ball => ball_average(pred, r_a),
        AveragingWindow::Cube => cube_average(pred, r_a.max(0.0).floor() as usize),
    }
}

fn ball_average(pred: &Volume3, r_a: f64) -> Volume3 {
    let dims = pred.dims();
    let (nx, ny, nz) = (dims.nx, dims.ny, dims.nz);
    // prefix sums along x, one (nx + 1)-long run per (y, z) row
    let stride = nx + 1;
    let mut prefix = vec![0.0f64; stride * ny * nz];
    for (r, row) in pred.data().chunks_exact(nx).enumerate() {
        let p = &mut prefix[r * stride..(r + 1) * stride];
        for (x, &v) in row.iter().enumerate() {
            p[x + 1] = p[x] + v as f64;
        }
    }
    let rows = ball_rows(r_a);
    let mut out = vec![0.0f32; dims.len()];
    par::for_each_chunk_mut(&mut out, nx * ny, |z, slab| {
        for y in 0..ny {
            for x in 0..nx {
                let mut sum = 0.0f64;
                let mut count = 0usize;
                for &(dy, dz, w) in &rows {
                    let (yy, zz) = (y as i64 + dy, z as i64 + dz);
                    if yy < 0 || zz < 0 || yy >= ny as i64 || zz >= nz as i64 {
                        continue;
                    }
                    if let Some((x0, x1)) = clip_span(x as i64, w, w, nx) {
                        let p = &prefix[(yy as usize + ny * zz as usize) * stride..];
                        sum += p[x1 + 1] - p[x0];
                        count += x1 - x0 + 1;
                    }
                }
                slab[x + nx * y] = (sum / count as f64) as f32;
            }
        }
    });
    pred.like(out)
}

/// Summed-volume table mean over a clipped cube.
fn cube_average(pred: &Volume3, half: usize) -> Volume3 {
    let dims = pred.dims();
    let (nx, ny, nz) = (dims.nx, dims.ny, dims.nz);
    let (sx, sy) = (nx + 1, ny + 1);
    let mut sat = vec![0.0f64; sx * sy * (nz + 1)];
    let at = |x: usize, y: usize, z: usize| x + sx * (y + sy * z);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let v = pred.get(x, y, z) as f64;
                sat[at(x + 1, y + 1, z + 1)] =
                    v + sat[at(x, y + 1, z + 1)] + sat[at(x + 1, y, z + 1)] + sat[at(x + 1, y + 1, z)]
                        - sat[at(x, y, z + 1)]
                        - sat[at(x, y + 1, z)]
                        - sat[at(x + 1, y, z)]
                        + sat[at(x, y, z)];
            }
        }
    }
    let h = half as i64;
    let mut out = vec![0.0f32; dims.len()];
    par::for_each_chunk_mut(&mut out, nx * ny, |z, slab| {
        let (z0, z1) = clip_span(z as i64, h, h, nz).expect("z in range");
        for y in 0..ny {
            let (y0, y1) = clip_span(y as i64, h, h, ny).expect("y in range");
            for x in 0..nx {
                let (x0, x1) = clip_span(x as i64, h, h, nx).expect("x in range");
                let (a, b) = ((x0, y0, z0), (x1 + 1, y1 + 1, z1 + 1));
                let s =
                    sat[at(b.0, b.1, b.2)] - sat[at(a.0, b.1, b.2)] - sat[at(b.0, a.1, b.2)] - sat[at(b.0, b.1, a.2)]
                        + sat[at(a.0, a.1, b.2)]
                        + sat[at(a.0, b.1, a.2)]
                        + sat[at(b.0, a.1, a.2)]
                        - sat[at(a.0, a.1, a.2)];
                let count = (x1 - x0 + 1) * (y1 - y0 + 1) * (z1 - z0 + 1);
                slab[x + nx * y] = (s / count as f64) as f32;
            }
        }
    });
    pred.like(out)
}

/// Greedy non-maximum suppression.
///
/// Equivalent to repeatedly taking the global maximum (ties to the smallest
/// linear index), stopping once it is at or below `confidence_floor`, and
/// zeroing the closed ball of radius `r_n` around each emitted peak. Values
/// never increase during suppression, so one descending pass over the
/// candidates visits peaks in exactly that order.
pub fn nms_detect(avg: &Volume3, config: &PostprocConfig) -> PointSet {
    let dims = avg.dims();
    let data = avg.data();
    if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
        log::warn!("averaged predictions fall outside [0, 1]; confidences will too");
    }
    let floor = config.confidence_floor;
    let mut candidates: Vec<usize> = (0..data.len()).filter(|&i| data[i] > floor).collect();
    candidates.sort_unstable_by(|&a, &b| data[b].total_cmp(&data[a]).then(a.cmp(&b)));

    let rows = ball_rows(config.r_n);
    let mut suppressed = vec![false; data.len()];
    let mut out = Vec::new();
    let limit = config.max_detections.unwrap_or(usize::MAX);
    for i in candidates {
        if out.len() >= limit {
            break;
        }
        if suppressed[i] {
            continue;
        }
        let c = dims.coord(i);
        out.push(Point::detection(c, data[i]));
        for_each_in_ball(dims, &c, &rows, |j| suppressed[j] = true);
    }
    PointSet::new(out)
}

/// Average then suppress.
pub fn detect(pred: &Volume3, config: &PostprocConfig) -> PointSet {
    config.warn_if_unusual();
    let avg = average_predictions_with(pred, config.r_a, config.window);
    nms_detect(&avg, config)
}

/// Leading detections with confidence `>= tau`.
pub fn threshold_detections(dets: &PointSet, tau: f64) -> PointSet {
    let keep = dets
        .points
        .iter()
        .take_while(|p| p.confidence.unwrap_or(0.0) as f64 >= tau)
        .count();
    PointSet::new(dets.points[..keep].to_vec())
}
