//! Point annotations: ground-truth object centers and scored detections.

use crate::error::{Error, Result};
use crate::volume::{Coordinate, Dims};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub position: Coordinate,
    /// Present on detections, absent on ground truth.
    pub confidence: Option<f32>,
}

impl Point {
    pub fn ground_truth(position: Coordinate) -> Self {
        Self {
            position,
            confidence: None,
        }
    }

    pub fn detection(position: Coordinate, confidence: f32) -> Self {
        Self {
            position,
            confidence: Some(confidence),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointSet {
    pub points: Vec<Point>,
}

impl PointSet {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn from_positions(positions: impl IntoIterator<Item = Coordinate>) -> Self {
        Self::new(positions.into_iter().map(Point::ground_truth).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    pub fn positions(&self) -> impl Iterator<Item = Coordinate> + '_ {
        self.points.iter().map(|p| p.position)
    }

    /// Confidence of point `i`; ground-truth points read as 1.
    pub fn confidence(&self, i: usize) -> f32 {
        self.points[i].confidence.unwrap_or(1.0)
    }

    /// Checks the shared invariant: any confidence present is finite and in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if let Some(c) = p.confidence {
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::invalid(format!("point {i}: confidence {c} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    pub fn validate_ground_truth(&self) -> Result<()> {
        if let Some(i) = self.points.iter().position(|p| p.confidence.is_some()) {
            return Err(Error::invalid(format!("ground-truth point {i} carries a confidence")));
        }
        Ok(())
    }

    /// Detections must all be scored and sorted by non-increasing confidence.
    pub fn validate_detections(&self) -> Result<()> {
        self.validate()?;
        let mut prev = f32::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let c = p
                .confidence
                .ok_or_else(|| Error::invalid(format!("detection {i} has no confidence")))?;
            if c > prev {
                return Err(Error::invalid(format!(
                    "detections not sorted by confidence at index {i} ({c} after {prev})"
                )));
            }
            prev = c;
        }
        Ok(())
    }

    pub fn check_inside(&self, dims: Dims) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if !dims.contains(&p.position) {
                return Err(Error::invalid(format!(
                    "point {i} at {} lies outside volume {dims}",
                    p.position
                )));
            }
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a PointSet {
    type Item = &'a Point;
    type IntoIter = std::slice::Iter<'a, Point>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

impl FromIterator<Point> for PointSet {
    fn from_iter<I: IntoIterator<Item = Point>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}
