//! Linear arrays of circular resonators and the point-source location.
//!
//! Lengths are dimensionless. Every array lies on the line `x2 = 0` with
//! centres ordered left to right; the source sits to the left of the array.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Polar coordinates `(rho, theta)` of `self` relative to `origin`.
    pub fn polar_about(&self, origin: &Point) -> (f64, f64) {
        let dx = self.x - origin.x;
        let dy = self.y - origin.y;
        (dx.hypot(dy), dy.atan2(dx))
    }

    /// Mirror image in the `x2` axis.
    pub fn mirror_x(&self) -> Point {
        Point::new(-self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonator {
    pub center: Point,
    pub radius: f64,
}

impl Resonator {
    pub fn contains(&self, p: &Point) -> bool {
        self.center.distance(p) < self.radius
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius
    }

    /// Point on the boundary at polar angle `theta`.
    pub fn boundary_point(&self, theta: f64) -> Point {
        Point::new(
            self.center.x + self.radius * theta.cos(),
            self.center.y + self.radius * theta.sin(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonatorArray {
    pub resonators: Vec<Resonator>,
    pub source: Point,
    pub grading_factor: f64,
}

/// A broken [`ResonatorArray`] invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositiveRadius { index: usize, radius: f64 },
    Overlap { first: usize, second: usize, distance: f64, radii_sum: f64 },
    SourceInside { index: usize },
    Unordered { index: usize },
    OffAxis { index: usize, y: f64 },
    NonPositiveGrading { s: f64 },
    Empty,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveRadius { index, radius } => {
                write!(f, "resonator {index} has non-positive radius {radius}")
            }
            Violation::Overlap { first, second, distance, radii_sum } => write!(
                f,
                "resonators {first} and {second} overlap: centre distance {distance} <= radii sum {radii_sum}"
            ),
            Violation::SourceInside { index } => {
                write!(f, "source lies inside or on resonator {index}")
            }
            Violation::Unordered { index } => {
                write!(f, "resonator {index} is not to the right of resonator {}", index - 1)
            }
            Violation::OffAxis { index, y } => {
                write!(f, "resonator {index} centre is off the x2 = 0 line (x2 = {y})")
            }
            Violation::NonPositiveGrading { s } => write!(f, "grading factor {s} is not positive"),
            Violation::Empty => write!(f, "array has no resonators"),
        }
    }
}

/// Builds `n` circles with radii `first_radius * s^i` along the positive `x1` axis.
///
/// The leftmost circle touches the origin. The gap between circles `i` and
/// `i + 1` is `gap_ratio` times the smaller of the two radii, so gaps scale
/// with the same factor `s` as the radii.
pub fn build_graded_array(
    n: usize,
    first_radius: f64,
    s: f64,
    gap_ratio: f64,
    source_x: f64,
) -> Result<ResonatorArray> {
    if n == 0 {
        return Err(Error::Geometry("n must be at least 1".into()));
    }
    if !(first_radius > 0.0 && first_radius.is_finite()) {
        return Err(Error::Geometry(format!("first_radius must be positive, got {first_radius}")));
    }
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Geometry(format!("grading factor s must be positive, got {s}")));
    }
    if !(gap_ratio > 0.0 && gap_ratio.is_finite()) {
        return Err(Error::Geometry(format!("gap_ratio must be positive, got {gap_ratio}")));
    }
    if !(source_x < 0.0) {
        return Err(Error::Geometry(format!(
            "source_x must lie left of the array (negative), got {source_x}"
        )));
    }

    let mut resonators = Vec::with_capacity(n);
    let mut radius = first_radius;
    let mut center_x = first_radius;
    for i in 0..n {
        if i > 0 {
            let prev = radius;
            radius = prev * s;
            center_x += prev + gap_ratio * prev.min(radius) + radius;
        }
        resonators.push(Resonator { center: Point::new(center_x, 0.0), radius });
    }

    let array = ResonatorArray { resonators, source: Point::new(source_x, 0.0), grading_factor: s };
    let violations = validate_array(&array);
    if !violations.is_empty() {
        let msg: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::Geometry(msg.join("; ")));
    }
    Ok(array)
}

/// Lists every broken invariant; an empty list means the array is valid.
pub fn validate_array(array: &ResonatorArray) -> Vec<Violation> {
    let mut out = Vec::new();
    if array.resonators.is_empty() {
        out.push(Violation::Empty);
    }
    if !(array.grading_factor > 0.0) {
        out.push(Violation::NonPositiveGrading { s: array.grading_factor });
    }
    for (i, r) in array.resonators.iter().enumerate() {
        if !(r.radius > 0.0 && r.radius.is_finite()) {
            out.push(Violation::NonPositiveRadius { index: i, radius: r.radius });
        }
        if r.center.y != 0.0 {
            out.push(Violation::OffAxis { index: i, y: r.center.y });
        }
        if i > 0 && !(r.center.x > array.resonators[i - 1].center.x) {
            out.push(Violation::Unordered { index: i });
        }
        if r.center.distance(&array.source) <= r.radius {
            out.push(Violation::SourceInside { index: i });
        }
    }
    for i in 0..array.resonators.len() {
        for j in i + 1..array.resonators.len() {
            let (a, b) = (&array.resonators[i], &array.resonators[j]);
            let distance = a.center.distance(&b.center);
            let radii_sum = a.radius + b.radius;
            if !(distance > radii_sum) {
                out.push(Violation::Overlap { first: i, second: j, distance, radii_sum });
            }
        }
    }
    out
}

impl ResonatorArray {
    pub fn len(&self) -> usize {
        self.resonators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resonators.is_empty()
    }

    pub fn radii(&self) -> Vec<f64> {
        self.resonators.iter().map(|r| r.radius).collect()
    }

    /// Index of the resonator with the largest radius (last one on ties).
    pub fn largest(&self) -> usize {
        let mut best = 0;
        for (i, r) in self.resonators.iter().enumerate() {
            if r.radius >= self.resonators[best].radius {
                best = i;
            }
        }
        best
    }

    pub fn max_radius(&self) -> f64 {
        self.resonators.iter().map(|r| r.radius).fold(0.0, f64::max)
    }

    /// Distance from the leftmost to the rightmost circle boundary.
    pub fn width(&self) -> f64 {
        match (self.resonators.first(), self.resonators.last()) {
            (Some(a), Some(b)) => (b.center.x + b.radius) - (a.center.x - a.radius),
            _ => 0.0,
        }
    }

    /// Resonator whose closed disk contains `p`, if any.
    pub fn locate(&self, p: &Point) -> Option<usize> {
        self.resonators.iter().position(|r| r.contains(p))
    }

    /// Axis-aligned bounding box `(xmin, xmax, ymin, ymax)` of the circles and the source.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        let mut b = (self.source.x, self.source.x, self.source.y, self.source.y);
        for r in &self.resonators {
            b.0 = b.0.min(r.center.x - r.radius);
            b.1 = b.1.max(r.center.x + r.radius);
            b.2 = b.2.min(r.center.y - r.radius);
            b.3 = b.3.max(r.center.y + r.radius);
        }
        b
    }

    /// Two identical circles placed symmetrically about the `x2` axis.
    pub fn mirrored_pair(radius: f64, gap: f64, source: Point) -> Result<Self> {
        let c = radius + 0.5 * gap;
        let array = ResonatorArray {
            resonators: vec![
                Resonator { center: Point::new(-c, 0.0), radius },
                Resonator { center: Point::new(c, 0.0), radius },
            ],
            source,
            grading_factor: 1.0,
        };
        let violations = validate_array(&array);
        if !violations.is_empty() {
            return Err(Error::Geometry(violations[0].to_string()));
        }
        Ok(array)
    }
}
