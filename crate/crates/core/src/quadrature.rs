//! Quadrature rules on the disks and on the box `Q` minus the disks.
//!
//! Integrands here are smooth on each disk and on the exterior, but have a
//! derivative kink across the circles, so every rule is aligned with the
//! circles: Gauss–Legendre in radius times a uniform angular rule on each
//! disk, and for the exterior a tiling of `Q` into rectangles (composite
//! tensor Gauss–Legendre) plus one box per disk integrated in polar
//! coordinates about the disk centre.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::boundary::Region;
use crate::error::{Error, Result};
use crate::geometry::{Point, ResonatorArray};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
            z = 0.0;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Maps Gauss–Legendre nodes to `[a, b]`.
fn mapped<'a>(x: &'a [f64], w: &'a [f64], a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + 'a {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter().zip(w).map(move |(&t, &wt)| (mid + half * t, half * wt))
}

/// A quadrature node tagged with the region whose field representation applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub point: Point,
    pub weight: f64,
    pub region: Region,
}

/// Node counts for all rules. Doubling every count gives the refinement
/// used in self-convergence checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureCounts {
    /// Gauss–Legendre nodes in radius on each disk.
    pub disk_radial: usize,
    /// Uniform angular nodes on each disk.
    pub disk_angular: usize,
    /// Gauss–Legendre nodes per panel side on exterior rectangles.
    pub panel_nodes: usize,
    /// Target panel side length for exterior rectangles.
    pub panel_size: f64,
    /// Gauss–Legendre nodes in angle per sector of a disk box.
    pub box_angular: usize,
    /// Gauss–Legendre nodes in radius inside a disk box.
    pub box_radial: usize,
}

impl Default for QuadratureCounts {
    fn default() -> Self {
        QuadratureCounts {
            disk_radial: 10,
            disk_angular: 24,
            panel_nodes: 8,
            panel_size: 2.5,
            box_angular: 12,
            box_radial: 10,
        }
    }
}

impl QuadratureCounts {
    pub const MIN_NODES: usize = 4;

    pub fn refined(&self) -> Self {
        QuadratureCounts {
            disk_radial: 2 * self.disk_radial,
            disk_angular: 2 * self.disk_angular,
            panel_nodes: 2 * self.panel_nodes,
            panel_size: self.panel_size,
            box_angular: 2 * self.box_angular,
            box_radial: 2 * self.box_radial,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("disk_radial", self.disk_radial),
            ("disk_angular", self.disk_angular),
            ("panel_nodes", self.panel_nodes),
            ("box_angular", self.box_angular),
            ("box_radial", self.box_radial),
        ];
        for (name, c) in counts {
            if c < Self::MIN_NODES {
                return Err(Error::Quadrature(format!("{name} = {c} is below the minimum {}", Self::MIN_NODES)));
            }
        }
        if !(self.panel_size > 0.0 && self.panel_size.is_finite()) {
            return Err(Error::Quadrature(format!("panel_size must be positive, got {}", self.panel_size)));
        }
        Ok(())
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn contains_strictly(&self, p: &Point) -> bool {
        p.x > self.x0 && p.x < self.x1 && p.y > self.y0 && p.y < self.y1
    }
}

/// Bounding box of the disks and the source, each side pushed out by
/// `inflation` times the box diagonal.
pub fn inflated_box(array: &ResonatorArray, inflation: f64) -> Rect {
    let (x0, x1, y0, y1) = array.bounding_box();
    let pad = inflation * (x1 - x0).hypot(y1 - y0);
    Rect { x0: x0 - pad, x1: x1 + pad, y0: y0 - pad, y1: y1 + pad }
}

/// Nodes of the rule on disk `i`.
pub fn disk_nodes(array: &ResonatorArray, i: usize, counts: &QuadratureCounts) -> Vec<Node> {
    let res = array.resonators[i];
    let (x, w) = gauss_legendre(counts.disk_radial);
    let dt = 2.0 * PI / counts.disk_angular as f64;
    let mut out = Vec::with_capacity(counts.disk_radial * counts.disk_angular);
    for (rho, wr) in mapped(&x, &w, 0.0, res.radius) {
        for a in 0..counts.disk_angular {
            let t = a as f64 * dt;
            out.push(Node {
                point: Point::new(res.center.x + rho * t.cos(), res.center.y + rho * t.sin()),
                weight: wr * rho * dt,
                region: Region::Interior(i),
            });
        }
    }
    out
}

/// Nodes of the rules on every disk, disk by disk.
pub fn interior_nodes(array: &ResonatorArray, counts: &QuadratureCounts) -> Vec<Node> {
    (0..array.len()).flat_map(|i| disk_nodes(array, i, counts)).collect()
}

fn rect_nodes(r: &Rect, counts: &QuadratureCounts, out: &mut Vec<Node>) {
    let (x, w) = gauss_legendre(counts.panel_nodes);
    let nx = ((r.x1 - r.x0) / counts.panel_size).ceil().max(1.0) as usize;
    let ny = ((r.y1 - r.y0) / counts.panel_size).ceil().max(1.0) as usize;
    let hx = (r.x1 - r.x0) / nx as f64;
    let hy = (r.y1 - r.y0) / ny as f64;
    for px in 0..nx {
        let ax = r.x0 + px as f64 * hx;
        for py in 0..ny {
            let ay = r.y0 + py as f64 * hy;
            for (xx, wx) in mapped(&x, &w, ax, ax + hx) {
                for (yy, wy) in mapped(&x, &w, ay, ay + hy) {
                    out.push(Node { point: Point::new(xx, yy), weight: wx * wy, region: Region::Exterior });
                }
            }
        }
    }
}

/// Polar rule on `box \ disk` about the disk centre. The box must contain the disk.
fn box_minus_disk_nodes(
    center: Point,
    radius: f64,
    b: &Rect,
    counts: &QuadratureCounts,
    out: &mut Vec<Node>,
) {
    let (xt, wt) = gauss_legendre(counts.box_angular);
    let (xr, wr) = gauss_legendre(counts.box_radial);
    let (dx0, dx1) = (b.x0 - center.x, b.x1 - center.x);
    let (dy0, dy1) = (b.y0 - center.y, b.y1 - center.y);
    // Corner angles in increasing order starting from the lower-right corner.
    let corners = [dy0.atan2(dx1), dy1.atan2(dx1), dy1.atan2(dx0), dy0.atan2(dx0) + 2.0 * PI];
    for s in 0..4 {
        let (t0, t1) = (corners[s], if s == 3 { corners[0] + 2.0 * PI } else { corners[s + 1] });
        for (t, wtt) in mapped(&xt, &wt, t0, t1) {
            let (c, sn) = (t.cos(), t.sin());
            let rho_max = match s {
                0 => dx1 / c,
                1 => dy1 / sn,
                2 => dx0 / c,
                _ => dy0 / sn,
            };
            for (rho, wrr) in mapped(&xr, &wr, radius, rho_max) {
                out.push(Node {
                    point: Point::new(center.x + rho * c, center.y + rho * sn),
                    weight: wtt * wrr * rho,
                    region: Region::Exterior,
                });
            }
        }
    }
}

/// Nodes covering `q` minus the disks. Requires the disks to lie on a common
/// horizontal line ordered left to right (the array invariants) and `q` to
/// contain them with some margin.
pub fn exterior_nodes(array: &ResonatorArray, q: &Rect, counts: &QuadratureCounts) -> Result<Vec<Node>> {
    let res = &array.resonators;
    let n = res.len();
    if n == 0 {
        return Err(Error::Quadrature("no resonators".into()));
    }
    let gaps: Vec<f64> =
        res.windows(2).map(|w| w[1].center.x - w[0].center.x - w[0].radius - w[1].radius).collect();
    let mut edges = Vec::with_capacity(n + 1);
    let first_margin = 0.5 * gaps.first().copied().unwrap_or(res[0].radius);
    let last_margin = 0.5 * gaps.last().copied().unwrap_or(res[0].radius);
    edges.push(res[0].center.x - res[0].radius - first_margin);
    for (i, g) in gaps.iter().enumerate() {
        edges.push(res[i].center.x + res[i].radius + 0.5 * g);
    }
    edges.push(res[n - 1].center.x + res[n - 1].radius + last_margin);

    let y = res[0].center.y;
    let mut out = Vec::new();
    let mut heights = Vec::with_capacity(n);
    for i in 0..n {
        let margin = (edges[i + 1] - res[i].center.x - res[i].radius)
            .min(res[i].center.x - res[i].radius - edges[i]);
        let h = res[i].radius + margin;
        heights.push(h);
        let b = Rect { x0: edges[i], x1: edges[i + 1], y0: y - h, y1: y + h };
        if !(b.x0 > q.x0 && b.x1 < q.x1 && b.y0 > q.y0 && b.y1 < q.y1) {
            return Err(Error::Quadrature("box Q does not contain the disks with margin".into()));
        }
        box_minus_disk_nodes(res[i].center, res[i].radius, &b, counts, &mut out);
    }
    let mut rects = vec![
        Rect { x0: q.x0, x1: edges[0], y0: q.y0, y1: q.y1 },
        Rect { x0: edges[n], x1: q.x1, y0: q.y0, y1: q.y1 },
    ];
    for i in 0..n {
        rects.push(Rect { x0: edges[i], x1: edges[i + 1], y0: y + heights[i], y1: q.y1 });
        rects.push(Rect { x0: edges[i], x1: edges[i + 1], y0: q.y0, y1: y - heights[i] });
    }
    for r in &rects {
        rect_nodes(r, counts, &mut out);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_graded_array;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 16, 40] {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn areas_add_up() {
        let a = build_graded_array(6, 1.0, 1.05, 0.5, -5.0).unwrap();
        let q = inflated_box(&a, 0.5);
        let counts = QuadratureCounts::default();
        let ext: f64 = exterior_nodes(&a, &q, &counts).unwrap().iter().map(|n| n.weight).sum();
        let int: f64 = interior_nodes(&a, &counts).iter().map(|n| n.weight).sum();
        let disks: f64 = a.resonators.iter().map(|r| r.area()).sum();
        assert!((int - disks).abs() < 1e-12 * disks);
        assert!((ext + disks - q.area()).abs() < 1e-11 * q.area());
    }

    #[test]
    fn exterior_nodes_lie_outside_disks_and_inside_q() {
        let a = build_graded_array(3, 1.0, 1.1, 0.5, -5.0).unwrap();
        let q = inflated_box(&a, 0.5);
        for n in exterior_nodes(&a, &q, &QuadratureCounts::default()).unwrap() {
            assert!(a.locate(&n.point).is_none());
            assert!(q.contains_strictly(&n.point));
            assert!(n.weight > 0.0);
        }
    }

    #[test]
    fn exterior_rule_integrates_smooth_function() {
        let a = build_graded_array(2, 1.0, 1.0, 0.5, -3.0).unwrap();
        let q = inflated_box(&a, 0.5);
        let f = |p: &Point| (0.3 * p.x).cos() * (-0.05 * p.y * p.y).exp();
        let counts = QuadratureCounts::default();
        let total = |c: &QuadratureCounts| -> f64 {
            let e: f64 = exterior_nodes(&a, &q, c).unwrap().iter().map(|n| n.weight * f(&n.point)).sum();
            let i: f64 = interior_nodes(&a, c).iter().map(|n| n.weight * f(&n.point)).sum();
            e + i
        };
        // Whole-box integral by a fine tensor rule.
        let mut fine = Vec::new();
        let c = QuadratureCounts { panel_nodes: 20, panel_size: 1.0, ..counts };
        rect_nodes(&q, &c, &mut fine);
        let exact: f64 = fine.iter().map(|n| n.weight * f(&n.point)).sum();
        assert!((total(&counts) - exact).abs() < 1e-10 * exact.abs());
    }
}
