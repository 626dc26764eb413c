//! Mesh slicing, per-layer convex hulls and arc-length resampling.

use std::collections::HashSet;

use nalgebra::{Point2, Vector2};
use rayon::prelude::*;

use crate::contour::{polygon_centroid, to_polar, Layer, LayeredContourCloud};
use crate::error::{Error, Result};
use crate::mesh_io::TriangleMesh;

/// Vertices this close to a slicing plane are treated as lying on it.
pub const SNAP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RawLayer {
    pub z: f64,
    pub points: Vec<Point2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSlices {
    pub layers: Vec<RawLayer>,
    /// Interior layers where no facet crossed the plane.
    pub gaps: Vec<usize>,
}

/// Plane heights `z_min, z_min + step, ...` up to `z_max`.
pub fn plane_heights(z_min: f64, z_max: f64, step: f64) -> Vec<f64> {
    let count = ((z_max - z_min) / step + SNAP_TOLERANCE).floor() as usize + 1;
    (0..count).map(|i| z_min + i as f64 * step).collect()
}

/// Intersects every facet with the planes `z = h_i`.
///
/// Edges whose end points lie strictly on opposite sides contribute the
/// interpolated crossing; vertices on the plane contribute themselves once.
pub fn slice_mesh(mesh: &TriangleMesh, layer_step: f64) -> Result<RawSlices> {
    if mesh.is_empty() {
        return Err(Error::invalid("cannot slice an empty mesh"));
    }
    if !(layer_step > 0.0) {
        return Err(Error::invalid(format!("layer step must be positive, got {layer_step}")));
    }
    let (z_min, z_max) = mesh.z_range().expect("non-empty mesh");
    let heights = plane_heights(z_min, z_max, layer_step);

    let layers: Vec<RawLayer> = heights
        .par_iter()
        .map(|&h| RawLayer {
            z: h,
            points: slice_at(mesh, h),
        })
        .collect();
    let last = layers.len().saturating_sub(1);
    let gaps = layers
        .iter()
        .enumerate()
        .filter(|(k, l)| *k != 0 && *k != last && l.points.is_empty())
        .map(|(k, _)| k)
        .collect();
    Ok(RawSlices { layers, gaps })
}

fn slice_at(mesh: &TriangleMesh, h: f64) -> Vec<Point2<f64>> {
    let mut points = Vec::new();
    let mut on_plane: HashSet<(u64, u64)> = HashSet::new();
    let side = |z: f64| {
        let d = z - h;
        if d.abs() <= SNAP_TOLERANCE {
            0.0
        } else {
            d
        }
    };
    for f in 0..mesh.facet_count() {
        let tri = mesh.facet(f);
        let (lo, hi) = tri
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.z), b.max(p.z)));
        if lo > h + SNAP_TOLERANCE || hi < h - SNAP_TOLERANCE {
            continue;
        }
        for k in 0..3 {
            let a = tri[k];
            let b = tri[(k + 1) % 3];
            let (da, db) = (side(a.z), side(b.z));
            if da == 0.0 {
                if on_plane.insert((a.x.to_bits(), a.y.to_bits())) {
                    points.push(Point2::new(a.x, a.y));
                }
            } else if da * db < 0.0 {
                let t = (h - a.z) / (b.z - a.z);
                points.push(Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
            }
        }
    }
    points
}

fn cross(o: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Convex hull by Andrew's monotone chain, CCW, without collinear points.
pub fn hull_layer(points: &[Point2<f64>]) -> Result<Vec<Point2<f64>>> {
    let mut pts: Vec<Point2<f64>> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(Error::degenerate(format!("{} distinct points cannot form a hull", pts.len())));
    }
    let mut hull: Vec<Point2<f64>> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    if hull.len() < 3 {
        return Err(Error::degenerate("all points are collinear"));
    }
    Ok(hull)
}

/// Resamples a closed CCW polygon into `n` points at equal arc-length spacing
/// `L / n`, starting where the ray `theta = 0` from the area centroid leaves
/// the polygon. Samples are polar about that centroid.
pub fn resample_contour(z: f64, polygon: &[Point2<f64>], n: usize) -> Result<Layer> {
    if n < 3 {
        return Err(Error::invalid(format!("need at least 3 samples, got {n}")));
    }
    let (center, area) = polygon_centroid(polygon)
        .ok_or_else(|| Error::degenerate(format!("zero-area contour at z={z}")))?;
    if area < 0.0 {
        return Err(Error::invalid(format!("contour at z={z} is clockwise")));
    }
    let m = polygon.len();
    let mut cumulative = Vec::with_capacity(m + 1);
    cumulative.push(0.0);
    for i in 0..m {
        let len = (polygon[(i + 1) % m] - polygon[i]).norm();
        cumulative.push(cumulative[i] + len);
    }
    let perimeter = cumulative[m];
    if !(perimeter > 0.0) {
        return Err(Error::degenerate(format!("zero perimeter at z={z}")));
    }

    let start = ray_start(polygon, center, &cumulative);
    let spacing = perimeter / n as f64;
    let mut samples = Vec::with_capacity(n);
    let mut seg = 0usize;
    for k in 0..n {
        let mut s = start + k as f64 * spacing;
        if s >= perimeter {
            s -= perimeter;
        }
        // Samples advance monotonically except for one wrap, so a forward
        // scan that restarts on wrap is enough.
        if s < cumulative[seg] {
            seg = 0;
        }
        while seg + 1 < m && cumulative[seg + 1] <= s {
            seg += 1;
        }
        let a = polygon[seg];
        let b = polygon[(seg + 1) % m];
        let len = cumulative[seg + 1] - cumulative[seg];
        let t = if len > 0.0 { (s - cumulative[seg]) / len } else { 0.0 };
        let p = a + (b - a) * t;
        samples.push(to_polar(p - center));
    }
    Ok(Layer {
        z,
        center: [center.x, center.y],
        samples,
        perimeter,
    })
}

/// Arc-length position of the boundary point on the ray `theta = 0`.
fn ray_start(polygon: &[Point2<f64>], center: Point2<f64>, cumulative: &[f64]) -> f64 {
    let m = polygon.len();
    for i in 0..m {
        let a: Vector2<f64> = polygon[i] - center;
        let b: Vector2<f64> = polygon[(i + 1) % m] - center;
        // CCW boundary crosses the positive x-axis going upward exactly once.
        if a.y <= 0.0 && b.y > 0.0 {
            let t = -a.y / (b.y - a.y);
            let x = a.x + t * (b.x - a.x);
            if x > 0.0 {
                return cumulative[i] + t * (cumulative[i + 1] - cumulative[i]);
            }
        }
    }
    0.0
}

#[derive(Debug, Clone)]
pub struct SliceOutput {
    pub cloud: LayeredContourCloud,
    /// Heights of layers skipped because they were empty or degenerate.
    pub skipped: Vec<f64>,
}

/// Slice, hull and resample a mesh into a layered contour cloud.
pub fn slice_to_contours(mesh: &TriangleMesh, layer_step: f64, n: usize) -> Result<SliceOutput> {
    let raw = slice_mesh(mesh, layer_step)?;
    let results: Vec<(f64, Result<Layer>)> = raw
        .layers
        .par_iter()
        .map(|l| (l.z, hull_layer(&l.points).and_then(|h| resample_contour(l.z, &h, n))))
        .collect();
    let mut layers = Vec::new();
    let mut skipped = Vec::new();
    for (z, r) in results {
        match r {
            Ok(layer) => layers.push(layer),
            Err(Error::Degenerate(msg)) => {
                log::warn!("skipping layer at z={z}: {msg}");
                skipped.push(z);
            }
            Err(e) => return Err(e),
        }
    }
    if layers.is_empty() {
        return Err(Error::degenerate("mesh produced no usable layers"));
    }
    Ok(SliceOutput {
        cloud: LayeredContourCloud::new(layers)?,
        skipped,
    })
}
