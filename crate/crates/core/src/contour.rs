//! Layered polar contours, the representation shared by every stage.

use std::collections::BTreeMap;

use nalgebra::{Point2, Point3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh_io::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarSample {
    pub r: f64,
    /// Angle about the layer center, in `(-pi, pi]`.
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub z: f64,
    pub center: [f64; 2],
    pub samples: Vec<PolarSample>,
    /// Perimeter of the polygon the samples were taken from.
    pub perimeter: f64,
}

impl Layer {
    /// Builds a layer from an ordered CCW polygon, using its area centroid as
    /// the polar origin. The vertices become the samples as-is.
    pub fn from_polygon(z: f64, polygon: &[Point2<f64>]) -> Result<Self> {
        let (center, area) = polygon_centroid(polygon)
            .ok_or_else(|| Error::degenerate(format!("layer at z={z} has zero area")))?;
        if area < 0.0 {
            return Err(Error::invalid(format!("layer at z={z} is clockwise")));
        }
        let samples = polygon
            .iter()
            .map(|p| to_polar(p - center))
            .collect();
        Ok(Layer {
            z,
            center: [center.x, center.y],
            samples,
            perimeter: polygon_perimeter(polygon),
        })
    }

    pub fn center_point(&self) -> Point2<f64> {
        Point2::new(self.center[0], self.center[1])
    }

    pub fn points_2d(&self) -> Vec<Point2<f64>> {
        let c = self.center_point();
        self.samples
            .iter()
            .map(|s| Point2::new(c.x + s.r * s.theta.cos(), c.y + s.r * s.theta.sin()))
            .collect()
    }

    pub fn area(&self) -> f64 {
        polar_area(&self.samples)
    }

    pub fn mean_radius(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.r).sum::<f64>() / self.samples.len() as f64
    }

    pub fn max_radius(&self) -> f64 {
        self.samples.iter().map(|s| s.r).fold(0.0, f64::max)
    }

    pub fn min_radius(&self) -> f64 {
        self.samples.iter().map(|s| s.r).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LayeredContourCloud {
    pub layers: Vec<Layer>,
}

impl LayeredContourCloud {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let cloud = LayeredContourCloud { layers };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.layers.windows(2) {
            if w[1].z <= w[0].z {
                return Err(Error::invalid(format!(
                    "layer heights not strictly increasing at z={}",
                    w[1].z
                )));
            }
        }
        if let Some(first) = self.layers.first() {
            let n = first.samples.len();
            if let Some(l) = self.layers.iter().find(|l| l.samples.len() != n) {
                return Err(Error::invalid(format!(
                    "layer at z={} has {} samples, expected {n}",
                    l.z,
                    l.samples.len()
                )));
            }
        }
        for l in &self.layers {
            if l.samples.iter().any(|s| !(s.r >= 0.0) || !s.theta.is_finite()) {
                return Err(Error::invalid(format!("layer at z={} has an invalid sample", l.z)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn points_per_layer(&self) -> usize {
        self.layers.first().map_or(0, |l| l.samples.len())
    }

    /// Mean spacing between consecutive layers, 0 for fewer than two layers.
    pub fn layer_step(&self) -> f64 {
        match (self.layers.first(), self.layers.last()) {
            (Some(a), Some(b)) if self.layers.len() > 1 => (b.z - a.z) / (self.layers.len() - 1) as f64,
            _ => 0.0,
        }
    }

    pub fn min_radius(&self) -> f64 {
        self.layers.iter().map(Layer::min_radius).fold(f64::INFINITY, f64::min)
    }

    pub fn max_radius(&self) -> f64 {
        self.layers.iter().map(Layer::max_radius).fold(0.0, f64::max)
    }

    /// Volume as a stack of prisms, each layer's area times its slab height.
    pub fn volume(&self) -> f64 {
        let dz = self.layer_step();
        self.layers.iter().map(|l| l.area() * dz).sum()
    }

    pub fn to_point_cloud(&self) -> PointCloud {
        let n = self.layers.len() * self.points_per_layer();
        let mut points = Vec::with_capacity(n);
        let mut layers = Vec::with_capacity(n);
        for (k, layer) in self.layers.iter().enumerate() {
            for p in layer.points_2d() {
                points.push(Point3::new(p.x, p.y, layer.z));
                layers.push(k as u32);
            }
        }
        PointCloud {
            points,
            layers: Some(layers),
        }
    }

    /// Rebuilds layers from a point cloud. Points are grouped by their layer
    /// index (or by exact `z` when the cloud has none) and kept in file order.
    pub fn from_point_cloud(cloud: &PointCloud) -> Result<Self> {
        let mut groups: BTreeMap<u64, Vec<Point3<f64>>> = BTreeMap::new();
        match &cloud.layers {
            Some(idx) => {
                for (p, &l) in cloud.points.iter().zip(idx) {
                    groups.entry(l as u64).or_default().push(*p);
                }
            }
            None => {
                // Order-preserving key for finite z, including negatives.
                for p in &cloud.points {
                    let bits = p.z.to_bits();
                    let key = if p.z.is_sign_negative() { !bits } else { bits | 1 << 63 };
                    groups.entry(key).or_default().push(*p);
                }
            }
        }
        let mut layers = Vec::with_capacity(groups.len());
        for pts in groups.values() {
            let z = pts.iter().map(|p| p.z).sum::<f64>() / pts.len() as f64;
            let poly: Vec<Point2<f64>> = pts.iter().map(|p| Point2::new(p.x, p.y)).collect();
            layers.push(Layer::from_polygon(z, &poly)?);
        }
        LayeredContourCloud::new(layers)
    }
}

/// Polar shoelace area `1/2 sum r_i r_{i+1} sin(theta_{i+1} - theta_i)` of a
/// closed, angularly ordered sample loop.
pub fn polar_area(samples: &[PolarSample]) -> f64 {
    let n = samples.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let a = samples[i];
        let b = samples[(i + 1) % n];
        acc += a.r * b.r * (b.theta - a.theta).sin();
    }
    0.5 * acc
}

pub fn to_polar(v: nalgebra::Vector2<f64>) -> PolarSample {
    let mut theta = v.y.atan2(v.x);
    if theta <= -std::f64::consts::PI {
        theta = std::f64::consts::PI;
    }
    PolarSample {
        r: v.norm(),
        theta,
    }
}

/// Signed area (positive for CCW) and area centroid of a simple polygon.
/// `None` when the area vanishes.
pub fn polygon_centroid(poly: &[Point2<f64>]) -> Option<(Point2<f64>, f64)> {
    let n = poly.len();
    if n < 3 {
        return None;
    }
    // Shift to the first vertex to keep the cross products well conditioned.
    let o = poly[0];
    let (mut a2, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let p = poly[i] - o;
        let q = poly[(i + 1) % n] - o;
        let cross = p.x * q.y - q.x * p.y;
        a2 += cross;
        cx += (p.x + q.x) * cross;
        cy += (p.y + q.y) * cross;
    }
    if a2.abs() <= f64::EPSILON * polygon_perimeter(poly).powi(2) {
        return None;
    }
    Some((Point2::new(o.x + cx / (3.0 * a2), o.y + cy / (3.0 * a2)), 0.5 * a2))
}

pub fn polygon_perimeter(poly: &[Point2<f64>]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| (poly[(i + 1) % n] - poly[i]).norm()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn circle(n: usize, r: f64) -> Vec<PolarSample> {
        (0..n)
            .map(|i| PolarSample {
                r,
                theta: to_polar(nalgebra::Vector2::new(
                    (2.0 * PI * i as f64 / n as f64).cos(),
                    (2.0 * PI * i as f64 / n as f64).sin(),
                ))
                .theta,
            })
            .collect()
    }

    #[test]
    fn unit_circle_shoelace() {
        let a = polar_area(&circle(400, 1.0));
        let closed = 0.5 * 400.0 * (2.0 * PI / 400.0).sin();
        assert!((a - closed).abs() < 1e-12);
    }

    #[test]
    fn four_samples_on_axes() {
        assert_relative_eq!(polar_area(&circle(4, 1.0)), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn centroid_of_offset_square() {
        let sq = [
            Point2::new(1.0, 1.0),
            Point2::new(3.0, 1.0),
            Point2::new(3.0, 3.0),
            Point2::new(1.0, 3.0),
        ];
        let (c, a) = polygon_centroid(&sq).unwrap();
        assert_relative_eq!(a, 4.0);
        assert_relative_eq!(c.x, 2.0);
        assert_relative_eq!(c.y, 2.0);
    }

    #[test]
    fn point_cloud_round_trip_keeps_geometry() {
        let sq = [
            Point2::new(-1.0, -1.0),
            Point2::new(1.0, -1.0),
            Point2::new(1.0, 1.0),
            Point2::new(-1.0, 1.0),
        ];
        let layers = vec![
            Layer::from_polygon(0.0, &sq).unwrap(),
            Layer::from_polygon(1.0, &sq).unwrap(),
        ];
        let cloud = LayeredContourCloud::new(layers).unwrap();
        let back = LayeredContourCloud::from_point_cloud(&cloud.to_point_cloud()).unwrap();
        assert_eq!(back.len(), 2);
        assert_relative_eq!(back.layers[1].area(), 4.0, epsilon = 1e-12);
        assert_relative_eq!(back.volume(), 8.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_increasing_layers() {
        let l = Layer {
            z: 1.0,
            center: [0.0, 0.0],
            samples: circle(4, 1.0),
            perimeter: 1.0,
        };
        assert!(LayeredContourCloud::new(vec![l.clone(), l]).is_err());
    }
}
