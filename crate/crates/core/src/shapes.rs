//! Parametric reference shapes and their layered contours.

use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::{Point2, Point3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bspline::BSplineCurve;
use crate::contour::{Layer, LayeredContourCloud, PolarSample};
use crate::error::{Error, Result};
use crate::mesh_io::TriangleMesh;
use crate::slicer::{plane_heights, resample_contour};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum ShapeSpec {
    SquarePrism {
        side: f64,
        height: f64,
    },
    Cylinder {
        diameter: f64,
        height: f64,
    },
    /// Surface of revolution; the x coordinates of the profile's control
    /// points are the radii `R_i`.
    SlimWaist {
        profile: BSplineCurve,
        height: f64,
    },
    /// Twisted octagonal frustum. `r1` is the vertex radius at `z = 0`, `r2`
    /// at the top, and the top is rotated by `total_twist`.
    HelicalFrustum {
        r1: f64,
        r2: f64,
        total_twist: f64,
        layers: usize,
        height: f64,
    },
    /// Circles of fixed radius whose centers follow `(0, d(z))` with
    /// `d(z) = 4 y0 (z/h)(1 - z/h)`.
    ConcaveCylinder {
        radius: f64,
        height: f64,
        max_offset: f64,
    },
}

impl ShapeSpec {
    pub fn height(&self) -> f64 {
        match self {
            ShapeSpec::SquarePrism { height, .. }
            | ShapeSpec::Cylinder { height, .. }
            | ShapeSpec::SlimWaist { height, .. }
            | ShapeSpec::HelicalFrustum { height, .. }
            | ShapeSpec::ConcaveCylinder { height, .. } => *height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        positive("height", self.height())?;
        match self {
            ShapeSpec::SquarePrism { side, .. } => positive("side", *side),
            ShapeSpec::Cylinder { diameter, .. } => positive("diameter", *diameter),
            ShapeSpec::SlimWaist { profile, .. } => {
                let profile = profile.clone().normalized()?;
                for p in &profile.control_points {
                    positive("profile radius", p[0])?;
                }
                Ok(())
            }
            ShapeSpec::HelicalFrustum {
                r1,
                r2,
                total_twist,
                layers,
                ..
            } => {
                positive("r1", *r1)?;
                positive("r2", *r2)?;
                if !total_twist.is_finite() {
                    return Err(Error::invalid("totalTwist must be finite"));
                }
                if *layers < 2 {
                    return Err(Error::invalid(format!("layers must be at least 2, got {layers}")));
                }
                Ok(())
            }
            ShapeSpec::ConcaveCylinder {
                radius, max_offset, ..
            } => {
                positive("radius", *radius)?;
                positive("maxOffset", *max_offset)
            }
        }
    }

    /// Cross-section contour at height `z`, sampled with `n` points.
    pub fn layer_at(&self, z: f64, n: usize) -> Result<Layer> {
        let h = self.height();
        let t = (z / h).clamp(0.0, 1.0);
        match self {
            ShapeSpec::SquarePrism { side, .. } => {
                let a = side / 2.0;
                let sq = [
                    Point2::new(-a, -a),
                    Point2::new(a, -a),
                    Point2::new(a, a),
                    Point2::new(-a, a),
                ];
                resample_contour(z, &sq, n)
            }
            ShapeSpec::Cylinder { diameter, .. } => Ok(circle_layer(z, [0.0, 0.0], diameter / 2.0, n)),
            ShapeSpec::SlimWaist { profile, .. } => {
                let r = profile_radius(profile, t)?;
                Ok(circle_layer(z, [0.0, 0.0], r, n))
            }
            ShapeSpec::HelicalFrustum {
                r1, r2, total_twist, ..
            } => {
                let r = r1 + (r2 - r1) * t;
                let twist = total_twist * t;
                let octagon: Vec<Point2<f64>> = (0..8)
                    .map(|i| {
                        let phi = 2.0 * PI * i as f64 / 8.0 + twist;
                        Point2::new(r * phi.cos(), r * phi.sin())
                    })
                    .collect();
                resample_contour(z, &octagon, n)
            }
            ShapeSpec::ConcaveCylinder {
                radius, max_offset, ..
            } => {
                let d = 4.0 * max_offset * t * (1.0 - t);
                Ok(circle_layer(z, [0.0, d], *radius, n))
            }
        }
    }
}

/// `r(z) = sum N_{i,3}(t(z)) R_i` with `t` linear in height.
pub fn profile_radius(profile: &BSplineCurve, t: f64) -> Result<f64> {
    let curve = if profile.knots.is_empty() {
        profile.clone().normalized()?
    } else {
        profile.clone()
    };
    Ok(curve.eval(t)?[0])
}

fn circle_layer(z: f64, center: [f64; 2], r: f64, n: usize) -> Layer {
    let samples = (0..n)
        .map(|j| {
            let mut theta = 2.0 * PI * j as f64 / n as f64;
            if theta > PI {
                theta -= 2.0 * PI;
            }
            PolarSample { r, theta }
        })
        .collect();
    Layer {
        z,
        center,
        samples,
        perimeter: 2.0 * PI * r,
    }
}

/// Layers at `z = 0, step, ...` up to the shape height.
pub fn gen_shape(spec: &ShapeSpec, layer_step: f64, points_per_layer: usize) -> Result<LayeredContourCloud> {
    spec.validate()?;
    if !(layer_step > 0.0) {
        return Err(Error::invalid(format!("layer step must be positive, got {layer_step}")));
    }
    if points_per_layer < 3 {
        return Err(Error::invalid("need at least 3 points per layer"));
    }
    let spec = match spec {
        ShapeSpec::SlimWaist { profile, height } => ShapeSpec::SlimWaist {
            profile: profile.clone().normalized()?,
            height: *height,
        },
        other => other.clone(),
    };
    let layers = plane_heights(0.0, spec.height(), layer_step)
        .par_iter()
        .map(|&z| spec.layer_at(z, points_per_layer))
        .collect::<Result<Vec<_>>>()?;
    LayeredContourCloud::new(layers)
}

/// Closed triangle mesh through consecutive layers, with fan caps.
pub fn contours_to_mesh(cloud: &LayeredContourCloud) -> Result<TriangleMesh> {
    if cloud.len() < 2 {
        return Err(Error::invalid("need at least two layers to build a mesh"));
    }
    let n = cloud.points_per_layer();
    let rings: Vec<Vec<Point3<f64>>> = cloud
        .layers
        .iter()
        .map(|l| l.points_2d().iter().map(|p| Point3::new(p.x, p.y, l.z)).collect())
        .collect();
    let mut facets = Vec::with_capacity(2 * n * cloud.len());
    for w in rings.windows(2) {
        let (lo, hi) = (&w[0], &w[1]);
        for j in 0..n {
            let k = (j + 1) % n;
            facets.push([lo[j], lo[k], hi[k]]);
            facets.push([lo[j], hi[k], hi[j]]);
        }
    }
    let first = &cloud.layers[0];
    let last = &cloud.layers[cloud.len() - 1];
    let bottom_c = Point3::new(first.center[0], first.center[1], first.z);
    let top_c = Point3::new(last.center[0], last.center[1], last.z);
    let (bottom, top) = (&rings[0], &rings[rings.len() - 1]);
    for j in 0..n {
        let k = (j + 1) % n;
        facets.push([bottom_c, bottom[k], bottom[j]]);
        facets.push([top_c, top[j], top[k]]);
    }
    TriangleMesh::from_facets(&facets)
}

/// The five reference geometries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Geometry {
    A,
    B,
    C,
    D,
    E,
}

impl Geometry {
    pub const ALL: [Geometry; 5] = [Geometry::A, Geometry::B, Geometry::C, Geometry::D, Geometry::E];

    pub fn name(self) -> &'static str {
        match self {
            Geometry::A => "square prism",
            Geometry::B => "cylinder",
            Geometry::C => "slim waist",
            Geometry::D => "helical octagonal frustum",
            Geometry::E => "concave cylinder",
        }
    }

    pub fn target(self) -> ShapeSpec {
        match self {
            Geometry::A => ShapeSpec::SquarePrism {
                side: 53.0,
                height: 40.0,
            },
            Geometry::B => ShapeSpec::Cylinder {
                diameter: 60.0,
                height: 40.0,
            },
            Geometry::C => ShapeSpec::SlimWaist {
                profile: slim_waist_profile(40.0),
                height: 40.0,
            },
            Geometry::D => ShapeSpec::HelicalFrustum {
                r1: 30.0,
                r2: 22.0,
                total_twist: PI / 4.0,
                layers: 41,
                height: 40.0,
            },
            Geometry::E => ShapeSpec::ConcaveCylinder {
                radius: 30.0,
                height: 40.0,
                max_offset: 5.0,
            },
        }
    }
}

/// Default nine-point slim-waist profile, neck at mid height.
pub fn slim_waist_profile(height: f64) -> BSplineCurve {
    let radii = [30.0, 30.0, 28.0, 23.0, 20.0, 23.0, 28.0, 30.0, 30.0];
    let pts = radii
        .iter()
        .enumerate()
        .map(|(i, r)| [*r, height * i as f64 / 8.0])
        .collect();
    BSplineCurve::clamped(pts, 3).expect("static profile is valid")
}

impl FromStr for Geometry {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Geometry::A),
            "B" => Ok(Geometry::B),
            "C" => Ok(Geometry::C),
            "D" => Ok(Geometry::D),
            "E" => Ok(Geometry::E),
            other => Err(Error::invalid(format!("unknown geometry `{other}`, expected A-E"))),
        }
    }
}

impl std::fmt::Display for Geometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}
