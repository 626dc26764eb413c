//! Lateral surface area, material utilization and error-distribution tests.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contour::LayeredContourCloud;
use crate::error::{Error, Result};
use crate::mesh_io::PointCloud;
use crate::nn::NearestIndex;
use crate::stats::{mann_whitney, Stars};

/// Largest material loss, in grams, still considered acceptable.
pub const MAX_LOSS_G: f64 = 5.0;

/// Lateral area of the ring mesh joining consecutive layers: each quad
/// `(k, j), (k, j+1), (k+1, j+1), (k+1, j)` is split into two triangles.
pub fn ring_mesh_area(cloud: &LayeredContourCloud) -> Result<f64> {
    if cloud.len() < 2 {
        return Err(Error::invalid("ring-mesh area needs at least two layers"));
    }
    let m = cloud.layers[0].samples.len();
    if cloud.layers.iter().any(|l| l.samples.len() != m) {
        return Err(Error::invalid("ring-mesh area needs equal point counts per layer"));
    }
    let rings: Vec<Vec<nalgebra::Point3<f64>>> = cloud
        .layers
        .iter()
        .map(|l| l.points_2d().into_iter().map(|p| nalgebra::Point3::new(p.x, p.y, l.z)).collect())
        .collect();
    Ok(rings
        .par_windows(2)
        .map(|w| {
            let (lo, hi) = (&w[0], &w[1]);
            (0..m)
                .map(|j| {
                    let jp = (j + 1) % m;
                    let (a, b, c, d) = (lo[j], lo[jp], hi[jp], hi[j]);
                    0.5 * (b - a).cross(&(c - a)).norm() + 0.5 * (c - a).cross(&(d - a)).norm()
                })
                .sum::<f64>()
        })
        .sum())
}

pub fn utilization(mass_in: f64, mass_out: f64) -> Result<f64> {
    if !(mass_in > 0.0 && mass_in.is_finite()) {
        return Err(Error::invalid("input mass must be positive"));
    }
    if !(mass_out >= 0.0 && mass_out <= mass_in) {
        return Err(Error::invalid("output mass must lie in [0, input mass]"));
    }
    Ok(mass_out / mass_in)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MaterialBalance {
    pub mass_in: f64,
    pub mass_out: f64,
    pub utilization: f64,
    pub loss: f64,
    pub loss_within_bound: bool,
}

pub fn material_balance(mass_in: f64, mass_out: f64) -> Result<MaterialBalance> {
    let u = utilization(mass_in, mass_out)?;
    let loss = mass_in - mass_out;
    Ok(MaterialBalance {
        mass_in,
        mass_out,
        utilization: u,
        loss,
        loss_within_bound: loss <= MAX_LOSS_G,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DistanceSummary {
    #[serde(rename = "meanNN")]
    pub mean_nn: f64,
    #[serde(rename = "medianNN")]
    pub median_nn: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ErrorStats {
    pub a: DistanceSummary,
    pub b: DistanceSummary,
    pub u: f64,
    pub p_value: f64,
    pub stars: Stars,
}

fn summarize(d: &[f64]) -> DistanceSummary {
    let mut s = d.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let median = if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) };
    DistanceSummary {
        mean_nn: s.iter().sum::<f64>() / n as f64,
        median_nn: median,
    }
}

/// Nearest-neighbour distances of two clouds to a target, compared with a
/// two-sided Mann–Whitney U test.
pub fn error_distribution(a: &PointCloud, b: &PointCloud, target: &PointCloud) -> Result<ErrorStats> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("error distribution needs non-empty clouds"));
    }
    if target.len() < 3 {
        return Err(Error::degenerate("target cloud has fewer than 3 points"));
    }
    let index = NearestIndex::new(&target.points);
    let da = index.distances(&a.points);
    let db = index.distances(&b.points);
    let mw = mann_whitney(&da, &db)?;
    Ok(ErrorStats {
        a: summarize(&da),
        b: summarize(&db),
        u: mw.u,
        p_value: mw.p_value,
        stars: Stars::from_p(mw.p_value),
    })
}

/// Symmetric Hausdorff distance between two point sets.
pub fn hausdorff(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("Hausdorff distance needs non-empty clouds"));
    }
    let (ia, ib) = (NearestIndex::new(&a.points), NearestIndex::new(&b.points));
    Ok(ib
        .distances(&a.points)
        .into_iter()
        .chain(ia.distances(&b.points))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaSample {
    pub cycle: usize,
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricsReport {
    pub surface_area: Option<f64>,
    pub target_area: Option<f64>,
    pub volume: Option<f64>,
    pub utilization: Option<f64>,
    pub material: Option<MaterialBalance>,
    pub area_series: Vec<AreaSample>,
    pub error_stats: Option<ErrorStats>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::{Layer, PolarSample};
    use std::f64::consts::PI;

    fn ring(z: f64, r: f64, m: usize) -> Layer {
        Layer {
            z,
            center: [0.0, 0.0],
            samples: (0..m)
                .map(|j| PolarSample {
                    r,
                    theta: 2.0 * PI * j as f64 / m as f64 - if j * 2 > m { 2.0 * PI } else { 0.0 },
                })
                .collect(),
            perimeter: 2.0 * m as f64 * r * (PI / m as f64).sin(),
        }
    }

    #[test]
    fn unit_square_band() {
        // Square of side 1 sampled at its corners.
        let r = 0.5f64.sqrt();
        let sq = |z: f64| Layer {
            z,
            center: [0.0, 0.0],
            samples: (0..4)
                .map(|j| PolarSample {
                    r,
                    theta: PI / 4.0 + j as f64 * PI / 2.0 - if j >= 2 { 2.0 * PI } else { 0.0 },
                })
                .collect(),
            perimeter: 4.0,
        };
        let cloud = LayeredContourCloud { layers: vec![sq(0.0), sq(1.0)] };
        assert!((ring_mesh_area(&cloud).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn cylinder_band_matches_chord_area() {
        let m = 400;
        let cloud = LayeredContourCloud {
            layers: (0..=40).map(|k| ring(k as f64, 30.0, m)).collect(),
        };
        let area = ring_mesh_area(&cloud).unwrap();
        let exact = 2.0 * PI * 30.0 * 40.0;
        let chord_perimeter = 2.0 * m as f64 * 30.0 * (PI / m as f64).sin() * 40.0;
        assert!((area - chord_perimeter).abs() < 1e-6);
        assert!((area - exact).abs() / exact < 1e-4);
    }

    #[test]
    fn mismatched_layers_rejected() {
        let cloud = LayeredContourCloud {
            layers: vec![ring(0.0, 1.0, 8), ring(1.0, 1.0, 10)],
        };
        assert!(ring_mesh_area(&cloud).is_err());
        assert!(ring_mesh_area(&LayeredContourCloud { layers: vec![ring(0.0, 1.0, 8)] }).is_err());
    }

    #[test]
    fn utilization_cases() {
        assert_eq!(utilization(100.0, 100.0).unwrap(), 1.0);
        assert_eq!(utilization(100.0, 98.0).unwrap(), 0.98);
        let b = material_balance(100.0, 95.0).unwrap();
        assert_eq!(b.utilization, 0.95);
        assert_eq!(b.loss, 5.0);
        assert!(b.loss_within_bound);
        assert!(!material_balance(100.0, 94.0).unwrap().loss_within_bound);
        assert!(utilization(0.0, 0.0).is_err());
        assert!(utilization(10.0, 11.0).is_err());
    }

    #[test]
    fn hausdorff_of_shifted_sets() {
        let a = PointCloud::new(vec![nalgebra::Point3::origin(), nalgebra::Point3::new(1.0, 0.0, 0.0)]);
        let b = PointCloud::new(vec![nalgebra::Point3::new(0.0, 0.0, 0.5)]);
        // Farthest pair is (1,0,0) to (0,0,0.5).
        assert!((hausdorff(&a, &b).unwrap() - 1.25f64.sqrt()).abs() < 1e-12);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn identical_clouds_not_significant() {
        let pts: Vec<_> = (0..300)
            .map(|k| nalgebra::Point3::new((k as f64 * 0.1).cos() * 5.0, (k as f64 * 0.1).sin() * 5.0, (k / 30) as f64))
            .collect();
        let target = PointCloud::new(pts.iter().map(|p| p + nalgebra::Vector3::new(0.3, 0.0, 0.0)).collect());
        let c = PointCloud::new(pts);
        let s = error_distribution(&c, &c, &target).unwrap();
        assert_eq!(s.stars, Stars::Ns);
    }
}
