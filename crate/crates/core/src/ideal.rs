//! Ideal machining cloud: disc footprints of the end effector stamped at each
//! command's contact points, lower half only.

use std::collections::HashSet;
use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh_io::PointCloud;
use crate::planner::KneadingProgram;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct EndEffectorSpec {
    pub diameter: f64,
    pub footprint_points: usize,
    pub min_ring_points: usize,
}

impl Default for EndEffectorSpec {
    fn default() -> Self {
        EndEffectorSpec {
            diameter: 4.0,
            footprint_points: 40,
            min_ring_points: 8,
        }
    }
}

impl EndEffectorSpec {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.diameter > 0.0 && self.diameter.is_finite()) {
            bad.push("diameter must be positive");
        }
        if self.footprint_points < 4 {
            bad.push("footprintPoints must be at least 4");
        }
        if self.min_ring_points < 3 {
            bad.push("minRingPoints must be at least 3");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(bad.join("; ")))
        }
    }

    pub fn ring_count(&self) -> usize {
        (self.footprint_points as f64).sqrt().floor() as usize
    }

    pub fn ring_radius(&self, k: usize) -> f64 {
        self.diameter * k as f64 / (2.0 * self.ring_count() as f64)
    }

    pub fn ring_points(&self, k: usize) -> usize {
        let spacing = (self.diameter / 2.0) / (self.footprint_points as f64).sqrt();
        let n = (2.0 * PI * self.ring_radius(k) / spacing).floor() as usize;
        n.max(self.min_ring_points)
    }

    /// Points in one full footprint, center included.
    pub fn footprint_len(&self) -> usize {
        1 + (1..=self.ring_count()).map(|k| self.ring_points(k)).sum::<usize>()
    }
}

/// Full disc footprint in the plane through `center` with normal `axis`,
/// spanned by `u = +Z` and `v = axis x u`.
pub fn disc_footprint(center: Point3<f64>, axis: Vector3<f64>, spec: &EndEffectorSpec) -> Result<Vec<Point3<f64>>> {
    let u = Vector3::z();
    let cross = axis.cross(&u);
    let norm = cross.norm();
    if !(norm > 1e-12) {
        return Err(Error::degenerate("footprint normal is parallel to the Z axis"));
    }
    let v = cross / norm;
    let mut out = Vec::with_capacity(spec.footprint_len());
    out.push(center);
    for k in 1..=spec.ring_count() {
        let r = spec.ring_radius(k);
        let n = spec.ring_points(k);
        for j in 0..n {
            let t = 2.0 * PI * j as f64 / n as f64;
            out.push(center + u * (r * t.cos()) + v * (r * t.sin()));
        }
    }
    Ok(out)
}

/// Stamps the lower half-footprint at every distinct contact point of the
/// program. Contacts are keyed by height and contour index, so the swapped
/// second half-turn does not stamp twice.
pub fn ideal_cloud(program: &KneadingProgram, spec: &EndEffectorSpec) -> Result<PointCloud> {
    spec.validate()?;
    let mut seen = HashSet::new();
    let mut contacts = Vec::new();
    for cmd in &program.commands {
        let [left, right] = cmd.contacts();
        for (idx, p) in [(cmd.i, left), (cmd.j, right)] {
            if seen.insert((cmd.cycle, cmd.h.to_bits(), idx)) {
                contacts.push((p, cmd.center));
            }
        }
    }
    let stamps: Vec<Vec<Point3<f64>>> = contacts
        .par_iter()
        .map(|&(p, c)| {
            let center = Point3::new(p[0], p[1], p[2]);
            // Horizontal normal from the contact toward the layer's axis.
            let axis = Vector3::new(c[0] - p[0], c[1] - p[1], 0.0);
            let disc = disc_footprint(center, axis, spec)?;
            Ok(disc.into_iter().filter(|q| q.z <= center.z + 1e-12).collect())
        })
        .collect::<Result<_>>()?;
    Ok(PointCloud::new(stamps.into_iter().flatten().collect()))
}
