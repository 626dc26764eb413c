//! Point-to-point ICP, threshold sweeps and radial compensation.

use std::collections::HashMap;

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh_io::PointCloud;
use crate::nn::NearestIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    /// Row-major rotation.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl Default for RigidTransform {
    fn default() -> Self {
        RigidTransform::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform::from_parts(&Matrix3::identity(), &Vector3::zeros())
    }

    pub fn from_parts(r: &Matrix3<f64>, t: &Vector3<f64>) -> Self {
        let mut rotation = [[0.0; 3]; 3];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = r[(i, j)];
            }
        }
        RigidTransform {
            rotation,
            translation: [t.x, t.y, t.z],
        }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.rotation[i][j])
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        self.rotation() * p + self.translation()
    }

    /// `self` after `first`.
    pub fn after(&self, first: &RigidTransform) -> RigidTransform {
        let r = self.rotation();
        RigidTransform::from_parts(&(r * first.rotation()), &(r * first.translation() + self.translation()))
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation().transpose();
        RigidTransform::from_parts(&rt, &(-(rt * self.translation())))
    }

    pub fn transform_cloud(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            points: cloud.points.iter().map(|p| self.apply(p)).collect(),
            layers: cloud.layers.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    Identity,
    Centroid,
    CentroidPca,
    /// Identity or centroid alignment, whichever starts closer.
    #[default]
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct IcpParams {
    pub max_iter: usize,
    pub tol: f64,
    pub init: InitMode,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams {
            max_iter: 60,
            tol: 1e-6,
            init: InitMode::Nearest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegistrationResult {
    pub transform: RigidTransform,
    pub fitness: f64,
    /// Inlier RMSE; infinite when nothing matched.
    pub rmse: f64,
    pub threshold: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub threshold: f64,
    pub fitness: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegistrationCurve {
    pub samples: Vec<CurveSample>,
    /// RMSE at the first threshold with every source point matched.
    pub compensation_value: Option<f64>,
    pub full_fitness_threshold: Option<f64>,
    pub complete: bool,
    pub transform: RigidTransform,
}

impl RegistrationCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,fitness,rmse\n");
        for x in &self.samples {
            s.push_str(&format!("{},{},{}\n", x.threshold, x.fitness, x.rmse));
        }
        s
    }
}

/// Default threshold grid: 0.1 to 20 mm in 0.1 mm steps.
pub fn default_thresholds() -> Vec<f64> {
    (1..=200).map(|k| k as f64 / 10.0).collect()
}

fn check_cloud(points: &[Point3<f64>], what: &str) -> Result<()> {
    if points.len() < 3 {
        return Err(Error::degenerate(format!("{what} cloud has fewer than 3 points")));
    }
    let c = centroid(points);
    let cov = covariance(points, &c);
    let eig = SymmetricEigen::new(cov);
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    if !(ev[1] > 1e-12 * ev[2].max(1e-300)) {
        return Err(Error::degenerate(format!("{what} cloud is collinear")));
    }
    Ok(())
}

fn centroid(points: &[Point3<f64>]) -> Point3<f64> {
    let sum = points.iter().fold(Vector3::zeros(), |a, p| a + p.coords);
    Point3::from(sum / points.len() as f64)
}

fn covariance(points: &[Point3<f64>], c: &Point3<f64>) -> Matrix3<f64> {
    points.iter().fold(Matrix3::zeros(), |m, p| {
        let d = p - c;
        m + d * d.transpose()
    }) / points.len() as f64
}

/// Least-squares rotation and translation mapping `src` onto `dst`.
pub fn kabsch(src: &[Point3<f64>], dst: &[Point3<f64>]) -> RigidTransform {
    let cs = centroid(src);
    let cd = centroid(dst);
    let h = src.iter().zip(dst).fold(Matrix3::zeros(), |m, (a, b)| m + (a - cs) * (b - cd).transpose());
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let v = vt.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = v * d * u.transpose();
    RigidTransform::from_parts(&r, &(cd.coords - r * cs.coords))
}

struct Matches {
    pairs: Vec<(usize, usize)>,
    sum_sq: f64,
}

fn correspond(src: &[Point3<f64>], t: &RigidTransform, index: &NearestIndex, threshold: f64) -> Matches {
    let t2 = threshold * threshold;
    let found: Vec<Option<(usize, usize, f64)>> = src
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            let q = t.apply(p);
            index.nearest(&q).and_then(|(j, d2)| (d2 <= t2).then_some((k, j, d2)))
        })
        .collect();
    let mut pairs = Vec::new();
    let mut sum_sq = 0.0;
    for (k, j, d2) in found.into_iter().flatten() {
        pairs.push((k, j));
        sum_sq += d2;
    }
    Matches { pairs, sum_sq }
}

fn score(m: &Matches, n: usize) -> (f64, f64) {
    if m.pairs.is_empty() {
        (0.0, f64::INFINITY)
    } else {
        (m.pairs.len() as f64 / n as f64, (m.sum_sq / m.pairs.len() as f64).sqrt())
    }
}

/// Initial guess from the chosen mode.
pub fn initial_transform(source: &[Point3<f64>], target: &[Point3<f64>], mode: InitMode) -> RigidTransform {
    match mode {
        InitMode::Identity => RigidTransform::identity(),
        InitMode::Centroid => {
            let d = centroid(target) - centroid(source);
            RigidTransform::from_parts(&Matrix3::identity(), &d)
        }
        InitMode::CentroidPca => pca_transform(source, target),
        InitMode::Nearest => {
            let index = NearestIndex::new(target);
            let probe = probe(source);
            let candidates = [
                RigidTransform::identity(),
                initial_transform(source, target, InitMode::Centroid),
            ];
            let mut best = (f64::INFINITY, candidates[0]);
            for t in candidates {
                let cost = probe_cost(&index, &probe, &t);
                if cost < best.0 {
                    best = (cost, t);
                }
            }
            best.1
        }
    }
}

fn probe(source: &[Point3<f64>]) -> Vec<Point3<f64>> {
    source.iter().step_by((source.len() / 500).max(1)).copied().collect()
}

fn probe_cost(index: &NearestIndex, probe: &[Point3<f64>], t: &RigidTransform) -> f64 {
    index.distances(&probe.iter().map(|p| t.apply(p)).collect::<Vec<_>>()).iter().sum()
}

fn principal_axes(points: &[Point3<f64>], c: &Point3<f64>) -> Matrix3<f64> {
    let eig = SymmetricEigen::new(covariance(points, c));
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    Matrix3::from_columns(&order.map(|k| eig.eigenvectors.column(k).into_owned()))
}

fn pca_transform(source: &[Point3<f64>], target: &[Point3<f64>]) -> RigidTransform {
    let (cs, ct) = (centroid(source), centroid(target));
    let (a, b) = (principal_axes(source, &cs), principal_axes(target, &ct));
    let index = NearestIndex::new(target);
    let probe = probe(source);
    // Eigenvector signs are arbitrary; keep the proper flip that fits best.
    let mut best = (f64::INFINITY, RigidTransform::identity());
    for signs in [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]] {
        let s = Matrix3::from_diagonal(&Vector3::from(signs));
        let mut r = b * s * a.transpose();
        if r.determinant() < 0.0 {
            r = b * s * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0)) * a.transpose();
        }
        let t = RigidTransform::from_parts(&r, &(ct.coords - r * cs.coords));
        let cost = probe_cost(&index, &probe, &t);
        if cost < best.0 {
            best = (cost, t);
        }
    }
    best.1
}

/// ICP against a prebuilt target index, starting from `init`.
pub fn icp_indexed(
    source: &[Point3<f64>],
    target: &[Point3<f64>],
    index: &NearestIndex,
    threshold: f64,
    init: RigidTransform,
    max_iter: usize,
    tol: f64,
) -> RegistrationResult {
    let mut t = init;
    let mut m = correspond(source, &t, index, threshold);
    let (mut fitness, mut rmse) = score(&m, source.len());
    let mut iterations = 0;
    while iterations < max_iter && m.pairs.len() >= 3 {
        let (s, d): (Vec<Point3<f64>>, Vec<Point3<f64>>) =
            m.pairs.iter().map(|&(k, j)| (t.apply(&source[k]), target[j])).unzip();
        let next = kabsch(&s, &d).after(&t);
        let nm = correspond(source, &next, index, threshold);
        let (nf, nr) = score(&nm, source.len());
        iterations += 1;
        // Fewer matches or a worse fit ends the descent.
        if nf < fitness || (nf == fitness && nr > rmse) {
            break;
        }
        let settled = nf == fitness && (rmse - nr).abs() < tol;
        t = next;
        m = nm;
        fitness = nf;
        rmse = nr;
        if settled {
            break;
        }
    }
    RegistrationResult {
        transform: t,
        fitness,
        rmse,
        threshold,
        iterations,
    }
}

pub fn icp(source: &PointCloud, target: &PointCloud, threshold: f64, params: &IcpParams) -> Result<RegistrationResult> {
    check_cloud(&source.points, "source")?;
    check_cloud(&target.points, "target")?;
    if !(threshold > 0.0) {
        return Err(Error::invalid("threshold must be positive"));
    }
    let index = NearestIndex::new(&target.points);
    let init = initial_transform(&source.points, &target.points, params.init);
    Ok(icp_indexed(&source.points, &target.points, &index, threshold, init, params.max_iter, params.tol))
}

/// Warm-started ICP over increasing thresholds. With `stop_at_full` the sweep
/// ends at the first threshold that matches every source point.
pub fn sweep(
    source: &PointCloud,
    target: &PointCloud,
    thresholds: &[f64],
    params: &IcpParams,
    stop_at_full: bool,
) -> Result<RegistrationCurve> {
    if thresholds.is_empty() {
        return Err(Error::invalid("threshold grid is empty"));
    }
    if thresholds.iter().any(|t| !(*t > 0.0)) || thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("thresholds must be positive and strictly increasing"));
    }
    check_cloud(&source.points, "source")?;
    check_cloud(&target.points, "target")?;
    let index = NearestIndex::new(&target.points);
    let n = source.len();
    let mut seed = initial_transform(&source.points, &target.points, params.init);
    let mut prev_fitness = 0.0;
    let mut samples = Vec::with_capacity(thresholds.len());
    let mut compensation = None;
    for &th in thresholds {
        let mut r = icp_indexed(&source.points, &target.points, &index, th, seed, params.max_iter, params.tol);
        if r.fitness < prev_fitness {
            let m = correspond(&source.points, &seed, &index, th);
            let (f, e) = score(&m, n);
            r = RegistrationResult {
                transform: seed,
                fitness: f,
                rmse: e,
                threshold: th,
                iterations: 0,
            };
        }
        seed = r.transform;
        prev_fitness = r.fitness;
        samples.push(CurveSample {
            threshold: th,
            fitness: r.fitness,
            rmse: r.rmse,
        });
        if compensation.is_none() && r.fitness == 1.0 {
            compensation = Some((r.rmse, th));
            if stop_at_full {
                break;
            }
        }
    }
    Ok(RegistrationCurve {
        samples,
        compensation_value: compensation.map(|c| c.0),
        full_fitness_threshold: compensation.map(|c| c.1),
        complete: compensation.is_some(),
        transform: seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompensationMode {
    #[default]
    Offset,
    Scale,
}

fn layer_groups(cloud: &PointCloud) -> Vec<Vec<usize>> {
    let mut groups: HashMap<u64, Vec<usize>> = HashMap::new();
    let mut order = Vec::new();
    for (k, p) in cloud.points.iter().enumerate() {
        let key = match &cloud.layers {
            Some(l) => l[k] as u64,
            None => p.z.to_bits(),
        };
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(k);
    }
    order.into_iter().map(|k| groups.remove(&k).unwrap()).collect()
}

/// Moves points radially inward about each layer's centroid axis. `Offset`
/// subtracts `value` from every radius; `Scale` shrinks radii by the factor
/// that takes the cloud's mean radius down by `value`.
pub fn compensate(cloud: &PointCloud, value: f64, mode: CompensationMode) -> Result<PointCloud> {
    if !(value >= 0.0 && value.is_finite()) {
        return Err(Error::invalid("compensation value must be finite and non-negative"));
    }
    let groups = layer_groups(cloud);
    let centers: Vec<(f64, f64)> = groups
        .iter()
        .map(|g| {
            let (sx, sy) = g.iter().fold((0.0, 0.0), |(a, b), &k| (a + cloud.points[k].x, b + cloud.points[k].y));
            (sx / g.len() as f64, sy / g.len() as f64)
        })
        .collect();
    let factor = match mode {
        CompensationMode::Offset => 1.0,
        CompensationMode::Scale => {
            let (mut sum, mut n) = (0.0, 0usize);
            for (g, c) in groups.iter().zip(&centers) {
                for &k in g {
                    let p = cloud.points[k];
                    sum += (p.x - c.0).hypot(p.y - c.1);
                    n += 1;
                }
            }
            let mean = if n == 0 { 0.0 } else { sum / n as f64 };
            if mean > 0.0 {
                ((mean - value) / mean).max(0.0)
            } else {
                1.0
            }
        }
    };
    let mut out = cloud.clone();
    for (g, c) in groups.iter().zip(&centers) {
        for &k in g {
            let p = &mut out.points[k];
            let (dx, dy) = (p.x - c.0, p.y - c.1);
            let r = dx.hypot(dy);
            if r == 0.0 {
                continue;
            }
            let nr = match mode {
                CompensationMode::Offset => (r - value).max(0.0),
                CompensationMode::Scale => r * factor,
            };
            p.x = c.0 + dx * nr / r;
            p.y = c.1 + dy * nr / r;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cylinder(r: f64, n: usize, layers: usize) -> PointCloud {
        let mut pts = Vec::new();
        let mut lay = Vec::new();
        for k in 0..layers {
            for j in 0..n {
                let t = 2.0 * PI * j as f64 / n as f64;
                pts.push(Point3::new(r * t.cos(), r * t.sin(), k as f64));
                lay.push(k as u32);
            }
        }
        PointCloud::with_layers(pts, lay).unwrap()
    }

    #[test]
    fn identity_registration() {
        let c = cylinder(30.0, 100, 10);
        let r = icp(&c, &c, 1.0, &IcpParams::default()).unwrap();
        assert_eq!(r.fitness, 1.0);
        assert!(r.rmse < 1e-12);
    }

    #[test]
    fn recovers_translation() {
        let src: Vec<Point3<f64>> = (0..600)
            .map(|k| {
                let t = k as f64 * 0.37;
                Point3::new(10.0 * t.cos(), 6.0 * (1.3 * t).sin(), (k % 17) as f64)
            })
            .collect();
        let dst: Vec<Point3<f64>> = src.iter().map(|p| p + Vector3::new(1.0, 0.0, 0.0)).collect();
        let params = IcpParams {
            init: InitMode::Identity,
            max_iter: 200,
            tol: 0.0,
        };
        let r = icp(&PointCloud::new(src), &PointCloud::new(dst), 5.0, &params).unwrap();
        assert!((r.transform.translation() - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-6);
        assert!(r.rmse < 1e-6);
    }

    #[test]
    fn degenerate_clouds() {
        let line = PointCloud::new((0..10).map(|k| Point3::new(k as f64, 0.0, 0.0)).collect());
        assert!(icp(&line, &line, 1.0, &IcpParams::default()).is_err());
        let two = PointCloud::new(vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)]);
        assert!(icp(&two, &two, 1.0, &IcpParams::default()).is_err());
    }

    #[test]
    fn sweep_identical() {
        let c = cylinder(30.0, 100, 10);
        let curve = sweep(&c, &c, &[0.1, 1.0, 10.0], &IcpParams::default(), false).unwrap();
        assert!(curve.samples.iter().all(|s| s.fitness == 1.0));
        assert_eq!(curve.compensation_value, Some(0.0));
    }

    #[test]
    fn inflated_copy_compensation() {
        let target = cylinder(30.0, 400, 21);
        let inflated = cylinder(31.0, 400, 21);
        let curve = sweep(&inflated, &target, &default_thresholds(), &IcpParams::default(), true).unwrap();
        let c = curve.compensation_value.unwrap();
        assert!((c - 1.0).abs() < 0.05, "{c}");
        let fixed = compensate(&inflated, c, CompensationMode::Offset).unwrap();
        let again = sweep(&fixed, &target, &default_thresholds(), &IcpParams::default(), true).unwrap();
        assert!(again.compensation_value.unwrap() < c);
        assert!(again.full_fitness_threshold.unwrap() < curve.full_fitness_threshold.unwrap());
    }

    #[test]
    fn compensate_offset_and_scale() {
        let c = cylinder(31.0, 50, 3);
        assert_eq!(compensate(&c, 0.0, CompensationMode::Offset).unwrap().points.len(), 150);
        for mode in [CompensationMode::Offset, CompensationMode::Scale] {
            let out = compensate(&c, 1.0, mode).unwrap();
            assert_eq!(out.layers, c.layers);
            for (p, q) in out.points.iter().zip(&c.points) {
                assert!((p.coords.xy().norm() - 30.0).abs() < 1e-9);
                assert_eq!(p.z, q.z);
            }
        }
        assert!(compensate(&c, -1.0, CompensationMode::Offset).is_err());
    }

    #[test]
    fn unmatched_gives_infinite_rmse() {
        let a = cylinder(30.0, 50, 3);
        let far = RigidTransform::from_parts(&Matrix3::identity(), &Vector3::new(500.0, 0.0, 0.0));
        let params = IcpParams {
            init: InitMode::Identity,
            ..Default::default()
        };
        let r = icp(&a, &far.transform_cloud(&a), 0.5, &params).unwrap();
        assert_eq!(r.fitness, 0.0);
        assert!(r.rmse.is_infinite());
    }
}
