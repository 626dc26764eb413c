//! Enveloping / non-enveloping classification from per-layer shape signals.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contour::{Layer, LayeredContourCloud};
use crate::error::{Error, Result};

/// Uniform angular grid used for the torsion estimate.
const TORSION_GRID: usize = 720;
const TORSION_HARMONICS: usize = 64;
/// Consecutive layers are assumed to twist by less than this.
const MAX_LAYER_TWIST: f64 = PI / 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ShapeSignature {
    pub z: Vec<f64>,
    pub mean_radius: Vec<f64>,
    pub area: Vec<f64>,
    /// Twist rate in rad/mm; entry `k` compares layer `k` with layer `k - 1`
    /// and entry 0 repeats entry 1.
    pub torsion: Vec<f64>,
    pub center: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ClassifierTolerances {
    /// Largest allowed jump in d(mean radius)/dz between consecutive layers.
    pub grad_jump: f64,
    /// Sign changes allowed in dA/dz.
    pub sign_flips: usize,
    /// |dA/dz| below this (mm^2/mm) counts as zero.
    pub area_noise_floor: f64,
    /// Largest allowed step in twist rate (rad/mm).
    pub torsion_jump: f64,
    /// Largest allowed distance of a layer center from the mean axis (mm).
    pub center_drift: f64,
}

impl Default for ClassifierTolerances {
    fn default() -> Self {
        ClassifierTolerances {
            grad_jump: 0.5,
            sign_flips: 0,
            area_noise_floor: 1e-6,
            torsion_jump: 0.05,
            center_drift: 1.0,
        }
    }
}

impl ClassifierTolerances {
    /// Tolerances for the same shape with all coordinates scaled by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        ClassifierTolerances {
            grad_jump: self.grad_jump,
            sign_flips: self.sign_flips,
            area_noise_floor: self.area_noise_floor * k,
            torsion_jump: self.torsion_jump / k,
            center_drift: self.center_drift * k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Enveloping,
    NonEnveloping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub pass: bool,
    pub statistic: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: Label,
    pub criteria: Vec<Criterion>,
}

impl Classification {
    pub fn failed(&self) -> impl Iterator<Item = &Criterion> {
        self.criteria.iter().filter(|c| !c.pass)
    }
}

pub fn signature(cloud: &LayeredContourCloud) -> Result<ShapeSignature> {
    if cloud.len() < 3 {
        return Err(Error::invalid(format!("need at least 3 layers, got {}", cloud.len())));
    }
    cloud.validate()?;
    let area: Vec<f64> = cloud.layers.iter().map(Layer::area).collect();
    if let Some(k) = area.iter().position(|a| !(*a > 0.0)) {
        return Err(Error::degenerate(format!("layer {k} has non-positive area")));
    }
    let spectra: Vec<Vec<(f64, f64)>> = cloud.layers.par_iter().map(radius_spectrum).collect();
    let mut torsion: Vec<f64> = (1..cloud.len())
        .into_par_iter()
        .map(|k| {
            let dz = cloud.layers[k].z - cloud.layers[k - 1].z;
            best_rotation(&spectra[k - 1], &spectra[k]) / dz
        })
        .collect();
    torsion.insert(0, torsion[0]);
    Ok(ShapeSignature {
        z: cloud.layers.iter().map(|l| l.z).collect(),
        mean_radius: cloud.layers.iter().map(Layer::mean_radius).collect(),
        area,
        torsion,
        center: cloud.layers.iter().map(|l| l.center).collect(),
    })
}

/// Fourier coefficients 1..=H of r(theta), resampled onto a uniform grid.
fn radius_spectrum(layer: &Layer) -> Vec<(f64, f64)> {
    let mut s: Vec<(f64, f64)> = layer.samples.iter().map(|p| (p.theta, p.r)).collect();
    s.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Pad periodically so every grid angle has a bracketing pair.
    let (first, last) = (s[0], s[s.len() - 1]);
    s.insert(0, (last.0 - 2.0 * PI, last.1));
    s.push((first.0 + 2.0 * PI, first.1));
    let grid: Vec<f64> = (0..TORSION_GRID)
        .map(|m| {
            let theta = -PI + 2.0 * PI * m as f64 / TORSION_GRID as f64;
            let hi = s.partition_point(|p| p.0 < theta).clamp(1, s.len() - 1);
            let (a, b) = (s[hi - 1], s[hi]);
            let span = b.0 - a.0;
            if span <= 0.0 {
                a.1
            } else {
                a.1 + (theta - a.0) / span * (b.1 - a.1)
            }
        })
        .collect();
    (1..=TORSION_HARMONICS)
        .map(|h| {
            let (mut re, mut im) = (0.0, 0.0);
            for (m, r) in grid.iter().enumerate() {
                let ang = h as f64 * (-PI + 2.0 * PI * m as f64 / TORSION_GRID as f64);
                re += r * ang.cos();
                im -= r * ang.sin();
            }
            (re / TORSION_GRID as f64, im / TORSION_GRID as f64)
        })
        .collect()
}

/// Rotation `s` maximizing the correlation of `r_a(theta - s)` with `r_b(theta)`.
fn best_rotation(fa: &[(f64, f64)], fb: &[(f64, f64)]) -> f64 {
    let power: f64 = fa.iter().map(|(re, im)| re * re + im * im).sum();
    let dc_scale: f64 = fb.iter().map(|(re, im)| re * re + im * im).sum();
    if power < 1e-18 || dc_scale < 1e-18 {
        return 0.0;
    }
    // Sum over harmonics of Re(F_n conj(G_n) e^{-i n s}).
    let corr = |s: f64| -> f64 {
        fa.iter()
            .zip(fb)
            .enumerate()
            .map(|(k, ((ar, ai), (br, bi)))| {
                let n = (k + 1) as f64;
                // F conj(G)
                let pr = ar * br + ai * bi;
                let pi = ai * br - ar * bi;
                let (c, sn) = ((n * s).cos(), (n * s).sin());
                pr * c + pi * sn
            })
            .sum()
    };
    let steps = 256;
    let h = 2.0 * MAX_LAYER_TWIST / steps as f64;
    let mut best: (f64, f64) = (f64::NEG_INFINITY, 0.0);
    for i in 0..=steps {
        let s = -MAX_LAYER_TWIST + i as f64 * h;
        let c = corr(s);
        // Prefer the smallest rotation among equal peaks.
        if c > best.0 + 1e-15 || (c >= best.0 - 1e-15 && s.abs() < best.1.abs()) {
            best = (c, s);
        }
    }
    golden_max(&corr, best.1 - h, best.1 + h)
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-13 {
            break;
        }
    }
    0.5 * (a + b)
}

fn forward_diff(z: &[f64], v: &[f64]) -> Vec<f64> {
    (1..v.len()).map(|k| (v[k] - v[k - 1]) / (z[k] - z[k - 1])).collect()
}

fn max_step(v: &[f64]) -> f64 {
    v.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
}

pub fn classify(sig: &ShapeSignature, tol: &ClassifierTolerances) -> Classification {
    let grad = forward_diff(&sig.z, &sig.mean_radius);
    let grad_jump = max_step(&grad);

    let d_area = forward_diff(&sig.z, &sig.area);
    let mut flips = 0usize;
    let mut last_sign = 0.0;
    for a in d_area.iter().filter(|a| a.abs() > tol.area_noise_floor) {
        let s = a.signum();
        if last_sign != 0.0 && s != last_sign {
            flips += 1;
        }
        last_sign = s;
    }

    let torsion_jump = max_step(&sig.torsion);
    let n = sig.center.len().max(1) as f64;
    let axis = sig
        .center
        .iter()
        .fold([0.0, 0.0], |acc, c| [acc[0] + c[0] / n, acc[1] + c[1] / n]);
    let drift = sig
        .center
        .iter()
        .map(|c| ((c[0] - axis[0]).powi(2) + (c[1] - axis[1]).powi(2)).sqrt())
        .fold(0.0, f64::max);

    let criteria = vec![
        Criterion {
            name: "meanRadiusGradientContinuity".into(),
            pass: grad_jump <= tol.grad_jump,
            statistic: grad_jump,
            tolerance: tol.grad_jump,
        },
        Criterion {
            name: "sectionAreaMonotonicity".into(),
            pass: flips <= tol.sign_flips,
            statistic: flips as f64,
            tolerance: tol.sign_flips as f64,
        },
        Criterion {
            name: "torsionContinuity".into(),
            pass: torsion_jump <= tol.torsion_jump,
            statistic: torsion_jump,
            tolerance: tol.torsion_jump,
        },
        Criterion {
            name: "centerDrift".into(),
            pass: drift <= tol.center_drift,
            statistic: drift,
            tolerance: tol.center_drift,
        },
    ];
    let label = if criteria.iter().all(|c| c.pass) {
        Label::Enveloping
    } else {
        Label::NonEnveloping
    };
    Classification { label, criteria }
}
