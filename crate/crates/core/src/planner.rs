//! Kneading command generation: envelope-shaping-first and similar-gradient
//! strategies, and the roughing/finishing cycle schedule.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::contour::{polar_area, Layer, LayeredContourCloud, PolarSample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct PlannerConfig {
    /// Finger opening `W` at rest.
    pub finger_width: f64,
    /// Molding compensation `m`; zero marks the finishing stage.
    pub mold_scale: f64,
    /// Billet center offset `s`.
    pub center_offset: f64,
    /// End-effector diameter `d_m`.
    pub effector_diameter: f64,
    /// Radial compensation `dr` added to every radius.
    pub radial_compensation: f64,
    /// Slab thickness used in the volume sums.
    pub layer_step: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            finger_width: 160.0,
            mold_scale: 0.0,
            center_offset: 0.0,
            effector_diameter: 4.0,
            radial_compensation: 0.0,
            layer_step: 1.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.effector_diameter > 0.0) {
            bad.push("effectorDiameter must be positive");
        }
        if !(self.finger_width > 0.0) {
            bad.push("fingerWidth must be positive");
        }
        if !(self.radial_compensation >= 0.0) {
            bad.push("radialCompensation must be non-negative");
        }
        if !(self.layer_step > 0.0) {
            bad.push("layerStep must be positive");
        }
        if !self.mold_scale.is_finite() || !self.center_offset.is_finite() {
            bad.push("moldScale and centerOffset must be finite");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(bad.join("; ")))
        }
    }

    pub fn is_finishing(&self) -> bool {
        self.mold_scale == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Strategy {
    Envelope,
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FeedCycle {
    pub feed_depth: f64,
    pub height_step: f64,
    pub radial_step: f64,
    /// Radial surplus left on the part after this cycle.
    pub compensation: f64,
}

impl FeedCycle {
    pub fn roughing(d_m: f64, compensation: f64) -> Self {
        FeedCycle {
            feed_depth: 1.0,
            height_step: d_m - 1.0,
            radial_step: d_m,
            compensation,
        }
    }

    pub fn finishing(d_m: f64) -> Self {
        FeedCycle {
            feed_depth: 0.0,
            height_step: d_m / 2.0,
            radial_step: d_m / 2.0,
            compensation: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KneadCommand {
    pub h: f64,
    /// Left finger contour index, 1-based.
    pub i: usize,
    #[serde(rename = "dRawL")]
    pub d_raw_l: f64,
    /// Right finger contour index, half a turn from `i`.
    pub j: usize,
    #[serde(rename = "dRawR")]
    pub d_raw_r: f64,
    #[serde(rename = "targetR")]
    pub target_r: f64,
    #[serde(rename = "targetRRight")]
    pub target_r_right: f64,
    /// Turntable angle of the left finger; the right one sits at `theta + pi`.
    pub theta: f64,
    /// Layer center the radii are measured from.
    pub center: [f64; 2],
    pub cycle: usize,
}

impl KneadCommand {
    /// The two finger contact points `(x, y, z)`, left then right.
    pub fn contacts(&self) -> [[f64; 3]; 2] {
        let at = |r: f64, a: f64| [self.center[0] + r * a.cos(), self.center[1] + r * a.sin(), self.h];
        [at(self.target_r, self.theta), at(self.target_r_right, self.theta + PI)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KneadingProgram {
    pub strategy: Strategy,
    pub config: PlannerConfig,
    pub cycles: Vec<FeedCycle>,
    /// Volume ratio per cycle.
    pub alpha: Vec<f64>,
    /// Command heights per cycle.
    pub compressed_heights: Vec<Vec<f64>>,
    pub commands: Vec<KneadCommand>,
}

impl KneadingProgram {
    pub fn empty(strategy: Strategy, config: PlannerConfig) -> Self {
        KneadingProgram {
            strategy,
            config,
            cycles: Vec::new(),
            alpha: Vec::new(),
            compressed_heights: Vec::new(),
            commands: Vec::new(),
        }
    }

    /// Appends another program's cycles, renumbering its commands.
    pub fn append(&mut self, other: KneadingProgram) {
        let offset = self.cycles.len();
        self.cycles.extend(other.cycles);
        self.alpha.extend(other.alpha);
        self.compressed_heights.extend(other.compressed_heights);
        self.commands.extend(other.commands.into_iter().map(|mut c| {
            c.cycle += offset;
            c
        }));
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `D_raw = W/2 - |D - s| - m`.
pub fn raw_depth(d: f64, cfg: &PlannerConfig) -> f64 {
    cfg.finger_width / 2.0 - (d - cfg.center_offset).abs() - cfg.mold_scale
}

/// 1-based left and right index sets for the first half-turn.
pub fn pair_fingers(n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::invalid(format!("finger pairing needs an even count, got {n}")));
    }
    Ok(((1..=n / 2).collect(), (n / 2 + 1..=n).collect()))
}

/// Second half-turn: the fingers exchange contour halves.
pub fn swap_fingers((l, r): (Vec<usize>, Vec<usize>)) -> (Vec<usize>, Vec<usize>) {
    (r, l)
}

/// Kneads per layer, `ceil(C / d_m)` or `ceil(C / (d_m/2))` when finishing.
pub fn knead_count(circumference: f64, d_m: f64, finishing: bool) -> usize {
    let div = if finishing { d_m / 2.0 } else { d_m };
    (circumference / div).ceil().max(1.0) as usize
}

/// Index stride `max(1, floor(N / K))`.
pub fn knead_step(n: usize, k: usize) -> usize {
    (n / k.max(1)).max(1)
}

/// Envelope volumes from per-layer maximum radius: `(V_orig, V_scaled)`.
pub fn envelope_volumes(target: &LayeredContourCloud, cfg: &PlannerConfig) -> (f64, f64) {
    let dh = cfg.layer_step;
    target.layers.iter().fold((0.0, 0.0), |(vo, vs), l| {
        let d = l.max_radius();
        let dp = d + cfg.radial_compensation;
        (vo + PI * d * d * dh, vs + PI * dp * dp * dh)
    })
}

/// Shoelace volumes with every radius grown by `dr`: `(V_orig, V_scaled)`.
pub fn gradient_volumes(target: &LayeredContourCloud, cfg: &PlannerConfig) -> (f64, f64) {
    target.layers.iter().fold((0.0, 0.0), |(vo, vs), l| {
        let grown: Vec<PolarSample> = l
            .samples
            .iter()
            .map(|s| PolarSample {
                r: s.r + cfg.radial_compensation,
                theta: s.theta,
            })
            .collect();
        (vo + l.area(), vs + polar_area(&grown))
    })
}

/// Source layer for a compressed height: floor of the inverse compression,
/// clamped to the last layer.
pub fn source_layer(target: &LayeredContourCloud, alpha: f64, h: f64) -> usize {
    let h1 = target.layers[0].z;
    let dz = target.layer_step();
    let last = target.len() - 1;
    if dz <= 0.0 {
        return 0;
    }
    let src = h1 + (h - h1) / alpha;
    let idx = ((src - h1) / dz + 1e-9).floor();
    if idx <= 0.0 {
        0
    } else {
        (idx as usize).min(last)
    }
}

/// Command heights from `h_1 + d_m/2` in `height_step` increments up to the
/// compressed top `h_1 + alpha (H_max - h_1)`.
pub fn command_heights(target: &LayeredContourCloud, alpha: f64, d_m: f64, height_step: f64) -> Vec<f64> {
    let h1 = target.layers[0].z;
    let top = h1 + alpha * (target.layers[target.len() - 1].z - h1);
    let start = h1 + d_m / 2.0;
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let h = start + k as f64 * height_step;
        if h > top + 1e-9 {
            break;
        }
        out.push(h);
        k += 1;
    }
    if out.is_empty() {
        out.push(top.max(h1));
    }
    out
}

fn layer_commands(layer: &Layer, h: f64, cfg: &PlannerConfig, cycle: usize) -> Result<Vec<KneadCommand>> {
    let n = layer.samples.len();
    pair_fingers(n)?;
    let circumference = 2.0 * PI * (layer.max_radius() + cfg.radial_compensation);
    let k = knead_count(circumference, cfg.effector_diameter, cfg.is_finishing());
    let s = knead_step(n, k);
    let theta0 = layer.samples[0].theta;
    let half = n / 2;
    Ok((1..=n)
        .step_by(s)
        .map(|i| {
            // Past the half-turn the fingers hold each other's halves.
            let j = (i - 1 + half) % n + 1;
            let dl = layer.samples[i - 1].r;
            let dr = layer.samples[j - 1].r;
            KneadCommand {
                h,
                i,
                d_raw_l: raw_depth(dl, cfg),
                j,
                d_raw_r: raw_depth(dr, cfg),
                target_r: dl + cfg.mold_scale,
                target_r_right: dr + cfg.mold_scale,
                theta: theta0 + 2.0 * PI * (i - 1) as f64 / n as f64,
                center: layer.center,
                cycle,
            }
        })
        .collect())
}

/// One pass over the target for a given cycle.
pub fn plan_pass(
    target: &LayeredContourCloud,
    cfg: &PlannerConfig,
    strategy: Strategy,
    cycle: FeedCycle,
) -> Result<KneadingProgram> {
    cfg.validate()?;
    if target.is_empty() {
        return Err(Error::invalid("target has no layers"));
    }
    if strategy == Strategy::Gradient && target.len() < 2 {
        return Err(Error::invalid("gradient planning needs at least two layers"));
    }
    let (v_orig, v_scaled) = match strategy {
        Strategy::Envelope => envelope_volumes(target, cfg),
        Strategy::Gradient => gradient_volumes(target, cfg),
    };
    if !(v_scaled > 0.0) {
        return Err(Error::degenerate("target encloses no volume"));
    }
    let alpha = v_orig / v_scaled;
    let heights = command_heights(target, alpha, cfg.effector_diameter, cycle.height_step);
    let mut commands = Vec::new();
    for &h in &heights {
        let layer = &target.layers[source_layer(target, alpha, h)];
        commands.extend(layer_commands(layer, h, cfg, 0)?);
    }
    Ok(KneadingProgram {
        strategy,
        config: *cfg,
        cycles: vec![cycle],
        alpha: vec![alpha],
        compressed_heights: vec![heights],
        commands,
    })
}

fn cycle_for(cfg: &PlannerConfig) -> FeedCycle {
    if cfg.is_finishing() {
        FeedCycle::finishing(cfg.effector_diameter)
    } else {
        FeedCycle::roughing(cfg.effector_diameter, cfg.radial_compensation)
    }
}

pub fn envelope_plan(target: &LayeredContourCloud, cfg: &PlannerConfig) -> Result<KneadingProgram> {
    plan_pass(target, cfg, Strategy::Envelope, cycle_for(cfg))
}

pub fn gradient_plan(target: &LayeredContourCloud, cfg: &PlannerConfig) -> Result<KneadingProgram> {
    plan_pass(target, cfg, Strategy::Gradient, cycle_for(cfg))
}

pub fn plan(target: &LayeredContourCloud, cfg: &PlannerConfig, strategy: Strategy) -> Result<KneadingProgram> {
    match strategy {
        Strategy::Envelope => envelope_plan(target, cfg),
        Strategy::Gradient => gradient_plan(target, cfg),
    }
}

/// Roughing cycles at 1 mm feed until the radial surplus is used up, then
/// one finishing cycle.
pub fn plan_cycles(billet_max_r: f64, target_min_r: f64, cfg: &PlannerConfig) -> Result<Vec<FeedCycle>> {
    if !(billet_max_r.is_finite() && target_min_r.is_finite() && target_min_r >= 0.0) {
        return Err(Error::invalid("billet and target radii must be finite and non-negative"));
    }
    if billet_max_r < target_min_r {
        return Err(Error::InfeasibleBillet {
            billet_max_r,
            target_min_r,
        });
    }
    let d_m = cfg.effector_diameter;
    let dr_max = billet_max_r - target_min_r;
    let roughing = dr_max.ceil() as usize;
    let mut cycles: Vec<FeedCycle> = (1..=roughing)
        .map(|c| FeedCycle::roughing(d_m, (dr_max - c as f64).max(0.0)))
        .collect();
    cycles.push(FeedCycle::finishing(d_m));
    Ok(cycles)
}
