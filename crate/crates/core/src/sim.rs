//! Kinematic, volume-conserving stand-in for the kneading machine.
//!
//! The billet is a stack of slabs, each a polar radius grid about the
//! origin. A finger clamps cells inside its window to the commanded radius
//! plus a rebound offset, and the displaced volume moves to the slabs above
//! the touched band as uniform radial growth. With no full slab above, the
//! part grows upward instead.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::contour::LayeredContourCloud;
use crate::error::{Error, Result};
use crate::metrics::{ring_mesh_area, AreaSample};
use crate::planner::{plan_cycles, plan_pass, FeedCycle, KneadCommand, KneadingProgram, PlannerConfig, Strategy};
use crate::shapes::ShapeSpec;
use crate::slicer::{hull_layer, plane_heights, resample_contour};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SimConfig {
    pub rebound_eps: f64,
    /// Angular grid size.
    pub angles: usize,
    pub layer_step: f64,
    /// Samples per exported contour.
    pub export_points: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            rebound_eps: 0.3,
            angles: 400,
            layer_step: 1.0,
            export_points: 400,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.rebound_eps >= 0.0 && self.rebound_eps.is_finite()) {
            bad.push("reboundEps must be finite and non-negative");
        }
        if self.angles < 8 {
            bad.push("angles must be at least 8");
        }
        if !(self.layer_step > 0.0 && self.layer_step.is_finite()) {
            bad.push("layerStep must be positive");
        }
        if self.export_points < 3 || !self.export_points.is_multiple_of(2) {
            bad.push("exportPoints must be even and at least 4");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(bad.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BilletState {
    pub layer_step: f64,
    pub rebound_eps: f64,
    /// `radii[k][a]` at angle `2 pi a / N`, slab `k` spanning
    /// `[k dz, (k + 1) dz)`.
    pub radii: Vec<Vec<f64>>,
    /// Filled fraction of the top slab, in `(0, 1]`.
    pub top_fraction: f64,
}

fn grid_area(r: &[f64]) -> f64 {
    let n = r.len();
    let s: f64 = (0..n).map(|a| r[a] * r[(a + 1) % n]).sum();
    0.5 * (2.0 * PI / n as f64).sin() * s
}

fn wrap(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Uniform radial growth `delta` raising the grid area by `da`.
fn grow(r: &mut [f64], da: f64) {
    if da == 0.0 {
        return;
    }
    let n = r.len() as f64;
    let s = (2.0 * PI / n).sin();
    let sum: f64 = r.iter().sum();
    // A(delta) = A + s sum delta + s n delta^2 / 2
    let a = 0.5 * s * n;
    let b = s * sum;
    let delta = 2.0 * da / (b + (b * b + 4.0 * a * da).sqrt());
    for x in r.iter_mut() {
        *x += delta;
    }
}

/// Area a slab gains by widening uniformly until its largest radius is `cap`.
fn growth_room(r: &[f64], cap: f64) -> f64 {
    let delta = cap - r.iter().copied().fold(0.0, f64::max);
    if delta <= 0.0 {
        return 0.0;
    }
    let n = r.len() as f64;
    let s = (2.0 * PI / n).sin();
    s * r.iter().sum::<f64>() * delta + 0.5 * s * n * delta * delta
}

/// Splits `total` evenly over bins, none beyond its room; the excess is left
/// unassigned.
fn water_fill(room: &[f64], total: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..room.len()).collect();
    order.sort_by(|&a, &b| room[a].total_cmp(&room[b]));
    let mut out = vec![0.0; room.len()];
    let mut left = total;
    for (done, &i) in order.iter().enumerate() {
        let share = left / (room.len() - done) as f64;
        let give = share.min(room[i]);
        out[i] = give;
        left -= give;
    }
    out
}

impl BilletState {
    pub fn init(spec: &ShapeSpec, angles: usize, layer_step: f64, rebound_eps: f64) -> Result<Self> {
        spec.validate()?;
        let profile: Vec<f64> = (0..angles)
            .map(|a| {
                let phi = 2.0 * PI * a as f64 / angles as f64;
                match spec {
                    ShapeSpec::Cylinder { diameter, .. } => Ok(diameter / 2.0),
                    ShapeSpec::SquarePrism { side, .. } => Ok(side / 2.0 / phi.cos().abs().max(phi.sin().abs())),
                    _ => Err(Error::invalid("billets must be cylinders or square prisms")),
                }
            })
            .collect::<Result<_>>()?;
        let h = spec.height();
        let slabs = (h / layer_step - 1e-9).ceil().max(1.0) as usize;
        let top_fraction = h / layer_step - (slabs - 1) as f64;
        Ok(BilletState {
            layer_step,
            rebound_eps,
            radii: vec![profile; slabs],
            top_fraction,
        })
    }

    pub fn angles(&self) -> usize {
        self.radii.first().map_or(0, Vec::len)
    }

    pub fn slab_count(&self) -> usize {
        self.radii.len()
    }

    fn weight(&self, k: usize) -> f64 {
        if k + 1 == self.radii.len() {
            self.top_fraction
        } else {
            1.0
        }
    }

    pub fn slab_area(&self, k: usize) -> f64 {
        grid_area(&self.radii[k])
    }

    pub fn volume(&self) -> f64 {
        (0..self.radii.len()).map(|k| self.slab_area(k) * self.weight(k) * self.layer_step).sum()
    }

    pub fn height(&self) -> f64 {
        (self.radii.len() as f64 - 1.0 + self.top_fraction) * self.layer_step
    }

    pub fn max_radius(&self) -> f64 {
        self.radii.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Clamps one finger contact on slab `k`. The finger covers the wedge
    /// whose arc at the commanded radius is the effector width.
    fn clamp(&mut self, k: usize, center: [f64; 2], theta: f64, target: f64, half_width: f64) {
        let limit = (target + self.rebound_eps).max(0.0);
        let window = half_width / limit.max(1e-9);
        let c = Vector2::new(center[0], center[1]);
        let n = self.angles();
        for a in 0..n {
            let phi = 2.0 * PI * a as f64 / n as f64;
            let u = Vector2::new(phi.cos(), phi.sin());
            let r = self.radii[k][a];
            let q = u * r - c;
            let rho = q.norm();
            if rho <= limit || rho == 0.0 {
                continue;
            }
            if wrap(q.y.atan2(q.x) - theta).abs() > window {
                continue;
            }
            let b = u.dot(&c);
            let disc = b * b - c.norm_squared() + limit * limit;
            let reach = if disc < 0.0 { 0.0 } else { (b + disc.sqrt()).max(0.0) };
            if reach < r {
                self.radii[k][a] = reach;
            }
        }
    }

    /// Applies one command to the slabs whose base height lies in
    /// `(lo, hi]`. Returns the displaced volume.
    ///
    /// `prev` holds the left and right radii the same fingers were given at
    /// height `lo`; slabs between `lo` and the command height are clamped to
    /// the linear blend of the two.
    pub fn apply_command(
        &mut self,
        cmd: &KneadCommand,
        lo: f64,
        hi: f64,
        d_m: f64,
        prev: Option<(f64, f64)>,
    ) -> Result<f64> {
        let dz = self.layer_step;
        let touched: Vec<usize> = (0..self.radii.len())
            .filter(|&k| {
                let z = k as f64 * dz;
                z > lo && z <= hi + 1e-9
            })
            .collect();
        let mut removed = 0.0;
        let mut pressed = false;
        let mut envelope: f64 = 0.0;
        for &k in &touched {
            let before = self.slab_area(k);
            envelope = envelope.max(self.radii[k].iter().copied().fold(0.0, f64::max));
            let (left, right) = match prev {
                Some((pl, pr)) if lo.is_finite() && cmd.h > lo && (k as f64 * dz) < cmd.h => {
                    let t = (k as f64 * dz - lo) / (cmd.h - lo);
                    (pl + t * (cmd.target_r - pl), pr + t * (cmd.target_r_right - pr))
                }
                _ => (cmd.target_r, cmd.target_r_right),
            };
            self.clamp(k, cmd.center, cmd.theta, left, d_m / 2.0);
            self.clamp(k, cmd.center, cmd.theta + PI, right, d_m / 2.0);
            let after = self.slab_area(k);
            if after < before {
                removed += (before - after) * self.weight(k) * dz;
                pressed = true;
            }
        }
        if !pressed {
            return Ok(0.0);
        }
        let template = self.radii.len() - 1;
        // Full slabs above the band widen uniformly, none past the band's
        // envelope before pressing; what does not fit goes on top.
        let above: Vec<usize> = (0..self.radii.len() - 1)
            .filter(|&k| k as f64 * dz > hi + 1e-9)
            .collect();
        let room: Vec<f64> = above.iter().map(|&k| growth_room(&self.radii[k], envelope)).collect();
        let shares = water_fill(&room, removed / dz);
        let mut placed = 0.0;
        for (&k, &da) in above.iter().zip(&shares) {
            let a0 = self.slab_area(k);
            grow(&mut self.radii[k], da);
            placed += (self.slab_area(k) - a0) * dz;
        }
        let rest = removed - placed;
        if rest > 1e-12 * removed {
            self.extrude(rest, template)?;
        } else if rest != 0.0 {
            // Rounding residue goes to the top slab's height.
            let top = self.radii.len() - 1;
            self.top_fraction += rest / (self.slab_area(top) * dz);
        }
        Ok(removed)
    }

    /// Fills the top slab, then stacks copies of slab `shape`.
    fn extrude(&mut self, volume: f64, shape: usize) -> Result<()> {
        let dz = self.layer_step;
        let top = self.radii.len() - 1;
        let a_top = self.slab_area(top);
        let template = self.radii[shape].clone();
        let a_new = grid_area(&template);
        if !(a_top > 0.0 && a_new > 0.0) {
            return Err(Error::degenerate("cannot extrude from a zero-area slab"));
        }
        let room = (1.0 - self.top_fraction) * a_top * dz;
        let mut rem = volume;
        let take = rem.min(room);
        self.top_fraction += take / (a_top * dz);
        rem -= take;
        // Rounding leftovers stay in the current top slab.
        if rem <= 1e-12 * a_top * dz {
            self.top_fraction += rem / (a_top * dz);
            return Ok(());
        }
        while rem > 0.0 {
            let f = (rem / (a_new * dz)).min(1.0);
            self.radii.push(template.clone());
            self.top_fraction = f;
            rem -= f * a_new * dz;
            if rem <= 1e-12 * a_new * dz {
                self.top_fraction += rem / (a_new * dz);
                break;
            }
        }
        Ok(())
    }

    /// Heights of the exported contours, on the same planes the slicer would
    /// cut through a part of this height.
    pub fn contour_heights(&self) -> Vec<f64> {
        plane_heights(0.0, self.height(), self.layer_step)
    }

    /// Convex hull of each slab resampled to `n` points about its centroid,
    /// on the slicer planes.
    pub fn export(&self, n: usize) -> Result<LayeredContourCloud> {
        self.contours_at(&self.contour_heights(), n)
    }

    /// Lateral area from the base up to the true top, fractional slab
    /// included.
    pub fn lateral_area(&self, n: usize) -> Result<f64> {
        let dz = self.layer_step;
        let mut heights: Vec<f64> = (0..self.radii.len()).map(|k| k as f64 * dz).collect();
        heights.push(self.height());
        ring_mesh_area(&self.contours_at(&heights, n)?)
    }

    fn contours_at(&self, heights: &[f64], n: usize) -> Result<LayeredContourCloud> {
        let m = self.angles();
        let dz = self.layer_step;
        let layers = heights
            .iter()
            .map(|&z| {
                let k = ((z / dz + 1e-9).floor() as usize).min(self.radii.len() - 1);
                let slab = &self.radii[k];
                let pts: Vec<Point2<f64>> = (0..m)
                    .map(|a| {
                        let phi = 2.0 * PI * a as f64 / m as f64;
                        Point2::new(slab[a] * phi.cos(), slab[a] * phi.sin())
                    })
                    .collect();
                resample_contour(z, &hull_layer(&pts)?, n)
            })
            .collect::<Result<Vec<_>>>()?;
        LayeredContourCloud::new(layers)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunStats {
    pub commands: usize,
    pub displaced_volume: f64,
    /// Largest relative volume change over a single command.
    pub max_command_drift: f64,
}

/// Applies the commands in order. Each command works on the band between
/// the previous command height in its cycle and its own height; the first
/// height of a cycle reaches down to the base and the last one up to the
/// top of the part.
pub fn run_program(state: &mut BilletState, program: &KneadingProgram) -> Result<RunStats> {
    let d_m = program.config.effector_diameter;
    let mut top_h: HashMap<usize, f64> = HashMap::new();
    for cmd in &program.commands {
        let h = top_h.entry(cmd.cycle).or_insert(cmd.h);
        *h = h.max(cmd.h);
    }
    let mut stats = RunStats::default();
    let mut cycle = usize::MAX;
    let mut current_h = f64::NAN;
    let mut lo = f64::NEG_INFINITY;
    let mut last: HashMap<usize, (f64, f64, f64)> = HashMap::new();
    for cmd in &program.commands {
        if cmd.cycle != cycle {
            last.clear();
            cycle = cmd.cycle;
            lo = f64::NEG_INFINITY;
            current_h = cmd.h;
        } else if cmd.h != current_h {
            lo = current_h;
            current_h = cmd.h;
        }
        let before = state.volume();
        let hi = if cmd.h >= top_h[&cmd.cycle] { f64::INFINITY } else { cmd.h };
        let prev = last.get(&cmd.i).filter(|p| p.0 == lo).map(|p| (p.1, p.2));
        stats.displaced_volume += state.apply_command(cmd, lo, hi, d_m, prev)?;
        last.insert(cmd.i, (cmd.h, cmd.target_r, cmd.target_r_right));
        let after = state.volume();
        stats.max_command_drift = stats.max_command_drift.max((after - before).abs() / before);
        stats.commands += 1;
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimOutcome {
    pub state: BilletState,
    pub program: KneadingProgram,
    pub area_series: Vec<AreaSample>,
    pub initial_volume: f64,
    pub final_volume: f64,
    pub max_command_drift: f64,
    pub cloud: LayeredContourCloud,
}

impl SimOutcome {
    pub fn program_drift(&self) -> f64 {
        (self.final_volume - self.initial_volume).abs() / self.initial_volume
    }
}

/// Roughing cycles re-planned from the current state, then finishing.
/// Each cycle's radial surplus is the scheduled one, capped by how far the
/// state still sticks out past the target and never above the previous
/// cycle's.
pub fn simulate(
    target: &LayeredContourCloud,
    mut state: BilletState,
    planner: &PlannerConfig,
    strategy: Strategy,
    sim: &SimConfig,
) -> Result<SimOutcome> {
    sim.validate()?;
    let schedule = plan_cycles(state.max_radius(), target.min_radius(), planner)?;
    let initial_volume = state.volume();
    let mut program = KneadingProgram::empty(strategy, *planner);
    let mut area_series = vec![AreaSample {
        cycle: 0,
        area: state.lateral_area(sim.export_points)?,
    }];
    let mut max_drift: f64 = 0.0;
    let mut last_dr = f64::INFINITY;
    for (c, scheduled) in schedule.iter().enumerate() {
        let surplus = (state.max_radius() - target.max_radius()).max(0.0);
        let dr = scheduled.compensation.min(surplus).min(last_dr);
        last_dr = dr;
        let finishing = c + 1 == schedule.len();
        let cfg = PlannerConfig {
            radial_compensation: if finishing { 0.0 } else { dr },
            mold_scale: if finishing { 0.0 } else { dr },
            ..*planner
        };
        let cycle = FeedCycle {
            compensation: cfg.radial_compensation,
            ..*scheduled
        };
        let pass = plan_pass(target, &cfg, strategy, cycle)?;
        let stats = run_program(&mut state, &pass)?;
        max_drift = max_drift.max(stats.max_command_drift);
        program.append(pass);
        area_series.push(AreaSample {
            cycle: c + 1,
            area: state.lateral_area(sim.export_points)?,
        });
    }
    let cloud = state.export(sim.export_points)?;
    Ok(SimOutcome {
        final_volume: state.volume(),
        state,
        program,
        area_series,
        initial_volume,
        max_command_drift: max_drift,
        cloud,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmd(h: f64, theta: f64, r: f64) -> KneadCommand {
        KneadCommand {
            h,
            i: 1,
            d_raw_l: 0.0,
            j: 201,
            d_raw_r: 0.0,
            target_r: r,
            target_r_right: r,
            theta,
            center: [0.0, 0.0],
            cycle: 0,
        }
    }

    fn disk(d: f64, h: f64, eps: f64) -> BilletState {
        BilletState::init(&ShapeSpec::Cylinder { diameter: d, height: h }, 400, 1.0, eps).unwrap()
    }

    #[test]
    fn disk_billet() {
        let s = disk(80.0, 40.0, 0.0);
        assert_eq!(s.slab_count(), 40);
        assert_eq!(s.top_fraction, 1.0);
        assert!(s.radii.iter().flatten().all(|&r| r == 40.0));
        let analytic = PI * 1600.0 * 40.0;
        assert!((s.volume() - analytic).abs() / analytic < 1e-4);
    }

    #[test]
    fn square_billet() {
        let s = BilletState::init(&ShapeSpec::SquarePrism { side: 60.0, height: 31.4 }, 400, 1.0, 0.0).unwrap();
        assert_eq!(s.slab_count(), 32);
        assert!((s.top_fraction - 0.4).abs() < 1e-9);
        assert!((s.max_radius() - 30.0 * 2f64.sqrt()).abs() < 1e-9);
        assert!((s.height() - 31.4).abs() < 1e-9);
    }

    #[test]
    fn outside_target_is_noop() {
        let mut s = disk(60.0, 10.0, 0.0);
        let before = s.clone();
        assert_eq!(s.apply_command(&cmd(5.0, 0.0, 31.0), f64::NEG_INFINITY, 5.0, 4.0, None).unwrap(), 0.0);
        assert_eq!(s, before);
    }

    #[test]
    fn clamp_moves_area_up() {
        let mut s = disk(60.0, 10.0, 0.3);
        for k in 4..10 {
            s.radii[k] = vec![25.0; 400];
        }
        let v = s.volume();
        let upper: f64 = (4..10).map(|k| s.slab_area(k)).sum();
        let lower: f64 = (0..4).map(|k| s.slab_area(k)).sum();
        let moved = s.apply_command(&cmd(3.0, 0.5, 28.0), 1.0, 3.0, 4.0, None).unwrap();
        assert!(moved > 0.0);
        let upper2: f64 = (4..10).map(|k| s.slab_area(k)).sum();
        let lower2: f64 = (0..4).map(|k| s.slab_area(k)).sum();
        assert!(((lower - lower2) - (upper2 - upper)).abs() < 1e-9);
        assert!((s.volume() - v).abs() / v < 1e-12);
        assert!((s.height() - 10.0).abs() < 1e-9);
        // Rebound passthrough: the clamped cell sits at target + eps.
        let a = (0.5 / (2.0 * PI / 400.0)).round() as usize;
        assert!((s.radii[2][a] - 28.3).abs() < 1e-9);
        assert_eq!(s.radii[0][a], 30.0);
    }

    #[test]
    fn full_width_column_grows_upward() {
        let mut s = disk(60.0, 10.0, 0.0);
        let v = s.volume();
        s.apply_command(&cmd(3.0, 0.5, 28.0), 1.0, 3.0, 4.0, None).unwrap();
        assert!(s.height() > 10.0);
        assert!(s.max_radius() <= 30.0);
        assert!((s.volume() - v).abs() / v < 1e-12);
    }

    #[test]
    fn water_fill_respects_room() {
        let out = water_fill(&[1.0, 10.0, 10.0], 9.0);
        assert_eq!(out, vec![1.0, 4.0, 4.0]);
        let out = water_fill(&[1.0, 2.0], 9.0);
        assert_eq!(out, vec![1.0, 2.0]);
    }

    #[test]
    fn top_command_extrudes() {
        let mut s = disk(60.0, 10.0, 0.0);
        let v = s.volume();
        s.apply_command(&cmd(10.0, 0.0, 25.0), 8.0, 10.0, 4.0, None).unwrap();
        assert!(s.height() > 10.0);
        assert!((s.volume() - v).abs() / v < 1e-12);
    }

    #[test]
    fn empty_program_is_identity() {
        let mut s = disk(60.0, 10.0, 0.3);
        let before = s.clone();
        let p = KneadingProgram::empty(Strategy::Envelope, PlannerConfig::default());
        run_program(&mut s, &p).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn grow_hits_area() {
        let mut r: Vec<f64> = (0..400).map(|a| 20.0 + (a as f64 * 0.1).sin()).collect();
        let a0 = grid_area(&r);
        grow(&mut r, 123.4);
        assert!((grid_area(&r) - a0 - 123.4).abs() < 1e-9);
    }
}
