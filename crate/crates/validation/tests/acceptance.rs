//! Acceptance criteria 1-10. Runs without the libtest harness so every
//! criterion prints one PASS/FAIL line; the process fails if any does.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use kneadforge_core::classifier::{classify, signature, ClassifierTolerances, Label};
use kneadforge_core::contour::{polar_area, LayeredContourCloud, PolarSample};
use kneadforge_core::ideal::{disc_footprint, ideal_cloud, EndEffectorSpec};
use kneadforge_core::mesh_io::PointCloud;
use kneadforge_core::metrics::{hausdorff, ring_mesh_area};
use kneadforge_core::pipeline::{resolve_strategy, PipelineConfig};
use kneadforge_core::planner::{
    command_heights, knead_count, knead_step, plan, plan_pass, source_layer, FeedCycle, PlannerConfig, Strategy,
};
use kneadforge_core::registration::{
    compensate, default_thresholds, icp, sweep, CompensationMode, IcpParams, RegistrationCurve, RigidTransform,
};
use kneadforge_core::shapes::{gen_shape, Geometry, ShapeSpec};
use kneadforge_core::sim::{simulate, BilletState, SimConfig, SimOutcome};
use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: [f64; 3] = [0.1, 0.3, 0.5];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn target(g: Geometry) -> LayeredContourCloud {
    gen_shape(&g.target(), 1.0, 400).unwrap()
}

fn strategy(g: Geometry, cfg: &PipelineConfig) -> Strategy {
    let t = target(g);
    resolve_strategy(cfg.strategy, &classify(&signature(&t).unwrap(), &cfg.classifier))
}

/// Simulator runs keyed by geometry and rebound, shared by criteria 7-9.
#[derive(Default)]
struct Sims(BTreeMap<(Geometry, u64), SimOutcome>);

impl Sims {
    fn get(&mut self, g: Geometry, eps: f64) -> &SimOutcome {
        self.0.entry((g, eps.to_bits())).or_insert_with(|| {
            let cfg = PipelineConfig::preset(g);
            let sim = SimConfig {
                rebound_eps: eps,
                ..cfg.sim
            };
            let state = BilletState::init(&cfg.billet, sim.angles, sim.layer_step, eps).unwrap();
            simulate(&target(g), state, &cfg.planner, strategy(g, &cfg), &sim).unwrap()
        })
    }
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let tol = ClassifierTolerances::default();
    let mut labels = Vec::new();
    let mut pass = true;
    for g in Geometry::ALL {
        let label = classify(&signature(&target(g)).unwrap(), &tol).label;
        let expected = match g {
            Geometry::A | Geometry::B | Geometry::D => Label::Enveloping,
            Geometry::C | Geometry::E => Label::NonEnveloping,
        };
        pass &= label == expected;
        labels.push(format!("{g:?}={label:?}"));
    }
    let t = start.elapsed();
    pass &= t < Duration::from_secs(10);
    verdict(pass, format!("{} in {:.2?}", labels.join(" "), t))
}

/// Ideal-cloud sweeps, reused by criterion 6's monotonicity check.
fn ideal_curves() -> Vec<(Geometry, RegistrationCurve, Duration)> {
    let thresholds: Vec<f64> = default_thresholds().into_iter().filter(|t| *t <= 3.0 + 1e-9).collect();
    Geometry::ALL
        .iter()
        .map(|&g| {
            let start = Instant::now();
            let cfg = PipelineConfig::preset(g);
            let t = target(g);
            let program = plan(&t, &cfg.planner, strategy(g, &cfg)).unwrap();
            let cloud = ideal_cloud(&program, &cfg.effector).unwrap();
            let curve = sweep(&cloud, &t.to_point_cloud(), &thresholds, &cfg.sweep.icp, false).unwrap();
            (g, curve, start.elapsed())
        })
        .collect()
}

fn criterion_2(curves: &[(Geometry, RegistrationCurve, Duration)]) -> Verdict {
    let reference = [(2.3, 0.895), (1.0, 0.316), (1.1, 0.404), (1.1, 0.407), (1.2, 0.448)];
    let mut pass = true;
    let mut rows = Vec::new();
    for ((g, curve, t), (p_th, p_rmse)) in curves.iter().zip(reference) {
        let full = curve.samples.iter().find(|s| s.fitness == 1.0);
        let ok = match full {
            Some(s) => (s.rmse - p_rmse).abs() <= 0.3 * p_rmse && (s.threshold - p_th).abs() <= 0.7 + 1e-9,
            None => false,
        } && *t < Duration::from_secs(300);
        pass &= ok;
        rows.push(match full {
            Some(s) => format!(
                "{g:?} th {:.1}/{p_th} rmse {:.3}/{p_rmse} ({:.1?})",
                s.threshold, s.rmse, t
            ),
            None => format!("{g:?} never full/{p_th} ({:.1?})", t),
        });
    }
    verdict(pass, format!("measured/reference: {}", rows.join(", ")))
}

fn cylinder_area(m: usize) -> f64 {
    let c = gen_shape(
        &ShapeSpec::Cylinder {
            diameter: 60.0,
            height: 40.0,
        },
        1.0,
        m,
    )
    .unwrap();
    ring_mesh_area(&c).unwrap()
}

fn criterion_3() -> Verdict {
    let exact = 2.0 * PI * 30.0 * 40.0;
    let a400 = cylinder_area(400);
    let rel = (a400 - exact).abs() / exact;
    let errs: Vec<f64> = [50, 100, 200, 400].iter().map(|&m| (cylinder_area(m) - exact).abs()).collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let worst = orders.iter().copied().fold(f64::INFINITY, f64::min);
    verdict(
        rel <= 5e-4 && worst >= 1.9,
        format!(
            "M=400 area {a400:.2} mm^2 (rel err {rel:.1e}), orders {:?}",
            orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn criterion_4() -> Verdict {
    let n = 400;
    let samples: Vec<PolarSample> = (0..n)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / n as f64;
            PolarSample {
                r: 1.0,
                theta: t.sin().atan2(t.cos()),
            }
        })
        .collect();
    let a = polar_area(&samples);
    let exact = 0.5 * n as f64 * (2.0 * PI / n as f64).sin();
    let rel_pi = (a - PI).abs() / PI;
    verdict(
        (a - exact).abs() <= 1e-12 && rel_pi <= 1.3e-4,
        format!("area {a:.15} vs {exact:.15}, rel to pi {rel_pi:.2e}"),
    )
}

fn criterion_5() -> Verdict {
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for g in Geometry::ALL {
        let t = target(g);
        for strategy in [Strategy::Envelope, Strategy::Gradient] {
            let cfg = PlannerConfig {
                radial_compensation: 1.5,
                mold_scale: 1.5,
                ..PlannerConfig::default()
            };
            let p = plan_pass(&t, &cfg, strategy, FeedCycle::roughing(4.0, 1.5)).unwrap();
            let dr = cfg.radial_compensation;
            // Independent volumes straight from the samples.
            let (vo, vs) = match strategy {
                Strategy::Envelope => t.layers.iter().fold((0.0, 0.0), |(a, b), l| {
                    let d = l.samples.iter().map(|s| s.r).fold(0.0, f64::max);
                    (a + PI * d * d * cfg.layer_step, b + PI * (d + dr).powi(2) * cfg.layer_step)
                }),
                Strategy::Gradient => t.layers.iter().fold((0.0, 0.0), |(a, b), l| {
                    let n = l.samples.len();
                    let (mut s0, mut s1) = (0.0, 0.0);
                    for i in 0..n {
                        let (p, q) = (l.samples[i], l.samples[(i + 1) % n]);
                        let sin = (q.theta - p.theta).sin();
                        s0 += p.r * q.r * sin;
                        s1 += (p.r + dr) * (q.r + dr) * sin;
                    }
                    (a + 0.5 * s0, b + 0.5 * s1)
                }),
            };
            let rel = (p.alpha[0] * vs - vo).abs() / vo;
            worst = worst.max(rel);
            pass &= rel <= 1e-9;
        }
        // No compensation: alpha is one and every command height maps to its own layer.
        let p = plan_pass(
            &t,
            &PlannerConfig {
                radial_compensation: 0.0,
                ..PlannerConfig::default()
            },
            Strategy::Envelope,
            FeedCycle::roughing(4.0, 0.0),
        )
        .unwrap();
        pass &= p.alpha[0] == 1.0;
        for &h in &command_heights(&t, 1.0, 4.0, 1.0) {
            let k = source_layer(&t, 1.0, h);
            pass &= (t.layers[k].z - h).abs() < 1e-9;
        }
    }
    let c = 2.0 * PI * 30.0;
    let (k, kf) = (knead_count(c, 4.0, false), knead_count(c, 4.0, true));
    let (s, sf) = (knead_step(400, k), knead_step(400, kf));
    pass &= (k, s, kf, sf) == (48, 8, 95, 4);
    verdict(
        pass,
        format!("alpha*V_scaled rel err <= {worst:.1e}, identity heights, K_h={k} s_h={s}, finishing K_h={kf} s_h={sf}"),
    )
}

fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let v = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    (0.5 * v.norm()).atan2(0.5 * (r.trace() - 1.0))
}

fn criterion_6(curves: &[(Geometry, RegistrationCurve, Duration)]) -> Verdict {
    let params = IcpParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let base: Vec<Point3<f64>> = (0..600)
        .map(|_| {
            Point3::new(
                rng.random_range(-50.0..50.0),
                rng.random_range(-25.0..25.0),
                rng.random_range(-10.0..10.0),
            )
        })
        .collect();
    let cloud = PointCloud::new(base.clone());
    let id = icp(&cloud, &cloud, 1.0, &params).unwrap();
    let mut pass = id.fitness == 1.0 && id.rmse == 0.0;

    let (mut worst_t, mut worst_r): (f64, f64) = (0.0, 0.0);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), rng.random_range(-0.1..0.1));
        let shift = Vector3::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        );
        let truth = RigidTransform::from_parts(rot.matrix(), &shift);
        let moved = truth.transform_cloud(&cloud);
        let r = icp(&cloud, &moved, 20.0, &params).unwrap();
        let est = r.transform;
        worst_t = worst_t.max((est.translation() - truth.translation()).norm());
        worst_r = worst_r.max(rotation_angle(&(est.rotation() * truth.rotation().transpose())));
    }
    pass &= worst_t < 1e-5 && worst_r < 1e-6;

    let mut monotone = true;
    for (_, curve, _) in curves {
        monotone &= curve.samples.windows(2).all(|w| w[1].fitness >= w[0].fitness);
    }
    pass &= monotone && curves.len() == 5;
    verdict(
        pass,
        format!(
            "identity fitness {} rmse {:e}; 100 rigid transforms: max dt {worst_t:.1e} mm, max dR {worst_r:.1e} rad; fitness monotone on 5 pairs: {monotone}",
            id.fitness, id.rmse
        ),
    )
}

fn first_full(c: &RegistrationCurve) -> Option<f64> {
    c.full_fitness_threshold
}

fn criterion_7(sims: &mut Sims) -> Verdict {
    let mut pass = true;
    let mut rows = Vec::new();
    for g in [Geometry::A, Geometry::B] {
        let cfg = PipelineConfig::preset(g);
        let t = target(g).to_point_cloud();
        for eps in EPS {
            let k = sims.get(g, eps).cloud.to_point_cloud();
            let kc = sweep(&k, &t, &cfg.sweep.thresholds, &cfg.sweep.icp, true).unwrap();
            let ok = match kc.compensation_value {
                Some(v) => {
                    let comp = compensate(&k, v, CompensationMode::Offset).unwrap();
                    let cc = sweep(&comp, &t, &cfg.sweep.thresholds, &cfg.sweep.icp, true).unwrap();
                    rows.push(format!(
                        "{g:?}@{eps}: {:?} -> {:?}",
                        first_full(&kc).unwrap(),
                        first_full(&cc)
                    ));
                    matches!(first_full(&cc), Some(th) if th < first_full(&kc).unwrap())
                }
                None => {
                    rows.push(format!("{g:?}@{eps}: K never full"));
                    false
                }
            };
            pass &= ok;
        }
    }
    verdict(pass, format!("first full-fitness threshold K -> compensated: {}", rows.join(", ")))
}

fn criterion_8(sims: &mut Sims) -> Verdict {
    let mut pass = true;
    let mut worst_cmd: f64 = 0.0;
    let mut worst_prog: f64 = 0.0;
    let mut rows = Vec::new();
    for g in Geometry::ALL {
        for eps in [0.0, 0.1, 0.3, 0.5] {
            let out = sims.get(g, eps);
            worst_cmd = worst_cmd.max(out.max_command_drift);
            worst_prog = worst_prog.max(out.program_drift());
        }
        let t = target(g);
        let out = sims.get(g, 0.0);
        let h = hausdorff(&out.cloud.to_point_cloud(), &t.to_point_cloud()).unwrap();
        let sim = PipelineConfig::preset(g).sim;
        let arc = 2.0 * PI * t.max_radius() / sim.angles as f64;
        let bound = (sim.layer_step.powi(2) + arc * arc).sqrt() + out.program.config.effector_diameter / 2.0;
        pass &= h <= bound;
        rows.push(format!("{g:?} {h:.2}/{bound:.2}"));
    }
    pass &= worst_cmd <= 1e-6 && worst_prog <= 1e-6;
    verdict(
        pass,
        format!(
            "drift per command {worst_cmd:.1e}, per program {worst_prog:.1e}; eps=0 Hausdorff/bound: {}",
            rows.join(" ")
        ),
    )
}

fn criterion_9(sims: &mut Sims) -> Verdict {
    let mut pass = true;
    let mut rows = Vec::new();
    for eps in EPS {
        let mut gaps = Vec::new();
        for g in Geometry::ALL {
            let ideal = ring_mesh_area(&target(g)).unwrap();
            let end = sims.get(g, eps).area_series.last().unwrap().area;
            let gap = (end - ideal) / ideal;
            if g != Geometry::B {
                pass &= end > ideal;
            }
            gaps.push((g, gap));
        }
        let closest = gaps.iter().min_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap().0;
        pass &= closest == Geometry::B;
        rows.push(format!(
            "eps {eps}: {}",
            gaps.iter().map(|(g, x)| format!("{g:?} {x:+.3}")).collect::<Vec<_>>().join(" ")
        ));
    }
    verdict(pass, format!("terminal area gap vs ideal: {}", rows.join("; ")))
}

fn criterion_10() -> Verdict {
    let spec = EndEffectorSpec {
        diameter: 4.0,
        footprint_points: 40,
        min_ring_points: 8,
    };
    // Six rings at radius k/3, spacing 2/sqrt(40): floor(2 pi (k/3) sqrt(40) / 2)
    // points each, the first raised to 8. 1 + 8 + 13 + 19 + 26 + 33 + 39.
    let expected = 139;
    let center = Point3::new(30.0, 0.0, 10.0);
    let axis = Vector3::new(-1.0, 0.0, 0.0);
    let a = disc_footprint(center, axis, &spec).unwrap();
    let b = disc_footprint(center, axis, &spec).unwrap();
    let outer = spec.ring_radius(spec.ring_count());
    let spread = a.iter().map(|p| (p - center).norm()).fold(0.0, f64::max);
    let planar = a.iter().map(|p| (p - center).dot(&axis).abs()).fold(0.0, f64::max);
    let tilted = Vector3::new(-1.0, -2.0, 0.0).normalize();
    let c = disc_footprint(center, tilted, &spec).unwrap();
    let planar_tilted = c.iter().map(|p| (p - center).dot(&tilted).abs()).fold(0.0, f64::max);
    let pass = a.len() == expected
        && a == b
        && outer == 2.0
        && (spread - outer).abs() <= 1e-12
        && planar <= 1e-12
        && planar_tilted <= 1e-12
        && c.len() == expected;
    verdict(
        pass,
        format!(
            "{} points (oracle {expected}), outer ring {outer} (farthest point {spread}), off-plane {:.1e}",
            a.len(),
            planar.max(planar_tilted)
        ),
    )
}

fn main() {
    let mut sims = Sims::default();
    let report = |n: usize, v: Verdict| {
        println!("criterion {n:>2}: {} {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        v.pass
    };
    let mut all = true;
    all &= report(1, criterion_1());
    let curves = ideal_curves();
    all &= report(2, criterion_2(&curves));
    all &= report(3, criterion_3());
    all &= report(4, criterion_4());
    all &= report(5, criterion_5());
    all &= report(6, criterion_6(&curves));
    all &= report(7, criterion_7(&mut sims));
    all &= report(8, criterion_8(&mut sims));
    all &= report(9, criterion_9(&mut sims));
    all &= report(10, criterion_10());
    if !all {
        std::process::exit(1);
    }
}
