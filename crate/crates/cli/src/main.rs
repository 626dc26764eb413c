use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use kneadforge_core::classifier::{classify, signature};
use kneadforge_core::pipeline::{self as pl, MetricsInputs, PipelineConfig, ShapeSource, StrategyChoice};
use kneadforge_core::planner::Strategy;
use kneadforge_core::shapes::{Geometry, ShapeSpec};

/// Volume-preserving kneading toolchain.
#[derive(Parser, Debug)]
#[command(name = "kneadforge", version, about)]
struct Cli {
    /// Random seed. Nothing in the pipeline samples randomly yet, so this is
    /// accepted and ignored.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct ConfigArgs {
    /// Pipeline configuration file (JSON). Flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset geometry A-E: target shape and billet.
    #[arg(long)]
    geometry: Option<Geometry>,
    /// Target shape: a shape JSON file or an STL model.
    #[arg(long)]
    shape: Option<PathBuf>,
    /// Billet shape JSON file.
    #[arg(long)]
    billet: Option<PathBuf>,
    /// envelope, gradient or auto.
    #[arg(long)]
    strategy: Option<StrategyChoice>,
    #[arg(long)]
    rebound_eps: Option<f64>,
    #[arg(long)]
    layer_step: Option<f64>,
    /// Samples per contour.
    #[arg(long)]
    points: Option<usize>,
    /// Output directory; defaults to the config's, then $KNEADFORGE_OUT, then `out`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Contours (and STL) of the configured parametric shape.
    GenShape {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        stl: Option<PathBuf>,
    },
    /// Slice an STL model into layered contours.
    Slice {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Enveloping / non-enveloping label of a contour cloud.
    Classify {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        contours: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Kneading program for a contour cloud.
    Plan {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        contours: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ideal machining cloud of a program.
    IdealPcl {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        program: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulated kneading of the billet into the target.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        contours: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Threshold sweep of a cloud onto the target.
    Register {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: Option<PathBuf>,
        /// Curve CSV; the JSON goes next to it.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the compensated cloud here and register it.
        #[arg(long)]
        compensate: Option<PathBuf>,
    },
    /// Report JSON and plots.
    Metrics {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        kneaded: Option<PathBuf>,
        #[arg(long)]
        compensated: Option<PathBuf>,
        #[arg(long)]
        simulation: Option<PathBuf>,
        /// Curve JSON to plot, as `name=path`. Repeatable.
        #[arg(long = "curve")]
        curves: Vec<String>,
        #[arg(long)]
        mass_in: Option<f64>,
        #[arg(long)]
        mass_out: Option<f64>,
    },
    /// Every stage in order.
    Pipeline {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

struct Ctx {
    cfg: PipelineConfig,
    out: PathBuf,
}

impl Ctx {
    fn path(&self, given: &Option<PathBuf>, default: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.out.join(default))
    }
}

fn load_config(a: &ConfigArgs) -> Result<Ctx> {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("config {}", p.display()))?,
        None => PipelineConfig::preset(a.geometry.unwrap_or(Geometry::B)),
    };
    if let (Some(g), Some(_)) = (a.geometry, &a.config) {
        let preset = PipelineConfig::preset(g);
        cfg.shape = preset.shape;
        cfg.billet = preset.billet;
    }
    if let Some(p) = &a.shape {
        let is_stl = p.extension().is_some_and(|e| e.eq_ignore_ascii_case("stl"));
        cfg.shape = if is_stl {
            ShapeSource::Stl { stl: p.clone() }
        } else {
            ShapeSource::Spec(read_spec(p)?)
        };
    }
    if let Some(p) = &a.billet {
        cfg.billet = read_spec(p)?;
    }
    if let Some(s) = a.strategy {
        cfg.strategy = s;
    }
    if let Some(e) = a.rebound_eps {
        cfg.sim.rebound_eps = e;
    }
    if let Some(dz) = a.layer_step {
        cfg.layer_step = dz;
        cfg.planner.layer_step = dz;
        cfg.sim.layer_step = dz;
    }
    if let Some(n) = a.points {
        cfg.points_per_layer = n;
        cfg.sim.export_points = n;
    }
    cfg.validate()?;
    let out = a
        .out_dir
        .clone()
        .or_else(|| cfg.output.clone())
        .or_else(|| std::env::var_os("KNEADFORGE_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(Ctx { cfg, out })
}

fn read_spec(p: &Path) -> Result<ShapeSpec> {
    let spec: ShapeSpec = pl::read_json(p).with_context(|| format!("shape {}", p.display()))?;
    spec.validate()?;
    Ok(spec)
}

/// Strategy for the contours at `path`, classifying when set to auto.
fn strategy_for(ctx: &Ctx, contours: &Path) -> Result<Strategy> {
    let c = classify(&signature(&pl::read_contours(contours)?)?, &ctx.cfg.classifier);
    Ok(pl::resolve_strategy(ctx.cfg.strategy, &c))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(seed) = cli.seed {
        log::debug!("seed {seed} has no effect: no stage samples randomly");
    }
    match cli.command {
        Command::GenShape { cfg, out, stl } => {
            let ctx = load_config(&cfg)?;
            let ShapeSource::Spec(spec) = &ctx.cfg.shape else {
                bail!("gen-shape needs a parametric shape, not an STL; use `slice`");
            };
            let out = ctx.path(&out, pl::TARGET_CONTOURS);
            let stl = ctx.path(&stl, pl::TARGET_STL);
            let c = pl::stage_gen_shape(spec, ctx.cfg.layer_step, ctx.cfg.points_per_layer, &out, Some(&stl))
                .context("gen-shape")?;
            println!("{} layers -> {}", c.len(), out.display());
        }
        Command::Slice { cfg, input, out } => {
            let ctx = load_config(&cfg)?;
            let out = ctx.path(&out, pl::TARGET_CONTOURS);
            let c = pl::stage_slice(&input, ctx.cfg.layer_step, ctx.cfg.points_per_layer, &out).context("slice")?;
            println!("{} layers -> {}", c.len(), out.display());
        }
        Command::Classify { cfg, contours, out } => {
            let ctx = load_config(&cfg)?;
            let contours = ctx.path(&contours, pl::TARGET_CONTOURS);
            let out = ctx.path(&out, pl::CLASSIFICATION);
            let c = pl::stage_classify(&contours, &ctx.cfg.classifier, &out).context("classify")?;
            println!("{:?}", c.label);
        }
        Command::Plan { cfg, contours, out } => {
            let ctx = load_config(&cfg)?;
            let contours = ctx.path(&contours, pl::TARGET_CONTOURS);
            let out = ctx.path(&out, pl::PROGRAM);
            let strategy = strategy_for(&ctx, &contours).context("plan")?;
            let p = pl::stage_plan(&contours, &ctx.cfg.planner, strategy, &out).context("plan")?;
            println!("{:?}: {} commands -> {}", strategy, p.commands.len(), out.display());
        }
        Command::IdealPcl { cfg, program, out } => {
            let ctx = load_config(&cfg)?;
            let program = ctx.path(&program, pl::PROGRAM);
            let out = ctx.path(&out, pl::IDEAL_CLOUD);
            let c = pl::stage_ideal(&program, &ctx.cfg.effector, &out).context("ideal-pcl")?;
            println!("{} points -> {}", c.len(), out.display());
        }
        Command::Simulate {
            cfg,
            contours,
            out,
            summary,
        } => {
            let ctx = load_config(&cfg)?;
            let contours = ctx.path(&contours, pl::TARGET_CONTOURS);
            let out = ctx.path(&out, pl::KNEADED_CLOUD);
            let summary = ctx.path(&summary, pl::SIMULATION);
            let strategy = strategy_for(&ctx, &contours).context("simulate")?;
            let s = pl::stage_simulate(
                &contours,
                &ctx.cfg.billet,
                &ctx.cfg.planner,
                strategy,
                &ctx.cfg.sim,
                &out,
                &summary,
            )
            .context("simulate")?;
            println!(
                "{} cycles, height {:.3} mm, volume drift {:.2e} -> {}",
                s.cycles.len(),
                s.final_height,
                s.program_drift,
                out.display()
            );
        }
        Command::Register {
            cfg,
            source,
            target,
            out,
            compensate,
        } => {
            let ctx = load_config(&cfg)?;
            let target = ctx.path(&target, pl::TARGET_CONTOURS);
            let out = out.unwrap_or_else(|| curve_path(&ctx.out, &source));
            let sweep = &ctx.cfg.sweep;
            let curve = pl::stage_register(&source, &target, sweep, &out).context("register")?;
            print_curve(&source, &curve);
            if let Some(comp) = compensate {
                let Some(value) = curve.compensation_value else {
                    bail!("register: {} never reached full fitness; nothing to compensate", source.display());
                };
                pl::stage_compensate(&source, value, sweep.compensation, &comp).context("register")?;
                let curve = pl::stage_register(&comp, &target, sweep, &curve_path(&ctx.out, &comp))
                    .context("register")?;
                print_curve(&comp, &curve);
            }
        }
        Command::Metrics {
            cfg,
            target,
            kneaded,
            compensated,
            simulation,
            curves,
            mass_in,
            mass_out,
        } => {
            let ctx = load_config(&cfg)?;
            let existing = |given: Option<PathBuf>, name: &str| {
                given.or_else(|| Some(ctx.out.join(name)).filter(|p| p.exists()))
            };
            let mut named = Vec::new();
            for c in &curves {
                let Some((name, path)) = c.split_once('=') else {
                    bail!("metrics: --curve expects name=path, got `{c}`");
                };
                named.push((name.to_string(), PathBuf::from(path)));
            }
            if curves.is_empty() {
                for (name, file) in [
                    ("ideal", pl::IDEAL_CURVE),
                    ("kneaded", pl::KNEADED_CURVE),
                    ("compensated", pl::COMPENSATED_CURVE),
                ] {
                    let p = ctx.out.join(file).with_extension("json");
                    if p.exists() {
                        named.push((name.to_string(), p));
                    }
                }
            }
            let inputs = MetricsInputs {
                target: ctx.path(&target, pl::TARGET_CONTOURS),
                kneaded: ctx.path(&kneaded, pl::KNEADED_CLOUD),
                compensated: existing(compensated, pl::COMPENSATED_CLOUD),
                simulation: existing(simulation, pl::SIMULATION),
                curves: named,
                mass_in: mass_in.or(ctx.cfg.mass_in),
                mass_out: mass_out.or(ctx.cfg.mass_out),
            };
            let r = pl::stage_metrics(&inputs, &ctx.out).context("metrics")?;
            println!(
                "surface area {:.1} mm^2 (target {:.1}) -> {}",
                r.surface_area.unwrap_or(f64::NAN),
                r.target_area.unwrap_or(f64::NAN),
                ctx.out.join(pl::REPORT).display()
            );
        }
        Command::Pipeline { cfg } => {
            let ctx = load_config(&cfg)?;
            let s = pl::run_pipeline(&ctx.cfg, &ctx.out)?;
            println!("classification: {:?} -> {:?}", s.classification.label, s.strategy);
            print_curve(Path::new("ideal"), &s.ideal);
            print_curve(Path::new("kneaded"), &s.kneaded);
            if let Some(c) = &s.compensated {
                print_curve(Path::new("compensated"), c);
            }
            println!("report -> {}", ctx.out.join(pl::REPORT).display());
        }
    }
    Ok(())
}

/// `<dir>/<stem>_curve.csv` for a source cloud.
fn curve_path(dir: &Path, source: &Path) -> PathBuf {
    let stem = source.file_stem().map_or("source".into(), |s| s.to_string_lossy());
    dir.join(format!("{stem}_curve.csv"))
}

fn print_curve(source: &Path, c: &kneadforge_core::registration::RegistrationCurve) {
    match (c.full_fitness_threshold, c.compensation_value) {
        (Some(t), Some(r)) => println!("{}: fitness 1.0 at threshold {t} mm, rmse {r:.4} mm", source.display()),
        _ => println!("{}: never reached fitness 1.0", source.display()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kneadforge: {e:#}");
            ExitCode::FAILURE
        }
    }
}
