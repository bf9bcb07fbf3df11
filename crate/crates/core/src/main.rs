use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cprrt::conformal::{calibrate, read_records, write_records, CalibrationModel, PredictionRegions};
use cprrt::dynamics::{ModelKind, ModelParams};
use cprrt::env::PlanningProblem;
use cprrt::harness::{
    self, build_calibration, eval_coverage, meta_path, problem_suite, run_benchmark, sweep,
    write_meta, Distribution, ExperimentConfig, PlannerSpec, PredictorSpec,
};
use cprrt::planner::{plan, PlannerConfig, SamplerConfig};
use cprrt::predictor::{AStarPredictor, FilePredictor, PathPredictor};

#[derive(Parser)]
#[command(name = "cprrt", version, about = "RRT* with conformal prediction regions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Robot model: holonomic, dubins or car5d.
    #[arg(long, default_value = "holonomic")]
    model: ModelKind,
    /// Iteration budget N.
    #[arg(long, default_value_t = harness::DEFAULT_ITERATIONS)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// astar, or file:<path> (a path file or a directory of <problem_id>.json).
    #[arg(long, default_value = "astar")]
    predictor: String,
    /// Run tasks one at a time for clean timing.
    #[arg(long)]
    serial: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate density worlds as problem JSON files.
    GenWorlds {
        #[arg(long)]
        density: u32,
        #[arg(long, default_value_t = harness::DESK_WORLDS)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate maze worlds as problem JSON files.
    GenMaze {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve calibration problems and write them as JSON lines.
    BuildCalib {
        #[arg(long, default_value_t = 10)]
        density: u32,
        #[arg(long, default_value_t = 50)]
        n_cal: usize,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the conformal quantile from a calibration dataset.
    Calibrate {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value = "astar")]
        predictor: String,
        /// Distribution tag recorded in the model.
        #[arg(long)]
        distribution: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan on a single problem.
    Plan {
        /// Problem JSON; otherwise a density world from --density/--seed.
        #[arg(long)]
        problem: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        density: u32,
        /// uniform, goal_biased or cp.
        #[arg(long, default_value = "uniform")]
        planner: String,
        #[arg(long)]
        calib: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 0.5)]
        p_bias: f64,
        #[arg(long)]
        stop_at_first: bool,
        #[command(flatten)]
        common: Common,
        /// Write the tree (nodes with parent ids) as JSON.
        #[arg(long)]
        dump_tree: Option<PathBuf>,
        /// Write the best trajectory as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Comparative benchmark in stop-at-first mode.
    Bench {
        #[command(flatten)]
        suite: SuiteArgs,
        /// Planners: uniform, goal_biased, cp (uses --alpha/--p-bias) or cp:<alpha>:<p_bias>.
        #[arg(long, value_delimiter = ',', default_value = "uniform,goal_biased,cp")]
        planners: Vec<String>,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 0.5)]
        p_bias: f64,
    },
    /// Benchmark over an alpha x p_bias grid.
    Sweep {
        #[command(flatten)]
        suite: SuiteArgs,
        #[arg(long, value_delimiter = ',', default_value = "0.02,0.1,0.2,0.3,0.4")]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
        p_biases: Vec<f64>,
    },
    /// Empirical coverage of a calibration model on fresh problems.
    Coverage {
        #[arg(long, default_value_t = 10)]
        density: u32,
        #[arg(long)]
        calib: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 200)]
        n_test: usize,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct SuiteArgs {
    /// Densities (percent); ignored with --maze.
    #[arg(long, value_delimiter = ',', default_value = "30")]
    density: Vec<u32>,
    /// Use maze worlds instead of density worlds.
    #[arg(long)]
    maze: bool,
    #[arg(long)]
    worlds: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Full-scale protocol: 50 worlds x 30 repeats.
    #[arg(long)]
    full_scale: bool,
    /// Calibration model JSON (required for cp planners).
    #[arg(long)]
    calib: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: PathBuf,
}

impl SuiteArgs {
    fn config(&self, planners: Vec<PlannerSpec>) -> Result<ExperimentConfig> {
        let dists = if self.maze {
            vec![Distribution::Maze]
        } else {
            self.density.iter().map(|d| Distribution::Density(*d)).collect()
        };
        let mut cfg = ExperimentConfig::desk(self.common.model, dists, planners);
        if self.full_scale {
            cfg = cfg.full_scale();
        }
        if let Some(w) = self.worlds {
            cfg.n_worlds = w;
        }
        if let Some(r) = self.repeats {
            cfg.repeats = r;
        }
        cfg.iterations = self.common.iters;
        cfg.seed = self.common.seed;
        cfg.predictor = self.common.predictor.parse()?;
        cfg.serial = self.common.serial;
        cfg.out_dir = Some(self.out.clone());
        Ok(cfg)
    }

    fn calib(&self) -> Result<Option<CalibrationModel>> {
        self.calib
            .as_deref()
            .map(|p| CalibrationModel::load(p).with_context(|| format!("reading {}", p.display())))
            .transpose()
    }
}

fn predictor_handle(spec: &str) -> Result<Box<dyn PathPredictor>> {
    Ok(match spec.parse::<PredictorSpec>()? {
        PredictorSpec::Astar => Box::new(AStarPredictor),
        PredictorSpec::File(p) => Box::new(FilePredictor::new(p)),
    })
}

fn write_problems(out: &Path, problems: &[harness::SuiteProblem]) -> Result<()> {
    std::fs::create_dir_all(out)?;
    for p in problems {
        p.problem.save(&out.join(format!("{}.json", p.id)))?;
    }
    println!("wrote {} problems to {}", problems.len(), out.display());
    Ok(())
}

fn print_aggregates(aggs: &[harness::Aggregate]) {
    println!(
        "{:<22} {:>5} {:>8} {:>12} {:>12} {:>10} {:>9}",
        "planner", "runs", "success", "median_t_s", "mean_t_s", "mean_cost", "improv_%"
    );
    let f = |v: Option<f64>| v.map(harness::fmt_sig9).unwrap_or_else(|| "-".into());
    for a in aggs {
        println!(
            "{:<22} {:>5} {:>8.3} {:>12} {:>12} {:>10} {:>9}",
            a.planner,
            a.runs,
            a.success_rate,
            f(a.median_time_s),
            f(a.mean_time_s),
            f(a.mean_first_cost),
            f(a.improvement_mean_pct)
        );
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::GenWorlds {
            density,
            count,
            seed,
            out,
        } => write_problems(&out, &problem_suite(Distribution::Density(density), count, seed)?)?,
        Command::GenMaze { count, seed, out } => {
            write_problems(&out, &problem_suite(Distribution::Maze, count, seed)?)?
        }
        Command::BuildCalib {
            density,
            n_cal,
            common,
            out,
        } => {
            let build = build_calibration(
                Distribution::Density(density),
                common.model,
                n_cal,
                common.iters,
                common.seed,
                common.serial,
            )?;
            write_records(&out, &build.records)?;
            write_meta(&meta_path(&out), &build)?;
            println!(
                "wrote {} records to {} ({} resamples)",
                build.records.len(),
                out.display(),
                build.resamples
            );
        }
        Command::Calibrate {
            records,
            alpha,
            predictor,
            distribution,
            out,
        } => {
            let recs = read_records(&records)?;
            let tag = distribution.unwrap_or_else(|| {
                recs.first()
                    .and_then(|r| r.problem.world.density_label())
                    .map(|d| Distribution::Density(d).tag())
                    .unwrap_or_else(|| "unknown".into())
            });
            let model = calibrate(&recs, alpha, predictor_handle(&predictor)?.as_ref(), &tag)?;
            model.save(&out)?;
            println!(
                "q_hat = {} (alpha {}, n_cal {})",
                harness::fmt_sig9(model.q_hat),
                model.alpha,
                model.n_cal
            );
        }
        Command::Plan {
            problem,
            density,
            planner,
            calib,
            alpha,
            p_bias,
            stop_at_first,
            common,
            dump_tree,
            out,
        } => {
            let (problem, id) = match &problem {
                Some(p) => (
                    PlanningProblem::load(p)?,
                    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                ),
                None => {
                    let d = Distribution::Density(density);
                    (d.generate(common.seed)?, format!("{}-seed{}", d.tag(), common.seed))
                }
            };
            let params = ModelParams::new(common.model);
            let mut cfg = PlannerConfig::new(common.iters, common.seed);
            cfg.stop_at_first = stop_at_first;
            let (sampler, regions) = match planner.as_str() {
                "uniform" => (SamplerConfig::uniform(), None),
                "goal_biased" => (SamplerConfig::goal_biased(), None),
                "cp" => {
                    let Some(c) = calib else {
                        bail!("--planner cp needs --calib");
                    };
                    let model = CalibrationModel::load(&c)?.with_alpha(alpha)?;
                    let spec: PredictorSpec = common.predictor.parse()?;
                    let path = spec.predict(&problem, &id)?;
                    (SamplerConfig::cp(p_bias), Some(PredictionRegions::new(path, model.q_hat)?))
                }
                other => bail!("unknown planner {other:?}"),
            };
            let r = plan(&problem, &params, &sampler, &cfg, regions.as_ref())?;
            println!("{}", serde_json::to_string_pretty(&r.stats)?);
            match &r.best {
                Some(b) => println!("best cost {}", harness::fmt_sig9(b.cost())),
                None => println!("no solution"),
            }
            if let Some(p) = dump_tree {
                std::fs::write(&p, r.tree.to_json()?)?;
            }
            if let (Some(p), Some(b)) = (out, &r.best) {
                std::fs::write(&p, b.to_json()?)?;
            }
        }
        Command::Bench {
            suite,
            planners,
            alpha,
            p_bias,
        } => {
            let specs = planners
                .iter()
                .map(|p| match p.as_str() {
                    "cp" => Ok(PlannerSpec::Cp { alpha, p_bias }),
                    s => s.parse::<PlannerSpec>(),
                })
                .collect::<cprrt::Result<Vec<_>>>()?;
            let cfg = suite.config(specs)?;
            let report = run_benchmark(&cfg, suite.calib()?.as_ref())?;
            print_aggregates(&report.aggregates);
        }
        Command::Sweep {
            suite,
            alphas,
            p_biases,
        } => {
            let cfg = suite.config(vec![PlannerSpec::Uniform])?;
            let Some(calib) = suite.calib()? else {
                bail!("sweep needs --calib");
            };
            let report = sweep(&cfg, &calib, &alphas, &p_biases)?;
            print_aggregates(&report.benchmark.aggregates);
        }
        Command::Coverage {
            density,
            calib,
            alpha,
            n_test,
            common,
            out,
        } => {
            let mut model = CalibrationModel::load(&calib)?;
            if let Some(a) = alpha {
                model = model.with_alpha(a)?;
            }
            let report = eval_coverage(
                Distribution::Density(density),
                common.model,
                &model,
                &common.predictor.parse()?,
                n_test,
                common.iters,
                common.seed,
                common.serial,
            )?;
            println!(
                "coverage {} ({} / {}), q_hat {}",
                harness::fmt_sig9(report.coverage),
                report.covered,
                report.n_test,
                harness::fmt_sig9(report.q_hat)
            );
            if let Some(p) = out {
                std::fs::write(&p, serde_json::to_string_pretty(&report)?)?;
                write_meta(&meta_path(&p), &(density, n_test, common.iters, common.seed))?;
            }
        }
    }
    Ok(())
}
