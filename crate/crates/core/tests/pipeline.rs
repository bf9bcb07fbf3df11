use cprrt::conformal::{calibrate, CalibrationModel, PredictionRegions};
use cprrt::dynamics::{ModelKind, ModelParams};
use cprrt::harness::{
    aggregate, build_calibration, eval_coverage, problem_suite, read_runs_csv, run_benchmark,
    run_one, sweep, Distribution, ExperimentConfig, PlannerSpec, PredictorSpec,
};
use cprrt::planner::{plan, PlannerConfig, SamplerConfig};
use cprrt::predictor::{astar_predict, AStarPredictor};

fn small(planners: Vec<PlannerSpec>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk(ModelKind::Holonomic, vec![Distribution::Density(20)], planners);
    cfg.n_worlds = 3;
    cfg.repeats = 2;
    cfg.iterations = 8000;
    cfg.seed = 11;
    cfg
}

fn small_calibration() -> CalibrationModel {
    let build = build_calibration(Distribution::Density(20), ModelKind::Holonomic, 6, 4000, 3, false).unwrap();
    calibrate(&build.records, 0.2, &AStarPredictor, "density-20").unwrap()
}

#[test]
fn benchmark_is_deterministic_and_serial_matches_parallel() {
    let calib = small_calibration();
    let planners = vec![
        PlannerSpec::Uniform,
        PlannerSpec::GoalBiased,
        PlannerSpec::Cp { alpha: 0.2, p_bias: 0.5 },
    ];
    let a = run_benchmark(&small(planners.clone()), Some(&calib)).unwrap();
    let mut serial = small(planners);
    serial.serial = true;
    let b = run_benchmark(&serial, Some(&calib)).unwrap();
    assert_eq!(a.rows.len(), 3 * 2 * 3);
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!((&x.planner, &x.problem_id, x.seed), (&y.planner, &y.problem_id, y.seed));
        assert_eq!(x.iters_to_first, y.iters_to_first);
        assert_eq!(x.first_cost, y.first_cost);
        assert_eq!(x.nodes, y.nodes);
    }
}

#[test]
fn planners_share_run_seeds() {
    let report = run_benchmark(&small(vec![PlannerSpec::Uniform, PlannerSpec::GoalBiased]), None).unwrap();
    for pair in report.rows.chunks(2) {
        assert_eq!(pair[0].problem_id, pair[1].problem_id);
        assert_eq!(pair[0].seed, pair[1].seed);
        assert_ne!(pair[0].planner, pair[1].planner);
    }
}

#[test]
fn aggregate_recomputes_from_written_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(vec![PlannerSpec::Uniform, PlannerSpec::GoalBiased]);
    cfg.out_dir = Some(dir.path().to_path_buf());
    let report = run_benchmark(&cfg, None).unwrap();
    let rows = read_runs_csv(&dir.path().join("runs.csv")).unwrap();
    assert_eq!(rows, report.rows);
    assert_eq!(aggregate(&rows), report.aggregates);

    let text = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let medians: Vec<f64> = rd
        .records()
        .map(|r| r.unwrap()[5].parse().unwrap())
        .collect();
    for (m, a) in medians.iter().zip(&report.aggregates) {
        assert_eq!(Some(*m), a.median_time_s);
    }
}

#[test]
fn one_cell_sweep_matches_benchmark_iterations() {
    let calib = small_calibration();
    let cp = PlannerSpec::Cp { alpha: 0.2, p_bias: 0.5 };
    let bench = run_benchmark(&small(vec![PlannerSpec::Uniform, cp]), Some(&calib)).unwrap();
    let sw = sweep(&small(vec![]), &calib, &[0.2], &[0.5]).unwrap();
    assert_eq!(sw.cells.len(), 1);
    let iters = |rows: &[cprrt::harness::RunResult]| -> Vec<_> {
        rows.iter().map(|r| (r.planner.clone(), r.iters_to_first, r.nodes)).collect()
    };
    assert_eq!(iters(&bench.rows), iters(&sw.benchmark.rows));
}

#[test]
fn zero_bias_cp_run_matches_uniform_run() {
    let suite = problem_suite(Distribution::Density(30), 2, 4).unwrap();
    let params = ModelParams::new(ModelKind::Holonomic);
    for p in &suite {
        let u = run_one(&p.id, &p.problem, &PlannerSpec::Uniform, &params, None, &PredictorSpec::Astar, 20_000, 8, None)
            .unwrap();
        let cp = PlannerSpec::Cp { alpha: 0.1, p_bias: 0.0 };
        let c = run_one(&p.id, &p.problem, &cp, &params, Some(7.5), &PredictorSpec::Astar, 20_000, 8, None).unwrap();
        assert_eq!(u.iters_to_first, c.iters_to_first);
        assert_eq!(u.first_cost, c.first_cost);
        assert_eq!(c.fallbacks, 0);
    }
}

#[test]
fn infinite_quantile_covers_everything() {
    let model = CalibrationModel::from_scores(vec![1.0, 2.0], 0.1, "astar", "density-10").unwrap();
    assert!(model.q_hat.is_infinite());
    let report = eval_coverage(
        Distribution::Density(10),
        ModelKind::Holonomic,
        &model,
        &PredictorSpec::Astar,
        5,
        3000,
        1,
        false,
    )
    .unwrap();
    assert_eq!(report.covered, 5);
    assert_eq!(report.coverage, 1.0);
}

#[test]
fn quantile_shrinks_as_alpha_grows() {
    let calib = small_calibration();
    let mut last = f64::INFINITY;
    for alpha in [0.15, 0.2, 0.3, 0.5, 0.8] {
        let q = calib.with_alpha(alpha).unwrap().q_hat;
        assert!(q <= last, "alpha {alpha}: {q} > {last}");
        last = q;
    }
}

#[test]
fn calibration_solutions_are_covered_by_their_own_score() {
    let build = build_calibration(Distribution::Density(10), ModelKind::Dubins, 3, 3000, 5, false).unwrap();
    for r in &build.records {
        let path = astar_predict(&r.problem).unwrap();
        let score = cprrt::conformal::ncs(&path, &r.solution);
        let tight = PredictionRegions::new(path.clone(), score).unwrap();
        assert!(tight.trajectory_in_union(&r.solution));
        let loose = PredictionRegions::new(path, score * 0.99).unwrap();
        assert!(!loose.trajectory_in_union(&r.solution));
    }
}

#[test]
fn cp_tree_grows_inside_the_regions() {
    // with strong bias most samples, hence most new nodes, sit near the path
    let problem = &problem_suite(Distribution::Density(20), 1, 2).unwrap()[0].problem;
    let path = astar_predict(problem).unwrap();
    let regions = PredictionRegions::new(path, 6.0).unwrap();
    let params = ModelParams::new(ModelKind::Holonomic);
    let cfg = PlannerConfig::new(3000, 1);
    let cp = plan(problem, &params, &SamplerConfig::cp(0.9), &cfg, Some(&regions)).unwrap();
    let uni = plan(problem, &params, &SamplerConfig::uniform(), &cfg, None).unwrap();
    let inside = |nodes: &[cprrt::planner::Node]| {
        nodes.iter().filter(|n| regions.in_union(n.state.position())).count() as f64 / nodes.len() as f64
    };
    assert!(inside(cp.tree.nodes()) > inside(uni.tree.nodes()) + 0.3);
}
