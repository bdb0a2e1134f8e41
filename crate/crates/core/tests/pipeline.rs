mod common;

use std::collections::{BTreeSet, HashSet};
use std::f64::consts::PI;

use common::{chi2_quantile, coupled_cost, random_graph};
use nalgebra::Vector2;
use planar_gnc::bench::{compute_ate, generate_synthetic, inject_outliers, InjectionSpec, Layout, SyntheticSpec};
use planar_gnc::pipeline::{
    decoupled_robust_pgo, evaluate_tls_pgo_cost, PipelineConfig, CHI2_99_1DOF, CHI2_99_2DOF,
};
use planar_gnc::{canonicalize_angle, EdgeKind, PlanarPose, PoseGraph, RelativeMeasurement, TrajectoryEstimate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(rows: usize, cols: usize, sigma: (f64, f64), p: f64, seed: u64) -> (PoseGraph, TrajectoryEstimate) {
    let spec = SyntheticSpec::new(Layout::Grid { rows, cols, step: 1.0 }, sigma.0, sigma.1, p, seed);
    generate_synthetic(&spec).unwrap()
}

fn lc_position(graph: &PoseGraph, edge: usize) -> usize {
    graph.loop_closures().iter().position(|&e| e == edge).unwrap()
}

#[test]
fn threshold_constants_are_chi_square_quantiles() {
    assert!((chi2_quantile(1.0, 0.99) - CHI2_99_1DOF).abs() < 1e-9);
    assert!((chi2_quantile(2.0, 0.99) - CHI2_99_2DOF).abs() < 1e-9);
    let d = PipelineConfig::default();
    assert_eq!((d.c1_squared, d.c2_squared, d.continuation_factor), (CHI2_99_1DOF, CHI2_99_2DOF, 1.4));
}

#[test]
fn noiseless_without_outliers_keeps_everything() {
    let (graph, truth) = grid(8, 8, (0.0, 0.0), 0.3, 5);
    let rep = decoupled_robust_pgo(&graph, &PipelineConfig::default()).unwrap();
    let all: BTreeSet<usize> = graph.loop_closures().iter().copied().collect();
    assert!(!all.is_empty());
    assert_eq!(rep.inlier_set, all);
    assert!(rep.converged());
    let (pos, rot) = compute_ate(&rep.estimate, &truth).unwrap();
    assert!(pos < 1e-8 && rot < 1e-8, "{pos} {rot}");
}

#[test]
fn noiseless_outliers_are_removed_exactly() {
    for seed in 0..5 {
        let (graph, _) = grid(10, 10, (0.0, 0.0), 0.2, seed);
        let (noisy, injected) =
            inject_outliers(&graph, &InjectionSpec { outlier_rate: 0.2, rng_seed: seed + 100 }).unwrap();
        let config = PipelineConfig::default();
        let rep = decoupled_robust_pgo(&noisy, &config).unwrap();
        let clean = noisy.without_edges(&injected.iter().copied().collect::<HashSet<_>>()).unwrap();
        let expected: BTreeSet<usize> = clean.loop_closures().iter().copied().collect();
        assert_eq!(rep.inlier_set, expected, "seed {seed}");
        let reference = decoupled_robust_pgo(&clean, &config).unwrap();
        assert!(rep.estimate.max_difference(&reference.estimate) < 1e-8);
    }
}

#[test]
fn gross_rotation_with_consistent_translation_is_rejected_by_the_angle_stage() {
    let (graph, truth) = grid(6, 6, (0.0, 0.0), 0.3, 2);
    let (i, j) = (0, 20);
    let rel = truth.pose(i).between(truth.pose(j));
    let bad = RelativeMeasurement::new(
        i,
        j,
        rel.theta.radians() + 2.0,
        rel.t,
        graph.edge(graph.loop_closures()[0]).kappa,
        graph.edge(graph.loop_closures()[0]).tau,
        EdgeKind::LoopClosure,
    )
    .unwrap();
    let with_bad = graph.with_added_edges(vec![bad]).unwrap();
    let edge = with_bad.num_edges() - 1;
    let rep = decoupled_robust_pgo(&with_bad, &PipelineConfig::default()).unwrap();
    let pos = lc_position(&with_bad, edge);
    assert_eq!(rep.ara_weights[pos], 0.0);
    assert_eq!(rep.ta_weights[pos], 1.0, "translation is consistent, so only the angle stage can reject it");
    assert!(!rep.inlier_set.contains(&edge));
    assert_eq!(rep.inlier_set.len(), graph.num_loop_closures());
}

#[test]
fn chain_with_one_gross_loop_closure() {
    let n = 10;
    let truth: Vec<PlanarPose> = (0..n)
        .map(|i| PlanarPose::new(0.3 * i as f64, (i as f64).cos() * 2.0, i as f64 * 0.5).unwrap())
        .collect();
    let truth = TrajectoryEstimate::anchored(&truth).unwrap();
    let edge = |i: usize, j: usize, kind| {
        let r = truth.pose(i).between(truth.pose(j));
        RelativeMeasurement::new(i, j, r.theta.radians(), r.t, 100.0, 100.0, kind).unwrap()
    };
    let mut edges: Vec<_> = (0..n - 1).map(|i| edge(i, i + 1, EdgeKind::Odometry)).collect();
    edges.extend([(0, 4), (2, 7), (3, 9)].map(|(i, j)| edge(i, j, EdgeKind::LoopClosure)));
    edges.push(
        RelativeMeasurement::new(1, 8, -1.0, Vector2::new(-7.0, 4.0), 100.0, 100.0, EdgeKind::LoopClosure).unwrap(),
    );
    let graph = PoseGraph::new(n, edges).unwrap();
    let rep = decoupled_robust_pgo(&graph, &PipelineConfig::default()).unwrap();
    assert_eq!(rep.ara_weights, vec![1.0, 1.0, 1.0, 0.0]);
    assert!(rep.converged());
    assert_eq!(rep.inlier_set, BTreeSet::from([n - 1, n, n + 1]));
    assert!(rep.estimate.max_difference(&truth) < 1e-8);
}

#[test]
fn gnc_traces_follow_the_continuation() {
    let (graph, _) = grid(10, 10, (0.01, 0.05), 0.2, 9);
    let (noisy, _) = inject_outliers(&graph, &InjectionSpec { outlier_rate: 0.3, rng_seed: 4 }).unwrap();
    let rep = decoupled_robust_pgo(&noisy, &PipelineConfig::default()).unwrap();
    for trace in [&rep.ara_trace, &rep.ta_trace] {
        assert!(!trace.iterations.is_empty());
        for pair in trace.iterations.windows(2) {
            assert!((pair[1].mu / pair[0].mu - 1.4).abs() < 1e-12);
        }
        for it in &trace.iterations {
            let slack = 1e-9 * it.cost_before.abs().max(1.0);
            assert!(it.cost_after_weights <= it.cost_before + slack, "{it:?}");
            assert!(it.cost <= it.cost_after_weights + slack, "{it:?}");
        }
        let csv = trace.to_csv();
        assert_eq!(csv.lines().count(), trace.iterations.len() + 1);
        assert!(csv.starts_with("iteration,mu,cost,num_inlier_weights\n"));
    }
}

#[test]
fn report_serializes_inliers_flags_and_vertices() {
    let (graph, _) = grid(4, 4, (0.0, 0.0), 0.5, 1);
    let rep = decoupled_robust_pgo(&graph, &PipelineConfig::default()).unwrap();
    let json: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
    assert_eq!(json["inlier_set"].as_array().unwrap().len(), rep.inlier_set.len());
    assert_eq!(json["converged"], true);
    let vertices = json["estimate"].as_array().unwrap();
    assert_eq!(vertices.len(), 16);
    assert!(vertices[0].as_str().unwrap().starts_with("VERTEX_SE2 0 "));
    assert!(json["timings"]["ara"].is_number());
}

#[test]
fn refinement_never_raises_the_coupled_cost() {
    for seed in 0..20 {
        let (graph, _) = grid(7, 7, (0.05, 0.2), 0.3, seed);
        let rep = decoupled_robust_pgo(&graph, &PipelineConfig::default()).unwrap();
        assert!(rep.final_cost <= rep.initial_cost, "seed {seed}");
        let keep = rep.inlier_set.clone();
        let theta: Vec<f64> = rep.estimate.poses().iter().map(|p| p.theta.radians()).collect();
        let direct = coupled_cost(&graph, &keep, &theta, &rep.estimate.positions());
        assert!((direct - rep.final_cost).abs() <= 1e-9 * direct.max(1.0));
    }
}

#[test]
fn truncated_cost_examples() {
    let (graph, truth) = grid(5, 5, (0.0, 0.0), 0.5, 3);
    assert!(evaluate_tls_pgo_cost(&graph, &truth, 1.0) < 1e-8);

    let bad = RelativeMeasurement::new(0, 12, 3.0, Vector2::new(50.0, -40.0), 1.0, 1.0, EdgeKind::LoopClosure).unwrap();
    let with_bad = graph.with_added_edges(vec![bad]).unwrap();
    assert!((evaluate_tls_pgo_cost(&with_bad, &truth, 1.0) - 1.0).abs() < 1e-8);

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let g = random_graph(&mut rng, 12, 15);
    let theta: Vec<f64> = (0..12).map(|i| if i == 0 { 0.0 } else { rng.random_range(-PI..PI) }).collect();
    let t: Vec<Vector2<f64>> = (0..12)
        .map(|i| if i == 0 { Vector2::zeros() } else { Vector2::new(rng.random(), rng.random()) * 4.0 })
        .collect();
    let est = TrajectoryEstimate::from_parts(&theta, &t).unwrap();
    let c = 2.0;
    let expected: f64 = g
        .edges()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let one = coupled_cost(&g, &BTreeSet::from([i]), &theta, &t)
                - coupled_cost(&g, &BTreeSet::new(), &theta, &t);
            if e.is_loop_closure() {
                one.min(c * c)
            } else {
                0.0
            }
        })
        .sum::<f64>()
        + coupled_cost(&g, &BTreeSet::new(), &theta, &t);
    let got = evaluate_tls_pgo_cost(&g, &est, c);
    assert!((got - expected).abs() <= 1e-9 * expected, "{got} vs {expected}");
}

/// Re-measures every edge of `graph` from `poses`, keeping the noise it had
/// relative to `truth`.
fn remeasure(graph: &PoseGraph, truth: &TrajectoryEstimate, poses: &[PlanarPose]) -> PoseGraph {
    let edges = graph
        .edges()
        .iter()
        .map(|e| {
            let clean = truth.pose(e.from).between(truth.pose(e.to));
            let moved = poses[e.from].between(&poses[e.to]);
            let dth = e.dtheta.radians() - clean.theta.radians() + moved.theta.radians();
            let dt = e.dt - clean.t + moved.t;
            RelativeMeasurement::new(e.from, e.to, dth, dt, e.kappa, e.tau, e.kind).unwrap()
        })
        .collect();
    PoseGraph::new(graph.num_vertices(), edges).unwrap()
}

#[test]
fn global_motion_of_the_ground_truth_does_not_change_the_error() {
    let (graph, truth) = grid(8, 8, (0.01, 0.05), 0.3, 11);
    let (graph, _) = inject_outliers(&graph, &InjectionSpec { outlier_rate: 0.2, rng_seed: 2 }).unwrap();
    let base = decoupled_robust_pgo(&graph, &PipelineConfig::default()).unwrap();
    let (pos0, rot0) = compute_ate(&base.estimate, &truth).unwrap();
    let g = PlanarPose::new(1.1, 3.0, -7.5).unwrap();
    let moved: Vec<PlanarPose> = truth.poses().iter().map(|p| g.compose(p)).collect();
    let moved_graph = remeasure(&graph, &truth, &moved);
    let rep = decoupled_robust_pgo(&moved_graph, &PipelineConfig::default()).unwrap();
    let moved_truth = TrajectoryEstimate::anchored(&moved).unwrap();
    let (pos1, rot1) = compute_ate(&rep.estimate, &moved_truth).unwrap();
    assert_eq!(rep.inlier_set, base.inlier_set);
    assert!((pos0 - pos1).abs() < 1e-10 && (rot0 - rot1).abs() < 1e-10, "{pos0} {pos1} {rot0} {rot1}");
}

#[test]
fn separable_fixtures_give_the_exact_inlier_set() {
    let (c1, c2) = (CHI2_99_1DOF.sqrt(), CHI2_99_2DOF.sqrt());
    let mut checked = 0;
    for seed in 0..20 {
        // Noise is a fifth of what the precisions claim, so true loop
        // closures sit far inside the gates.
        let (graph, truth) = grid(10, 10, (0.002, 0.01), 0.2, seed);
        let edges = graph
            .edges()
            .iter()
            .map(|e| {
                RelativeMeasurement::new(e.from, e.to, e.dtheta.radians(), e.dt, e.kappa / 25.0, e.tau / 25.0, e.kind)
                    .unwrap()
            })
            .collect();
        let graph = PoseGraph::new(graph.num_vertices(), edges).unwrap();
        let (noisy, injected) =
            inject_outliers(&graph, &InjectionSpec { outlier_rate: 0.3, rng_seed: seed }).unwrap();
        let residuals = |idx: usize| {
            let e = noisy.edge(idx);
            let r = truth.pose(e.from).between(truth.pose(e.to));
            let ang = canonicalize_angle(r.theta.radians() - e.dtheta.radians()).unwrap().radians().abs();
            (e.kappa.sqrt() * ang, e.tau.sqrt() * (r.t - e.dt).norm())
        };
        let injected_set: HashSet<usize> = injected.iter().copied().collect();
        let separable = noisy.loop_closures().iter().all(|&idx| {
            let (ra, rt) = residuals(idx);
            if injected_set.contains(&idx) {
                ra > 3.0 * c1 || rt > 3.0 * c2
            } else {
                ra < c1 / 3.0 && rt < c2 / 3.0
            }
        });
        if !separable {
            continue;
        }
        checked += 1;
        let rep = decoupled_robust_pgo(&noisy, &PipelineConfig::default()).unwrap();
        let expected: BTreeSet<usize> =
            noisy.loop_closures().iter().copied().filter(|e| !injected_set.contains(e)).collect();
        assert_eq!(rep.inlier_set, expected, "seed {seed}");
    }
    assert!(checked >= 10, "only {checked} separable fixtures");
}

#[test]
fn odometry_is_never_an_outlier() {
    let (g, _) = grid(20, 20, (0.01, 0.05), 0.1, 11);
    let rep = decoupled_robust_pgo(&g, &PipelineConfig::default()).unwrap();
    assert!(rep.inlier_set.iter().all(|&e| g.edge(e).kind == EdgeKind::LoopClosure));
}
