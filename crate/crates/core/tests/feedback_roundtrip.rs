mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ulamot::feedback::{extract_feedback, propagate, rollout, InitialSampler, RolloutOptions, DEFAULT_DEBRIS_LIMIT};
use ulamot::grid::{l1_distance, ControlGrid, Measure, Partition};
use ulamot::lp::{assemble, solve, SolveOptions};
use ulamot::par::Execution;
use ulamot::systems::{DoubleIntegrator, StateBox, Translation};
use ulamot::ulam::{build_cost_table, build_tensor, CostScaling, CostTable, QuadraticCost};

#[test]
fn closed_loop_reproduces_lp_trajectories() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    while checked < 40 {
        let n_x = rng.gen_range(2..7);
        let n_u = rng.gen_range(1..4);
        let n = rng.gen_range(1..5);
        let t = common::random_tensor(&mut rng, n_x, n_u);
        let c = CostTable::from_values(n_x, n_u, (0..n_x * n_u).map(|_| rng.gen_range(0.0..2.0)).collect()).unwrap();
        let mu0 = Measure::new(common::random_measure(&mut rng, n_x)).unwrap();
        let muf = Measure::new(common::random_measure(&mut rng, n_x)).unwrap();
        let problem = assemble(&t, &c, &mu0, &muf, n).unwrap();
        let Ok(sol) = solve(&problem, &SolveOptions::default()) else { continue };
        let law = extract_feedback(&sol, 1e-12);
        assert!(law.max_row_defect() <= 1e-9);
        let traj = propagate(&t, &law, &mu0, &c, DEFAULT_DEBRIS_LIMIT).unwrap();
        assert!(traj.max_mass_defect() <= 1e-12);
        for step in 0..=n {
            assert!(l1_distance(&traj.measures[step], sol.measure(step)) <= 1e-9);
        }
        assert!(l1_distance(&traj.measures[n], muf.weights()) <= 1e-6);
        assert!((traj.total_cost - sol.objective()).abs() <= 1e-8 * (1.0 + sol.objective().abs()));
        checked += 1;
    }
}

#[test]
fn splitting_law_is_half_and_half() {
    let p = Partition::new(&[-1.5], &[1.5], &[3]).unwrap();
    let u = ControlGrid::regular(&[-1.0], &[1.0], &[3]).unwrap();
    let sys = Translation::new(StateBox::new(vec![-1.5], vec![1.5]).unwrap(), true);
    let t = build_tensor(&sys, &p, &u, 4, Execution::Sequential).unwrap();
    let c = build_cost_table(&p, &u, &|_: &[f64], u: &[f64]| u[0] * u[0], 4, CostScaling::Integral, Execution::Sequential).unwrap();
    let mu0 = Measure::dirac(3, 1).unwrap();
    let muf = Measure::new(vec![0.5, 0.0, 0.5]).unwrap();
    let problem = assemble(&t, &c, &mu0, &muf, 1).unwrap();
    let (_, x) = common::vertex_enumeration(&problem).unwrap();
    let sol = solve(&problem, &SolveOptions::default()).unwrap();
    let law = extract_feedback(&sol, 1e-12);
    let row = law.row(0, 1);
    for k in 0..3 {
        let oracle = x[problem.layout().nu(0, k, 1)];
        assert!((row[k] - oracle).abs() <= 1e-9, "{row:?}");
    }
    assert_eq!(row.iter().filter(|v| **v > 1e-9).count(), 2);
    assert!(!law.is_defined(0, 0) && !law.is_defined(0, 2));
}

#[test]
fn single_control_solutions_give_deterministic_laws() {
    let t = ulamot::ulam::TransitionTensor::from_dense(&[
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![vec![0.0, 1.0], vec![0.0, 1.0]],
    ])
    .unwrap();
    let c = CostTable::from_values(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
    let problem = assemble(&t, &c, &Measure::dirac(2, 0).unwrap(), &Measure::dirac(2, 1).unwrap(), 1).unwrap();
    let law = extract_feedback(&solve(&problem, &SolveOptions::default()).unwrap(), 1e-12);
    assert_eq!(law.row(0, 0), vec![0.0, 1.0]);
}

#[test]
fn mass_on_a_masked_cell_is_reported() {
    let t = ulamot::ulam::TransitionTensor::from_dense(&[vec![vec![1.0, 0.0], vec![0.0, 1.0]]]).unwrap();
    let law = ulamot::feedback::FeedbackLaw::from_rows(2, 1, vec![vec![Some(vec![1.0]), None]]).unwrap();
    let c = CostTable::zeros(2, 1);
    let ok = propagate(&t, &law, &Measure::dirac(2, 0).unwrap(), &c, 1e-9).unwrap();
    assert_eq!(ok.held_mass, 0.0);
    let err = propagate(&t, &law, &Measure::new(vec![0.5, 0.5]).unwrap(), &c, 1e-9);
    assert!(matches!(err, Err(ulamot::Error::UndefinedLaw { step: 0, cell: 1, .. })));
}

fn di_setup() -> (DoubleIntegrator, Partition, ControlGrid, ulamot::feedback::FeedbackLaw, Measure) {
    let bx = StateBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let sys = DoubleIntegrator::new(bx, true).unwrap();
    let p = Partition::new(&[0.0, 0.0], &[1.0, 1.0], &[6, 6]).unwrap();
    let u = ControlGrid::regular(&[-0.25], &[0.25], &[3]).unwrap();
    let t = build_tensor(&sys, &p, &u, 4, Execution::Parallel).unwrap();
    let c = build_cost_table(&p, &u, &QuadraticCost, 4, CostScaling::Integral, Execution::Parallel).unwrap();
    let mu0 = Measure::dirac(36, 0).unwrap();
    // Whatever the chain does from cell 0 under a fixed control is reachable.
    let mut muf = mu0.weights().to_vec();
    for k in [2, 2, 1] {
        muf = t.push(k, &muf);
    }
    let muf = Measure::normalized(muf).unwrap();
    let sol = solve(&assemble(&t, &c, &mu0, &muf, 3).unwrap(), &SolveOptions::default()).unwrap();
    (sys, p, u, extract_feedback(&sol, 1e-12), mu0)
}

#[test]
fn rollouts_are_reproducible_across_execution_modes() {
    let (sys, p, u, law, mu0) = di_setup();
    let sampler = InitialSampler::CellUniform(mu0);
    let run = |seed, exec| {
        let opts = RolloutOptions {
            agents: 2000,
            seed,
            keep_paths: 3,
            exec,
        };
        rollout(&sys, &p, &u, &law, &sampler, &opts).unwrap()
    };
    let a = run(7, Execution::Sequential);
    let b = run(7, Execution::Parallel);
    assert_eq!(a, b);
    assert_eq!(a.final_counts.iter().sum::<u64>(), 2000);
    assert_eq!(a.paths.len(), 3);
    assert!(a.paths.iter().all(|path| path.len() == law.horizon() + 1));
    assert_ne!(run(8, Execution::Parallel).final_counts, a.final_counts);
}

#[test]
fn zero_shift_rollout_stays_put() {
    let bx = StateBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let sys = Translation::new(bx, true);
    let p = Partition::new(&[0.0, 0.0], &[1.0, 1.0], &[4, 4]).unwrap();
    let u = ControlGrid::regular(&[0.0, 0.0], &[0.0, 0.0], &[1, 1]).unwrap();
    let t = build_tensor(&sys, &p, &u, 2, Execution::Sequential).unwrap();
    let mu = Measure::new((0..16).map(|i| if i % 5 == 0 { 0.25 } else { 0.0 }).collect()).unwrap();
    let sol = solve(&assemble(&t, &CostTable::zeros(16, 1), &mu, &mu, 4).unwrap(), &SolveOptions::default()).unwrap();
    let law = extract_feedback(&sol, 1e-12);
    let opts = RolloutOptions {
        agents: 4000,
        seed: 1,
        keep_paths: 0,
        exec: Execution::Parallel,
    };
    let r = rollout(&sys, &p, &u, &law, &InitialSampler::CellUniform(mu.clone()), &opts).unwrap();
    assert_eq!(r.flagged, 0);
    assert!((0..16).all(|i| (mu.weights()[i] == 0.0) == (r.final_counts[i] == 0)));
    let start = p.cell_center(5).unwrap();
    let r = rollout(&sys, &p, &u, &law, &InitialSampler::Point(start), &opts).unwrap();
    assert_eq!(r.final_counts[5], 4000);
}
