mod common;

use zkcyl::par::Execution;

#[test]
fn linear_problem_converges_at_fourth_order() {
    let disc = common::small_disc(Execution::Serial);
    let (o1, o2, errs) = common::linear_orders(&disc, 0.5, 80);
    assert!((3.7..=4.3).contains(&o1), "order {o1}");
    assert!((3.7..=4.3).contains(&o2), "order {o2}");
}

#[test]
fn linear_step_needs_one_pass() {
    let disc = common::small_disc(Execution::Serial);
    let u0 = common::consistent_data(&disc);
    let solver = zkcyl::integrator::StageSolver::precompute(0.01, &disc, Default::default()).unwrap();
    let (_, stats) = solver.step(&u0, None).unwrap();
    assert_eq!(stats.newton_iters, 1);
}

#[test]
fn serial_and_parallel_steps_agree_bitwise() {
    use zkcyl::dynamics::{gaussian_data, Discretization, Nonlinearity};
    use zkcyl::integrator::StageSolver;
    use zkcyl::spectral::TorusGrid;
    use zkcyl::transverse::RadialLayout;
    let make = |exec| {
        Discretization::new(
            TorusGrid::new(3.0, 32).unwrap(),
            RadialLayout::new(1.0, 8.0, 8, 16).unwrap(),
            exec,
        )
    };
    let mut out = vec![];
    for exec in [Execution::Serial, Execution::Parallel] {
        let disc = make(exec);
        let u0 = gaussian_data(&disc, 2.0, 1.0).unwrap();
        let solver = StageSolver::precompute(0.01, &disc, Default::default()).unwrap();
        let (u1, _) = solver.step(&u0, Some(&Nonlinearity::critical())).unwrap();
        out.push(u1.values);
    }
    assert_eq!(out[0], out[1]);
}
