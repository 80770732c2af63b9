mod common;

use common::instances::bound_instance;
use jointsparse::jbp::{solve, JbpProblem, SolveStatus, SolverOptions};
use jointsparse::theory::{cone_constraint_check, recovery_bound, TheoryCheckInstance};

#[test]
fn bound_and_cone_constraint_hold_on_hypothesis_instances() {
    let mut worst_ratio: f64 = 0.0;
    let mut worst_cone = f64::NEG_INFINITY;
    for seed in 0..100 {
        let inst = bound_instance(seed, 16, 4, 0.1);
        let p = JbpProblem::new(
            &inst.pair.y_i,
            &inst.pair.y_d,
            &inst.dicts.phi_i,
            &inst.dicts.phi_d,
            0.1,
            1.0,
        );
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let err = (&inst.truth.a0 - &sol.code.a).norm_squared() + (&inst.truth.b0 - &sol.code.b).norm_squared();
        let bound = recovery_bound(&inst.inputs).unwrap();
        assert!(err <= bound, "seed {seed}: error {err} above bound {bound}");
        worst_ratio = worst_ratio.max(err / bound);
        let check = TheoryCheckInstance::from_codes(
            &inst.truth.a0,
            &inst.truth.b0,
            &sol.code.a,
            &sol.code.b,
            inst.truth.support.clone(),
            inst.inputs.gamma,
            1.0,
        )
        .unwrap();
        let r = cone_constraint_check(&check);
        worst_cone = worst_cone.max(r);
        assert!(r <= 1e-6, "seed {seed}: cone residual {r}");
    }
    println!("largest error/bound {worst_ratio:.3e}, largest cone residual {worst_cone:.3e}");
}
