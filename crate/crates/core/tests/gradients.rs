mod support;

use proptest::prelude::*;
use rlkit::tensor::grad_check;
use rlkit::{Axis, Graph, Rng, Tensor};
use support::Program;

fn check(program: &Program) -> rlkit::tensor::GradCheckReport {
    grad_check(|g, v| program.run(g, v), &program.points, 1e-4).unwrap()
}

#[test]
fn random_graphs_pass_grad_check() {
    let mut rng = Rng::seed_from(2024);
    let mut failed = Vec::new();
    for i in 0..300 {
        let len = 4 + rng.below(9);
        let p = Program::random(&mut rng, len);
        let r = check(&p);
        if !r.passed {
            failed.push((i, r.failures.len(), r.worst_rel_error, p.instrs.clone()));
        }
    }
    assert!(failed.is_empty(), "{failed:#?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_graph_gradients_match_finite_differences(seed in any::<u64>(), len in 1usize..12) {
        let p = Program::random(&mut Rng::seed_from(seed), len);
        let r = check(&p);
        prop_assert!(r.passed, "{:?} {:?}", r.failures, p.instrs);
    }

    /// The gradient of a·f + b·h is a·∇f + b·∇h.
    #[test]
    fn gradients_are_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = Rng::seed_from(seed);
        let p = Program::random(&mut rng, 6);
        let q = Program::random_on(&mut rng, p.points.clone(), 6);
        let grads = |f: &dyn Fn(&mut Graph, &[rlkit::Var]) -> rlkit::Result<rlkit::Var>| {
            let mut g = Graph::new();
            let vars: Vec<_> = p.points.iter().map(|t| g.param(t).unwrap()).collect();
            let out = f(&mut g, &vars).unwrap();
            g.backward(out).unwrap().collect(&vars)
        };
        let gp = grads(&|g, v| p.run(g, v));
        let combined = grads(&|g, v| {
            let fp = p.run(g, v)?;
            let fq = q.run(g, v)?;
            let sp = g.scale(fp, a)?;
            let sq = g.scale(fq, b)?;
            g.add(sp, sq)
        });
        let gq = {
            let mut g = Graph::new();
            let vars: Vec<_> = p.points.iter().map(|t| g.param(t).unwrap()).collect();
            let out = q.run(&mut g, &vars).unwrap();
            g.backward(out).unwrap().collect(&vars)
        };
        for ((c, x), y) in combined.iter().zip(&gp).zip(&gq) {
            for ((c, x), y) in c.data().iter().zip(x.data()).zip(y.data()) {
                let expected = a * x + b * y;
                prop_assert!((c - expected).abs() <= 1e-9 * (1.0 + expected.abs()));
            }
        }
    }
}

#[test]
fn sum_of_mean_gradient_is_uniform() {
    let mut g = Graph::new();
    let x = g.param(&Tensor::matrix(2, 3, vec![1.0; 6]).unwrap()).unwrap();
    let m = g.mean(x, Axis::All).unwrap();
    let grads = g.backward(m).unwrap();
    assert!(grads.get(x).unwrap().data().iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-15));
}
