use proptest::prelude::*;

use segre_core::harness::{aggregate, MethodName, RunOutcome};
use segre_core::segre::{align_and_error, project_tangent, retract_thosvd, tangent_basis};
use segre_core::trace::{ConvergenceTrace, RowDiagnostics, TraceRow};
use segre_core::{CPModel, DenseTensor, SegrePoint};

fn shape_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(2usize..=4, 2..=4)
}

fn vector(p: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, p).prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
}

fn point_on(shape: Vec<usize>) -> impl Strategy<Value = SegrePoint> {
    let factors: Vec<_> = shape.iter().map(|&p| vector(p)).collect();
    (0.2f64..5.0, any::<bool>(), factors)
        .prop_map(|(w, neg, f)| SegrePoint::from_unnormalized(if neg { -w } else { w }, f).unwrap())
}

fn tensor_on(shape: Vec<usize>) -> impl Strategy<Value = DenseTensor> {
    let len: usize = shape.iter().product();
    prop::collection::vec(-2.0f64..2.0, len).prop_map(move |d| DenseTensor::new(shape.clone(), d).unwrap())
}

fn point_and_tensor() -> impl Strategy<Value = (SegrePoint, DenseTensor, DenseTensor)> {
    shape_strategy().prop_flat_map(|s| (point_on(s.clone()), tensor_on(s.clone()), tensor_on(s)))
}

fn model_on(shape: Vec<usize>, r: usize) -> impl Strategy<Value = CPModel> {
    prop::collection::vec(point_on(shape), r).prop_map(|c| CPModel::new(c).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projector_is_an_orthogonal_projection((p, x, z) in point_and_tensor()) {
        let px = project_tangent(&p, &x).unwrap();
        let pz = project_tangent(&p, &z).unwrap();
        prop_assert!(px.fro_norm() <= x.fro_norm() + 1e-12);
        prop_assert!(project_tangent(&p, &px).unwrap().sub(&px).unwrap().fro_norm() <= 1e-10 * x.fro_norm().max(1.0));
        let gap = px.inner(&z).unwrap() - x.inner(&pz).unwrap();
        prop_assert!(gap.abs() <= 1e-10 * (x.fro_norm() * z.fro_norm()).max(1.0));
    }

    #[test]
    fn basis_coordinates_reproduce_the_projection((p, x, _z) in point_and_tensor()) {
        let basis = tangent_basis(&p);
        prop_assert_eq!(basis.dim(), p.manifold_dim());
        let synth = basis.synthesize(&basis.coordinates(&x).unwrap()).unwrap();
        let proj = project_tangent(&p, &x).unwrap();
        prop_assert!(synth.sub(&proj).unwrap().fro_norm() <= 1e-9 * x.fro_norm().max(1.0));
    }

    #[test]
    fn retraction_fixes_rank_one_tensors(p in shape_strategy().prop_flat_map(point_on)) {
        let back = retract_thosvd(&p.embed()).unwrap();
        prop_assert!(back.embed().sub(&p.embed()).unwrap().fro_norm() <= 1e-10 * p.weight().abs());
        prop_assert_eq!(back.canonical().weight().signum(), p.canonical().weight().signum());
    }

    #[test]
    fn error_ignores_order_and_sign_patterns(
        (m, flips) in shape_strategy().prop_flat_map(|s| {
            let d = s.len();
            (model_on(s, 3), prop::collection::vec(prop::collection::vec(any::<bool>(), d), 3))
        })
    ) {
        let comps: Vec<SegrePoint> = m.components().iter().zip(&flips).rev().map(|(c, fl)| {
            let parity = fl.iter().filter(|&&f| f).count() % 2;
            let factors = c.factors().iter().zip(fl).map(|(u, &f)| u.iter().map(|x| if f { -x } else { *x }).collect()).collect();
            let w = if parity == 1 { -c.weight() } else { c.weight() };
            SegrePoint::new(w, factors).unwrap()
        }).collect();
        let shuffled = CPModel::new(comps).unwrap();
        let rep = align_and_error(&shuffled, &m).unwrap();
        prop_assert!(rep.max_component_error <= 1e-10);
        prop_assert!(rep.relative_error <= 1e-10);
    }

    #[test]
    fn aggregate_is_independent_of_replicate_order(errs in prop::collection::vec(prop::collection::vec(1e-6f64..2.0, 1..6), 1..6)) {
        let outcomes: Vec<RunOutcome> = errs.iter().enumerate().map(|(r, e)| {
            let mut trace = ConvergenceTrace::default();
            for (t, &v) in e.iter().enumerate() {
                trace.push(TraceRow { iter: t, rel_fro_err: v, max_comp_err: v, residual: v, wall_ms: 0.0 }, RowDiagnostics::default());
            }
            RunOutcome { method: MethodName::Rgn, replicate: r as u64, trace, error: None }
        }).collect();
        let mut reversed = outcomes.clone();
        reversed.reverse();
        prop_assert_eq!(aggregate(&outcomes, &[MethodName::Rgn], 5), aggregate(&reversed, &[MethodName::Rgn], 5));
        let rows = aggregate(&outcomes, &[MethodName::Rgn], 5);
        let last_sq: f64 = errs.iter().map(|e| e.last().unwrap().powi(2)).sum::<f64>() / errs.len() as f64;
        prop_assert!((rows.last().unwrap().rel_fro_err - last_sq.sqrt()).abs() <= 1e-12 * last_sq.sqrt());
    }
}
