use cfgen_core::cf::{gumbel_factual_run, its_cf_dist, stable_cf_dist, CfQuery, TraceFile};
use cfgen_core::det_scm::{counterfactual_bounds_binary, BinaryQuery, CanonicalBinaryScm};
use cfgen_core::nondet::NondetModel;
use cfgen_core::token_model::{SamplingParams, ToyLm};
use cfgen_core::{tvd, EnumCap, Error};

const V3K3: &str = include_str!("../../../fixtures/lm_v3_k3.json");
const ASYMMETRIC: &str = include_str!("../../../fixtures/asymmetric.json");
const EXAMPLE1: &str = include_str!("../../../fixtures/example1.json");

#[test]
fn compiled_counterfactual_matches_prompt_conditional() {
    let lm = ToyLm::from_json(V3K3).unwrap();
    let params = SamplingParams::with_temperature(0.7);
    let cap = EnumCap::default();
    let compiled = lm.compile_to_nondet(1, &params, cap).unwrap();
    let (x, y, x_star) = (lm.vocab().parse("a").unwrap(), lm.vocab().parse("a b").unwrap(), lm.vocab().parse("b").unwrap());
    let world = compiled.world_for(&x, &y).unwrap();
    let cf = compiled.model().counterfactual_dist(&world, &compiled.root_for(&x_star).unwrap(), cap).unwrap();
    let expected = lm.seq_dist(&x_star, &params, cap).unwrap();
    assert!(tvd(&compiled.output_marginal(&cf), &expected) < 1e-12);
}

#[test]
fn example1_model_file_answers_both_events() {
    let m = NondetModel::from_json(EXAMPLE1).unwrap();
    let v = m.world(&[("X", "1"), ("Y", "1")]).unwrap();
    let r = m.assignment(&[("X", "0")]).unwrap();
    let cf = m.counterfactual_dist(&v, &r, EnumCap::default()).unwrap();
    let y1 = cf.get(&m.world(&[("X", "0"), ("Y", "1")]).unwrap());
    assert!((y1 - 0.7).abs() < 1e-12);

    let q: BinaryQuery = "Y*=0|Y=1,X=1,X*=0".parse().unwrap();
    let bounds = counterfactual_bounds_binary(0.3, 0.7, &q).unwrap();
    assert_eq!((bounds.lo, bounds.hi), (0.0, 1.0));
    assert_eq!(CanonicalBinaryScm::choice_a(0.3, 0.7).unwrap().query(&q).unwrap(), 1.0);
    assert_eq!(CanonicalBinaryScm::choice_b(0.3, 0.7).unwrap().query(&q).unwrap(), 0.0);
}

#[test]
fn saved_traces_reproduce_counterfactuals() {
    let lm = ToyLm::from_json(ASYMMETRIC).unwrap();
    let params = SamplingParams::default();
    let x = lm.vocab().parse("a").unwrap();
    let x_star = lm.vocab().parse("c").unwrap();
    for seed in 0..50 {
        let (y, trace) = gumbel_factual_run(&lm, &x, &params, seed).unwrap();
        let file = TraceFile::from_json(&TraceFile::from_trace(&lm, &trace).to_json()).unwrap();
        let loaded = file.to_trace(&lm).unwrap();
        assert_eq!(loaded.replay(&lm).unwrap(), y);
        assert_eq!(loaded.counterfactual(&lm, &x_star, &params).unwrap(), trace.counterfactual(&lm, &x_star, &params).unwrap());
    }
}

#[test]
fn exact_semantics_agree_without_intervention() {
    let lm = ToyLm::from_json(ASYMMETRIC).unwrap();
    let params = SamplingParams::default();
    let cap = EnumCap::default();
    let q = CfQuery::parse(&lm, "b", "b c a", "b").unwrap();
    for d in [stable_cf_dist(&lm, &q, &params, cap).unwrap(), its_cf_dist(&lm, &q, &params, &params, cap).unwrap()] {
        assert_eq!(d.as_point_mass(1e-12), Some(&q.y));
    }
}

#[test]
fn enumeration_cap_is_enforced() {
    let lm = ToyLm::from_json(V3K3).unwrap();
    let err = lm.seq_dist(&lm.vocab().parse("a").unwrap(), &SamplingParams::default(), EnumCap(1)).unwrap_err();
    assert!(matches!(err, Error::TooLarge { .. }));
}
