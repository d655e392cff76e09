use super::*;
use crate::nondet::EXACT_TOL;
use crate::token_model::TokenSeq;

const V3K3: &str = include_str!("../../../../fixtures/lm_v3_k3.json");

fn query(s: &str) -> BinaryQuery {
    s.parse().unwrap()
}

#[test]
fn query_parsing_accepts_any_order() {
    let q = query("Y*=0|Y=1,X=1,X*=0");
    assert_eq!(q, BinaryQuery { x: 1, y: 1, x_star: 0, y_star: 0 });
    assert_eq!(query("Y*=0|X*=0,X=1,Y=1"), q);
    assert_eq!(q.to_string(), "Y*=0|Y=1,X=1,X*=0");
    assert!("Y*=2|Y=1,X=1,X*=0".parse::<BinaryQuery>().is_err());
    assert!("Y*=0|Y=1,X=1".parse::<BinaryQuery>().is_err());
}

#[test]
fn response_types_behave() {
    let scm = CanonicalBinaryScm::choice_a(0.3, 0.7).unwrap().to_det_scm().unwrap();
    let clamp = |x| Assignment(vec![Some(x), None]);
    assert_eq!(scm.det_counterfactual_given_u(&[0], &clamp(0)).unwrap(), World(vec![0, 0]));
    assert_eq!(scm.det_counterfactual_given_u(&[1], &clamp(0)).unwrap(), World(vec![0, 1]));
    assert_eq!(scm.det_counterfactual_given_u(&[3], &clamp(0)).unwrap(), World(vec![0, 1]));
    assert_eq!(scm.det_counterfactual_given_u(&[2], &clamp(1)).unwrap(), World(vec![1, 0]));
}

#[test]
fn both_choices_reproduce_the_conditionals() {
    for scm in [CanonicalBinaryScm::choice_a(0.3, 0.7).unwrap(), CanonicalBinaryScm::choice_b(0.3, 0.7).unwrap()] {
        let [a, b, _, d] = scm.weights;
        assert!((a + d - 0.3).abs() < EXACT_TOL);
        assert!((b + d - 0.7).abs() < EXACT_TOL);
        let det = scm.to_det_scm().unwrap();
        let y1_given = |x| det.det_conditional(&World(vec![x, 1]), &Assignment(vec![Some(x), None])).unwrap();
        assert!((y1_given(1) - 0.3).abs() < EXACT_TOL);
        assert!((y1_given(0) - 0.7).abs() < EXACT_TOL);
    }
}

#[test]
fn choices_disagree_on_the_counterfactual() {
    let q = query("Y*=0|Y=1,X=1,X*=0");
    let a = CanonicalBinaryScm::choice_a(0.3, 0.7).unwrap();
    let b = CanonicalBinaryScm::choice_b(0.3, 0.7).unwrap();
    assert!((a.query(&q).unwrap() - 1.0).abs() < EXACT_TOL);
    assert!(b.query(&q).unwrap().abs() < EXACT_TOL);
    assert!((a.query_via_scm(&q).unwrap() - 1.0).abs() < EXACT_TOL);
    assert!(b.query_via_scm(&q).unwrap().abs() < EXACT_TOL);
    assert!(a.is_boundary() && b.is_boundary());
}

#[test]
fn bounds_span_the_unit_interval() {
    for text in ["Y*=0|Y=1,X=1,X*=0", "Y*=1|Y=1,X=1,X*=0"] {
        let q = query(text);
        let b = counterfactual_bounds_binary(0.3, 0.7, &q).unwrap();
        assert!(b.lo.abs() < EXACT_TOL && (b.hi - 1.0).abs() < EXACT_TOL, "{text}: {b:?}");
        let nd = q.nondeterministic_value(0.3, 0.7);
        assert!(b.lo <= nd && nd <= b.hi);
    }
    assert!((query("Y*=1|Y=1,X=1,X*=0").nondeterministic_value(0.3, 0.7) - 0.7).abs() < EXACT_TOL);
}

#[test]
fn bounds_contain_every_interior_model() {
    let q = query("Y*=0|Y=1,X=1,X*=0");
    let b = counterfactual_bounds_binary(0.2, 0.5, &q).unwrap();
    for i in 0..=20 {
        let d = 0.2 * i as f64 / 20.0;
        let v = CanonicalBinaryScm::at(0.2, 0.5, d).unwrap().query(&q);
        if let Ok(v) = v {
            assert!(b.lo - EXACT_TOL <= v && v <= b.hi + EXACT_TOL);
        }
    }
}

#[test]
fn bounds_require_ordered_interior_parameters() {
    let q = query("Y*=0|Y=1,X=1,X*=0");
    assert!(matches!(counterfactual_bounds_binary(0.5, 0.5, &q), Err(Error::Infeasible(_))));
    assert!(matches!(counterfactual_bounds_binary(0.0, 0.5, &q), Err(Error::Infeasible(_))));
    assert!(CanonicalBinaryScm::new(0.3, 0.7, [0.3, 0.6, 0.1, 0.0]).is_err());
}

#[test]
fn impossible_evidence_is_reported() {
    let scm = CanonicalBinaryScm::choice_a(0.3, 0.7).unwrap().to_det_scm().unwrap();
    // Choice A puts no weight on Y=1 or Y=notX... X=1, Y=0 is still possible; X=0, Y=0 needs Y=X or Y=0.
    let bad = DetScm::from_fn(
        vec![VarSpec::binary("X"), VarSpec::binary("Y")],
        vec![VarSpec::binary("U")],
        vec![(0, 1)],
        vec![1.0, 0.0],
        |u, r| vec![r[0], if u[0] == 0 { r[0] } else { 1 - r[0] }],
    )
    .unwrap();
    assert_eq!(
        bad.det_counterfactual(&World(vec![1, 0]), &Assignment(vec![Some(0), None])),
        Err(Error::ImpossibleEvidence)
    );
    assert!(scm.det_counterfactual(&World(vec![1]), &Assignment(vec![Some(0), None])).is_err());
}

#[test]
fn table_must_fix_roots() {
    let err = DetScm::from_fn(
        vec![VarSpec::binary("X"), VarSpec::binary("Y")],
        vec![VarSpec::binary("U")],
        vec![(0, 1)],
        vec![0.5, 0.5],
        |_, r| vec![1 - r[0], 0],
    );
    assert!(matches!(err, Err(Error::InvalidModel(_))));
}

#[test]
fn inverse_transform_splits_at_cumulative_breakpoints() {
    let cells = inverse_transform_cells(&[vec![0.5, 0.5]]);
    assert_eq!(cells, vec![(0.0, 0.5), (0.5, 1.0)]);
    let frag = exogenize(&[vec![0.5, 0.5]], ExoMethod::InverseTransform).unwrap();
    assert_eq!(frag.cells.iter().map(|c| c.response[0]).collect::<Vec<_>>(), vec![0, 1]);
}

#[test]
fn exogenization_reproduces_every_context() {
    let family = vec![vec![0.2, 0.5, 0.3], vec![0.1, 0.3, 0.6], vec![0.0, 0.0, 1.0]];
    for method in [ExoMethod::InverseTransform, ExoMethod::Canonical] {
        let frag = exogenize(&family, method).unwrap();
        for (ctx, dist) in family.iter().enumerate() {
            let got = frag.marginal(ctx, 3);
            assert!(got.iter().zip(dist).all(|(a, b)| (a - b).abs() < 1e-12), "{method:?}");
        }
    }
    let canonical = exogenize(&family, ExoMethod::Canonical).unwrap();
    assert_eq!(canonical.cells.len(), 27);
    assert!(matches!(exogenize(&family, ExoMethod::Gumbel), Err(Error::Unsupported(_))));
    assert_eq!(exogenize(&family[..1], ExoMethod::Gumbel).unwrap().cells.len(), 3);
}

#[test]
fn canonical_binary_exogenization_has_four_types() {
    // Rows for X = 0 and X = 1 over Y.
    let family = vec![vec![0.3, 0.7], vec![0.7, 0.3]];
    let frag = exogenize(&family, ExoMethod::Canonical).unwrap();
    let responses: Vec<Vec<usize>> = frag.cells.iter().map(|c| c.response.clone()).collect();
    assert_eq!(responses, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
}

#[test]
fn zero_temperature_model_converts_to_nondet() {
    let lm = ToyLm::from_json(V3K3).unwrap();
    let params = SamplingParams::greedy();
    let scm = DetScm::from_lm_inverse_transform(&lm, 1, &params, EnumCap::default()).unwrap();
    assert!(scm.is_u_irrelevant());
    let nondet = scm.to_nondet_when_u_irrelevant().unwrap();
    for r in scm.all_root_assignments() {
        let det = scm.observational_dist(&r).unwrap();
        let nd = nondet.observational_dist(&r, EnumCap::default()).unwrap();
        assert!(det.max_abs_diff(&nd) < EXACT_TOL);
    }
}

#[test]
fn sampling_model_depends_on_noise() {
    let lm = ToyLm::from_json(V3K3).unwrap();
    let scm = DetScm::from_lm_inverse_transform(&lm, 1, &SamplingParams::default(), EnumCap::default()).unwrap();
    assert!(!scm.is_u_irrelevant());
    assert_eq!(scm.to_nondet_when_u_irrelevant(), Err(Error::DependsOnExogenous));
}

#[test]
fn inverse_transform_model_matches_seq_dist() {
    let lm = ToyLm::from_json(V3K3).unwrap();
    let params = SamplingParams::default();
    let scm = DetScm::from_lm_inverse_transform(&lm, 1, &params, EnumCap::default()).unwrap();
    let compiled = lm.compile_to_nondet(1, &params, EnumCap::default()).unwrap();
    for x in compiled.prompts() {
        let obs = scm.observational_dist(&compiled.root_for(x).unwrap()).unwrap();
        let outputs = compiled.output_marginal(&obs);
        let expected = lm.seq_dist(x, &params, EnumCap::default()).unwrap();
        assert!(outputs.max_abs_diff(&expected) < 1e-12, "prompt {x:?}");
    }
    let b = lm.vocab().parse("b").unwrap();
    let bb = compiled.output_marginal(&scm.observational_dist(&compiled.root_for(&b).unwrap()).unwrap());
    assert!((bb.get(&lm.vocab().parse("b b").unwrap()) - 0.36).abs() < 1e-12);
    let _: TokenSeq = b;
}

#[test]
fn json_round_trip() {
    let scm = CanonicalBinaryScm::choice_b(0.3, 0.7).unwrap().to_det_scm().unwrap();
    let file = ScmFile::from_scm(&scm);
    let text = file.to_json();
    let back = ScmFile::from_json(&text).unwrap().build().unwrap();
    assert_eq!(back, scm);
}

#[test]
fn json_rejects_missing_responses() {
    let scm = CanonicalBinaryScm::choice_b(0.3, 0.7).unwrap().to_det_scm().unwrap();
    let mut file = ScmFile::from_scm(&scm);
    file.responses.remove("Y=X|0");
    assert!(matches!(file.build(), Err(Error::InvalidModel(_))));
}
