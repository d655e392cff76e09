use super::*;

fn chain_xty() -> NondetModel {
    let vars = vec![VarSpec::binary("X"), VarSpec::binary("T"), VarSpec::binary("Y")];
    let cpts = vec![
        None,
        Some(Cpt::new(vec![0], vec![vec![0.4, 0.6], vec![0.9, 0.1]])),
        Some(Cpt::new(vec![1], vec![vec![0.2, 0.8], vec![0.5, 0.5]])),
    ];
    NondetModel::new(vars, vec![(0, 1), (1, 2)], cpts).unwrap()
}

/// X -> Y with P(Y=1|X=1) = p, P(Y=1|X=0) = q.
fn binary_xy(p: f64, q: f64) -> NondetModel {
    let vars = vec![VarSpec::binary("X"), VarSpec::binary("Y")];
    let cpts = vec![None, Some(Cpt::new(vec![0], vec![vec![1.0 - q, q], vec![1.0 - p, p]]))];
    NondetModel::new(vars, vec![(0, 1)], cpts).unwrap()
}

const CHAIN_JSON: &str = r#"{
  "vars": [{"name": "X", "domain": ["0", "1"]}, {"name": "Y", "domain": [0, 1]}],
  "edges": [["X", "Y"]],
  "cpts": {"Y": {"parents": ["X"], "rows": {"0": [0.3, 0.7], "1": [0.7, 0.3]}}}
}"#;

#[test]
fn validate_accepts_well_formed_chain() {
    let draft = ModelDraft::from_json(CHAIN_JSON).unwrap();
    let report = validate_model(&draft);
    assert!(report.ok(), "{:?}", report.violations);
}

#[test]
fn validate_flags_unnormalized_row() {
    let draft = ModelDraft::from_json(&CHAIN_JSON.replace("[0.3, 0.7]", "[0.3, 0.6]")).unwrap();
    let report = validate_model(&draft);
    assert!(!report.ok());
    assert!(report.violations.iter().any(|v| v.message.contains("row not normalized")));
    assert!(report.violations[0].location.contains("row 0"));
}

#[test]
fn validate_flags_cycle() {
    let text = CHAIN_JSON.replace(r#"[["X", "Y"]]"#, r#"[["X", "Y"], ["Y", "X"]]"#);
    let report = validate_model(&ModelDraft::from_json(&text).unwrap());
    assert!(report.violations.iter().any(|v| v.message == "cycle"));
}

#[test]
fn validate_flags_missing_row_and_root_cpt() {
    let text = r#"{
      "vars": [{"name": "X", "domain": ["0", "1"]}, {"name": "Y", "domain": ["0", "1"]}],
      "edges": [["X", "Y"]],
      "cpts": {"X": {"parents": [], "rows": {"": [0.5, 0.5]}},
               "Y": {"parents": ["X"], "rows": {"0": [0.3, 0.7]}}}
    }"#;
    let report = validate_model(&ModelDraft::from_json(text).unwrap());
    let messages: Vec<_> = report.violations.iter().map(|v| v.message.as_str()).collect();
    assert!(messages.contains(&"root variable carries a CPT"));
    assert!(messages.contains(&"missing row"));
}

#[test]
fn json_round_trip_preserves_model() {
    let m = chain_xty();
    let back = NondetModel::from_json(&m.to_json()).unwrap();
    assert_eq!(m, back);
}

#[test]
fn joint_prob_chain_unfolds_definition() {
    let m = chain_xty();
    let v = m.world(&[("X", "0"), ("T", "1"), ("Y", "1")]).unwrap();
    let p = m.joint_prob(&v, &m.root_assignment(&v)).unwrap();
    assert!((p - 0.6 * 0.5).abs() < 1e-15);
}

#[test]
fn joint_prob_hand_product_three_vars() {
    // X -> Y, X -> Z; P(Y=1|X=1)=0.25, P(Z=0|X=1)=0.8, so P(Y=1,Z=0|X=1)=0.2.
    let vars = vec![VarSpec::binary("X"), VarSpec::binary("Y"), VarSpec::binary("Z")];
    let cpts = vec![
        None,
        Some(Cpt::new(vec![0], vec![vec![0.5, 0.5], vec![0.75, 0.25]])),
        Some(Cpt::new(vec![0], vec![vec![0.1, 0.9], vec![0.8, 0.2]])),
    ];
    let m = NondetModel::new(vars, vec![(0, 1), (0, 2)], cpts).unwrap();
    let v = m.world(&[("X", "1"), ("Y", "1"), ("Z", "0")]).unwrap();
    assert!((m.joint_prob(&v, &m.root_assignment(&v)).unwrap() - 0.2).abs() < 1e-15);
}

#[test]
fn joint_prob_zero_entry_gives_zero() {
    let m = binary_xy(1.0 - 1e-300, 0.5);
    let m = {
        // Force an exact zero.
        let vars = m.vars().to_vec();
        NondetModel::new(vars, vec![(0, 1)], vec![None, Some(Cpt::new(vec![0], vec![vec![0.5, 0.5], vec![0.0, 1.0]]))])
            .unwrap()
    };
    let v = m.world(&[("X", "1"), ("Y", "0")]).unwrap();
    assert_eq!(m.joint_prob(&v, &m.root_assignment(&v)).unwrap(), 0.0);
}

#[test]
fn joint_prob_errors() {
    let m = chain_xty();
    let short = World(vec![0, 1]);
    assert!(matches!(m.joint_prob(&short, &m.assignment(&[("X", "0")]).unwrap()), Err(Error::InvalidQuery(_))));
    let v = m.world(&[("X", "0"), ("T", "1"), ("Y", "1")]).unwrap();
    let wrong_root = m.assignment(&[("X", "1")]).unwrap();
    assert!(matches!(m.joint_prob(&v, &wrong_root), Err(Error::InvalidQuery(_))));
}

#[test]
fn evidence_update_overwrites_actual_row_only() {
    let m = binary_xy(0.3, 0.6);
    let v = m.world(&[("X", "1"), ("Y", "1")]).unwrap();
    let u = m.evidence_update(&v).unwrap();
    let y = m.var_index("Y").unwrap();
    assert_eq!(u.cpt(y).unwrap().rows()[1], vec![0.0, 1.0]);
    assert_eq!(u.cpt(y).unwrap().rows()[0], m.cpt(y).unwrap().rows()[0]);
}

#[test]
fn evidence_update_three_var_chain_diff() {
    let m = chain_xty();
    let v = m.world(&[("X", "1"), ("T", "0"), ("Y", "1")]).unwrap();
    let u = m.evidence_update(&v).unwrap();
    let mut changed = Vec::new();
    for var in 1..3 {
        for (r, (a, b)) in m.cpt(var).unwrap().rows().iter().zip(u.cpt(var).unwrap().rows()).enumerate() {
            if a != b {
                changed.push((var, r));
            }
        }
    }
    // T's row at X=1 and Y's row at T=0; the other two rows are bit-identical.
    assert_eq!(changed, vec![(1, 1), (2, 0)]);
    assert_eq!(u.cpt(1).unwrap().rows()[1], vec![1.0, 0.0]);
    assert_eq!(u.cpt(2).unwrap().rows()[0], vec![0.0, 1.0]);
}

#[test]
fn evidence_update_is_idempotent_and_fixes_deterministic_models() {
    let m = chain_xty();
    let v = m.world(&[("X", "0"), ("T", "1"), ("Y", "0")]).unwrap();
    let once = m.evidence_update(&v).unwrap();
    assert_eq!(once.evidence_update(&v).unwrap(), once);

    let det = NondetModel::new(
        vec![VarSpec::binary("X"), VarSpec::binary("Y")],
        vec![(0, 1)],
        vec![None, Some(Cpt::new(vec![0], vec![vec![0.0, 1.0], vec![1.0, 0.0]]))],
    )
    .unwrap();
    let v = det.world(&[("X", "0"), ("Y", "1")]).unwrap();
    assert_eq!(det.evidence_update(&v).unwrap(), det);
}

#[test]
fn evidence_update_rejects_impossible_evidence() {
    let det = NondetModel::new(
        vec![VarSpec::binary("X"), VarSpec::binary("Y")],
        vec![(0, 1)],
        vec![None, Some(Cpt::new(vec![0], vec![vec![0.0, 1.0], vec![1.0, 0.0]]))],
    )
    .unwrap();
    let v = det.world(&[("X", "0"), ("Y", "0")]).unwrap();
    assert_eq!(det.evidence_update(&v), Err(Error::ImpossibleEvidence));
    assert_eq!(
        det.counterfactual_dist(&v, &det.assignment(&[("X", "1")]).unwrap(), EnumCap::default()),
        Err(Error::ImpossibleEvidence)
    );
}

#[test]
fn binary_counterfactual_is_point_identified_at_q() {
    let m = binary_xy(0.3, 0.7);
    let v = m.world(&[("X", "1"), ("Y", "1")]).unwrap();
    let r_star = m.assignment(&[("X", "0")]).unwrap();
    let cf = m.counterfactual_dist(&v, &r_star, EnumCap::default()).unwrap();
    let y1 = m.world(&[("X", "0"), ("Y", "1")]).unwrap();
    assert!((cf.get(&y1) - 0.7).abs() < 1e-15);
    assert!((cf.total() - 1.0).abs() < 1e-12);
}

#[test]
fn actual_roots_give_point_mass_on_evidence() {
    let m = chain_xty();
    let v = m.world(&[("X", "1"), ("T", "0"), ("Y", "1")]).unwrap();
    for cf in [
        m.counterfactual_dist(&v, &m.root_assignment(&v), EnumCap::default()).unwrap(),
        m.counterfactual_dist_cases(&v, &m.root_assignment(&v), EnumCap::default()).unwrap(),
    ] {
        assert_eq!(cf.as_point_mass(0.0), Some(&v));
    }
}

#[test]
fn counterfactual_matches_updated_model_prior() {
    let m = chain_xty();
    let v = m.world(&[("X", "1"), ("T", "0"), ("Y", "1")]).unwrap();
    let r_star = m.assignment(&[("X", "0")]).unwrap();
    let direct = m.counterfactual_dist(&v, &r_star, EnumCap::default()).unwrap();
    let via_update = m.evidence_update(&v).unwrap().observational_dist(&r_star, EnumCap::default()).unwrap();
    assert!(direct.max_abs_diff(&via_update) == 0.0);
}

#[test]
fn case_two_world_has_zero_probability() {
    // Evidence X=1,T=0,Y=1. Under X*=0, a world with T*=0 keeps Y's actual
    // parent, so Y*=0 there is excluded.
    let m = chain_xty();
    let v = m.world(&[("X", "1"), ("T", "0"), ("Y", "1")]).unwrap();
    let r_star = m.assignment(&[("X", "0")]).unwrap();
    let excluded = m.world(&[("X", "0"), ("T", "0"), ("Y", "0")]).unwrap();
    let cases = m.counterfactual_dist_cases(&v, &r_star, EnumCap::default()).unwrap();
    assert_eq!(cases.get(&excluded), 0.0);
    // Case 1: nothing outside r*.
    assert!(cases.iter().all(|(w, _)| w.0[0] == 0));
    // T*=0 has prior 0.4 at X=0, and then Y* is forced to 1.
    let kept = m.world(&[("X", "0"), ("T", "0"), ("Y", "1")]).unwrap();
    assert!((cases.get(&kept) - 0.4).abs() < 1e-15);
}

#[test]
fn chain_evaluators_agree() {
    let m = chain_xty();
    for r in m.all_root_assignments() {
        for (v, _) in m.extensions(&r, EnumCap::default()).unwrap() {
            for r_star in m.all_root_assignments() {
                let a = m.counterfactual_dist(&v, &r_star, EnumCap::default()).unwrap();
                let b = m.counterfactual_dist_cases(&v, &r_star, EnumCap::default()).unwrap();
                assert!(a.max_abs_diff(&b) <= EXACT_TOL);
            }
        }
    }
}

#[test]
fn chain_violates_simple_semantics() {
    let report = chain_xty().check_simple_semantics(EnumCap::default()).unwrap();
    assert!(!report.pass);
    let ce = report.counterexample.unwrap();
    assert!((ce.counterfactual - ce.observational).abs() > 1e-3);
}

#[test]
fn deterministic_model_satisfies_simple_semantics() {
    let vars = vec![VarSpec::new("X", ["a", "b", "c"]), VarSpec::binary("Y"), VarSpec::binary("Z")];
    let cpts = vec![
        None,
        Some(Cpt::new(vec![0], vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]])),
        Some(Cpt::new(vec![1], vec![vec![0.0, 1.0], vec![1.0, 0.0]])),
    ];
    let m = NondetModel::new(vars, vec![(0, 1), (1, 2)], cpts).unwrap();
    let report = m.check_simple_semantics(EnumCap::default()).unwrap();
    assert!(report.pass);
    assert_eq!(report.instances, 6);
}

#[test]
fn cap_is_enforced() {
    let m = chain_xty();
    let v = m.world(&[("X", "0"), ("T", "0"), ("Y", "0")]).unwrap();
    let r_star = m.assignment(&[("X", "1")]).unwrap();
    assert!(matches!(m.counterfactual_dist(&v, &r_star, EnumCap(3)), Err(Error::TooLarge { size: 4, cap: 3 })));
    assert!(matches!(m.counterfactual_dist_cases(&v, &r_star, EnumCap(7)), Err(Error::TooLarge { size: 8, .. })));
}

#[test]
fn root_clamp_must_cover_roots_only() {
    let m = chain_xty();
    let v = m.world(&[("X", "0"), ("T", "0"), ("Y", "0")]).unwrap();
    let bad = m.assignment(&[("X", "1"), ("T", "1")]).unwrap();
    assert!(matches!(m.counterfactual_dist(&v, &bad, EnumCap::default()), Err(Error::InvalidQuery(_))));
    let missing = m.assignment(&[]).unwrap();
    assert!(matches!(m.counterfactual_dist(&v, &missing, EnumCap::default()), Err(Error::InvalidQuery(_))));
}

#[test]
fn odometer_counts() {
    assert_eq!(odometer(&[2, 3]).count(), 6);
    assert_eq!(odometer(&[]).count(), 1);
    assert_eq!(odometer(&[2, 0]).count(), 0);
    assert_eq!(odometer(&[2, 2]).last(), Some(vec![1, 1]));
}
