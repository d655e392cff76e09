use std::path::PathBuf;
use std::process::{Command, Output};

use cfgen_core::cf::{stable_cf_dist, CfQuery};
use cfgen_core::token_model::{SamplingParams, ToyLm};
use cfgen_core::{tvd, EnumCap};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn fixture_arg(name: &str) -> String {
    fixture(name).display().to_string()
}

fn cfgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfgen"))
        .args(args)
        .env_remove("CFGEN_ENUM_CAP")
        .output()
        .expect("cfgen runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 output")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 output")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json output")
}

fn lm(name: &str) -> ToyLm {
    ToyLm::from_json(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

#[test]
fn validate_accepts_good_fixtures() {
    for name in ["example1.json", "lm_v3_k3.json", "asymmetric.json", "topk_violation.json"] {
        let out = cfgen(&["validate", "--model", &fixture_arg(name)]);
        assert_eq!(code(&out), 0, "{name}: {}", stdout(&out));
        assert!(stdout(&out).starts_with("ok: valid"));
    }
}

#[test]
fn validate_rejects_cycles_and_unnormalized_rows() {
    let out = cfgen(&["validate", "--model", &fixture_arg("cyclic.json")]);
    assert_eq!(code(&out), 3);
    assert!(stdout(&out).contains("cycle"), "{}", stdout(&out));

    let out = cfgen(&["validate", "--model", &fixture_arg("unnormalized.json")]);
    assert_eq!(code(&out), 3);
    assert!(stdout(&out).contains("not normalized"), "{}", stdout(&out));
}

#[test]
fn simple_exact_matches_golden_table() {
    let out = cfgen(&[
        "counterfactual", "--model", &fixture_arg("lm_v3_k3.json"), "--cf-prompt", "b", "--method", "simple", "--exact",
        "--format", "tsv",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let golden = std::fs::read_to_string(fixture("golden/simple_exact_lm_v3_k3_b.tsv")).unwrap();
    assert_eq!(stdout(&out), golden);
}

#[test]
fn simple_exact_json_equals_library_table() {
    let model = lm("lm_v3_k3.json");
    let exact = model.seq_dist(&model.vocab().parse("b").unwrap(), &SamplingParams::default(), EnumCap::default()).unwrap();
    let out = cfgen(&["counterfactual", "--model", "builtin:lm_v3_k3", "--cf-prompt", "b", "--method", "simple", "--exact"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = json(&out);
    let rows = report["distribution"].as_array().unwrap();
    assert_eq!(rows.len(), exact.len());
    for row in rows {
        let seq = model.vocab().parse(row["output"].as_str().unwrap()).unwrap();
        assert_eq!(row["probability"].as_f64().unwrap(), exact.get(&seq));
    }
}

#[test]
fn gumbel_without_intervention_returns_factual_output() {
    let out = cfgen(&[
        "counterfactual", "--model", "builtin:asymmetric", "--prompt", "a", "--factual-output", "a b c", "--cf-prompt",
        "a", "--method", "gumbel", "--samples", "200", "--seed", "7",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = json(&out);
    assert!(report["draws"].as_array().unwrap().iter().all(|d| d == "a b c"));
    assert_eq!(report["distribution"][0]["probability"], 1.0);
}

#[test]
fn stable_without_intervention_is_point_mass() {
    let out = cfgen(&[
        "counterfactual", "--model", "builtin:asymmetric", "--prompt", "a", "--factual-output", "a b", "--cf-prompt",
        "a", "--method", "stable", "--exact", "--format", "tsv",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out), "output\tprobability\na b\t1\n");
}

#[test]
fn factual_trace_replays_through_counterfactual() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.json");
    let trace_arg = trace.display().to_string();
    for (method, cf_method) in [("gumbel", "gumbel"), ("its", "its")] {
        let out = cfgen(&[
            "factual", "--model", "builtin:lm_v3_k3", "--prompt", "a", "--method", method, "--seed", "11", "--out",
            &trace_arg,
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let file: Value = serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
        let y: Vec<&str> = file["y"].as_array().unwrap().iter().map(|t| t.as_str().unwrap()).collect();

        let out = cfgen(&["counterfactual", "--model", "builtin:lm_v3_k3", "--trace", &trace_arg, "--cf-prompt", "a", "--method", cf_method]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert_eq!(json(&out)["draws"][0], y.join(" "));
    }
    // A uniform trace cannot drive the Gumbel method.
    let out = cfgen(&["counterfactual", "--model", "builtin:lm_v3_k3", "--trace", &trace_arg, "--cf-prompt", "b", "--method", "gumbel"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn bounds_cover_the_unit_interval() {
    let out = cfgen(&["bounds", "--p", "0.3", "--q", "0.7"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = json(&out);
    assert_eq!(report["lo"], 0.0);
    assert_eq!(report["hi"], 1.0);
    assert_eq!(report["within_bounds"], true);

    let out = cfgen(&["bounds", "--p", "0.3", "--q", "0.7", "--query", "Y*=1|Y=1,X=1,X*=0"]);
    let report = json(&out);
    assert!((report["nondeterministic"].as_f64().unwrap() - 0.7).abs() < 1e-12);
    assert_eq!(report["within_bounds"], true);

    let out = cfgen(&["bounds", "--p", "0.7", "--q", "0.3"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let path = dir.path().join(format!("run{i}.json"));
            let out = cfgen(&[
                "compare", "--model", "builtin:asymmetric", "--prompt", "a", "--factual-output", "a b", "--cf-prompt", "c",
                "--methods", "simple,its,stable,gumbel", "--samples", "500", "--seed", "42", "--out",
                &path.display().to_string(),
            ]);
            assert_eq!(code(&out), 0, "{}", stderr(&out));
            std::fs::read(path).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);

    let sample = |seed: &str| {
        stdout(&cfgen(&[
            "counterfactual", "--model", "builtin:lm_v3_k3", "--cf-prompt", "a", "--method", "simple", "--samples", "50",
            "--seed", seed,
        ]))
    };
    assert_eq!(sample("3"), sample("3"));
    assert_ne!(sample("3"), sample("4"));
}

#[test]
fn exit_codes_are_distinct_per_error() {
    let base = ["counterfactual", "--model", "builtin:asymmetric"];
    let run = |extra: &[&str]| code(&cfgen(&[&base[..], extra].concat()));

    // Configuration errors.
    assert_eq!(run(&["--cf-prompt", "c", "--method", "simple", "--exact", "--samples", "3"]), 2);
    assert_eq!(run(&["--cf-prompt", "c", "--method", "simple", "--samples", "3"]), 2);
    assert_eq!(run(&["--prompt", "a", "--factual-output", "a b", "--cf-prompt", "c", "--method", "gumbel", "--exact"]), 2);
    assert_eq!(run(&["--prompt", "a", "--cf-prompt", "c", "--method", "its", "--samples", "3", "--seed", "1"]), 2);
    assert_eq!(run(&["--cf-prompt", "z", "--method", "simple", "--exact"]), 2);
    assert_eq!(run(&["--cf-prompt", "c", "--method", "nonsense"]), 2);

    // Length mismatch has its own message.
    let out = cfgen(&[&base[..], &["--prompt", "a", "--factual-output", "a b", "--cf-prompt", "a b", "--method", "stable", "--exact"]].concat());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("counterfactual prompt has length 2"), "{}", stderr(&out));

    // Model errors.
    assert_eq!(code(&cfgen(&["counterfactual", "--model", &fixture_arg("cyclic.json"), "--cf-prompt", "a", "--method", "simple", "--exact"])), 3);
    assert_eq!(code(&cfgen(&["counterfactual", "--model", "builtin:nope", "--cf-prompt", "a", "--method", "simple", "--exact"])), 2);
    assert_eq!(code(&cfgen(&["counterfactual", "--model", "/no/such/file.json", "--cf-prompt", "a", "--method", "simple", "--exact"])), 2);

    // Enumeration cap.
    let out = cfgen(&["--enum-cap", "2", "counterfactual", "--model", "builtin:asymmetric", "--cf-prompt", "c", "--method", "simple", "--exact"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("enumeration cap"));
    let out = Command::new(env!("CARGO_BIN_EXE_cfgen"))
        .args(["counterfactual", "--model", "builtin:asymmetric", "--cf-prompt", "c", "--method", "simple", "--exact"])
        .env("CFGEN_ENUM_CAP", "2")
        .output()
        .unwrap();
    assert_eq!(code(&out), 4);

    // A factual output the model cannot produce leaves the semantics undefined.
    let out = cfgen(&[
        "counterfactual", "--model", "builtin:lm_v3_k3", "--prompt", "a", "--factual-output", "a b", "--cf-prompt", "b",
        "--method", "stable", "--exact", "--top-k", "1",
    ]);
    assert_eq!(code(&out), 5);
    assert!(stderr(&out).contains("impossible evidence"));
}

#[test]
fn simple_against_itself_is_zero() {
    let out = cfgen(&[
        "compare", "--model", "builtin:lm_v3_k3", "--prompt", "a", "--factual-output", "a b", "--cf-prompt", "b",
        "--methods", "simple,simple",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(json(&out)["pairs"][0]["tvd"], 0.0);
}

#[test]
fn stable_and_simple_differ_on_asymmetric_fixture() {
    let out = cfgen(&[
        "compare", "--model", &fixture_arg("asymmetric.json"), "--prompt", "a", "--factual-output", "a b", "--cf-prompt",
        "c", "--methods", "simple,stable", "--format", "tsv",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let golden = std::fs::read_to_string(fixture("golden/compare_asymmetric_a_ab_c.tsv")).unwrap();
    assert_eq!(stdout(&out), golden);

    let model = lm("asymmetric.json");
    let q = CfQuery::parse(&model, "a", "a b", "c").unwrap();
    let params = SamplingParams::default();
    let simple = model.seq_dist(&q.x_star, &params, EnumCap::default()).unwrap();
    let stable = stable_cf_dist(&model, &q, &params, EnumCap::default()).unwrap();
    let d = tvd(&simple, &stable);
    assert!(d > 0.0);
    assert!((d - 0.26).abs() < 1e-12, "{d}");
}

#[test]
fn gumbel_comparison_reports_samples_and_seed() {
    let out = cfgen(&[
        "compare", "--model", "builtin:asymmetric", "--prompt", "a", "--factual-output", "a b", "--cf-prompt", "c",
        "--methods", "simple,gumbel", "--samples", "2000", "--seed", "9",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = json(&out);
    assert_eq!(report["samples"], 2000);
    assert_eq!(report["seed"], 9);
    assert_eq!(report["pairs"][0]["empirical"], true);
    assert!(report["pairs"][0]["tvd"].as_f64().unwrap() > 0.0);

    let out = cfgen(&[
        "compare", "--model", "builtin:asymmetric", "--prompt", "a", "--factual-output", "a b", "--cf-prompt", "c",
        "--methods", "simple,gumbel",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn gumbel_draws_stay_inside_stable_support() {
    // Gumbel-max counterfactuals never pick a token the stable semantics excludes.
    let out = cfgen(&[
        "compare", "--model", "builtin:asymmetric", "--prompt", "a", "--factual-output", "a b", "--cf-prompt", "c",
        "--methods", "stable,gumbel", "--samples", "5000", "--seed", "5",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = json(&out);
    let outputs = |i: usize| -> Vec<String> {
        report["methods"][i]["distribution"].as_array().unwrap().iter().map(|r| r["output"].as_str().unwrap().to_string()).collect()
    };
    let stable = outputs(0);
    for o in outputs(1) {
        assert!(stable.contains(&o), "{o} outside stable support {stable:?}");
    }
}

#[test]
fn verify_suites_pass_and_print_json_lines() {
    for suite in ["example1", "thm2", "corollary", "thm1"] {
        let out = cfgen(&["verify", suite]);
        assert_eq!(code(&out), 0, "{suite}: {}{}", stdout(&out), stderr(&out));
        for line in stdout(&out).lines() {
            let r: Value = serde_json::from_str(line).unwrap();
            assert_eq!(r["pass"], true, "{line}");
        }
    }
}

#[test]
fn verify_stability_reports_diagnostic_violations_and_exits_zero() {
    let out = cfgen(&["verify", "stability"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let lines: Vec<Value> = stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["claim"], "stability");
    assert_eq!(lines[0]["violations"], 0);
    assert_eq!(lines[1]["claim"], "stability_diagnostic");
    assert!(lines[1]["violations"].as_u64().unwrap() > 0);
}

#[test]
fn verify_on_a_model_file() {
    let out = cfgen(&["verify", "thm2", "--model", &fixture_arg("lm_v3_k3.json"), "--temperature", "0.5"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let out = cfgen(&["verify", "stability", "--model", "builtin:topk_violation", "--top-k", "2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("\"stability_diagnostic\""));

    let out = cfgen(&["verify", "thm1", "--model", "builtin:lm_v3_k3"]);
    assert_eq!(code(&out), 3);
}
