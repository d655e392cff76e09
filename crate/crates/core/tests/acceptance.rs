//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use cfgen_core::cap::EnumCap;
use cfgen_core::oracle::{
    random_lm, random_model, verify_corollary, verify_evaluators, verify_example1, verify_gumbel_stability,
    verify_simple_sampler, verify_stable_laws, verify_thm1_sweep, verify_thm2_all_lengths, verify_trace_determinism,
    StabilitySweep, VerificationReport, MC_TVD_TOL,
};
use cfgen_core::rng::derive_seed;
use cfgen_core::token_model::{SamplingParams, ToyLm};
use cfgen_core::Result;

const V3K3: &str = include_str!("../../../fixtures/lm_v3_k3.json");
const ASYMMETRIC: &str = include_str!("../../../fixtures/asymmetric.json");
const TOPK: &str = include_str!("../../../fixtures/topk_violation.json");

const SEED: u64 = 20_240_601;
const EXACT: f64 = 1e-12;

struct Outcome {
    pass: bool,
    detail: String,
}

fn judged(report: &VerificationReport, limit: Option<Duration>, elapsed: Duration) -> Outcome {
    let in_time = limit.is_none_or(|l| elapsed < l);
    let limit_text = limit.map(|l| format!(", limit {} s", l.as_secs())).unwrap_or_default();
    let mut detail = format!(
        "{} instances, max deviation {:e} (tolerance {:e}), {:.2} s{limit_text}",
        report.instances,
        report.max_deviation,
        report.tolerance,
        elapsed.as_secs_f64()
    );
    if let Some(v) = report.violations {
        detail.push_str(&format!(", violations {v}"));
    }
    if let Some(c) = &report.counterexample {
        detail.push_str(&format!(", counterexample {c}"));
    }
    Outcome { pass: report.pass && report.instances > 0 && in_time, detail }
}

fn timed<F: FnOnce() -> Result<VerificationReport>>(limit: Option<Duration>, f: F) -> Outcome {
    let start = Instant::now();
    match f() {
        Ok(report) => judged(&report, limit, start.elapsed()),
        Err(e) => Outcome { pass: false, detail: format!("error: {e}") },
    }
}

fn lm(text: &str) -> ToyLm {
    ToyLm::from_json(text).expect("bundled fixture")
}

fn evaluator_equivalence() -> Outcome {
    timed(Some(Duration::from_secs(10)), || {
        let models: Vec<_> = (0..100).map(|i| random_model(derive_seed(SEED, i))).collect();
        let r = verify_evaluators(&models, SEED, EnumCap::default())?;
        assert_eq!(r.tolerance, EXACT);
        Ok(r)
    })
}

const TEMPERATURES: [f64; 3] = [0.5, 1.0, 2.0];
const SWEEP_LMS: u64 = 12;

fn sweep_lm(i: u64) -> ToyLm {
    random_lm(derive_seed(SEED ^ 0x7e3, i))
}

fn theorem2() -> Outcome {
    timed(Some(Duration::from_secs(60)), || {
        let mut total = VerificationReport::new("thm2", EXACT);
        for i in 0..SWEEP_LMS {
            let params = SamplingParams::with_temperature(TEMPERATURES[(i % 3) as usize]);
            total.absorb(verify_thm2_all_lengths(&sweep_lm(i), &params, EnumCap::default())?);
        }
        Ok(total)
    })
}

fn corollary() -> Outcome {
    timed(Some(Duration::from_secs(60)), || {
        let mut total = VerificationReport::new("corollary", 0.0);
        for i in 0..SWEEP_LMS {
            total.absorb(verify_corollary(&sweep_lm(i), EnumCap::default())?);
        }
        Ok(total)
    })
}

fn theorem1() -> Outcome {
    timed(None, || verify_thm1_sweep(50, SEED, EnumCap::default()))
}

fn example1() -> Outcome {
    timed(None, verify_example1)
}

fn gumbel_stability() -> Outcome {
    let lm = lm(ASYMMETRIC);
    let v = lm.vocab();
    timed(None, || {
        let sweep = StabilitySweep {
            pairs: vec![(v.parse("a")?, v.parse("c")?)],
            traces: 10_000,
            seed: SEED,
            factual: SamplingParams::default(),
            counterfactual: SamplingParams::default(),
            diagnostic: false,
        };
        let r = verify_gumbel_stability(&lm, &sweep)?;
        if r.violations != Some(0) {
            return Ok(VerificationReport { pass: false, ..r });
        }
        Ok(r)
    })
}

fn simple_sampler() -> Outcome {
    let lm = lm(V3K3);
    timed(Some(Duration::from_secs(10)), || {
        let r = verify_simple_sampler(&lm, &lm.vocab().parse("b")?, &SamplingParams::default(), 100_000, SEED, EnumCap::default())?;
        assert_eq!(r.tolerance, MC_TVD_TOL);
        Ok(r)
    })
}

fn trace_determinism() -> Outcome {
    timed(None, || verify_trace_determinism(&lm(V3K3), 1_000, SEED))
}

fn stable_laws() -> Outcome {
    timed(None, || verify_stable_laws(1_000, SEED, EnumCap::default()))
}

fn truncation_diagnostic() -> Outcome {
    let lm = lm(TOPK);
    let prompts = lm.prompts_of_len(1);
    let pairs = prompts
        .iter()
        .flat_map(|x| prompts.iter().filter(move |s| *s != x).map(move |s| (x.clone(), s.clone())))
        .collect();
    let sweep = StabilitySweep {
        pairs,
        traces: 1_000,
        seed: SEED,
        factual: SamplingParams::default(),
        counterfactual: SamplingParams { top_k: Some(2), ..Default::default() },
        diagnostic: true,
    };
    let mut outcome = timed(None, || verify_gumbel_stability(&lm, &sweep));
    // The criterion is that the pipeline runs and reports a count.
    outcome.pass &= outcome.detail.contains("violations ");
    outcome
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("evaluator equivalence (100 random models)", evaluator_equivalence),
        ("compiled counterfactual equals P(Y | x*) (12 random LMs)", theorem2),
        ("greedy decoding gives exact 0/1 counterfactuals", corollary),
        ("noise-free structural models convert exactly (50 models)", theorem1),
        ("binary example: choices 1 and 0, bounds [0, 1], answer 0.7", example1),
        ("Gumbel replay is counterfactually stable (10^4 traces)", gumbel_stability),
        ("simple sampler within TVD 0.02 of exact (10^5 draws)", simple_sampler),
        ("trace replay is exact and bit-stable (10^3 queries)", trace_determinism),
        ("stable distribution laws (10^3 instances)", stable_laws),
        ("top-k at the counterfactual: violation count reported", truncation_diagnostic),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = run();
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        println!("[{status}] {:>2}. {name}: {}", i + 1, outcome.detail);
        failed += usize::from(!outcome.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
