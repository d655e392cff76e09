use std::collections::BTreeMap;
use std::process::ExitCode;

use cfgen_core::cf::{
    gumbel_cf_sample, gumbel_factual_run, gumbel_posterior_noise, its_cf_dist, its_cf_sample, its_factual_run,
    its_posterior_noise, simple_cf_sample, stable_cf_dist, CfQuery, FactualTrace, NoiseKind, TraceFile,
};
use cfgen_core::det_scm::{counterfactual_bounds_binary, BinaryQuery, BoundsResult};
use cfgen_core::oracle::{
    verify_corollary, verify_example1, verify_gumbel_stability, verify_thm1, verify_thm1_sweep,
    verify_thm2_all_lengths, StabilitySweep, VerificationReport,
};
use cfgen_core::rng::{derive_seed, stream, uniform};
use cfgen_core::token_model::{inverse_transform_index, SamplingParams, ToyLm, TokenSeq};
use cfgen_core::{tvd, DistTable, EnumCap, Error};
use serde::Serialize;

use crate::args::{
    BoundsArgs, CompareArgs, CounterfactualArgs, FactualArgs, Method, NoiseMethod, QueryArgs, Suite, ValidateArgs,
    VerifyArgs,
};
use crate::error::{CliError, CliResult, VERIFY_FAILED};
use crate::load;
use crate::output::{self, emit, json, render, rows, rows_tsv, Format, Row};

/// Structural models drawn for the bundled structural-model sweep.
const THM1_MODELS: u64 = 50;
/// Factual traces per prompt pair in the asserted stability run.
const STABILITY_TRACES: u64 = 10_000;
/// Factual traces per prompt pair in the truncation diagnostic.
const DIAGNOSTIC_TRACES: u64 = 1_000;

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn validate(args: &ValidateArgs) -> CliResult<ExitCode> {
    let (kind, report) = load::validate(&args.model.model)?;
    if report.ok() {
        println!("ok: valid {}", kind.name());
    }
    for v in &report.violations {
        println!("violation: {v}");
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    Ok(if report.ok() { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

fn parse_seq(lm: &ToyLm, text: &str) -> CliResult<TokenSeq> {
    Ok(lm.vocab().parse(text)?)
}

fn require<'a>(value: &'a Option<String>, flag: &str, why: &str) -> CliResult<&'a str> {
    value.as_deref().ok_or_else(|| config(format!("{flag} is required {why}")))
}

/// Full factual query from the command line.
fn full_query(lm: &ToyLm, q: &QueryArgs, why: &str) -> CliResult<CfQuery> {
    let x = parse_seq(lm, require(&q.prompt, "--prompt", why)?)?;
    let y = parse_seq(lm, require(&q.factual_output, "--factual-output", why)?)?;
    let x_star = parse_seq(lm, require(&q.cf_prompt, "--cf-prompt", "")?)?;
    let q = CfQuery::new(x, y, x_star)?;
    q.check(lm)?;
    Ok(q)
}

fn load_trace(lm: &ToyLm, path: &str, method: Method) -> CliResult<FactualTrace> {
    let text = load::read_text(path)?;
    let file = TraceFile::from_json(&text)?;
    let expected = match method {
        Method::Gumbel => NoiseKind::Gumbel,
        Method::Its => NoiseKind::Uniform,
        _ => return Err(config("--trace applies to the gumbel and its methods only")),
    };
    if file.kind != expected {
        let held = match file.kind {
            NoiseKind::Gumbel => "gumbel",
            NoiseKind::Uniform => "uniform",
        };
        return Err(config(format!("trace holds {held} noise but --method is {}", method.name())));
    }
    Ok(file.to_trace(lm)?)
}

#[derive(Serialize)]
struct CounterfactualReport<'a> {
    method: &'a str,
    mode: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    prompt: Option<String>,
    cf_prompt: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    factual_output: Option<String>,
    params: SamplingParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    draws: Option<Vec<String>>,
    distribution: Vec<Row>,
}

fn frequencies(draws: &[TokenSeq]) -> DistTable<TokenSeq> {
    let mut counts: BTreeMap<&TokenSeq, u64> = BTreeMap::new();
    for d in draws {
        *counts.entry(d).or_insert(0) += 1;
    }
    let n = draws.len() as f64;
    DistTable::from_weights(counts.into_iter().map(|(s, c)| (s.clone(), c as f64 / n)))
}

fn draw_from(table: &DistTable<TokenSeq>, u: f64) -> TokenSeq {
    let entries: Vec<(&TokenSeq, f64)> = table.iter().collect();
    let probs: Vec<f64> = entries.iter().map(|(_, p)| *p).collect();
    entries[inverse_transform_index(&probs, u)].0.clone()
}

/// Exact distribution of a method, where one exists.
fn exact_dist(lm: &ToyLm, method: Method, q: &CfQuery, params: &SamplingParams, cap: EnumCap) -> CliResult<DistTable<TokenSeq>> {
    match method {
        Method::Simple => Ok(lm.seq_dist(&q.x_star, params, cap)?),
        Method::Its => Ok(its_cf_dist(lm, q, params, params, cap)?),
        Method::Stable => Ok(stable_cf_dist(lm, q, params, cap)?),
        Method::Gumbel => Err(config(
            "the gumbel method has no exact distribution; sample it with --samples and --seed",
        )),
    }
}

/// One posterior draw for a noise-based method.
fn posterior_draw(lm: &ToyLm, method: Method, q: &CfQuery, params: &SamplingParams, seed: u64) -> CliResult<TokenSeq> {
    Ok(match method {
        Method::Gumbel => gumbel_cf_sample(lm, &gumbel_posterior_noise(lm, &q.x, &q.y, params, seed)?, &q.x_star, params)?,
        Method::Its => its_cf_sample(lm, &its_posterior_noise(lm, &q.x, &q.y, params, seed)?, &q.x_star, params)?,
        _ => unreachable!("only noise-based methods have posterior draws"),
    })
}

pub fn counterfactual(args: &CounterfactualArgs, cap: EnumCap) -> CliResult<ExitCode> {
    let lm = load::lm(&args.model.model)?;
    let params = args.decode.params();
    params.validate()?;
    if args.exact && args.samples.is_some() {
        return Err(config("--exact and --samples cannot be combined"));
    }
    let method = args.method;
    let trace = match &args.trace {
        Some(path) => Some(load_trace(&lm, path, method)?),
        None => None,
    };
    let cf_prompt = require(&args.query.cf_prompt, "--cf-prompt", "")?;
    let x_star = parse_seq(&lm, cf_prompt)?;

    // The factual pair comes from the trace when one is given.
    let query = if let Some(t) = &trace {
        if args.query.prompt.is_some() || args.query.factual_output.is_some() {
            return Err(config("--trace already holds the prompt and factual output"));
        }
        let q = CfQuery::new(t.x.clone(), t.y.clone(), x_star.clone())?;
        q.check(&lm)?;
        Some(q)
    } else if method == Method::Simple && args.query.factual_output.is_none() {
        if let Some(p) = &args.query.prompt {
            let x = parse_seq(&lm, p)?;
            if x.len() != x_star.len() {
                return Err(Error::LengthMismatch { factual: x.len(), counterfactual: x_star.len() }.into());
            }
        }
        None
    } else {
        Some(full_query(&lm, &args.query, &format!("for the {} method", method.name()))?)
    };
    let simple_query = || CfQuery::new(x_star.clone(), x_star.clone(), x_star.clone());

    let (mode, draws, table) = if args.exact {
        let q = match &query {
            Some(q) => q.clone(),
            None => simple_query()?,
        };
        let factual = trace.as_ref().map_or(params, |t| t.params);
        let table = match method {
            Method::Its => its_cf_dist(&lm, &q, &factual, &params, cap)?,
            _ => exact_dist(&lm, method, &q, &params, cap)?,
        };
        ("exact", None, table)
    } else if let Some(t) = &trace {
        if args.samples.is_some_and(|n| n != 1) {
            return Err(config("a trace replays to a single output; drop --samples or set it to 1"));
        }
        let y_star = t.counterfactual(&lm, &x_star, &params)?;
        let table = DistTable::point_mass(y_star.clone());
        ("replay", Some(vec![y_star]), table)
    } else {
        let seed = args.seed.ok_or_else(|| config("--seed is required for sampling"))?;
        let n = args.samples.unwrap_or(1);
        if n == 0 {
            return Err(config("--samples must be positive"));
        }
        let stable = match method {
            Method::Stable => Some(stable_cf_dist(&lm, query.as_ref().expect("stable needs a query"), &params, cap)?),
            _ => None,
        };
        let mut draws = Vec::with_capacity(n as usize);
        for i in 0..n {
            let s = derive_seed(seed, i);
            let d = match method {
                Method::Simple => simple_cf_sample(&lm, &query.clone().map_or_else(simple_query, Ok)?, &params, s)?,
                Method::Stable => draw_from(stable.as_ref().expect("computed above"), uniform(&mut stream(seed, i))),
                _ => posterior_draw(&lm, method, query.as_ref().expect("noise methods need a query"), &params, s)?,
            };
            draws.push(d);
        }
        let table = frequencies(&draws);
        ("sample", Some(draws), table)
    };

    let text = match args.output.format {
        Format::Tsv => rows_tsv(&rows(&lm, &table)),
        Format::Json => json(&CounterfactualReport {
            method: method.name(),
            mode,
            prompt: query.as_ref().map(|q| render(&lm, &q.x)).or_else(|| args.query.prompt.clone()),
            cf_prompt: render(&lm, &x_star),
            factual_output: query.as_ref().map(|q| render(&lm, &q.y)),
            params,
            samples: draws.as_ref().filter(|_| mode == "sample").map(|d| d.len() as u64),
            seed: if mode == "sample" { args.seed } else { None },
            draws: draws.map(|d| d.iter().map(|s| render(&lm, s)).collect()),
            distribution: rows(&lm, &table),
        }),
    };
    emit(&args.output, &text)?;
    Ok(ExitCode::SUCCESS)
}

pub fn factual(args: &FactualArgs) -> CliResult<ExitCode> {
    let lm = load::lm(&args.model.model)?;
    let params = args.decode.params();
    let x = parse_seq(&lm, &args.prompt)?;
    let (_, trace) = match args.method {
        NoiseMethod::Gumbel => gumbel_factual_run(&lm, &x, &params, args.seed)?,
        NoiseMethod::Its => its_factual_run(&lm, &x, &params, args.seed)?,
    };
    let mut text = TraceFile::from_trace(&lm, &trace).to_json();
    text.push('\n');
    let out = output::OutputArgs { format: Format::Json, out: args.out.clone() };
    emit(&out, &text)?;
    Ok(ExitCode::SUCCESS)
}

fn bundled_lms() -> CliResult<Vec<(String, ToyLm)>> {
    ["lm_v3_k3", "asymmetric", "topk_violation"]
        .iter()
        .map(|name| {
            let source = format!("{}{name}", load::BUILTIN_PREFIX);
            Ok((source.clone(), load::lm(&source)?))
        })
        .collect()
}

fn suite_lms(args: &VerifyArgs) -> CliResult<Vec<(String, ToyLm)>> {
    match &args.model {
        Some(m) => Ok(vec![(m.clone(), load::lm(m)?)]),
        None => bundled_lms(),
    }
}

fn labeled(mut r: VerificationReport, model: &str) -> VerificationReport {
    r.note = Some(match r.note.take() {
        Some(n) => format!("{model}; {n}"),
        None => model.to_string(),
    });
    r
}

fn all_pairs(lm: &ToyLm) -> CliResult<Vec<(TokenSeq, TokenSeq)>> {
    if lm.k() < 2 {
        return Err(config("stability needs k >= 2 so that a one-token prompt leaves room for output"));
    }
    let prompts = lm.prompts_of_len(1);
    Ok(prompts
        .iter()
        .flat_map(|x| prompts.iter().filter(move |s| *s != x).map(move |s| (x.clone(), s.clone())))
        .collect())
}

fn stability_reports(args: &VerifyArgs, params: &SamplingParams) -> CliResult<Vec<VerificationReport>> {
    if let Some(m) = &args.model {
        let lm = load::lm(m)?;
        let factual = SamplingParams { top_k: None, top_p: None, ..*params };
        let sweep = StabilitySweep {
            pairs: all_pairs(&lm)?,
            traces: DIAGNOSTIC_TRACES,
            seed: args.seed,
            factual,
            counterfactual: *params,
            diagnostic: params.is_truncating(),
        };
        return Ok(vec![labeled(verify_gumbel_stability(&lm, &sweep)?, m)]);
    }
    let asym = load::lm("builtin:asymmetric")?;
    let v = asym.vocab();
    let asserted = StabilitySweep {
        pairs: vec![(v.parse("a")?, v.parse("c")?)],
        traces: STABILITY_TRACES,
        seed: args.seed,
        factual: SamplingParams::default(),
        counterfactual: SamplingParams::default(),
        diagnostic: false,
    };
    let topk = load::lm("builtin:topk_violation")?;
    let diagnostic = StabilitySweep {
        pairs: all_pairs(&topk)?,
        traces: DIAGNOSTIC_TRACES,
        seed: args.seed,
        factual: SamplingParams::default(),
        counterfactual: SamplingParams { top_k: Some(2), ..Default::default() },
        diagnostic: true,
    };
    Ok(vec![
        labeled(verify_gumbel_stability(&asym, &asserted)?, "builtin:asymmetric"),
        labeled(verify_gumbel_stability(&topk, &diagnostic)?, "builtin:topk_violation"),
    ])
}

fn run_suite(suite: Suite, args: &VerifyArgs, cap: EnumCap) -> CliResult<Vec<VerificationReport>> {
    let params = args.decode.params();
    params.validate()?;
    match suite {
        Suite::Thm1 => Ok(vec![match &args.model {
            Some(m) => labeled(verify_thm1(&load::scm(m)?, cap)?, m),
            None => verify_thm1_sweep(THM1_MODELS, args.seed, cap)?,
        }]),
        Suite::Thm2 => suite_lms(args)?
            .iter()
            .map(|(name, lm)| Ok(labeled(verify_thm2_all_lengths(lm, &params, cap)?, name)))
            .collect(),
        Suite::Corollary => suite_lms(args)?
            .iter()
            .map(|(name, lm)| Ok(labeled(verify_corollary(lm, cap)?, name)))
            .collect(),
        Suite::Example1 => Ok(vec![verify_example1()?]),
        Suite::Stability => stability_reports(args, &params),
        Suite::All => unreachable!("expanded by the caller"),
    }
}

pub fn verify(args: &VerifyArgs, cap: EnumCap) -> CliResult<ExitCode> {
    let suites = match args.suite {
        Suite::All => vec![Suite::Thm1, Suite::Thm2, Suite::Corollary, Suite::Example1, Suite::Stability],
        s => vec![s],
    };
    let mut pass = true;
    for suite in suites {
        if args.model.is_some() && args.suite == Suite::All && suite == Suite::Thm1 {
            // A single model file is either a token model or a structural model.
            continue;
        }
        for r in run_suite(suite, args, cap)? {
            pass &= r.pass;
            println!("{}", r.to_json_line());
        }
    }
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(VERIFY_FAILED) })
}

#[derive(Serialize)]
struct BoundsReport {
    query: String,
    p: f64,
    q: f64,
    #[serde(flatten)]
    bounds: BoundsResult,
    nondeterministic: f64,
    within_bounds: bool,
}

pub fn bounds(args: &BoundsArgs) -> CliResult<ExitCode> {
    let query: BinaryQuery = args.query.parse()?;
    let b = counterfactual_bounds_binary(args.p, args.q, &query)?;
    let nondeterministic = query.nondeterministic_value(args.p, args.q);
    let within_bounds = b.lo <= nondeterministic && nondeterministic <= b.hi;
    let text = match args.output.format {
        Format::Json => json(&BoundsReport { query: query.to_string(), p: args.p, q: args.q, bounds: b, nondeterministic, within_bounds }),
        Format::Tsv => format!(
            "lo\thi\tnondeterministic\twithin_bounds\n{}\t{}\t{}\t{}\n",
            b.lo, b.hi, nondeterministic, within_bounds
        ),
    };
    emit(&args.output, &text)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct MethodTable {
    method: &'static str,
    exact: bool,
    distribution: Vec<Row>,
}

#[derive(Serialize)]
struct PairTvd {
    a: &'static str,
    b: &'static str,
    tvd: f64,
    empirical: bool,
}

#[derive(Serialize)]
struct CompareReport {
    prompt: String,
    cf_prompt: String,
    factual_output: String,
    params: SamplingParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    methods: Vec<MethodTable>,
    pairs: Vec<PairTvd>,
}

pub fn compare(args: &CompareArgs, cap: EnumCap) -> CliResult<ExitCode> {
    let lm = load::lm(&args.model.model)?;
    let params = args.decode.params();
    params.validate()?;
    if args.methods.is_empty() {
        return Err(config("--methods needs at least one method"));
    }
    let q = full_query(&lm, &args.query, "to compare methods")?;
    let sampled = args.methods.contains(&Method::Gumbel);
    let (samples, seed) = if sampled {
        let n = args.samples.ok_or_else(|| config("--samples is required to compare the gumbel method"))?;
        let seed = args.seed.ok_or_else(|| config("--seed is required to compare the gumbel method"))?;
        if n == 0 {
            return Err(config("--samples must be positive"));
        }
        (Some(n), Some(seed))
    } else {
        (None, None)
    };

    let mut tables = Vec::new();
    for &m in &args.methods {
        let table = match (m, samples, seed) {
            (Method::Gumbel, Some(n), Some(seed)) => {
                let draws = (0..n)
                    .map(|i| posterior_draw(&lm, m, &q, &params, derive_seed(seed, i)))
                    .collect::<CliResult<Vec<_>>>()?;
                frequencies(&draws)
            }
            _ => exact_dist(&lm, m, &q, &params, cap)?,
        };
        tables.push((m, table));
    }
    let mut pairs = Vec::new();
    for (i, (a, ta)) in tables.iter().enumerate() {
        for (b, tb) in &tables[i + 1..] {
            pairs.push(PairTvd {
                a: a.name(),
                b: b.name(),
                tvd: tvd(ta, tb),
                empirical: *a == Method::Gumbel || *b == Method::Gumbel,
            });
        }
    }

    let text = match args.output.format {
        Format::Tsv => {
            let mut s = String::from("a\tb\ttvd\tempirical\n");
            for p in &pairs {
                s.push_str(&format!("{}\t{}\t{}\t{}\n", p.a, p.b, p.tvd, p.empirical));
            }
            s
        }
        Format::Json => json(&CompareReport {
            prompt: render(&lm, &q.x),
            cf_prompt: render(&lm, &q.x_star),
            factual_output: render(&lm, &q.y),
            params,
            samples,
            seed,
            methods: tables
                .iter()
                .map(|(m, t)| MethodTable { method: m.name(), exact: *m != Method::Gumbel, distribution: rows(&lm, t) })
                .collect(),
            pairs,
        }),
    };
    emit(&args.output, &text)?;
    Ok(ExitCode::SUCCESS)
}
