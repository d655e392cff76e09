use clap::{Args, Parser, Subcommand, ValueEnum};
use cfgen_core::token_model::SamplingParams;
use cfgen_core::DEFAULT_ENUM_CAP;

use crate::output::OutputArgs;

#[derive(Debug, Parser)]
#[command(name = "cfgen", version, about = "Counterfactual generation for toy token models")]
pub struct Cli {
    /// Largest number of worlds an exact computation may enumerate.
    #[arg(long, global = true, env = "CFGEN_ENUM_CAP", default_value_t = DEFAULT_ENUM_CAP)]
    pub enum_cap: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a causal model, token model, or structural model file.
    Validate(ValidateArgs),
    /// Counterfactual outputs of a token model under one semantics.
    Counterfactual(CounterfactualArgs),
    /// Run the token model once and save the noise trace.
    Factual(FactualArgs),
    /// Run the brute-force verification suites.
    Verify(VerifyArgs),
    /// Bounds on a binary counterfactual query over all structural models.
    Bounds(BoundsArgs),
    /// Pairwise total variation distances between semantics.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Simple,
    Gumbel,
    Its,
    Stable,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Simple => "simple",
            Method::Gumbel => "gumbel",
            Method::Its => "its",
            Method::Stable => "stable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseMethod {
    Gumbel,
    Its,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Thm1,
    Thm2,
    Corollary,
    Example1,
    Stability,
    All,
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Model file, or `builtin:<name>` for a bundled fixture.
    #[arg(long)]
    pub model: String,
}

#[derive(Debug, Clone, Args)]
pub struct DecodeArgs {
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub top_p: Option<f64>,
}

impl DecodeArgs {
    pub fn params(&self) -> SamplingParams {
        SamplingParams { temperature: self.temperature, top_k: self.top_k, top_p: self.top_p }
    }
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub model: ModelArg,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Factual prompt, space-separated tokens.
    #[arg(long, allow_hyphen_values = true)]
    pub prompt: Option<String>,
    /// Counterfactual prompt, space-separated tokens.
    #[arg(long, allow_hyphen_values = true)]
    pub cf_prompt: Option<String>,
    /// Observed factual output, space-separated tokens.
    #[arg(long, allow_hyphen_values = true)]
    pub factual_output: Option<String>,
}

#[derive(Debug, Args)]
pub struct CounterfactualArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub query: QueryArgs,
    /// Trace file written by `cfgen factual`.
    #[arg(long)]
    pub trace: Option<String>,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Emit the full distribution instead of draws.
    #[arg(long)]
    pub exact: bool,
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub decode: DecodeArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct FactualArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long, allow_hyphen_values = true)]
    pub prompt: String,
    #[arg(long, value_enum)]
    pub method: NoiseMethod,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub decode: DecodeArgs,
    /// Write the trace here instead of standard output.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub suite: Suite,
    /// Check this model instead of the bundled fixtures.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub decode: DecodeArgs,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// P(Y=1 | X=1).
    #[arg(long)]
    pub p: f64,
    /// P(Y=1 | X=0).
    #[arg(long)]
    pub q: f64,
    #[arg(long, default_value = "Y*=0|Y=1,X=1,X*=0")]
    pub query: String,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub query: QueryArgs,
    /// Comma-separated methods to compare.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "simple,its,stable")]
    pub methods: Vec<Method>,
    /// Draws for methods without an exact distribution.
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub decode: DecodeArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}
