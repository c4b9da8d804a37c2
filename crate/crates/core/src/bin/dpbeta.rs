use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dpbeta::dataset::{load_network, CovariateRule, DatasetSpec, LoadedNetwork, NetworkSummary};
use dpbeta::estimator::{fit, FitConfig, FitResult};
use dpbeta::inference::{BiasCorrection, GammaVariance, InferenceOptions, InferenceReport};
use dpbeta::network::sufficient_stats;
use dpbeta::privacy::{release, PrivacyBudget, ReleasedStats};
use dpbeta::sim::{run_design, EpsilonRule, SimDesign};
use dpbeta::Error;

#[derive(Parser, Debug)]
#[command(name = "dpbeta", version, about = "Private release and estimation for the covariate-adjusted beta-model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Seed for every random draw [default: 0].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Total privacy parameter.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Number of edges a neighbouring graph may differ in [default: 1].
    #[arg(long, global = true)]
    k: Option<u64>,
    /// Confidence level [default: 0.95].
    #[arg(long, global = true)]
    level: Option<f64>,
    /// Use the exact statistics.
    #[arg(long, global = true)]
    no_privacy: bool,
    /// Worker threads for `simulate` (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the result here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Edge list, one `u v` pair per line.
    #[arg(long)]
    edges: PathBuf,
    /// Node attribute CSV (id first).
    #[arg(long)]
    attrs: Option<PathBuf>,
    /// Pair covariate construction [default: match with --attrs, none without].
    #[arg(long, value_enum)]
    rule: Option<RuleArg>,
    /// Node ids start at 0.
    #[arg(long)]
    zero_indexed: bool,
    /// Remove nodes without edges.
    #[arg(long)]
    drop_isolated: bool,
    /// Write the index,label table here.
    #[arg(long)]
    remap: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum RuleArg {
    Match,
    Product,
    None,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    #[arg(long)]
    beta_tol: Option<f64>,
    #[arg(long)]
    gamma_tol: Option<f64>,
    #[arg(long)]
    max_inner: Option<usize>,
    #[arg(long)]
    max_outer: Option<usize>,
    /// Solve with the diagonal approximation of V⁻¹.
    #[arg(long)]
    s_approx: bool,
}

impl SolverArgs {
    fn apply(&self, cfg: &mut FitConfig) {
        if let Some(v) = self.beta_tol {
            cfg.beta_tol = v;
        }
        if let Some(v) = self.gamma_tol {
            cfg.gamma_tol = v;
        }
        if let Some(v) = self.max_inner {
            cfg.max_inner_iters = v;
        }
        if let Some(v) = self.max_outer {
            cfg.max_outer_iters = v;
        }
        if self.s_approx {
            cfg.use_s_approx = true;
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Release noisy degrees and covariate totals.
    Release {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Estimate (beta, gamma) from released statistics.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        /// Released statistics JSON; otherwise they are computed from the network.
        #[arg(long)]
        released: Option<PathBuf>,
        /// Include V and H in the output.
        #[arg(long)]
        matrices: bool,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Run a Monte-Carlo design.
    Simulate {
        /// Design file (TOML or JSON).
        #[arg(long)]
        design: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        replications: Option<usize>,
        /// `logn_n16` or `logn_n14`; --epsilon overrides.
        #[arg(long, value_enum)]
        epsilon_rule: Option<RuleName>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Write the QQ plot data here.
        #[arg(long)]
        qq: Option<PathBuf>,
    },
    /// Standard errors, intervals and bias correction for a fit.
    Infer {
        #[command(flatten)]
        data: DataArgs,
        /// FitResult JSON.
        #[arg(long)]
        fit: PathBuf,
        /// 1-based contrasts as `i:j`, comma separated.
        #[arg(long, value_delimiter = ',')]
        pairs: Vec<String>,
        #[arg(long, value_enum, default_value_t = CorrectionArg::SecondOrder)]
        correction: CorrectionArg,
        #[arg(long, value_enum, default_value_t = VarianceArg::ProfiledInverse)]
        variance: VarianceArg,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Describe a network.
    Stats {
        #[command(flatten)]
        data: DataArgs,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum RuleName {
    #[value(name = "logn_n16")]
    LognN16,
    #[value(name = "logn_n14")]
    LognN14,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum CorrectionArg {
    SecondOrder,
    Literal,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum VarianceArg {
    ProfiledInverse,
    InformationScaled,
}

impl Common {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
    fn k(&self) -> u64 {
        self.k.unwrap_or(1)
    }
    fn level(&self) -> f64 {
        self.level.unwrap_or(0.95)
    }
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidBudget(_) | Error::InvalidParameter(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

enum Outcome {
    Done,
    NonExistent,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NonExistent) => ExitCode::from(3),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CliResult<Outcome> {
    let common = &cli.common;
    if !(common.level() > 0.0 && common.level() < 1.0) {
        return Err(Failure::Usage(format!("--level must be in (0, 1), got {}", common.level())));
    }
    if common.no_privacy && common.epsilon.is_some() {
        return Err(Failure::Usage("--no-privacy and --epsilon are mutually exclusive".into()));
    }
    match &cli.command {
        Command::Release { data } => cmd_release(common, data),
        Command::Fit { data, released, matrices, solver } => cmd_fit(common, data, released.as_deref(), *matrices, solver),
        Command::Simulate { design, n, c, replications, epsilon_rule, format, qq } => {
            let overrides = SimOverrides { n: *n, c: *c, replications: *replications, rule: *epsilon_rule };
            cmd_simulate(common, design.as_deref(), &overrides, *format, qq.as_deref())
        }
        Command::Infer { data, fit, pairs, correction, variance, format } => {
            cmd_infer(common, data, fit, pairs, *correction, *variance, *format)
        }
        Command::Stats { data } => {
            let loaded = load(data)?;
            emit(common, &json(&NetworkSummary::of(&loaded))?)?;
            Ok(Outcome::Done)
        }
    }
}

fn load(data: &DataArgs) -> CliResult<LoadedNetwork> {
    let rule = match (data.rule, &data.attrs) {
        (Some(RuleArg::Match), _) | (None, Some(_)) => CovariateRule::Match,
        (Some(RuleArg::Product), _) => CovariateRule::Product,
        (Some(RuleArg::None), _) | (None, None) => CovariateRule::None,
    };
    let spec = DatasetSpec {
        edge_file: data.edges.clone(),
        attr_file: data.attrs.clone(),
        covariate_rule: rule,
        drop_isolated: data.drop_isolated,
        zero_indexed: data.zero_indexed,
    };
    let loaded = load_network(&spec)?;
    if loaded.self_loops_dropped > 0 {
        eprintln!("warning: dropped {} self-loop(s)", loaded.self_loops_dropped);
    }
    if let Some(path) = &data.remap {
        write_file(path, &loaded.remap_csv())?;
    }
    Ok(loaded)
}

fn json<T: Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Failure::Data(format!("serialising output: {e}")))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn emit(common: &Common, text: &str) -> CliResult<()> {
    match &common.output {
        Some(path) => write_file(path, text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Data(format!("stdout: {e}"))),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn budget(common: &Common) -> CliResult<Option<PrivacyBudget>> {
    match common.epsilon {
        Some(eps) => Ok(Some(PrivacyBudget::new(eps, common.k())?)),
        None => Ok(None),
    }
}

fn cmd_release(common: &Common, data: &DataArgs) -> CliResult<Outcome> {
    let loaded = load(data)?;
    let stats = sufficient_stats(&loaded.network);
    let out = match budget(common)? {
        Some(b) => release(&stats, b, loaded.network.covariates().z_star(), common.seed())?,
        None if common.no_privacy => ReleasedStats::exact(&stats),
        None => return Err(Failure::Usage("release needs --epsilon or --no-privacy".into())),
    };
    emit(common, &json(&out)?)?;
    Ok(Outcome::Done)
}

fn cmd_fit(
    common: &Common,
    data: &DataArgs,
    released: Option<&Path>,
    matrices: bool,
    solver: &SolverArgs,
) -> CliResult<Outcome> {
    let loaded = load(data)?;
    let net = &loaded.network;
    let rel = match (released, common.no_privacy, budget(common)?) {
        (Some(_), true, _) | (Some(_), _, Some(_)) => {
            return Err(Failure::Usage("--released cannot be combined with --no-privacy or --epsilon".into()))
        }
        (Some(path), false, None) => serde_json::from_str::<ReleasedStats>(&read_text(path)?)
            .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?,
        (None, true, None) => ReleasedStats::exact(&sufficient_stats(net)),
        (None, false, Some(b)) => release(&sufficient_stats(net), b, net.covariates().z_star(), common.seed())?,
        (None, false, None) => {
            return Err(Failure::Usage("fit needs --released, --epsilon or --no-privacy".into()))
        }
        (None, true, Some(_)) => unreachable!("rejected earlier"),
    };
    let mut cfg = FitConfig::default();
    solver.apply(&mut cfg);
    let result = fit(&rel, net.covariates(), &cfg)?;
    let exists = result.exists;
    let result = if matrices { result } else { result.without_matrices() };
    emit(common, &json(&result)?)?;
    if let Some(reason) = &result.failure {
        eprintln!("estimate does not exist: {reason}");
    }
    Ok(if exists { Outcome::Done } else { Outcome::NonExistent })
}

struct SimOverrides {
    n: Option<usize>,
    c: Option<f64>,
    replications: Option<usize>,
    rule: Option<RuleName>,
}

fn parse_design(path: &Path) -> CliResult<SimDesign> {
    let text = read_text(path)?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
    }
}

fn cmd_simulate(
    common: &Common,
    design: Option<&Path>,
    o: &SimOverrides,
    format: Format,
    qq: Option<&Path>,
) -> CliResult<Outcome> {
    let mut d = match design {
        Some(path) => parse_design(path)?,
        None => {
            let (Some(n), Some(c), Some(r)) = (o.n, o.c, o.replications) else {
                return Err(Failure::Usage("simulate needs --design or all of --n, --c, --replications".into()));
            };
            SimDesign::new(n, c, EpsilonRule::LognN16, r, 0)
        }
    };
    if let Some(n) = o.n {
        d.n = n;
    }
    if let Some(c) = o.c {
        d.c = c;
    }
    if let Some(r) = o.replications {
        d.replications = r;
    }
    match o.rule {
        Some(RuleName::LognN16) => d.epsilon_rule = EpsilonRule::LognN16,
        Some(RuleName::LognN14) => d.epsilon_rule = EpsilonRule::LognN14,
        None => {}
    }
    if let Some(e) = common.epsilon {
        d.epsilon_rule = EpsilonRule::Custom(e);
    }
    if common.no_privacy {
        d.epsilon_rule = EpsilonRule::NoPrivacy;
    }
    if let Some(seed) = common.seed {
        d.seed = seed;
    }
    if let Some(k) = common.k {
        d.k = k;
    }
    if let Some(level) = common.level {
        d.level = level;
    }
    let table = run_design(&d, common.threads.unwrap_or(0))?;
    let text = match format {
        Format::Json => json(&table)?,
        Format::Csv => table.to_csv(),
    };
    emit(common, &text)?;
    if let Some(path) = qq {
        write_file(path, &table.qq_csv())?;
    }
    Ok(Outcome::Done)
}

fn parse_pair(s: &str, n: usize) -> CliResult<(usize, usize)> {
    let bad = || Failure::Usage(format!("pair '{s}' must look like i:j with 1 <= i, j <= {n}"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let i: usize = a.trim().parse().map_err(|_| bad())?;
    let j: usize = b.trim().parse().map_err(|_| bad())?;
    if i == 0 || j == 0 || i > n || j > n || i == j {
        return Err(bad());
    }
    Ok((i - 1, j - 1))
}

fn cmd_infer(
    common: &Common,
    data: &DataArgs,
    fit_path: &Path,
    pairs: &[String],
    correction: CorrectionArg,
    variance: VarianceArg,
    format: Format,
) -> CliResult<Outcome> {
    let loaded = load(data)?;
    let f: FitResult = serde_json::from_str(&read_text(fit_path)?)
        .map_err(|e| Failure::Data(format!("{}: {e}", fit_path.display())))?;
    if !f.exists {
        return Err(Failure::Data("the fit did not produce an estimate".into()));
    }
    let n = loaded.network.n();
    if f.beta_hat.len() != n || f.gamma_hat.len() != loaded.network.p() {
        return Err(Failure::Data(format!(
            "fit has {} beta and {} gamma entries but the network has n = {}, p = {}",
            f.beta_hat.len(),
            f.gamma_hat.len(),
            n,
            loaded.network.p()
        )));
    }
    let opts = InferenceOptions {
        level: common.level(),
        pairs: pairs.iter().map(|s| parse_pair(s, n)).collect::<CliResult<_>>()?,
        correction: match correction {
            CorrectionArg::SecondOrder => BiasCorrection::SecondOrder,
            CorrectionArg::Literal => BiasCorrection::Literal,
        },
        variance: match variance {
            VarianceArg::ProfiledInverse => GammaVariance::ProfiledInverse,
            VarianceArg::InformationScaled => GammaVariance::InformationScaled,
        },
    };
    let report = InferenceReport::build(&f, loaded.network.covariates(), &opts)?;
    let text = match format {
        Format::Json => json(&report)?,
        Format::Csv => report.to_csv(),
    };
    emit(common, &text)?;
    Ok(Outcome::Done)
}
