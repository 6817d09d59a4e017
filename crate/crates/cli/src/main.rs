mod config;
mod validate;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use affine_rfr::fourier_pricing::{price_option, price_strike_ladder, OptionKind, OptionSpec, OptionStyle, PriceResult};
use affine_rfr::futures::{
    futures_1m_ode, futures_1m_transform, futures_3m, futures_strip, write_strip_csv, FuturesKind, FuturesSpec,
};
use affine_rfr::fwd_measure_pricing::{price_caplet_by_distribution, price_caplet_gaussian, InversionConfig};
use affine_rfr::mc_oracle::{compounding_gap, daily_times, mc_price, simulate, McPayoff};
use affine_rfr::{MarketState, PricingError};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use config::{Session, SessionConfig};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Pricing(PricingError),
    ValidationFailed(usize),
}

impl From<PricingError> for CliError {
    fn from(e: PricingError) -> Self {
        CliError::Pricing(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::ValidationFailed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Pricing(e) => match e {
                PricingError::DomainViolation(_) | PricingError::NoStrip(_) => 3,
                PricingError::QuadratureFailure(_) | PricingError::InversionFailure(_) => 4,
                _ => 2,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Config(m) => format!("config error: {m}"),
            CliError::Pricing(e) => e.to_string(),
            CliError::ValidationFailed(n) => format!("{n} validation checks failed"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Json,
    Csv,
}

#[derive(Parser)]
#[command(name = "rfr", version, about = "RFR caplets, floorlets and futures under affine short-rate models")]
struct Cli {
    /// Session config (JSON with keys model, curve, x0, quadrature, mc).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    out: OutFormat,
    /// Relative tolerance of the pricing quadrature.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Monte Carlo seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Style {
    Forward,
    Backward,
    TermBasis,
}

impl From<Style> for OptionStyle {
    fn from(s: Style) -> Self {
        match s {
            Style::Forward => OptionStyle::ForwardLooking,
            Style::Backward => OptionStyle::BackwardLooking,
            Style::TermBasis => OptionStyle::TermBasis,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Caplet,
    Floorlet,
}

impl From<Kind> for OptionKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Caplet => OptionKind::Caplet,
            Kind::Floorlet => OptionKind::Floorlet,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PriceRoute {
    Fourier,
    Distribution,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FuturesRoute {
    Transform,
    Ode,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ContractKind {
    #[value(name = "1M")]
    OneMonth,
    #[value(name = "3M")]
    ThreeMonth,
}

impl From<ContractKind> for FuturesKind {
    fn from(k: ContractKind) -> Self {
        match k {
            ContractKind::OneMonth => FuturesKind::OneMonth,
            ContractKind::ThreeMonth => FuturesKind::ThreeMonth,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct TradeArgs {
    #[arg(long, value_enum, default_value = "backward")]
    style: Style,
    #[arg(long, value_enum, default_value = "caplet")]
    kind: Kind,
    /// Accrual start S in years.
    #[arg(long)]
    start: f64,
    /// Accrual end T in years.
    #[arg(long)]
    end: f64,
    /// Strike K (ignored for term-basis options).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    strike: f64,
    /// Credit adjustment spread c; the payoff uses the strike K - c.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    isda_spread: f64,
}

impl TradeArgs {
    fn spec(&self) -> OptionSpec {
        let k = if self.style == Style::TermBasis { 0.0 } else { self.strike };
        OptionSpec::new(self.style.into(), self.kind.into(), self.start, self.end, k).with_spread(self.isda_spread)
    }
}

#[derive(Args, Debug, Clone)]
struct StateArgs {
    /// Valuation time t.
    #[arg(long, default_value_t = 0.0)]
    at: f64,
    /// Factor state at t, comma separated (defaults to the config's x0).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    state: Option<Vec<f64>>,
    /// Realized accrual factor B_t/B_S for valuation inside the accrual period.
    #[arg(long)]
    accrual_factor: Option<f64>,
}

impl StateArgs {
    fn market_state(&self, session: &Session) -> MarketState {
        let mut st = MarketState::new(self.at, self.state.clone().unwrap_or_else(|| session.x0.clone()));
        if let Some(a) = self.accrual_factor {
            st = st.with_accrual(a);
        }
        st
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum McKind {
    Option,
    Futures,
    Zcb,
    Gap,
}

#[derive(Subcommand)]
enum Command {
    /// Price a caplet or floorlet.
    Price {
        #[command(flatten)]
        trade: TradeArgs,
        #[command(flatten)]
        state: StateArgs,
        #[arg(long, value_enum, default_value = "fourier")]
        route: PriceRoute,
        /// Damping parameter; chosen from the probed strip when omitted.
        #[arg(long, allow_negative_numbers = true)]
        w: Option<f64>,
        /// Strike ladder `a:b:n`, n strikes from a to b on shared nodes.
        #[arg(long)]
        strike_ladder: Option<String>,
    },
    /// Futures rate for a reference window, or a strip of consecutive windows.
    Futures {
        #[arg(long, value_enum)]
        kind: ContractKind,
        /// Reference window start S.
        #[arg(long)]
        start: f64,
        /// Reference window end T.
        #[arg(long)]
        end: f64,
        #[command(flatten)]
        state: StateArgs,
        /// Route for 1M contracts.
        #[arg(long, value_enum, default_value = "transform")]
        route: FuturesRoute,
        /// Also report the price quote 100 (1 - rate).
        #[arg(long)]
        quote: bool,
        /// Number of consecutive windows of length end - start.
        #[arg(long)]
        strip: Option<usize>,
    },
    /// Fit the deterministic shift to discount factors and report the round trip.
    CurveFit {
        /// Discount file; defaults to the config's `curve.discount_file`.
        #[arg(long)]
        discounts: Option<PathBuf>,
    },
    /// Run a property suite on the configured model.
    Validate {
        #[arg(long, value_enum)]
        suite: validate::Suite,
    },
    /// Monte Carlo estimate of a payoff.
    Mc {
        #[arg(long, value_enum, default_value = "option")]
        payoff: McKind,
        #[arg(long, value_enum, default_value = "backward")]
        style: Style,
        #[arg(long, value_enum, default_value = "caplet")]
        kind: Kind,
        #[arg(long, value_enum, default_value = "3M")]
        contract: ContractKind,
        /// Window start S.
        #[arg(long)]
        start: f64,
        /// Window end T.
        #[arg(long)]
        end: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        strike: f64,
        /// Paths; defaults to the config value.
        #[arg(long)]
        paths: Option<usize>,
        /// Euler steps per year; defaults to the config value.
        #[arg(long)]
        steps_per_year: Option<usize>,
        /// Pair each path with its mirrored noise.
        #[arg(long)]
        antithetic: bool,
        /// Observation step of the daily-compounding gap.
        #[arg(long, default_value_t = 1.0 / 252.0)]
        day_step: f64,
        /// Write the simulated ensemble to this file.
        #[arg(long)]
        save: Option<PathBuf>,
    },
}

fn parse_ladder(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Config(format!("strike ladder `{s}` is not of the form a:b:n"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].parse().map_err(|_| bad())?;
    let b: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    match n {
        0 => Err(bad()),
        1 => Ok(vec![a]),
        _ => Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()),
    }
}

/// JSON objects, one per line, or CSV with a header taken from the first row.
fn emit(format: OutFormat, rows: &[Value]) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match format {
        OutFormat::Json => {
            for r in rows {
                writeln!(out, "{r}")?;
            }
        }
        OutFormat::Csv => {
            let Some(Value::Object(first)) = rows.first() else {
                return Ok(());
            };
            let keys: Vec<&String> = first.keys().collect();
            let mut wr = csv::Writer::from_writer(out);
            wr.write_record(keys.iter().map(|k| k.as_str())).map_err(|e| CliError::Config(e.to_string()))?;
            for r in rows {
                let rec: Vec<String> = keys
                    .iter()
                    .map(|k| match &r[k.as_str()] {
                        Value::String(s) => s.clone(),
                        Value::Null => String::new(),
                        v => v.to_string(),
                    })
                    .collect();
                wr.write_record(&rec).map_err(|e| CliError::Config(e.to_string()))?;
            }
            wr.flush()?;
        }
    }
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable output")
}

fn price_row(spec: &OptionSpec, route: &str, r: &PriceResult) -> Value {
    let mut row = json!({
        "style": spec.style,
        "kind": spec.kind,
        "S": spec.s,
        "T": spec.t,
        "K": spec.strike,
        "spread": spec.spread,
        "route": route,
    });
    if let (Value::Object(m), Value::Object(extra)) = (&mut row, to_value(r)) {
        m.extend(extra);
    }
    row
}

fn route_name(r: PriceRoute) -> &'static str {
    match r {
        PriceRoute::Fourier => "fourier",
        PriceRoute::Distribution => "distribution",
        PriceRoute::Gaussian => "gaussian",
    }
}

fn cmd_price(
    session: &Session,
    trade: &TradeArgs,
    state: &StateArgs,
    route: PriceRoute,
    w: Option<f64>,
    ladder: Option<&str>,
    out: OutFormat,
) -> Result<(), CliError> {
    let spec = trade.spec();
    let st = state.market_state(session);
    let rows = match (ladder, route) {
        (Some(l), PriceRoute::Fourier) => {
            let strikes = parse_ladder(l)?;
            let res = price_strike_ladder(&session.ctx, &st, &spec, &strikes, w, &session.quad)?;
            strikes
                .iter()
                .zip(&res)
                .map(|(&k, r)| price_row(&OptionSpec { strike: k, ..spec }, "fourier", r))
                .collect()
        }
        (Some(_), _) => return Err(CliError::Config("--strike-ladder needs the fourier route".into())),
        (None, PriceRoute::Fourier) => vec![price_row(&spec, "fourier", &price_option(&session.ctx, &st, &spec, w, &session.quad)?)],
        (None, PriceRoute::Distribution) => {
            let cfg = InversionConfig {
                quad: session.quad,
                ..InversionConfig::default()
            };
            vec![price_row(&spec, route_name(route), &price_caplet_by_distribution(&session.ctx, &st, &spec, &cfg)?)]
        }
        (None, PriceRoute::Gaussian) => {
            vec![price_row(&spec, route_name(route), &price_caplet_gaussian(&session.ctx, &st, &spec)?)]
        }
    };
    emit(out, &rows)
}

#[allow(clippy::too_many_arguments)]
fn cmd_futures(
    session: &Session,
    kind: ContractKind,
    start: f64,
    end: f64,
    state: &StateArgs,
    route: FuturesRoute,
    quote: bool,
    strip: Option<usize>,
    out: OutFormat,
) -> Result<(), CliError> {
    let st = state.market_state(session);
    let ctx = &session.ctx;
    if let Some(n) = strip {
        let len = end - start;
        let specs: Vec<FuturesSpec> = (0..n)
            .map(|k| FuturesSpec::new(kind.into(), start + k as f64 * len, start + (k + 1) as f64 * len))
            .collect();
        let rows = futures_strip(ctx, &st, &specs)?;
        return match out {
            OutFormat::Csv => {
                write_strip_csv(std::io::stdout().lock(), &rows)?;
                Ok(())
            }
            OutFormat::Json => emit(out, &rows.iter().map(to_value).collect::<Vec<_>>()),
        };
    }
    let label = FuturesKind::from(kind).label();
    let mut row = json!({ "kind": label, "t": st.t, "S": start, "T": end });
    let mut rates = Vec::new();
    match (kind, route) {
        (ContractKind::ThreeMonth, FuturesRoute::Transform | FuturesRoute::Both) => {
            rates.push(("rate", futures_3m(ctx, &st, start, end)?));
        }
        (ContractKind::ThreeMonth, FuturesRoute::Ode) => {
            return Err(CliError::Config("the ode route covers 1M contracts only".into()));
        }
        (ContractKind::OneMonth, FuturesRoute::Transform) => {
            rates.push(("rate", futures_1m_transform(ctx, &st, start, end)?));
        }
        (ContractKind::OneMonth, FuturesRoute::Ode) => {
            rates.push(("rate", futures_1m_ode(ctx, &st, start, end)?));
        }
        (ContractKind::OneMonth, FuturesRoute::Both) => {
            let a = futures_1m_transform(ctx, &st, start, end)?;
            let b = futures_1m_ode(ctx, &st, start, end)?;
            rates.push(("rate", a));
            rates.push(("rate_ode", b));
            rates.push(("route_gap", (a - b).abs()));
        }
    }
    for (k, v) in &rates {
        row[*k] = json!(v);
    }
    if quote {
        row["quote"] = json!(100.0 * (1.0 - rates[0].1));
    }
    emit(out, &[row])
}

fn cmd_curve_fit(session: &Session, cfg: &SessionConfig, discounts: Option<&PathBuf>, out: OutFormat) -> Result<(), CliError> {
    let (curve, market) = match discounts {
        Some(p) => {
            let market = affine_rfr::transform::read_discount_file(p).map_err(|e| CliError::Config(e.to_string()))?;
            (affine_rfr::fit_ell(&session.ctx.model, &session.x0, &market)?, market)
        }
        None => match (&session.market, cfg.curve.discount_file.is_some()) {
            (Some(m), true) => (session.ctx.curve.clone(), m.clone()),
            _ => return Err(CliError::Config("curve-fit needs --discounts or curve.discount_file".into())),
        },
    };
    let ctx = affine_rfr::PricingContext::with_tol(session.ctx.model.clone(), curve.clone(), session.ctx.tol);
    let st = MarketState::new(0.0, session.x0.clone());
    let mut rows = Vec::with_capacity(market.len());
    for (k, &(t, p)) in market.iter().enumerate() {
        let fitted = ctx.zcb_price(&st, t)?;
        rows.push(json!({
            "knot_start": curve.knots[k],
            "knot_end": curve.knots[k + 1],
            "ell": curve.ell[k],
            "market_discount": p,
            "model_discount": fitted,
            "rel_error": (fitted - p).abs() / p,
        }));
    }
    emit(out, &rows)
}

#[allow(clippy::too_many_arguments)]
fn cmd_mc(
    session: &Session,
    payoff: McKind,
    style: Style,
    kind: Kind,
    contract: ContractKind,
    start: f64,
    end: f64,
    strike: f64,
    day_step: f64,
    save: Option<&PathBuf>,
    out: OutFormat,
) -> Result<(), CliError> {
    let ctx = &session.ctx;
    let x0 = &session.x0;
    let st = MarketState::new(0.0, x0.clone());
    let obs: Vec<f64> = match payoff {
        McKind::Zcb => vec![end],
        McKind::Gap => daily_times(start, end, day_step),
        _ => vec![start, end],
    };
    let obs: Vec<f64> = obs.into_iter().filter(|&t| t > 0.0).collect();
    let ens = simulate(&ctx.model, x0, 0.0, &obs, &session.mc)?;
    if let Some(path) = save {
        let f = std::fs::File::create(path)?;
        ens.write_binary(std::io::BufWriter::new(f))?;
    }
    let row = match payoff {
        McKind::Gap => to_value(&compounding_gap(&ens, ctx, x0, start, end, day_step)?),
        McKind::Option | McKind::Futures | McKind::Zcb => {
            let (p, reference) = match payoff {
                McKind::Option => {
                    let spec = TradeArgs {
                        style,
                        kind,
                        start,
                        end,
                        strike,
                        isda_spread: 0.0,
                    }
                    .spec();
                    let r = price_option(ctx, &st, &spec, None, &session.quad)?.price;
                    (McPayoff::Option(spec), r)
                }
                McKind::Futures => {
                    let spec = FuturesSpec::new(contract.into(), start, end);
                    let r = affine_rfr::futures::futures_rate(ctx, &st, &spec)?;
                    (McPayoff::Futures(spec), r)
                }
                _ => (McPayoff::ZeroBond(end), ctx.zcb_price(&st, end)?),
            };
            let est = mc_price(&ens, ctx, x0, &p)?;
            let z = if est.stderr > 0.0 { (est.value - reference) / est.stderr } else { 0.0 };
            let mut row = to_value(&est);
            row["reference"] = json!(reference);
            row["z"] = json!(z);
            row["seed"] = json!(session.mc.seed);
            row
        }
    };
    emit(out, &[row])
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot set up {n} threads: {e}")))?;
    }
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = SessionConfig::load(path)?;
    let mut session = cfg.clone().into_session()?;
    if let Some(tol) = cli.tol {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(CliError::Config(format!("--tol must lie in (0, 1), got {tol}")));
        }
        session.quad = session.quad.with_rel_tol(tol);
    }
    if let Some(seed) = cli.seed {
        session.mc.seed = seed;
    }
    match &cli.command {
        Command::Price {
            trade,
            state,
            route,
            w,
            strike_ladder,
        } => cmd_price(&session, trade, state, *route, *w, strike_ladder.as_deref(), cli.out),
        Command::Futures {
            kind,
            start,
            end,
            state,
            route,
            quote,
            strip,
        } => cmd_futures(&session, *kind, *start, *end, state, *route, *quote, *strip, cli.out),
        Command::CurveFit { discounts } => cmd_curve_fit(&session, &cfg, discounts.as_ref(), cli.out),
        Command::Validate { suite } => {
            let checks = validate::run_suite(&session, *suite)?;
            let rows: Vec<Value> = checks.iter().map(to_value).collect();
            emit(cli.out, &rows)?;
            let failed = checks.iter().filter(|c| !c.pass).count();
            if failed > 0 {
                Err(CliError::ValidationFailed(failed))
            } else {
                Ok(())
            }
        }
        Command::Mc {
            payoff,
            style,
            kind,
            contract,
            start,
            end,
            strike,
            paths,
            steps_per_year,
            antithetic,
            day_step,
            save,
        } => {
            if let Some(n) = paths {
                session.mc.n_paths = *n;
            }
            if let Some(n) = steps_per_year {
                session.mc.steps_per_year = *n;
            }
            session.mc.antithetic |= *antithetic;
            cmd_mc(&session, *payoff, *style, *kind, *contract, *start, *end, *strike, *day_step, save.as_ref(), cli.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
