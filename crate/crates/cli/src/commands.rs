use std::path::Path;

use clap::Args;
use qsd_core::converse::{certify_converse, hypothesis_check, ConverseLimits};
use qsd_core::ergodic::{envelope_minimizer, optimal_t0, verify_ergodic_theorem, verify_general_bound, PlanSpec, SamplingPlan};
use qsd_core::estimator::{estimate_beta, loglog_slope, predict_tradeoff, simulate, sweep_error_vs_n, Budget, SweepRow};
use qsd_core::io::{parse_grid, parse_kernel, parse_vector, write_kernel};
use qsd_core::models::{build, condition_quality, truncation_sweep};
use qsd_core::qprocess::{
    build_q_kernel, conditioned_tv_report, q_mixing_report, verify_eta_bound, verify_qproc_approx, QKernel, Rates,
};
use qsd_core::spectral::certify_minorization;
use qsd_core::{compute_spectral, Error, ModelKind, ModelSpec, SpectralOptions, SpectralTriple, SubStochasticKernel};
use serde::de::value::{Error as ValueError, StrDeserializer};
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::config::LoadedConfig;
use crate::output::{bound_report_csv, comment, csv_row, ff, sha256_hex, Artifacts};

#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or input files.
    Usage(String),
    Runtime(String),
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn rt(e: Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

/// What a command hands back besides its files.
#[derive(Default)]
pub struct Report {
    pub results: Map<String, Value>,
    pub summary: Vec<String>,
    /// Set when a certificate or verification failed.
    pub refused: Option<String>,
}

impl Report {
    fn put(&mut self, key: &str, value: impl Into<Value>) {
        self.results.insert(key.to_string(), value.into());
    }

    fn put_f(&mut self, key: &str, value: f64) {
        // JSON has no inf or nan
        self.put(key, ff(value));
    }

    fn refuse(&mut self, reason: String) {
        match &mut self.refused {
            Some(r) => {
                r.push_str("; ");
                r.push_str(&reason);
            }
            None => self.refused = Some(reason),
        }
    }
}

pub struct Context {
    pub kernel: SubStochasticKernel,
    kernel_sha256: String,
    pub config: LoadedConfig,
    pub seed: u64,
    pub artifacts: Artifacts,
}

impl Context {
    pub fn load(kernel: Option<&Path>, config: &LoadedConfig, seed: u64, out: &Path) -> Result<Self, Failure> {
        let kernel = match (kernel, &config.config.kernel, &config.config.model) {
            (Some(path), _, _) => read_kernel(path)?,
            (None, Some(path), _) => read_kernel(&config.resolve(path))?,
            (None, None, Some(spec)) => build(spec).map_err(usage)?,
            (None, None, None) => {
                return Err(Failure::Usage("no kernel: pass --kernel, or a config with `kernel` or [model]".into()))
            }
        };
        Self::new(kernel, config, seed, out)
    }

    fn new(kernel: SubStochasticKernel, config: &LoadedConfig, seed: u64, out: &Path) -> Result<Self, Failure> {
        Ok(Context {
            kernel_sha256: sha256_hex(write_kernel(&kernel).as_bytes()),
            kernel,
            config: config.clone(),
            seed,
            artifacts: Artifacts::create(out)?,
        })
    }

    fn spectral(&self) -> Result<SpectralTriple, Failure> {
        let section = &self.config.config.spectral;
        let defaults = SpectralOptions::default();
        let options = SpectralOptions {
            tol: section.tol.unwrap_or(defaults.tol),
            max_iters: section.max_iters.unwrap_or(defaults.max_iters),
        };
        compute_spectral(&self.kernel, options).map_err(rt)
    }

    fn q_process(&self) -> Result<(SpectralTriple, QKernel), Failure> {
        let s = self.spectral()?;
        let q = build_q_kernel(&self.kernel, &s).map_err(rt)?;
        Ok((s, q))
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        Ok(self.artifacts.write(name, contents)?)
    }

    pub fn finish(self, command: &str, results: Map<String, Value>) -> Result<(), Failure> {
        let config_sha256 = sha256_hex(self.config.text.as_bytes());
        Ok(self.artifacts.finish(command, self.seed, &config_sha256, &self.kernel_sha256, results)?)
    }
}

fn read_kernel(path: &Path) -> Result<SubStochasticKernel, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    parse_kernel(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn grid(flag: &Option<String>, config: &Option<String>, default: &str, what: &str) -> Result<Vec<usize>, Failure> {
    let text = flag.as_deref().or(config.as_deref()).unwrap_or(default);
    parse_grid(text).map_err(|e| Failure::Usage(format!("{what}: {e}")))
}

/// `f` from a flag, then the config, else the indicator of the last state.
fn f_vector(flag: &Option<String>, config: &Option<Vec<f64>>, n: usize) -> Result<Vec<f64>, Failure> {
    let f = match (flag, config) {
        (Some(text), _) => parse_vector(text).map_err(|e| Failure::Usage(format!("--f: {e}")))?,
        (None, Some(v)) => v.clone(),
        (None, None) => indicator(n, n - 1),
    };
    if f.len() != n {
        return Err(Failure::Usage(format!("f has {} entries, the kernel has {n} states", f.len())));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Failure::Usage("f has non-finite entries".into()));
    }
    Ok(f)
}

fn indicator(n: usize, i: usize) -> Vec<f64> {
    let mut f = vec![0.0; n];
    f[i] = 1.0;
    f
}

fn start_state(x0: usize, n: usize) -> Result<usize, Failure> {
    if x0 >= n {
        return Err(Failure::Usage(format!("x0 = {x0} is not a state of a {n}-state kernel")));
    }
    Ok(x0)
}

#[derive(Args)]
pub struct ModelArgs {
    /// birth_death, logistic_bd, random_substochastic, linear_bd_truncated or ou_discretized.
    #[arg(long)]
    pub kind: Option<String>,
    /// Number of survivor states.
    #[arg(long)]
    pub n: Option<usize>,
    /// Parameter override, repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    /// Largest t0 in the c1 table [default: 10].
    #[arg(long)]
    pub t0_max: Option<usize>,
    /// Truncation sizes for the c1 trend table, e.g. `10,20,40`.
    #[arg(long)]
    pub sizes: Option<String>,
}

fn model_spec(args: &ModelArgs, config: &LoadedConfig, seed: Option<u64>) -> Result<ModelSpec, Failure> {
    let kind = match &args.kind {
        Some(k) => Some(
            ModelKind::deserialize(StrDeserializer::<ValueError>::new(k)).map_err(|e| Failure::Usage(format!("--kind: {e}")))?,
        ),
        None => None,
    };
    let mut spec = match (&config.config.model, kind, args.n) {
        (Some(spec), _, _) => spec.clone(),
        (None, Some(kind), Some(n)) => ModelSpec::new(kind, n),
        _ => return Err(Failure::Usage("model needs --kind and --n, or a [model] table in the config".into())),
    };
    if let Some(kind) = kind {
        spec.kind = kind;
    }
    if let Some(n) = args.n {
        spec.n = n;
    }
    if seed.is_some() {
        spec.seed = seed;
    }
    for p in &args.params {
        let (name, value) = p.split_once('=').ok_or_else(|| Failure::Usage(format!("--param `{p}` is not NAME=VALUE")))?;
        let value: f64 = value.trim().parse().map_err(|_| Failure::Usage(format!("--param `{p}`: not a number")))?;
        spec.params.insert(name.trim().to_string(), value);
    }
    Ok(spec)
}

pub fn model_context(
    args: &ModelArgs,
    config: &LoadedConfig,
    seed: Option<u64>,
    out: &Path,
) -> Result<(Context, ModelSpec), Failure> {
    let spec = model_spec(args, config, seed.or(config.config.seed))?;
    let kernel = build(&spec).map_err(usage)?;
    Ok((Context::new(kernel, config, spec.seed.unwrap_or(0), out)?, spec))
}

pub fn model(ctx: &mut Context, args: &ModelArgs, spec: &ModelSpec) -> Result<Report, Failure> {
    let section = ctx.config.config.condition.clone();
    let t0_max = args.t0_max.or(section.t0_max).unwrap_or(10);
    if t0_max == 0 {
        return Err(Failure::Usage("t0_max must be at least 1".into()));
    }
    let mut report = Report::default();
    let kernel_text = write_kernel(&ctx.kernel);
    ctx.write("model.kernel", &kernel_text)?;
    ctx.write("model.toml", &spec.to_toml_string())?;

    let quality = condition_quality(&ctx.kernel, t0_max).map_err(rt)?;
    let mut csv = String::from("t0,c1\n");
    for (t0, c1) in &quality {
        csv.push_str(&csv_row(&[t0.to_string(), ff(*c1)]));
    }
    ctx.write("condition.csv", &csv)?;
    let best = quality.iter().fold(0.0f64, |m, r| m.max(r.1));
    report.put_f("best_c1", best);
    report.summary.push(format!("n = {}, best c1 over t0 <= {t0_max}: {}", ctx.kernel.n(), ff(best)));

    if let Some(sizes) = args.sizes.as_ref().or(section.sizes.as_ref()) {
        let sizes = parse_grid(sizes).map_err(|e| Failure::Usage(format!("sizes: {e}")))?;
        let rows = truncation_sweep(spec, &sizes, t0_max).map_err(usage)?;
        let mut csv = String::from("n,t0,c1\n");
        for r in &rows {
            csv.push_str(&csv_row(&[r.n.to_string(), r.t0.to_string(), ff(r.c1)]));
        }
        ctx.write("truncation.csv", &csv)?;
    }
    Ok(report)
}

#[derive(Args)]
pub struct SpectralArgs {
    /// Convergence tolerance of the power iteration [default: 1e-12].
    #[arg(long)]
    pub tol: Option<f64>,
    /// Iteration cap [default: 1000000].
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// First t0 tried by the minorization certificate [default: 1].
    #[arg(long)]
    pub t0: Option<usize>,
}

pub fn spectral(ctx: &mut Context, args: &SpectralArgs) -> Result<Report, Failure> {
    if let Some(tol) = args.tol {
        ctx.config.config.spectral.tol = Some(tol);
    }
    if let Some(m) = args.max_iters {
        ctx.config.config.spectral.max_iters = Some(m);
    }
    let s = ctx.spectral()?;
    let k = &ctx.kernel;
    let mut csv = comment(&[
        ("rho", ff(s.rho)),
        ("lambda0_per_step", ff(s.lambda0())),
        ("lambda0_per_time", ff(s.lambda0_physical(k.time_unit()))),
        ("residual", ff(s.residual)),
    ]);
    csv.push_str("state,alpha,eta,beta\n");
    for x in 0..k.n() {
        csv.push_str(&csv_row(&[x.to_string(), ff(s.alpha.weights()[x]), ff(s.eta[x]), ff(s.beta.weights()[x])]));
    }
    let mut report = Report::default();
    report.put_f("rho", s.rho);
    report.put_f("lambda0", s.lambda0());
    report.summary.push(format!("rho = {}, lambda0 = {}", ff(s.rho), ff(s.lambda0())));

    let t0 = args.t0.or(ctx.config.config.spectral.t0).unwrap_or(1);
    if t0 == 0 {
        return Err(Failure::Usage("t0 must be at least 1".into()));
    }
    let cert = certify_minorization(k, &s, t0, None);
    ctx.write("spectral.csv", &csv)?;
    match cert {
        Ok(c) => {
            let mut csv = comment(&[
                ("t0", c.t0.to_string()),
                ("c1", ff(c.c1)),
                ("c2", ff(c.c2)),
                ("probed_c2", ff(c.probed_c2)),
                ("tail_c2", ff(c.tail_c2)),
                ("horizon", c.horizon.to_string()),
            ]);
            csv.push_str("state,nu\n");
            for (x, w) in c.nu.weights().iter().enumerate() {
                csv.push_str(&csv_row(&[x.to_string(), ff(*w)]));
            }
            ctx.write("minorization.csv", &csv)?;
            report.put("t0", c.t0);
            report.put_f("c1", c.c1);
            report.put_f("c2", c.c2);
            report.summary.push(format!("minorization: t0 = {}, c1 = {}, c2 = {}", c.t0, ff(c.c1), ff(c.c2)));
        }
        Err(e @ Error::ConditionNotSatisfied { .. }) => report.refuse(e.to_string()),
        Err(e) => return Err(rt(e)),
    }
    Ok(report)
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Times for the eta and decay reports [default: 1..200].
    #[arg(long)]
    pub t_grid: Option<String>,
    /// Largest t in the Q-process approximation grid [default: 10].
    #[arg(long)]
    pub t_max: Option<usize>,
    /// Largest T - t in the Q-process approximation grid [default: 50].
    #[arg(long)]
    pub gap_max: Option<usize>,
}

pub fn verify(ctx: &mut Context, args: &VerifyArgs) -> Result<Report, Failure> {
    let section = ctx.config.config.verify.clone();
    let t_grid = grid(&args.t_grid, &section.t_grid, "1..200", "t_grid")?;
    let t_max = args.t_max.or(section.t_max).unwrap_or(10);
    let gap_max = args.gap_max.or(section.gap_max).unwrap_or(50);
    let (s, q) = ctx.q_process()?;
    let k = &ctx.kernel;
    let pairs: Vec<(usize, usize)> = (0..=t_max).flat_map(|t| (0..=gap_max).map(move |g| (t, t + g))).collect();
    let reports = [
        ("a1.csv", verify_eta_bound(k, &s, &t_grid).map_err(rt)?),
        ("a2.csv", verify_qproc_approx(k, &s, &q, &pairs).map_err(rt)?),
        ("c.csv", conditioned_tv_report(k, &s, &t_grid).map_err(rt)?),
        ("c_prime.csv", q_mixing_report(&q, &t_grid).map_err(rt)?),
    ];
    let mut report = Report::default();
    for (file, r) in &reports {
        ctx.write(file, &bound_report_csv(r))?;
        report.put_f(r.name, r.constant);
        report.put(&format!("{}_holds", r.name), r.holds());
        report.summary.push(format!(
            "{}: constant = {}, rate = {}, max violation = {}, {}",
            r.name,
            ff(r.constant),
            ff(r.rate),
            ff(r.max_violation),
            if r.holds() { "holds" } else { "FAILS" }
        ));
        if !r.holds() {
            report.refuse(format!("bound {} does not hold on the validation points", r.name));
        }
    }
    report.put_f("gamma", reports[0].1.rate);
    report.put_f("gamma_prime", reports[3].1.rate);
    Ok(report)
}

#[derive(Args)]
pub struct ErgodicArgs {
    /// Observable, comma separated; default: every coordinate indicator.
    #[arg(long)]
    pub f: Option<String>,
    /// Horizons for the 1/T ergodic bound [default: 10..200].
    #[arg(long)]
    pub horizon_grid: Option<String>,
    /// Horizon whose point-mass plans fit the plan-bound constant [default: 60].
    #[arg(long)]
    pub fit_horizon: Option<usize>,
    /// Horizon of the validation plans [default: 80].
    #[arg(long)]
    pub validation_horizon: Option<usize>,
}

pub fn ergodic(ctx: &mut Context, args: &ErgodicArgs) -> Result<Report, Failure> {
    let section = ctx.config.config.ergodic.clone();
    let n = ctx.kernel.n();
    let fs: Vec<(String, Vec<f64>)> = if args.f.is_some() || section.f.is_some() {
        vec![(String::new(), f_vector(&args.f, &section.f, n)?)]
    } else {
        (0..n).map(|i| (format!("_f{i}"), indicator(n, i))).collect()
    };
    let horizons = grid(&args.horizon_grid, &section.horizon_grid, "10..200", "horizon_grid")?;
    let fit_h = args.fit_horizon.or(section.fit_horizon).unwrap_or(60);
    let val_h = args.validation_horizon.or(section.validation_horizon).unwrap_or(80);
    let (s, q) = ctx.q_process()?;
    let rates = Rates::fit(&ctx.kernel, &q);
    let plans = |h: usize| -> Result<Vec<SamplingPlan>, Failure> {
        (0..=h).map(|t| SamplingPlan::dirac(t, h).map_err(rt)).collect()
    };
    let fit_plans = plans(fit_h)?;
    let mut val_plans = plans(val_h)?;
    val_plans.push(SamplingPlan::uniform(val_h.max(1)).map_err(rt)?);

    let mut report = Report::default();
    report.put_f("gamma", rates.gamma);
    report.put_f("gamma_prime", rates.gamma_prime);
    for (suffix, f) in &fs {
        let a3 = verify_general_bound(&ctx.kernel, &s, &rates, f, &fit_plans, &val_plans).map_err(rt)?;
        let a4 = verify_ergodic_theorem(&ctx.kernel, &s, f, &horizons).map_err(rt)?;
        for r in [&a3, &a4] {
            ctx.write(&format!("{}{suffix}.csv", r.name), &bound_report_csv(r))?;
            report.put_f(&format!("{}{suffix}", r.name), r.constant);
            report.summary.push(format!(
                "{}{suffix}: constant = {}, max violation = {}, {}",
                r.name,
                ff(r.constant),
                ff(r.max_violation),
                if r.holds() { "holds" } else { "FAILS" }
            ));
            if !r.holds() {
                report.refuse(format!("bound {}{suffix} does not hold", r.name));
            }
        }
    }

    let mut csv = String::from("T,optimal_t0,envelope_minimizer\n");
    for &h in &horizons {
        csv.push_str(&csv_row(&[
            h.to_string(),
            optimal_t0(rates.gamma, rates.gamma_prime, h).to_string(),
            envelope_minimizer(rates.gamma, rates.gamma_prime, h).to_string(),
        ]));
    }
    ctx.write("optimal_t0.csv", &csv)?;
    Ok(report)
}

const SWEEP_HEADER: &str = "N,T,t0,N_T,estimate,stderr,exact,abs_error,predicted\n";

fn sweep_line(r: &SweepRow) -> String {
    csv_row(&[
        r.n.to_string(),
        r.horizon.to_string(),
        r.t0.to_string(),
        ff(r.n_survivors),
        ff(r.estimate),
        ff(r.stderr),
        ff(r.exact),
        ff(r.abs_error),
        ff(r.predicted),
    ])
}

#[derive(Args)]
pub struct EstimateArgs {
    /// Starting state [default: 0].
    #[arg(long)]
    pub x0: Option<usize>,
    /// Observable, comma separated [default: indicator of the last state].
    #[arg(long)]
    pub f: Option<String>,
    /// Number of trajectories N [default: 100000].
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// Horizon T [default: the predicted optimum for N].
    #[arg(long)]
    pub horizon: Option<usize>,
    /// uniform, dirac:<t>, dirac:opt or custom:<t>:<w>,... [default: dirac:opt].
    #[arg(long)]
    pub plan: Option<String>,
}

pub fn estimate(ctx: &mut Context, args: &EstimateArgs) -> Result<Report, Failure> {
    let section = ctx.config.config.estimate.clone();
    let n = ctx.kernel.n();
    let x0 = start_state(args.x0.or(section.x0).unwrap_or(0), n)?;
    let f = f_vector(&args.f, &section.f, n)?;
    let trajectories = args.trajectories.or(section.trajectories).unwrap_or(100_000);
    if trajectories == 0 {
        return Err(Failure::Usage("trajectories must be positive".into()));
    }
    let plan_spec: PlanSpec = args.plan.as_ref().or(section.plan.as_ref()).map_or("dirac:opt", |s| s).parse().map_err(usage)?;

    let (s, q) = ctx.q_process()?;
    let rates = Rates::fit(&ctx.kernel, &q);
    let prediction =
        predict_tradeoff(rates.lambda0, rates.gamma, rates.gamma_prime, Budget::Trajectories(trajectories as f64)).map_err(rt)?;
    let horizon = args.horizon.or(section.horizon).unwrap_or(prediction.t_star.round() as usize);
    let plan = plan_spec.resolve(horizon, Some(&rates)).map_err(usage)?;
    let batch = simulate(&ctx.kernel, x0, horizon, trajectories, ctx.seed).map_err(rt)?;
    let exact = s.beta.expect(&f);

    let mut report = Report::default();
    let (estimate, stderr) = match estimate_beta(&batch, &f, &plan) {
        Ok(e) => (e.estimate, e.stderr),
        Err(e @ Error::TooFewSurvivors { .. }) => {
            report.refuse(e.to_string());
            (f64::NAN, f64::NAN)
        }
        Err(e) => return Err(rt(e)),
    };
    let row = SweepRow {
        n: trajectories,
        horizon,
        t0: plan.label_time(),
        n_survivors: batch.n_survivors() as f64,
        estimate,
        stderr,
        exact,
        abs_error: (estimate - exact).abs(),
        predicted: prediction.predicted_error,
        extinct: usize::from(estimate.is_nan()),
    };
    ctx.write("estimate.csv", &format!("{SWEEP_HEADER}{}", sweep_line(&row)))?;
    report.put_f("estimate", estimate);
    report.put_f("exact", exact);
    report.put("survivors", batch.n_survivors());
    report.summary.push(format!(
        "plan {plan_spec} at T = {horizon}: estimate {} +- {} (exact {}), {} of {trajectories} survived",
        ff(estimate),
        ff(stderr),
        ff(exact),
        batch.n_survivors()
    ));
    Ok(report)
}

#[derive(Args)]
pub struct SweepArgs {
    /// Starting state [default: 0].
    #[arg(long)]
    pub x0: Option<usize>,
    /// Observable, comma separated [default: indicator of the last state].
    #[arg(long)]
    pub f: Option<String>,
    /// Trajectory counts [default: 100,1000,10000,100000,1000000].
    #[arg(long)]
    pub n_list: Option<String>,
    /// Replications per N [default: 32].
    #[arg(long)]
    pub replications: Option<usize>,
}

pub fn sweep(ctx: &mut Context, args: &SweepArgs) -> Result<Report, Failure> {
    let section = ctx.config.config.sweep.clone();
    let n = ctx.kernel.n();
    let x0 = start_state(args.x0.or(section.x0).unwrap_or(0), n)?;
    let f = f_vector(&args.f, &section.f, n)?;
    let n_list = grid(&args.n_list, &section.n_list, "100,1000,10000,100000,1000000", "n_list")?;
    let replications = args.replications.or(section.replications).unwrap_or(32);
    if n_list.windows(2).any(|w| w[1] <= w[0]) || n_list[0] == 0 {
        return Err(Failure::Usage("n_list must be positive and strictly increasing".into()));
    }
    if replications == 0 {
        return Err(Failure::Usage("replications must be positive".into()));
    }
    let (s, q) = ctx.q_process()?;
    let rates = Rates::fit(&ctx.kernel, &q);
    let rows = sweep_error_vs_n(&ctx.kernel, &s, &rates, x0, &f, &n_list, replications, ctx.seed).map_err(rt)?;
    let mut csv = String::from(SWEEP_HEADER);
    rows.iter().for_each(|r| csv.push_str(&sweep_line(r)));
    ctx.write("sweep.csv", &csv)?;

    let zeta = predict_tradeoff(rates.lambda0, rates.gamma, rates.gamma_prime, Budget::Horizon(1.0)).map_err(rt)?.zeta;
    let slope = loglog_slope(&rows);
    let mut report = Report::default();
    report.put_f("zeta", zeta);
    report.put_f("slope", slope.unwrap_or(f64::NAN));
    report.put("flagged_rows", rows.iter().filter(|r| r.flagged()).count());
    report.summary.push(format!(
        "log-log slope {} against predicted -zeta = {}",
        slope.map_or("n/a".to_string(), ff),
        ff(-zeta)
    ));
    Ok(report)
}

#[derive(Args)]
pub struct ConverseArgs {
    /// Largest t1 searched [default: 16].
    #[arg(long)]
    pub max_t1: Option<usize>,
    /// Largest T probed and end of the decay curve [default: 200].
    #[arg(long)]
    pub max_horizon: Option<usize>,
    /// Times t of the hypothesis curves [default: 0..60].
    #[arg(long)]
    pub t_grid: Option<String>,
    /// Horizons T of the bridge hypothesis curve [default: 60..200].
    #[arg(long)]
    pub horizon_grid: Option<String>,
}

pub fn converse(ctx: &mut Context, args: &ConverseArgs) -> Result<Report, Failure> {
    let section = ctx.config.config.converse.clone();
    let limits = ConverseLimits {
        max_t1: args.max_t1.or(section.max_t1).unwrap_or(16),
        max_horizon: args.max_horizon.or(section.max_horizon).unwrap_or(200),
    };
    if limits.max_t1 == 0 || limits.max_horizon == 0 {
        return Err(Failure::Usage("search limits must be positive".into()));
    }
    let t_grid = grid(&args.t_grid, &section.t_grid, "0..60", "t_grid")?;
    let horizons = grid(&args.horizon_grid, &section.horizon_grid, "60..200", "horizon_grid")?;
    let (_, q) = ctx.q_process()?;
    let cert = certify_converse(&ctx.kernel, &q, limits).map_err(rt)?;
    let hyp = hypothesis_check(&ctx.kernel, &q, &t_grid, &horizons).map_err(rt)?;

    let mut csv = comment(&[
        ("certified", cert.certified.to_string()),
        ("t1", cert.t1.to_string()),
        ("T1", cert.big_t1.to_string()),
        ("delta", ff(cert.delta)),
        ("limit_delta", ff(cert.limit_delta)),
        ("max_envelope_ratio", ff(cert.max_envelope_ratio)),
        ("implied_rate", ff(cert.implied_rate())),
    ]);
    csv.push_str("T,sup_pair_tv,envelope\n");
    for &(h, v) in &cert.decay_curve {
        csv.push_str(&csv_row(&[h.to_string(), ff(v), ff(cert.envelope(h))]));
    }
    ctx.write("converse.csv", &csv)?;

    let mut csv = comment(&[("t1", cert.t1.to_string()), ("frontier", limits.max_horizon.to_string())]);
    csv.push_str("T,delta\n");
    cert.probed.iter().for_each(|&(h, d)| csv.push_str(&csv_row(&[h.to_string(), ff(d)])));
    ctx.write("contraction.csv", &csv)?;

    let mut csv = comment(&[
        ("bridge_rate", ff(hyp.bridge_fit.rate)),
        ("mixing_rate", ff(hyp.mixing_fit.rate)),
        ("bridge_decays", hyp.bridge_decays.to_string()),
        ("mixing_decays", hyp.mixing_decays.to_string()),
    ]);
    csv.push_str("curve,step,sup_tv\n");
    for (name, curve) in [("bridge", &hyp.bridge_curve), ("mixing", &hyp.mixing_curve)] {
        curve.iter().for_each(|&(t, v)| csv.push_str(&csv_row(&[name.to_string(), t.to_string(), ff(v)])));
    }
    ctx.write("hypothesis.csv", &csv)?;

    let mut report = Report::default();
    report.put("certified", cert.certified);
    report.put("t1", cert.t1);
    report.put("T1", cert.big_t1);
    report.put_f("delta", cert.delta);
    report.put_f("bridge_rate", hyp.bridge_fit.rate);
    report.put_f("mixing_rate", hyp.mixing_fit.rate);
    report.summary.push(format!(
        "contraction: certified = {}, t1 = {}, T1 = {}, delta = {}",
        cert.certified,
        cert.t1,
        cert.big_t1,
        ff(cert.delta)
    ));
    report.summary.push(format!(
        "hypotheses: bridge rate {}, mixing rate {}",
        ff(hyp.bridge_fit.rate),
        ff(hyp.mixing_fit.rate)
    ));
    if !cert.certified {
        report.refuse(format!("no contraction certificate with t1 <= {} and T <= {}", limits.max_t1, limits.max_horizon));
    }
    if !(hyp.bridge_decays && hyp.mixing_decays) {
        report.refuse("a hypothesis curve does not decay".into());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(kind: Option<&str>, n: Option<usize>, params: &[&str]) -> ModelArgs {
        ModelArgs {
            kind: kind.map(String::from),
            n,
            params: params.iter().map(|s| s.to_string()).collect(),
            t0_max: None,
            sizes: None,
        }
    }

    #[test]
    fn model_spec_merges_flags_over_config() {
        let config = LoadedConfig::parse("[model]\nkind = \"birth_death\"\nn = 4\n", Path::new(".")).unwrap();
        let spec = model_spec(&args(None, Some(6), &["birth=0.2"]), &config, Some(9)).unwrap();
        assert_eq!((spec.kind, spec.n, spec.seed), (ModelKind::BirthDeath, 6, Some(9)));
        assert_eq!(spec.params["birth"], 0.2);
        assert!(model_spec(&args(Some("nope"), Some(3), &[]), &LoadedConfig::default(), None).is_err());
        assert!(model_spec(&args(Some("birth_death"), None, &[]), &LoadedConfig::default(), None).is_err());
        assert!(model_spec(&args(Some("birth_death"), Some(2), &["x"]), &LoadedConfig::default(), None).is_err());
    }

    #[test]
    fn f_defaults_and_checks() {
        assert_eq!(f_vector(&None, &None, 3).unwrap(), vec![0.0, 0.0, 1.0]);
        assert_eq!(f_vector(&Some("1,2".into()), &Some(vec![0.0; 3]), 2).unwrap(), vec![1.0, 2.0]);
        assert!(f_vector(&None, &Some(vec![1.0]), 2).is_err());
    }
}
