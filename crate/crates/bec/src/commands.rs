//! Command-line verbs.

use std::path::PathBuf;

use bec_core::{
    certify, check_foscms, check_mfcq, check_quasi_normality, compare_with_mpcc, dir_derivative,
    fd_dir_derivative, in_critical_cone, lower_multiplier_set, model, search_stationarity, solve_inner, tol,
    validate, vp_feasibility, BilevelProblem, CertifyError, CqReport, CqVerdict, DerivativeEstimate, Direction,
    EnvelopeError, EstimateKind, EvalPoint, Hypotheses, InnerError, QnVariant, Regime, SampleGrid,
    SamplingPlan, StationarityCertificate, StationaritySystem, DEFAULT_FD_STEPS,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{debug, info};

use crate::blp::{self, BlpError};
use crate::example1::{self, Example1Options};
use crate::report::{num, vector, Report};

/// Tolerance for agreement between a derivative formula and finite differences.
pub const FD_AGREEMENT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Finding = 1,
    Input = 2,
    Numeric = 3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub exit: Exit,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Failure {
            exit: Exit::Input,
            message: message.into(),
        }
    }

    fn numeric(message: impl Into<String>) -> Self {
        Failure {
            exit: Exit::Numeric,
            message: message.into(),
        }
    }
}

fn inner_exit(e: &InnerError) -> Exit {
    match e {
        InnerError::MaxIterations { .. } | InnerError::Diverged => Exit::Numeric,
        _ => Exit::Input,
    }
}

fn envelope_exit(e: &EnvelopeError) -> Exit {
    match e {
        EnvelopeError::Inner(i) => inner_exit(i),
        EnvelopeError::Lp(_) | EnvelopeError::EmptyMultiplierSet | EnvelopeError::UnboundedMultipliers => {
            Exit::Numeric
        }
        _ => Exit::Input,
    }
}

impl From<BlpError> for Failure {
    fn from(e: BlpError) -> Self {
        Failure::input(e.to_string())
    }
}

impl From<EnvelopeError> for Failure {
    fn from(e: EnvelopeError) -> Self {
        Failure {
            exit: envelope_exit(&e),
            message: e.to_string(),
        }
    }
}

impl From<InnerError> for Failure {
    fn from(e: InnerError) -> Self {
        Failure {
            exit: inner_exit(&e),
            message: e.to_string(),
        }
    }
}

impl From<CertifyError> for Failure {
    fn from(e: CertifyError) -> Self {
        let exit = match &e {
            CertifyError::Envelope(inner) => envelope_exit(inner),
            CertifyError::Inner(inner) => inner_exit(inner),
            CertifyError::Lp(_) => Exit::Numeric,
            _ => Exit::Input,
        };
        Failure {
            exit,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "bec", version, about = "Moreau-envelope certificates for bilevel programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Envelope value, proximal point, gradient and directional derivatives.
    Envelope(EnvelopeArgs),
    /// CQ checks, critical-cone test, stationarity search and MPCC comparison.
    Certify(CertifyArgs),
    /// Constraint qualifications only.
    Cq(CqArgs),
    /// Reproduces the worked example with embedded expected values.
    Example1(Example1Args),
    /// Checks the declared gamma and rho_f against sampled Hessians.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Kv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Hypothesis {
    Guignard,
    Foscms,
    Rcr,
    Rs,
    Mscq,
    InnerCalm,
}

#[derive(Debug, Args)]
pub struct PointArgs {
    /// Problem file (.blp).
    pub file: PathBuf,
    /// Comma-separated `x1,..,xn,y1,..,ym`.
    #[arg(long, allow_hyphen_values = true)]
    pub point: String,
    /// Comma-separated `u1,..,un,v1,..,vm`.
    #[arg(long, allow_hyphen_values = true)]
    pub direction: Option<String>,
    /// Hypotheses asserted rather than checked.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub assume: Vec<Hypothesis>,
    #[arg(long, value_enum, default_value = "kv")]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Auto,
    Wc,
    Dini,
    Rcr,
}

#[derive(Debug, Args)]
pub struct EnvelopeArgs {
    #[command(flatten)]
    pub common: PointArgs,
    #[arg(long, value_enum, default_value = "auto")]
    pub regime: RegimeArg,
    /// Cross-check the derivative with one-sided difference quotients.
    #[arg(long)]
    pub fd: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SystemArg {
    Skkt,
    Wckkt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CqArg {
    Mfcq,
    Foscms,
    Qn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    I,
    Ii,
    Iii,
}

impl VariantArg {
    fn variant(self) -> QnVariant {
        match self {
            VariantArg::I => QnVariant::CriticalUnion,
            VariantArg::Ii => QnVariant::Directional,
            VariantArg::Iii => QnVariant::Rcr,
        }
    }
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub common: PointArgs,
    #[arg(long, value_enum, default_value = "skkt")]
    pub system: SystemArg,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub cq: Vec<CqArg>,
    /// Quasi-normality variant.
    #[arg(long, value_enum, default_value = "ii")]
    pub variant: VariantArg,
}

#[derive(Debug, Args)]
pub struct CqArgs {
    #[command(flatten)]
    pub common: PointArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "mfcq")]
    pub check: Vec<CqArg>,
    #[arg(long, value_enum, default_value = "ii")]
    pub variant: VariantArg,
}

#[derive(Debug, Args)]
pub struct Example1Args {
    #[arg(long, default_value_t = 0.2)]
    pub gamma: f64,
    /// Compare against deliberately wrong expected values.
    #[arg(long, hide = true)]
    pub corrupt: bool,
    #[arg(long, value_enum, default_value = "kv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub file: PathBuf,
    /// Box `lo,hi` applied to every coordinate of `(x, y)`.
    #[arg(long, default_value = "-2,2", allow_hyphen_values = true)]
    pub region: String,
    #[arg(long, default_value_t = 9)]
    pub points_per_axis: usize,
    #[arg(long, value_enum, default_value = "kv")]
    pub format: Format,
}

/// A finished run: the report to print and the process exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Report,
    pub exit: Exit,
    pub format: Format,
}

impl Outcome {
    pub fn render(&self) -> String {
        match self.format {
            Format::Kv => self.report.to_kv(),
            Format::Text => self.report.to_text(),
        }
    }
}

pub fn parse_reals(text: &str, what: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Failure::input(format!("{what}: `{t}` is not a finite decimal")))
        })
        .collect()
}

fn hypotheses(list: &[Hypothesis]) -> Hypotheses {
    let mut h = Hypotheses::default();
    for a in list {
        match a {
            Hypothesis::Guignard => h.guignard = true,
            Hypothesis::Foscms => h.foscms = true,
            Hypothesis::Rcr => h.rcr = true,
            Hypothesis::Rs => h.rs = true,
            Hypothesis::Mscq => h.mscq = true,
            Hypothesis::InnerCalm => h.inner_calm = true,
        }
    }
    h
}

struct Loaded {
    prob: BilevelProblem,
    x: Vec<f64>,
    y: Vec<f64>,
    d: Option<Direction>,
    hyp: Hypotheses,
}

fn load(args: &PointArgs, report: &mut Report) -> Result<Loaded, Failure> {
    let (prob, _) = blp::read_problem(&args.file)?;
    report.digest = blp::digest(&prob);
    let (n, m) = (prob.n, prob.m);
    let z = parse_reals(&args.point, "--point")?;
    if z.len() != n + m {
        return Err(Failure::input(format!("--point has {} entries, expected n + m = {}", z.len(), n + m)));
    }
    let d = match &args.direction {
        Some(text) => {
            let d = parse_reals(text, "--direction")?;
            if d.len() != n + m {
                return Err(Failure::input(format!(
                    "--direction has {} entries, expected n + m = {}",
                    d.len(),
                    n + m
                )));
            }
            Some(Direction::from_concat(&d, n))
        }
        None => None,
    };
    let hyp = hypotheses(&args.assume);
    report.push("problem.n", n);
    report.push("problem.m", m);
    report.push_num("problem.gamma", prob.gamma);
    report.push_num("problem.rho_f", prob.rho_f);
    report.push_vec("point.x", &z[..n]);
    report.push_vec("point.y", &z[n..]);
    if let Some(d) = &d {
        report.push_vec("direction.u", &d.u);
        report.push_vec("direction.v", &d.v);
    }
    Ok(Loaded {
        x: z[..n].to_vec(),
        y: z[n..].to_vec(),
        prob,
        d,
        hyp,
    })
}

/// Names and values of violated constraints of the envelope reformulation.
fn violations(prob: &BilevelProblem, x: &[f64], y: &[f64]) -> Result<Vec<String>, Failure> {
    let p = EvalPoint::new(x.to_vec(), y.to_vec());
    let eval = |e: &[bec_core::Expr]| model::values(e, &p).map_err(|e| Failure::input(e.to_string()));
    let mut out = Vec::new();
    for (i, v) in eval(&prob.upper_constraints)?.iter().enumerate() {
        if *v > tol::ACTIVE {
            out.push(format!("G{}={}", i + 1, num(*v)));
        }
    }
    for (i, v) in eval(&prob.lower_constraints)?.iter().enumerate() {
        if *v > tol::ACTIVE {
            out.push(format!("g{}={}", i + 1, num(*v)));
        }
    }
    if out.is_empty() {
        let feas = vp_feasibility(prob, x, y)?;
        if !feas.is_feasible() {
            out.push(format!("f-v_gamma={}", num(feas.value_gap)));
        }
    }
    Ok(out)
}

fn require_feasible(l: &Loaded, report: &mut Report) -> Result<(), Failure> {
    let v = violations(&l.prob, &l.x, &l.y)?;
    report.push_num("feasibility.tolerance", tol::ACTIVE);
    if v.is_empty() {
        report.push("feasibility", "feasible");
        return Ok(());
    }
    report.push("feasibility", "infeasible");
    report.push("feasibility.violated", v.join(";"));
    Err(Failure::input(format!("point is not feasible: {}", v.join(", "))))
}

fn push_derivative(report: &mut Report, prefix: &str, est: &DerivativeEstimate) {
    report.push(format!("{prefix}.kind"), est.kind.as_str());
    if let Some(r) = est.regime {
        report.push(format!("{prefix}.regime"), r.as_str());
    }
    report.push_num(format!("{prefix}.lower"), est.lower);
    report.push_num(format!("{prefix}.upper"), est.upper);
    report.push_num(format!("{prefix}.estimate"), est.estimate);
    if est.kind != EstimateKind::FiniteDifference {
        report.push_num(format!("{prefix}.tolerance"), tol::CERT);
    }
    for w in &est.witnesses {
        report.push(format!("{prefix}.witness"), vector(w));
    }
    for (t, q) in &est.quotients {
        report.push(format!("{prefix}.quotient"), format!("{},{}", num(*t), num(*q)));
    }
    for n in &est.notes {
        report.push(format!("{prefix}.note"), n);
    }
}

fn cmd_envelope(a: &EnvelopeArgs, report: &mut Report) -> Result<Exit, Failure> {
    let l = load(&a.common, report)?;
    info!("solving the proximal problem");
    let sol = solve_inner(&l.prob, &l.x, &l.y)?;
    let grad: Vec<f64> = l.y.iter().zip(&sol.w).map(|(y, w)| (y - w) / l.prob.gamma).collect();
    report.push_num("v_gamma", sol.value);
    report.push_vec("S_gamma", &sol.w);
    report.push_vec("grad_y_v_gamma", &grad);
    report.push_vec("inner.lambda", &sol.lambda);
    report.push("inner.active", sol.active.one_based());
    report.push_num("inner.kkt_residual", sol.kkt_residual);
    report.push_num("inner.tolerance", tol::INNER_KKT);
    report.push("inner.iterations", sol.iterations);
    let Some(d) = &l.d else {
        return Ok(Exit::Ok);
    };
    let order: &[Regime] = match a.regime {
        RegimeArg::Auto => &[Regime::WeaklyConvex, Regime::Dini, Regime::Rcr],
        RegimeArg::Wc => &[Regime::WeaklyConvex],
        RegimeArg::Dini => &[Regime::Dini],
        RegimeArg::Rcr => &[Regime::Rcr],
    };
    let mut exact = None;
    for &regime in order {
        debug!("trying regime {}", regime.as_str());
        match dir_derivative(&l.prob, &l.x, &l.y, d, regime, &l.hyp) {
            Ok(est) => {
                exact = Some(est);
                break;
            }
            Err(EnvelopeError::Precondition { regime, reason }) => {
                report.push(format!("derivative.refused.{regime}"), reason);
            }
            Err(e) => return Err(e.into()),
        }
    }
    match &exact {
        Some(est) => push_derivative(report, "derivative", est),
        None if !a.fd => return Err(Failure::input("no regime applies; see derivative.refused")),
        None => report.push("derivative", "unavailable"),
    }
    if !a.fd {
        return Ok(Exit::Ok);
    }
    let fd = fd_dir_derivative(&l.prob, &l.x, &l.y, d, &DEFAULT_FD_STEPS)?;
    push_derivative(report, "fd", &fd);
    report.push_num("fd.agreement_tolerance", FD_AGREEMENT);
    let Some(est) = exact else {
        return Ok(Exit::Ok);
    };
    let slack = FD_AGREEMENT * (1.0 + est.upper.abs().max(est.lower.abs()));
    let agrees = fd.estimate >= est.lower - slack && fd.estimate <= est.upper + slack;
    report.push("fd.agrees", agrees);
    Ok(if agrees { Exit::Ok } else { Exit::Finding })
}

fn push_cq(report: &mut Report, r: &CqReport) {
    let p = r.check.as_str();
    report.push(format!("{p}.verdict"), r.verdict.as_str());
    report.push_num(format!("{p}.tolerance"), tol::FEAS);
    report.push(format!("{p}.marginal"), r.marginal);
    if !r.labels.is_empty() {
        report.push(format!("{p}.labels"), r.labels.join(","));
    }
    for w in &r.lp_witnesses {
        report.push(format!("{p}.witness"), vector(w));
    }
    for e in &r.sampling_evidence {
        report.push(
            format!("{p}.sample"),
            format!(
                "support={} t={} realized={} values={}",
                e.support.join("+"),
                num(e.t),
                e.realized,
                vector(&e.values)
            ),
        );
    }
    for n in &r.notes {
        report.push(format!("{p}.note"), n);
    }
}

fn run_cqs(l: &Loaded, checks: &[CqArg], variant: VariantArg, report: &mut Report) -> Result<bool, Failure> {
    let mut all_positive = true;
    for c in checks {
        let r = match c {
            CqArg::Mfcq => check_mfcq(&l.prob, &l.x, &l.y)?,
            CqArg::Foscms | CqArg::Qn => {
                let Some(d) = &l.d else {
                    let name = if *c == CqArg::Qn { "qn" } else { "foscms" };
                    report.push(format!("{name}.skipped"), "needs --direction");
                    continue;
                };
                if *c == CqArg::Foscms {
                    check_foscms(&l.prob, &l.x, &l.y, d)?
                } else {
                    report.push("quasi-normality-direction.variant", variant.variant().as_str());
                    check_quasi_normality(
                        &l.prob,
                        &l.x,
                        &l.y,
                        d,
                        variant.variant(),
                        &l.hyp,
                        &SamplingPlan::default(),
                    )?
                }
            }
        };
        all_positive &= r.verdict != CqVerdict::Fails;
        push_cq(report, &r);
    }
    Ok(all_positive)
}

fn push_certificate(report: &mut Report, p: &str, c: &StationarityCertificate) {
    report.push(format!("{p}.branch"), c.branch.as_str());
    report.push_num(format!("{p}.alpha"), c.alpha);
    report.push_vec(format!("{p}.lambda_g"), &c.lambda_g);
    report.push_vec(format!("{p}.lambda_G"), &c.lambda_upper);
    report.push_vec(format!("{p}.lambda_bar"), &c.lambda_bar);
    report.push_num(format!("{p}.residual"), c.residual);
    report.push_num(format!("{p}.max_violation"), c.max_violation);
    report.push_num(format!("{p}.tolerance"), tol::CERT);
    report.push_vec(format!("{p}.induced.mu_G"), &c.induced.mu_upper);
    report.push_vec(format!("{p}.induced.mu_g"), &c.induced.mu_g);
    report.push_vec(format!("{p}.induced.mu_e"), &c.induced.mu_e);
    report.push_vec(format!("{p}.induced.mu_lambda"), &c.induced.mu_lambda);
}

fn cmd_cq(a: &CqArgs, report: &mut Report) -> Result<Exit, Failure> {
    let l = load(&a.common, report)?;
    require_feasible(&l, report)?;
    let ok = run_cqs(&l, &a.check, a.variant, report)?;
    Ok(if ok { Exit::Ok } else { Exit::Finding })
}

fn cmd_certify(a: &CertifyArgs, report: &mut Report) -> Result<Exit, Failure> {
    let l = load(&a.common, report)?;
    require_feasible(&l, report)?;
    run_cqs(&l, &a.cq, a.variant, report)?;

    let lam = lower_multiplier_set(&l.prob, &l.x, &l.y, None)?;
    report.push("lower.active", lam.active.one_based());
    for v in lam.vertices().map_err(|e| Failure::numeric(e.to_string()))? {
        report.push("lower.multiplier_vertex", vector(&v));
    }

    if let Some(d) = &l.d {
        let cone = in_critical_cone(&l.prob, &l.x, &l.y, d, &l.hyp)?;
        report.push("critical_cone.member", cone.member);
        for r in &cone.rows {
            report.push(
                "critical_cone.row",
                format!(
                    "{} value={} bound={} tolerance={} holds={}",
                    r.label,
                    num(r.value),
                    num(r.bound),
                    num(r.tolerance),
                    r.holds
                ),
            );
        }
        push_derivative(report, "critical_cone.derivative", &cone.derivative);
    }

    let system = match a.system {
        SystemArg::Skkt => StationaritySystem::Skkt,
        SystemArg::Wckkt => StationaritySystem::Wckkt,
    };
    let d = match system {
        StationaritySystem::Skkt => None,
        StationaritySystem::Wckkt => l.d.as_ref(),
    };
    info!("searching {} certificates", system.as_str());
    let search = search_stationarity(&l.prob, &l.x, &l.y, d, system, &l.hyp)?;
    report.push("stationarity.system", system.as_str());
    for row in &search.directional_rows {
        report.push("stationarity.directional_row", row);
    }
    for b in &search.branches {
        let status = match (&b.certificate, &b.note) {
            (Some(_), _) => "certificate".to_string(),
            (None, Some(n)) => format!("none ({n})"),
            (None, None) => "none".to_string(),
        };
        report.push(format!("stationarity.branch.{}", b.branch.as_str()), status);
    }
    let found = search.best.is_some();
    report.push("stationarity.found", found);
    if let Some(c) = &search.best {
        push_certificate(report, "certificate", c);
        let s = certify::verify_s_stationarity(&l.prob, &l.x, &l.y, &c.lambda_bar)?;
        let v = certify::s_multiplier_violation(&l.prob, &l.x, &l.y, &c.lambda_bar, &c.induced)?;
        report.push_num("certificate.induced.violation", v);
        report.push("certificate.induced.s_stationary", v <= tol::CERT);
        report.push("s_stationarity.at_lambda_bar", s.stationary);
    }

    let cmp = compare_with_mpcc(&l.prob, &l.x, &l.y, l.d.as_ref(), &l.hyp)?;
    report.push("mpcc.gap", cmp.gap);
    report.push("mpcc.degenerate", cmp.degenerate);
    for (v, ok) in &cmp.vertex_checks {
        report.push("mpcc.vertex", format!("{} s_stationary={}", vector(v), ok));
    }
    for n in &cmp.notes {
        report.push("mpcc.note", n);
    }
    Ok(if found { Exit::Ok } else { Exit::Finding })
}

fn cmd_validate(a: &ValidateArgs, report: &mut Report) -> Result<Exit, Failure> {
    let (prob, _) = blp::read_problem(&a.file)?;
    report.digest = blp::digest(&prob);
    let region = parse_reals(&a.region, "--region")?;
    if region.len() != 2 || region[0] >= region[1] {
        return Err(Failure::input("--region must be `lo,hi` with lo < hi"));
    }
    let grid = SampleGrid::uniform(prob.n + prob.m, region[0], region[1], a.points_per_axis);
    let v = validate(&prob, &grid);
    report.push("gamma_conservative", v.gamma_conservative);
    report.push("gamma_strongly_convex", v.gamma_strongly_convex);
    report.push("rho_consistent", v.rho_consistent);
    report.push_num("rho.tolerance", tol::CERT);
    report.push_num("min_eig_yy", v.min_eig_yy);
    report.push_num("min_eig_joint", v.min_eig_joint);
    report.push("grid_points", v.grid_points);
    report.push("domain_failures", v.domain_failures);
    for i in &v.issues {
        report.push("issue", i);
    }
    report.push("valid", v.ok());
    Ok(if v.ok() { Exit::Ok } else { Exit::Input })
}

fn cmd_example1(a: &Example1Args, report: &mut Report) -> Result<Exit, Failure> {
    let opts = Example1Options {
        gamma: a.gamma,
        corrupt: a.corrupt,
    };
    let run = example1::run(&opts)?;
    report.digest = run.digest.clone();
    report.push_num("gamma", a.gamma);
    let mut failed = 0;
    for c in &run.checks {
        report.push(
            format!("check.{}", c.name),
            if c.passed { "pass" } else { "FAIL" },
        );
        report.push(format!("check.{}.expected", c.name), &c.expected);
        report.push(format!("check.{}.observed", c.name), &c.observed);
        report.push_num(format!("check.{}.tolerance", c.name), c.tolerance);
        if !c.passed {
            failed += 1;
        }
    }
    report.push("checks.passed", run.checks.len() - failed);
    report.push("checks.total", run.checks.len());
    Ok(if failed == 0 { Exit::Ok } else { Exit::Finding })
}

/// Runs a parsed command. `echo` is recorded as the report's command line.
pub fn execute(cli: &Cli, echo: &str) -> Outcome {
    let mut report = Report::new(echo, "-");
    let (result, format) = match &cli.command {
        Command::Envelope(a) => (cmd_envelope(a, &mut report), a.common.format),
        Command::Certify(a) => (cmd_certify(a, &mut report), a.common.format),
        Command::Cq(a) => (cmd_cq(a, &mut report), a.common.format),
        Command::Example1(a) => (cmd_example1(a, &mut report), a.format),
        Command::Validate(a) => (cmd_validate(a, &mut report), a.format),
    };
    let exit = match result {
        Ok(exit) => {
            report.push(
                "status",
                match exit {
                    Exit::Ok => "ok",
                    Exit::Finding => "finding",
                    _ => "error",
                },
            );
            exit
        }
        Err(f) => {
            report.push("status", "error");
            report.push("error", &f.message);
            f.exit
        }
    };
    report.push("exit_code", exit as u8);
    Outcome { report, exit, format }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Result<Outcome, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(&args)?;
    let echo = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join(" ");
    Ok(execute(&cli, &echo))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_parse_strictly() {
        assert_eq!(parse_reals("0, -1.5,2e-3", "p").unwrap(), vec![0.0, -1.5, 2e-3]);
        assert!(parse_reals("1,x", "p").is_err());
        assert!(parse_reals("1,,2", "p").is_err());
        assert!(parse_reals("nan", "p").is_err());
    }

    #[test]
    fn error_classes() {
        let f: Failure = CertifyError::Infeasible("g1".into()).into();
        assert_eq!(f.exit, Exit::Input);
        let f: Failure = InnerError::Diverged.into();
        assert_eq!(f.exit, Exit::Numeric);
        let f: Failure = EnvelopeError::Lp(bec_core::LpError::NumericFailure(5)).into();
        assert_eq!(f.exit, Exit::Numeric);
    }

    #[test]
    fn hypotheses_from_flags() {
        let h = hypotheses(&[Hypothesis::Guignard, Hypothesis::InnerCalm]);
        assert!(h.guignard && h.inner_calm && !h.rcr);
    }
}
