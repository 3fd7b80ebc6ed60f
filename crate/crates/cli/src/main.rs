//! `qsd`: command-line studies of quasi-stationary convergence.
//!
//! Every command resolves its inputs into a [`StudySpec`]; when `--out` is
//! given the resolved study is written next to the outputs and can be fed
//! back with `--study` to reproduce them exactly.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use qsd_core::qsim::{convergence_study, estimate_conditional_grid, SimConfig, Tilt};
use qsd_core::transform::{
    invert_2d_density, invert_time, master_l, rate_profile, tauberian_tail, DensityKind, InversionConfig,
};
use qsd_core::verify::{self, VerifyOptions};
use qsd_core::{check_assumptions, critical_point, Analysis, LevyModel, ModelSpec, QsdError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "qsd",
    version,
    about = "Quasi-stationary analysis of Lévy-driven fluid queues"
)]
struct Cli {
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Critical pair (ϑ*, ζ*) and the assumption report.
    Critical(Common),
    /// Expansion constants, coefficients C₀…C₃, μ̃ and ξ̃ at (α, β).
    Coeffs(Common),
    /// The double transform L(ϑ; α, β) at one complex point.
    Transform {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        theta_re: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        theta_im: f64,
    },
    /// Numerical inversion in time on a grid.
    Invert(Common),
    /// t·(conditional − μ̃) against its predicted limit, optionally with simulation.
    RateStudy {
        #[command(flatten)]
        common: Common,
        /// Overlay Monte Carlo estimates.
        #[arg(long)]
        simulate: bool,
        #[arg(long)]
        replications: Option<u64>,
    },
    /// Density of μ or ξ on an (x, y) grid.
    Density {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        which: Option<Which>,
        /// Linear grid `a:b:n` in x.
        #[arg(long)]
        x: Option<String>,
        /// Linear grid `a:b:n` in y.
        #[arg(long)]
        y: Option<String>,
    },
    /// Monte Carlo convergence study.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        replications: Option<u64>,
        #[arg(long, value_enum)]
        tilt: Option<TiltArg>,
    },
    /// Runs the acceptance oracles and prints a pass/fail table.
    Verify {
        #[arg(long, default_value_t = VerifyOptions::default().mc_replications)]
        replications: u64,
        #[arg(long, default_value_t = VerifyOptions::default().seed)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// JSON model description.
    #[arg(long)]
    model: Option<PathBuf>,
    /// JSON study (or a sidecar from an earlier run).
    #[arg(long)]
    study: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Log-spaced grid `a:b:n`.
    #[arg(long)]
    times: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Mu,
    Xi,
}

#[derive(Clone, Copy, ValueEnum)]
enum TiltArg {
    None,
    ThetaStar,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSpec {
    #[serde(default = "default_replications")]
    replications: u64,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_tilt")]
    tilt: Tilt,
    #[serde(default)]
    brownian_step: Option<f64>,
}

fn default_replications() -> u64 {
    100_000
}

fn default_seed() -> u64 {
    1
}

fn default_tilt() -> Tilt {
    Tilt::ThetaStar
}

fn default_true() -> bool {
    true
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            replications: default_replications(),
            seed: default_seed(),
            tilt: default_tilt(),
            brownian_step: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DensitySpec {
    which: DensityKind,
    x: Vec<f64>,
    y: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StudySpec {
    model: ModelSpec,
    #[serde(default)]
    alpha: f64,
    #[serde(default)]
    beta: f64,
    #[serde(default)]
    times: Vec<f64>,
    /// Include the `t^{−5/2}` term in the Tauberian column.
    #[serde(default = "default_true")]
    second_order: bool,
    #[serde(default)]
    inversion: InversionConfig,
    #[serde(default)]
    simulate: bool,
    #[serde(default)]
    sim: SimSpec,
    #[serde(default)]
    density: Option<DensitySpec>,
}

/// Failure carrying the process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

const EXIT_CERTIFICATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_IO: u8 = 4;

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<QsdError>() {
            Some(
                QsdError::Unstable(_)
                | QsdError::Unsupported(_)
                | QsdError::NoInteriorMinimum
                | QsdError::NotStrictlyNegative(_),
            ) => EXIT_CERTIFICATION,
            Some(
                QsdError::Domain { .. }
                | QsdError::BelowBranchPoint { .. }
                | QsdError::SingularDenominator(_)
                | QsdError::ConvergenceFailure(_)
                | QsdError::DegenerateSample,
            ) => EXIT_NUMERICAL,
            _ => EXIT_IO,
        };
        Self { code, error }
    }
}

fn fail(code: u8, error: anyhow::Error) -> Failure {
    Failure { code, error }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_IO);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Critical(c) => cmd_critical(&c),
        Command::Coeffs(c) => Ok(cmd_coeffs(&c)?),
        Command::Transform {
            common,
            theta_re,
            theta_im,
        } => Ok(cmd_transform(&common, theta_re, theta_im)?),
        Command::Invert(c) => Ok(cmd_invert(&c)?),
        Command::RateStudy {
            common,
            simulate,
            replications,
        } => Ok(cmd_rate_study(&common, simulate, replications)?),
        Command::Density { common, which, x, y } => Ok(cmd_density(&common, which, x, y)?),
        Command::Simulate {
            common,
            replications,
            tilt,
        } => Ok(cmd_simulate(&common, replications, tilt)?),
        Command::Verify {
            replications,
            seed,
            out,
        } => cmd_verify(replications, seed, out),
    }
}

/// `a:b:n` with `n` log-spaced points from `a` to `b`.
fn log_grid(s: &str) -> Result<Vec<f64>> {
    let (a, b, n) = parse_triple(s)?;
    if !(a > 0.0 && b >= a) {
        bail!("log grid '{s}' needs 0 < a ≤ b");
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    let r = b / a;
    Ok((0..n)
        .map(|i| {
            if i == n - 1 {
                b
            } else {
                a * r.powf(i as f64 / (n - 1) as f64)
            }
        })
        .collect())
}

/// `a:b:n` with `n` equally spaced points.
fn linear_grid(s: &str) -> Result<Vec<f64>> {
    let (a, b, n) = parse_triple(s)?;
    if !(b >= a) {
        bail!("grid '{s}' needs a ≤ b");
    }
    Ok(spaced(a, b, n))
}

fn parse_triple(s: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        bail!("grid '{s}' is not of the form a:b:n");
    };
    let n: usize = n.parse().with_context(|| format!("grid '{s}': bad point count"))?;
    if n == 0 {
        bail!("grid '{s}' has no points");
    }
    Ok((
        a.parse().with_context(|| format!("grid '{s}': bad start"))?,
        b.parse().with_context(|| format!("grid '{s}': bad end"))?,
        n,
    ))
}

fn spaced(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                b
            } else {
                a + (b - a) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Builds the study from `--study`/`--model` and applies flag overrides.
fn resolve(c: &Common) -> Result<StudySpec> {
    let mut study = match (&c.study, &c.model) {
        (Some(path), _) => {
            let mut v = read_json(path)?;
            // sidecars wrap the study next to the results
            if let Some(inner) = v.get_mut("study") {
                v = inner.take();
            }
            serde_json::from_value::<StudySpec>(v).with_context(|| format!("study schema in {}", path.display()))?
        }
        (None, Some(path)) => {
            let model: ModelSpec = serde_json::from_value(read_json(path)?)
                .with_context(|| format!("model schema in {}", path.display()))?;
            StudySpec {
                model,
                alpha: 0.0,
                beta: 0.0,
                times: Vec::new(),
                second_order: true,
                inversion: InversionConfig::default(),
                simulate: false,
                sim: SimSpec::default(),
                density: None,
            }
        }
        (None, None) => bail!("either --model or --study is required"),
    };
    if let (Some(_), Some(path)) = (&c.study, &c.model) {
        study.model =
            serde_json::from_value(read_json(path)?).with_context(|| format!("model schema in {}", path.display()))?;
    }
    if let Some(a) = c.alpha {
        study.alpha = a;
    }
    if let Some(b) = c.beta {
        study.beta = b;
    }
    if let Some(t) = &c.times {
        study.times = log_grid(t)?;
    }
    if let Some(s) = c.seed {
        study.sim.seed = s;
    }
    Ok(study)
}

fn model_of(study: &StudySpec) -> Result<LevyModel> {
    Ok(study.model.to_model()?)
}

fn analysis(study: &StudySpec) -> Result<Analysis> {
    Ok(Analysis::new(model_of(study)?)?)
}

fn require_times(study: &StudySpec) -> Result<()> {
    if study.times.is_empty() {
        return Err(anyhow!(QsdError::InvalidConfig(
            "a time grid is required (--times a:b:n)".into()
        )));
    }
    Ok(())
}

fn e(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `body` to `out/name` or stdout, plus the sidecar `out/stem.json`.
fn emit(out: Option<&Path>, name: &str, body: &str, sidecar: Value) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(name);
            fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
            if !name.ends_with(".json") {
                let stem = Path::new(name).file_stem().and_then(|s| s.to_str()).unwrap_or(name);
                let side = dir.join(format!("{stem}.json"));
                fs::write(&side, serde_json::to_string_pretty(&sidecar)? + "\n")
                    .with_context(|| format!("writing {}", side.display()))?;
            }
            eprintln!("wrote {}", path.display());
        }
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(body.as_bytes()).context("writing to stdout")?;
        }
    }
    Ok(())
}

fn sidecar(command: &str, study: &StudySpec, results: Value) -> Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "study": study,
        "results": results,
    })
}

fn emit_json(out: Option<&Path>, name: &str, value: &Value) -> Result<()> {
    emit(out, name, &(serde_json::to_string_pretty(value)? + "\n"), Value::Null)
}

fn cmd_critical(c: &Common) -> std::result::Result<(), Failure> {
    let study = resolve(c)?;
    let model = model_of(&study)?;
    let report = check_assumptions(&model);
    let critical = if report.stable {
        critical_point(&model).ok()
    } else {
        None
    };
    let value = json!({
        "study": study,
        "stable": report.stable,
        "certified": report.certified(),
        "theta_star": critical.map(|c| c.theta_star),
        "zeta_star": critical.map(|c| c.zeta_star),
        "critical": critical,
        "report": report,
    });
    emit_json(c.out.as_deref(), "critical.json", &value)?;
    if !report.certified() {
        return Err(fail(
            EXIT_CERTIFICATION,
            anyhow!("model not certified: {}", report.messages.join("; ")),
        ));
    }
    Ok(())
}

fn cmd_coeffs(c: &Common) -> Result<()> {
    let study = resolve(c)?;
    let an = analysis(&study)?;
    let k = an.constants;
    let coeffs = an.joint_coeffs(study.alpha, study.beta)?;
    let value = json!({
        "study": study,
        "theta_star": an.theta_star(),
        "zeta_star": an.zeta_star(),
        "A_or_B": [k.c1, k.c2, k.c3],
        "C": coeffs.as_array(),
        "mu_tilde": an.mu_tilde(study.alpha, study.beta)?,
        "xi_tilde": an.xi_tilde(study.alpha, study.beta)?,
    });
    emit_json(c.out.as_deref(), "coeffs.json", &value)
}

fn cmd_transform(c: &Common, re: f64, im: f64) -> Result<()> {
    let study = resolve(c)?;
    let an = analysis(&study)?;
    let v = master_l(&an, Complex64::new(re, im), study.alpha, study.beta)?;
    let value = json!({
        "study": study,
        "theta": [re, im],
        "value": [v.re, v.im],
    });
    emit_json(c.out.as_deref(), "transform.json", &value)
}

fn cmd_invert(c: &Common) -> Result<()> {
    let study = resolve(c)?;
    require_times(&study)?;
    let an = analysis(&study)?;
    let g = invert_time(&an, study.alpha, study.beta, &study.times, &study.inversion)?;
    let mut csv = String::from("t,raw,survival,conditional,scaled_raw,scaled_survival,relative_tail\n");
    for i in 0..g.times.len() {
        csv += &[
            g.times[i],
            g.raw[i],
            g.survival[i],
            g.conditional[i],
            g.scaled_raw[i],
            g.scaled_survival[i],
            g.relative_tail[i],
        ]
        .map(e)
        .join(",");
        csv.push('\n');
    }
    let side = sidecar("invert", &study, json!({ "zeta_star": an.zeta_star() }));
    emit(c.out.as_deref(), "invert.csv", &csv, side)
}

fn sim_config(study: &StudySpec, model: LevyModel) -> Result<SimConfig> {
    let horizon = study.times.iter().copied().fold(f64::NAN, f64::max);
    let mut cfg = SimConfig::new(model, horizon, study.sim.replications, study.sim.seed).with_tilt(study.sim.tilt);
    cfg.brownian_step = study.sim.brownian_step;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_rate_study(c: &Common, simulate: bool, replications: Option<u64>) -> Result<()> {
    let mut study = resolve(c)?;
    study.simulate |= simulate;
    if let Some(n) = replications {
        study.sim.replications = n;
    }
    require_times(&study)?;
    let an = analysis(&study)?;
    let (a, b) = (study.alpha, study.beta);
    let prof = rate_profile(&an, a, b, &study.times, &study.inversion)?;
    let sim = if study.simulate {
        let cfg = sim_config(&study, an.model.clone())?;
        Some((estimate_conditional_grid(&cfg, a, b, &study.times)?, cfg.sidecar()))
    } else {
        None
    };
    let mut csv = String::from("t,raw,survival,conditional,tauberian,profile,predicted_limit");
    if sim.is_some() {
        csv += ",estimate,std_error";
    }
    csv.push('\n');
    let g = &prof.grid;
    for i in 0..g.times.len() {
        let t = g.times[i];
        let tail = tauberian_tail(&an, a, b, t, study.second_order)?;
        let mut row = vec![
            t,
            g.raw[i],
            g.survival[i],
            g.conditional[i],
            tail,
            prof.profile[i],
            prof.predicted_limit,
        ];
        if let Some((est, _)) = &sim {
            row.extend([est[i].value, est[i].std_error]);
        }
        csv += &row.into_iter().map(e).collect::<Vec<_>>().join(",");
        csv.push('\n');
    }
    let side = sidecar(
        "rate-study",
        &study,
        json!({
            "mu_tilde": prof.mu_tilde,
            "xi_tilde": prof.xi_tilde,
            "predicted_limit": prof.predicted_limit,
            "relative_tail": g.relative_tail,
            "simulation": sim.as_ref().map(|(_, s)| s),
        }),
    );
    emit(c.out.as_deref(), "rate_study.csv", &csv, side)
}

fn cmd_density(c: &Common, which: Option<Which>, x: Option<String>, y: Option<String>) -> Result<()> {
    let mut study = resolve(c)?;
    let mut d = study.density.clone().unwrap_or(DensitySpec {
        which: DensityKind::Mu,
        x: spaced(0.25, 5.0, 20),
        y: spaced(0.25, 5.0, 20),
    });
    if let Some(w) = which {
        d.which = match w {
            Which::Mu => DensityKind::Mu,
            Which::Xi => DensityKind::Xi,
        };
    }
    if let Some(s) = &x {
        d.x = linear_grid(s)?;
    }
    if let Some(s) = &y {
        d.y = linear_grid(s)?;
    }
    study.density = Some(d.clone());
    let an = analysis(&study)?;
    let grid = invert_2d_density(&an, d.which, &d.x, &d.y, &study.inversion)?;
    let mut csv = String::from("x,y,density\n");
    for (i, &xv) in grid.x.iter().enumerate() {
        for (j, &yv) in grid.y.iter().enumerate() {
            csv += &format!("{},{},{}\n", e(xv), e(yv), e(grid.at(i, j)));
        }
    }
    let failed = grid.converged.iter().filter(|&&ok| !ok).count();
    let side = sidecar("density", &study, json!({ "unconverged_points": failed }));
    emit(c.out.as_deref(), "density.csv", &csv, side)?;
    if failed > 0 {
        return Err(anyhow!(QsdError::ConvergenceFailure(format!(
            "{failed} grid points missed the inversion target"
        ))));
    }
    Ok(())
}

fn cmd_simulate(c: &Common, replications: Option<u64>, tilt: Option<TiltArg>) -> Result<()> {
    let mut study = resolve(c)?;
    if let Some(n) = replications {
        study.sim.replications = n;
    }
    if let Some(t) = tilt {
        study.sim.tilt = match t {
            TiltArg::None => Tilt::None,
            TiltArg::ThetaStar => Tilt::ThetaStar,
        };
    }
    study.simulate = true;
    require_times(&study)?;
    let an = analysis(&study)?;
    let cfg = sim_config(&study, an.model.clone())?;
    let rows = convergence_study(&cfg, &an, study.alpha, study.beta, &study.times, &study.inversion)?;
    let mut csv = String::from("t,estimate,std_error,n_effective,analytic,profile\n");
    for r in &rows {
        csv += &[
            r.t,
            r.estimate.value,
            r.estimate.std_error,
            r.estimate.n_effective,
            r.analytic_conditional,
            r.sim_profile,
        ]
        .map(e)
        .join(",");
        csv.push('\n');
    }
    let side = sidecar("simulate", &study, json!({ "simulation": cfg.sidecar(), "rows": rows }));
    emit(c.out.as_deref(), "simulate.csv", &csv, side)
}

fn cmd_verify(replications: u64, seed: u64, out: Option<PathBuf>) -> std::result::Result<(), Failure> {
    let opts = VerifyOptions {
        mc_replications: replications,
        seed,
    };
    let results = verify::run_all(&opts);
    for r in &results {
        println!("{}", r.line());
    }
    let passed = results.iter().filter(|r| r.passed).count();
    println!("{passed}/{} criteria passed", results.len());
    if let Some(dir) = out {
        let value = json!({
            "replications": replications,
            "seed": seed,
            "results": results,
        });
        let write = || -> Result<()> {
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            fs::write(dir.join("verify.json"), serde_json::to_string_pretty(&value)? + "\n")
                .context("writing verify.json")?;
            Ok(())
        };
        write().map_err(|e| fail(EXIT_IO, e))?;
    }
    if passed < results.len() {
        return Err(fail(
            EXIT_NUMERICAL,
            anyhow!("{} criteria failed", results.len() - passed),
        ));
    }
    Ok(())
}
