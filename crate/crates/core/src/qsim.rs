//! Monte Carlo of the reflected workload started from stationarity and
//! conditioned on a long busy period.
//!
//! The busy period `T` of `Q(s) = q₀ + X(s)` is a first-passage time of the
//! free netput, so surviving paths never need reflection. Compound-Poisson
//! paths are simulated event by event without discretisation; Brownian paths
//! use a grid with the Brownian-bridge crossing probability
//! `exp(−2ab/(σ²Δ))`, which is exact for each step and hence unbiased for
//! any grid.
//!
//! Deep survival events are sampled under the exponential tilt at the
//! minimiser of the netput exponent, which removes the drift. The initial
//! workload is always drawn from the untilted stationary law.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::exponent::{critical_point, Family, Kind, LevyModel, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Tilt {
    #[default]
    None,
    ThetaStar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StreamMode {
    /// Replication `i` draws from ChaCha8 stream `i` of the seeded generator.
    #[default]
    PerReplicationSubstream,
}

/// Replications per reduction chunk; fixed so sums do not depend on threads.
const CHUNK: u64 = 1 << 13;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub model: LevyModel,
    pub horizon: f64,
    pub replications: u64,
    pub seed: u64,
    pub tilt: Tilt,
    /// Brownian grid step; `None` uses `horizon/100`.
    pub brownian_step: Option<f64>,
    pub stream_mode: StreamMode,
}

impl SimConfig {
    pub fn new(model: LevyModel, horizon: f64, replications: u64, seed: u64) -> Self {
        Self {
            model,
            horizon,
            replications,
            seed,
            tilt: Tilt::None,
            brownian_step: None,
            stream_mode: StreamMode::PerReplicationSubstream,
        }
    }

    pub fn with_tilt(mut self, tilt: Tilt) -> Self {
        self.tilt = tilt;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(QsdError::InvalidConfig("replications must be at least 1".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(QsdError::InvalidConfig(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if let Some(h) = self.brownian_step {
            if !(h > 0.0 && h <= self.horizon / 100.0) {
                return Err(QsdError::InvalidConfig(format!(
                    "brownian_step must lie in (0, horizon/100], got {h}"
                )));
            }
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        self.brownian_step.unwrap_or(self.horizon / 100.0)
    }

    /// Everything needed to reproduce a run.
    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "model": ModelSpec::from_model(&self.model),
            "horizon": self.horizon,
            "replications": self.replications,
            "seed": self.seed,
            "tilt": self.tilt,
            "brownian_step": self.step(),
            "stream_mode": self.stream_mode,
            "rng": "ChaCha8, seed_from_u64(seed), stream = replication index",
            "reduction_chunk": CHUNK,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    /// `(Σw)²/Σw²` over the replication weights.
    pub n_effective: f64,
    pub replications: u64,
    pub seed: u64,
}

/// Netput dynamics in simulation form.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Dynamics {
    Brownian { sigma: f64, drift: f64 },
    Erlang { lambda: f64, shape: u32, nu: f64 },
}

impl Dynamics {
    fn of(model: &LevyModel) -> Result<Self> {
        match model.family {
            Family::LinearBrownian { sigma, c } => Ok(Self::Brownian { sigma, drift: -c }),
            Family::CompoundPoissonErlang { lambda, shape, nu } => Ok(Self::Erlang { lambda, shape, nu }),
            Family::Generic(_) => Err(QsdError::Unsupported(
                "no path sampler for user-supplied exponents".into(),
            )),
        }
    }
}

fn erlang<R: Rng + ?Sized>(shape: u32, nu: f64, rng: &mut R) -> f64 {
    let mut s = 0.0;
    for _ in 0..shape {
        let e: f64 = rng.sample(Exp1);
        s += e;
    }
    s / nu
}

fn exp_rate<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e / rate
}

/// A draw from the stationary workload law `π`, the law of `sup_t X(t)`.
pub fn sample_stationary<R: Rng + ?Sized>(model: &LevyModel, rng: &mut R) -> Result<f64> {
    match Dynamics::of(model)? {
        Dynamics::Brownian { sigma, drift } => Ok(exp_rate(-2.0 * drift / (sigma * sigma), rng)),
        Dynamics::Erlang { lambda, shape, nu } => {
            let rho = lambda * shape as f64 / nu;
            if !(rho < 1.0) {
                return Err(QsdError::Unstable(format!("load {rho} is not below 1")));
            }
            // Pollaczek–Khinchine: geometric sum of equilibrium-excess draws,
            // the excess of Erlang(k, ν) being a uniform mixture of Erlang(j, ν), j ≤ k
            let mut total = 0.0;
            while rng.random::<f64>() < rho {
                let j = rng.random_range(1..=shape);
                total += erlang(j, nu, rng);
            }
            Ok(total)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusyOutcome {
    pub survived: bool,
    /// Workload at the horizon; meaningful only when `survived`.
    pub q_t: f64,
}

/// Runs `q₀ + X` through increasing checkpoints, stopping at the first
/// passage below zero. `out[i]` is `Some(Q(tᵢ))` while the busy period lasts.
pub fn simulate_checkpoints<R: Rng + ?Sized>(
    model: &LevyModel,
    q0: f64,
    times: &[f64],
    step: f64,
    rng: &mut R,
    out: &mut Vec<Option<f64>>,
) -> Result<()> {
    if !(q0 > 0.0) {
        return Err(QsdError::InvalidInitial(q0));
    }
    out.clear();
    let dynamics = Dynamics::of(model)?;
    let mut q = q0;
    let mut s = 0.0;
    let mut alive = true;
    match dynamics {
        Dynamics::Erlang { lambda, shape, nu } => {
            let mut next = exp_rate(lambda, rng);
            for &t in times {
                while alive {
                    if next > t {
                        q -= t - s;
                        s = t;
                        alive = q > 0.0;
                        break;
                    }
                    q -= next - s;
                    s = next;
                    if q <= 0.0 {
                        alive = false;
                        break;
                    }
                    q += erlang(shape, nu, rng);
                    next = s + exp_rate(lambda, rng);
                }
                out.push(if alive { Some(q) } else { None });
            }
        }
        Dynamics::Brownian { sigma, drift } => {
            let var = sigma * sigma;
            for &t in times {
                if alive {
                    let n = ((t - s) / step - 1e-9).ceil().max(1.0) as usize;
                    let dt = (t - s) / n as f64;
                    let sd = sigma * dt.sqrt();
                    for _ in 0..n {
                        let z: f64 = rng.sample(StandardNormal);
                        let b = q + drift * dt + sd * z;
                        if b <= 0.0 || rng.random::<f64>() < (-2.0 * q * b / (var * dt)).exp() {
                            alive = false;
                            break;
                        }
                        q = b;
                    }
                    s = t;
                }
                out.push(if alive { Some(q) } else { None });
            }
        }
    }
    Ok(())
}

pub fn simulate_busy<R: Rng + ?Sized>(
    model: &LevyModel,
    q0: f64,
    t: f64,
    step: f64,
    rng: &mut R,
) -> Result<BusyOutcome> {
    let mut out = Vec::with_capacity(1);
    simulate_checkpoints(model, q0, &[t], step, rng, &mut out)?;
    Ok(match out[0] {
        Some(q_t) => BusyOutcome { survived: true, q_t },
        None => BusyOutcome {
            survived: false,
            q_t: 0.0,
        },
    })
}

/// `Q(t)` of the reflected workload (no absorption) started at `q0 ≥ 0`.
pub fn simulate_reflected<R: Rng + ?Sized>(model: &LevyModel, q0: f64, t: f64, step: f64, rng: &mut R) -> Result<f64> {
    if !(q0 >= 0.0) {
        return Err(QsdError::InvalidInitial(q0));
    }
    match Dynamics::of(model)? {
        Dynamics::Erlang { lambda, shape, nu } => {
            let mut q = q0;
            let mut s = 0.0;
            loop {
                let next = s + exp_rate(lambda, rng);
                if next > t {
                    return Ok((q - (t - s)).max(0.0));
                }
                q = (q - (next - s)).max(0.0) + erlang(shape, nu, rng);
                s = next;
            }
        }
        Dynamics::Brownian { sigma, drift } => {
            // Q(t) = Y(t) − min(0, inf Y) with Y = q₀ + X; the minimum over each
            // step is drawn from the bridge-minimum law
            let n = (t / step - 1e-9).ceil().max(1.0) as usize;
            let dt = t / n as f64;
            let sd = sigma * dt.sqrt();
            let mut y = q0;
            let mut low = 0.0_f64;
            for _ in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                let b = y + drift * dt + sd * z;
                let u: f64 = 1.0 - rng.random::<f64>();
                let d = b - y;
                let m = 0.5 * (y + b - (d * d - 2.0 * sigma * sigma * dt * u.ln()).sqrt());
                low = low.min(m);
                y = b;
            }
            Ok(y - low)
        }
    }
}

/// Model of the netput under the tilt, with the tilt parameter `η₀` and `ζ*`.
#[derive(Debug, Clone)]
pub struct TiltedModel {
    /// Dynamics of `X` under the tilted measure (zero drift).
    pub model: LevyModel,
    /// Tilt parameter for the netput `X`: `ϑ*` for SN, `−ϑ*` for SP models.
    pub eta: f64,
    pub zeta_star: f64,
}

impl TiltedModel {
    /// `dP/dP^η` on `F_t` for a path with `X(t) − X(0) = dx`.
    pub fn likelihood_ratio(&self, dx: f64, t: f64) -> f64 {
        (-self.eta * dx + self.zeta_star * t).exp()
    }
}

/// Exponential tilt `dP^η/dP = e^{η(X(t)−x) − ψ_X(η)t}` at the minimiser of
/// the netput exponent.
pub fn tilted_dynamics(model: &LevyModel) -> Result<TiltedModel> {
    let crit = critical_point(model)?;
    let eta = match model.kind {
        Kind::SpectrallyNegative => crit.theta_star,
        Kind::SpectrallyPositive => -crit.theta_star,
    };
    let family = match model.family {
        Family::LinearBrownian { sigma, .. } => Family::LinearBrownian { sigma, c: 0.0 },
        Family::CompoundPoissonErlang { lambda, shape, nu } => {
            // ψ̂(η + ϑ*) − ζ* is again an Erlang exponent with these rates
            let nu_t = nu + crit.theta_star;
            Family::CompoundPoissonErlang {
                lambda: lambda * (nu / nu_t).powi(shape as i32),
                shape,
                nu: nu_t,
            }
        }
        Family::Generic(_) => {
            return Err(QsdError::Unsupported(
                "no tilted sampler for user-supplied exponents".into(),
            ))
        }
    };
    Ok(TiltedModel {
        model: LevyModel {
            kind: model.kind,
            family,
        },
        eta,
        zeta_star: crit.zeta_star,
    })
}

/// Weighted sums for the ratio estimator `Σwf/Σw`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Acc {
    sw: f64,
    sw2: f64,
    swf: f64,
    sw2f: f64,
    sw2f2: f64,
}

impl Acc {
    fn push(&mut self, w: f64, f: f64) {
        let w2 = w * w;
        self.sw += w;
        self.sw2 += w2;
        self.swf += w * f;
        self.sw2f += w2 * f;
        self.sw2f2 += w2 * f * f;
    }

    fn merge(&mut self, o: &Acc) {
        self.sw += o.sw;
        self.sw2 += o.sw2;
        self.swf += o.swf;
        self.sw2f += o.sw2f;
        self.sw2f2 += o.sw2f2;
    }

    fn n_effective(&self) -> f64 {
        if self.sw2 > 0.0 {
            self.sw * self.sw / self.sw2
        } else {
            0.0
        }
    }

    fn mean(&self, n: u64, seed: u64) -> Estimate {
        let nf = n as f64;
        let mean = self.sw / nf;
        let var = if n > 1 {
            ((self.sw2 / nf - mean * mean) * nf / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        Estimate {
            value: mean,
            std_error: (var / nf).sqrt(),
            n_effective: self.n_effective(),
            replications: n,
            seed,
        }
    }

    fn ratio(&self, n: u64, seed: u64) -> Result<Estimate> {
        if !(self.sw > 0.0) {
            return Err(QsdError::DegenerateSample);
        }
        let r = self.swf / self.sw;
        // delta method: Var ≈ Σ w²(f − R)² / (Σw)²
        let num = (self.sw2f2 - 2.0 * r * self.sw2f + r * r * self.sw2).max(0.0);
        Ok(Estimate {
            value: r,
            std_error: num.sqrt() / self.sw,
            n_effective: self.n_effective(),
            replications: n,
            seed,
        })
    }
}

fn replication_rng(base: &ChaCha8Rng, rep: u64) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(rep);
    rng
}

/// Runs `body` over all replications in fixed chunks and merges the
/// per-chunk accumulators in chunk order.
fn reduce<F>(config: &SimConfig, slots: usize, body: F) -> Result<Vec<Acc>>
where
    F: Fn(&mut ChaCha8Rng, &mut [Acc], &mut Vec<Option<f64>>) -> Result<()> + Sync,
{
    config.validate()?;
    let base = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.replications;
    let chunks = n.div_ceil(CHUNK);
    let partial: Vec<Vec<Acc>> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<Acc>> {
            let mut acc = vec![Acc::default(); slots];
            let mut buf = Vec::new();
            for rep in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let mut rng = replication_rng(&base, rep);
                body(&mut rng, &mut acc, &mut buf)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![Acc::default(); slots];
    for p in &partial {
        for (t, a) in total.iter_mut().zip(p) {
            t.merge(a);
        }
    }
    Ok(total)
}

/// Path sampler shared by the estimators: draws `Q(0) ~ π` and the
/// (possibly tilted) path, and reports `(q0, Q(tᵢ), LRᵢ)` for survivors.
struct Sampler {
    model: LevyModel,
    tilted: Option<TiltedModel>,
    step: f64,
}

impl Sampler {
    fn new(config: &SimConfig) -> Result<Self> {
        let tilted = match config.tilt {
            Tilt::None => None,
            Tilt::ThetaStar => Some(tilted_dynamics(&config.model)?),
        };
        Dynamics::of(&config.model)?;
        Ok(Self {
            model: config.model.clone(),
            tilted,
            step: config.step(),
        })
    }

    fn run<R: Rng>(
        &self,
        times: &[f64],
        rng: &mut R,
        buf: &mut Vec<Option<f64>>,
        mut visit: impl FnMut(usize, f64, f64, f64),
    ) -> Result<()> {
        let q0 = sample_stationary(&self.model, rng)?;
        if q0 <= 0.0 {
            // the atom at zero starts with T = 0 and never survives
            for i in 0..times.len() {
                visit(i, q0, 0.0, 0.0);
            }
            return Ok(());
        }
        let dyn_model = self.tilted.as_ref().map_or(&self.model, |t| &t.model);
        simulate_checkpoints(dyn_model, q0, times, self.step, rng, buf)?;
        for (i, (&t, q)) in times.iter().zip(buf.iter()).enumerate() {
            match q {
                Some(q) => {
                    let w = self.tilted.as_ref().map_or(1.0, |tm| tm.likelihood_ratio(q - q0, t));
                    visit(i, q0, *q, w);
                }
                None => visit(i, q0, 0.0, 0.0),
            }
        }
        Ok(())
    }
}

/// `P_π(T > horizon)`.
pub fn estimate_survival(config: &SimConfig) -> Result<Estimate> {
    let sampler = Sampler::new(config)?;
    let times = [config.horizon];
    let acc = reduce(config, 1, |rng, acc, buf| {
        sampler.run(&times, rng, buf, |_, _, _, w| acc[0].push(w, 1.0))
    })?;
    Ok(acc[0].mean(config.replications, config.seed))
}

/// `E_π[e^{−αQ(0)−βQ(t)} | T > t]` at `t = horizon`, as a ratio estimator.
pub fn estimate_conditional_transform(config: &SimConfig, alpha: f64, beta: f64) -> Result<Estimate> {
    Ok(estimate_conditional_grid(config, alpha, beta, &[config.horizon])?
        .pop()
        .expect("one time"))
}

/// Conditional transforms at several times from shared, checkpointed paths.
pub fn estimate_conditional_grid(config: &SimConfig, alpha: f64, beta: f64, times: &[f64]) -> Result<Vec<Estimate>> {
    check_times(times, config.horizon)?;
    let sampler = Sampler::new(config)?;
    let acc = reduce(config, times.len(), |rng, acc, buf| {
        sampler.run(times, rng, buf, |i, q0, qt, w| {
            let f = if w > 0.0 { (-alpha * q0 - beta * qt).exp() } else { 0.0 };
            acc[i].push(w, f)
        })
    })?;
    acc.iter().map(|a| a.ratio(config.replications, config.seed)).collect()
}

fn check_times(times: &[f64], horizon: f64) -> Result<()> {
    if times.is_empty() || times.windows(2).any(|w| !(w[0] < w[1])) || !(times[0] > 0.0) {
        return Err(QsdError::InvalidConfig(
            "time grid must be non-empty, positive and increasing".into(),
        ));
    }
    if times[times.len() - 1] > horizon {
        return Err(QsdError::InvalidConfig(
            "time grid exceeds the simulation horizon".into(),
        ));
    }
    Ok(())
}

/// One row of a simulated convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub t: f64,
    pub estimate: Estimate,
    pub analytic_conditional: f64,
    /// `t·(estimate − μ̃)`.
    pub sim_profile: f64,
    pub analytic_profile: f64,
    pub predicted_limit: f64,
}

/// Simulated conditional transforms paired with the inverted analytic values.
pub fn convergence_study(
    config: &SimConfig,
    an: &crate::expansion::Analysis,
    alpha: f64,
    beta: f64,
    times: &[f64],
    inversion: &crate::transform::InversionConfig,
) -> Result<Vec<StudyRow>> {
    let prof = crate::transform::rate_profile(an, alpha, beta, times, inversion)?;
    let est = estimate_conditional_grid(config, alpha, beta, times)?;
    Ok(times
        .iter()
        .zip(est)
        .zip(prof.grid.conditional.iter().zip(&prof.profile))
        .map(|((&t, e), (&c, &p))| StudyRow {
            t,
            estimate: e,
            analytic_conditional: c,
            sim_profile: if alpha == 0.0 && beta == 0.0 {
                0.0
            } else {
                t * (e.value - prof.mu_tilde)
            },
            analytic_profile: p,
            predicted_limit: prof.predicted_limit,
        })
        .collect())
}

/// Brownian survival at `horizon` on the configured grid and on the grid
/// with half the step, driven by the same Gaussian increments.
pub fn survival_step_halving(config: &SimConfig) -> Result<(Estimate, Estimate)> {
    let Family::LinearBrownian { .. } = config.model.family else {
        return Err(QsdError::Unsupported(
            "step halving applies to Brownian models only".into(),
        ));
    };
    let sampler = Sampler::new(config)?;
    let dyn_model = sampler.tilted.as_ref().map_or(&sampler.model, |t| &t.model);
    let Dynamics::Brownian { sigma, drift } = Dynamics::of(dyn_model)? else {
        unreachable!()
    };
    let t = config.horizon;
    let n = (t / config.step() - 1e-9).ceil().max(1.0) as usize;
    let dt = t / (2 * n) as f64;
    let var = sigma * sigma;
    let sd = sigma * dt.sqrt();
    let hit = |a: f64, b: f64, h: f64, u: f64| b <= 0.0 || u < (-2.0 * a * b / (var * h)).exp();
    let acc = reduce(config, 2, |rng, acc, _| {
        let q0 = sample_stationary(&sampler.model, rng)?;
        let (mut coarse, mut fine) = (q0 > 0.0, q0 > 0.0);
        let mut q = q0;
        for _ in 0..n {
            if !coarse && !fine {
                break;
            }
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let (u1, u2, uc): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
            let mid = q + drift * dt + sd * z1;
            let end = mid + drift * dt + sd * z2;
            fine = fine && !hit(q, mid, dt, u1) && !hit(mid, end, dt, u2);
            coarse = coarse && !hit(q, end, 2.0 * dt, uc);
            q = end;
        }
        let w = sampler.tilted.as_ref().map_or(1.0, |tm| tm.likelihood_ratio(q - q0, t));
        acc[0].push(if coarse { w } else { 0.0 }, 1.0);
        acc[1].push(if fine { w } else { 0.0 }, 1.0);
        Ok(())
    })?;
    Ok((
        acc[0].mean(config.replications, config.seed),
        acc[1].mean(config.replications, config.seed),
    ))
}

/// Two-sample Kolmogorov–Smirnov statistic; sorts both inputs.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// KS statistic between `Q(0) ~ π` and `Q(t)` of the reflected process
/// started from an independent stationary draw, with the 1% critical value.
pub fn stationarity_check(model: &LevyModel, t: f64, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let step = t / 1000.0;
    let base = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(f64, f64)> = (0..samples as u64)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let mut r = replication_rng(&base, 2 * i);
            let a = sample_stationary(model, &mut r)?;
            let mut r = replication_rng(&base, 2 * i + 1);
            let q0 = sample_stationary(model, &mut r)?;
            Ok((a, simulate_reflected(model, q0, t, step, &mut r)?))
        })
        .collect::<Result<_>>()?;
    let (mut a, mut b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let d = ks_two_sample(&mut a, &mut b);
    let n = samples as f64;
    Ok((d, 1.628 * (2.0 / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bm() -> LevyModel {
        LevyModel::brownian(Kind::SpectrallyPositive, 1.0, 1.0).unwrap()
    }

    fn me2() -> LevyModel {
        LevyModel::cp_erlang(1.0, 2, 3.0).unwrap()
    }

    #[test]
    fn tilted_models_have_zero_drift() {
        for m in [bm(), me2(), LevyModel::cp_erlang(0.5, 3, 5.0).unwrap()] {
            let t = tilted_dynamics(&m).unwrap();
            assert!(t.model.psi(0.0, 1).unwrap().abs() < 1e-12);
            assert_eq!(t.model.psi(0.0, 0).unwrap(), 0.0);
        }
        let t = tilted_dynamics(&bm()).unwrap();
        assert_eq!(t.eta, 1.0);
        assert_eq!(t.zeta_star, -0.5);
    }

    #[test]
    fn tilted_erlang_exponent_is_shifted_original() {
        let m = me2();
        let crit = critical_point(&m).unwrap();
        let t = tilted_dynamics(&m).unwrap();
        for eta in [-0.5, 0.0, 0.7, 3.0] {
            let lhs = t.model.psi(eta, 0).unwrap();
            let rhs = m.psi(eta + crit.theta_star, 0).unwrap() - crit.zeta_star;
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn drift_to_zero_without_arrivals() {
        // a tiny arrival rate makes the deterministic descent near certain
        let m = LevyModel::cp_erlang(1e-12, 2, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let o = simulate_busy(&m, 0.5, 1.0, 0.01, &mut rng).unwrap();
        assert!(!o.survived);
        let o = simulate_busy(&m, 1.5, 1.0, 0.01, &mut rng).unwrap();
        assert!(o.survived && (o.q_t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn invalid_initial_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            simulate_busy(&bm(), 0.0, 1.0, 0.01, &mut rng),
            Err(QsdError::InvalidInitial(_))
        ));
    }

    #[test]
    fn zero_arguments_give_exact_one() {
        let cfg = SimConfig::new(bm(), 1.0, 2000, 7);
        let e = estimate_conditional_transform(&cfg, 0.0, 0.0).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.std_error, 0.0);
        assert!(e.n_effective <= e.replications as f64);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let cfg = SimConfig::new(me2(), 2.0, 20_000, 11).with_tilt(Tilt::ThetaStar);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_conditional_transform(&cfg, 0.5, 0.5).unwrap())
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn ks_statistic() {
        let mut a = vec![1.0, 2.0, 3.0];
        let mut b = vec![1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&mut a, &mut b), 0.0);
        let mut c = vec![10.0, 11.0];
        assert_eq!(ks_two_sample(&mut a, &mut c), 1.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SimConfig::new(bm(), 1.0, 0, 1);
        assert!(cfg.validate().is_err());
        cfg.replications = 10;
        cfg.brownian_step = Some(0.5);
        assert!(cfg.validate().is_err());
        cfg.brownian_step = Some(0.01);
        assert!(cfg.validate().is_ok());
    }
}
