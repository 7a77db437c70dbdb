//! Event-driven simulation of the pair chain, the lattice-embedded sticky
//! walk and the full particle system on a ring, with Monte Carlo estimators.

use std::f64::consts::SQRT_2;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp1, Gamma, Poisson};
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{effective_rates, ModelParams, PresetKind, ProcessPreset};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation parameter: {0}")]
    InvalidParameter(String),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
}

fn invalid(msg: impl Into<String>) -> SimError {
    SimError::InvalidParameter(msg.into())
}

fn exp1<R: Rng>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// Independent generator for trajectory `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PairState {
    pub u: i64,
    pub w: u64,
}

/// The (sum, distance) chain driven by its own random stream.
#[derive(Debug, Clone)]
pub struct PairChain {
    params: ModelParams,
    pub state: PairState,
    pub time: f64,
    rng: ChaCha8Rng,
}

impl PairChain {
    pub fn new(params: ModelParams, initial: PairState, rng: ChaCha8Rng) -> Self {
        Self { params, state: initial, time: 0.0, rng }
    }

    /// Time of the next jump, without performing it. `None` if the state is absorbing.
    fn holding(&mut self) -> Option<f64> {
        let r = effective_rates(&self.params, self.state.w).sum_total;
        if r == 0.0 {
            return None;
        }
        let e: f64 = exp1(&mut self.rng);
        Some(e / r)
    }

    fn jump(&mut self, track_u: bool) {
        let r = effective_rates(&self.params, self.state.w);
        let up = self.rng.gen::<f64>() * r.sum_total < r.dist_up;
        self.state.w = if up { self.state.w + 1 } else { self.state.w - 1 };
        if track_u {
            self.state.u += if self.rng.gen::<f64>() < self.params.p { 1 } else { -1 };
        }
    }

    /// Advance to the next event if it happens before `horizon`; returns false otherwise,
    /// leaving the clock at `horizon`.
    pub fn advance(&mut self, horizon: f64, track_u: bool) -> bool {
        match self.holding() {
            Some(dt) if self.time + dt <= horizon => {
                self.time += dt;
                self.jump(track_u);
                true
            }
            _ => {
                self.time = horizon;
                false
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub stream: u64,
    pub t_end: f64,
    /// Jump times, starting with 0 for the initial state.
    pub times: Vec<f64>,
    pub states: Vec<PairState>,
}

impl Trajectory {
    pub fn initial(&self) -> PairState {
        self.states[0]
    }

    /// State at time t (right-continuous).
    pub fn state_at(&self, t: f64) -> PairState {
        let i = self.times.partition_point(|&s| s <= t);
        self.states[i.saturating_sub(1)]
    }
}

fn check_horizon(t_end: f64) -> Result<(), SimError> {
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(invalid(format!("t_end must be finite and >= 0, got {t_end}")));
    }
    Ok(())
}

/// One exact trajectory of the pair chain on [0, t_end].
pub fn simulate_pair(params: &ModelParams, initial: PairState, t_end: f64, seed: u64) -> Result<Trajectory, SimError> {
    simulate_pair_stream(params, initial, t_end, seed, 0)
}

pub fn simulate_pair_stream(
    params: &ModelParams,
    initial: PairState,
    t_end: f64,
    seed: u64,
    stream: u64,
) -> Result<Trajectory, SimError> {
    check_horizon(t_end)?;
    let mut chain = PairChain::new(*params, initial, stream_rng(seed, stream));
    let mut times = vec![0.0];
    let mut states = vec![initial];
    while chain.advance(t_end, true) {
        times.push(chain.time);
        states.push(chain.state);
    }
    Ok(Trajectory { seed, stream, t_end, times, states })
}

/// `paths` independent trajectories on streams 0..paths.
pub fn simulate_pairs(
    params: &ModelParams,
    initial: PairState,
    t_end: f64,
    seed: u64,
    paths: usize,
) -> Result<Vec<Trajectory>, SimError> {
    check_horizon(t_end)?;
    (0..paths as u64).into_par_iter().map(|s| simulate_pair_stream(params, initial, t_end, seed, s)).collect()
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        Self { mean, se: jackknife_se(xs), n }
    }

    /// (mean − value) in units of the standard error.
    pub fn z_score(&self, value: f64) -> f64 {
        (self.mean - value) / self.se
    }
}

/// Leave-one-out jackknife standard error of the sample mean.
pub fn jackknife_se(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let total: f64 = xs.iter().sum();
    let nf = n as f64;
    let loo = |x: f64| (total - x) / (nf - 1.0);
    let mean_loo = xs.iter().map(|&x| loo(x)).sum::<f64>() / nf;
    let ss: f64 = xs.iter().map(|&x| (loo(x) - mean_loo).powi(2)).sum();
    ((nf - 1.0) / nf * ss).sqrt()
}

/// P_w(w(t) = 0) at each of the sorted `times`, from `paths` trajectories.
pub fn occupation_at_zero(
    params: &ModelParams,
    w0: u64,
    times: &[f64],
    paths: usize,
    seed: u64,
) -> Result<Vec<Estimate>, SimError> {
    if times.windows(2).any(|p| p[0] > p[1]) || times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(invalid("times must be finite, nonnegative and sorted"));
    }
    let rows: Vec<Vec<f64>> = (0..paths as u64)
        .into_par_iter()
        .map(|s| {
            let mut chain = PairChain::new(*params, PairState { u: 0, w: w0 }, stream_rng(seed, s));
            times
                .iter()
                .map(|&t| {
                    while chain.advance(t, false) {}
                    if chain.state.w == 0 {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    Ok(columns(&rows, times.len()).iter().map(|c| Estimate::from_samples(c)).collect())
}

fn columns(rows: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    (0..k).map(|j| rows.iter().map(|r| r[j]).collect()).collect()
}

/// ∫e^{−λt} P_w(w(t) = 0) dt for each λ.
///
/// Each path runs to an independent Exp(μ) time τ with μ = min λ and reports
/// ∫₀^τ e^{−(λ−μ)t} 1{w(t)=0} dt, whose mean is the transform.
pub fn occupation_laplace(
    params: &ModelParams,
    w0: u64,
    lambdas: &[f64],
    paths: usize,
    seed: u64,
) -> Result<Vec<Estimate>, SimError> {
    let mu = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(invalid("lambdas must be positive"));
    }
    let rows: Vec<Vec<f64>> = (0..paths as u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream_rng(seed, s);
            let tau = exp1(&mut rng) / mu;
            let mut chain = PairChain::new(*params, PairState { u: 0, w: w0 }, rng);
            let mut acc = vec![0.0; lambdas.len()];
            loop {
                let start = chain.time;
                let at_zero = chain.state.w == 0;
                let more = chain.advance(tau, false);
                if at_zero {
                    for (a, &l) in acc.iter_mut().zip(lambdas) {
                        *a += discounted(l - mu, start, chain.time);
                    }
                }
                if !more {
                    break;
                }
            }
            acc
        })
        .collect();
    Ok(columns(&rows, lambdas.len()).iter().map(|c| Estimate::from_samples(c)).collect())
}

/// ∫_a^b e^{−ct} dt.
fn discounted(c: f64, a: f64, b: f64) -> f64 {
    if c == 0.0 {
        b - a
    } else {
        ((-c * a).exp() - (-c * b).exp()) / c
    }
}

/// The distance chain with θ_ε = √2γ/ε started at round(√2z/ε), viewed through
/// W_ε(t) = ε w(ε⁻²t)/√2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StickyEmbedding {
    pub z: f64,
    pub gamma: f64,
    pub eps: f64,
}

impl StickyEmbedding {
    pub fn new(z: f64, gamma: f64, eps: f64) -> Result<Self, SimError> {
        if !(z.is_finite() && z >= 0.0) {
            return Err(invalid(format!("z must be >= 0, got {z}")));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(invalid(format!("gamma must be finite and >= 0, got {gamma}")));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(invalid(format!("eps must lie in (0, 1), got {eps}")));
        }
        Ok(Self { z, gamma, eps })
    }

    pub fn theta(&self) -> f64 {
        SQRT_2 * self.gamma / self.eps
    }

    pub fn w0(&self) -> u64 {
        (SQRT_2 * self.z / self.eps).round() as u64
    }

    pub fn params(&self) -> ModelParams {
        ModelParams { alpha: 1.0, p: 0.5, theta: self.theta() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StickyPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

/// W_ε sampled on the sorted macroscopic `grid`.
pub fn simulate_sticky_bm(emb: &StickyEmbedding, grid: &[f64], seed: u64) -> Result<StickyPath, SimError> {
    if grid.windows(2).any(|p| p[0] > p[1]) || grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(invalid("grid must be finite, nonnegative and sorted"));
    }
    let scale = emb.eps * emb.eps;
    let mut chain = PairChain::new(emb.params(), PairState { u: 0, w: emb.w0() }, stream_rng(seed, 0));
    let values = grid
        .iter()
        .map(|&t| {
            while chain.advance(t / scale, false) {}
            emb.eps * chain.state.w as f64 / SQRT_2
        })
        .collect();
    Ok(StickyPath { times: grid.to_vec(), values })
}

/// ∫e^{−λt} P(W_ε(t) = 0) dt, estimated from the embedded chain.
pub fn sticky_occupation_laplace(
    emb: &StickyEmbedding,
    lambdas: &[f64],
    paths: usize,
    seed: u64,
) -> Result<Vec<Estimate>, SimError> {
    let scale = emb.eps * emb.eps;
    let chain_lambdas: Vec<f64> = lambdas.iter().map(|l| l * scale).collect();
    let est = occupation_laplace(&emb.params(), emb.w0(), &chain_lambdas, paths, seed)?;
    Ok(est.into_iter().map(|e| Estimate { mean: e.mean * scale, se: e.se * scale, n: e.n }).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharEstimate {
    pub value: Complex64,
    /// Jackknife standard errors of the real and imaginary parts.
    pub se: (f64, f64),
    pub n: usize,
}

pub const MIN_CHAR_SAMPLES: usize = 100;

/// Sample mean of e^{−i(κ(U(t) − U) + mW(t))}.
///
/// With `eps = None` the raw coordinates (u(t) − u, w(t)) are used at time t.
/// With `eps = Some(ε)` the rescaled pair (U_ε, W_ε) is used at macroscopic time t.
pub fn estimate_char_function(
    trajectories: &[Trajectory],
    kappa: f64,
    m: f64,
    t: f64,
    eps: Option<f64>,
) -> Result<CharEstimate, SimError> {
    if trajectories.len() < MIN_CHAR_SAMPLES {
        return Err(SimError::InsufficientSamples { needed: MIN_CHAR_SAMPLES, got: trajectories.len() });
    }
    let (scale, time) = match eps {
        Some(e) => (e / SQRT_2, t / (e * e)),
        None => (1.0, t),
    };
    if let Some(tr) = trajectories.iter().find(|tr| tr.t_end < time) {
        return Err(invalid(format!("trajectory ends at {} before {time}", tr.t_end)));
    }
    let (re, im): (Vec<f64>, Vec<f64>) = trajectories
        .iter()
        .map(|tr| {
            let s = tr.state_at(time);
            let phase = -(kappa * (s.u - tr.initial().u) as f64 + m * s.w as f64) * scale;
            let z = Complex64::from_polar(1.0, phase);
            (z.re, z.im)
        })
        .unzip();
    let (a, b) = (Estimate::from_samples(&re), Estimate::from_samples(&im));
    Ok(CharEstimate { value: Complex64::new(a.mean, b.mean), se: (a.se, b.se), n: re.len() })
}

/// Occupation numbers on a ring of L sites.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeField {
    pub preset: ProcessPreset,
    pub occupations: Vec<u32>,
}

/// Single-site law of an initial product measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialLaw {
    /// The invariant product law with density ρ (negative binomial, binomial or Poisson).
    Stationary { rho: f64 },
    Poisson { rho: f64 },
    Deterministic { n: u32 },
}

impl LatticeField {
    pub fn new(preset: ProcessPreset, occupations: Vec<u32>) -> Result<Self, SimError> {
        if occupations.len() < 3 {
            return Err(invalid("a ring needs at least 3 sites"));
        }
        if let PresetKind::Sep { j } = preset.kind {
            if occupations.iter().any(|&n| n > j) {
                return Err(invalid(format!("SEP({j}) occupation above capacity")));
            }
        }
        Ok(Self { preset, occupations })
    }

    /// Product measure on `sites` sites with per-site laws given by `law(x)`.
    pub fn product<F>(preset: ProcessPreset, sites: usize, law: F, rng: &mut ChaCha8Rng) -> Result<Self, SimError>
    where
        F: Fn(usize) -> InitialLaw,
    {
        let occupations = (0..sites).map(|x| sample_site(&preset, law(x), rng)).collect::<Result<Vec<_>, _>>()?;
        Self::new(preset, occupations)
    }

    pub fn len(&self) -> usize {
        self.occupations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupations.is_empty()
    }
}

fn sample_site(preset: &ProcessPreset, law: InitialLaw, rng: &mut ChaCha8Rng) -> Result<u32, SimError> {
    let poisson = |rho: f64, rng: &mut ChaCha8Rng| -> Result<u32, SimError> {
        if rho == 0.0 {
            return Ok(0);
        }
        let d = Poisson::new(rho).map_err(|e| invalid(e.to_string()))?;
        Ok(d.sample(rng) as u32)
    };
    match law {
        InitialLaw::Deterministic { n } => Ok(n),
        InitialLaw::Poisson { rho } => poisson(rho, rng),
        InitialLaw::Stationary { rho } => match preset.kind {
            PresetKind::Irw => poisson(rho, rng),
            PresetKind::Sip { k } => {
                if rho == 0.0 {
                    return Ok(0);
                }
                let g = Gamma::new(k, rho / k).map_err(|e| invalid(e.to_string()))?;
                let lam = g.sample(rng);
                poisson(lam, rng)
            }
            PresetKind::Sep { j } => {
                let pr = rho / j as f64;
                if !(0.0..=1.0).contains(&pr) {
                    return Err(invalid(format!("SEP({j}) density must lie in [0, {j}]")));
                }
                let b = Binomial::new(j as u64, pr).map_err(|e| invalid(e.to_string()))?;
                Ok(b.sample(rng) as u32)
            }
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldRun {
    pub snapshots: Vec<(f64, Vec<u32>)>,
    pub events: u64,
}

/// Gillespie simulation of the reference process on the ring, recording the
/// configuration at each of the sorted `record_times` (all ≤ t_end).
pub fn simulate_field(field: &LatticeField, t_end: f64, seed: u64, record_times: &[f64]) -> Result<FieldRun, SimError> {
    simulate_field_stream(field, t_end, seed, 0, record_times)
}

pub fn simulate_field_stream(
    field: &LatticeField,
    t_end: f64,
    seed: u64,
    stream: u64,
    record_times: &[f64],
) -> Result<FieldRun, SimError> {
    check_horizon(t_end)?;
    if record_times.windows(2).any(|p| p[0] > p[1]) || record_times.iter().any(|&t| !(0.0..=t_end).contains(&t)) {
        return Err(invalid("record_times must be sorted and within [0, t_end]"));
    }
    let preset = field.preset;
    let n = field.len();
    let mut eta = field.occupations.clone();
    let mut rng = stream_rng(seed, stream);
    // rates[2b] is the jump b → b+1, rates[2b+1] the jump b+1 → b
    let bond = |eta: &[u32], b: usize| -> (f64, f64) {
        let (a, c) = (eta[b], eta[(b + 1) % n]);
        (preset.bond_rate(a, c), preset.bond_rate(c, a))
    };
    let mut rates = vec![0.0; 2 * n];
    for b in 0..n {
        let (r, l) = bond(&eta, b);
        rates[2 * b] = r;
        rates[2 * b + 1] = l;
    }
    let mut total: f64 = rates.iter().sum();
    let mut t = 0.0;
    let mut snapshots = Vec::with_capacity(record_times.len());
    let mut next_record = 0;
    let mut events = 0u64;
    loop {
        let dt = if total > 0.0 { exp1(&mut rng) / total } else { f64::INFINITY };
        let t_next = t + dt;
        while next_record < record_times.len() && record_times[next_record] < t_next {
            snapshots.push((record_times[next_record], eta.clone()));
            next_record += 1;
        }
        if t_next > t_end {
            break;
        }
        t = t_next;
        let mut target = rng.gen::<f64>() * total;
        let mut k = rates.len() - 1;
        for (i, &r) in rates.iter().enumerate() {
            if target < r {
                k = i;
                break;
            }
            target -= r;
        }
        let b = k / 2;
        let (from, to) = if k.is_multiple_of(2) { (b, (b + 1) % n) } else { ((b + 1) % n, b) };
        if eta[from] == 0 {
            continue;
        }
        eta[from] -= 1;
        eta[to] += 1;
        events += 1;
        for bb in [(b + n - 1) % n, b, (b + 1) % n] {
            let (r, l) = bond(&eta, bb);
            rates[2 * bb] = r;
            rates[2 * bb + 1] = l;
        }
        // summing afresh avoids drift from incremental updates; rings are small
        total = rates.iter().sum();
    }
    Ok(FieldRun { snapshots, events })
}
