//! Brute-force reference: the (sum, distance) chain on a finite box, solved by
//! uniformization. Mass that would leave the box is absorbed and tracked.

use std::collections::BTreeMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::model::{effective_rates, ModelParams, ProcessPreset};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("truncation leak {leak:e} exceeds {tol:e}; enlarge the box")]
    TruncationDominates { leak: f64, tol: f64 },
    #[error("state (u={u}, w={w}) lies outside the box")]
    OutsideBox { u: i64, w: u64 },
    #[error("invalid oracle setting: {0}")]
    InvalidSetting(String),
}

/// Leak above which results are rejected.
pub const LEAK_TOL: f64 = 1e-8;

/// The generator restricted to 0 ≤ w ≤ w_max and, optionally, |u| ≤ u_max.
#[derive(Debug, Clone)]
pub struct TruncatedGenerator {
    params: ModelParams,
    w_max: u64,
    u_max: Option<i64>,
    offsets: Vec<usize>,
    targets: Vec<(usize, f64)>,
    stay: Vec<f64>,
    leak: Vec<f64>,
    rate_bound: f64,
}

/// Probability vector over box states plus the absorbed mass.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDistribution {
    pub probs: Vec<f64>,
    pub leak: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeQuadrature {
    /// Bound on the discarded tail of the uniformized Laplace series.
    pub tail_tol: f64,
}

impl Default for TimeQuadrature {
    fn default() -> Self {
        Self { tail_tol: 1e-13 }
    }
}

impl TruncatedGenerator {
    pub fn new(params: ModelParams, w_max: u64, u_max: i64) -> Result<Self, OracleError> {
        if u_max < 1 {
            return Err(OracleError::InvalidSetting("u_max must be >= 1".into()));
        }
        Self::build(params, w_max, Some(u_max))
    }

    /// The distance chain alone; the sum coordinate is not tracked.
    pub fn distance_only(params: ModelParams, w_max: u64) -> Result<Self, OracleError> {
        Self::build(params, w_max, None)
    }

    fn build(params: ModelParams, w_max: u64, u_max: Option<i64>) -> Result<Self, OracleError> {
        if w_max < 2 {
            return Err(OracleError::InvalidSetting("w_max must be >= 2".into()));
        }
        let mut gen = Self {
            params,
            w_max,
            u_max,
            offsets: vec![0],
            targets: Vec::new(),
            stay: Vec::new(),
            leak: Vec::new(),
            rate_bound: 0.0,
        };
        let n = gen.len();
        let (p, q) = (params.p, params.q());
        gen.rate_bound = (0..=w_max.min(2)).map(|w| effective_rates(&params, w).sum_total).fold(0.0, f64::max);
        for i in 0..n {
            let (u, w) = gen.state(i);
            let r = effective_rates(&params, w);
            let mut out = 0.0;
            let mut leak = 0.0;
            let moves = [(1, r.dist_up), (-1, r.dist_down)];
            for (dw, rate) in moves {
                if rate == 0.0 {
                    continue;
                }
                let w2 = w as i64 + dw;
                let splits: &[(i64, f64)] = if gen.u_max.is_some() { &[(1, p), (-1, q)] } else { &[(0, 1.0)] };
                for &(du, share) in splits {
                    let rr = rate * share;
                    if rr == 0.0 {
                        continue;
                    }
                    out += rr;
                    match (w2 >= 0).then(|| gen.index(u + du, w2 as u64)).flatten() {
                        Some(j) => gen.targets.push((j, rr / gen.rate_bound)),
                        None => leak += rr / gen.rate_bound,
                    }
                }
            }
            gen.offsets.push(gen.targets.len());
            gen.stay.push(1.0 - out / gen.rate_bound);
            gen.leak.push(leak);
        }
        Ok(gen)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn w_max(&self) -> u64 {
        self.w_max
    }

    pub fn u_max(&self) -> Option<i64> {
        self.u_max
    }

    /// Number of box states.
    pub fn len(&self) -> usize {
        let uw = self.u_max.map_or(1, |m| (2 * m + 1) as usize);
        uw * (self.w_max as usize + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Uniformization rate Λ.
    pub fn rate_bound(&self) -> f64 {
        self.rate_bound
    }

    pub fn index(&self, u: i64, w: u64) -> Option<usize> {
        if w > self.w_max {
            return None;
        }
        let width = self.w_max as usize + 1;
        match self.u_max {
            Some(m) if u.abs() <= m => Some((u + m) as usize * width + w as usize),
            Some(_) => None,
            None => Some(w as usize),
        }
    }

    /// (u, w) of a box index; u is 0 when the sum is not tracked.
    pub fn state(&self, i: usize) -> (i64, u64) {
        let width = self.w_max as usize + 1;
        match self.u_max {
            Some(m) => ((i / width) as i64 - m, (i % width) as u64),
            None => (0, i as u64),
        }
    }

    pub fn point_mass(&self, u: i64, w: u64) -> Result<Vec<f64>, OracleError> {
        let i = self.index(u, w).ok_or(OracleError::OutsideBox { u, w })?;
        let mut v = vec![0.0; self.len()];
        v[i] = 1.0;
        Ok(v)
    }

    /// One step of the uniformized chain; returns the mass sent to the leak.
    fn step(&self, v: &[f64], out: &mut [f64]) -> f64 {
        let mut leak = 0.0;
        for (o, (x, s)) in out.iter_mut().zip(v.iter().zip(&self.stay)) {
            *o = x * s;
        }
        for (i, &x) in v.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for &(j, pr) in &self.targets[self.offsets[i]..self.offsets[i + 1]] {
                out[j] += x * pr;
            }
            leak += x * self.leak[i];
        }
        leak
    }

    /// Distribution at time t started from `init` (a sub-probability vector).
    pub fn propagate(&self, init: &[f64], t: f64) -> Result<BoxDistribution, OracleError> {
        let d = self.propagate_leaky(init, t)?;
        if d.leak > LEAK_TOL {
            return Err(OracleError::TruncationDominates { leak: d.leak, tol: LEAK_TOL });
        }
        Ok(d)
    }

    /// As [`Self::propagate`] but without rejecting large leaks.
    pub fn propagate_leaky(&self, init: &[f64], t: f64) -> Result<BoxDistribution, OracleError> {
        if init.len() != self.len() {
            return Err(OracleError::InvalidSetting("initial vector has the wrong length".into()));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(OracleError::InvalidSetting(format!("t must be >= 0, got {t}")));
        }
        let mean = self.rate_bound * t;
        let mut v = init.to_vec();
        let mut next = vec![0.0; v.len()];
        let mut probs = vec![0.0; v.len()];
        let (mut leak_now, mut leak, mut covered) = (0.0, 0.0, 0.0);
        let mut n = 0u64;
        loop {
            let weight = poisson_weight(n, mean);
            for (p, x) in probs.iter_mut().zip(&v) {
                *p += weight * x;
            }
            leak += weight * leak_now;
            covered += weight;
            if n >= poisson_horizon(mean) {
                break;
            }
            leak_now += self.step(&v, &mut next);
            std::mem::swap(&mut v, &mut next);
            n += 1;
        }
        // mass dropped with the Poisson tail counts as leak
        leak += (1.0 - covered).max(0.0) * init.iter().sum::<f64>();
        Ok(BoxDistribution { probs, leak })
    }

    /// ∫e^{−λt} P_t dt for each λ, taken term by term over the uniformized series.
    pub fn laplace(&self, init: &[f64], lambdas: &[f64], tq: &TimeQuadrature) -> Result<Vec<BoxDistribution>, OracleError> {
        if init.len() != self.len() {
            return Err(OracleError::InvalidSetting("initial vector has the wrong length".into()));
        }
        let lam_min = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(lam_min > 0.0) {
            return Err(OracleError::InvalidSetting("lambda must be > 0".into()));
        }
        let big = self.rate_bound;
        let mut out: Vec<BoxDistribution> =
            lambdas.iter().map(|_| BoxDistribution { probs: vec![0.0; self.len()], leak: 0.0 }).collect();
        // weight_n(λ) = Λⁿ/(λ+Λ)^{n+1}
        let mut weights: Vec<f64> = lambdas.iter().map(|l| 1.0 / (l + big)).collect();
        let ratios: Vec<f64> = lambdas.iter().map(|l| big / (l + big)).collect();
        let worst = big / (lam_min + big);
        let mut v = init.to_vec();
        let mut next = vec![0.0; v.len()];
        let mut leak_now = 0.0;
        let mut tail = 1.0 / lam_min;
        while tail > tq.tail_tol {
            for ((dist, w), r) in out.iter_mut().zip(weights.iter_mut()).zip(&ratios) {
                for (p, x) in dist.probs.iter_mut().zip(&v) {
                    *p += *w * x;
                }
                dist.leak += *w * leak_now;
                *w *= r;
            }
            leak_now += self.step(&v, &mut next);
            std::mem::swap(&mut v, &mut next);
            tail *= worst;
        }
        for (dist, l) in out.iter_mut().zip(lambdas) {
            // report the leak as a probability: λ∫e^{−λt} leak(t) dt
            dist.leak *= l;
            if dist.leak > LEAK_TOL {
                return Err(OracleError::TruncationDominates { leak: dist.leak, tol: LEAK_TOL });
            }
        }
        Ok(out)
    }
}

fn ln_factorial(n: u64) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Number of Poisson terms after which the remaining tail is negligible.
fn poisson_horizon(mean: f64) -> u64 {
    (mean + 12.0 * mean.sqrt() + 40.0).ceil() as u64
}

fn poisson_weight(n: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (-mean + n as f64 * mean.ln() - ln_factorial(n)).exp()
}

/// Dense P_t on a small box, with per-row leak.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub n: usize,
    pub data: Vec<f64>,
    pub row_leak: Vec<f64>,
}

impl TransitionMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn matmul(&self, other: &TransitionMatrix) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }
}

const DENSE_LIMIT: usize = 4096;

pub fn transition_matrix(gen: &TruncatedGenerator, t: f64) -> Result<TransitionMatrix, OracleError> {
    let n = gen.len();
    if n > DENSE_LIMIT {
        return Err(OracleError::InvalidSetting(format!("{n} states is too many for a dense matrix")));
    }
    let mut data = Vec::with_capacity(n * n);
    let mut row_leak = Vec::with_capacity(n);
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let d = gen.propagate_leaky(&e, t)?;
        data.extend_from_slice(&d.probs);
        row_leak.push(d.leak);
    }
    Ok(TransitionMatrix { n, data, row_leak })
}

/// Numerical G(w, w′, κ, λ) for every w′ in the box and every (λ, κ) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericKernelTable {
    pub w: u64,
    pub lambdas: Vec<f64>,
    pub kappas: Vec<f64>,
    /// values[l][k][w′]
    pub values: Vec<Vec<Vec<Complex64>>>,
    pub leak: Vec<f64>,
}

impl NumericKernelTable {
    pub fn get(&self, wp: u64, li: usize, ki: usize) -> Complex64 {
        self.values[li][ki][wp as usize]
    }
}

/// One propagation from (0, w) gives G for all λ, κ and w′.
pub fn numeric_g_table(
    gen: &TruncatedGenerator,
    w: u64,
    lambdas: &[f64],
    kappas: &[f64],
    tq: &TimeQuadrature,
) -> Result<NumericKernelTable, OracleError> {
    if gen.u_max().is_none() {
        return Err(OracleError::InvalidSetting("numeric G needs the sum coordinate".into()));
    }
    let init = gen.point_mass(0, w)?;
    let dists = gen.laplace(&init, lambdas, tq)?;
    let width = gen.w_max() as usize + 1;
    let values = dists
        .iter()
        .map(|d| {
            kappas
                .iter()
                .map(|&k| {
                    let mut row = vec![Complex64::new(0.0, 0.0); width];
                    for (i, &pr) in d.probs.iter().enumerate() {
                        if pr != 0.0 {
                            let (u, wp) = gen.state(i);
                            row[wp as usize] += Complex64::from_polar(pr, -k * u as f64);
                        }
                    }
                    row
                })
                .collect()
        })
        .collect();
    Ok(NumericKernelTable { w, lambdas: lambdas.to_vec(), kappas: kappas.to_vec(), values, leak: dists.iter().map(|d| d.leak).collect() })
}

/// Single entry of [`numeric_g_table`].
pub fn numeric_g(
    w: u64,
    wp: u64,
    kappa: f64,
    lambda: f64,
    gen: &TruncatedGenerator,
    tq: &TimeQuadrature,
) -> Result<Complex64, OracleError> {
    if wp > gen.w_max() {
        return Err(OracleError::OutsideBox { u: 0, w: wp });
    }
    Ok(numeric_g_table(gen, w, &[lambda], &[kappa], tq)?.get(wp, 0, 0))
}

fn distance_box(w0: u64, alpha: f64, t: f64) -> u64 {
    w0 + 40 + (12.0 * (4.0 * alpha * t).sqrt()).ceil() as u64
}

/// P(two dual particles started at x, y share a site at time t).
pub fn dual_pair_meeting_prob(x: i64, y: i64, t: f64, preset: &ProcessPreset) -> Result<f64, OracleError> {
    let w0 = x.abs_diff(y);
    let params = preset.params();
    let gen = TruncatedGenerator::distance_only(params, distance_box(w0, params.alpha, t))?;
    let d = gen.propagate(&gen.point_mass(0, w0)?, t)?;
    Ok(d.probs[0])
}

/// Kernels needed by the general covariance formula.
pub trait PairKernel {
    /// Law of the ordered positions (x′ ≤ y′) at time t of two dual particles started at x, y.
    fn pair_distribution(&self, x: i64, y: i64, t: f64) -> Result<BTreeMap<(i64, i64), f64>, OracleError>;
    /// Law at time t of a single dual particle started at x.
    fn single_distribution(&self, x: i64, t: f64) -> Result<BTreeMap<i64, f64>, OracleError>;
    fn params(&self) -> &ModelParams;
}

/// [`PairKernel`] backed by the uniformization oracle.
#[derive(Debug, Clone)]
pub struct OraclePairKernel {
    params: ModelParams,
}

impl OraclePairKernel {
    pub fn new(params: ModelParams) -> Self {
        Self { params }
    }

    fn reach(&self, t: f64) -> i64 {
        20 + (12.0 * (2.0 * self.params.alpha * t).sqrt()).ceil() as i64
    }
}

impl PairKernel for OraclePairKernel {
    fn pair_distribution(&self, x: i64, y: i64, t: f64) -> Result<BTreeMap<(i64, i64), f64>, OracleError> {
        let (lo, hi) = (x.min(y), x.max(y));
        let w0 = hi.abs_diff(lo);
        let reach = self.reach(t);
        let gen = TruncatedGenerator::new(self.params, w0 + 2 * reach as u64, 2 * reach)?;
        let d = gen.propagate(&gen.point_mass(0, w0)?, t)?;
        let mut out = BTreeMap::new();
        for (i, &pr) in d.probs.iter().enumerate() {
            if pr > 0.0 {
                let (du, w) = gen.state(i);
                let s = lo + hi + du;
                *out.entry(((s - w as i64) / 2, (s + w as i64) / 2)).or_insert(0.0) += pr;
            }
        }
        Ok(out)
    }

    fn single_distribution(&self, x: i64, t: f64) -> Result<BTreeMap<i64, f64>, OracleError> {
        let reach = self.reach(t);
        let n = (2 * reach + 1) as usize;
        let (a, p) = (self.params.alpha, self.params.p);
        let big = a;
        let mut v = vec![0.0; n];
        v[reach as usize] = 1.0;
        let mut probs = vec![0.0; n];
        let mean = big * t;
        let mut k = 0u64;
        loop {
            let wgt = poisson_weight(k, mean);
            for (pr, x) in probs.iter_mut().zip(&v) {
                *pr += wgt * x;
            }
            if k >= poisson_horizon(mean) {
                break;
            }
            let mut next = vec![0.0; n];
            for i in 0..n {
                if v[i] == 0.0 {
                    continue;
                }
                if i + 1 < n {
                    next[i + 1] += v[i] * p;
                }
                if i > 0 {
                    next[i - 1] += v[i] * (1.0 - p);
                }
            }
            v = next;
            k += 1;
        }
        Ok(probs.into_iter().enumerate().filter(|(_, pr)| *pr > 0.0).map(|(i, pr)| (x + i as i64 - reach, pr)).collect())
    }

    fn params(&self) -> &ModelParams {
        &self.params
    }
}
