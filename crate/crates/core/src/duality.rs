//! Covariances of the particle system through two dual particles, their
//! scaling in the sticky regime, and the variance of the density fluctuation field.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::numerics::{integrate_adaptive, NumericsError, QuadratureSpec};
use crate::oracle::{OracleError, PairKernel};
use crate::transforms::{local_time_laplace, TransformError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DualityError {
    #[error("domain error: {0}")]
    DomainError(String),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

fn domain(msg: impl Into<String>) -> DualityError {
    DualityError::DomainError(msg.into())
}

/// A per-site quantity on ℤ.
#[derive(Debug, Clone, PartialEq)]
pub enum SiteMap {
    Constant(f64),
    /// `left` on sites < `split`, `right` on sites ≥ `split`.
    Step { split: i64, left: f64, right: f64 },
    /// `values[i]` at site `offset + i`, `fill` elsewhere.
    Table { offset: i64, values: Vec<f64>, fill: f64 },
}

impl SiteMap {
    pub fn at(&self, x: i64) -> f64 {
        match self {
            SiteMap::Constant(v) => *v,
            SiteMap::Step { split, left, right } => {
                if x < *split {
                    *left
                } else {
                    *right
                }
            }
            SiteMap::Table { offset, values, fill } => {
                usize::try_from(x - offset).ok().and_then(|i| values.get(i)).copied().unwrap_or(*fill)
            }
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            SiteMap::Constant(v) => vec![*v],
            SiteMap::Step { left, right, .. } => vec![*left, *right],
            SiteMap::Table { values, fill, .. } => values.iter().chain([fill]).copied().collect(),
        }
    }
}

/// First and second factorial moments of the initial product measure:
/// ρ(x) = ∫η_x dν and χ(x) = ∫η_x(η_x − 1) dν.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentProfile {
    pub rho: SiteMap,
    pub chi: SiteMap,
}

impl MomentProfile {
    pub fn new(rho: SiteMap, chi: SiteMap) -> Result<Self, DualityError> {
        for (name, m) in [("rho", &rho), ("chi", &chi)] {
            if m.values().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(domain(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(Self { rho, chi })
    }

    pub fn homogeneous(rho: f64, chi: f64) -> Result<Self, DualityError> {
        Self::new(SiteMap::Constant(rho), SiteMap::Constant(chi))
    }

    /// n particles on every site.
    pub fn deterministic(n: u32) -> Self {
        let n = n as f64;
        Self { rho: SiteMap::Constant(n), chi: SiteMap::Constant(n * (n - 1.0)) }
    }

    /// Product Poisson with mean ρ, so χ = ρ².
    pub fn poisson(rho: f64) -> Result<Self, DualityError> {
        Self::homogeneous(rho, rho * rho)
    }

    /// The invariant product measure, χ = (1 + θ)ρ².
    pub fn stationary(rho: f64, theta: f64) -> Result<Self, DualityError> {
        Self::homogeneous(rho, (1.0 + theta) * rho * rho)
    }

    /// (ρ, χ) if both maps are constant.
    pub fn as_homogeneous(&self) -> Option<(f64, f64)> {
        match (&self.rho, &self.chi) {
            (SiteMap::Constant(r), SiteMap::Constant(c)) => Some((*r, *c)),
            _ => None,
        }
    }

    /// SEP(j) advisory: a law on {0..j} has χ ≤ (j − 1)ρ.
    pub fn consistent_with_sep(&self, j: u32) -> bool {
        let bound = (j as f64 - 1.0).max(0.0);
        match self.as_homogeneous() {
            Some((r, c)) => c <= bound * r + 1e-12,
            None => true,
        }
    }
}

/// Ξ(x, y) at Laplace argument λ for the α = 1 model with interaction θ.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceQuery {
    pub x: i64,
    pub y: i64,
    pub lambda: f64,
    pub theta: f64,
    pub profile: MomentProfile,
}

/// χ/(1 + θ), taken as 0 at θ = −1 where the meeting term cannot occur.
fn chi_over(chi: f64, theta: f64) -> f64 {
    if theta == -1.0 {
        0.0
    } else {
        chi / (1.0 + theta)
    }
}

/// Laplace transform in t of the covariance of η_x(t), η_y(t) under a
/// homogeneous product initial law.
pub fn xi_homogeneous_laplace(q: &CovarianceQuery) -> Result<f64, DualityError> {
    let (rho, chi) = q.profile.as_homogeneous().ok_or_else(|| domain("profile is not homogeneous"))?;
    xi_homogeneous_value(q.x.abs_diff(q.y), q.lambda, q.theta, rho, chi)
}

fn xi_homogeneous_value(d: u64, lambda: f64, theta: f64, rho: f64, chi: f64) -> Result<f64, DualityError> {
    if theta == -1.0 && chi > 0.0 {
        return Err(domain("theta = -1 requires chi = 0"));
    }
    let diag = d == 0;
    let delta = if diag { 1.0 } else { 0.0 };
    // local_time_laplace already carries the factor 1 + θζ^{1{d=0}}
    let meet = local_time_laplace(d, theta, lambda)?;
    Ok((1.0 + theta * delta) * (chi_over(chi, theta) - rho * rho) * meet + delta / lambda * (theta * rho * rho + rho))
}

/// Covariance of η_x(t), η_y(t) for an arbitrary product initial law, from the
/// law of two interacting dual particles and of two independent ones.
pub fn xi_general<K>(t: f64, x: i64, y: i64, profile: &MomentProfile, kernel: &K) -> Result<f64, DualityError>
where
    K: PairKernel + ?Sized,
{
    if !(t.is_finite() && t >= 0.0) {
        return Err(domain(format!("t must be >= 0, got {t}")));
    }
    let theta = kernel.params().theta;
    let rho = |z: i64| profile.rho.at(z);
    let pair = kernel.pair_distribution(x, y, t)?;
    let (sx, sy) = (kernel.single_distribution(x, t)?, kernel.single_distribution(y, t)?);
    let rho_t = |s: &std::collections::BTreeMap<i64, f64>| s.iter().map(|(&z, &p)| p * rho(z)).sum::<f64>();
    let (rx, ry) = (rho_t(&sx), rho_t(&sy));

    let mut interacting = 0.0;
    let mut meeting = 0.0;
    for (&(a, b), &p) in &pair {
        interacting += p * rho(a) * rho(b);
        if a == b {
            meeting += p * (chi_over(profile.chi.at(a), theta) - rho(a) * rho(a));
        }
    }
    let delta = if x == y { 1.0 } else { 0.0 };
    Ok((1.0 + theta * delta) * (interacting - rx * ry + meeting) + delta * (theta * rx * rx + rx))
}

/// Which of the three regimes of the sticky covariance scaling applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceRegime {
    Subcritical,
    Critical,
    Supercritical,
}

impl CovarianceRegime {
    pub fn of(a: f64) -> Self {
        if (a - 2.0).abs() < 1e-12 {
            CovarianceRegime::Critical
        } else if a < 2.0 {
            CovarianceRegime::Subcritical
        } else {
            CovarianceRegime::Supercritical
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            CovarianceRegime::Subcritical => "subcritical",
            CovarianceRegime::Critical => "critical",
            CovarianceRegime::Supercritical => "supercritical",
        }
    }
}

impl fmt::Display for CovarianceRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Time exponent a, macroscopic separation r = |x − y| and the scale ε, with
/// θ_ε = √2γ/ε and initial moments (ρ, χ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingQuery {
    pub a: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub rho: f64,
    pub chi: f64,
    pub eps: f64,
    pub separation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceScaling {
    pub asymptotic: f64,
    pub finite_eps: f64,
    pub ratio: f64,
    pub regime: CovarianceRegime,
    /// |Ξ_ε(χ) − Ξ_ε(0)| / |Ξ_ε(χ)|: how much the finite-ε value depends on χ.
    pub chi_sensitivity: f64,
}

impl ScalingQuery {
    fn validate(&self) -> Result<(), DualityError> {
        if !(self.a > 1.0 && self.a.is_finite()) {
            return Err(domain(format!("a must be > 1, got {}", self.a)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(domain(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(domain(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(domain(format!("eps must lie in (0, 1), got {}", self.eps)));
        }
        if !(self.rho >= 0.0 && self.chi >= 0.0 && self.separation >= 0.0) {
            return Err(domain("rho, chi and separation must be >= 0"));
        }
        Ok(())
    }

    fn sites(&self) -> u64 {
        (self.separation / self.eps + 1e-9).floor() as u64
    }

    /// ε^a Ξ(λε^a) at lattice distance ⌊r/ε⌋ with θ_ε = √2γ/ε.
    pub fn finite_eps(&self, chi: f64) -> Result<f64, DualityError> {
        let theta = SQRT_2 * self.gamma / self.eps;
        let scale = self.eps.powf(self.a);
        Ok(scale * xi_homogeneous_value(self.sites(), self.lambda * scale, theta, self.rho, chi)?)
    }

    /// The leading-order branch for the regime of `a`, on or off the diagonal.
    pub fn asymptotic(&self) -> f64 {
        let (a, l, g, rho, eps) = (self.a, self.lambda, self.gamma, self.rho, self.eps);
        let r2 = rho * rho;
        if self.sites() == 0 {
            match CovarianceRegime::of(a) {
                CovarianceRegime::Subcritical => 2.0 * r2 * eps.powf(-a / 2.0) / l.powf(1.5),
                CovarianceRegime::Critical => 2.0 * SQRT_2 * g * r2 / (eps * (2.0 * l + g * l * (2.0 * l).sqrt())),
                CovarianceRegime::Supercritical => SQRT_2 * g * r2 / (eps * l),
            }
        } else {
            let r = self.separation;
            match CovarianceRegime::of(a) {
                CovarianceRegime::Subcritical => {
                    let s = eps.powf(a / 2.0 - 1.0);
                    -s / (SQRT_2 * g * l) * (-l.sqrt() * r * s).exp()
                }
                CovarianceRegime::Critical => -g * r2 * (-l.sqrt() * r).exp() / ((2.0 * l).sqrt() + g * l),
                CovarianceRegime::Supercritical => -g * r2 * eps.powf(a / 2.0 - 1.0) / (2.0 * l).sqrt(),
            }
        }
    }

    /// Power of ε in the prefactor of the asymptotic branch.
    pub fn prefactor_exponent(&self) -> f64 {
        let a = self.a;
        match (self.sites() == 0, CovarianceRegime::of(a)) {
            (true, CovarianceRegime::Subcritical) => -a / 2.0,
            (true, _) => -1.0,
            (false, CovarianceRegime::Critical) => 0.0,
            (false, _) => a / 2.0 - 1.0,
        }
    }

    /// e^{−√λ r ε^{a/2−1}}, the spatial decay factor common to the off-diagonal regimes.
    pub fn envelope(&self) -> f64 {
        if self.sites() == 0 {
            1.0
        } else {
            (-self.lambda.sqrt() * self.separation * self.eps.powf(self.a / 2.0 - 1.0)).exp()
        }
    }
}

pub fn covariance_scaling(q: &ScalingQuery) -> Result<CovarianceScaling, DualityError> {
    q.validate()?;
    let finite_eps = q.finite_eps(q.chi)?;
    let without_chi = q.finite_eps(0.0)?;
    let asymptotic = q.asymptotic();
    Ok(CovarianceScaling {
        asymptotic,
        finite_eps,
        ratio: finite_eps / asymptotic,
        regime: CovarianceRegime::of(q.a),
        chi_sensitivity: ((finite_eps - without_chi) / finite_eps).abs(),
    })
}

/// Least-squares slope of log|y| against log x.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(x, y)| (x.ln(), y.abs().ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// A rapidly decaying test function, zero outside [lo, hi].
#[derive(Clone)]
pub struct TestFunction {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub lo: f64,
    pub hi: f64,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction").field("lo", &self.lo).field("hi", &self.hi).finish_non_exhaustive()
    }
}

pub const TEST_FUNCTION_EDGE_TOL: f64 = 1e-12;

impl TestFunction {
    pub fn new<F>(f: F, lo: f64, hi: f64) -> Result<Self, DualityError>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(domain(format!("bad support [{lo}, {hi}]")));
        }
        for edge in [lo, hi] {
            if !(f(edge).abs() <= TEST_FUNCTION_EDGE_TOL) {
                return Err(domain(format!("|phi({edge})| exceeds {TEST_FUNCTION_EDGE_TOL}")));
            }
        }
        Ok(Self { f: Arc::new(f), lo, hi })
    }

    /// e^{−(x−c)²/(2s²)} on c ± 8s.
    pub fn gaussian(center: f64, width: f64) -> Result<Self, DualityError> {
        if !(width > 0.0 && width.is_finite() && center.is_finite()) {
            return Err(domain("gaussian needs finite center and width > 0"));
        }
        let g = move |x: f64| (-(x - center).powi(2) / (2.0 * width * width)).exp();
        Self::new(g, center - 8.0 * width, center + 8.0 * width)
    }

    pub fn zero() -> Self {
        Self { f: Arc::new(|_| 0.0), lo: -1.0, hi: 1.0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            0.0
        } else {
            (self.f)(x)
        }
    }

    pub fn shifted(&self, c: f64) -> Self {
        let f = Arc::clone(&self.f);
        Self { f: Arc::new(move |x| f(x - c)), lo: self.lo + c, hi: self.hi + c }
    }
}

/// Sticky scaling, or the labelled independent-walker comparison in which
/// γρ² is replaced by ρ in the numerators and γ by 0 in the denominators of the
/// limit, and the discrete side is the θ = 0 system under the same field scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityFieldMode {
    Sticky,
    IndependentComparison,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityFieldVariance {
    pub discrete: f64,
    pub limit: f64,
    pub mode: DensityFieldMode,
}

impl DensityFieldVariance {
    pub fn ratio(&self) -> f64 {
        self.discrete / self.limit
    }
}

/// Laplace transform of the variance of ε Σ_x Φ(εx)(η_x(ε⁻²t) − ρ) at θ_ε = √2γ/ε,
/// together with its ε → 0 limit.
pub fn density_field_variance_laplace(
    phi: &TestFunction,
    lambda: f64,
    gamma: f64,
    profile: &MomentProfile,
    eps: f64,
    mode: DensityFieldMode,
    spec: &QuadratureSpec,
) -> Result<DensityFieldVariance, DualityError> {
    let (rho, chi) = profile.as_homogeneous().ok_or_else(|| domain("profile is not homogeneous"))?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(domain(format!("lambda must be > 0, got {lambda}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(domain(format!("gamma must be > 0, got {gamma}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    let discrete = match mode {
        DensityFieldMode::Sticky => discrete_field_variance(phi, lambda, SQRT_2 * gamma / eps, rho, chi, eps)?,
        DensityFieldMode::IndependentComparison => discrete_field_variance(phi, lambda, 0.0, rho, chi, eps)? / eps,
    };
    let (c1, c2) = match mode {
        DensityFieldMode::Sticky => {
            let g = gamma * rho * rho;
            (g / ((2.0 * lambda).sqrt() + gamma * lambda), 2.0 * SQRT_2 * g / (2.0 * lambda + gamma * lambda * (2.0 * lambda).sqrt()))
        }
        DensityFieldMode::IndependentComparison => (rho / (2.0 * lambda).sqrt(), 2.0 * SQRT_2 * rho / (2.0 * lambda)),
    };
    let limit = if c1 == 0.0 && c2 == 0.0 {
        0.0
    } else {
        -c1 * exp_kernel_double_integral(phi, lambda.sqrt(), spec)? + c2 * integrate_adaptive(|x| phi.eval(x).powi(2), phi.lo, phi.hi, spec)?
    };
    Ok(DensityFieldVariance { discrete, limit, mode })
}

/// ε² Σ_x Σ_y Φ(εx)Φ(εy) ε²Ξ(λε²)(x, y), in O(N) using the geometric form of Ξ.
fn discrete_field_variance(phi: &TestFunction, lambda: f64, theta: f64, rho: f64, chi: f64, eps: f64) -> Result<f64, DualityError> {
    let lam = lambda * eps * eps;
    let first = (phi.lo / eps).ceil() as i64;
    let last = (phi.hi / eps).floor() as i64;
    let vals: Vec<f64> = (first..=last).map(|x| phi.eval(eps * x as f64)).collect();
    let diag = xi_homogeneous_value(0, lam, theta, rho, chi)?;
    let off1 = xi_homogeneous_value(1, lam, theta, rho, chi)?;
    let off2 = xi_homogeneous_value(2, lam, theta, rho, chi)?;
    // Ξ(d) = off1 · ζ^{d−1} for d ≥ 1
    let zeta = if off1 == 0.0 { 0.0 } else { off2 / off1 };
    let n = vals.len();
    // below[i] = Σ_{j<i} ζ^{i−j} φ_j and above[i] = Σ_{j>i} ζ^{j−i} φ_j
    let mut below = vec![0.0; n];
    for i in 1..n {
        below[i] = zeta * (below[i - 1] + vals[i - 1]);
    }
    let mut above = 0.0;
    let mut off = 0.0;
    for i in (0..n).rev() {
        off += vals[i] * (below[i] + above);
        above = zeta * (above + vals[i]);
    }
    let off_sum = if zeta == 0.0 { 0.0 } else { off / zeta * off1 };
    let diag_sum: f64 = vals.iter().map(|v| v * v).sum::<f64>() * diag;
    Ok(eps.powi(4) * (off_sum + diag_sum))
}

/// ∬Φ(x)Φ(y)e^{−s|x−y|} dx dy by nested adaptive quadrature, split at the kink.
fn exp_kernel_double_integral(phi: &TestFunction, s: f64, spec: &QuadratureSpec) -> Result<f64, DualityError> {
    let inner_spec = QuadratureSpec { abs_tol: spec.abs_tol * 0.1, ..*spec };
    let inner = |x: f64| -> Result<f64, NumericsError> {
        let below = integrate_adaptive(|y| phi.eval(y) * (-s * (x - y)).exp(), phi.lo, x, &inner_spec)?;
        let above = integrate_adaptive(|y| phi.eval(y) * (-s * (y - x)).exp(), x, phi.hi, &inner_spec)?;
        Ok(below + above)
    };
    let failure = std::sync::Mutex::new(None);
    let total = integrate_adaptive(
        |x| {
            let fx = phi.eval(x);
            if fx == 0.0 {
                return 0.0;
            }
            match inner(x) {
                Ok(v) => fx * v,
                Err(e) => {
                    failure.lock().map(|mut g| *g = Some(e)).ok();
                    0.0
                }
            }
        },
        phi.lo,
        phi.hi,
        spec,
    )?;
    if let Some(e) = failure.into_inner().ok().flatten() {
        return Err(e.into());
    }
    Ok(total)
}
