//! Closed-form Fourier–Laplace transforms of the two-particle (sum, distance)
//! chain and of the reflected, absorbed and sticky Brownian limits.

use std::f64::consts::SQRT_2;

use num_complex::Complex64;
use thiserror::Error;

use crate::model::ModelParams;
use crate::numerics::{self, NumericsError, QuadratureSpec};

const BRANCH_TOL: f64 = 1e-10;
const POLE_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("invalid argument: {0}")]
    DomainError(String),
    #[error("both roots of r^2 - 2xr + 1 sit on the unit circle (x = {x})")]
    BranchAmbiguity { x: Complex64 },
    #[error("Z^theta vanishes ({value:e})")]
    PoleHit { value: f64 },
    #[error("geometric tail needs {needed} terms")]
    TailTruncationError { needed: f64 },
    #[error("imaginary residual {im:e} in a real-valued transform")]
    ImaginaryResidual { im: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

fn domain(msg: impl Into<String>) -> TransformError {
    TransformError::DomainError(msg.into())
}

/// Arguments of the discrete kernel G^θ(w, w′, κ, λ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformQuery {
    pub w: u64,
    pub wp: u64,
    pub kappa: f64,
    pub lambda: f64,
    pub theta: f64,
    /// Probability that a jump goes right; 0 and 1 are allowed here.
    pub p: f64,
    pub alpha: f64,
}

impl TransformQuery {
    /// Symmetric query with α = 1.
    pub fn new(w: u64, wp: u64, kappa: f64, lambda: f64, theta: f64) -> Self {
        Self { w, wp, kappa, lambda, theta, p: 0.5, alpha: 1.0 }
    }

    pub fn with_model(mut self, params: &ModelParams) -> Self {
        self.p = params.p;
        self.alpha = params.alpha;
        self.theta = params.theta;
        self
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    fn validate(&self) -> Result<(), TransformError> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(domain(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(self.kappa.is_finite() && self.kappa.abs() <= std::f64::consts::PI + 1e-12) {
            return Err(domain(format!("kappa must lie in [-pi, pi], got {}", self.kappa)));
        }
        if !(self.theta.is_finite() && self.theta >= -1.0) {
            return Err(domain(format!("theta must be >= -1, got {}", self.theta)));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(domain(format!("p must lie in [0, 1], got {}", self.p)));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(domain(format!("alpha must be > 0, got {}", self.alpha)));
        }
        Ok(())
    }

    fn ingredients(&self) -> Result<KernelIngredients, TransformError> {
        self.validate()?;
        KernelIngredients::new(self.kappa, self.lambda / self.alpha, self.p, self.theta)
    }
}

/// ν, x, ζ and the two Z factors of the α = 1 kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelIngredients {
    pub nu: Complex64,
    pub x: Complex64,
    pub zeta: Complex64,
    pub z_zero: Complex64,
    pub z_theta: Complex64,
    pub theta: f64,
    pub lambda: f64,
}

/// ν_κ = cos κ − i(p − q) sin κ.
pub fn nu(kappa: f64, p: f64) -> Complex64 {
    Complex64::new(kappa.cos(), -(2.0 * p - 1.0) * kappa.sin())
}

/// Smaller-modulus root of r² − 2xr + 1, given x and x² − 1.
fn small_root(x: Complex64, x2m1: Complex64) -> Result<Complex64, TransformError> {
    let s = x2m1.sqrt();
    let (r1, r2) = (x + s, x - s);
    if x2m1.norm() < 1e-14 && (r1.norm() - 1.0).abs() < BRANCH_TOL && (r2.norm() - 1.0).abs() < BRANCH_TOL {
        return Err(TransformError::BranchAmbiguity { x });
    }
    // invert the larger root: the product of the roots is 1 and this avoids cancellation
    Ok(if r1.norm() >= r2.norm() { r1.inv() } else { r2.inv() })
}

impl KernelIngredients {
    pub fn new(kappa: f64, lambda: f64, p: f64, theta: f64) -> Result<Self, TransformError> {
        let nu = nu(kappa, p);
        if nu.norm() < 1e-150 {
            return Err(domain("nu_kappa vanishes"));
        }
        let half = 1.0 + 0.5 * lambda;
        let x = half / nu;
        // x² − 1 = (λ + λ²/4 + 1 − ν²)/ν², with 1 − ν² written without cancellation
        let (s, c) = kappa.sin_cos();
        let d = 2.0 * p - 1.0;
        let one_minus_nu2 = Complex64::new(s * s * (1.0 + d * d), 2.0 * d * s * c);
        let x2m1 = (lambda + 0.25 * lambda * lambda + one_minus_nu2) / (nu * nu);
        let zeta = small_root(x, x2m1)?;
        let z_zero = nu * (zeta.powi(-2) - 1.0);
        let z_theta = z_zero + 2.0 * theta * (x - nu);
        if z_theta.norm() < POLE_TOL {
            return Err(TransformError::PoleHit { value: z_theta.norm() });
        }
        Ok(Self { nu, x, zeta, z_zero, z_theta, theta, lambda })
    }

    /// Reflection coefficient of the image term for w, w′ ≥ 1:
    /// 2(Z⁰/Z^θ)(1 + θ(1 − x/ν)) − 1, which is 1 at θ = 0.
    pub fn gamma_minus(&self) -> Complex64 {
        let boundary = 1.0 + self.theta * (1.0 - self.x / self.nu);
        2.0 * self.z_zero / self.z_theta * boundary - 1.0
    }

    /// G for α = 1.
    pub fn g(&self, w: u64, wp: u64) -> Complex64 {
        let (zeta, th) = (self.zeta, self.theta);
        match (w, wp) {
            (0, 0) => (th / self.nu + zeta.inv()) / self.z_theta,
            (_, 0) => (th + 1.0) * zeta.powi(w as i32 - 1) / self.z_theta,
            (0, _) => 2.0 * zeta.powi(wp as i32 - 1) / self.z_theta,
            _ => {
                let d = w.abs_diff(wp) as i32;
                (zeta.powi(d - 1) + zeta.powi((w + wp) as i32 - 1) * self.gamma_minus()) / self.z_zero
            }
        }
    }
}

/// ν, x, ζ, Z⁰ and Z^θ at (κ, λ/α).
pub fn ingredients(q: &TransformQuery) -> Result<KernelIngredients, TransformError> {
    q.ingredients()
}

/// G^θ(w, w′, κ, λ) = ∫e^{−λt} E_w[e^{−iκ(u(t)−u)} 1{w(t)=w′}] dt.
pub fn g_kernel(q: &TransformQuery) -> Result<Complex64, TransformError> {
    let ing = q.ingredients()?;
    Ok(ing.g(q.w, q.wp) / q.alpha)
}

/// Ψ_w = ζ^{w−1}, the transform of the first hitting time of distance 1, for w ≥ 2.
pub fn psi_w(q: &TransformQuery) -> Result<Complex64, TransformError> {
    if q.w < 2 {
        return Err(domain(format!("psi_w needs w >= 2, got {}", q.w)));
    }
    Ok(q.ingredients()?.zeta.powi(q.w as i32 - 1))
}

/// Φ_{w,w′}: the free kernel killed on hitting distance 1, for w, w′ ≥ 2.
pub fn phi_ww(q: &TransformQuery) -> Result<Complex64, TransformError> {
    if q.w < 2 || q.wp < 2 {
        return Err(domain(format!("phi_ww needs w, w' >= 2, got ({}, {})", q.w, q.wp)));
    }
    let ing = q.ingredients()?;
    Ok(phi_raw(&ing, q.w, q.wp) / q.alpha)
}

fn phi_raw(ing: &KernelIngredients, w: u64, wp: u64) -> Complex64 {
    let z = ing.zeta;
    (z.powi(w.abs_diff(wp) as i32) - z.powi((w + wp) as i32 - 2)) / (ing.nu * (z.inv() - z))
}

/// G assembled from the hitting-time pieces Ψ and Φ instead of the image formula.
pub fn g_kernel_assembled(q: &TransformQuery) -> Result<Complex64, TransformError> {
    let ing = q.ingredients()?;
    let (nu, th, lam) = (ing.nu, ing.theta, ing.lambda);
    let psi = |w: u64| ing.zeta.powi(w as i32 - 1);
    let big_z = ((2.0 + lam) * (2.0 + th + lam - nu * psi(2)) - 2.0 * (th + 1.0) * nu * nu) / nu;
    let v = match (q.w, q.wp) {
        (0, 0) => (2.0 + th + lam - nu * psi(2)) / (nu * big_z),
        (w, 0) => (th + 1.0) / big_z * if w >= 2 { psi(w) } else { Complex64::new(1.0, 0.0) },
        (0, 1) => 2.0 / big_z,
        (w, 1) => (2.0 + lam) / (nu * big_z) * if w >= 2 { psi(w) } else { Complex64::new(1.0, 0.0) },
        (0, wp) => 2.0 * nu / big_z * phi_raw(&ing, 2, wp),
        (1, wp) => (2.0 + lam) / big_z * phi_raw(&ing, 2, wp),
        (w, wp) => phi_raw(&ing, w, wp) + (2.0 + lam) / big_z * phi_raw(&ing, 2, wp) * psi(w),
    };
    Ok(v / q.alpha)
}

/// Laplace transform of the transition probability of (leftmost, rightmost)
/// positions from (x, y) to (x′, y′), by the double Fourier integral.
pub fn pi_leftright(
    x: i64,
    y: i64,
    xp: i64,
    yp: i64,
    lambda: f64,
    params: &ModelParams,
    quad: &QuadratureSpec,
) -> Result<f64, TransformError> {
    if x >= y {
        return Err(domain(format!("need x < y, got ({x}, {y})")));
    }
    if xp > yp {
        return Err(domain(format!("need x' <= y', got ({xp}, {yp})")));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(domain(format!("lambda must be > 0, got {lambda}")));
    }
    let lam = lambda / params.alpha;
    let (p, th) = (params.p, params.theta);

    // The image coefficient carries x/ν, which blows up where ν vanishes. Using
    // xζ = (1 + ζ²)/2 it splits into two image terms at w + w′ and w + w′ − 2
    // whose coefficients only involve the bounded ratio ζ/ν.
    #[derive(Clone, Copy)]
    enum Which {
        Plus,
        Image,
        ShiftedImage,
        Zero,
    }
    let a_term = |which: Which, a: i64, b: i64, n: usize| -> Result<Complex64, TransformError> {
        let mut bad = None;
        let mean = numerics::torus_mean(
            |k1, k2| {
                let k = 0.5 * (k1 + k2);
                let gamma = match which {
                    Which::Plus => Complex64::new(1.0, 0.0),
                    _ => match KernelIngredients::new(k, lam, p, th) {
                        Ok(ing) => {
                            let ratio = ing.z_zero / ing.z_theta;
                            let zn = ing.zeta / ing.nu;
                            match which {
                                Which::Image => 2.0 * (1.0 + th) * ratio - 1.0 - th * ratio * zn,
                                Which::ShiftedImage => -th * ratio * zn,
                                _ => (th + 1.0) * ratio,
                            }
                        }
                        Err(e) => {
                            bad = Some(e);
                            return Complex64::new(0.0, 0.0);
                        }
                    },
                };
                let denom = 1.0 + 0.5 * lam - nu(k, p) * (0.5 * (k2 - k1)).cos();
                gamma * Complex64::from_polar(1.0, k1 * a as f64 + k2 * b as f64) / denom
            },
            n,
        );
        match bad {
            Some(e) => Err(e),
            // (1/8π²)∬ = (4π²/8π²)·mean
            None => Ok(0.5 * mean),
        }
    };
    let eval = |n: usize| -> Result<Complex64, TransformError> {
        if yp > xp {
            let mut v = a_term(Which::Plus, xp - x, yp - y, n)? + a_term(Which::Image, yp - x, xp - y, n)?;
            if th != 0.0 {
                v += a_term(Which::ShiftedImage, yp - x - 1, xp - y + 1, n)?;
            }
            Ok(v)
        } else {
            a_term(Which::Zero, xp - x, xp - y, n)
        }
    };

    let cap = quad.grid_points.max(64);
    let mut n = 32;
    let mut prev = eval(n)?;
    loop {
        n *= 2;
        let cur = eval(n)?;
        let diff = (cur - prev).norm();
        if quad.accepts(diff, cur.norm()) {
            if cur.im.abs() >= 1e-8 {
                return Err(TransformError::ImaginaryResidual { im: cur.im });
            }
            return Ok(cur.re / params.alpha);
        }
        if n >= cap {
            return Err(NumericsError::QuadratureNonConvergence { estimate: cur.re, error: diff }.into());
        }
        prev = cur;
    }
}

/// The same quantity through G and a one-dimensional inversion on the κ-ring,
/// using u = x + y and w = y − x.
pub fn pi_via_sum_distance(
    x: i64,
    y: i64,
    xp: i64,
    yp: i64,
    lambda: f64,
    params: &ModelParams,
    grid_points: usize,
) -> Result<f64, TransformError> {
    if x > y || xp > yp {
        return Err(domain("need x <= y and x' <= y'"));
    }
    let (w, wp) = ((y - x) as u64, (yp - xp) as u64);
    let shift = (xp + yp) - (x + y);
    let slice = numerics::kappa_grid(grid_points)
        .into_iter()
        .map(|k| g_kernel(&TransformQuery::new(w, wp, k, lambda, params.theta).with_model(params)))
        .collect::<Result<Vec<_>, _>>()?;
    let inv = numerics::fourier_ring_invert(&slice, shift)?;
    if inv.value.im.abs() >= 1e-8 {
        return Err(TransformError::ImaginaryResidual { im: inv.value.im });
    }
    Ok(inv.value.re)
}

/// ζ_λ = 1 + λ/2 − √(λ + λ²/4), the κ = 0 root, for complex λ.
fn zeta_lambda(lambda: Complex64) -> Complex64 {
    let x = 1.0 + 0.5 * lambda;
    let s = (lambda + 0.25 * lambda * lambda).sqrt();
    let big = if (x + s).norm() >= (x - s).norm() { x + s } else { x - s };
    big.inv()
}

/// ∫e^{−λt} P_w(w(t) = 0) dt for the α = 1 distance chain.
pub fn local_time_laplace(w: u64, theta: f64, lambda: f64) -> Result<f64, TransformError> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(domain(format!("lambda must be > 0, got {lambda}")));
    }
    if !(theta.is_finite() && theta >= -1.0) {
        return Err(domain(format!("theta must be >= -1, got {theta}")));
    }
    Ok(local_time_laplace_complex(w, theta, Complex64::new(lambda, 0.0)).re)
}

/// Analytic continuation of [`local_time_laplace`] to Re λ > 0.
pub fn local_time_laplace_complex(w: u64, theta: f64, lambda: Complex64) -> Complex64 {
    let z = zeta_lambda(lambda);
    let lead = if w == 0 { 1.0 + theta * z } else { Complex64::new(1.0 + theta, 0.0) };
    z.powi(w as i32) * lead / (z.inv() + (theta * lambda - 1.0) * z)
}

/// Arguments of the continuum transforms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuumQuery {
    /// Starting distance, z ≥ 0.
    pub z: f64,
    pub kappa: f64,
    pub m: f64,
    pub lambda: f64,
    /// Stickiness; `f64::INFINITY` means absorbed.
    pub gamma: f64,
}

impl ContinuumQuery {
    pub fn new(z: f64, kappa: f64, m: f64, lambda: f64, gamma: f64) -> Self {
        Self { z, kappa, m, lambda, gamma }
    }

    fn validate(&self) -> Result<(), TransformError> {
        if !(self.z.is_finite() && self.z >= 0.0) {
            return Err(domain(format!("z must be >= 0, got {}", self.z)));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(domain(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(self.kappa.is_finite() && self.m.is_finite()) {
            return Err(domain("kappa and m must be finite"));
        }
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return Err(domain(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }

    fn a(&self) -> f64 {
        (self.kappa * self.kappa + 2.0 * self.lambda).sqrt()
    }
}

/// I₊ = ∫₀^∞ e^{−imx} e^{−a(x+z)} dx and I₋ = ∫₀^∞ e^{−imx} e^{−a|x−z|} dx.
pub fn half_line_integrals(z: f64, a: f64, m: f64) -> (Complex64, Complex64) {
    let im = Complex64::new(0.0, m);
    let eaz = (-a * z).exp();
    let emz = Complex64::from_polar(1.0, -m * z);
    let plus = eaz / (a + im);
    let minus = (emz - eaz) / (a - im) + emz / (a + im);
    (plus, minus)
}

/// Transform of (free BM, reflected BM) started at (0, z).
pub fn psi_reflected(q: &ContinuumQuery) -> Result<Complex64, TransformError> {
    q.validate()?;
    let a = q.a();
    let (ip, imn) = half_line_integrals(q.z, a, q.m);
    Ok((imn + ip) / a)
}

/// Transform of the pair when the distance is absorbed at 0.
pub fn psi_absorbed(q: &ContinuumQuery) -> Result<Complex64, TransformError> {
    q.validate()?;
    let a = q.a();
    let (ip, imn) = half_line_integrals(q.z, a, q.m);
    Ok((imn - ip) / a + (-a * q.z).exp() / (q.lambda + q.kappa * q.kappa))
}

/// Interpolation weight c = a/(a + γ(κ² + λ)) of the sticky transform.
pub fn sticky_weight(kappa: f64, lambda: f64, gamma: f64) -> f64 {
    if gamma.is_infinite() {
        return 0.0;
    }
    let a = (kappa * kappa + 2.0 * lambda).sqrt();
    a / (a + gamma * (kappa * kappa + lambda))
}

/// Transform of the pair when the distance is a sticky BM with stickiness γ.
pub fn psi_sticky(q: &ContinuumQuery) -> Result<Complex64, TransformError> {
    q.validate()?;
    let c = sticky_weight(q.kappa, q.lambda, q.gamma);
    let abs = psi_absorbed(q)?;
    if c == 0.0 {
        return Ok(abs);
    }
    Ok(c * psi_reflected(q)? + (1.0 - c) * abs)
}

/// ∫e^{−λt} P_z(B^S(t) = 0) dt = γe^{−√(2λ)z}/(√(2λ) + γλ).
pub fn sticky_p0(z: f64, lambda: f64, gamma: f64) -> Result<f64, TransformError> {
    ContinuumQuery::new(z, 0.0, 0.0, lambda, gamma).validate()?;
    let r = (2.0 * lambda).sqrt();
    let decay = (-r * z).exp();
    if gamma.is_infinite() {
        return Ok(decay / lambda);
    }
    Ok(gamma * decay / (r + gamma * lambda))
}

/// How θ depends on ε in the diffusive rescaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalingRegime {
    Reflected { theta: f64 },
    Sticky { gamma: f64 },
    Absorbed,
}

impl ScalingRegime {
    pub fn theta_eps(&self, eps: f64) -> f64 {
        match *self {
            ScalingRegime::Reflected { theta } => theta,
            ScalingRegime::Sticky { gamma } => SQRT_2 * gamma / eps,
            ScalingRegime::Absorbed => eps.powi(-2),
        }
    }

    /// The matching continuum stickiness (0 reflected, ∞ absorbed).
    pub fn gamma(&self) -> f64 {
        match *self {
            ScalingRegime::Reflected { .. } => 0.0,
            ScalingRegime::Sticky { gamma } => gamma,
            ScalingRegime::Absorbed => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledTransform {
    pub value: Complex64,
    pub w_start: u64,
    pub theta_eps: f64,
    pub terms: usize,
}

const MAX_TAIL_TERMS: f64 = 1e8;

/// ε² Σ_{w′} e^{−i(εm/√2)w′} G^{θ_ε}(w_ε, w′, εκ/√2, λε²) with w_ε = round(√2W/ε),
/// the discrete transform of the rescaled pair (U_ε − U, W_ε).
pub fn scaled_discrete_transform(
    eps: f64,
    kappa: f64,
    m: f64,
    lambda: f64,
    big_w: f64,
    regime: ScalingRegime,
) -> Result<ScaledTransform, TransformError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(big_w.is_finite() && big_w >= 0.0) {
        return Err(domain(format!("W must be >= 0, got {big_w}")));
    }
    let theta = regime.theta_eps(eps);
    let k = eps * kappa / SQRT_2;
    let q = TransformQuery::new(0, 0, k, lambda * eps * eps, theta);
    let ing = q.ingredients()?;
    let w = (SQRT_2 * big_w / eps).round() as u64;

    let r = ing.zeta.norm();
    let gm = ing.gamma_minus();
    let scale = eps * eps * (1.0 + gm.norm()) / (ing.z_zero.norm() * r.max(1e-300));
    let needed = numerics::geometric_cutoff(r, 1e-13 / scale.max(1e-300))
        .map(|n| n as f64)
        .unwrap_or(f64::INFINITY);
    if needed > MAX_TAIL_TERMS {
        return Err(TransformError::TailTruncationError { needed });
    }
    let last = w + needed as u64;
    let step = Complex64::from_polar(1.0, -eps * m / SQRT_2);
    let mut phase = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for wp in 0..=last {
        acc += phase * ing.g(w, wp);
        phase *= step;
    }
    Ok(ScaledTransform { value: acc * eps * eps, w_start: w, theta_eps: theta, terms: (last + 1) as usize })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{integrate_semi_infinite, kappa_grid};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    #[test]
    fn ingredients_at_origin() {
        let ing = ingredients(&TransformQuery::new(0, 0, 0.0, 1.0, 0.0)).unwrap();
        assert_relative_eq!(ing.zeta.re, 0.381_966_011_250_105_1, epsilon = 1e-15);
        assert!(ing.zeta.im.abs() < 1e-16);
        assert_relative_eq!(ing.x.re, 1.5);
        // totally asymmetric, quarter turn: ν = −i
        let ing = ingredients(&TransformQuery::new(0, 0, PI / 2.0, 1.0, 0.0).with_p(1.0)).unwrap();
        assert!(close(ing.nu, Complex64::new(0.0, -1.0), 1e-15));
        assert!(ing.zeta.norm() < 1.0);
    }

    #[test]
    fn free_kernel_value() {
        let g = g_kernel(&TransformQuery::new(0, 0, 0.0, 1.0, 0.0)).unwrap();
        assert_relative_eq!(g.re, 0.447_213_595_499_958, epsilon = 1e-12);
        assert!(g.im.abs() < 1e-15);
    }

    #[test]
    fn total_mass_is_one_over_lambda() {
        for theta in [-1.0, -0.5, 0.0, 1.0, 3.0] {
            for w in [0u64, 1, 2, 5] {
                let s: f64 = (0..400u64).map(|wp| g_kernel(&TransformQuery::new(w, wp, 0.0, 0.7, theta)).unwrap().re).sum();
                assert_relative_eq!(s, 1.0 / 0.7, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn alpha_rescaling() {
        let base = TransformQuery::new(2, 3, 0.4, 1.2, 0.5).with_p(0.3);
        let mut scaled = base;
        scaled.alpha = 3.0;
        scaled.lambda = 3.6;
        let a = g_kernel(&base).unwrap();
        let b = g_kernel(&scaled).unwrap();
        assert!(close(b * 3.0, a, 1e-14));
    }

    #[test]
    fn assembled_route_agrees() {
        for theta in [-0.5, 0.0, 1.0, 2.5] {
            for p in [0.5, 0.2] {
                for kappa in [0.0, 0.7, -2.1] {
                    for w in 0..5u64 {
                        for wp in 0..5u64 {
                            let q = TransformQuery::new(w, wp, kappa, 0.8, theta).with_p(p);
                            let a = g_kernel(&q).unwrap();
                            let b = g_kernel_assembled(&q).unwrap();
                            assert!(close(a, b, 1e-12), "θ={theta} p={p} κ={kappa} ({w},{wp}): {a} vs {b}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn psi_phi_domains_and_shapes() {
        let q = TransformQuery::new(1, 3, 0.3, 1.0, 0.0);
        assert!(psi_w(&q).is_err());
        assert!(phi_ww(&q).is_err());
        let q = TransformQuery::new(4, 4, 0.0, 1.0, 0.0);
        let phi = phi_ww(&q).unwrap();
        assert!(phi.re > 0.0 && phi.im.abs() < 1e-15);
        let a = phi_ww(&TransformQuery::new(3, 6, 0.4, 1.0, 0.0)).unwrap();
        let b = phi_ww(&TransformQuery::new(6, 3, 0.4, 1.0, 0.0)).unwrap();
        assert!(close(a, b, 1e-15));
        let z = ingredients(&q).unwrap().zeta;
        assert!(close(psi_w(&TransformQuery::new(5, 0, 0.0, 1.0, 0.0)).unwrap(), z.powi(4), 1e-15));
    }

    #[test]
    fn local_time_matches_kernel_at_kappa_zero() {
        for theta in [-1.0, 0.0, 0.5, 2.0] {
            for w in 0..6u64 {
                let a = local_time_laplace(w, theta, 0.5).unwrap();
                let b = g_kernel(&TransformQuery::new(w, 0, 0.0, 0.5, theta)).unwrap().re;
                assert_relative_eq!(a, b, epsilon = 1e-13);
            }
        }
        // θ = 0, w = 0: 1/√(λ² + 4λ)
        assert_relative_eq!(local_time_laplace(0, 0.0, 1.0).unwrap(), 1.0 / 5f64.sqrt(), epsilon = 1e-14);
        assert!(local_time_laplace(0, 0.0, 0.0).is_err());
    }

    #[test]
    fn leftright_matches_sum_distance_route() {
        let params = ModelParams::symmetric(1.0).unwrap();
        let quad = QuadratureSpec::default();
        let a = pi_leftright(0, 3, 1, 2, 1.0, &params, &quad).unwrap();
        let b = pi_via_sum_distance(0, 3, 1, 2, 1.0, &params, 1025).unwrap();
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        let a = pi_leftright(0, 2, 1, 1, 1.0, &params, &quad).unwrap();
        let b = pi_via_sum_distance(0, 2, 1, 1, 1.0, &params, 1025).unwrap();
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        assert!(pi_leftright(2, 2, 1, 1, 1.0, &params, &quad).is_err());
    }

    #[test]
    fn leftright_free_case_is_two_walkers() {
        // θ = 0: the transform of two independent rate-1 walkers, symmetrised
        let params = ModelParams::symmetric(0.0).unwrap();
        let lam = 0.9;
        let grid = kappa_grid(129);
        let h = 2.0 * PI / 128.0;
        let walker = |dx: i64, dy: i64| -> f64 {
            // (1/4π²)∬ e^{i(k1 dx + k2 dy)}/(2 + λ − cos k1 − cos k2)
            let mut acc = 0.0;
            for &k1 in &grid[..128] {
                for &k2 in &grid[..128] {
                    acc += (k1 * dx as f64 + k2 * dy as f64).cos() / (2.0 + lam - k1.cos() - k2.cos());
                }
            }
            acc * h * h / (4.0 * PI * PI)
        };
        let quad = QuadratureSpec::default();
        let pi = pi_leftright(0, 1, -1, 2, lam, &params, &quad).unwrap();
        let direct = walker(-1, 1) + walker(2, -2);
        assert!((pi - direct).abs() < 1e-9, "{pi} vs {direct}");
    }

    #[test]
    fn leftright_normalisation() {
        let params = ModelParams::symmetric(1.0).unwrap();
        let lam = 2.0;
        let mut total = 0.0;
        for xp in -12..=12i64 {
            for yp in xp..=12i64 {
                total += pi_via_sum_distance(0, 1, xp, yp, lam, &params, 257).unwrap();
            }
        }
        assert!((total - 1.0 / lam).abs() < 1e-6, "{total}");
    }

    #[test]
    fn continuum_half_line_integrals_by_quadrature() {
        let spec = QuadratureSpec::default();
        let (z, a, m) = (0.7, 1.3, 0.9);
        let (ip, imn) = half_line_integrals(z, a, m);
        let qp = integrate_semi_infinite(|x| Complex64::from_polar((-a * (x + z)).exp(), -m * x), 0.0, &spec).unwrap();
        let head = numerics::integrate_adaptive_complex(|x| Complex64::from_polar((-a * (z - x)).exp(), -m * x), 0.0, z, &spec).unwrap();
        let tail = integrate_semi_infinite(|x| Complex64::from_polar((-a * (x - z)).exp(), -m * x), z, &spec).unwrap();
        assert!(close(ip, qp, 1e-10));
        assert!(close(imn, head + tail, 1e-10));
    }

    #[test]
    fn sticky_limits_and_identity() {
        let q = ContinuumQuery::new(0.4, 0.8, 1.1, 0.6, 0.0);
        assert!(close(psi_sticky(&q).unwrap(), psi_reflected(&q).unwrap(), 1e-15));
        let q_inf = ContinuumQuery { gamma: f64::INFINITY, ..q };
        assert!(close(psi_sticky(&q_inf).unwrap(), psi_absorbed(&q).unwrap(), 1e-15));
        let q_big = ContinuumQuery { gamma: 1e12, ..q };
        assert!(close(psi_sticky(&q_big).unwrap(), psi_absorbed(&q).unwrap(), 1e-9));
        // m = κ = 0: all three transforms are 1/λ
        for gamma in [0.0, 0.5, f64::INFINITY] {
            let v = psi_sticky(&ContinuumQuery::new(1.2, 0.0, 0.0, 0.6, gamma)).unwrap();
            assert!(close(v, Complex64::new(1.0 / 0.6, 0.0), 1e-14));
        }
        // the atom at zero of the sticky transform is sticky_p0
        for (z, lam, gamma) in [(0.0, 2.0, 1.0), (0.5, 1.0, 2.0), (1.5, 0.3, 0.2)] {
            let c = sticky_weight(0.0, lam, gamma);
            let a = (2.0 * lam).sqrt();
            let atom = (1.0 - c) * (-a * z).exp() / lam;
            assert_relative_eq!(atom, sticky_p0(z, lam, gamma).unwrap(), epsilon = 1e-15);
        }
        assert_relative_eq!(sticky_p0(0.0, 2.0, 1.0).unwrap(), 0.25, epsilon = 1e-15);
        assert_relative_eq!(sticky_p0(0.3, 2.0, f64::INFINITY).unwrap(), (-0.6f64).exp() / 2.0, epsilon = 1e-15);
        assert!(sticky_p0(0.0, 2.0, -1.0).is_err());
    }

    #[test]
    fn scaled_transform_matches_closed_geometric_sum() {
        let (eps, kappa, m, lam) = (0.1, 0.5, 0.7, 1.0);
        let st = scaled_discrete_transform(eps, kappa, m, lam, 0.5, ScalingRegime::Sticky { gamma: 1.0 }).unwrap();
        assert_eq!(st.w_start, 7);
        let ing = ingredients(&TransformQuery::new(0, 0, eps * kappa / SQRT_2, lam * eps * eps, st.theta_eps)).unwrap();
        let ph = Complex64::from_polar(1.0, -eps * m / SQRT_2);
        let (z, w) = (ing.zeta, st.w_start as i32);
        // w′ = 0 term, then the image and direct geometric series in closed form
        let mut exact = ing.g(st.w_start, 0);
        let image: Complex64 = ing.gamma_minus() * z.powi(w) * ph / (1.0 - z * ph);
        let below: Complex64 = (1..w).map(|j| z.powi(w - j - 1) * ph.powi(j)).sum();
        let above = ph.powi(w) * (z.inv() + ph / (1.0 - z * ph));
        exact += (image + below + above) / ing.z_zero;
        assert!(close(st.value, exact * eps * eps, 1e-11), "{} vs {}", st.value, exact * eps * eps);
    }

    proptest! {
        #[test]
        fn conjugate_symmetry(w in 0u64..8, wp in 0u64..8, kappa in -3.1f64..3.1, lambda in 0.01f64..5.0, theta in -1.0f64..4.0) {
            let a = g_kernel(&TransformQuery::new(w, wp, kappa, lambda, theta)).unwrap();
            let b = g_kernel(&TransformQuery::new(w, wp, -kappa, lambda, theta)).unwrap();
            prop_assert!(close(b, a.conj(), 1e-12));
            // symmetric model: G is real
            prop_assert!(a.im.abs() <= 1e-12 * (1.0 + a.norm()));
        }

        #[test]
        fn asymmetric_conjugate_symmetry(w in 0u64..6, wp in 0u64..6, kappa in -3.1f64..3.1, p in 0.0f64..=1.0, theta in -1.0f64..3.0) {
            let a = g_kernel(&TransformQuery::new(w, wp, kappa, 0.8, theta).with_p(p)).unwrap();
            let b = g_kernel(&TransformQuery::new(w, wp, -kappa, 0.8, theta).with_p(p)).unwrap();
            prop_assert!(close(b, a.conj(), 1e-12));
        }

        #[test]
        fn parity_under_reflection(w in 0u64..6, wp in 0u64..6, kappa in -3.1f64..3.1, p in 0.0f64..=1.0) {
            // swapping p and q is the mirror image, i.e. κ → −κ
            let a = g_kernel(&TransformQuery::new(w, wp, kappa, 0.8, 1.5).with_p(p)).unwrap();
            let b = g_kernel(&TransformQuery::new(w, wp, -kappa, 0.8, 1.5).with_p(1.0 - p)).unwrap();
            prop_assert!(close(a, b, 1e-12));
        }

        #[test]
        fn psi_sticky_interpolates(z in 0.0f64..3.0, kappa in -2.0f64..2.0, m in -3.0f64..3.0, lambda in 0.05f64..4.0, gamma in 0.0f64..10.0) {
            let q = ContinuumQuery::new(z, kappa, m, lambda, gamma);
            let s = psi_sticky(&q).unwrap();
            let r = psi_reflected(&q).unwrap();
            let a = psi_absorbed(&q).unwrap();
            let c = sticky_weight(kappa, lambda, gamma);
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert!(close(s, c * r + (1.0 - c) * a, 1e-13));
        }
    }

    #[test]
    fn zeta_inside_unit_disc_on_grid() {
        let ks: Vec<f64> = (0..101).map(|i| -PI + 2.0 * PI * i as f64 / 100.0).collect();
        let ls: Vec<f64> = (0..101).map(|i| 10f64.powf(-3.0 + 5.0 * i as f64 / 100.0)).collect();
        for p in [0.5, 0.0, 0.8] {
            for &k in &ks {
                for &l in &ls {
                    let ing = KernelIngredients::new(k, l, p, 0.0).unwrap();
                    assert!(ing.zeta.norm() <= 1.0, "κ={k} λ={l} p={p}");
                }
            }
        }
    }
}
