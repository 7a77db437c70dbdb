//! Quadrature, Fourier inversion on the κ-ring and numerical Laplace inversion.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("quadrature did not converge: estimate {estimate}, error {error}")]
    QuadratureNonConvergence { estimate: f64, error: f64 },
    #[error("Laplace inversion unstable: value {value}, diagnostic {diagnostic}")]
    UnstableInversion { value: f64, diagnostic: f64 },
    #[error("invalid numerical setting: {0}")]
    InvalidSetting(String),
}

/// Tolerances and grid sizes shared by the quadrature routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Points of a κ-grid over [-π, π] with both endpoints included.
    pub grid_points: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_refinements: u32,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { grid_points: 1025, abs_tol: 1e-12, rel_tol: 1e-10, max_refinements: 12 }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<(), NumericsError> {
        if self.grid_points < 3 || !(self.grid_points - 1).is_multiple_of(2) {
            return Err(NumericsError::InvalidSetting(format!(
                "grid_points must be odd and >= 3, got {}",
                self.grid_points
            )));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(NumericsError::InvalidSetting("tolerances must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn accepts(&self, error: f64, value: f64) -> bool {
        error <= self.abs_tol.max(self.rel_tol * value.abs())
    }
}

/// Uniform grid over [-π, π], endpoints included.
pub fn kappa_grid(points: usize) -> Vec<f64> {
    let n = (points - 1) as f64;
    (0..points).map(|j| -PI + 2.0 * PI * j as f64 / n).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierInversion {
    pub value: Complex64,
    /// Set when |v| exceeds half the number of distinct grid points.
    pub alias_warning: bool,
}

/// (1/2π)∫ f(κ) e^{iκv} dκ by the periodic trapezoid rule.
///
/// `slice` holds f on [`kappa_grid`], so its first and last entries coincide.
pub fn fourier_ring_invert(slice: &[Complex64], v: i64) -> Result<FourierInversion, NumericsError> {
    if slice.len() < 3 {
        return Err(NumericsError::InvalidSetting("κ-slice needs at least 3 points".into()));
    }
    let n = slice.len() - 1;
    let grid = kappa_grid(slice.len());
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, (f, k)) in slice.iter().zip(&grid).enumerate() {
        let w = if j == 0 || j == n { 0.5 } else { 1.0 };
        acc += f * Complex64::from_polar(w, k * v as f64);
    }
    Ok(FourierInversion { value: acc / n as f64, alias_warning: v.unsigned_abs() as usize > n / 2 })
}

/// Mean of f over an n×n periodic grid on [-π, π)².
pub fn torus_mean<F>(mut f: F, n: usize) -> Complex64
where
    F: FnMut(f64, f64) -> Complex64,
{
    let h = 2.0 * PI / n as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let k1 = -PI + h * i as f64;
        for j in 0..n {
            acc += f(k1, -PI + h * j as f64);
        }
    }
    acc / (n * n) as f64
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let s = f(c - h * XGK[i]) + f(c + h * XGK[i]);
        k += s * WGK[i];
        if i % 2 == 1 {
            g += s * WG[i / 2];
        }
    }
    (k * h, ((k - g) * h).norm())
}

/// Globally adaptive Gauss–Kronrod (7/15) on [a, b] for complex integrands.
pub fn integrate_adaptive_complex<F>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<Complex64, NumericsError>
where
    F: Fn(f64) -> Complex64,
{
    if a == b {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let mut parts = vec![(a, b, gk15(&f, a, b))];
    let max_parts = 1usize << spec.max_refinements;
    loop {
        let total: Complex64 = parts.iter().map(|p| p.2 .0).sum();
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        if spec.accepts(err, total.norm()) {
            return Ok(total);
        }
        if parts.len() >= max_parts {
            return Err(NumericsError::QuadratureNonConvergence { estimate: total.re, error: err });
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        parts.push((lo, mid, gk15(&f, lo, mid)));
        parts.push((mid, hi, gk15(&f, mid, hi)));
    }
}

/// Real-valued wrapper around [`integrate_adaptive_complex`].
pub fn integrate_adaptive<F>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64, NumericsError>
where
    F: Fn(f64) -> f64,
{
    integrate_adaptive_complex(|x| Complex64::new(f(x), 0.0), a, b, spec).map(|z| z.re)
}

/// ∫_a^∞ f, summed over panels of doubling width until the panel contributions
/// fall below 1e-14 of the largest one.
pub fn integrate_semi_infinite<F>(f: F, a: f64, spec: &QuadratureSpec) -> Result<Complex64, NumericsError>
where
    F: Fn(f64) -> Complex64,
{
    let mut total = Complex64::new(0.0, 0.0);
    let mut peak = 0.0f64;
    let mut lo = a;
    let mut width = 1.0;
    let mut quiet = 0;
    for _ in 0..80 {
        let hi = lo + width;
        let part = integrate_adaptive_complex(&f, lo, hi, spec)?;
        total += part;
        peak = peak.max(part.norm());
        if part.norm() <= 1e-14 * peak || part.norm() < 1e-300 {
            quiet += 1;
            if quiet == 2 {
                log::debug!("semi-infinite integral truncated at {hi}, last panel {:e}", part.norm());
                return Ok(total);
            }
        } else {
            quiet = 0;
        }
        lo = hi;
        width *= 2.0;
    }
    Err(NumericsError::QuadratureNonConvergence { estimate: total.re, error: peak })
}

/// Smallest n with r^n / (1 - r) ≤ tol, i.e. the truncation point of a
/// geometric tail with ratio `r` < 1.
pub fn geometric_cutoff(r: f64, tol: f64) -> Option<usize> {
    if !(0.0..1.0).contains(&r) {
        return None;
    }
    if r == 0.0 {
        return Some(1);
    }
    let n = (tol * (1.0 - r)).ln() / r.ln();
    Some(n.ceil().max(1.0) as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplaceMethod {
    GaverStehfest,
    /// Euler-summed Fourier series on the Bromwich contour; needs complex evaluations.
    FourierSeries,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceInversionSpec {
    pub method: LaplaceMethod,
    /// Gaver–Stehfest: number of terms (even). Fourier series: partial sums before averaging.
    pub terms: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for LaplaceInversionSpec {
    fn default() -> Self {
        Self { method: LaplaceMethod::GaverStehfest, terms: 12, abs_tol: 1e-5, rel_tol: 1e-2 }
    }
}

impl LaplaceInversionSpec {
    pub fn gaver_stehfest(terms: usize) -> Self {
        Self { terms, ..Self::default() }
    }

    pub fn fourier_series() -> Self {
        Self { method: LaplaceMethod::FourierSeries, terms: 15, abs_tol: 1e-7, rel_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceInversion {
    pub value: f64,
    /// Gaver–Stehfest: |GS(N) - GS(N-2)|. Fourier series: change over the last averaged term.
    pub diagnostic: f64,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn stehfest_weights(n: usize) -> Vec<f64> {
    let half = n / 2;
    (1..=n)
        .map(|k| {
            let lo = k.div_ceil(2);
            let hi = k.min(half);
            let sum: f64 = (lo..=hi)
                .map(|j| {
                    (j as f64).powi(half as i32) * factorial(2 * j)
                        / (factorial(half - j) * factorial(j) * factorial(j - 1) * factorial(k - j) * factorial(2 * j - k))
                })
                .sum();
            if (k + half).is_multiple_of(2) {
                sum
            } else {
                -sum
            }
        })
        .collect()
}

fn stehfest<F: Fn(f64) -> f64>(f: &F, t: f64, n: usize) -> f64 {
    let a = LN_2 / t;
    stehfest_weights(n)
        .iter()
        .enumerate()
        .map(|(i, v)| v * f((i + 1) as f64 * a))
        .sum::<f64>()
        * a
}

/// Gaver–Stehfest inversion of a real-argument Laplace transform at time `t`.
pub fn laplace_invert<F>(f: F, t: f64, spec: &LaplaceInversionSpec) -> Result<LaplaceInversion, NumericsError>
where
    F: Fn(f64) -> f64,
{
    if spec.method != LaplaceMethod::GaverStehfest {
        return Err(NumericsError::InvalidSetting(
            "Fourier-series inversion needs a complex transform; use laplace_invert_complex".into(),
        ));
    }
    if !(t > 0.0) {
        return Err(NumericsError::InvalidSetting(format!("t must be > 0, got {t}")));
    }
    if spec.terms < 4 || !spec.terms.is_multiple_of(2) || spec.terms > 20 {
        return Err(NumericsError::InvalidSetting(format!(
            "Gaver-Stehfest needs an even number of terms in [4, 20], got {}",
            spec.terms
        )));
    }
    let value = stehfest(&f, t, spec.terms);
    let diagnostic = (value - stehfest(&f, t, spec.terms - 2)).abs();
    finish(value, diagnostic, spec)
}

fn finish(value: f64, diagnostic: f64, spec: &LaplaceInversionSpec) -> Result<LaplaceInversion, NumericsError> {
    if !value.is_finite() || diagnostic > spec.abs_tol.max(spec.rel_tol * value.abs()) {
        return Err(NumericsError::UnstableInversion { value, diagnostic });
    }
    Ok(LaplaceInversion { value, diagnostic })
}

/// Fourier-series inversion with Euler summation for transforms analytic in Re s > 0.
pub fn laplace_invert_complex<F>(f: F, t: f64, spec: &LaplaceInversionSpec) -> Result<LaplaceInversion, NumericsError>
where
    F: Fn(Complex64) -> Complex64,
{
    if !(t > 0.0) {
        return Err(NumericsError::InvalidSetting(format!("t must be > 0, got {t}")));
    }
    const A: f64 = 18.4;
    const M: usize = 11;
    let n = spec.terms.max(1);
    let scale = (A / 2.0).exp() / t;
    let mut partial = Vec::with_capacity(n + M + 1);
    let mut s = 0.5 * scale * f(Complex64::new(A / (2.0 * t), 0.0)).re;
    for k in 1..=(n + M) {
        let arg = Complex64::new(A, 2.0 * PI * k as f64) / (2.0 * t);
        let term = scale * f(arg).re;
        s += if k % 2 == 0 { term } else { -term };
        if k >= n {
            partial.push(s);
        }
    }
    let euler = |upto: usize| -> f64 {
        let mut binom = 1.0;
        let mut acc = 0.0;
        for (k, p) in partial.iter().take(upto + 1).enumerate() {
            acc += binom * p;
            binom = binom * (upto - k) as f64 / (k + 1) as f64;
        }
        acc / 2f64.powi(upto as i32)
    };
    let value = euler(M);
    let diagnostic = (value - euler(M - 1)).abs();
    finish(value, diagnostic, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ring_inversion_of_exponential_symbol() {
        // f(κ) = 1/(1 - r e^{-iκ}) has coefficients r^v for v >= 0
        let r = 0.5;
        let grid = kappa_grid(257);
        let slice: Vec<Complex64> = grid.iter().map(|&k| 1.0 / (1.0 - r * Complex64::from_polar(1.0, -k))).collect();
        for v in 0..6 {
            let inv = fourier_ring_invert(&slice, v).unwrap();
            assert!((inv.value.re - r.powi(v as i32)).abs() < 1e-14);
            assert!(inv.value.im.abs() < 1e-14);
            assert!(!inv.alias_warning);
        }
        assert!(fourier_ring_invert(&slice, -3).unwrap().value.norm() < 1e-14);
        assert!(fourier_ring_invert(&slice, 200).unwrap().alias_warning);
    }

    #[test]
    fn adaptive_gk() {
        let spec = QuadratureSpec::default();
        let v = integrate_adaptive(|x| x.sin(), 0.0, PI, &spec).unwrap();
        assert_relative_eq!(v, 2.0, epsilon = 1e-12);
        let v = integrate_adaptive(|x| x.abs().sqrt(), -1.0, 1.0, &spec).unwrap();
        assert_relative_eq!(v, 4.0 / 3.0, epsilon = 1e-9);
        let tail = integrate_semi_infinite(|x| Complex64::new((-2.0 * x).exp(), 0.0), 0.5, &spec).unwrap();
        assert_relative_eq!(tail.re, (-1.0f64).exp() / 2.0, epsilon = 1e-12);
        let tight = QuadratureSpec { max_refinements: 1, rel_tol: 1e-15, abs_tol: 1e-300, ..spec };
        assert!(integrate_adaptive(|x| x.abs().sqrt(), -1.0, 1.0, &tight).is_err());
    }

    #[test]
    fn geometric_cutoffs() {
        let n = geometric_cutoff(0.5, 1e-10).unwrap();
        assert!(0.5f64.powi(n as i32) / 0.5 <= 1e-10);
        assert!(0.5f64.powi(n as i32 - 1) / 0.5 > 1e-10);
        assert!(geometric_cutoff(1.0, 1e-10).is_none());
    }

    #[test]
    fn stehfest_on_known_pairs() {
        let spec = LaplaceInversionSpec::default();
        // 1/(s+1) <-> e^{-t}
        for t in [0.5, 1.0, 2.0] {
            let inv = laplace_invert(|s| 1.0 / (s + 1.0), t, &spec).unwrap();
            assert!((inv.value - (-t).exp()).abs() < 1e-4, "t={t} {inv:?}");
        }
        assert!(laplace_invert(|s| 1.0 / s, 1.0, &LaplaceInversionSpec::gaver_stehfest(7)).is_err());
        // oscillatory transforms are a known weak spot and must be flagged
        let osc = laplace_invert(|s| 1.0 / (s * s + 1.0), 5.0, &spec);
        assert!(matches!(osc, Err(NumericsError::UnstableInversion { .. })));
    }

    #[test]
    fn euler_fourier_on_known_pairs() {
        let spec = LaplaceInversionSpec::fourier_series();
        for t in [0.5, 1.0, 2.0] {
            let inv = laplace_invert_complex(|s| 1.0 / (s + 1.0), t, &spec).unwrap();
            assert!((inv.value - (-t).exp()).abs() < 1e-7);
            let inv = laplace_invert_complex(|s| 1.0 / (s * s + 1.0), t, &spec).unwrap();
            assert!((inv.value - t.sin()).abs() < 1e-7);
        }
    }

    proptest::proptest! {
        #[test]
        fn laplace_linearity(a in -5.0f64..5.0, b in -5.0f64..5.0, t in 0.2f64..4.0) {
            let spec = LaplaceInversionSpec { abs_tol: 1.0, rel_tol: 1.0, ..LaplaceInversionSpec::default() };
            let f = |s: f64| 1.0 / (s + 1.0);
            let g = |s: f64| 1.0 / (s + 2.0).powi(2);
            let lhs = laplace_invert(|s| a * f(s) + b * g(s), t, &spec).unwrap().value;
            let rhs = a * laplace_invert(f, t, &spec).unwrap().value + b * laplace_invert(g, t, &spec).unwrap().value;
            proptest::prop_assert!((lhs - rhs).abs() < 1e-8);
        }
    }

    #[test]
    fn torus_mean_of_trig_polynomial() {
        let m = torus_mean(|a, b| Complex64::new(1.0 + (a + 2.0 * b).cos(), 0.0), 16);
        assert!((m.re - 1.0).abs() < 1e-14);
    }
}
