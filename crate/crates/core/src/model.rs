//! Model parameters, rate tables and the SIP/SEP/IRW presets.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

const RESIDUAL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("rate {name} = {value} is negative or not finite")]
    NonnegativityViolation { name: &'static str, value: f64 },
    #[error("single-particle jump rate c+(1,0)+c-(1,0) is zero")]
    DegenerateModel,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// The six rates c±(n, m) that matter for two particles.
///
/// `c_plus(n, m)` is the rate for one of `n` particles at a site to jump right
/// onto a site holding `m`; `c_minus` is the same for left jumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateTable {
    pub plus_10: f64,
    pub minus_10: f64,
    pub plus_20: f64,
    pub minus_20: f64,
    pub plus_11: f64,
    pub minus_11: f64,
}

impl RateTable {
    /// Rates of the form c+(n,m) = αp·n(1+θm), c-(n,m) = αq·n(1+θm).
    pub fn linear(params: &ModelParams) -> Self {
        let (a, p, q, th) = (params.alpha, params.p, params.q(), params.theta);
        Self {
            plus_10: a * p,
            minus_10: a * q,
            plus_20: 2.0 * a * p,
            minus_20: 2.0 * a * q,
            plus_11: a * p * (1.0 + th),
            minus_11: a * q * (1.0 + th),
        }
    }

    fn named(&self) -> [(&'static str, f64); 6] {
        [
            ("c+(1,0)", self.plus_10),
            ("c-(1,0)", self.minus_10),
            ("c+(2,0)", self.plus_20),
            ("c-(2,0)", self.minus_20),
            ("c+(1,1)", self.plus_11),
            ("c-(1,1)", self.minus_11),
        ]
    }
}

/// Normalised parameters (α, p, θ) of a model satisfying the closure conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub alpha: f64,
    pub p: f64,
    pub theta: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, p: f64, theta: f64) -> Result<Self, ModelError> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(ModelError::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(ModelError::InvalidParameter(format!("p must lie in (0,1), got {p}")));
        }
        if !(theta.is_finite() && theta >= -1.0) {
            return Err(ModelError::InvalidParameter(format!("theta must be >= -1, got {theta}")));
        }
        Ok(Self { alpha, p, theta })
    }

    /// Symmetric model with α = 1.
    pub fn symmetric(theta: f64) -> Result<Self, ModelError> {
        Self::new(1.0, 0.5, theta)
    }

    pub fn q(&self) -> f64 {
        1.0 - self.p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub cond1_residual: f64,
    pub cond2_residuals: [f64; 2],
    pub passed: bool,
    /// Present when the conditions hold and (α, p, θ) is a valid parameter set.
    pub derived_params: Option<ModelParams>,
}

/// Check the two closure conditions on a rate table.
///
/// Condition 1: c+(2,0)+c-(2,0) = 2(c+(1,0)+c-(1,0)).
/// Condition 2: the right/left split is the same for every (n, m), checked
/// through cross-products so totally asymmetric tables need no division.
pub fn validate_rates(rates: &RateTable) -> Result<ConditionReport, ModelError> {
    for (name, value) in rates.named() {
        if !(value.is_finite() && value >= 0.0) {
            return Err(ModelError::NonnegativityViolation { name, value });
        }
    }
    let alpha = rates.plus_10 + rates.minus_10;
    if alpha == 0.0 {
        return Err(ModelError::DegenerateModel);
    }
    let scale = rates.named().iter().fold(0.0f64, |m, (_, v)| m.max(*v));

    let cond1 = (rates.plus_20 + rates.minus_20 - 2.0 * alpha).abs();
    let cross_11 = (rates.plus_10 * rates.minus_11 - rates.plus_11 * rates.minus_10).abs();
    let cross_20 = (rates.plus_10 * rates.minus_20 - rates.plus_20 * rates.minus_10).abs();

    let passed = cond1 <= RESIDUAL_TOL * scale
        && cross_11 <= RESIDUAL_TOL * scale * scale
        && cross_20 <= RESIDUAL_TOL * scale * scale;

    let derived_params = if passed {
        let p = rates.plus_10 / alpha;
        let theta = (rates.plus_11 + rates.minus_11) / alpha - 1.0;
        ModelParams::new(alpha, p, theta).ok()
    } else {
        None
    };

    Ok(ConditionReport {
        cond1_residual: cond1,
        cond2_residuals: [cross_11, cross_20],
        passed,
        derived_params,
    })
}

/// Jump rates of the (sum, distance) chain at distance `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveRates {
    pub dist_up: f64,
    pub dist_down: f64,
    /// Total rate of the sum coordinate; each jump goes right with probability p.
    pub sum_total: f64,
}

pub fn effective_rates(params: &ModelParams, w: u64) -> EffectiveRates {
    let a = params.alpha;
    let (up, down) = match w {
        0 => (2.0 * a, 0.0),
        1 => (a, a * (params.theta + 1.0)),
        _ => (a, a),
    };
    EffectiveRates { dist_up: up, dist_down: down, sum_total: up + down }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PresetKind {
    /// Symmetric inclusion with parameter k > 0.
    Sip { k: f64 },
    /// Symmetric exclusion allowing at most j particles per site.
    Sep { j: u32 },
    /// Independent random walkers.
    Irw,
}

impl fmt::Display for PresetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PresetKind::Sip { k } => write!(f, "sip:{k}"),
            PresetKind::Sep { j } => write!(f, "sep:{j}"),
            PresetKind::Irw => write!(f, "irw"),
        }
    }
}

impl FromStr for PresetKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let (name, arg) = match lower.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (lower.as_str(), None),
        };
        let bad = || ModelError::InvalidParameter(format!("cannot parse preset '{s}'"));
        match (name, arg) {
            ("irw", None) => Ok(PresetKind::Irw),
            ("sip", Some(a)) => {
                let k: f64 = a.parse().map_err(|_| bad())?;
                if !(k.is_finite() && k > 0.0) {
                    return Err(bad());
                }
                Ok(PresetKind::Sip { k })
            }
            ("sep", Some(a)) => {
                let j: u32 = a.parse().map_err(|_| bad())?;
                if j == 0 {
                    return Err(bad());
                }
                Ok(PresetKind::Sep { j })
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessPreset {
    pub kind: PresetKind,
    pub alpha: f64,
    pub theta: f64,
}

impl ProcessPreset {
    /// Build a preset; `alpha = None` picks the canonical rate (2k, 2j or 2).
    pub fn new(kind: PresetKind, alpha: Option<f64>) -> Result<Self, ModelError> {
        let (theta, canonical) = match kind {
            PresetKind::Sip { k } => {
                if !(k.is_finite() && k > 0.0) {
                    return Err(ModelError::InvalidParameter(format!("SIP needs k > 0, got {k}")));
                }
                (1.0 / k, 2.0 * k)
            }
            PresetKind::Sep { j } => {
                if j == 0 {
                    return Err(ModelError::InvalidParameter("SEP needs j >= 1".into()));
                }
                (-1.0 / j as f64, 2.0 * j as f64)
            }
            PresetKind::Irw => (0.0, 2.0),
        };
        let alpha = alpha.unwrap_or(canonical);
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(ModelError::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(Self { kind, alpha, theta })
    }

    pub fn params(&self) -> ModelParams {
        ModelParams { alpha: self.alpha, p: 0.5, theta: self.theta }
    }

    /// Single-site duality weight d(m, n) for m ≤ 2.
    pub fn duality_weight(&self, m: u32, n: u32) -> Result<f64, ModelError> {
        if m > 2 {
            return Err(ModelError::InvalidParameter(format!("duality weight needs m <= 2, got {m}")));
        }
        if let PresetKind::Sep { j } = self.kind {
            if n > j {
                return Err(ModelError::InvalidParameter(format!("SEP({j}) occupation {n} exceeds capacity")));
            }
        }
        if m > n {
            return Ok(0.0);
        }
        let falling: f64 = (0..m).map(|i| (n - i) as f64).product();
        let norm: f64 = match self.kind {
            PresetKind::Sip { k } => (0..m).map(|i| k + i as f64).product(),
            PresetKind::Sep { j } => (0..m).map(|i| (j - i) as f64).product(),
            PresetKind::Irw => 1.0,
        };
        Ok(falling / norm)
    }

    /// c₁ with E[d(1, η)] = c₁ρ.
    pub fn c1(&self) -> f64 {
        match self.kind {
            PresetKind::Sip { k } => 1.0 / k,
            PresetKind::Sep { j } => 1.0 / j as f64,
            PresetKind::Irw => 1.0,
        }
    }

    /// c₂ with d(2, n) = c₂ n(n-1); undefined for SEP(1).
    pub fn c2(&self) -> Option<f64> {
        match self.kind {
            PresetKind::Sip { k } => Some(1.0 / (k * (k + 1.0))),
            PresetKind::Sep { j } if j >= 2 => Some(1.0 / (j as f64 * (j as f64 - 1.0))),
            PresetKind::Sep { .. } => None,
            PresetKind::Irw => Some(1.0),
        }
    }

    /// Rate of a jump i → i+1 in the reference process, given the two occupations.
    pub fn bond_rate(&self, from: u32, to: u32) -> f64 {
        let r = 0.5 * self.alpha * from as f64 * (1.0 + self.theta * to as f64);
        r.max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sip2_example_rates() {
        let a = 4.0;
        let c = |n: f64, m: f64| a / 2.0 * n * (1.0 + m / 2.0);
        let rates = RateTable {
            plus_10: c(1.0, 0.0),
            minus_10: c(1.0, 0.0),
            plus_20: c(2.0, 0.0),
            minus_20: c(2.0, 0.0),
            plus_11: c(1.0, 1.0),
            minus_11: c(1.0, 1.0),
        };
        let rep = validate_rates(&rates).unwrap();
        assert!(rep.passed);
        let d = rep.derived_params.unwrap();
        assert_eq!(d.alpha, 4.0);
        assert_eq!(d.p, 0.5);
        assert!((d.theta - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cond1_failure_reports_residual() {
        let rates = RateTable {
            plus_10: 2.0,
            minus_10: 2.0,
            plus_20: 5.0,
            minus_20: 5.0,
            plus_11: 3.0,
            minus_11: 3.0,
        };
        let rep = validate_rates(&rates).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.cond1_residual, 2.0);
        assert!(rep.derived_params.is_none());
    }

    #[test]
    fn totally_asymmetric_passes_without_division() {
        let rates = RateTable {
            plus_10: 1.0,
            minus_10: 0.0,
            plus_20: 2.0,
            minus_20: 0.0,
            plus_11: 1.5,
            minus_11: 0.0,
        };
        let rep = validate_rates(&rates).unwrap();
        assert!(rep.passed);
        // p = 1 is outside the open interval required of ModelParams
        assert!(rep.derived_params.is_none());
    }

    #[test]
    fn negative_and_degenerate_rates_rejected() {
        let mut rates = RateTable::linear(&ModelParams::symmetric(1.0).unwrap());
        rates.minus_11 = -0.1;
        assert!(matches!(validate_rates(&rates), Err(ModelError::NonnegativityViolation { .. })));
        let zero = RateTable {
            plus_10: 0.0,
            minus_10: 0.0,
            plus_20: 0.0,
            minus_20: 0.0,
            plus_11: 1.0,
            minus_11: 1.0,
        };
        assert_eq!(validate_rates(&zero), Err(ModelError::DegenerateModel));
    }

    #[test]
    fn effective_rates_table() {
        let pr = ModelParams::new(1.0, 0.5, 2.0).unwrap();
        assert_eq!(effective_rates(&pr, 0), EffectiveRates { dist_up: 2.0, dist_down: 0.0, sum_total: 2.0 });
        assert_eq!(effective_rates(&pr, 1), EffectiveRates { dist_up: 1.0, dist_down: 3.0, sum_total: 4.0 });
        assert_eq!(effective_rates(&pr, 7), EffectiveRates { dist_up: 1.0, dist_down: 1.0, sum_total: 2.0 });
        let sep1 = ModelParams::symmetric(-1.0).unwrap();
        assert_eq!(effective_rates(&sep1, 1).dist_down, 0.0);
    }

    #[test]
    fn presets_and_weights() {
        let sip1 = ProcessPreset::new(PresetKind::Sip { k: 1.0 }, None).unwrap();
        assert_eq!((sip1.alpha, sip1.theta), (2.0, 1.0));
        for n in 0..6u32 {
            assert_eq!(sip1.duality_weight(1, n).unwrap(), n as f64);
            assert_eq!(sip1.duality_weight(2, n).unwrap(), (n * n.saturating_sub(1)) as f64 / 2.0);
        }
        let sep2 = ProcessPreset::new(PresetKind::Sep { j: 2 }, None).unwrap();
        assert_eq!((sep2.alpha, sep2.theta), (4.0, -0.5));
        assert_eq!(sep2.duality_weight(2, 2).unwrap(), 1.0);
        assert!(sep2.duality_weight(1, 3).is_err());
        let irw = ProcessPreset::new(PresetKind::Irw, None).unwrap();
        assert_eq!(irw.duality_weight(2, 4).unwrap(), 12.0);
        assert!(irw.duality_weight(3, 4).is_err());

        // θ + 1 = c₁²/c₂
        for preset in [sip1, sep2, irw, ProcessPreset::new(PresetKind::Sip { k: 0.3 }, None).unwrap()] {
            let c2 = preset.c2().unwrap();
            assert!((preset.theta + 1.0 - preset.c1().powi(2) / c2).abs() < 1e-12);
        }
        assert!(ProcessPreset::new(PresetKind::Sep { j: 1 }, None).unwrap().c2().is_none());
    }

    #[test]
    fn preset_parsing() {
        assert_eq!("sip:2".parse::<PresetKind>().unwrap(), PresetKind::Sip { k: 2.0 });
        assert_eq!("SEP:3".parse::<PresetKind>().unwrap(), PresetKind::Sep { j: 3 });
        assert_eq!("irw".parse::<PresetKind>().unwrap(), PresetKind::Irw);
        assert!("sep:0".parse::<PresetKind>().is_err());
        assert!("sip".parse::<PresetKind>().is_err());
        assert!(ModelParams::new(1.0, 0.5, -1.5).is_err());
    }

    proptest! {
        #[test]
        fn linear_rates_round_trip(alpha in 0.01f64..50.0, p in 0.01f64..0.99, theta in -1.0f64..10.0) {
            let params = ModelParams::new(alpha, p, theta).unwrap();
            let rep = validate_rates(&RateTable::linear(&params)).unwrap();
            prop_assert!(rep.passed);
            let d = rep.derived_params.unwrap();
            prop_assert!((d.alpha - alpha).abs() <= 1e-12 * alpha);
            prop_assert!((d.p - p).abs() <= 1e-12);
            prop_assert!((d.theta - theta).abs() <= 1e-12 * (1.0 + theta.abs()));
        }
    }
}
