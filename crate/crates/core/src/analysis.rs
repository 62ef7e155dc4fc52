//! Closed-form fidelities and success probabilities.
//!
//! Notation: `k = |α|²` for a real-amplitude secret `α|0⟩ + β|1⟩`, `q` and `p`
//! are phase- and amplitude-damping strengths, `s` is the forward weak
//! measurement strength and `r` the reverse strength. Barred quantities are
//! complements (`s̄ = 1 - s`).
//!
//! Fidelity formulas are conditioned on the dealer's computational outcome:
//! outcome 0 ("case zero") and outcome 1 ("case one") behave differently under
//! amplitude damping. Secret averages are plain integrals over `k` with
//! measure `dk`.

use thiserror::Error;

use crate::linalg::{DensityMatrix, LinalgError};
use crate::protocol::Secret;
use crate::quadrature::GaussLegendre;
use crate::tolerance::{EQ_TOL, ZERO_PROBABILITY};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("parameter {name} = {value} is outside its domain")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("{formula} is singular at this point")]
    Singular { formula: &'static str },
    #[error("(k = {k}, s = {s}, p = {p}) is outside the region where the optimal reverse strength is valid")]
    OutsideValidityRegion { k: f64, s: f64, p: f64 },
    #[error("state must be a single qubit, found {0} qubits")]
    NotSingleQubit(usize),
    #[error("state trace {0} differs from 1")]
    NotNormalized(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

type Result<T> = std::result::Result<T, AnalysisError>;

fn closed(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(AnalysisError::OutOfRange { name, value })
    }
}

fn open(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(AnalysisError::OutOfRange { name, value })
    }
}

/// `⟨ψ|ρ|ψ⟩` for a normalised single-qubit `ρ`.
pub fn fidelity(secret: &Secret, rho: &DensityMatrix) -> Result<f64> {
    if rho.num_qubits() != 1 {
        return Err(AnalysisError::NotSingleQubit(rho.num_qubits()));
    }
    if (rho.trace() - 1.0).abs() > EQ_TOL {
        return Err(AnalysisError::NotNormalized(rho.trace()));
    }
    Ok(rho.expectation(&secret.state())?)
}

/// Phase damping, any measurement branch.
pub fn f_pd(k: f64, q: f64) -> Result<f64> {
    let k = closed("k", k)?;
    let q = closed("q", q)?;
    let kb = 1.0 - k;
    Ok(k * k + kb * kb + 2.0 * (1.0 - q).powi(2) * k * kb)
}

pub fn avg_f_pd(q: f64) -> Result<f64> {
    let q = closed("q", q)?;
    Ok((3.0 - 2.0 * q + q * q) / 3.0)
}

/// Amplitude damping, dealer outcome 0.
pub fn f_ad(k: f64, p: f64) -> Result<f64> {
    let k = closed("k", k)?;
    let p = closed("p", p)?;
    Ok(k + (1.0 - p) * (1.0 - k))
}

/// Amplitude damping, dealer outcome 1.
pub fn f_ad_alice_one(k: f64, p: f64) -> Result<f64> {
    let k = closed("k", k)?;
    let p = closed("p", p)?;
    Ok(1.0 - p * k)
}

/// Secret average of [`f_ad`].
pub fn avg_f_ad(p: f64) -> Result<f64> {
    let p = closed("p", p)?;
    Ok(1.0 - 0.5 * p)
}

/// Success probability of the forward weak measurement alone.
pub fn sp1(k: f64, s: f64) -> Result<f64> {
    let k = closed("k", k)?;
    let s = closed("s", s)?;
    Ok(0.5 * (2.0 - s) * (1.0 - (1.0 - k) * s))
}

/// Total success probability of weak measurement, damping and reversal.
pub fn sp2(k: f64, s: f64, r: f64, p: f64) -> Result<f64> {
    let (k, s, r, p) = wmrqm_args(k, s, r, p)?;
    let delta = p * r - 1.0;
    Ok(0.5 * (k * (1.0 - r) - (1.0 - k) * delta * (1.0 - s)) * (2.0 - (1.0 + p) * r + delta * s))
}

/// Part of [`sp2`] in which the dealer measures 0.
pub fn sp2_case_zero(k: f64, s: f64, r: f64, p: f64) -> Result<f64> {
    let (k, s, r, p) = wmrqm_args(k, s, r, p)?;
    Ok(0.5 * case_zero_norm(k, s, r, p))
}

/// Part of [`sp2`] in which the dealer measures 1; independent of the secret.
pub fn sp2_case_one(s: f64, r: f64, p: f64) -> Result<f64> {
    let s = closed("s", s)?;
    let r = closed("r", r)?;
    let p = closed("p", p)?;
    Ok(0.5 * (1.0 - s) * (1.0 - r) * (1.0 - p * r))
}

fn wmrqm_args(k: f64, s: f64, r: f64, p: f64) -> Result<(f64, f64, f64, f64)> {
    Ok((closed("k", k)?, closed("s", s)?, closed("r", r)?, closed("p", p)?))
}

fn case_zero_norm(k: f64, s: f64, r: f64, p: f64) -> f64 {
    let rb = 1.0 - r;
    let sb = 1.0 - s;
    let delta = p * r - 1.0;
    k * rb * rb + (1.0 - k) * sb * sb * delta * delta
}

/// Fidelity with weak-measurement protection, dealer outcome 0.
pub fn f0_ww(k: f64, s: f64, r: f64, p: f64) -> Result<f64> {
    let (k, s, r, p) = wmrqm_args(k, s, r, p)?;
    let denom = case_zero_norm(k, s, r, p);
    if denom <= ZERO_PROBABILITY {
        return Err(AnalysisError::Singular { formula: "f0_ww" });
    }
    Ok(f0_ww_raw(k, s, r, p, denom))
}

fn f0_ww_raw(k: f64, s: f64, r: f64, p: f64, denom: f64) -> f64 {
    let (kb, sb, rb, pb) = (1.0 - k, 1.0 - s, 1.0 - r, 1.0 - p);
    let delta = p * r - 1.0;
    let num =
        k * k * rb * rb - kb * kb * sb * sb * pb * delta + k * kb * sb * rb * (2.0 - (1.0 + s) * p - sb * p * p * r);
    num / denom
}

/// Fidelity with weak-measurement protection, dealer outcome 1; independent of `s`.
pub fn f1_ww(k: f64, r: f64, p: f64) -> Result<f64> {
    let k = closed("k", k)?;
    let r = closed("r", r)?;
    let p = closed("p", p)?;
    if (1.0 - p * r).abs() <= ZERO_PROBABILITY {
        return Err(AnalysisError::Singular { formula: "f1_ww" });
    }
    Ok((p * (k + r - k * r) - 1.0) / (p * r - 1.0))
}

/// Secret average of [`f1_ww`].
pub fn avg_f1(r: f64, p: f64) -> Result<f64> {
    let r = closed("r", r)?;
    let p = closed("p", p)?;
    if (1.0 - p * r).abs() <= ZERO_PROBABILITY {
        return Err(AnalysisError::Singular { formula: "avg_f1" });
    }
    Ok((p + p * r - 2.0) / (2.0 * p * r - 2.0))
}

/// Fidelity averaged over both dealer outcomes, weighted by their success
/// probabilities.
pub fn f_ww(k: f64, s: f64, r: f64, p: f64) -> Result<f64> {
    let w0 = sp2_case_zero(k, s, r, p)?;
    let w1 = sp2_case_one(s, r, p)?;
    if w0 + w1 <= ZERO_PROBABILITY {
        return Err(AnalysisError::Singular { formula: "f_ww" });
    }
    let f0 = if w0 > ZERO_PROBABILITY { f0_ww(k, s, r, p)? } else { 0.0 };
    let f1 = if w1 > ZERO_PROBABILITY { f1_ww(k, r, p)? } else { 0.0 };
    Ok((w0 * f0 + w1 * f1) / (w0 + w1))
}

/// The `(p, s)` slice of the region where [`r_opt`] is the optimal reverse
/// strength: `lower < k < 1` with `k ≠ split`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidityRegion {
    p: f64,
    s: f64,
}

impl ValidityRegion {
    /// Requires `0 < p < 1` and `0 ≤ s < 1`. The `s = 0` edge is admitted as
    /// the continuous limit; [`ValidityRegion::contains`] still rejects it.
    pub fn new(p: f64, s: f64) -> Result<Self> {
        open("p", p)?;
        if !(0.0..1.0).contains(&s) {
            return Err(AnalysisError::OutOfRange { name: "s", value: s });
        }
        Ok(Self { p, s })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// Effective damping seen by the excited component, `p·s̄`.
    pub fn x(&self) -> f64 {
        self.p * (1.0 - self.s)
    }

    pub fn lower(&self) -> f64 {
        region_lower(self.p, self.s)
    }

    pub fn split(&self) -> f64 {
        region_split(self.s)
    }

    pub fn contains(&self, k: f64) -> bool {
        in_validity_region(k, self.s, self.p)
    }
}

fn region_lower(p: f64, s: f64) -> f64 {
    (-p + p * s) / (-2.0 - 2.0 * p + 2.0 * p * s)
}

fn region_split(s: f64) -> f64 {
    (-1.0 + s) / (-4.0 + 2.0 * s)
}

pub fn in_validity_region(k: f64, s: f64, p: f64) -> bool {
    if !(p > 0.0 && p < 1.0 && s > 0.0 && s < 1.0) {
        return false;
    }
    let a = region_lower(p, s);
    let b = region_split(s);
    (a < k && k < b) || (b < k && k < 1.0)
}

/// Reverse strength maximising [`f0_ww`] at fixed `(k, s, p)`.
pub fn r_opt(k: f64, s: f64, p: f64) -> Result<f64> {
    if !in_validity_region(k, s, p) {
        return Err(AnalysisError::OutsideValidityRegion { k, s, p });
    }
    Ok(r_opt_raw(k, s, p))
}

fn r_opt_raw(k: f64, s: f64, p: f64) -> f64 {
    let sb = 1.0 - s;
    let pb = 1.0 - p;
    let ps2 = p * p * sb * sb;
    let f = p + 2.0 * k * (1.0 - p * sb) - p * s;
    let radicand = -k * pb * pb * sb * sb / ((k * (ps2 - 1.0) - ps2) * f * f);
    -radicand.sqrt() + (1.0 + (2.0 * k - 1.0) * s) / f
}

/// [`f0_ww`] evaluated at [`r_opt`].
pub fn f0_opt(k: f64, s: f64, p: f64) -> Result<f64> {
    f0_ww(k, s, r_opt(k, s, p)?, p)
}

/// Closed form of [`f0_opt`]; it depends on `(s, p)` only through `x = p·s̄`.
pub fn f0_opt_closed(k: f64, s: f64, p: f64) -> Result<f64> {
    if !in_validity_region(k, s, p) {
        return Err(AnalysisError::OutsideValidityRegion { k, s, p });
    }
    Ok(f0_opt_closed_raw(k, p * (1.0 - s)))
}

fn f0_opt_closed_raw(k: f64, x: f64) -> f64 {
    0.5 * (1.0 - 2.0 * x * (1.0 - k)) + (k * (1.0 - x * x) + x * x).sqrt() / (2.0 * k.sqrt())
}

/// Integral of [`f0_opt`] over the validity region with measure `dk`.
///
/// With `c = 1 - x²` the integrand is `½(1 - 2x(1-k)) + √(ck + x²)/(2√k)`; the
/// second term becomes `∫ √(ct² + x²) dt` under `k = t²`.
pub fn avg_f_opt0(p: f64, s: f64) -> Result<f64> {
    let region = ValidityRegion::new(p, s)?;
    let x = region.x();
    let a = region.lower();
    let c = 1.0 - x * x;
    let u = c.sqrt();
    let g = |t: f64| {
        let root = (c * t * t + x * x).sqrt();
        0.5 * t * root + x * x / (2.0 * u) * (u * t + root).ln()
    };
    let linear = 0.5 * ((1.0 - 2.0 * x) * (1.0 - a) + x * (1.0 - a * a));
    Ok(linear + g(1.0) - g(a.sqrt()))
}

/// The frequently quoted closed form for the region average. It disagrees
/// with direct integration of [`f0_opt`] and is kept only for comparison.
pub fn avg_f_opt0_printed(p: f64, s: f64) -> Result<f64> {
    ValidityRegion::new(p, s)?;
    let ps = p * (1.0 - s);
    let u = (1.0 - ps * ps).sqrt();
    let v = 1.0 + p - p * s;
    let w = (2.0 / v - 1.0).sqrt();
    let t1 = (8.0 - ps * (ps + 2.0) * (4.0 - 3.0 * ps)) * u;
    let inner = ps * (1.0 - u + ps * (1.0 + u - 2.0 * w) + 2.0 * ps * ps * w);
    let t2 = 2.0 * ps * ps * v * v * (inner.ln() - ((2.0 - ps * ps - 2.0 * u) * v).ln());
    let value = (t1 + t2) / (8.0 * u * v * v);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(AnalysisError::Singular {
            formula: "avg_f_opt0_printed",
        })
    }
}

/// How a region average is normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionMeasure {
    /// Plain `dk`, as used by [`avg_f_opt0`].
    Lebesgue,
    /// `dk` divided by the region length.
    Normalized,
}

/// Region integral of an integrand in `k`, split at the interior exclusion
/// point and integrated adaptively.
fn region_integral<F: FnMut(f64) -> f64>(region: &ValidityRegion, measure: RegionMeasure, mut f: F) -> f64 {
    let rule = GaussLegendre::new(32);
    let a = region.lower();
    let b = region.split();
    let total = rule.integrate_adaptive(a, b, 1e-14, &mut f) + rule.integrate_adaptive(b, 1.0, 1e-14, &mut f);
    match measure {
        RegionMeasure::Lebesgue => total,
        RegionMeasure::Normalized => total / (1.0 - a),
    }
}

/// Region average of [`f0_opt`] by numeric integration of the pointwise
/// optimum.
pub fn avg_f_opt0_quadrature(p: f64, s: f64, measure: RegionMeasure) -> Result<f64> {
    let region = ValidityRegion::new(p, s)?;
    Ok(region_integral(&region, measure, |k| {
        let r = r_opt_raw(k, s, p);
        f0_ww_raw(k, s, r, p, case_zero_norm(k, s, r, p))
    }))
}

/// Region integral of [`sp2`] at [`r_opt`], same measure as [`avg_f_opt0`].
pub fn avg_sp2_opt(p: f64, s: f64) -> Result<f64> {
    let region = ValidityRegion::new(p, s)?;
    let mut failure = None;
    let value = region_integral(&region, RegionMeasure::Lebesgue, |k| {
        match sp2(k, s, r_opt_raw(k, s, p).clamp(0.0, 1.0), p) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// Named formula parameters, in the order a formula expects them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Param {
    K,
    Q,
    P,
    S,
    R,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::K => "k",
            Param::Q => "q",
            Param::P => "p",
            Param::S => "s",
            Param::R => "r",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "k" => Some(Param::K),
            "q" => Some(Param::Q),
            "p" => Some(Param::P),
            "s" => Some(Param::S),
            "r" => Some(Param::R),
            _ => None,
        }
    }
}

/// A closed-form quantity addressable by name.
#[derive(Clone, Copy)]
pub struct Formula {
    pub name: &'static str,
    pub params: &'static [Param],
    /// Whether every value is a fidelity or probability in `[0, 1]`.
    pub bounded: bool,
    eval: fn(&[f64]) -> Result<f64>,
}

impl Formula {
    /// Evaluate with arguments in `params` order.
    pub fn eval(&self, args: &[f64]) -> Result<f64> {
        assert_eq!(
            args.len(),
            self.params.len(),
            "{} takes {} arguments",
            self.name,
            self.params.len()
        );
        (self.eval)(args)
    }
}

impl std::fmt::Debug for Formula {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Formula")
            .field("name", &self.name)
            .field("params", &self.params)
            .finish()
    }
}

use Param::{K, P, Q, R, S};

static FORMULAS: &[Formula] = &[
    Formula {
        name: "f_pd",
        params: &[K, Q],
        bounded: true,
        eval: |a| f_pd(a[0], a[1]),
    },
    Formula {
        name: "avg_f_pd",
        params: &[Q],
        bounded: true,
        eval: |a| avg_f_pd(a[0]),
    },
    Formula {
        name: "f_ad",
        params: &[K, P],
        bounded: true,
        eval: |a| f_ad(a[0], a[1]),
    },
    Formula {
        name: "f_ad_alice_one",
        params: &[K, P],
        bounded: true,
        eval: |a| f_ad_alice_one(a[0], a[1]),
    },
    Formula {
        name: "avg_f_ad",
        params: &[P],
        bounded: true,
        eval: |a| avg_f_ad(a[0]),
    },
    Formula {
        name: "sp1",
        params: &[K, S],
        bounded: true,
        eval: |a| sp1(a[0], a[1]),
    },
    Formula {
        name: "sp2",
        params: &[K, S, R, P],
        bounded: true,
        eval: |a| sp2(a[0], a[1], a[2], a[3]),
    },
    Formula {
        name: "sp2_case_zero",
        params: &[K, S, R, P],
        bounded: true,
        eval: |a| sp2_case_zero(a[0], a[1], a[2], a[3]),
    },
    Formula {
        name: "sp2_case_one",
        params: &[S, R, P],
        bounded: true,
        eval: |a| sp2_case_one(a[0], a[1], a[2]),
    },
    Formula {
        name: "f0_ww",
        params: &[K, S, R, P],
        bounded: true,
        eval: |a| f0_ww(a[0], a[1], a[2], a[3]),
    },
    Formula {
        name: "f1_ww",
        params: &[K, R, P],
        bounded: true,
        eval: |a| f1_ww(a[0], a[1], a[2]),
    },
    Formula {
        name: "f_ww",
        params: &[K, S, R, P],
        bounded: true,
        eval: |a| f_ww(a[0], a[1], a[2], a[3]),
    },
    Formula {
        name: "avg_f1",
        params: &[R, P],
        bounded: true,
        eval: |a| avg_f1(a[0], a[1]),
    },
    Formula {
        name: "r_opt",
        params: &[K, S, P],
        bounded: true,
        eval: |a| r_opt(a[0], a[1], a[2]),
    },
    Formula {
        name: "f0_opt",
        params: &[K, S, P],
        bounded: true,
        eval: |a| f0_opt(a[0], a[1], a[2]),
    },
    Formula {
        name: "avg_f_opt0",
        params: &[P, S],
        bounded: false,
        eval: |a| avg_f_opt0(a[0], a[1]),
    },
    Formula {
        name: "avg_f_opt0_printed",
        params: &[P, S],
        bounded: false,
        eval: |a| avg_f_opt0_printed(a[0], a[1]),
    },
    Formula {
        name: "avg_sp2_opt",
        params: &[P, S],
        bounded: false,
        eval: |a| avg_sp2_opt(a[0], a[1]),
    },
    Formula {
        name: "region_lower",
        params: &[P, S],
        bounded: true,
        eval: |a| ValidityRegion::new(a[0], a[1]).map(|r| r.lower()),
    },
    Formula {
        name: "region_split",
        params: &[P, S],
        bounded: true,
        eval: |a| ValidityRegion::new(a[0], a[1]).map(|r| r.split()),
    },
];

/// Every named closed-form quantity.
pub fn formulas() -> &'static [Formula] {
    FORMULAS
}

pub fn formula(name: &str) -> Option<&'static Formula> {
    FORMULAS.iter().find(|f| f.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn phase_damping_limits() {
        assert_eq!(f_pd(0.3, 0.0).unwrap(), 1.0);
        assert!(close(f_pd(0.5, 1.0).unwrap(), 0.5, 1e-15));
        assert_eq!(avg_f_pd(0.0).unwrap(), 1.0);
        assert!(close(avg_f_pd(1.0).unwrap(), 2.0 / 3.0, 1e-15));
    }

    #[test]
    fn phase_damping_average_matches_quadrature() {
        let rule = GaussLegendre::new(8);
        for q in [0.0, 0.2, 0.5, 0.9, 1.0] {
            let direct = rule.integrate(0.0, 1.0, |k| f_pd(k, q).unwrap());
            assert!(close(direct, avg_f_pd(q).unwrap(), 1e-14), "q = {q}");
        }
    }

    #[test]
    fn amplitude_damping_values() {
        assert!(close(f_ad(0.5, 0.3).unwrap(), 0.85, 1e-15));
        assert!(close(avg_f_ad(0.5).unwrap(), 0.75, 1e-15));
        assert!(close(f_ad_alice_one(0.5, 0.3).unwrap(), 0.85, 1e-15));
        assert_eq!(f_ad(1.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn sp1_endpoints() {
        assert_eq!(sp1(0.3, 0.0).unwrap(), 1.0);
        assert!(close(sp1(0.3, 1.0).unwrap(), 0.15, 1e-15));
        assert!(close(sp1(1.0, 0.7).unwrap(), 0.65, 1e-15));
    }

    #[test]
    fn sp2_splits_into_dealer_cases() {
        for &(k, s, r, p) in &[
            (0.5, 0.3, 0.4, 0.2),
            (0.1, 0.9, 0.2, 0.7),
            (0.8, 0.0, 1.0, 0.5),
            (0.0, 0.5, 0.5, 1.0),
        ] {
            let total = sp2(k, s, r, p).unwrap();
            let parts = sp2_case_zero(k, s, r, p).unwrap() + sp2_case_one(s, r, p).unwrap();
            assert!(close(total, parts, 1e-14), "{k} {s} {r} {p}");
        }
        assert!(close(sp2(0.5, 0.3, 0.4, 0.2).unwrap(), 0.386884, 1e-12));
    }

    #[test]
    fn wmrqm_reduces_to_plain_damping() {
        for &(k, p) in &[(0.2, 0.4), (0.7, 0.9), (0.5, 0.0)] {
            assert!(close(f0_ww(k, 0.0, 0.0, p).unwrap(), f_ad(k, p).unwrap(), 1e-14));
            assert!(close(f1_ww(k, 0.0, p).unwrap(), f_ad_alice_one(k, p).unwrap(), 1e-14));
        }
    }

    #[test]
    fn f1_average_matches_quadrature() {
        let rule = GaussLegendre::new(4);
        for &(r, p) in &[(0.2, 0.4), (0.9, 0.9), (0.0, 0.5)] {
            let direct = rule.integrate(0.0, 1.0, |k| f1_ww(k, r, p).unwrap());
            assert!(close(direct, avg_f1(r, p).unwrap(), 1e-14));
        }
        assert!(matches!(avg_f1(1.0, 1.0), Err(AnalysisError::Singular { .. })));
    }

    #[test]
    fn ranges_are_enforced() {
        assert!(matches!(
            f_pd(1.2, 0.1),
            Err(AnalysisError::OutOfRange { name: "k", .. })
        ));
        assert!(matches!(
            f_ad(0.5, -0.1),
            Err(AnalysisError::OutOfRange { name: "p", .. })
        ));
        assert!(f_pd(f64::NAN, 0.1).is_err());
        assert!(ValidityRegion::new(1.0, 0.5).is_err());
        assert!(ValidityRegion::new(0.5, 1.0).is_err());
    }

    #[test]
    fn region_boundaries() {
        let reg = ValidityRegion::new(0.5, 0.4).unwrap();
        let x = 0.5 * 0.6;
        assert!(close(reg.lower(), x / (2.0 * (1.0 + x)), 1e-15));
        assert!(close(reg.split(), 0.6 / 3.2, 1e-15));
        assert!(reg.lower() < reg.split());
        assert!(!reg.contains(reg.split()));
        assert!(!reg.contains(reg.lower()));
        assert!(reg.contains(0.5 * (reg.lower() + reg.split())));
        assert!(!reg.contains(1.0));
        assert!(matches!(
            r_opt(0.01, 0.4, 0.5),
            Err(AnalysisError::OutsideValidityRegion { .. })
        ));
    }

    #[test]
    fn r_opt_is_a_stationary_maximum() {
        for &(k, s, p) in &[(0.5, 0.3, 0.6), (0.9, 0.5, 0.9), (0.3, 0.1, 0.2)] {
            let r = r_opt(k, s, p).unwrap();
            assert!((0.0..=1.0).contains(&r));
            let f = f0_ww(k, s, r, p).unwrap();
            for dr in [-1e-3, 1e-3] {
                let rr = (r + dr).clamp(0.0, 1.0);
                assert!(f0_ww(k, s, rr, p).unwrap() <= f + 1e-12);
            }
        }
    }

    #[test]
    fn optimum_closed_form_matches_pointwise() {
        for &(k, s, p) in &[(0.5, 0.3, 0.6), (0.9, 0.5, 0.9), (0.3, 0.1, 0.2), (0.99, 0.01, 0.99)] {
            let direct = f0_opt(k, s, p).unwrap();
            let closed = f0_opt_closed(k, s, p).unwrap();
            assert!(close(direct, closed, 1e-12), "{k} {s} {p}: {direct} vs {closed}");
        }
    }

    #[test]
    fn region_average_closed_form_matches_quadrature() {
        for &(p, s) in &[(0.99, 0.0), (0.1, 0.1), (0.5, 0.5), (0.9, 0.2), (0.3, 0.95)] {
            let closed = avg_f_opt0(p, s).unwrap();
            let quad = avg_f_opt0_quadrature(p, s, RegionMeasure::Lebesgue).unwrap();
            assert!(close(closed, quad, 1e-10), "{p} {s}: {closed} vs {quad}");
        }
    }

    #[test]
    fn region_average_reference_values() {
        assert!(close(avg_f_opt0(0.99, 0.0).unwrap(), 0.595427, 5e-6));
        assert!(close(avg_f_opt0(0.1, 0.1).unwrap(), 0.9218, 5e-5));
        assert!(close(avg_f_opt0_printed(0.99, 0.0).unwrap(), 0.6646, 5e-4));
    }

    #[test]
    fn case_weighted_fidelity_is_between_cases() {
        let (k, s, r, p) = (0.4, 0.3, 0.5, 0.6);
        let f0 = f0_ww(k, s, r, p).unwrap();
        let f1 = f1_ww(k, r, p).unwrap();
        let f = f_ww(k, s, r, p).unwrap();
        assert!(f >= f0.min(f1) - 1e-15 && f <= f0.max(f1) + 1e-15);
    }

    #[test]
    fn fidelity_checks_shape_and_trace() {
        let secret = Secret::from_k(0.5).unwrap();
        let rho = secret.state().density();
        assert!(close(fidelity(&secret, &rho).unwrap(), 1.0, 1e-15));
        let two = rho.tensor(&rho).unwrap();
        assert!(matches!(fidelity(&secret, &two), Err(AnalysisError::NotSingleQubit(2))));
        let half = rho.scaled(0.5);
        assert!(matches!(fidelity(&secret, &half), Err(AnalysisError::NotNormalized(_))));
    }

    #[test]
    fn registry_names_are_unique_and_arity_matches() {
        let mut names: Vec<_> = formulas().iter().map(|f| f.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), formulas().len());
        let f = formula("f_pd").unwrap();
        assert_eq!(f.eval(&[0.5, 1.0]).unwrap(), 0.5);
    }
}
