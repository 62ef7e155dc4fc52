//! Phase-damping and amplitude-damping Kraus channels, and the selective
//! weak-measurement operators used for decoherence suppression.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{ComplexMatrix, DensityMatrix, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("{name} strength {value} outside [0, 1]")]
    StrengthOutOfRange { name: &'static str, value: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn check_strength(name: &'static str, value: f64) -> Result<f64, ChannelError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(ChannelError::StrengthOutOfRange { name, value })
    }
}

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelKind {
    PhaseDamping,
    AmplitudeDamping,
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PhaseDamping => "pdc",
            Self::AmplitudeDamping => "adc",
        })
    }
}

impl FromStr for ChannelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pdc" | "phase" | "phase-damping" => Ok(Self::PhaseDamping),
            "adc" | "amplitude" | "amplitude-damping" => Ok(Self::AmplitudeDamping),
            other => Err(format!("unknown channel kind `{other}`")),
        }
    }
}

/// Ordered set of single-qubit Kraus operators.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    kind: ChannelKind,
    strength: f64,
    operators: Vec<ComplexMatrix>,
}

impl KrausChannel {
    /// Builds a channel from explicit operators without checking completeness;
    /// use [`validate_cptp`] to measure how far it is from trace preserving.
    pub fn from_operators(kind: ChannelKind, strength: f64, operators: Vec<ComplexMatrix>) -> Self {
        Self {
            kind,
            strength,
            operators,
        }
    }

    pub fn new(kind: ChannelKind, strength: f64) -> Result<Self, ChannelError> {
        match kind {
            ChannelKind::PhaseDamping => pdc(strength),
            ChannelKind::AmplitudeDamping => adc(strength),
        }
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn operators(&self) -> &[ComplexMatrix] {
        &self.operators
    }
}

/// Phase damping: `K₀ = √(1−q) I`, `K₁ = √q |0⟩⟨0|`, `K₂ = √q |1⟩⟨1|`.
pub fn pdc(q: f64) -> Result<KrausChannel, ChannelError> {
    let q = check_strength("phase-damping", q)?;
    let keep = (1.0 - q).sqrt();
    let hit = q.sqrt();
    Ok(KrausChannel {
        kind: ChannelKind::PhaseDamping,
        strength: q,
        operators: vec![
            ComplexMatrix::diagonal(&[real(keep), real(keep)]),
            ComplexMatrix::diagonal(&[real(hit), real(0.0)]),
            ComplexMatrix::diagonal(&[real(0.0), real(hit)]),
        ],
    })
}

/// Amplitude damping: `K₀ = |0⟩⟨0| + √(1−p) |1⟩⟨1|`, `K₁ = √p |0⟩⟨1|`.
pub fn adc(p: f64) -> Result<KrausChannel, ChannelError> {
    let p = check_strength("amplitude-damping", p)?;
    Ok(KrausChannel {
        kind: ChannelKind::AmplitudeDamping,
        strength: p,
        operators: vec![
            ComplexMatrix::diagonal(&[real(1.0), real((1.0 - p).sqrt())]),
            ComplexMatrix::from_real(2, 2, &[0.0, p.sqrt(), 0.0, 0.0])?,
        ],
    })
}

/// `Σ_i E_i ρ E_i†` with each `E_i` acting on `qubit`.
pub fn apply_channel(rho: &DensityMatrix, channel: &KrausChannel, qubit: usize) -> Result<DensityMatrix, ChannelError> {
    let mut terms = channel.operators.iter().map(|k| rho.conjugate_local(k, qubit));
    let first = terms
        .next()
        .ok_or(LinalgError::DimensionMismatch { expected: 1, found: 0 })??;
    terms
        .try_fold(first, |acc, term| acc.sum(&term?))
        .map_err(ChannelError::from)
}

/// Max-norm of `Σ K_i†K_i − I`.
pub fn validate_cptp(channel: &KrausChannel) -> f64 {
    let mut sum = ComplexMatrix::zeros(2, 2);
    for k in &channel.operators {
        match k.adjoint().matmul(k) {
            Ok(term) => sum = &sum + &term,
            Err(_) => return f64::INFINITY,
        }
    }
    sum.max_abs_diff(&ComplexMatrix::identity(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeakKind {
    /// Detector did not click: `diag(1, √(1−s))`.
    ForwardNull,
    /// Detector clicked: `diag(0, √s)`; irreversible.
    ForwardClick,
    /// Reversal applied after the channel: `diag(√(1−r), 1)`.
    Reverse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakMeasurementOp {
    kind: WeakKind,
    strength: f64,
    matrix: ComplexMatrix,
}

impl WeakMeasurementOp {
    pub fn kind(&self) -> WeakKind {
        self.kind
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }
}

pub fn weak_op(kind: WeakKind, strength: f64) -> Result<WeakMeasurementOp, ChannelError> {
    let s = check_strength("weak-measurement", strength)?;
    let diag = match kind {
        WeakKind::ForwardNull => [1.0, (1.0 - s).sqrt()],
        WeakKind::ForwardClick => [0.0, s.sqrt()],
        WeakKind::Reverse => [(1.0 - s).sqrt(), 1.0],
    };
    Ok(WeakMeasurementOp {
        kind,
        strength: s,
        matrix: ComplexMatrix::diagonal(&[real(diag[0]), real(diag[1])]),
    })
}

/// Post-selects on `op` at `qubit`: returns the unnormalized `E ρ E†` and
/// its trace. Nothing is renormalized here.
pub fn apply_selective(
    rho: &DensityMatrix,
    op: &WeakMeasurementOp,
    qubit: usize,
) -> Result<(DensityMatrix, f64), ChannelError> {
    let out = rho.conjugate_local(&op.matrix, qubit)?;
    let p = out.trace();
    Ok((out, p))
}
