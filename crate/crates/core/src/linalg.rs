//! Dense complex linear algebra for small qubit registers.
//!
//! Everything here is sized for at most eight qubits (256 × 256 operators),
//! so storage is always dense and row-major.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use thiserror::Error;

use crate::tolerance::EQ_TOL;

/// Largest register the simulator supports.
pub const MAX_QUBITS: usize = 8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("register of {0} qubits exceeds the supported maximum of {MAX_QUBITS}")]
    RegisterTooLarge(usize),
    #[error("qubit index {index} out of range for a {register}-qubit register")]
    InvalidQubit { index: usize, register: usize },
    #[error("qubit index {0} listed more than once")]
    DuplicateQubit(usize),
    #[error("matrix is not Hermitian (residual {0:e})")]
    NotHermitian(f64),
    #[error("matrix is not positive semidefinite (minimum eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("invalid trace {0}")]
    InvalidTrace(f64),
    #[error("state is not normalized (squared norm {0})")]
    NotNormalized(f64),
}

/// Dense complex matrix stored in row-major order.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from real entries given row by row.
    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Result<Self, LinalgError> {
        Self::new(rows, cols, entries.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn diagonal(entries: &[Complex64]) -> Self {
        let mut m = Self::zeros(entries.len(), entries.len());
        for (i, &z) in entries.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    pub fn pauli_x() -> Self {
        Self::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    pub fn pauli_y() -> Self {
        let i = Complex64::i();
        Self::new(2, 2, vec![ZERO, -i, i, ZERO]).unwrap()
    }

    pub fn pauli_z() -> Self {
        Self::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0]).unwrap()
    }

    pub fn hadamard() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_real(2, 2, &[h, h, h, -h]).unwrap()
    }

    /// Outer product |u⟩⟨v|.
    pub fn outer(u: &[Complex64], v: &[Complex64]) -> Self {
        let mut m = Self::zeros(u.len(), v.len());
        for (r, a) in u.iter().enumerate() {
            for (c, b) in v.iter().enumerate() {
                m[(r, c)] = a * b.conj();
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)].conj();
            }
        }
        out
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(Complex64::new(factor, 0.0))
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::DimensionMismatch {
                expected: self.cols,
                found: rhs.rows,
            });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == ZERO {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// A·B·A† for square operators of equal size.
    pub fn conjugate(&self, inner: &Self) -> Result<Self, LinalgError> {
        self.matmul(inner)?.matmul(&self.adjoint())
    }

    pub fn apply(&self, vector: &[Complex64]) -> Result<Vec<Complex64>, LinalgError> {
        if vector.len() != self.cols {
            return Err(LinalgError::DimensionMismatch {
                expected: self.cols,
                found: vector.len(),
            });
        }
        Ok((0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(vector)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect())
    }

    /// Largest elementwise modulus of `self - other`; infinite on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol
    }

    /// Equality up to a global phase: aligns the phase on the largest entry.
    pub fn approx_eq_up_to_phase(&self, other: &Self, tol: f64) -> bool {
        if self.rows != other.rows || self.cols != other.cols {
            return false;
        }
        let Some((idx, _)) = other
            .data
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        else {
            return true;
        };
        if self.data[idx].norm() < tol {
            return self.approx_eq(other, tol);
        }
        let phase = other.data[idx] / self.data[idx];
        let phase = phase / phase.norm();
        self.scale(phase).approx_eq(other, tol)
    }

    pub fn hermiticity_residual(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for r in 0..self.rows {
            for c in r..self.cols {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_residual() <= tol
    }

    /// Max-norm of U†U − I.
    pub fn unitarity_residual(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        self.adjoint()
            .matmul(self)
            .map(|p| p.max_abs_diff(&Self::identity(self.rows)))
            .unwrap_or(f64::INFINITY)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_residual() <= tol
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    /// Panics on shape mismatch.
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    /// Panics on shape mismatch.
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    /// Panics on shape mismatch; use [`ComplexMatrix::matmul`] for a checked product.
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("shape mismatch")
    }
}

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut out = ComplexMatrix::zeros(rows, cols);
    for ar in 0..a.rows {
        for ac in 0..a.cols {
            let x = a[(ar, ac)];
            if x == ZERO {
                continue;
            }
            for br in 0..b.rows {
                for bc in 0..b.cols {
                    out[(ar * b.rows + br, ac * b.cols + bc)] = x * b[(br, bc)];
                }
            }
        }
    }
    out
}

/// Kronecker product of a sequence of matrices, left to right.
pub fn tensor_all<'a>(factors: impl IntoIterator<Item = &'a ComplexMatrix>) -> ComplexMatrix {
    factors
        .into_iter()
        .fold(ComplexMatrix::identity(1), |acc, f| tensor(&acc, f))
}

pub(crate) fn qubit_count(dim: usize) -> Result<usize, LinalgError> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(LinalgError::NotPowerOfTwo(dim));
    }
    let m = dim.trailing_zeros() as usize;
    if m > MAX_QUBITS {
        return Err(LinalgError::RegisterTooLarge(m));
    }
    Ok(m)
}

/// Bit mask of qubit `q` in an `m`-qubit register (qubit 0 is the MSB).
#[inline]
pub(crate) fn qubit_mask(q: usize, m: usize) -> usize {
    1 << (m - 1 - q)
}

pub(crate) fn check_targets(targets: &[usize], m: usize) -> Result<(), LinalgError> {
    for (i, &t) in targets.iter().enumerate() {
        if t >= m {
            return Err(LinalgError::InvalidQubit { index: t, register: m });
        }
        if targets[..i].contains(&t) {
            return Err(LinalgError::DuplicateQubit(t));
        }
    }
    Ok(())
}

/// Gathers the bits of `index` at `targets` into a compact index, with
/// `targets[0]` becoming the most significant bit.
#[inline]
fn gather_bits(index: usize, targets: &[usize], m: usize) -> usize {
    targets
        .iter()
        .fold(0, |acc, &t| (acc << 1) | usize::from(index & qubit_mask(t, m) != 0))
}

/// Lifts `op` to an `m`-qubit operator acting on `targets` (in the given
/// order) and as the identity on every other qubit.
pub fn embed(op: &ComplexMatrix, targets: &[usize], m: usize) -> Result<ComplexMatrix, LinalgError> {
    if m > MAX_QUBITS {
        return Err(LinalgError::RegisterTooLarge(m));
    }
    check_targets(targets, m)?;
    let local = 1usize << targets.len();
    if !op.is_square() || op.rows != local {
        return Err(LinalgError::DimensionMismatch {
            expected: local,
            found: op.rows,
        });
    }
    let target_mask: usize = targets.iter().map(|&t| qubit_mask(t, m)).sum();
    let dim = 1usize << m;
    let mut out = ComplexMatrix::zeros(dim, dim);
    for r in 0..dim {
        let rs = gather_bits(r, targets, m);
        for c in 0..dim {
            if (r & !target_mask) != (c & !target_mask) {
                continue;
            }
            out[(r, c)] = op[(rs, gather_bits(c, targets, m))];
        }
    }
    Ok(out)
}

/// Eigenvalues of a real symmetric matrix (row-major, `n × n`) by cyclic
/// Jacobi rotations, in ascending order.
fn symmetric_eigenvalues(mut a: Vec<f64>, n: usize) -> Vec<f64> {
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() < 1e-15 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Real spectrum of a Hermitian matrix, ascending.
///
/// Works on the real symmetric embedding `[[Re, -Im], [Im, Re]]`, whose
/// spectrum is the Hermitian spectrum with every eigenvalue doubled.
pub fn hermitian_eigenvalues(h: &ComplexMatrix) -> Result<Vec<f64>, LinalgError> {
    let residual = h.hermiticity_residual();
    if residual > EQ_TOL {
        return Err(LinalgError::NotHermitian(residual));
    }
    let n = h.rows;
    let big = 2 * n;
    let mut a = vec![0.0; big * big];
    for r in 0..n {
        for c in 0..n {
            // symmetrise away roundoff-level anti-Hermitian parts
            let z = 0.5 * (h[(r, c)] + h[(c, r)].conj());
            a[r * big + c] = z.re;
            a[(r + n) * big + (c + n)] = z.re;
            a[r * big + (c + n)] = -z.im;
            a[(r + n) * big + c] = z.im;
        }
    }
    let doubled = symmetric_eigenvalues(a, big);
    Ok(doubled.chunks(2).map(|pair| 0.5 * (pair[0] + pair[1])).collect())
}

/// Largest eigenvalue of a Hermitian state; the best fidelity any
/// secret-dependent unitary could reach.
pub fn max_eigenvalue(rho: &DensityMatrix) -> Result<f64, LinalgError> {
    hermitian_eigenvalues(rho.matrix()).map(|e| *e.last().expect("non-empty spectrum"))
}

/// Three-angle single-qubit unitary
/// `[[cos θ/2, −e^{iλ} sin θ/2], [e^{iφ} sin θ/2, e^{i(φ+λ)} cos θ/2]]`.
pub fn su2(theta: f64, phi: f64, lam: f64) -> ComplexMatrix {
    let (s, c) = (0.5 * theta).sin_cos();
    let e = |a: f64| Complex64::from_polar(1.0, a);
    ComplexMatrix::new(
        2,
        2,
        vec![Complex64::new(c, 0.0), -e(lam) * s, e(phi) * s, e(phi + lam) * c],
    )
    .unwrap()
}

/// Normalized state vector of an `m`-qubit register.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl PureState {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self, LinalgError> {
        let num_qubits = qubit_count(amplitudes.len())?;
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > EQ_TOL {
            return Err(LinalgError::NotNormalized(norm));
        }
        Ok(Self { num_qubits, amplitudes })
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(num_qubits: usize, index: usize) -> Result<Self, LinalgError> {
        if num_qubits > MAX_QUBITS {
            return Err(LinalgError::RegisterTooLarge(num_qubits));
        }
        let dim = 1usize << num_qubits;
        if index >= dim {
            return Err(LinalgError::DimensionMismatch {
                expected: dim,
                found: index,
            });
        }
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[index] = ONE;
        Ok(Self { num_qubits, amplitudes })
    }

    /// Single-qubit |+⟩.
    pub fn plus() -> Self {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self {
            num_qubits: 1,
            amplitudes: vec![h, h],
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn tensor(&self, other: &Self) -> Result<Self, LinalgError> {
        let m = self.num_qubits + other.num_qubits;
        if m > MAX_QUBITS {
            return Err(LinalgError::RegisterTooLarge(m));
        }
        let mut amplitudes = Vec::with_capacity(self.amplitudes.len() * other.amplitudes.len());
        for a in &self.amplitudes {
            for b in &other.amplitudes {
                amplitudes.push(a * b);
            }
        }
        Ok(Self {
            num_qubits: m,
            amplitudes,
        })
    }

    /// Controlled-NOT (XOR) with `control` writing into `target`.
    pub fn cnot(&self, control: usize, target: usize) -> Result<Self, LinalgError> {
        let m = self.num_qubits;
        check_targets(&[control, target], m)?;
        let (cm, tm) = (qubit_mask(control, m), qubit_mask(target, m));
        let mut amplitudes = self.amplitudes.clone();
        for (i, a) in self.amplitudes.iter().enumerate() {
            let j = if i & cm != 0 { i ^ tm } else { i };
            amplitudes[j] = *a;
        }
        Ok(Self {
            num_qubits: m,
            amplitudes,
        })
    }

    pub fn apply(&self, op: &ComplexMatrix, targets: &[usize]) -> Result<Self, LinalgError> {
        let full = embed(op, targets, self.num_qubits)?;
        Ok(Self {
            num_qubits: self.num_qubits,
            amplitudes: full.apply(&self.amplitudes)?,
        })
    }

    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix::from_parts(
            self.num_qubits,
            ComplexMatrix::outer(&self.amplitudes, &self.amplitudes),
        )
    }
}

/// Hermitian positive semidefinite operator on an `m`-qubit register.
///
/// After selective (post-selected) operations the trace can drop below one;
/// the trace then carries the probability of the selected branch.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    num_qubits: usize,
    matrix: ComplexMatrix,
    trace: f64,
}

impl DensityMatrix {
    /// Validating constructor: Hermitian, PSD and `0 < trace ≤ 1` within tolerance.
    pub fn new(matrix: ComplexMatrix) -> Result<Self, LinalgError> {
        if !matrix.is_square() {
            return Err(LinalgError::DimensionMismatch {
                expected: matrix.rows(),
                found: matrix.cols(),
            });
        }
        let num_qubits = qubit_count(matrix.rows())?;
        let rho = Self::from_parts(num_qubits, matrix);
        rho.validate(EQ_TOL)?;
        if rho.trace <= 0.0 {
            return Err(LinalgError::InvalidTrace(rho.trace));
        }
        Ok(rho)
    }

    pub(crate) fn from_parts(num_qubits: usize, matrix: ComplexMatrix) -> Self {
        let trace = matrix.trace().re;
        Self {
            num_qubits,
            matrix,
            trace,
        }
    }

    /// Maximally mixed state of `m` qubits.
    pub fn maximally_mixed(num_qubits: usize) -> Self {
        let dim = 1usize << num_qubits;
        Self::from_parts(num_qubits, ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64))
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.matrix[(r, c)]
    }

    /// Checks Hermiticity, positivity and `trace ≤ 1 + tol`.
    pub fn validate(&self, tol: f64) -> Result<(), LinalgError> {
        let h = self.matrix.hermiticity_residual();
        if h > tol {
            return Err(LinalgError::NotHermitian(h));
        }
        if !(self.trace > -tol && self.trace <= 1.0 + tol) {
            return Err(LinalgError::InvalidTrace(self.trace));
        }
        let min = self.min_eigenvalue()?;
        if min < -tol {
            return Err(LinalgError::NotPositive(min));
        }
        Ok(())
    }

    pub fn min_eigenvalue(&self) -> Result<f64, LinalgError> {
        hermitian_eigenvalues(&self.matrix).map(|e| e[0])
    }

    /// Rescales to unit trace; fails on a (numerically) zero trace.
    pub fn normalized(&self) -> Result<Self, LinalgError> {
        if self.trace <= 0.0 || !self.trace.is_finite() {
            return Err(LinalgError::InvalidTrace(self.trace));
        }
        Ok(Self {
            num_qubits: self.num_qubits,
            matrix: self.matrix.scale_real(1.0 / self.trace),
            trace: 1.0,
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_parts(self.num_qubits, self.matrix.scale_real(factor))
    }

    /// Sum of two operators on the same register (mixing unnormalized branches).
    pub fn sum(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.dim() != other.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(Self::from_parts(self.num_qubits, &self.matrix + &other.matrix))
    }

    pub fn tensor(&self, other: &Self) -> Result<Self, LinalgError> {
        let m = self.num_qubits + other.num_qubits;
        if m > MAX_QUBITS {
            return Err(LinalgError::RegisterTooLarge(m));
        }
        Ok(Self::from_parts(m, tensor(&self.matrix, &other.matrix)))
    }

    /// `E ρ E†` with `E` a full-register operator.
    pub fn conjugate(&self, op: &ComplexMatrix) -> Result<Self, LinalgError> {
        if op.rows() != self.dim() || !op.is_square() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim(),
                found: op.rows(),
            });
        }
        Ok(Self::from_parts(self.num_qubits, op.conjugate(&self.matrix)?))
    }

    /// `E ρ E†` where `E` acts as the 2×2 `op` on `qubit` and as the identity
    /// elsewhere, computed by index arithmetic without forming `E`.
    pub fn conjugate_local(&self, op: &ComplexMatrix, qubit: usize) -> Result<Self, LinalgError> {
        let m = self.num_qubits;
        check_targets(&[qubit], m)?;
        if op.rows() != 2 || op.cols() != 2 {
            return Err(LinalgError::DimensionMismatch {
                expected: 2,
                found: op.rows(),
            });
        }
        let dim = self.dim();
        let bit = qubit_mask(qubit, m);
        let (e00, e01, e10, e11) = (op[(0, 0)], op[(0, 1)], op[(1, 0)], op[(1, 1)]);
        let src = &self.matrix;
        let mut left = ComplexMatrix::zeros(dim, dim);
        for r0 in (0..dim).filter(|r| r & bit == 0) {
            let r1 = r0 | bit;
            for c in 0..dim {
                let (a, b) = (src[(r0, c)], src[(r1, c)]);
                left[(r0, c)] = e00 * a + e01 * b;
                left[(r1, c)] = e10 * a + e11 * b;
            }
        }
        let (f00, f01, f10, f11) = (e00.conj(), e01.conj(), e10.conj(), e11.conj());
        let mut out = ComplexMatrix::zeros(dim, dim);
        for r in 0..dim {
            for c0 in (0..dim).filter(|c| c & bit == 0) {
                let c1 = c0 | bit;
                let (a, b) = (left[(r, c0)], left[(r, c1)]);
                out[(r, c0)] = a * f00 + b * f01;
                out[(r, c1)] = a * f10 + b * f11;
            }
        }
        Ok(Self::from_parts(m, out))
    }

    /// Controlled-NOT as a basis permutation on rows and columns.
    pub fn cnot(&self, control: usize, target: usize) -> Result<Self, LinalgError> {
        let m = self.num_qubits;
        check_targets(&[control, target], m)?;
        let (cm, tm) = (qubit_mask(control, m), qubit_mask(target, m));
        let map = |i: usize| if i & cm != 0 { i ^ tm } else { i };
        let dim = self.dim();
        let mut out = ComplexMatrix::zeros(dim, dim);
        for r in 0..dim {
            for c in 0..dim {
                out[(map(r), map(c))] = self.matrix[(r, c)];
            }
        }
        Ok(Self::from_parts(m, out))
    }

    /// Expectation `⟨ψ|ρ|ψ⟩` for a state on the same register.
    pub fn expectation(&self, psi: &PureState) -> Result<f64, LinalgError> {
        if psi.amplitudes().len() != self.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim(),
                found: psi.amplitudes().len(),
            });
        }
        let rho_psi = self.matrix.apply(psi.amplitudes())?;
        Ok(psi
            .amplitudes()
            .iter()
            .zip(&rho_psi)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            .re)
    }
}

/// Reduced state on `keep`; output qubit `j` is input qubit `keep[j]`.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix, LinalgError> {
    let m = rho.num_qubits();
    check_targets(keep, m)?;
    let kept_mask: usize = keep.iter().map(|&q| qubit_mask(q, m)).sum();
    let traced_mask = ((1usize << m) - 1) & !kept_mask;
    let out_dim = 1usize << keep.len();
    let mut out = ComplexMatrix::zeros(out_dim, out_dim);
    let dim = rho.dim();
    for r in 0..dim {
        let rr = gather_bits(r, keep, m);
        for c in 0..dim {
            if (r & traced_mask) != (c & traced_mask) {
                continue;
            }
            out[(rr, gather_bits(c, keep, m))] += rho.matrix()[(r, c)];
        }
    }
    Ok(DensityMatrix::from_parts(keep.len(), out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tolerance::RESIDUAL_TOL;
    use std::f64::consts::PI;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn tensor_of_identities_is_identity() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(tensor(&i2, &i2), ComplexMatrix::identity(4));
    }

    #[test]
    fn double_bit_flip() {
        let xx = tensor(&ComplexMatrix::pauli_x(), &ComplexMatrix::pauli_x());
        let out = xx.apply(PureState::basis(2, 0b00).unwrap().amplitudes()).unwrap();
        assert_eq!(out, PureState::basis(2, 0b11).unwrap().amplitudes());
    }

    #[test]
    fn embed_single_qubit_register_is_identity_map() {
        let x = ComplexMatrix::pauli_x();
        assert_eq!(embed(&x, &[0], 1).unwrap(), x);
    }

    #[test]
    fn embed_uses_msb_first_convention() {
        let op = embed(&ComplexMatrix::pauli_x(), &[1], 2).unwrap();
        let out = op.apply(PureState::basis(2, 0b00).unwrap().amplitudes()).unwrap();
        assert_eq!(out, PureState::basis(2, 0b01).unwrap().amplitudes());
    }

    #[test]
    fn embed_rejects_bad_targets() {
        let x = ComplexMatrix::pauli_x();
        assert!(matches!(
            embed(&x, &[3], 2),
            Err(LinalgError::InvalidQubit { index: 3, register: 2 })
        ));
        let cx = ComplexMatrix::identity(4);
        assert!(matches!(embed(&cx, &[1, 1], 3), Err(LinalgError::DuplicateQubit(1))));
        assert!(matches!(
            embed(&cx, &[0], 3),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn embed_two_targets_respects_order() {
        // swap-like check: op = |01⟩⟨10| on targets [2, 0] of three qubits
        let mut op = ComplexMatrix::zeros(4, 4);
        op[(0b01, 0b10)] = c(1.0);
        let full = embed(&op, &[2, 0], 3).unwrap();
        // input: qubit2 = 1, qubit0 = 0 -> local index 0b10 -> output local 0b01:
        // qubit2 = 0, qubit0 = 1
        let out = full.apply(PureState::basis(3, 0b001).unwrap().amplitudes()).unwrap();
        assert_eq!(out, PureState::basis(3, 0b100).unwrap().amplitudes());
    }

    #[test]
    fn partial_trace_of_product_state() {
        let rho = PureState::basis(2, 0).unwrap().density();
        let reduced = partial_trace(&rho, &[0]).unwrap();
        let expect = ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(reduced.matrix().approx_eq(&expect, EQ_TOL));
    }

    #[test]
    fn partial_trace_keeping_everything_is_identity_map() {
        let psi = PureState::new(vec![c(0.6), c(0.0), Complex64::new(0.0, 0.8), c(0.0)]).unwrap();
        let rho = psi.density();
        assert!(partial_trace(&rho, &[0, 1])
            .unwrap()
            .matrix()
            .approx_eq(rho.matrix(), 0.0));
    }

    #[test]
    fn partial_trace_rejects_invalid_sets() {
        let rho = DensityMatrix::maximally_mixed(2);
        assert!(partial_trace(&rho, &[2]).is_err());
        assert!(partial_trace(&rho, &[0, 0]).is_err());
    }

    #[test]
    fn max_eigenvalue_simple_cases() {
        let mixed = DensityMatrix::maximally_mixed(1);
        assert!((max_eigenvalue(&mixed).unwrap() - 0.5).abs() < 1e-12);
        let zero = PureState::basis(1, 0).unwrap().density();
        assert!((max_eigenvalue(&zero).unwrap() - 1.0).abs() < 1e-12);
        let d = DensityMatrix::new(ComplexMatrix::from_real(2, 2, &[0.8, 0.0, 0.0, 0.2]).unwrap()).unwrap();
        assert!((max_eigenvalue(&d).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_of_complex_hermitian() {
        // σ_y has spectrum {−1, 1}
        let e = hermitian_eigenvalues(&ComplexMatrix::pauli_y()).unwrap();
        assert!((e[0] + 1.0).abs() < 1e-12 && (e[1] - 1.0).abs() < 1e-12);
        let not_h = ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            hermitian_eigenvalues(&not_h),
            Err(LinalgError::NotHermitian(_))
        ));
    }

    #[test]
    fn su2_special_points() {
        assert!(su2(0.0, 0.0, 0.0).approx_eq(&ComplexMatrix::identity(2), 1e-15));
        assert!(su2(PI, 0.0, PI).approx_eq_up_to_phase(&ComplexMatrix::pauli_x(), 1e-12));
        for &(t, p, l) in &[(0.3, 1.1, -2.0), (2.9, 4.0, 0.7)] {
            assert!(su2(t, p, l).is_unitary(RESIDUAL_TOL));
        }
    }

    #[test]
    fn su2_global_phase_does_not_change_fidelity() {
        let psi = PureState::new(vec![c(0.6), Complex64::new(0.0, 0.8)]).unwrap();
        let rho = DensityMatrix::new(ComplexMatrix::from_real(2, 2, &[0.7, 0.2, 0.2, 0.3]).unwrap()).unwrap();
        let u = su2(1.0, 0.4, 2.2);
        let phased = u.scale(Complex64::from_polar(1.0, 1.3));
        let f1 = rho.conjugate(&u).unwrap().expectation(&psi).unwrap();
        let f2 = rho.conjugate(&phased).unwrap().expectation(&psi).unwrap();
        assert!((f1 - f2).abs() < 1e-14);
    }

    #[test]
    fn density_matrix_constructor_rejects_invalid() {
        let neg = ComplexMatrix::from_real(2, 2, &[1.2, 0.0, 0.0, -0.2]).unwrap();
        assert!(matches!(DensityMatrix::new(neg), Err(LinalgError::NotPositive(_))));
        let non_h = ComplexMatrix::from_real(2, 2, &[0.5, 0.1, 0.0, 0.5]).unwrap();
        assert!(matches!(DensityMatrix::new(non_h), Err(LinalgError::NotHermitian(_))));
        let big = ComplexMatrix::identity(2);
        assert!(matches!(DensityMatrix::new(big), Err(LinalgError::InvalidTrace(_))));
        assert!(PureState::new(vec![c(1.0), c(1.0)]).is_err());
    }

    #[test]
    fn local_conjugation_matches_embedded_operator() {
        let amps = {
            let raw = [
                c(0.5),
                Complex64::new(0.1, 0.3),
                c(-0.2),
                Complex64::new(0.0, 0.4),
                c(0.3),
                c(0.1),
                Complex64::new(-0.2, 0.2),
                c(0.0),
            ];
            let n: f64 = raw.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            raw.iter().map(|a| a / n).collect::<Vec<_>>()
        };
        let rho = PureState::new(amps).unwrap().density();
        let op = su2(0.7, 0.2, 1.9).scale_real(0.8);
        for q in 0..3 {
            let fast = rho.conjugate_local(&op, q).unwrap();
            let slow = rho.conjugate(&embed(&op, &[q], 3).unwrap()).unwrap();
            assert!(fast.matrix().approx_eq(slow.matrix(), 1e-14));
        }
    }
}
