//! Derivative-free maximisation: a scalar grid-plus-golden-section search and
//! a search over single-qubit correction unitaries.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{max_eigenvalue, su2, ComplexMatrix, DensityMatrix, PureState};
use crate::par::Execution;
use crate::protocol::{run_iteration, BranchKey, Correction, ProtocolConfig, ProtocolError, Secret};
use crate::quadrature::GaussLegendre;
use crate::tolerance::EQ_TOL;

/// Points in the coarse scalar grid.
pub const SCALAR_GRID: usize = 64;
/// Points per angle in the coarse unitary grid.
pub const ANGLE_GRID: usize = 16;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError<E> {
    #[error("search interval [{lower}, {upper}] is empty or not finite")]
    DegenerateDomain { lower: f64, upper: f64 },
    #[error("tolerance {0} must be positive")]
    InvalidTolerance(f64),
    #[error("objective is not finite at {0}")]
    NonFinite(f64),
    #[error("objective failed: {0}")]
    Objective(E),
}

/// Maximise `function` over `[lower, upper]`.
#[derive(Debug, Clone)]
pub struct ScalarObjective<F> {
    pub function: F,
    pub lower: f64,
    pub upper: f64,
    /// Width at which golden-section refinement stops.
    pub tolerance: f64,
}

impl<F> ScalarObjective<F> {
    pub fn new(function: F, lower: f64, upper: f64) -> Self {
        Self {
            function,
            lower,
            upper,
            tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMaximum {
    pub argmax: f64,
    pub max: f64,
}

pub fn maximize_scalar<F, E>(obj: &ScalarObjective<F>) -> Result<ScalarMaximum, OptimizerError<E>>
where
    F: Fn(f64) -> Result<f64, E>,
{
    let (lo, hi) = (obj.lower, obj.upper);
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(OptimizerError::DegenerateDomain { lower: lo, upper: hi });
    }
    if obj.tolerance.is_nan() || obj.tolerance <= 0.0 {
        return Err(OptimizerError::InvalidTolerance(obj.tolerance));
    }
    let eval = |x: f64| -> Result<f64, OptimizerError<E>> {
        let v = (obj.function)(x).map_err(OptimizerError::Objective)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(OptimizerError::NonFinite(x))
        }
    };
    let step = (hi - lo) / (SCALAR_GRID - 1) as f64;
    let grid_x = |i: usize| if i == SCALAR_GRID - 1 { hi } else { lo + step * i as f64 };
    let mut best = ScalarMaximum {
        argmax: lo,
        max: f64::NEG_INFINITY,
    };
    let mut best_i = 0;
    for i in 0..SCALAR_GRID {
        let x = grid_x(i);
        let v = eval(x)?;
        if v > best.max {
            best = ScalarMaximum { argmax: x, max: v };
            best_i = i;
        }
    }
    let a = grid_x(best_i.saturating_sub(1));
    let b = grid_x((best_i + 1).min(SCALAR_GRID - 1));
    let refined = golden_section(a, b, obj.tolerance, &eval)?;
    Ok(if refined.max > best.max { refined } else { best })
}

fn golden_section<E>(
    mut a: f64,
    mut b: f64,
    tol: f64,
    eval: &impl Fn(f64) -> Result<f64, OptimizerError<E>>,
) -> Result<ScalarMaximum, OptimizerError<E>> {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d)?;
        }
    }
    Ok(if fc >= fd {
        ScalarMaximum { argmax: c, max: fc }
    } else {
        ScalarMaximum { argmax: d, max: fd }
    })
}

/// One conditional Bob state and the secret it should reproduce.
#[derive(Debug, Clone)]
pub struct CorrectionSample {
    pub weight: f64,
    pub target: PureState,
    pub state: DensityMatrix,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UnitaryObjectiveError {
    #[error("sample weights sum to {0}, above 1")]
    WeightsExceedOne(f64),
    #[error("sample {0} has a negative or non-finite weight")]
    BadWeight(usize),
    #[error("sample {0} is not a normalised single-qubit state")]
    BadState(usize),
}

/// Weighted average of `⟨ψ|UρU†|ψ⟩` over samples, as a function of `U`.
#[derive(Debug, Clone)]
pub struct UnitaryObjective {
    samples: Vec<CorrectionSample>,
    /// `T[a][b][c][d] = Σ w ψ̄_a ρ_bc ψ_d`, so that the objective is
    /// `Re Σ T[a][b][c][d] U_ab Ū_dc` whatever the sample count.
    kernel: [[[[Complex64; 2]; 2]; 2]; 2],
}

impl UnitaryObjective {
    pub fn new(samples: Vec<CorrectionSample>) -> Result<Self, UnitaryObjectiveError> {
        let mut total = 0.0;
        for (i, s) in samples.iter().enumerate() {
            if !(s.weight >= 0.0 && s.weight.is_finite()) {
                return Err(UnitaryObjectiveError::BadWeight(i));
            }
            if s.state.num_qubits() != 1 || s.target.num_qubits() != 1 || (s.state.trace() - 1.0).abs() > EQ_TOL {
                return Err(UnitaryObjectiveError::BadState(i));
            }
            total += s.weight;
        }
        if total > 1.0 + EQ_TOL {
            return Err(UnitaryObjectiveError::WeightsExceedOne(total));
        }
        let mut kernel = [[[[Complex64::new(0.0, 0.0); 2]; 2]; 2]; 2];
        for s in &samples {
            let psi = s.target.amplitudes();
            for (a, plane) in kernel.iter_mut().enumerate() {
                for (b, row) in plane.iter_mut().enumerate() {
                    for (c, cell) in row.iter_mut().enumerate() {
                        for (d, t) in cell.iter_mut().enumerate() {
                            *t += psi[a].conj() * s.state.get(b, c) * psi[d] * s.weight;
                        }
                    }
                }
            }
        }
        Ok(Self { samples, kernel })
    }

    pub fn samples(&self) -> &[CorrectionSample] {
        &self.samples
    }

    pub fn total_weight(&self) -> f64 {
        self.samples.iter().map(|s| s.weight).sum()
    }

    pub fn average_fidelity(&self, u: &ComplexMatrix) -> f64 {
        let mut v = Complex64::new(0.0, 0.0);
        for (a, plane) in self.kernel.iter().enumerate() {
            for (b, row) in plane.iter().enumerate() {
                for (c, cell) in row.iter().enumerate() {
                    for (d, t) in cell.iter().enumerate() {
                        v += t * u[(a, b)] * u[(d, c)].conj();
                    }
                }
            }
        }
        v.re
    }

    /// Per-secret optimum `Σ w λ_max(ρ)`. Only reachable with a
    /// secret-dependent correction, so it is an upper bound, not a target.
    pub fn spectral_bound(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.weight * max_eigenvalue(&s.state).unwrap_or(f64::NAN))
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct CorrectionOptimum {
    /// `(θ, φ, λ)` for [`su2`].
    pub angles: [f64; 3],
    pub unitary: ComplexMatrix,
    pub average_fidelity: f64,
}

/// Best secret-independent correction over the SU(2) grid with local refinement.
pub fn optimize_correction(obj: &UnitaryObjective, exec: Execution) -> CorrectionOptimum {
    optimize_correction_from(obj, 0.0, exec)
}

/// As [`optimize_correction`], with every grid angle shifted by `offset`
/// grid steps (`0 ≤ offset < 1`).
pub fn optimize_correction_from(obj: &UnitaryObjective, offset: f64, exec: Execution) -> CorrectionOptimum {
    let n = ANGLE_GRID;
    let steps = [PI / (n - 1) as f64, 2.0 * PI / n as f64, 2.0 * PI / n as f64];
    let points: Vec<[f64; 3]> = (0..n * n * n)
        .map(|idx| {
            let (i, j, l) = (idx / (n * n), (idx / n) % n, idx % n);
            [
                steps[0] * (i as f64 + offset),
                steps[1] * (j as f64 + offset),
                steps[2] * (l as f64 + offset),
            ]
        })
        .collect();
    let values = exec.map(&points, |a| obj.average_fidelity(&su2(a[0], a[1], a[2])));
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut angles = points[best_i];
    let mut width = steps;
    for _ in 0..60 {
        let before = best;
        for c in 0..3 {
            let eval = |x: f64| -> Result<f64, OptimizerError<std::convert::Infallible>> {
                let mut a = angles;
                a[c] = x;
                Ok(obj.average_fidelity(&su2(a[0], a[1], a[2])))
            };
            if let Ok(m) = golden_section(angles[c] - width[c], angles[c] + width[c], 1e-12, &eval) {
                if m.max > best {
                    best = m.max;
                    angles[c] = m.argmax;
                }
            }
        }
        for w in &mut width {
            *w *= 0.5;
        }
        if best - before < 1e-15 && width[0] < 1e-9 {
            break;
        }
    }
    CorrectionOptimum {
        angles,
        unitary: su2(angles[0], angles[1], angles[2]),
        average_fidelity: best,
    }
}

/// Secret ensemble that correction searches average over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecretFamily {
    /// Real non-negative amplitudes, `k` uniform.
    RealArc,
    /// `k` uniform and the relative phase uniform over `phases` equally
    /// spaced values; uniform on the Bloch sphere in the limit.
    Haar { phases: usize },
}

impl SecretFamily {
    /// Weighted secrets using a `k_nodes`-point Gauss-Legendre rule in `k`.
    pub fn samples(&self, k_nodes: usize) -> Vec<(Secret, f64)> {
        let nodes = GaussLegendre::new(k_nodes).nodes_on(0.0, 1.0);
        let phases = match *self {
            SecretFamily::RealArc => 1,
            SecretFamily::Haar { phases } => phases.max(1),
        };
        let mut out = Vec::with_capacity(nodes.len() * phases);
        for (k, w) in nodes {
            for j in 0..phases {
                let phase = 2.0 * PI * j as f64 / phases as f64;
                let secret = Secret::with_phase(k, phase).expect("quadrature nodes lie in [0, 1]");
                out.push((secret, w / phases as f64));
            }
        }
        out
    }
}

/// Correction search problem for one measurement branch.
#[derive(Debug, Clone)]
pub struct BranchObjective {
    pub key: BranchKey,
    /// The correction the protocol applies on this branch.
    pub table: Correction,
    pub objective: UnitaryObjective,
}

impl BranchObjective {
    pub fn table_fidelity(&self) -> f64 {
        self.objective.average_fidelity(&self.table.matrix())
    }
}

/// Simulates every sample secret under `cfg` and groups Bob's uncorrected
/// states by branch.
pub fn correction_objectives(
    cfg: &ProtocolConfig,
    family: SecretFamily,
    k_nodes: usize,
    exec: Execution,
) -> Result<Vec<BranchObjective>, ProtocolError> {
    let samples = family.samples(k_nodes);
    let runs = exec.try_map(&samples, |(secret, _)| run_iteration(cfg, secret))?;
    let mut grouped: BTreeMap<BranchKey, (Correction, Vec<CorrectionSample>)> = BTreeMap::new();
    for ((secret, weight), run) in samples.iter().zip(runs) {
        for r in run.reports {
            let entry = grouped.entry(r.key()).or_insert((r.correction_applied, Vec::new()));
            entry.1.push(CorrectionSample {
                weight: *weight,
                target: secret.state(),
                state: r.uncorrected_state,
            });
        }
    }
    grouped
        .into_iter()
        .map(|(key, (table, samples))| {
            let objective = UnitaryObjective::new(samples).expect("quadrature weights sum to one");
            Ok(BranchObjective { key, table, objective })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{avg_f_pd, f0_ww, r_opt};
    use crate::channels::ChannelKind;
    use crate::protocol::Sign;
    use std::convert::Infallible;

    #[test]
    fn parabola_argmax() {
        let obj = ScalarObjective::new(|r: f64| Ok::<_, Infallible>(-(r - 0.3).powi(2)), 0.0, 1.0);
        let m = maximize_scalar(&obj).unwrap();
        assert!((m.argmax - 0.3).abs() < 1e-8);
    }

    #[test]
    fn boundary_maximum_is_found() {
        let obj = ScalarObjective::new(|r: f64| crate::analysis::f1_ww(0.4, r, 0.7), 0.0, 1.0);
        let m = maximize_scalar(&obj).unwrap();
        assert_eq!(m.argmax, 1.0);
        assert!((m.max - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reverse_strength_matches_closed_form() {
        let (k, s, p) = (0.5, 0.5, 0.5);
        let obj = ScalarObjective::new(|r| f0_ww(k, s, r, p), 0.0, 1.0);
        let m = maximize_scalar(&obj).unwrap();
        assert!((m.argmax - r_opt(k, s, p).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn bad_domains_and_failures() {
        let obj = ScalarObjective::new(|x: f64| Ok::<_, Infallible>(x), 1.0, 1.0);
        assert!(matches!(
            maximize_scalar(&obj),
            Err(OptimizerError::DegenerateDomain { .. })
        ));
        let mut obj = ScalarObjective::new(|x: f64| Ok::<_, Infallible>(x), 0.0, 1.0);
        obj.tolerance = 0.0;
        assert!(matches!(
            maximize_scalar(&obj),
            Err(OptimizerError::InvalidTolerance(_))
        ));
        let obj = ScalarObjective::new(|x: f64| if x > 0.5 { Err("boom") } else { Ok(x) }, 0.0, 1.0);
        assert_eq!(maximize_scalar(&obj), Err(OptimizerError::Objective("boom")));
    }

    fn objective_for(cfg: &ProtocolConfig, alice: u8, sign: Sign) -> BranchObjective {
        correction_objectives(cfg, SecretFamily::RealArc, 16, Execution::Sequential)
            .unwrap()
            .into_iter()
            .find(|b| b.key.alice == alice && b.key.collaborators == [sign])
            .unwrap()
    }

    #[test]
    fn noiseless_branches_recover_table() {
        let cfg = ProtocolConfig::new(2);
        for (alice, sign, expected) in [
            (0, Sign::Plus, Correction::Identity),
            (1, Sign::Minus, Correction::MinusIY),
        ] {
            let b = objective_for(&cfg, alice, sign);
            let best = optimize_correction(&b.objective, Execution::Parallel);
            assert!((best.average_fidelity - 1.0).abs() < 1e-9);
            assert!(best.unitary.approx_eq_up_to_phase(&expected.matrix(), 1e-6));
            assert!(best.unitary.is_unitary(1e-10));
        }
    }

    #[test]
    fn phase_damping_table_is_not_beaten() {
        let cfg = ProtocolConfig::new(2).with_noise(ChannelKind::PhaseDamping, 0.5);
        let b = objective_for(&cfg, 0, Sign::Plus);
        let best = optimize_correction(&b.objective, Execution::Parallel);
        assert!((best.average_fidelity - avg_f_pd(0.5).unwrap()).abs() < 1e-6);
        assert!(b.objective.spectral_bound() >= best.average_fidelity - 1e-12);
    }

    #[test]
    fn kernel_matches_per_sample_sum() {
        let cfg = ProtocolConfig::new(2).with_noise(ChannelKind::AmplitudeDamping, 0.6);
        let b = objective_for(&cfg, 1, Sign::Minus);
        for (i, angles) in [[0.3, 1.1, -2.0], [2.5, 0.0, 0.7], [1.0, 4.0, 5.5]].iter().enumerate() {
            let u = su2(angles[0], angles[1], angles[2]);
            let direct: f64 = b
                .objective
                .samples()
                .iter()
                .map(|s| {
                    let rotated = s.state.conjugate(&u).unwrap();
                    s.weight * rotated.expectation(&s.target).unwrap()
                })
                .sum();
            assert!((b.objective.average_fidelity(&u) - direct).abs() < 1e-13, "case {i}");
        }
    }

    #[test]
    fn objective_validation() {
        let psi = Secret::from_k(0.5).unwrap().state();
        let heavy = CorrectionSample {
            weight: 0.8,
            target: psi.clone(),
            state: psi.density(),
        };
        assert!(matches!(
            UnitaryObjective::new(vec![heavy.clone(), heavy]),
            Err(UnitaryObjectiveError::WeightsExceedOne(_))
        ));
        let two = CorrectionSample {
            weight: 0.1,
            target: psi.clone(),
            state: psi.density().tensor(&psi.density()).unwrap(),
        };
        assert_eq!(
            UnitaryObjective::new(vec![two]).unwrap_err(),
            UnitaryObjectiveError::BadState(0)
        );
    }

    #[test]
    fn family_weights_sum_to_one() {
        for fam in [SecretFamily::RealArc, SecretFamily::Haar { phases: 8 }] {
            let total: f64 = fam.samples(16).iter().map(|(_, w)| w).sum();
            assert!((total - 1.0).abs() < 1e-13);
        }
    }
}
