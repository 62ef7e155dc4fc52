//! Sequential (n,n) secret sharing as a density-matrix state machine.
//!
//! Register layout for `n` receivers (`n + 1` qubits): index 0 carries the
//! secret and goes to the first collaborator, index 1 stays with the dealer,
//! indices `2..n` go to further collaborators and index `n` goes to Bob, who
//! reconstructs. Every qubit except the dealer's is transmitted and therefore
//! exposed to noise.
//!
//! Measurement outcomes are expanded exactly: each branch carries its own
//! probability and no sampling takes place.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

use crate::analysis::{self, AnalysisError};
use crate::channels::{apply_channel, weak_op, ChannelError, ChannelKind, KrausChannel, WeakKind};
use crate::linalg::{partial_trace, ComplexMatrix, DensityMatrix, LinalgError, PureState, MAX_QUBITS};
use crate::tolerance::{EQ_TOL, ZERO_PROBABILITY};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("at least two receivers are required, got {0}")]
    TooFewParties(usize),
    #[error("{0} receivers need more than {MAX_QUBITS} qubits")]
    TooManyParties(usize),
    #[error("resource is not a GHZ state")]
    MalformedResource,
    #[error("secret amplitudes have squared norm {0}")]
    InvalidSecret(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("state belongs to a {found}-receiver session, configuration has {expected}")]
    PartyMismatch { expected: usize, found: usize },
    #[error("no measurement branch has nonzero probability")]
    NoSuccessfulBranch,
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

type Result<T> = std::result::Result<T, ProtocolError>;

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Single-qubit secret `α|0⟩ + β|1⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Secret {
    alpha: Complex64,
    beta: Complex64,
}

impl Secret {
    /// Accepts amplitudes normalised within tolerance and renormalises them
    /// exactly.
    pub fn new(alpha: Complex64, beta: Complex64) -> Result<Self> {
        let norm = alpha.norm_sqr() + beta.norm_sqr();
        if !norm.is_finite() || (norm - 1.0).abs() > EQ_TOL {
            return Err(ProtocolError::InvalidSecret(norm));
        }
        let scale = norm.sqrt();
        Ok(Self {
            alpha: alpha / scale,
            beta: beta / scale,
        })
    }

    /// Real non-negative amplitudes `(√k, √(1-k))`.
    pub fn from_k(k: f64) -> Result<Self> {
        Self::with_phase(k, 0.0)
    }

    /// `√k |0⟩ + e^{iφ} √(1-k) |1⟩`.
    pub fn with_phase(k: f64, phase: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&k) {
            return Err(ProtocolError::InvalidConfig(format!(
                "secret weight k = {k} outside [0, 1]"
            )));
        }
        Ok(Self {
            alpha: real(k.sqrt()),
            beta: Complex64::from_polar((1.0 - k).sqrt(), phase),
        })
    }

    pub fn alpha(&self) -> Complex64 {
        self.alpha
    }

    pub fn beta(&self) -> Complex64 {
        self.beta
    }

    pub fn k(&self) -> f64 {
        self.alpha.norm_sqr()
    }

    pub fn state(&self) -> PureState {
        PureState::new(vec![self.alpha, self.beta]).expect("secret amplitudes are normalised on construction")
    }
}

/// Outcome of a collaborator's `{|+⟩, |−⟩}` measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

/// Bob's correction unitaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Correction {
    Identity,
    PauliZ,
    PauliX,
    /// `−iσ_y = [[0, −1], [1, 0]]`.
    MinusIY,
}

impl Correction {
    pub fn label(self) -> &'static str {
        match self {
            Correction::Identity => "I",
            Correction::PauliZ => "Z",
            Correction::PauliX => "X",
            Correction::MinusIY => "-iY",
        }
    }

    pub fn matrix(self) -> ComplexMatrix {
        match self {
            Correction::Identity => ComplexMatrix::identity(2),
            Correction::PauliZ => ComplexMatrix::pauli_z(),
            Correction::PauliX => ComplexMatrix::pauli_x(),
            Correction::MinusIY => ComplexMatrix::pauli_y().scale(Complex64::new(0.0, -1.0)),
        }
    }
}

impl fmt::Display for Correction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Correction keyed by the dealer's outcome and the parity of `−` outcomes
/// among the collaborators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrectionTable {
    entries: [[Correction; 2]; 2],
}

impl CorrectionTable {
    pub fn standard() -> Self {
        Self {
            entries: [
                [Correction::Identity, Correction::PauliZ],
                [Correction::PauliX, Correction::MinusIY],
            ],
        }
    }

    /// `odd_minus` is true when an odd number of collaborators saw `−`.
    pub fn get(&self, alice: u8, odd_minus: bool) -> Correction {
        self.entries[usize::from(alice & 1)][usize::from(odd_minus)]
    }
}

impl Default for CorrectionTable {
    fn default() -> Self {
        Self::standard()
    }
}

pub fn correction(alice: u8, collaborators: &[Sign]) -> Correction {
    let minus = collaborators.iter().filter(|&&s| s == Sign::Minus).count();
    CorrectionTable::standard().get(alice, minus % 2 == 1)
}

/// Qubit roles for a session with `parties` receivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    parties: usize,
}

impl Layout {
    pub const SECRET: usize = 0;
    pub const DEALER: usize = 1;

    pub fn new(parties: usize) -> Result<Self> {
        if parties < 2 {
            return Err(ProtocolError::TooFewParties(parties));
        }
        if parties + 1 > MAX_QUBITS {
            return Err(ProtocolError::TooManyParties(parties));
        }
        Ok(Self { parties })
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    pub fn qubits(&self) -> usize {
        self.parties + 1
    }

    pub fn bob(&self) -> usize {
        self.parties
    }

    /// Receivers other than Bob, in register order.
    pub fn collaborators(&self) -> Vec<usize> {
        std::iter::once(Self::SECRET).chain(2..self.parties).collect()
    }

    /// Every qubit that leaves the dealer.
    pub fn transmitted(&self) -> Vec<usize> {
        (0..self.qubits()).filter(|&q| q != Self::DEALER).collect()
    }
}

/// `(|0…0⟩ + |1…1⟩)/√2` on `n` qubits, built by chained XOR from `|+⟩|0…0⟩`.
pub fn make_resource(n: usize) -> Result<PureState> {
    if n < 2 {
        return Err(ProtocolError::TooFewParties(n));
    }
    if n > MAX_QUBITS {
        return Err(ProtocolError::TooManyParties(n));
    }
    let mut state = PureState::plus().tensor(&PureState::basis(n - 1, 0)?)?;
    for i in 0..n - 1 {
        state = state.cnot(i, i + 1)?;
    }
    Ok(state)
}

fn is_ghz(resource: &PureState) -> bool {
    let amps = resource.amplitudes();
    let last = amps.len() - 1;
    resource.num_qubits() >= 2
        && amps.iter().enumerate().all(|(i, a)| {
            let expected = if i == 0 || i == last { FRAC_1_SQRT_2 } else { 0.0 };
            (a - real(expected)).norm() <= EQ_TOL
        })
}

/// Prepends the secret to a GHZ resource and XORs it into the dealer's qubit.
pub fn encode_secret(secret: &Secret, resource: &PureState) -> Result<PureState> {
    if !is_ghz(resource) {
        return Err(ProtocolError::MalformedResource);
    }
    Ok(secret.state().tensor(resource)?.cnot(Layout::SECRET, Layout::DEALER)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    Computational,
    /// `{|+⟩, |−⟩}`; outcome 0 is `+`.
    Hadamard,
}

impl Basis {
    fn projectors(self) -> [ComplexMatrix; 2] {
        match self {
            Basis::Computational => [
                ComplexMatrix::diagonal(&[real(1.0), real(0.0)]),
                ComplexMatrix::diagonal(&[real(0.0), real(1.0)]),
            ],
            Basis::Hadamard => {
                let h = |sign: f64| ComplexMatrix::from_real(2, 2, &[0.5, 0.5 * sign, 0.5 * sign, 0.5]);
                [h(1.0).expect("2x2"), h(-1.0).expect("2x2")]
            }
        }
    }
}

/// One outcome of a projective measurement; `state` is left unnormalised.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub outcome: u8,
    pub probability: f64,
    pub state: DensityMatrix,
}

pub fn measure_projective(rho: &DensityMatrix, qubit: usize, basis: Basis) -> Result<Vec<MeasurementRecord>> {
    basis
        .projectors()
        .iter()
        .enumerate()
        .map(|(outcome, proj)| {
            let state = rho.conjugate_local(proj, qubit)?;
            Ok(MeasurementRecord {
                outcome: outcome as u8,
                probability: state.trace(),
                state,
            })
        })
        .collect()
}

/// Order in which the dealer and the collaborators measure. Local
/// measurements on distinct qubits commute, so this never changes a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeasurementOrder {
    #[default]
    DealerFirst,
    CollaboratorsFirst,
}

/// Full outcome label of one branch.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BranchKey {
    pub alice: u8,
    pub collaborators: Vec<Sign>,
}

impl fmt::Display for BranchKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.alice)?;
        for s in &self.collaborators {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Unnormalised post-measurement register state for one branch.
#[derive(Debug, Clone)]
pub struct Branch {
    pub key: BranchKey,
    pub state: DensityMatrix,
}

/// Expands every dealer/collaborator outcome of `rho`.
pub fn enumerate_branches(rho: &DensityMatrix, layout: Layout, order: MeasurementOrder) -> Result<Vec<Branch>> {
    let collaborators = layout.collaborators();
    let mut steps: Vec<(usize, Basis)> = collaborators.iter().map(|&q| (q, Basis::Hadamard)).collect();
    match order {
        MeasurementOrder::DealerFirst => steps.insert(0, (Layout::DEALER, Basis::Computational)),
        MeasurementOrder::CollaboratorsFirst => steps.push((Layout::DEALER, Basis::Computational)),
    }
    let mut frontier: Vec<(Vec<u8>, DensityMatrix)> = vec![(vec![0; layout.qubits()], rho.clone())];
    for &(qubit, basis) in &steps {
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for (outcomes, state) in &frontier {
            for rec in measure_projective(state, qubit, basis)? {
                let mut o = outcomes.clone();
                o[qubit] = rec.outcome;
                next.push((o, rec.state));
            }
        }
        frontier = next;
    }
    let mut branches: Vec<Branch> = frontier
        .into_iter()
        .map(|(outcomes, state)| Branch {
            key: BranchKey {
                alice: outcomes[Layout::DEALER],
                collaborators: collaborators
                    .iter()
                    .map(|&q| if outcomes[q] == 0 { Sign::Plus } else { Sign::Minus })
                    .collect(),
            },
            state,
        })
        .collect();
    branches.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(branches)
}

/// Single-qubit state of every receiver after the dealer and the
/// collaborators have measured but before any outcome is announced, in
/// register order (dealer excluded).
pub fn receiver_marginals(cfg: &ProtocolConfig, secret: &Secret) -> Result<Vec<(usize, DensityMatrix)>> {
    cfg.validate_setup()?;
    let layout = cfg.layout()?;
    let resource = make_resource(cfg.parties)?.density();
    let rho = distribute(secret, &resource, cfg)?;
    let mut branches = enumerate_branches(&rho, layout, MeasurementOrder::DealerFirst)?.into_iter();
    let first = branches.next().expect("at least one branch").state;
    let unannounced = branches.try_fold(first, |acc, b| acc.sum(&b.state))?;
    (0..layout.qubits())
        .filter(|&q| q != Layout::DEALER)
        .map(|q| Ok((q, partial_trace(&unannounced, &[q])?)))
        .collect()
}

/// A channel applied to every transmitted qubit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: ChannelKind,
    pub strength: f64,
}

impl NoiseSpec {
    pub fn new(kind: ChannelKind, strength: f64) -> Self {
        Self { kind, strength }
    }

    pub fn channel(&self) -> Result<KrausChannel> {
        Ok(KrausChannel::new(self.kind, self.strength)?)
    }
}

/// Forward weak measurement `s` before the channel and reversal `r` after it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wmrqm {
    pub forward: f64,
    pub reverse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    /// Receivers, excluding the dealer.
    pub parties: usize,
    pub noise: Option<NoiseSpec>,
    pub wmrqm: Option<Wmrqm>,
    /// Noise on the collaborators' qubits on their way back to the dealer.
    pub return_trip: Option<NoiseSpec>,
    pub iterations: usize,
    pub secrets: Vec<Secret>,
}

impl ProtocolConfig {
    /// Noiseless session with no secrets queued.
    pub fn new(parties: usize) -> Self {
        Self {
            parties,
            noise: None,
            wmrqm: None,
            return_trip: None,
            iterations: 0,
            secrets: Vec::new(),
        }
    }

    pub fn with_noise(mut self, kind: ChannelKind, strength: f64) -> Self {
        self.noise = Some(NoiseSpec::new(kind, strength));
        self
    }

    pub fn with_wmrqm(mut self, forward: f64, reverse: f64) -> Self {
        self.wmrqm = Some(Wmrqm { forward, reverse });
        self
    }

    pub fn with_return_trip(mut self, kind: ChannelKind, strength: f64) -> Self {
        self.return_trip = Some(NoiseSpec::new(kind, strength));
        self
    }

    pub fn with_secrets(mut self, secrets: Vec<Secret>) -> Self {
        self.iterations = secrets.len();
        self.secrets = secrets;
        self
    }

    pub fn layout(&self) -> Result<Layout> {
        Layout::new(self.parties)
    }

    /// Everything except the secret queue.
    pub fn validate_setup(&self) -> Result<()> {
        self.layout()?;
        for spec in [self.noise, self.return_trip].into_iter().flatten() {
            spec.channel()?;
        }
        if let Some(w) = self.wmrqm {
            weak_op(WeakKind::ForwardNull, w.forward)?;
            weak_op(WeakKind::Reverse, w.reverse)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_setup()?;
        if self.secrets.len() != self.iterations {
            return Err(ProtocolError::InvalidConfig(format!(
                "{} secrets for {} iterations",
                self.secrets.len(),
                self.iterations
            )));
        }
        Ok(())
    }
}

/// Result for one measurement branch.
#[derive(Debug, Clone)]
pub struct IterationReport {
    pub iteration_index: usize,
    pub alice_outcome: u8,
    pub collaborator_outcomes: Vec<Sign>,
    pub correction_applied: Correction,
    /// Bob's normalised qubit after correction.
    pub reconstructed_state: DensityMatrix,
    /// Bob's normalised qubit before correction.
    pub uncorrected_state: DensityMatrix,
    pub fidelity: f64,
    pub branch_probability: f64,
}

impl IterationReport {
    pub fn key(&self) -> BranchKey {
        BranchKey {
            alice: self.alice_outcome,
            collaborators: self.collaborator_outcomes.clone(),
        }
    }
}

/// A branch that cannot occur; nothing was computed for it.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedBranch {
    pub key: BranchKey,
    pub probability: f64,
}

/// What the dealer holds between iterations: the qubits returned by the
/// collaborators, as one mixed state averaged over all branches.
#[derive(Debug, Clone)]
pub struct ProtocolState {
    parties: usize,
    next_iteration: usize,
    returned: DensityMatrix,
}

impl ProtocolState {
    pub fn parties(&self) -> usize {
        self.parties
    }

    pub fn next_iteration(&self) -> usize {
        self.next_iteration
    }

    pub fn returned(&self) -> &DensityMatrix {
        &self.returned
    }
}

#[derive(Debug, Clone)]
pub struct IterationOutcome {
    pub iteration_index: usize,
    pub reports: Vec<IterationReport>,
    pub skipped: Vec<SkippedBranch>,
    /// Probability that every weak measurement took its null outcome; 1
    /// without protection.
    pub success_probability: f64,
    pub state: ProtocolState,
}

impl IterationOutcome {
    /// Branch fidelities weighted by branch probability, conditioned on success.
    pub fn aggregate_fidelity(&self) -> f64 {
        let total: f64 = self.reports.iter().map(|r| r.branch_probability).sum();
        self.reports
            .iter()
            .map(|r| r.branch_probability * r.fidelity)
            .sum::<f64>()
            / total
    }

    pub fn total_branch_probability(&self) -> f64 {
        self.reports.iter().map(|r| r.branch_probability).sum::<f64>()
            + self.skipped.iter().map(|s| s.probability).sum::<f64>()
    }

    pub fn report(&self, alice: u8, collaborators: &[Sign]) -> Option<&IterationReport> {
        self.reports
            .iter()
            .find(|r| r.alice_outcome == alice && r.collaborator_outcomes == collaborators)
    }
}

/// Register state right after encoding, noise and (optionally) weak
/// measurement and reversal, before anyone measures. Its trace is the
/// success probability.
pub fn distribute(secret: &Secret, resource: &DensityMatrix, cfg: &ProtocolConfig) -> Result<DensityMatrix> {
    let layout = cfg.layout()?;
    if resource.num_qubits() != layout.parties() {
        return Err(ProtocolError::MalformedResource);
    }
    let mut rho = secret
        .state()
        .density()
        .tensor(resource)?
        .cnot(Layout::SECRET, Layout::DEALER)?;
    let transmitted = layout.transmitted();
    if let Some(w) = cfg.wmrqm {
        let op = weak_op(WeakKind::ForwardNull, w.forward)?;
        for &q in &transmitted {
            rho = rho.conjugate_local(op.matrix(), q)?;
        }
    }
    if let Some(noise) = cfg.noise {
        let channel = noise.channel()?;
        for &q in &transmitted {
            rho = apply_channel(&rho, &channel, q)?;
        }
    }
    if let Some(w) = cfg.wmrqm {
        let op = weak_op(WeakKind::Reverse, w.reverse)?;
        for &q in &transmitted {
            rho = rho.conjugate_local(op.matrix(), q)?;
        }
    }
    Ok(rho)
}

/// One sharing round on a fresh GHZ resource.
pub fn run_iteration(cfg: &ProtocolConfig, secret: &Secret) -> Result<IterationOutcome> {
    cfg.validate_setup()?;
    let resource = make_resource(cfg.parties)?.density();
    run_from_resource(&resource, secret, cfg, 0)
}

fn run_from_resource(
    resource: &DensityMatrix,
    secret: &Secret,
    cfg: &ProtocolConfig,
    iteration_index: usize,
) -> Result<IterationOutcome> {
    let layout = cfg.layout()?;
    let rho = distribute(secret, resource, cfg)?;
    let success_probability = rho.trace();
    let branches = enumerate_branches(&rho, layout, MeasurementOrder::DealerFirst)?;
    let collaborators = layout.collaborators();

    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    let mut returned: Option<DensityMatrix> = None;
    for branch in branches {
        let probability = branch.state.trace();
        if probability <= ZERO_PROBABILITY {
            skipped.push(SkippedBranch {
                key: branch.key,
                probability,
            });
            continue;
        }
        let back = partial_trace(&branch.state, &collaborators)?;
        returned = Some(match returned {
            Some(acc) => acc.sum(&back)?,
            None => back,
        });
        let bob = partial_trace(&branch.state, &[layout.bob()])?.normalized()?;
        let fix = correction(branch.key.alice, &branch.key.collaborators);
        let reconstructed = bob.conjugate(&fix.matrix())?;
        let fidelity = analysis::fidelity(secret, &reconstructed)?;
        reports.push(IterationReport {
            iteration_index,
            alice_outcome: branch.key.alice,
            collaborator_outcomes: branch.key.collaborators,
            correction_applied: fix,
            reconstructed_state: reconstructed,
            uncorrected_state: bob,
            fidelity,
            branch_probability: probability,
        });
    }
    let mut returned = returned.ok_or(ProtocolError::NoSuccessfulBranch)?.normalized()?;
    if let Some(noise) = cfg.return_trip {
        let channel = noise.channel()?;
        for q in 0..returned.num_qubits() {
            returned = apply_channel(&returned, &channel, q)?;
        }
    }
    Ok(IterationOutcome {
        iteration_index,
        reports,
        skipped,
        success_probability,
        state: ProtocolState {
            parties: layout.parties(),
            next_iteration: iteration_index + 1,
            returned,
        },
    })
}

/// Measures `qubit` in the computational basis and flips it to `|0⟩` on outcome 1.
fn reset_qubit(rho: &DensityMatrix, qubit: usize) -> Result<DensityMatrix> {
    let [zero, one]: [MeasurementRecord; 2] = measure_projective(rho, qubit, Basis::Computational)?
        .try_into()
        .expect("two outcomes");
    Ok(zero
        .state
        .sum(&one.state.conjugate_local(&ComplexMatrix::pauli_x(), qubit)?)?)
}

/// Rebuilds the resource from the returned qubits and shares `next_secret`.
pub fn recycle_and_rerun(prev: &ProtocolState, next_secret: &Secret, cfg: &ProtocolConfig) -> Result<IterationOutcome> {
    cfg.validate_setup()?;
    if prev.parties != cfg.parties {
        return Err(ProtocolError::PartyMismatch {
            expected: cfg.parties,
            found: prev.parties,
        });
    }
    let mut recycled = prev.returned.clone();
    for q in 0..recycled.num_qubits() {
        recycled = reset_qubit(&recycled, q)?;
    }
    let mut resource = PureState::plus().density().tensor(&recycled)?;
    for i in 0..cfg.parties - 1 {
        resource = resource.cnot(i, i + 1)?;
    }
    run_from_resource(&resource, next_secret, cfg, prev.next_iteration)
}

/// Runs every queued secret, recycling qubits between rounds.
pub fn run_sequence(cfg: &ProtocolConfig) -> Result<Vec<IterationOutcome>> {
    cfg.validate()?;
    let mut outcomes: Vec<IterationOutcome> = Vec::with_capacity(cfg.iterations);
    for secret in &cfg.secrets {
        let next = match outcomes.last() {
            None => run_iteration(cfg, secret)?,
            Some(prev) => recycle_and_rerun(&prev.state, secret, cfg)?,
        };
        outcomes.push(next);
    }
    Ok(outcomes)
}

/// Secret-averaged view of a configuration over weighted secrets.
#[derive(Debug, Clone)]
pub struct SecretAverage {
    /// `Σ w · aggregate fidelity`.
    pub aggregate_fidelity: f64,
    /// `Σ w · success probability`.
    pub success_probability: f64,
    /// `Σ w · branch fidelity` for branches that occur for every secret.
    pub branch_fidelity: BTreeMap<BranchKey, f64>,
}

pub fn average_over_secrets(cfg: &ProtocolConfig, samples: &[(Secret, f64)]) -> Result<SecretAverage> {
    let mut aggregate = 0.0;
    let mut success = 0.0;
    let mut per_branch: BTreeMap<BranchKey, (f64, usize)> = BTreeMap::new();
    for (secret, weight) in samples {
        let out = run_iteration(cfg, secret)?;
        aggregate += weight * out.aggregate_fidelity();
        success += weight * out.success_probability;
        for r in &out.reports {
            let e = per_branch.entry(r.key()).or_insert((0.0, 0));
            e.0 += weight * r.fidelity;
            e.1 += 1;
        }
    }
    Ok(SecretAverage {
        aggregate_fidelity: aggregate,
        success_probability: success,
        branch_fidelity: per_branch
            .into_iter()
            .filter(|(_, (_, n))| *n == samples.len())
            .map(|(k, (f, _))| (k, f))
            .collect(),
    })
}
