//! `qss run`: one configured session, reported as JSON.

use std::collections::BTreeMap;

use serde::Serialize;

use qss_core::analysis;
use qss_core::channels::ChannelKind;
use qss_core::optimizer::SecretFamily;
use qss_core::protocol::{
    average_over_secrets, run_sequence, IterationOutcome, IterationReport, ProtocolConfig, ProtocolError, Secret, Sign,
};
use qss_core::tolerance::EQ_TOL;

use crate::error::{CliError, Result};
use crate::kv::KeyValues;
use crate::numfmt::round_significant;

pub const RUN_KEYS: &[&str] = &[
    "parties",
    "channel",
    "strength",
    "s",
    "r",
    "return_channel",
    "return_strength",
    "secrets",
    "phases",
    "iterations",
    "average",
    "k_nodes",
];

/// Gauss-Legendre nodes in the built-in secret grid.
pub const DEFAULT_K_NODES: usize = 64;

pub const TOLERANCE_ENV: &str = "QSS_SIM_TOLERANCE_OVERRIDE";

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub echo: BTreeMap<String, String>,
    pub protocol: ProtocolConfig,
    /// Average over the built-in real-amplitude `k` grid as well.
    pub average_nodes: Option<usize>,
}

fn channel_kind(key: &str, value: Option<&str>) -> Result<Option<ChannelKind>> {
    match value.map(str::trim) {
        None | Some("none") => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|e: String| CliError::Parse(format!("`{key}`: {e}"))),
    }
}

fn channel_strength(kv: &KeyValues, kind_key: &str, strength_key: &str) -> Result<Option<(ChannelKind, f64)>> {
    let kind = channel_kind(kind_key, kv.raw(kind_key))?;
    let strength: Option<f64> = kv.get(strength_key)?;
    match (kind, strength) {
        (None, None) => Ok(None),
        (Some(k), Some(x)) => Ok(Some((k, x))),
        (Some(_), None) => Err(CliError::Validation(format!("`{kind_key}` needs `{strength_key}`"))),
        (None, Some(_)) => Err(CliError::Validation(format!(
            "`{strength_key}` given without `{kind_key}`"
        ))),
    }
}

fn protocol_validation(e: ProtocolError) -> CliError {
    CliError::Validation(e.to_string())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text, RUN_KEYS)?;
        let parties: usize = kv
            .get("parties")?
            .ok_or_else(|| CliError::Validation("`parties` is required".into()))?;
        let mut protocol = ProtocolConfig::new(parties);
        if let Some((kind, x)) = channel_strength(&kv, "channel", "strength")? {
            protocol = protocol.with_noise(kind, x);
        }
        if let Some((kind, x)) = channel_strength(&kv, "return_channel", "return_strength")? {
            protocol = protocol.with_return_trip(kind, x);
        }
        match (kv.get::<f64>("s")?, kv.get::<f64>("r")?) {
            (Some(s), Some(r)) => protocol = protocol.with_wmrqm(s, r),
            (None, None) => {}
            _ => return Err(CliError::Validation("weak measurement needs both `s` and `r`".into())),
        }

        let ks: Vec<f64> = kv.list("secrets")?;
        let phases: Vec<f64> = kv.list("phases")?;
        if !phases.is_empty() && phases.len() != ks.len() {
            return Err(CliError::Validation(format!(
                "{} phases for {} secrets",
                phases.len(),
                ks.len()
            )));
        }
        let secrets = ks
            .iter()
            .enumerate()
            .map(|(i, &k)| Secret::with_phase(k, phases.get(i).copied().unwrap_or(0.0)))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(protocol_validation)?;
        protocol = protocol.with_secrets(secrets);
        if let Some(n) = kv.get::<usize>("iterations")? {
            protocol.iterations = n;
        }

        let average = kv.get::<bool>("average")?.unwrap_or(false);
        let nodes = kv.get::<usize>("k_nodes")?;
        let average_nodes = match (average, nodes) {
            (true, n) => Some(n.unwrap_or(DEFAULT_K_NODES)),
            (false, None) => None,
            (false, Some(_)) => {
                return Err(CliError::Validation(
                    "`k_nodes` only applies with `average = true`".into(),
                ))
            }
        };
        if average_nodes == Some(0) {
            return Err(CliError::Validation("`k_nodes` must be positive".into()));
        }

        protocol.validate().map_err(protocol_validation)?;
        if protocol.iterations == 0 && average_nodes.is_none() {
            return Err(CliError::Validation(
                "nothing to run: give `secrets` or set `average = true`".into(),
            ));
        }
        Ok(Self {
            echo: kv.entries().clone(),
            protocol,
            average_nodes,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchRow {
    pub alice: u8,
    pub collaborators: String,
    pub correction: String,
    pub probability: f64,
    pub fidelity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedRow {
    pub alice: u8,
    pub collaborators: String,
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SecretEcho {
    pub k: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Residuals {
    /// `|Σ branch probabilities − success probability|`.
    pub probability_sum: f64,
    /// Largest gap to the closed forms that apply to this configuration.
    pub closed_form: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationRow {
    pub iteration: usize,
    pub secret: SecretEcho,
    pub aggregate_fidelity: f64,
    pub success_probability: f64,
    pub branches: Vec<BranchRow>,
    pub skipped: Vec<SkippedRow>,
    pub residuals: Residuals,
}

#[derive(Debug, Clone, Serialize)]
pub struct AverageRow {
    pub k_nodes: usize,
    pub aggregate_fidelity: f64,
    pub success_probability: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualSummary {
    pub tolerance: f64,
    pub tolerance_source: String,
    pub max_probability_sum: f64,
    pub max_closed_form: Option<f64>,
    pub within_tolerance: bool,
}

/// Everything `qss run` prints. Field order is the serialisation order.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: BTreeMap<String, String>,
    pub parties: usize,
    pub iterations: Vec<IterationRow>,
    pub aggregate_fidelity: Option<f64>,
    pub success_probability: Option<f64>,
    pub secret_average: Option<AverageRow>,
    pub residuals: ResidualSummary,
}

fn signs(c: &[Sign]) -> String {
    c.iter().map(ToString::to_string).collect()
}

/// Gap between simulation and whichever closed forms cover `cfg`.
fn closed_form_residual(cfg: &ProtocolConfig, secret: &Secret, out: &IterationOutcome) -> Option<f64> {
    if cfg.parties != 2 && (cfg.noise.is_some() || cfg.wmrqm.is_some()) {
        return None;
    }
    let k = secret.k();
    let mut worst: Option<f64> = None;
    let mut note = |d: f64| worst = Some(worst.map_or(d, |w: f64| w.max(d)));
    let ok = |r: &IterationReport| r.branch_probability > 1e-9;
    match (cfg.noise, cfg.wmrqm) {
        (None, None) => out
            .reports
            .iter()
            .filter(|r| ok(r))
            .for_each(|r| note((r.fidelity - 1.0).abs())),
        (Some(n), None) => {
            for r in out.reports.iter().filter(|r| ok(r)) {
                let expected = match (n.kind, r.alice_outcome) {
                    (ChannelKind::PhaseDamping, _) => analysis::f_pd(k, n.strength),
                    (ChannelKind::AmplitudeDamping, 0) => analysis::f_ad(k, n.strength),
                    (ChannelKind::AmplitudeDamping, _) => analysis::f_ad_alice_one(k, n.strength),
                };
                if let Ok(v) = expected {
                    note((r.fidelity - v).abs());
                }
            }
        }
        (Some(n), Some(w)) if n.kind == ChannelKind::AmplitudeDamping => {
            let (s, r, p) = (w.forward, w.reverse, n.strength);
            if let Ok(v) = analysis::sp2(k, s, r, p) {
                note((out.success_probability - v).abs());
            }
            for rep in out
                .reports
                .iter()
                .filter(|x| ok(x) && x.collaborator_outcomes == [Sign::Plus])
            {
                let expected = if rep.alice_outcome == 0 {
                    analysis::f0_ww(k, s, r, p)
                } else {
                    analysis::f1_ww(k, r, p)
                };
                if let Ok(v) = expected {
                    note((rep.fidelity - v).abs());
                }
            }
        }
        _ => {}
    }
    worst
}

fn iteration_row(cfg: &ProtocolConfig, secret: &Secret, out: &IterationOutcome) -> IterationRow {
    let branch_sum: f64 = out.reports.iter().map(|r| r.branch_probability).sum::<f64>()
        + out.skipped.iter().map(|s| s.probability).sum::<f64>();
    IterationRow {
        iteration: out.iteration_index,
        secret: SecretEcho {
            k: secret.k(),
            phase: secret.beta().arg(),
        },
        aggregate_fidelity: out.aggregate_fidelity(),
        success_probability: out.success_probability,
        branches: out
            .reports
            .iter()
            .map(|r| BranchRow {
                alice: r.alice_outcome,
                collaborators: signs(&r.collaborator_outcomes),
                correction: r.correction_applied.label().into(),
                probability: r.branch_probability,
                fidelity: r.fidelity,
            })
            .collect(),
        skipped: out
            .skipped
            .iter()
            .map(|s| SkippedRow {
                alice: s.key.alice,
                collaborators: signs(&s.key.collaborators),
                probability: s.probability,
            })
            .collect(),
        residuals: Residuals {
            probability_sum: (branch_sum - out.success_probability).abs(),
            closed_form: closed_form_residual(cfg, secret, out),
        },
    }
}

fn numeric(e: ProtocolError) -> CliError {
    CliError::Numeric(e.to_string())
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Runs `config`; `tolerance` overrides the residual tolerance.
pub fn execute(config: &RunConfig, tolerance: Option<f64>) -> Result<RunReport> {
    let cfg = &config.protocol;
    let outcomes = run_sequence(cfg).map_err(numeric)?;
    let iterations: Vec<IterationRow> = cfg
        .secrets
        .iter()
        .zip(&outcomes)
        .map(|(s, out)| iteration_row(cfg, s, out))
        .collect();
    let secret_average = match config.average_nodes {
        None => None,
        Some(n) => {
            let avg = average_over_secrets(cfg, &SecretFamily::RealArc.samples(n)).map_err(numeric)?;
            Some(AverageRow {
                k_nodes: n,
                aggregate_fidelity: avg.aggregate_fidelity,
                success_probability: avg.success_probability,
            })
        }
    };
    let (tol, source) = match tolerance {
        Some(t) => (t, TOLERANCE_ENV.to_string()),
        None => (EQ_TOL, "default".to_string()),
    };
    let max_probability_sum = iterations
        .iter()
        .map(|i| i.residuals.probability_sum)
        .fold(0.0, f64::max);
    let max_closed_form = iterations
        .iter()
        .filter_map(|i| i.residuals.closed_form)
        .reduce(f64::max);
    let mut report = RunReport {
        config: config.echo.clone(),
        parties: cfg.parties,
        aggregate_fidelity: mean(iterations.iter().map(|i| i.aggregate_fidelity)),
        success_probability: mean(iterations.iter().map(|i| i.success_probability)),
        iterations,
        secret_average,
        residuals: ResidualSummary {
            tolerance: tol,
            tolerance_source: source,
            max_probability_sum,
            max_closed_form,
            within_tolerance: max_probability_sum <= tol && max_closed_form.is_none_or(|m| m <= tol),
        },
    };
    round_report(&mut report);
    Ok(report)
}

fn round_report(r: &mut RunReport) {
    let round = |x: &mut f64| *x = round_significant(*x);
    for it in &mut r.iterations {
        round(&mut it.secret.k);
        round(&mut it.secret.phase);
        round(&mut it.aggregate_fidelity);
        round(&mut it.success_probability);
        for b in &mut it.branches {
            round(&mut b.probability);
            round(&mut b.fidelity);
        }
        for s in &mut it.skipped {
            round(&mut s.probability);
        }
        round(&mut it.residuals.probability_sum);
        it.residuals.closed_form.as_mut().map(round);
    }
    r.aggregate_fidelity.as_mut().map(round);
    r.success_probability.as_mut().map(round);
    if let Some(a) = &mut r.secret_average {
        round(&mut a.aggregate_fidelity);
        round(&mut a.success_probability);
    }
    round(&mut r.residuals.max_probability_sum);
    r.residuals.max_closed_form.as_mut().map(round);
}

pub fn to_json(report: &RunReport) -> String {
    serde_json::to_string_pretty(report).expect("report fields serialise")
}

/// Reads the override variable; `None` when unset.
pub fn tolerance_override(value: Option<String>) -> Result<Option<f64>> {
    match value {
        None => Ok(None),
        Some(v) => match v.trim().parse::<f64>() {
            Ok(t) if t.is_finite() && t > 0.0 => Ok(Some(t)),
            _ => Err(CliError::Parse(format!(
                "{TOLERANCE_ENV} must be a positive real, got `{v}`"
            ))),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(text: &str) -> RunReport {
        execute(&RunConfig::parse(text).unwrap(), None).unwrap()
    }

    #[test]
    fn noiseless_session_is_perfect() {
        let r = run("parties = 2\nsecrets = 0.3\n");
        assert_eq!(r.aggregate_fidelity, Some(1.0));
        assert_eq!(r.iterations[0].branches.len(), 4);
        assert!(r.residuals.within_tolerance);
    }

    #[test]
    fn full_damping_averages_to_one_half() {
        for parties in [2, 3] {
            let r = run(&format!(
                "parties = {parties}\nchannel = adc\nstrength = 1\naverage = true\n"
            ));
            assert_eq!(r.secret_average.unwrap().aggregate_fidelity, 0.5);
        }
    }

    #[test]
    fn closed_forms_hold_for_complex_secrets() {
        for extra in [
            "channel = pdc\nstrength = 0.4",
            "channel = adc\nstrength = 0.7",
            "channel = adc\nstrength = 0.7\ns = 0.3\nr = 0.6",
        ] {
            let r = run(&format!(
                "parties = 2\n{extra}\nsecrets = 0.2, 0.8\nphases = 1.1, -2.5\n"
            ));
            assert!(r.residuals.max_closed_form.unwrap() < 1e-12, "{extra}");
        }
    }

    #[test]
    fn configuration_errors_use_validation_code() {
        for text in [
            "parties = 1\nsecrets = 0.5",
            "parties = 2\nchannel = adc\nsecrets = 0.5",
            "parties = 2\nchannel = adc\nstrength = 1.5\nsecrets = 0.5",
            "parties = 2\ns = 0.5\nsecrets = 0.5",
            "parties = 2\nsecrets = 0.5\niterations = 2",
            "parties = 2\nsecrets = 1.2",
            "parties = 2",
        ] {
            assert_eq!(RunConfig::parse(text).unwrap_err().exit_code(), 3, "{text}");
        }
        assert_eq!(RunConfig::parse("parties = two").unwrap_err().exit_code(), 2);
        assert_eq!(
            RunConfig::parse("parties = 2\nchannel = foo\nstrength = 0.1")
                .unwrap_err()
                .exit_code(),
            2
        );
    }

    #[test]
    fn impossible_post_selection_is_a_domain_error() {
        let cfg = RunConfig::parse("parties = 2\nchannel = adc\nstrength = 1\ns = 1\nr = 1\nsecrets = 0.5").unwrap();
        assert_eq!(execute(&cfg, None).unwrap_err().exit_code(), 4);
    }

    #[test]
    fn override_parsing() {
        assert_eq!(tolerance_override(None).unwrap(), None);
        assert_eq!(tolerance_override(Some("1e-6".into())).unwrap(), Some(1e-6));
        assert_eq!(tolerance_override(Some("-1".into())).unwrap_err().exit_code(), 2);
    }
}
