//! `qss sweep`: evaluate quantities over a grid of up to two parameters.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use qss_core::analysis::{self, AnalysisError};
use qss_core::channels::ChannelKind;
use qss_core::par::Execution;
use qss_core::protocol::{run_iteration, Layout, ProtocolConfig, Secret};

use crate::error::{CliError, Result};
use crate::kv::{parse_value, KeyValues};
use crate::numfmt::format_float;

pub const SWEEP_KEYS: &[&str] = &[
    "quantity", "axis1", "axis2", "k", "q", "p", "s", "r", "channel", "parties",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Param {
    K,
    Q,
    P,
    S,
    R,
}

impl Param {
    pub const ALL: [Param; 5] = [Param::K, Param::Q, Param::P, Param::S, Param::R];

    pub fn name(self) -> &'static str {
        match self {
            Param::K => "k",
            Param::Q => "q",
            Param::P => "p",
            Param::S => "s",
            Param::R => "r",
        }
    }
}

impl FromStr for Param {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Param::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown parameter `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    AvgFPd,
    AvgFAd,
    AvgFOpt0,
    AvgF1,
    Sp2,
    F0Ww,
    F1Ww,
    SimFidelity,
    /// Region average of the success probability at `r_opt`.
    ProbSucc,
    /// `avg_f1` at `r = 1`.
    OptimalLine,
}

impl Quantity {
    const ALL: [Quantity; 10] = [
        Quantity::AvgFPd,
        Quantity::AvgFAd,
        Quantity::AvgFOpt0,
        Quantity::AvgF1,
        Quantity::Sp2,
        Quantity::F0Ww,
        Quantity::F1Ww,
        Quantity::SimFidelity,
        Quantity::ProbSucc,
        Quantity::OptimalLine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::AvgFPd => "avg_f_pd",
            Quantity::AvgFAd => "avg_f_ad",
            Quantity::AvgFOpt0 => "avg_f_opt0",
            Quantity::AvgF1 => "avg_f1",
            Quantity::Sp2 => "sp2",
            Quantity::F0Ww => "f0_ww",
            Quantity::F1Ww => "f1_ww",
            Quantity::SimFidelity => "sim_fidelity",
            Quantity::ProbSucc => "prob_succ",
            Quantity::OptimalLine => "optimal_line",
        }
    }

    /// Parameters read by the quantity; `sim_fidelity` depends on the channel.
    fn params(self, channel: ChannelKind) -> &'static [Param] {
        use Param::*;
        match self {
            Quantity::AvgFPd => &[Q],
            Quantity::AvgFAd | Quantity::OptimalLine => &[P],
            Quantity::AvgFOpt0 | Quantity::ProbSucc => &[P, S],
            Quantity::AvgF1 => &[R, P],
            Quantity::Sp2 | Quantity::F0Ww => &[K, S, R, P],
            Quantity::F1Ww => &[K, R, P],
            Quantity::SimFidelity => match channel {
                ChannelKind::PhaseDamping => &[K, Q],
                ChannelKind::AmplitudeDamping => &[K, P],
            },
        }
    }
}

impl FromStr for Quantity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Quantity::ALL.into_iter().find(|q| q.name() == s).ok_or_else(|| {
            let names: Vec<_> = Quantity::ALL.iter().map(|q| q.name()).collect();
            format!("unknown quantity `{s}` (expected one of: {})", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub param: Param,
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        (0..self.steps)
            .map(|i| {
                if i + 1 == self.steps {
                    self.max
                } else {
                    self.min + (self.max - self.min) * i as f64 / (self.steps - 1) as f64
                }
            })
            .collect()
    }
}

/// A fixed parameter value, or `r = opt` for the optimal reversal strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binding {
    Value(f64),
    OptimalReversal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub quantities: Vec<Quantity>,
    pub axes: Vec<Axis>,
    pub fixed: BTreeMap<Param, Binding>,
    pub channel: ChannelKind,
    pub parties: usize,
}

fn parse_axis(key: &str, value: &str) -> Result<Axis> {
    let fields: Vec<&str> = value.split(',').map(str::trim).collect();
    let [param, min, max, steps] = fields[..] else {
        return Err(CliError::Parse(format!(
            "`{key}`: expected `param, min, max, steps`, got `{value}`"
        )));
    };
    let axis = Axis {
        param: param.parse().map_err(|e| CliError::Parse(format!("`{key}`: {e}")))?,
        min: parse_value(key, min)?,
        max: parse_value(key, max)?,
        steps: parse_value(key, steps)?,
    };
    if axis.steps < 2 {
        return Err(CliError::Validation(format!("`{key}`: at least 2 steps required")));
    }
    if !(0.0..=1.0).contains(&axis.min) || !(0.0..=1.0).contains(&axis.max) || axis.min >= axis.max {
        return Err(CliError::Validation(format!(
            "`{key}`: range [{}, {}] must be increasing and inside [0, 1]",
            axis.min, axis.max
        )));
    }
    Ok(axis)
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text, SWEEP_KEYS)?;
        let quantities: Vec<Quantity> = kv
            .raw("quantity")
            .ok_or_else(|| CliError::Validation("`quantity` is required".into()))?
            .split(',')
            .map(|q| q.trim().parse().map_err(|e: String| CliError::Parse(e)))
            .collect::<Result<_>>()?;
        let mut axes = Vec::new();
        for key in ["axis1", "axis2"] {
            if let Some(v) = kv.raw(key) {
                axes.push(parse_axis(key, v)?);
            }
        }
        if kv.raw("axis2").is_some() && kv.raw("axis1").is_none() {
            return Err(CliError::Validation("`axis2` needs `axis1`".into()));
        }
        if axes.is_empty() {
            return Err(CliError::Validation("at least `axis1` is required".into()));
        }
        if axes.len() == 2 && axes[0].param == axes[1].param {
            return Err(CliError::Validation("both axes sweep the same parameter".into()));
        }
        let mut fixed = BTreeMap::new();
        for p in Param::ALL {
            let Some(raw) = kv.raw(p.name()) else { continue };
            if axes.iter().any(|a| a.param == p) {
                return Err(CliError::Validation(format!("`{}` is both fixed and swept", p.name())));
            }
            let binding = if p == Param::R && raw == "opt" {
                Binding::OptimalReversal
            } else {
                let v: f64 = parse_value(p.name(), raw)?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(CliError::Validation(format!("`{}` = {v} outside [0, 1]", p.name())));
                }
                Binding::Value(v)
            };
            fixed.insert(p, binding);
        }
        let channel = match kv.raw("channel") {
            None => ChannelKind::AmplitudeDamping,
            Some(c) => c
                .parse()
                .map_err(|e: String| CliError::Parse(format!("`channel`: {e}")))?,
        };
        let parties = kv.get::<usize>("parties")?.unwrap_or(2);
        Layout::new(parties).map_err(|e| CliError::Validation(e.to_string()))?;
        let spec = Self {
            quantities,
            axes,
            fixed,
            channel,
            parties,
        };
        spec.check_bindings()?;
        Ok(spec)
    }

    fn check_bindings(&self) -> Result<()> {
        for q in &self.quantities {
            for p in q.params(self.channel) {
                if !self.axes.iter().any(|a| a.param == *p) && !self.fixed.contains_key(p) {
                    return Err(CliError::Validation(format!(
                        "`{}` needs a value for `{}`",
                        q.name(),
                        p.name()
                    )));
                }
            }
        }
        if self.fixed.get(&Param::R) == Some(&Binding::OptimalReversal) {
            for p in [Param::K, Param::S, Param::P] {
                if !self.axes.iter().any(|a| a.param == p) && !self.fixed.contains_key(&p) {
                    return Err(CliError::Validation(format!(
                        "`r = opt` needs a value for `{}`",
                        p.name()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn header(&self) -> Vec<&'static str> {
        self.axes
            .iter()
            .map(|a| a.param.name())
            .chain(self.quantities.iter().map(|q| q.name()))
            .collect()
    }

    /// Grid points in row order, first axis major.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let first = self.axes[0].values();
        match self.axes.get(1) {
            None => first.into_iter().map(|x| vec![x]).collect(),
            Some(second) => {
                let inner = second.values();
                first
                    .iter()
                    .flat_map(|&x| inner.iter().map(move |&y| vec![x, y]))
                    .collect()
            }
        }
    }

    fn lookup(&self, point: &[f64], p: Param) -> std::result::Result<f64, String> {
        if let Some(i) = self.axes.iter().position(|a| a.param == p) {
            return Ok(point[i]);
        }
        match self.fixed.get(&p) {
            Some(Binding::Value(v)) => Ok(*v),
            Some(Binding::OptimalReversal) => {
                let k = self.lookup(point, Param::K)?;
                let s = self.lookup(point, Param::S)?;
                let pp = self.lookup(point, Param::P)?;
                analysis::r_opt(k, s, pp).map_err(|e| e.to_string())
            }
            None => Err(format!("no value for `{}`", p.name())),
        }
    }

    fn evaluate(&self, q: Quantity, point: &[f64]) -> std::result::Result<f64, String> {
        let v = |p| self.lookup(point, p);
        let a = |r: std::result::Result<f64, AnalysisError>| r.map_err(|e| e.to_string());
        use Param::*;
        match q {
            Quantity::AvgFPd => a(analysis::avg_f_pd(v(Q)?)),
            Quantity::AvgFAd => a(analysis::avg_f_ad(v(P)?)),
            Quantity::AvgFOpt0 => a(analysis::avg_f_opt0(v(P)?, v(S)?)),
            Quantity::AvgF1 => a(analysis::avg_f1(v(R)?, v(P)?)),
            Quantity::Sp2 => a(analysis::sp2(v(K)?, v(S)?, v(R)?, v(P)?)),
            Quantity::F0Ww => a(analysis::f0_ww(v(K)?, v(S)?, v(R)?, v(P)?)),
            Quantity::F1Ww => a(analysis::f1_ww(v(K)?, v(R)?, v(P)?)),
            Quantity::ProbSucc => a(analysis::avg_sp2_opt(v(P)?, v(S)?)),
            Quantity::OptimalLine => a(analysis::avg_f1(1.0, v(P)?)),
            Quantity::SimFidelity => {
                let strength = match self.channel {
                    ChannelKind::PhaseDamping => v(Q)?,
                    ChannelKind::AmplitudeDamping => v(P)?,
                };
                let mut cfg = ProtocolConfig::new(self.parties).with_noise(self.channel, strength);
                let weak = (self.fixed.contains_key(&S) || self.axes.iter().any(|x| x.param == S))
                    && (self.fixed.contains_key(&R) || self.axes.iter().any(|x| x.param == R));
                if weak {
                    cfg = cfg.with_wmrqm(v(S)?, v(R)?);
                }
                let secret = Secret::from_k(v(K)?).map_err(|e| e.to_string())?;
                run_iteration(&cfg, &secret)
                    .map(|out| out.aggregate_fidelity())
                    .map_err(|e| e.to_string())
            }
        }
    }
}

/// CSV text and the number of `nan` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub csv: String,
    pub rows: usize,
    pub warnings: usize,
}

/// Evaluates every grid point; rows come out in grid order whatever `exec`.
pub fn run_sweep(spec: &SweepSpec, exec: Execution) -> SweepOutput {
    let points = spec.points();
    let rows: Vec<Vec<f64>> = exec.map(&points, |pt| {
        spec.quantities
            .iter()
            .map(|&q| match spec.evaluate(q, pt) {
                Ok(x) if x.is_finite() => x,
                _ => f64::NAN,
            })
            .collect()
    });
    let mut csv = spec.header().join(",");
    csv.push('\n');
    let mut warnings = 0;
    for (pt, values) in points.iter().zip(&rows) {
        let cells: Vec<String> = pt.iter().chain(values).map(|&x| format_float(x)).collect();
        warnings += values.iter().filter(|x| x.is_nan()).count();
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    writeln!(csv, "# warnings: {warnings}").expect("writing to a String");
    SweepOutput {
        csv,
        rows: points.len(),
        warnings,
    }
}
