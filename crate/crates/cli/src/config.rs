//! Experiment configuration files.
//!
//! TOML with a `schema_version` header key. Semantic errors name the
//! offending field, e.g. `alphas[0]`.

use std::str::FromStr;

use serde::Deserialize;

use loctime::exact::{lambda_star, ReturnSeries};
use loctime::experiments::{ExperimentConfig, GammaSource, Schedule};
use loctime::local_times::{IndicatorSet, ObservableF, TailRule};
use loctime::walk::{preset, validate_distribution, Probability, Site, StepDistribution};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replicas: u64,
    pub n_max: u64,
    #[serde(default)]
    pub exact_horizon: usize,
    #[serde(default)]
    pub allow_degenerate: bool,
    pub mem_cap: Option<usize>,
    pub walk: WalkSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub gamma: GammaSpec,
    #[serde(default)]
    pub observables: Vec<ObservableSpec>,
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub exact: ExactSpec,
    #[serde(default)]
    pub verify: VerifySpec,
}

fn one() -> u64 {
    1
}

/// A probability written as a string (`"2/3"`, `"0.25"`) or a number.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum ProbSpec {
    Text(String),
    Number(f64),
}

impl ProbSpec {
    fn parse(&self, field: &str) -> Result<Probability, CliError> {
        let text = match self {
            ProbSpec::Text(s) => s.clone(),
            ProbSpec::Number(x) => x.to_string(),
        };
        Probability::from_str(&text).map_err(|e| CliError::field(field, e.to_string()))
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub step: Vec<i64>,
    pub prob: ProbSpec,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkSpec {
    /// `simple`, `biased1d` or `custom`.
    pub preset: String,
    pub dim: Option<usize>,
    pub p: Option<ProbSpec>,
    #[serde(default)]
    pub atoms: Vec<AtomSpec>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default = "default_first")]
    pub first: u64,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    /// Explicit checkpoint list; overrides `first`/`ratio`.
    pub points: Option<Vec<u64>>,
}

fn default_first() -> u64 {
    1
}

fn default_ratio() -> f64 {
    2.0
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec { first: 1, ratio: 2.0, points: None }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaSpec {
    /// Pinned escape probability; otherwise estimated from the return series.
    pub value: Option<f64>,
    #[serde(default = "default_gamma_horizon")]
    pub horizon: usize,
    /// Monte Carlo cross-check used by the `gamma` subcommand.
    #[serde(default)]
    pub mc_replicas: u64,
    pub mc_horizon: Option<u64>,
}

fn default_gamma_horizon() -> usize {
    2048
}

impl Default for GammaSpec {
    fn default() -> Self {
        GammaSpec { value: None, horizon: default_gamma_horizon(), mc_replicas: 0, mc_horizon: None }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ObservableSpec {
    Power {
        alpha: f64,
    },
    /// One of `at_least`, `values` (a finite set) or `excluded` (a co-finite set).
    Indicator {
        at_least: Option<u64>,
        values: Option<Vec<u64>>,
        excluded: Option<Vec<u64>>,
    },
    Table {
        values: Vec<f64>,
        #[serde(default)]
        tail: TailSpec,
    },
    /// `e^{c i}/i^p`, with `c` given directly or as `c_rel · λ*`.
    ExpCapped {
        c: Option<f64>,
        c_rel: Option<f64>,
        p: f64,
    },
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailSpec {
    #[default]
    Zero,
    Last,
    Power,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactSpec {
    /// Horizon of the return series; defaults to the gamma horizon.
    pub horizon: Option<usize>,
    /// Times for the `E Q_n(j)` table; defaults to checkpoints within the horizon.
    pub times: Option<Vec<usize>>,
    pub j_cap: Option<usize>,
    #[serde(default = "default_limit_tol")]
    pub limit_tol: f64,
}

fn default_limit_tol() -> f64 {
    1e-12
}

impl Default for ExactSpec {
    fn default() -> Self {
        ExactSpec { horizon: None, times: None, j_cap: None, limit_tol: default_limit_tol() }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default)]
    pub slln: SllnSpec,
    #[serde(default)]
    pub variance: VarianceSpec,
    #[serde(default)]
    pub maxlocal: MaxLocalSpec,
    #[serde(default)]
    pub conditions: ConditionsSpec,
    #[serde(default)]
    pub subsequence: SubsequenceSpec,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SllnSpec {
    /// Relative tolerance on `|mean - limit|` at the final checkpoint.
    #[serde(default = "default_slln_tol")]
    pub tolerance: f64,
}

fn default_slln_tol() -> f64 {
    0.05
}

impl Default for SllnSpec {
    fn default() -> Self {
        SllnSpec { tolerance: default_slln_tol() }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceSpec {
    #[serde(default)]
    pub split: bool,
    #[serde(default)]
    pub exhaustive: bool,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxLocalSpec {
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "one_u32")]
    pub m: u32,
    #[serde(default = "default_violation")]
    pub max_violation_fraction: f64,
    pub t_grid: Option<Vec<u64>>,
}

fn default_eps() -> f64 {
    0.5
}

fn one_u32() -> u32 {
    1
}

fn default_violation() -> f64 {
    0.05
}

impl Default for MaxLocalSpec {
    fn default() -> Self {
        MaxLocalSpec { eps: 0.5, m: 1, max_violation_fraction: 0.05, t_grid: None }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionsSpec {
    /// `log` or `eta`.
    #[serde(default = "default_mode")]
    pub mode: String,
    pub eta: Option<f64>,
    pub grid: Option<Vec<usize>>,
}

fn default_mode() -> String {
    "log".into()
}

impl Default for ConditionsSpec {
    fn default() -> Self {
        ConditionsSpec { mode: default_mode(), eta: None, grid: None }
    }
}

pub fn default_condition_grid() -> Vec<usize> {
    (1..=10).map(|k| 1usize << k).chain([2000]).collect()
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsequenceSpec {
    /// `inverse_square` or `constant`; ignored when `values` is given.
    #[serde(default = "default_sequence")]
    pub sequence: String,
    #[serde(default = "one_f64")]
    pub constant: f64,
    pub values: Option<Vec<f64>>,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
}

fn default_sequence() -> String {
    "inverse_square".into()
}

fn one_f64() -> f64 {
    1.0
}

fn default_deltas() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

fn default_blocks() -> usize {
    50
}

impl Default for SubsequenceSpec {
    fn default() -> Self {
        SubsequenceSpec {
            sequence: default_sequence(),
            constant: 1.0,
            values: None,
            deltas: default_deltas(),
            blocks: default_blocks(),
        }
    }
}

/// A parsed configuration, with the source text kept for the digest.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub raw: RawConfig,
    pub text: String,
    pub experiment: ExperimentConfig,
}

/// Overrides from command-line flags.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub mem_cap: Option<usize>,
}

pub const DEFAULT_MEM_CAP: usize = 1 << 30;

pub fn parse_config(text: &str, overrides: Overrides) -> Result<LoadedConfig, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    if raw.schema_version != SCHEMA_VERSION {
        return Err(CliError::field(
            "schema_version",
            format!("unsupported version {}, expected {SCHEMA_VERSION}", raw.schema_version),
        ));
    }
    if raw.replicas == 0 {
        return Err(CliError::field("replicas", "must be at least 1"));
    }
    if raw.n_max == 0 {
        return Err(CliError::field("n_max", "must be at least 1"));
    }
    for (i, a) in raw.alphas.iter().enumerate() {
        if !(*a >= 0.0) || !a.is_finite() {
            return Err(CliError::field(&format!("alphas[{i}]"), format!("alpha must be non-negative, got {a}")));
        }
    }
    let dist = build_walk(&raw.walk)?;
    let schedule = match &raw.schedule.points {
        Some(p) => Schedule::Explicit(p.clone()),
        None => Schedule::Geometric { first: raw.schedule.first, ratio: raw.schedule.ratio },
    };
    let mut cfg = ExperimentConfig::new(dist, raw.n_max, raw.replicas, overrides.seed.unwrap_or(raw.seed));
    cfg.alphas = raw.alphas.clone();
    cfg.schedule = schedule;
    cfg.gamma = match raw.gamma.value {
        Some(g) if (0.0..=1.0).contains(&g) => GammaSource::Pinned(g),
        Some(g) => return Err(CliError::field("gamma.value", format!("must lie in [0,1], got {g}"))),
        None => GammaSource::Series { horizon: raw.gamma.horizon },
    };
    cfg.allow_degenerate = raw.allow_degenerate;
    cfg.exact_horizon = raw.exact_horizon;
    cfg.mem_cap = overrides.mem_cap.or(raw.mem_cap).unwrap_or(DEFAULT_MEM_CAP);
    cfg.threads = overrides.threads;
    cfg.schedule
        .times(cfg.n_max)
        .map_err(|e| CliError::field("schedule", e.to_string()))?;
    cfg.observables = build_observables(&raw.observables, &cfg)?;
    Ok(LoadedConfig { raw, text: text.to_string(), experiment: cfg })
}

fn build_walk(w: &WalkSpec) -> Result<StepDistribution, CliError> {
    if w.preset == "custom" {
        if w.atoms.is_empty() {
            return Err(CliError::field("walk.atoms", "custom walk needs at least one atom"));
        }
        let dim = w.dim.unwrap_or(w.atoms[0].step.len());
        let atoms = w
            .atoms
            .iter()
            .enumerate()
            .map(|(i, a)| Ok((Site(a.step.clone()), a.prob.parse(&format!("walk.atoms[{i}].prob"))?)))
            .collect::<Result<Vec<_>, CliError>>()?;
        return validate_distribution(&atoms, dim).map_err(|e| CliError::field("walk.atoms", e.to_string()));
    }
    let p = w.p.as_ref().map(|p| p.parse("walk.p")).transpose()?;
    preset(&w.preset, w.dim, p).map_err(|e| CliError::field("walk", e.to_string()))
}

fn build_observables(specs: &[ObservableSpec], cfg: &ExperimentConfig) -> Result<Vec<ObservableF>, CliError> {
    let mut lambda: Option<f64> = None;
    let mut out = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let field = |k: &str| format!("observables[{i}].{k}");
        let f = match spec {
            ObservableSpec::Power { alpha } => {
                ObservableF::power(*alpha).map_err(|e| CliError::field(&field("alpha"), e.to_string()))?
            }
            ObservableSpec::Indicator { at_least, values, excluded } => match (at_least, values, excluded) {
                (Some(k), None, None) => ObservableF::at_least(*k),
                (None, Some(v), None) => ObservableF::exactly(v.iter().copied()),
                (None, None, Some(x)) => ObservableF::Indicator(IndicatorSet::CoFinite(x.iter().copied().collect())),
                _ => {
                    return Err(CliError::field(
                        &format!("observables[{i}]"),
                        "indicator needs exactly one of at_least, values, excluded",
                    ))
                }
            },
            ObservableSpec::Table { values, tail } => ObservableF::Table {
                values: values.clone(),
                tail: match tail {
                    TailSpec::Zero => TailRule::Zero,
                    TailSpec::Last => TailRule::Last,
                    TailSpec::Power => TailRule::PowerExtrapolation,
                },
            },
            ObservableSpec::ExpCapped { c, c_rel, p } => {
                let c = match (c, c_rel) {
                    (Some(c), None) => *c,
                    (None, Some(rel)) => {
                        let l = match lambda {
                            Some(l) => l,
                            None => {
                                let g = match cfg.gamma {
                                    GammaSource::Pinned(g) => g,
                                    GammaSource::Series { horizon } => {
                                        ReturnSeries::compute(&cfg.dist, horizon, cfg.mem_cap)?.gamma.gamma_estimate
                                    }
                                };
                                let l = lambda_star(g).map_err(|e| CliError::field(&field("c_rel"), e.to_string()))?;
                                lambda = Some(l);
                                l
                            }
                        };
                        rel * l
                    }
                    _ => return Err(CliError::field(&format!("observables[{i}]"), "give exactly one of c, c_rel")),
                };
                ObservableF::ExpCapped { c, p: *p }
            }
        };
        out.push(f);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
seed = 7
replicas = 2
n_max = 8

[walk]
preset = "biased1d"
p = "2/3"
"#;

    #[test]
    fn minimal_config() {
        let c = parse_config(MINIMAL, Overrides::default()).unwrap();
        assert_eq!(c.experiment.schedule.times(8).unwrap(), vec![1, 2, 4, 8]);
        assert_eq!(c.experiment.seed, 7);
        let c = parse_config(MINIMAL, Overrides { seed: Some(9), ..Default::default() }).unwrap();
        assert_eq!(c.experiment.seed, 9);
    }

    #[test]
    fn negative_alpha_names_field() {
        let text = MINIMAL.replace("[walk]", "alphas = [0, -1]\n\n[walk]");
        let err = parse_config(&text, Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("alphas[1]"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn observables_and_custom_walks() {
        let text = r#"
schema_version = 1
n_max = 16

[walk]
preset = "custom"
atoms = [{ step = [1, 0], prob = "1/2" }, { step = [0, 1], prob = 0.5 }]

[gamma]
value = 1.0

[[observables]]
form = "power"
alpha = 2

[[observables]]
form = "indicator"
values = [1, 3]

[[observables]]
form = "exp_capped"
c = 0.1
p = 2.5
"#;
        let c = parse_config(text, Overrides::default()).unwrap();
        assert_eq!(c.experiment.dist.dim(), 2);
        assert_eq!(c.experiment.observables.len(), 3);
        assert_eq!(c.experiment.observables[1].label(), "indicator({1,3})");
        let bad = text.replace("alpha = 2", "alpha = -2");
        assert!(parse_config(&bad, Overrides::default()).unwrap_err().to_string().contains("observables[0].alpha"));
        let bad = text.replace("schema_version = 1", "schema_version = 2");
        assert!(parse_config(&bad, Overrides::default()).unwrap_err().to_string().contains("schema_version"));
        let bad = text.replace("n_max = 16", "n_max = 16\nbogus = 3");
        assert!(parse_config(&bad, Overrides::default()).is_err());
    }
}
