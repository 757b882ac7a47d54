//! Flat `key = value` run configuration with dotted section prefixes.
//!
//! ```text
//! # comment
//! env.kind = sensitivity_family
//! env.theta = 0.05
//! agent.kind = epsilon_falcon
//! agent.epsilon = auto
//! run.horizon = 65536
//! ```
//!
//! Omitted keys take their defaults. `env.seed` is not a key: every run is
//! seeded by its replication seed.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::diag::DEFAULT_MC;
use crate::env::{EnvKind, EnvSpec};
use crate::falcon::{LinUcbConfig, RateParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    EpsilonFalcon,
    Falcon,
    LinUcb,
    Uniform,
    /// Always plays the true best arm; a zero-regret reference column.
    Oracle,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::EpsilonFalcon => "epsilon_falcon",
            AgentKind::Falcon => "falcon",
            AgentKind::LinUcb => "lin_ucb",
            AgentKind::Uniform => "uniform",
            AgentKind::Oracle => "oracle",
        }
    }

    pub fn is_falcon(self) -> bool {
        matches!(self, AgentKind::EpsilonFalcon | AgentKind::Falcon)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "epsilon_falcon" => Ok(AgentKind::EpsilonFalcon),
            "falcon" => Ok(AgentKind::Falcon),
            "lin_ucb" | "linucb" => Ok(AgentKind::LinUcb),
            "uniform" => Ok(AgentKind::Uniform),
            "oracle" => Ok(AgentKind::Oracle),
            other => Err(format!("unknown agent kind `{other}`")),
        }
    }
}

/// Passive fraction: fixed, or tuned from the environment's closed-form `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonChoice {
    Fixed(f64),
    /// `tune_epsilon(b, K, 1)`.
    Tuned,
}

impl fmt::Display for EpsilonChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsilonChoice::Fixed(v) => write!(f, "{v}"),
            EpsilonChoice::Tuned => f.write_str("auto"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentParams {
    pub epsilon: EpsilonChoice,
    pub delta: f64,
    pub tau1: u64,
    pub c1: f64,
    pub c3: f64,
    pub rho: f64,
    pub rho_prime: f64,
    /// Model-class complexity; `None` means the parameter count `K·(d+1)`.
    pub comp: Option<f64>,
    pub alpha_ucb: f64,
    pub ridge: f64,
    pub batch_size: u64,
}

impl Default for AgentParams {
    fn default() -> Self {
        let ucb = LinUcbConfig::default();
        Self {
            epsilon: EpsilonChoice::Fixed(0.1),
            delta: 0.1,
            tau1: 4,
            c1: 1.0,
            c3: 1.0,
            rho: 1.0,
            rho_prime: 0.0,
            comp: None,
            alpha_ucb: ucb.alpha,
            ridge: ucb.ridge,
            batch_size: ucb.batch_size,
        }
    }
}

impl AgentParams {
    pub fn rates(&self, num_params: usize) -> RateParams {
        RateParams {
            rho: self.rho,
            rho_prime: self.rho_prime,
            comp: self.comp.unwrap_or(num_params as f64),
            c1: self.c1,
            c3: self.c3,
            delta: self.delta,
        }
    }

    pub fn lin_ucb(&self) -> LinUcbConfig {
        LinUcbConfig { alpha: self.alpha_ucb, ridge: self.ridge, batch_size: self.batch_size }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Environment; its `seed` is replaced by the run seed.
    pub env: EnvSpec,
    pub agent: AgentKind,
    pub params: AgentParams,
    pub horizon: u64,
    pub replications: usize,
    pub base_seed: u64,
    pub mc_samples: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvSpec::step_function(),
            agent: AgentKind::EpsilonFalcon,
            params: AgentParams::default(),
            horizon: 10_000,
            replications: 1,
            base_seed: 0,
            mc_samples: DEFAULT_MC,
            output_dir: None,
        }
    }
}

/// A rejected field and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("invalid configuration:\n  {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n  "))]
    Invalid(Vec<FieldError>),
}

const KEYS: &[&str] = &[
    "env.kind",
    "env.theta",
    "env.noise_sd",
    "env.num_arms",
    "env.context_dim",
    "env.clip_rewards",
    "agent.kind",
    "agent.epsilon",
    "agent.delta",
    "agent.tau1",
    "agent.c1",
    "agent.c3",
    "agent.rho",
    "agent.rho_prime",
    "agent.comp",
    "agent.alpha_ucb",
    "agent.ridge",
    "agent.batch_size",
    "run.horizon",
    "run.replications",
    "run.base_seed",
    "run.mc_samples",
    "run.output_dir",
];

impl RunConfig {
    /// Parses and validates. Kind-dependent defaults (arm count, context
    /// dimension) follow `env.kind` unless given explicitly.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: BTreeMap<&str, &str> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                return Err(ConfigError::UnknownKey { line: i + 1, key: key.to_string() });
            };
            if entries.insert(known, value).is_some() {
                return Err(ConfigError::Duplicate { line: i + 1, key: key.to_string() });
            }
        }

        let mut errors = Vec::new();
        let mut field = |key: &str, value: &str, message: String| {
            errors.push(FieldError { field: key.to_string(), message: format!("`{value}`: {message}") });
        };
        macro_rules! get {
            ($key:literal, $default:expr) => {
                match entries.get($key) {
                    None => $default,
                    Some(v) => match v.parse() {
                        Ok(parsed) => parsed,
                        Err(e) => {
                            field($key, v, format!("{e}"));
                            $default
                        }
                    },
                }
            };
        }

        let defaults = RunConfig::default();
        let kind: EnvKind = get!("env.kind", EnvKind::StepFunction);
        let mut env = match kind {
            EnvKind::StepFunction => EnvSpec::step_function(),
            EnvKind::SensitivityFamily => EnvSpec::sensitivity_family(0.05),
            EnvKind::RealizableLinear => EnvSpec::realizable_linear(2, 1),
        };
        env.theta = match entries.get("env.theta") {
            None => env.theta,
            Some(v) => match v.parse::<f64>() {
                Ok(t) => Some(t),
                Err(e) => {
                    field("env.theta", v, e.to_string());
                    env.theta
                }
            },
        };
        env.noise_sd = get!("env.noise_sd", env.noise_sd);
        env.num_arms = get!("env.num_arms", env.num_arms);
        env.context_dim = get!("env.context_dim", env.context_dim);
        env.clip_rewards = get!("env.clip_rewards", env.clip_rewards);

        let p = defaults.params;
        let epsilon = match entries.get("agent.epsilon") {
            None => p.epsilon,
            Some(&"auto") => EpsilonChoice::Tuned,
            Some(v) => match v.parse::<f64>() {
                Ok(e) => EpsilonChoice::Fixed(e),
                Err(e) => {
                    field("agent.epsilon", v, format!("{e}; expected a number or `auto`"));
                    p.epsilon
                }
            },
        };
        let comp = match entries.get("agent.comp") {
            None | Some(&"auto") => None,
            Some(v) => match v.parse::<f64>() {
                Ok(c) => Some(c),
                Err(e) => {
                    field("agent.comp", v, format!("{e}; expected a number or `auto`"));
                    None
                }
            },
        };
        let params = AgentParams {
            epsilon,
            delta: get!("agent.delta", p.delta),
            tau1: get!("agent.tau1", p.tau1),
            c1: get!("agent.c1", p.c1),
            c3: get!("agent.c3", p.c3),
            rho: get!("agent.rho", p.rho),
            rho_prime: get!("agent.rho_prime", p.rho_prime),
            comp,
            alpha_ucb: get!("agent.alpha_ucb", p.alpha_ucb),
            ridge: get!("agent.ridge", p.ridge),
            batch_size: get!("agent.batch_size", p.batch_size),
        };
        let agent = match entries.get("agent.kind") {
            None => defaults.agent,
            Some(v) => v.parse().unwrap_or_else(|e| {
                field("agent.kind", v, e);
                defaults.agent
            }),
        };
        let config = RunConfig {
            env,
            agent,
            params,
            horizon: get!("run.horizon", defaults.horizon),
            replications: get!("run.replications", defaults.replications),
            base_seed: get!("run.base_seed", defaults.base_seed),
            mc_samples: get!("run.mc_samples", defaults.mc_samples),
            output_dir: entries.get("run.output_dir").map(PathBuf::from),
        };
        if !errors.is_empty() {
            return Err(ConfigError::Invalid(errors));
        }
        config.validate()?;
        Ok(config)
    }

    /// Every key with its current value, in a stable order.
    pub fn serialize(&self) -> String {
        let e = &self.env;
        let p = &self.params;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        put("env.kind", e.kind.to_string());
        if let Some(t) = e.theta {
            put("env.theta", t.to_string());
        }
        put("env.noise_sd", e.noise_sd.to_string());
        put("env.num_arms", e.num_arms.to_string());
        put("env.context_dim", e.context_dim.to_string());
        put("env.clip_rewards", e.clip_rewards.to_string());
        put("agent.kind", self.agent.to_string());
        put("agent.epsilon", p.epsilon.to_string());
        put("agent.delta", p.delta.to_string());
        put("agent.tau1", p.tau1.to_string());
        put("agent.c1", p.c1.to_string());
        put("agent.c3", p.c3.to_string());
        put("agent.rho", p.rho.to_string());
        put("agent.rho_prime", p.rho_prime.to_string());
        put("agent.comp", p.comp.map_or("auto".to_string(), |c| c.to_string()));
        put("agent.alpha_ucb", p.alpha_ucb.to_string());
        put("agent.ridge", p.ridge.to_string());
        put("agent.batch_size", p.batch_size.to_string());
        put("run.horizon", self.horizon.to_string());
        put("run.replications", self.replications.to_string());
        put("run.base_seed", self.base_seed.to_string());
        put("run.mc_samples", self.mc_samples.to_string());
        if let Some(dir) = &self.output_dir {
            put("run.output_dir", dir.display().to_string());
        }
        out
    }

    /// Collects every problem, each tagged with its field name.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        let mut bad = |field: &str, message: String| {
            errors.push(FieldError { field: field.to_string(), message });
        };
        if let Err(e) = self.env.validate() {
            bad("env", e.to_string());
        }
        let p = &self.params;
        if let EpsilonChoice::Fixed(eps) = p.epsilon {
            if !(0.0..0.5).contains(&eps) {
                bad("agent.epsilon", format!("must lie in [0, 0.5), got {eps}"));
            }
        }
        if !(p.delta > 0.0 && p.delta <= 0.5) {
            bad("agent.delta", format!("must lie in (0, 0.5], got {}", p.delta));
        }
        if p.tau1 < 4 {
            bad("agent.tau1", format!("must be >= 4, got {}", p.tau1));
        }
        for (name, v) in [("agent.c1", p.c1), ("agent.c3", p.c3), ("agent.ridge", p.ridge)] {
            if !(v > 0.0 && v.is_finite()) {
                bad(name, format!("must be positive, got {v}"));
            }
        }
        if !(p.rho > 0.0 && p.rho <= 1.0) {
            bad("agent.rho", format!("must lie in (0, 1], got {}", p.rho));
        }
        if !(p.rho_prime >= 0.0 && p.rho_prime.is_finite()) {
            bad("agent.rho_prime", format!("must be >= 0, got {}", p.rho_prime));
        }
        if let Some(c) = p.comp {
            if !(c > 0.0 && c.is_finite()) {
                bad("agent.comp", format!("must be positive, got {c}"));
            }
        }
        if !(p.alpha_ucb >= 0.0 && p.alpha_ucb.is_finite()) {
            bad("agent.alpha_ucb", format!("must be >= 0, got {}", p.alpha_ucb));
        }
        if p.batch_size < 1 {
            bad("agent.batch_size", "must be >= 1".into());
        }
        if self.horizon < 1 {
            bad("run.horizon", "must be >= 1".into());
        }
        if self.replications < 1 {
            bad("run.replications", "must be >= 1".into());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errors))
        }
    }
}

impl FromStr for RunConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Self::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_from_empty_text() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
        assert_eq!(RunConfig::parse("# nothing\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn parses_sections() {
        let text = "env.kind = sensitivity\nenv.theta = 0.02\nagent.kind = lin_ucb\nagent.batch_size=50\nrun.horizon = 300\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.env, EnvSpec::sensitivity_family(0.02));
        assert_eq!(c.agent, AgentKind::LinUcb);
        assert_eq!(c.params.batch_size, 50);
        assert_eq!(c.horizon, 300);
    }

    #[test]
    fn kind_sets_shape_defaults() {
        let c = RunConfig::parse("env.kind = realizable_linear\nenv.num_arms = 4\nenv.context_dim = 3").unwrap();
        assert_eq!(c.env, EnvSpec::realizable_linear(4, 3));
        assert_eq!(c.params.rates(16).comp, 16.0);
    }

    #[test]
    fn tuned_epsilon_and_comp_keywords() {
        let c = RunConfig::parse("agent.epsilon = auto\nagent.comp = 2.5").unwrap();
        assert_eq!(c.params.epsilon, EpsilonChoice::Tuned);
        assert_eq!(c.params.comp, Some(2.5));
    }

    #[test]
    fn lists_every_bad_field() {
        let err = RunConfig::parse("agent.epsilon = 0.7\nagent.delta = 0.9\nagent.tau1 = 2\nrun.horizon = 0").unwrap_err();
        let ConfigError::Invalid(fields) = err else { panic!("{err:?}") };
        let names: Vec<&str> = fields.iter().map(|f| f.field.as_str()).collect();
        assert_eq!(names, vec!["agent.epsilon", "agent.delta", "agent.tau1", "run.horizon"]);
    }

    #[test]
    fn unparsable_values_name_their_field() {
        let err = RunConfig::parse("run.horizon = lots\nagent.kind = greedy").unwrap_err();
        let ConfigError::Invalid(fields) = err else { panic!("{err:?}") };
        assert_eq!(fields.len(), 2);
        assert!(fields.iter().any(|f| f.field == "run.horizon"));
        assert!(fields.iter().any(|f| f.field == "agent.kind"));
    }

    #[test]
    fn syntax_errors() {
        assert!(matches!(RunConfig::parse("env.kind"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(RunConfig::parse("\nenv.seed = 3"), Err(ConfigError::UnknownKey { line: 2, .. })));
        assert!(matches!(
            RunConfig::parse("run.horizon = 1\nrun.horizon = 2"),
            Err(ConfigError::Duplicate { line: 2, .. })
        ));
        assert!(RunConfig::parse("env.kind = step\nenv.theta = 0.01").is_err());
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        let env = prop_oneof![
            Just(EnvSpec::step_function()),
            (0.001f64..=0.05).prop_map(EnvSpec::sensitivity_family),
            (2usize..6, 1usize..5).prop_map(|(k, d)| EnvSpec::realizable_linear(k, d)),
        ];
        let agent = prop_oneof![
            Just(AgentKind::EpsilonFalcon),
            Just(AgentKind::Falcon),
            Just(AgentKind::LinUcb),
            Just(AgentKind::Uniform),
            Just(AgentKind::Oracle),
        ];
        let eps = prop_oneof![Just(EpsilonChoice::Tuned), (0.0f64..0.5).prop_map(EpsilonChoice::Fixed)];
        let params = (eps, 1e-3f64..=0.5, 4u64..100, 1e-3f64..10.0, 0.1f64..=1.0, proptest::option::of(0.5f64..20.0), 1u64..500)
            .prop_map(|(epsilon, delta, tau1, c1, rho, comp, batch_size)| AgentParams {
                epsilon,
                delta,
                tau1,
                c1,
                c3: c1 * 2.0,
                rho,
                rho_prime: rho / 3.0,
                comp,
                alpha_ucb: c1 / 7.0,
                ridge: 1.0 / c1,
                batch_size,
            });
        (env, 0.0f64..2.0, agent, params, 1u64..1_000_000, 1usize..200, any::<u64>(), proptest::option::of("[a-z]{1,8}"))
            .prop_map(|(mut env, noise, agent, params, horizon, replications, base_seed, dir)| {
                env.noise_sd = noise;
                RunConfig {
                    env,
                    agent,
                    params,
                    horizon,
                    replications,
                    base_seed,
                    mc_samples: replications * 100,
                    output_dir: dir.map(PathBuf::from),
                }
            })
    }

    proptest! {
        #[test]
        fn round_trip(config in arb_config()) {
            let text = config.serialize();
            prop_assert_eq!(RunConfig::parse(&text).unwrap(), config);
        }
    }
}
