//! Experiment configuration: flat structured text with dotted keys.
//!
//! ```text
//! # minimal config
//! task.kind = energy_degeneracy
//! method = qed
//! ```
//!
//! Every other key has a default, so the minimal config is {task, method}.
//! Unknown keys and malformed values are reported with their line number.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::game::{Channel, GoalKind, TaskKind};
use crate::qed::QedConfig;
use crate::report::Method;
use crate::training::{TrainConfig, OP_INIT_LOGIT_STD};

/// Where the other-play baseline takes its ground-truth symmetries from.
#[derive(Debug, Clone, PartialEq)]
pub enum SymmetrySource {
    /// Within-cost-class transpositions generated from the task.
    Analytic,
    /// A serialized mapping-set file.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task_kind: TaskKind,
    pub channel: Channel,
    pub goal_kind: GoalKind,
    pub method: Method,
    /// Number of training seeds (population size for qed).
    pub seeds: usize,
    pub base_seed: u64,
    pub train: TrainConfig,
    pub qed: QedConfig,
    pub filter_k_percent: f64,
    pub symmetry_source: SymmetrySource,
    pub export_traces: bool,
    pub export_policies: bool,
    pub export_heatmaps: bool,
    pub export_mappings: bool,
}

impl ExperimentConfig {
    /// Parse a config document; keys may appear in any order, later wins.
    pub fn parse(text: &str) -> Result<Self> {
        let entries = parse_entries(text)?;
        Self::from_entries(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    fn from_entries(entries: Vec<Entry>) -> Result<Self> {
        let mut map: BTreeMap<String, Entry> = BTreeMap::new();
        for entry in entries {
            map.insert(entry.key.clone(), entry);
        }

        let take = |map: &mut BTreeMap<String, Entry>, key: &str| map.remove(key);
        let task_kind = match take(&mut map, "task.kind") {
            Some(entry) => match entry.value.as_str() {
                "no_degeneracy" => TaskKind::NoDegeneracy,
                "energy_degeneracy" => TaskKind::EnergyDegeneracy,
                other => {
                    return Err(entry.error(format!(
                        "unknown task.kind '{other}' (expected no_degeneracy or energy_degeneracy)"
                    )))
                }
            },
            None => {
                return Err(Error::ConfigInvalid(
                    "missing required key task.kind".into(),
                ))
            }
        };
        let method = match take(&mut map, "method") {
            Some(entry) => Method::parse(&entry.value).ok_or_else(|| {
                entry.error(format!(
                    "unknown method '{}' (expected sp, sp_max_filter, op_given_symmetries, qed, or max_class)",
                    entry.value
                ))
            })?,
            None => return Err(Error::ConfigInvalid("missing required key method".into())),
        };

        let channel = match take(&mut map, "task.channel") {
            Some(entry) => match entry.value.as_str() {
                "costly" => Channel::Costly,
                "cheap_talk" => Channel::CheapTalk,
                other => return Err(entry.error(format!("unknown task.channel '{other}'"))),
            },
            None => Channel::Costly,
        };
        let goal_kind = match take(&mut map, "task.goal_kind") {
            Some(entry) => match entry.value.as_str() {
                "zipfian" => GoalKind::Zipfian,
                "uniform" => GoalKind::Uniform,
                other => return Err(entry.error(format!("unknown task.goal_kind '{other}'"))),
            },
            None => GoalKind::Zipfian,
        };

        let task = crate::game::build_task(task_kind, channel, goal_kind);
        let base_seed = parse_or(&mut map, "seed", 0u64)?;
        let default_seeds = match method {
            Method::SpMaxFilter => 100,
            _ => 10,
        };
        let seeds = parse_or(&mut map, "seeds", default_seeds)?;

        let mut train = TrainConfig::for_task(&task, base_seed);
        if matches!(method, Method::OpGivenSymmetries) {
            train.init_std = OP_INIT_LOGIT_STD;
        }
        train.learning_rate = parse_or(&mut map, "train.learning_rate", train.learning_rate)?;
        train.iterations = parse_or(&mut map, "train.iterations", train.iterations)?;
        train.entropy_weight = parse_or(&mut map, "train.entropy_weight", train.entropy_weight)?;
        train.energy_weight = parse_or(&mut map, "train.energy_weight", train.energy_weight)?;
        train.init_std = parse_or(&mut map, "train.init_std", train.init_std)?;

        let mut qed = QedConfig::for_task(&task, base_seed);
        qed.train = TrainConfig {
            init_std: qed.train.init_std,
            seed: base_seed,
            ..train
        };
        qed.train.init_std = parse_or(&mut map, "qed.train.init_std", qed.train.init_std)?;
        qed.population = parse_or(&mut map, "qed.population", seeds)?;
        qed.epsilon = parse_or(&mut map, "qed.epsilon", qed.epsilon)?;
        qed.max_outer_iterations = parse_or(
            &mut map,
            "qed.max_outer_iterations",
            qed.max_outer_iterations,
        )?;
        qed.filter_before_extraction = parse_or(
            &mut map,
            "qed.filter_before_extraction",
            qed.filter_before_extraction,
        )?;
        qed.closure = parse_or(&mut map, "qed.closure", qed.closure)?;

        let mut mapping = qed.mapping;
        mapping.steps = parse_or(&mut map, "map.steps", mapping.steps)?;
        mapping.learning_rate = parse_or(&mut map, "map.learning_rate", mapping.learning_rate)?;
        mapping.accept_threshold =
            parse_or(&mut map, "map.accept_threshold", mapping.accept_threshold)?;
        mapping.init_noise_std = parse_or(&mut map, "map.init_noise_std", mapping.init_noise_std)?;
        mapping.init_identity_bias = parse_or(
            &mut map,
            "map.init_identity_bias",
            mapping.init_identity_bias,
        )?;
        mapping.seed = parse_or(&mut map, "map.seed", base_seed)?;
        qed.mapping = mapping;

        let filter_k_percent = parse_or(&mut map, "filter.k_percent", 10.0)?;
        let symmetry_source = match take(&mut map, "op.symmetries") {
            Some(entry) if entry.value == "analytic" => SymmetrySource::Analytic,
            Some(entry) => SymmetrySource::File(PathBuf::from(entry.value)),
            None => SymmetrySource::Analytic,
        };

        let export_traces = parse_or(&mut map, "export.traces", true)?;
        let export_policies = parse_or(&mut map, "export.policies", true)?;
        let export_heatmaps = parse_or(&mut map, "export.heatmaps", false)?;
        let export_mappings = parse_or(&mut map, "export.mappings", true)?;

        if let Some((_, entry)) = map.pop_first() {
            return Err(entry.error(format!("unknown key '{}'", entry.key)));
        }

        let config = ExperimentConfig {
            task_kind,
            channel,
            goal_kind,
            method,
            seeds,
            base_seed,
            train,
            qed,
            filter_k_percent,
            symmetry_source,
            export_traces,
            export_policies,
            export_heatmaps,
            export_mappings,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::ConfigInvalid("seeds must be at least 1".into()));
        }
        match self.method {
            Method::Qed => {
                if self.qed.population < 2 {
                    return Err(Error::ConfigInvalid(
                        "method qed requires a population of at least 2 (cross-play needs pairs)"
                            .into(),
                    ));
                }
                self.qed
                    .validate()
                    .map_err(|e| Error::ConfigInvalid(e.to_string()))?;
            }
            Method::Sp | Method::SpMaxFilter | Method::OpGivenSymmetries => {
                if self.seeds < 2 {
                    return Err(Error::ConfigInvalid(
                        "cross-play statistics require at least 2 seeds".into(),
                    ));
                }
                self.train
                    .validate()
                    .map_err(|e| Error::ConfigInvalid(e.to_string()))?;
                if self.method == Method::SpMaxFilter
                    && !(self.filter_k_percent > 0.0 && self.filter_k_percent <= 100.0)
                {
                    return Err(Error::ConfigInvalid(
                        "filter.k_percent must be in (0, 100]".into(),
                    ));
                }
            }
            Method::MaxClass => {}
        }
        Ok(())
    }

    pub fn task(&self) -> crate::game::TaskSpec {
        crate::game::build_task(self.task_kind, self.channel, self.goal_kind)
    }

    /// Shift every seed in the config; replicate batches share a config
    /// file and differ only in the offset.
    pub fn apply_seed_offset(&mut self, offset: u64) {
        if offset == 0 {
            return;
        }
        self.base_seed = self.base_seed.wrapping_add(offset);
        self.train.seed = self.train.seed.wrapping_add(offset);
        self.qed.base_seed = self.qed.base_seed.wrapping_add(offset);
        self.qed.train.seed = self.qed.train.seed.wrapping_add(offset);
        self.qed.mapping.seed = self.qed.mapping.seed.wrapping_add(offset);
    }

    /// Directory name for this experiment's outputs.
    pub fn slug(&self) -> String {
        format!(
            "{}-{}-{}-{}",
            self.method.as_str(),
            self.task_kind.as_str(),
            self.channel.as_str(),
            self.goal_kind.as_str()
        )
    }
}

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    key: String,
    value: String,
}

impl Entry {
    fn error(&self, msg: String) -> Error {
        Error::ConfigParse {
            line: self.line,
            msg,
        }
    }
}

fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::ConfigParse {
                line,
                msg: format!("expected 'key = value', got '{content}'"),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(Error::ConfigParse {
                line,
                msg: "empty key".into(),
            });
        }
        if value.is_empty() {
            return Err(Error::ConfigParse {
                line,
                msg: format!("empty value for key '{key}'"),
            });
        }
        entries.push(Entry { line, key, value });
    }
    Ok(entries)
}

trait FromConfigValue: Sized {
    fn from_value(s: &str) -> Option<Self>;
}

impl FromConfigValue for f64 {
    fn from_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}
impl FromConfigValue for u64 {
    fn from_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}
impl FromConfigValue for usize {
    fn from_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}
impl FromConfigValue for bool {
    fn from_value(s: &str) -> Option<Self> {
        match s {
            "true" | "yes" | "on" | "1" => Some(true),
            "false" | "no" | "off" | "0" => Some(false),
            _ => None,
        }
    }
}

fn parse_or<T: FromConfigValue>(
    map: &mut BTreeMap<String, Entry>,
    key: &str,
    default: T,
) -> Result<T> {
    match map.remove(key) {
        Some(entry) => T::from_value(&entry.value)
            .ok_or_else(|| entry.error(format!("invalid value '{}' for {key}", entry.value))),
        None => Ok(default),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::parse("task.kind = energy_degeneracy\nmethod = qed\n").unwrap();
        assert_eq!(cfg.task_kind, TaskKind::EnergyDegeneracy);
        assert_eq!(cfg.method, Method::Qed);
        assert_eq!(cfg.channel, Channel::Costly);
        assert_eq!(cfg.goal_kind, GoalKind::Zipfian);
        assert_eq!(cfg.qed.population, 10);
        assert_eq!(cfg.train.iterations, 10000);
        assert_eq!(cfg.qed.train.init_std, OP_INIT_LOGIT_STD);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "\n# a comment\ntask.kind = no_degeneracy # trailing\n\nmethod = sp\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.task_kind, TaskKind::NoDegeneracy);
        assert_eq!(cfg.train.iterations, 5000);
    }

    #[test]
    fn unknown_key_is_line_anchored() {
        let text = "task.kind = no_degeneracy\nmethod = sp\nbogus.key = 3\n";
        let err = ExperimentConfig::parse(text).unwrap_err();
        match err {
            Error::ConfigParse { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("bogus.key"));
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn bad_value_is_line_anchored() {
        let text = "task.kind = no_degeneracy\nmethod = sp\nseeds = many\n";
        let err = ExperimentConfig::parse(text).unwrap_err();
        match err {
            Error::ConfigParse { line, .. } => assert_eq!(line, 3),
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn qed_population_one_is_rejected() {
        let text = "task.kind = no_degeneracy\nmethod = qed\nseeds = 1\n";
        assert!(ExperimentConfig::parse(text).is_err());
    }

    #[test]
    fn missing_required_keys_fail() {
        assert!(ExperimentConfig::parse("method = sp\n").is_err());
        assert!(ExperimentConfig::parse("task.kind = no_degeneracy\n").is_err());
    }

    #[test]
    fn sp_max_filter_defaults_to_hundred_seeds() {
        let cfg =
            ExperimentConfig::parse("task.kind = energy_degeneracy\nmethod = sp_max_filter\n")
                .unwrap();
        assert_eq!(cfg.seeds, 100);
        assert_eq!(cfg.filter_k_percent, 10.0);
    }
}
