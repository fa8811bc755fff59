//! Config-driven experiment execution: runs a method over its seeds,
//! assembles the report, and writes the output directory layout.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SymmetrySource};
use crate::error::{Error, Result};
use crate::eval::{crossplay_matrix, info_decomposition, max_class_baseline};
use crate::game::{Channel, GoalKind, TaskKind, TaskSpec};
use crate::policy::{accuracy, confusion, confusion_pair, JointPolicy};
use crate::qed::{qed_run, sp_score, xp_score, QedConfig};
use crate::report::{
    aggregate, matrix_to_csv, render_table, rows_to_csv, trace_to_csv, ExperimentReport,
    MappingRecord, Method, SeedRecord,
};
use crate::symmetry::{ground_truth_mappings, MappingSet};
use crate::training::{max_filter_by_objective, op_loss, train, TrainConfig, TrainedRun};

/// Serialized single-policy document: logits plus the task it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDoc {
    pub task_fingerprint: String,
    pub policy: JointPolicy,
}

/// Run-environment sidecar; everything non-deterministic lives here, never
/// in the report itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool_version: String,
    pub unix_timestamp: u64,
    pub workers: usize,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let task = config.task();
    match config.method {
        Method::Sp => run_trained(config, &task, identity_maps(&task), Method::Sp, false),
        Method::SpMaxFilter => run_trained(
            config,
            &task,
            identity_maps(&task),
            Method::SpMaxFilter,
            true,
        ),
        Method::OpGivenSymmetries => {
            let maps = load_symmetries(config, &task)?;
            run_trained(config, &task, maps, Method::OpGivenSymmetries, false)
        }
        Method::Qed => run_qed(config, &task),
        Method::MaxClass => Ok(max_class_report(&task)),
    }
}

fn identity_maps(task: &TaskSpec) -> MappingSet {
    MappingSet::identity(task.num_goals(), task.num_actions())
}

fn load_symmetries(config: &ExperimentConfig, task: &TaskSpec) -> Result<MappingSet> {
    match &config.symmetry_source {
        SymmetrySource::Analytic => Ok(ground_truth_mappings(task)),
        SymmetrySource::File(path) => {
            let text = std::fs::read_to_string(path)?;
            let set: MappingSet = serde_json::from_str(&text)?;
            for map in set.iter() {
                if !crate::symmetry::is_equivalence(
                    map,
                    task,
                    crate::symmetry::DEFAULT_EQUIVALENCE_TOL,
                ) {
                    return Err(Error::invalid(format!(
                        "mapping file {} contains a map violating task symmetries",
                        path.display()
                    )));
                }
            }
            Ok(set)
        }
    }
}

fn train_population(
    config: &ExperimentConfig,
    task: &TaskSpec,
    maps: &MappingSet,
) -> Result<Vec<TrainedRun>> {
    let seeds: Vec<u64> = (0..config.seeds as u64)
        .map(|i| config.base_seed + i)
        .collect();
    let runs: Vec<Result<TrainedRun>> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = TrainConfig {
                seed,
                ..config.train
            };
            let result = train(task, maps, &cfg)?;
            let sp_accuracy = accuracy(&result.policy, task.goal_dist());
            Ok(TrainedRun {
                seed,
                policy: result.policy,
                sp_accuracy,
                trace: result.trace,
            })
        })
        .collect();
    runs.into_iter().collect()
}

fn run_trained(
    config: &ExperimentConfig,
    task: &TaskSpec,
    maps: MappingSet,
    method: Method,
    filter: bool,
) -> Result<ExperimentReport> {
    let runs = train_population(config, task, &maps)?;
    let population = if filter {
        max_filter_by_objective(&runs, config.filter_k_percent, task, &config.train)?
    } else {
        runs
    };
    let mappings = if method == Method::OpGivenSymmetries {
        Some(
            maps.iter()
                .map(|m| MappingRecord {
                    map: m.clone(),
                    provenance: None,
                })
                .collect(),
        )
    } else {
        None
    };
    build_report(
        config, task, method, &maps, population, mappings, None, None,
    )
}

fn run_qed(config: &ExperimentConfig, task: &TaskSpec) -> Result<ExperimentReport> {
    let mut qed_cfg: QedConfig = config.qed.clone();
    qed_cfg.base_seed = config.base_seed;
    let result = qed_run(task, &qed_cfg)?;
    let mut mappings: Vec<MappingRecord> = Vec::with_capacity(result.mapping_set.len());
    for map in result.mapping_set.iter() {
        let provenance = result
            .provenance
            .iter()
            .find(|(m, _)| m == map)
            .map(|(_, p)| p.clone());
        mappings.push(MappingRecord {
            map: map.clone(),
            provenance,
        });
    }
    build_report(
        config,
        task,
        Method::Qed,
        &result.mapping_set,
        result.population,
        Some(mappings),
        Some(result.outer_trace),
        Some(result.converged),
    )
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    config: &ExperimentConfig,
    task: &TaskSpec,
    method: Method,
    loss_maps: &MappingSet,
    population: Vec<TrainedRun>,
    mappings: Option<Vec<MappingRecord>>,
    outer_trace: Option<Vec<crate::qed::OuterRecord>>,
    converged: Option<bool>,
) -> Result<ExperimentReport> {
    let policies: Vec<JointPolicy> = population.iter().map(|r| r.policy.clone()).collect();
    let (sp_mean, sp_std) = sp_score(&policies, task.goal_dist());
    let (xp_mean, xp_std) = xp_score(&policies, task.goal_dist())?;
    let cross = crossplay_matrix(&policies, task.goal_dist());
    let crossplay: Vec<Vec<f64>> = (0..cross.rows()).map(|i| cross.row(i).to_vec()).collect();

    // Diagnostics use the task's cost-class orbits: the environmental
    // equivalence structure the protocol is supposed to exploit.
    let class_maps = ground_truth_mappings(task);
    let diagnostics = policies
        .iter()
        .map(|p| info_decomposition(p, &class_maps, task))
        .collect();

    let loss_cfg = TrainConfig {
        seed: config.base_seed,
        ..config.train
    };
    let per_seed = population
        .iter()
        .map(|run| {
            let final_loss = op_loss(&run.policy, task, loss_maps, &loss_cfg).ok();
            SeedRecord {
                seed: run.seed,
                sp_accuracy: run.sp_accuracy,
                final_loss,
                policy: config.export_policies.then(|| run.policy.clone()),
            }
        })
        .collect();
    let traces = config
        .export_traces
        .then(|| population.iter().map(|r| r.trace.clone()).collect());

    Ok(ExperimentReport {
        method,
        task: task.clone(),
        task_fingerprint: task.fingerprint(),
        train_config: if method == Method::Qed {
            config.qed.train
        } else {
            config.train
        },
        qed_config: (method == Method::Qed).then(|| config.qed.clone()),
        n: population.len(),
        per_seed,
        sp_mean,
        sp_std,
        xp_mean,
        xp_std,
        crossplay,
        diagnostics,
        mappings,
        outer_trace,
        converged,
        traces,
    })
}

fn max_class_report(task: &TaskSpec) -> ExperimentReport {
    let baseline = max_class_baseline(task.goal_dist());
    ExperimentReport {
        method: Method::MaxClass,
        task: task.clone(),
        task_fingerprint: task.fingerprint(),
        train_config: TrainConfig::for_task(task, 0),
        qed_config: None,
        n: 0,
        per_seed: vec![],
        sp_mean: baseline,
        sp_std: 0.0,
        xp_mean: baseline,
        xp_std: 0.0,
        crossplay: vec![],
        diagnostics: vec![],
        mappings: None,
        outer_trace: None,
        converged: None,
        traces: None,
    }
}

/// Write the full output layout for one experiment:
///
/// ```text
/// <out>/<method>-<task>-<channel>-<goal_kind>/
///   report.json     deterministic result document
///   meta.json       wall-clock sidecar
///   traces/         per-seed loss curves (CSV)
///   policies/       per-seed policy snapshots (JSON)
///   maps/           mapping set with provenance (JSON)
///   heatmaps/       sender/receiver/confusion matrices (CSV)
/// ```
pub fn write_outputs(
    report: &ExperimentReport,
    config: &ExperimentConfig,
    out_dir: &Path,
    workers: usize,
) -> Result<PathBuf> {
    let dir = out_dir.join(config.slug());
    std::fs::create_dir_all(&dir)?;
    report.save(&dir.join("report.json"))?;

    let meta = RunMeta {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        unix_timestamp: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        workers,
    };
    std::fs::write(
        dir.join("meta.json"),
        serde_json::to_string_pretty(&meta)? + "\n",
    )?;

    if let Some(traces) = &report.traces {
        let trace_dir = dir.join("traces");
        std::fs::create_dir_all(&trace_dir)?;
        for (record, trace) in report.per_seed.iter().zip(traces) {
            std::fs::write(
                trace_dir.join(format!("seed_{}.csv", record.seed)),
                trace_to_csv(trace),
            )?;
        }
    }

    if config.export_policies {
        let policy_dir = dir.join("policies");
        std::fs::create_dir_all(&policy_dir)?;
        for record in &report.per_seed {
            if let Some(policy) = &record.policy {
                let doc = PolicyDoc {
                    task_fingerprint: report.task_fingerprint.clone(),
                    policy: policy.clone(),
                };
                std::fs::write(
                    policy_dir.join(format!("seed_{}.json", record.seed)),
                    serde_json::to_string_pretty(&doc)? + "\n",
                )?;
            }
        }
    }

    if config.export_mappings {
        if let Some(mappings) = &report.mappings {
            let map_dir = dir.join("maps");
            std::fs::create_dir_all(&map_dir)?;
            std::fs::write(
                map_dir.join("mappings.json"),
                serde_json::to_string_pretty(mappings)? + "\n",
            )?;
        }
    }

    if config.export_heatmaps && !report.per_seed.is_empty() {
        let partner = if report.per_seed.len() > 1 { 1 } else { 0 };
        export_heatmaps(report, 0, partner, &dir.join("heatmaps"))?;
    }

    Ok(dir)
}

/// Write sender/receiver/confusion CSV matrices for one seed, plus the
/// cross-play confusion against a partner seed.
pub fn export_heatmaps(
    report: &ExperimentReport,
    seed_index: usize,
    partner_index: usize,
    out_dir: &Path,
) -> Result<()> {
    let snapshot = |index: usize| -> Result<&JointPolicy> {
        let record = report.per_seed.get(index).ok_or_else(|| {
            Error::Report(format!(
                "seed index {index} out of range (report has {} seeds)",
                report.per_seed.len()
            ))
        })?;
        record.policy.as_ref().ok_or_else(|| {
            Error::Report(format!(
                "report has no policy snapshot for seed index {index} (re-run with export.policies = true)"
            ))
        })
    };
    let policy = snapshot(seed_index)?;
    let partner = snapshot(partner_index)?;

    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join(format!("sender_seed{seed_index}.csv")),
        matrix_to_csv(&policy.sender_probs(), "goal", "action"),
    )?;
    std::fs::write(
        out_dir.join(format!("receiver_seed{seed_index}.csv")),
        matrix_to_csv(&policy.receiver_probs(), "action", "goal"),
    )?;
    std::fs::write(
        out_dir.join(format!("confusion_seed{seed_index}.csv")),
        matrix_to_csv(confusion(policy).entries(), "true_goal", "predicted"),
    )?;
    let xp_conf = confusion_pair(policy, partner)?;
    std::fs::write(
        out_dir.join(format!(
            "xp_confusion_seed{seed_index}_vs{partner_index}.csv"
        )),
        matrix_to_csv(xp_conf.entries(), "true_goal", "predicted"),
    )?;
    Ok(())
}

/// The four ablation cells, in fixed order: (channel, goal_kind).
pub const ABLATION_CELLS: [(Channel, GoalKind); 4] = [
    (Channel::Costly, GoalKind::Zipfian),
    (Channel::Costly, GoalKind::Uniform),
    (Channel::CheapTalk, GoalKind::Zipfian),
    (Channel::CheapTalk, GoalKind::Uniform),
];

/// Run the 2x2 ablation grid (channel x goal distribution) with shared
/// seeds; returns one report per cell.
pub fn run_ablation(base: &ExperimentConfig) -> Result<Vec<ExperimentReport>> {
    if base.method != Method::Qed {
        return Err(Error::ConfigInvalid("ablate requires method = qed".into()));
    }
    if base.task_kind != TaskKind::EnergyDegeneracy {
        return Err(Error::ConfigInvalid(
            "ablate requires task.kind = energy_degeneracy".into(),
        ));
    }
    let mut reports = Vec::with_capacity(ABLATION_CELLS.len());
    for (channel, goal_kind) in ABLATION_CELLS {
        let mut cell = base.clone();
        cell.channel = channel;
        cell.goal_kind = goal_kind;
        reports.push(run_experiment(&cell)?);
    }
    Ok(reports)
}

/// Aggregate reports into the combined CSV + rendered text table.
pub fn write_combined_table(reports: &[&ExperimentReport], out_dir: &Path) -> Result<()> {
    let rows = aggregate(reports)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("table.csv"), rows_to_csv(&rows))?;
    std::fs::write(out_dir.join("table.txt"), render_table(&rows))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast_sp_config() -> ExperimentConfig {
        ExperimentConfig::parse(
            "task.kind = no_degeneracy\nmethod = sp\nseeds = 3\ntrain.iterations = 300\n",
        )
        .unwrap()
    }

    #[test]
    fn sp_report_has_consistent_statistics() {
        let config = fast_sp_config();
        let report = run_experiment(&config).unwrap();
        assert_eq!(report.n, 3);
        assert_eq!(report.per_seed.len(), 3);
        assert_eq!(report.crossplay.len(), 3);
        // Crossplay diagonal equals per-seed SP accuracies.
        for (i, record) in report.per_seed.iter().enumerate() {
            assert_eq!(
                report.crossplay[i][i].to_bits(),
                record.sp_accuracy.to_bits()
            );
        }
        // Means recomputable from per-seed records.
        let mean: f64 =
            report.per_seed.iter().map(|r| r.sp_accuracy).sum::<f64>() / report.n as f64;
        assert!((mean - report.sp_mean).abs() < 1e-12);
        // Off-diagonal mean reproduces xp_mean.
        let mut off = Vec::new();
        for i in 0..report.n {
            for j in 0..report.n {
                if i != j {
                    off.push(report.crossplay[i][j]);
                }
            }
        }
        let xp: f64 = off.iter().sum::<f64>() / off.len() as f64;
        assert!((xp - report.xp_mean).abs() < 1e-12);
    }

    #[test]
    fn outputs_layout_is_written() {
        let config = fast_sp_config();
        let report = run_experiment(&config).unwrap();
        let tmp = std::env::temp_dir().join(format!("qedcomm-runner-{}", std::process::id()));
        let dir = write_outputs(&report, &config, &tmp, 1).unwrap();
        assert!(dir.join("report.json").is_file());
        assert!(dir.join("meta.json").is_file());
        assert!(dir.join("traces/seed_0.csv").is_file());
        assert!(dir.join("policies/seed_2.json").is_file());
        let loaded = ExperimentReport::load(&dir.join("report.json")).unwrap();
        assert_eq!(loaded, report);
        std::fs::remove_dir_all(&tmp).ok();
    }

    #[test]
    fn max_class_report_uses_baseline() {
        let config =
            ExperimentConfig::parse("task.kind = no_degeneracy\nmethod = max_class\n").unwrap();
        let report = run_experiment(&config).unwrap();
        assert!((report.sp_mean - 0.43795620437956206).abs() < 1e-12);
        assert_eq!(report.sp_mean, report.xp_mean);
    }

    #[test]
    fn heatmap_export_requires_snapshots() {
        let mut config = fast_sp_config();
        config.export_policies = false;
        let report = run_experiment(&config).unwrap();
        let tmp = std::env::temp_dir().join(format!("qedcomm-heat-{}", std::process::id()));
        let err = export_heatmaps(&report, 0, 1, &tmp);
        assert!(err.is_err());
        let err = export_heatmaps(&report, 99, 0, &tmp);
        assert!(err.is_err());
        std::fs::remove_dir_all(&tmp).ok();
    }
}
