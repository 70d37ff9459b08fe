//! One function per pipeline stage. Each reads upstream artifacts from the
//! run directory, writes its own, and reports which files it touched.

use std::path::PathBuf;
use std::time::Instant;

use hhsae_core::data::{
    generate_synthetic_manifold, inverse_transform, preprocess_apply, preprocess_fit, stratified_split, Dataset,
    PreprocessStats,
};
use hhsae_core::discovery::{
    affinity_matrix, detect_modules, dominant_modules, encode_l2, module_metrics, semantic_profile, ConceptModule,
};
use hhsae_core::evaluation::{
    ablation_report, augmentation_experiment, hierarchical_utility_report, oversample_positives, AugmentationReport,
    ProbeReport,
};
use hhsae_core::model::ModelParams;
use hhsae_core::numerics::rng::{stream_rng, Stream};
use hhsae_core::synthesis::{derive_bias_profile, synthesize, CarrierStats, SnapBounds, SteeringSpec};
use hhsae_core::trainer::{diagnostics, train, TrainError};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::checkpoint::{self, Checkpoint};
use crate::config::{CohortRule, ProbeSplit, RunConfig};
use crate::csv_io::{read_dataset, write_dataset};
use crate::error::{CliError, Result};
use crate::run_dir::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Synthgen,
    Preprocess,
    Train,
    Inspect,
    Discover,
    Steer,
    Probe,
    Ablate,
    AugmentEval,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synthgen => "synthgen",
            Command::Preprocess => "preprocess",
            Command::Train => "train",
            Command::Inspect => "inspect",
            Command::Discover => "discover",
            Command::Steer => "steer",
            Command::Probe => "probe",
            Command::Ablate => "ablate",
            Command::AugmentEval => "augment-eval",
        }
    }
}

/// Files read and written by a command, plus a summary for stdout.
struct Outcome {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    summary: Value,
}

/// Runs `cmd` and records it in the manifest. Returns the summary.
pub fn run(cmd: Command, cfg: &RunConfig, dir: &RunDir) -> Result<Value> {
    let start = Instant::now();
    let out = match cmd {
        Command::Synthgen => synthgen(cfg, dir),
        Command::Preprocess => preprocess(cfg, dir),
        Command::Train => train_cmd(cfg, dir),
        Command::Inspect => inspect(cfg, dir),
        Command::Discover => discover(cfg, dir),
        Command::Steer => steer(cfg, dir),
        Command::Probe => probe(cfg, dir),
        Command::Ablate => ablate(cfg, dir),
        Command::AugmentEval => augment_eval(cfg, dir),
    }?;
    let mut manifest = Manifest::load(dir)?;
    manifest.commands.insert(
        cmd.name().to_string(),
        ManifestEntry {
            config: serde_json::to_value(cfg).expect("config serializes"),
            seed: cfg.seed,
            inputs: hash_map(dir, &out.inputs)?,
            outputs: hash_map(dir, &out.outputs)?,
            wall_time_seconds: start.elapsed().as_secs_f64(),
            finished_at_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        },
    );
    manifest.save(dir)?;
    Ok(out.summary)
}

fn split_seed(cfg: &RunConfig) -> u64 {
    stream_rng(cfg.seed, Stream::Split, 0).next_u64()
}

fn synthgen(cfg: &RunConfig, dir: &RunDir) -> Result<Outcome> {
    let (data, truth) = generate_synthetic_manifold(&cfg.generator.to_config(cfg.seed))?;
    let (test, train) = stratified_split(&data, cfg.data.test_fraction, split_seed(cfg))?;
    let label = &cfg.data.label_column;
    let train_p = dir.output(TRAIN_CSV)?;
    let test_p = dir.output(TEST_CSV)?;
    write_dataset(&train_p, &train, label)?;
    write_dataset(&test_p, &test, label)?;
    let truth_p = dir.write_json(GROUND_TRUTH, &truth)?;
    Ok(Outcome {
        inputs: vec![],
        outputs: vec![train_p, test_p, truth_p],
        summary: json!({
            "samples": data.len(),
            "features": data.n_features(),
            "positives": data.n_positive(),
            "train": train.len(),
            "test": test.len(),
        }),
    })
}

fn fit_stats(cfg: &RunConfig, dir: &RunDir, train: &Dataset) -> Result<PathBuf> {
    let stats = preprocess_fit(train, cfg.data.clip_quantiles, &cfg.data.log_features)?;
    dir.write_json(STATS, &stats)
}

fn preprocess(cfg: &RunConfig, dir: &RunDir) -> Result<Outcome> {
    let label = &cfg.data.label_column;
    let mut inputs = vec![];
    let mut outputs = vec![];
    let train = match &cfg.data.input {
        Some(src) => {
            let full = read_dataset(src, label)?;
            let (test, train) = stratified_split(&full, cfg.data.test_fraction, split_seed(cfg))?;
            let train_p = dir.output(TRAIN_CSV)?;
            let test_p = dir.output(TEST_CSV)?;
            write_dataset(&train_p, &train, label)?;
            write_dataset(&test_p, &test, label)?;
            inputs.push(src.clone());
            outputs.extend([train_p, test_p]);
            train
        }
        None => {
            let p = dir.require(TRAIN_CSV, "synthgen` or set `data.input` and run `hhsae preprocess")?;
            inputs.push(p.clone());
            read_dataset(&p, label)?
        }
    };
    let stats_p = fit_stats(cfg, dir, &train)?;
    outputs.push(stats_p);
    let degenerate: Vec<&str> = Vec::new();
    Ok(Outcome {
        inputs,
        outputs,
        summary: json!({ "train": train.len(), "features": train.n_features(), "degenerate": degenerate }),
    })
}

/// Raw split plus the preprocessing statistics (fitted on demand by
/// `train`).
struct Prepared {
    train: Dataset,
    test: Dataset,
    stats: PreprocessStats,
}

fn load_prepared(cfg: &RunConfig, dir: &RunDir, inputs: &mut Vec<PathBuf>) -> Result<Prepared> {
    let label = &cfg.data.label_column;
    let train_p = dir.require(TRAIN_CSV, "synthgen` or `hhsae preprocess")?;
    let test_p = dir.require(TEST_CSV, "synthgen` or `hhsae preprocess")?;
    let stats_p = dir.require(STATS, "train")?;
    let stats: PreprocessStats = dir.read_json(STATS, "preprocess")?;
    let train = preprocess_apply(&read_dataset(&train_p, label)?, &stats)?;
    let test = preprocess_apply(&read_dataset(&test_p, label)?, &stats)?;
    inputs.extend([train_p, test_p, stats_p]);
    Ok(Prepared { train, test, stats })
}

fn load_model(dir: &RunDir, inputs: &mut Vec<PathBuf>) -> Result<ModelParams> {
    let p = dir.path(CHECKPOINT);
    let ck = checkpoint::load(&p)?;
    inputs.push(p);
    Ok(ck.params)
}

#[derive(Serialize)]
struct EpochRow {
    epoch: usize,
    lr: f64,
    total: f64,
    recon: f64,
    smooth: f64,
    dir: f64,
    mag: f64,
    tax1: f64,
    tax2: f64,
    dead_l1: f64,
    dead_l2: f64,
    active_l1: f64,
    active_l2: f64,
    energy_l1: f64,
    energy_l2: f64,
    mse_pos: Option<f64>,
    mse_neg: Option<f64>,
}

fn train_cmd(cfg: &RunConfig, dir: &RunDir) -> Result<Outcome> {
    let mut inputs = vec![];
    let mut outputs = vec![];
    let label = &cfg.data.label_column;
    let train_p = dir.require(TRAIN_CSV, "synthgen` or `hhsae preprocess")?;
    let raw = read_dataset(&train_p, label)?;
    inputs.push(train_p);
    let stats_p = dir.path(STATS);
    if stats_p.exists() {
        inputs.push(stats_p.clone());
    } else {
        outputs.push(fit_stats(cfg, dir, &raw)?);
    }
    let stats: PreprocessStats = dir.read_json(STATS, "preprocess")?;
    let data = preprocess_apply(&raw, &stats)?;
    let tc = cfg.train_config(data.n_features());
    let outcome = match train(&data, &tc) {
        Ok(o) => o,
        Err(TrainError::Invalid(e)) => return Err(e.into()),
        Err(TrainError::Diverged(d)) => {
            let p = dir.output("checkpoint.diverged.hhsae")?;
            checkpoint::save(
                &p,
                &Checkpoint {
                    params: d.last_good.clone(),
                    optimizer: None,
                    train_config: Some(tc),
                },
            )?;
            return Err(CliError::Diverged {
                epoch: d.epoch,
                detail: d.detail,
            });
        }
    };
    let ck_p = dir.output(CHECKPOINT)?;
    checkpoint::save(
        &ck_p,
        &Checkpoint {
            params: outcome.params.clone(),
            optimizer: Some(outcome.optimizer),
            train_config: Some(tc),
        },
    )?;
    outputs.push(ck_p);

    let epochs_p = dir.output("reports/train_epochs.csv")?;
    let mut w = csv::Writer::from_path(&epochs_p).map_err(|e| CliError::format("csv", &epochs_p, e.to_string()))?;
    for r in &outcome.reports {
        w.serialize(EpochRow {
            epoch: r.epoch,
            lr: r.lr_used,
            total: r.loss.total,
            recon: r.loss.recon,
            smooth: r.loss.smooth,
            dir: r.loss.dir,
            mag: r.loss.mag,
            tax1: r.loss.tax1,
            tax2: r.loss.tax2,
            dead_l1: r.dead_feature_ratio_l1,
            dead_l2: r.dead_feature_ratio_l2,
            active_l1: r.active_fraction_l1,
            active_l2: r.active_fraction_l2,
            energy_l1: r.energy_l1,
            energy_l2: r.energy_l2,
            mse_pos: r.mse_pos,
            mse_neg: r.mse_neg,
        })
        .map_err(|e| CliError::format("csv", &epochs_p, e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(&epochs_p, e))?;
    outputs.push(epochs_p);
    let diag = diagnostics(&outcome.params, &data)?;
    outputs.push(dir.write_json("reports/train_diagnostics.json", &diag)?);
    let last = outcome.reports.last().expect("at least one epoch");
    Ok(Outcome {
        inputs,
        outputs,
        summary: json!({
            "epochs": outcome.reports.len(),
            "final_loss": last.loss.total,
            "dead_feature_ratio_l1": diag.dead_feature_ratio_l1,
            "dead_feature_ratio_l2": diag.dead_feature_ratio_l2,
            "mse_pos": diag.mse_pos,
            "mse_neg": diag.mse_neg,
        }),
    })
}

fn inspect(cfg: &RunConfig, dir: &RunDir) -> Result<Outcome> {
    let mut inputs = vec![];
    let model = load_model(dir, &mut inputs)?;
    let prep = load_prepared(cfg, dir, &mut inputs)?;
    let diag = diagnostics(&model, &prep.train)?;
    let norms: serde_json::Map<String, Value> = hhsae_core::model::ParamId::ALL
        .iter()
        .map(|&id| (id.name().to_string(), json!(model.tensor(id).frobenius_norm())))
        .collect();
    let report = json!({ "dims": model.dims, "parameter_norms": norms, "diagnostics": diag });
    let p = dir.write_json("reports/inspect.json", &report)?;
    Ok(Outcome {
        inputs,
        outputs: vec![p],
        summary: report,
    })
}

fn cohort(cfg: &RunConfig, train: &Dataset) -> Dataset {
    match cfg.discovery.cohort {
        CohortRule::Positives => train.class(1),
        CohortRule::All => train.clone(),
    }
}

/// Concept module with the data-derived bias profile of its neurons.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModuleRecord {
    #[serde(flatten)]
    pub module: ConceptModule,
    pub beta: Vec<f64>,
    pub bias_mass: f64,
}

fn discover(cfg: &RunConfig, dir: &RunDir) -> Result<Outcome> {
    let mut inputs = vec![];
    let model = load_model(dir, &mut inputs)?;
    let prep = load_prepared(cfg, dir, &mut inputs)?;
    let cohort = cohort(cfg, &prep.train);
    let aff = affinity_matrix(&model, &cohort)?;
    let modules = detect_modules(&aff, cfg.discovery.resolution, cfg.seed)?;
    let positives = prep.train.class(1);
    let negatives = prep.train.class(0);
    let mut records = Vec::new();
    for m in &modules {
        let filled = module_metrics(m, &model, &cohort, cfg.discovery.theta_atom)?;
        let beta = derive_bias_profile(&model, &positives, &negatives, &m.neuron_ids)?;
        records.push(ModuleRecord {
            bias_mass: beta.iter().sum(),
            module: filled,
            beta,
        });
    }
    let mut outputs = vec![dir.write_json(MODULES, &records)?];

    let names = &prep.train.feature_names;
    let profiles = (0..model.dims.d2)
        .map(|j| semantic_profile(&model, j, cfg.discovery.top_n, names))
        .collect::<hhsae_core::Result<Vec<_>>>()?;
    outputs.push(dir.write_json("reports/profiles.json", &profiles)?);

    let aff_p = dir.output("reports/affinity.csv")?;
    let mut w = csv::Writer::from_path(&aff_p).map_err(|e| CliError::format("csv", &aff_p, e.to_string()))?;
    for row in aff.a.iter_rows() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| CliError::format("csv", &aff_p, e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(&aff_p, e))?;
    outputs.push(aff_p);

    let z2 = encode_l2(&model, &prep.train)?;
    let assign = dominant_modules(&z2, &modules);
    let ca_p = dir.output("reports/cluster_assignments.csv")?;
    let mut w = csv::Writer::from_path(&ca_p).map_err(|e| CliError::format("csv", &ca_p, e.to_string()))?;
    w.write_record(["sample", "label", "module"])
        .map_err(|e| CliError::format("csv", &ca_p, e.to_string()))?;
    for (i, (m, y)) in assign.iter().zip(&prep.train.y).enumerate() {
        let module = m.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([i.to_string(), y.to_string(), module])
            .map_err(|e| CliError::format("csv", &ca_p, e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(&ca_p, e))?;
    outputs.push(ca_p);

    let warning = modules.is_empty().then_some("no L2 neuron fires on the cohort; no modules found");
    Ok(Outcome {
        inputs,
        outputs,
        summary: json!({
            "cohort_size": aff.cohort_size,
            "modules": records.iter().map(|r| json!({
                "module_id": r.module.module_id,
                "size": r.module.size,
                "bias_mass": r.bias_mass,
            })).collect::<Vec<_>>(),
            "warning": warning,
        }),
    })
}

fn pick_module(cfg: &RunConfig, records: &[ModuleRecord]) -> Result<ModuleRecord> {
    let chosen = match cfg.synthesis.module {
        Some(id) => records.iter().find(|r| r.module.module_id == id),
        None => records
            .iter()
            .fold(None::<&ModuleRecord>, |best, r| match best {
                Some(b) if b.bias_mass >= r.bias_mass => Some(b),
                _ => Some(r),
            }),
    };
    chosen
        .cloned()
        .ok_or_else(|| CliError::config("synthesis.module", "no such module (run `hhsae discover` and check modules.json)"))
}

fn synthesis_count(cfg: &RunConfig, train: &Dataset) -> usize {
    cfg.synthesis
        .n
        .unwrap_or_else(|| (cfg.synthesis.fraction_of_positives * train.n_positive() as f64).round() as usize)
}

fn steering_spec(cfg: &RunConfig, record: &ModuleRecord, n: usize, seed: u64) -> SteeringSpec {
    SteeringSpec {
        neurons: record.module.neuron_ids.clone(),
        beta: record.beta.clone(),
        alpha_range: cfg.synthesis.alpha_range,
        n_samples: n,
        seed,
    }
}

fn steer(cfg: &RunConfig, dir: &RunDir) -> Result<Outcome> {
    let mut inputs = vec![];
    let model = load_model(dir, &mut inputs)?;
    let prep = load_prepared(cfg, dir, &mut inputs)?;
    let records: Vec<ModuleRecord> = dir.read_json(MODULES, "discover")?;
    inputs.push(dir.path(MODULES));
    let record = pick_module(cfg, &records)?;
    let n = synthesis_count(cfg, &prep.train);
    let spec = steering_spec(cfg, &record, n, cfg.seed);
    let carrier = CarrierStats::fit(&prep.train)?;
    let bounds = SnapBounds::from_data(&prep.train)?;
    let synth = synthesize(&model, &spec, &carrier, &bounds)?;
    let raw = Dataset::new(
        inverse_transform(&synth.data.x, &prep.stats)?,
        synth.data.y.clone(),
        synth.data.feature_names.clone(),
        synth.data.feature_kinds.clone(),
    )?;
    let csv_p = dir.output(STEERED_CSV)?;
    write_dataset(&csv_p, &raw, &cfg.data.label_column)?;
    let meta = json!({
        "spec": spec,
        "module_id": record.module.module_id,
        "alphas": synth.alphas,
    });
    let meta_p = dir.write_json("synthetic/steer_manifest.json", &meta)?;
    Ok(Outcome {
        inputs,
        outputs: vec![csv_p, meta_p],
        summary: json!({ "module_id": record.module.module_id, "samples": n }),
    })
}

fn write_probe_csv(path: &std::path::Path, rows: &[(&str, &ProbeReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::format("csv", path, e.to_string()))?;
    let err = |e: csv::Error| CliError::format("csv", path, e.to_string());
    w.write_record(["model", "tier", "auc", "sd", "gain"]).map_err(err)?;
    for (model, r) in rows {
        let gain = r.gain_vs_l0.map(|g| g.to_string()).unwrap_or_default();
        w.write_record([model.to_string(), r.tier.clone(), r.auc.to_string(), r.auc_sd.to_string(), gain])
            .map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn probe_data(cfg: &RunConfig, prep: &Prepared) -> Result<Dataset> {
    Ok(match cfg.eval.probe_split {
        ProbeSplit::All => prep.train.concat(&prep.test)?,
        ProbeSplit::Train => prep.train.clone(),
        ProbeSplit::Test => prep.test.clone(),
    })
}

fn probe(cfg: &RunConfig, dir: &RunDir) -> Result<Outcome> {
    let mut inputs = vec![];
    let model = load_model(dir, &mut inputs)?;
    let prep = load_prepared(cfg, dir, &mut inputs)?;
    let data = probe_data(cfg, &prep)?;
    let reports = hierarchical_utility_report(&model, &data, &cfg.eval.tiers, cfg.eval.folds, cfg.seed, &cfg.eval.probe)?;
    let p = dir.output("reports/probe.csv")?;
    let rows: Vec<(&str, &ProbeReport)> = reports.iter().map(|r| ("full", r)).collect();
    write_probe_csv(&p, &rows)?;
    Ok(Outcome {
        inputs,
        outputs: vec![p],
        summary: json!(reports),
    })
}

fn ablate(cfg: &RunConfig, dir: &RunDir) -> Result<Outcome> {
    let mut inputs = vec![];
    let model = load_model(dir, &mut inputs)?;
    let prep = load_prepared(cfg, dir, &mut inputs)?;
    let data = probe_data(cfg, &prep)?;
    let tc = cfg.train_config(prep.train.n_features());
    let rep = ablation_report(&prep.train, &data, &tc, Some(&model), cfg.eval.folds, cfg.seed, &cfg.eval.probe)?;
    let p = dir.output("reports/ablation.csv")?;
    let mut rows: Vec<(&str, &ProbeReport)> = rep.full.iter().map(|r| ("full", r)).collect();
    rows.extend(rep.ablated.iter().map(|r| ("sparse_only", r)));
    write_probe_csv(&p, &rows)?;
    Ok(Outcome {
        inputs,
        outputs: vec![p],
        summary: json!({ "gap": rep.gap }),
    })
}

fn augment_eval(cfg: &RunConfig, dir: &RunDir) -> Result<Outcome> {
    let mut inputs = vec![];
    let model = load_model(dir, &mut inputs)?;
    let prep = load_prepared(cfg, dir, &mut inputs)?;
    let records: Vec<ModuleRecord> = dir.read_json(MODULES, "discover")?;
    inputs.push(dir.path(MODULES));
    let record = pick_module(cfg, &records)?;
    let n = synthesis_count(cfg, &prep.train);
    let carrier = CarrierStats::fit(&prep.train)?;
    let bounds = SnapBounds::from_data(&prep.train)?;
    let mut steered = Vec::new();
    let mut copies = Vec::new();
    for r in 0..cfg.eval.runs as u32 {
        let run_seed = stream_rng(cfg.seed, Stream::Augment, r).next_u64();
        let spec = steering_spec(cfg, &record, n, run_seed);
        steered.push(synthesize(&model, &spec, &carrier, &bounds)?.data);
        copies.push(oversample_positives(&prep.train, n, cfg.seed, r)?);
    }
    let (spec_t, pc) = (cfg.eval.spec_target, &cfg.eval.probe);
    let none = augmentation_experiment("none", &prep.train, &prep.test, &[prep.train.empty_like()], spec_t, pc)?;
    let over = augmentation_experiment("oversample", &prep.train, &prep.test, &copies, spec_t, pc)?;
    let steer = augmentation_experiment("steered", &prep.train, &prep.test, &steered, spec_t, pc)?;
    let reports = [none, over, steer];
    let p = dir.output("reports/augmentation.csv")?;
    write_augmentation_csv(&p, &reports)?;
    let jp = dir.write_json("reports/augmentation.json", &reports)?;
    Ok(Outcome {
        inputs,
        outputs: vec![p, jp],
        summary: json!(reports
            .iter()
            .map(|r| json!({ "method": r.method, "auprc": r.auprc.mean, "delta_prc_relative": r.delta_prc_relative }))
            .collect::<Vec<_>>()),
    })
}

fn write_augmentation_csv(path: &std::path::Path, reports: &[AugmentationReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::format("csv", path, e.to_string()))?;
    let err = |e: csv::Error| CliError::format("csv", path, e.to_string());
    w.write_record([
        "method", "auc", "auc_sd", "auprc", "auprc_sd", "recall_at_spec", "recall_sd", "best_f1", "best_f1_sd",
        "delta_prc_relative",
    ])
    .map_err(err)?;
    for r in reports {
        let cells = [
            r.auc.mean,
            r.auc.sd,
            r.auprc.mean,
            r.auprc.sd,
            r.recall_at_spec.mean,
            r.recall_at_spec.sd,
            r.best_f1.mean,
            r.best_f1.sd,
            r.delta_prc_relative,
        ];
        let mut rec = vec![r.method.clone()];
        rec.extend(cells.iter().map(f64::to_string));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
