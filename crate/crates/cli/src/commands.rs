//! Subcommand implementations.

use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use matchrep_core::allocsim::{build_stream, run_policy, Oracle, Policy, Rule, Scorer, SimConfig, SimReport};
use matchrep_core::baselines::{
    fit_cluster_predictor, fit_pair_regressor, ClusterPredictorSpec, PairKind, PairOptions, SavedModel,
};
use matchrep_core::datamodel::{
    load_csv, normalize_fit_transform, read_ground_truth_csv, split, write_csv, write_ground_truth_csv,
    Dataset, SchemaConfig, DEFAULT_TRAIN_FRACTION,
};
use matchrep_core::matchrep::{train_joint, TrainConfig};
use matchrep_core::metrics::{evaluate, EvalReport};
use matchrep_core::synthgen::{sample_dataset, semi_synthetic_outcomes, SemiSyntheticConfig, SyntheticConfig, BIASED_PRESET};
use matchrep_core::{Error, Result};

use crate::manifest::Manifest;
use crate::{DataArgs, EvalArgs, GenArgs, SimulateArgs, TrainArgs};

pub const DATASET_FILE: &str = "dataset.csv";
pub const TRUTH_FILE: &str = "ground_truth.csv";
pub const SCHEMA_FILE: &str = "schema.json";
pub const MODEL_FILE: &str = "matchrep.json";
pub const CHECKPOINT_FILE: &str = "matchrep.checkpoint.json";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const EVAL_TABLE_FILE: &str = "eval.csv";
pub const SIM_TABLE_FILE: &str = "simulation.csv";
pub const SIM_JSON_FILE: &str = "simulation.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    /// Root seed of the split, the model and every baseline.
    pub seed: u64,
    pub train_fraction: f64,
    pub train: TrainConfig,
    pub pair: PairOptions,
    /// Baseline names as printed in the evaluation table, or `all`.
    pub baselines: Vec<String>,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        TrainRunConfig {
            seed: 0,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            train: TrainConfig::default(),
            pair: PairOptions::default(),
            baselines: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalRunConfig {
    /// Must match the seed used for training so the split is the same.
    pub seed: u64,
    pub train_fraction: f64,
}

impl Default for EvalRunConfig {
    fn default() -> Self {
        EvalRunConfig {
            seed: 0,
            train_fraction: DEFAULT_TRAIN_FRACTION,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimRunConfig {
    pub sim: SimConfig,
    /// Empty means the full table when models are given, otherwise the
    /// model-free policies.
    pub policies: Vec<String>,
    pub scorer: String,
}

impl Default for SimRunConfig {
    fn default() -> Self {
        SimRunConfig {
            sim: SimConfig::default(),
            policies: Vec::new(),
            scorer: "oracle".into(),
        }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>, manifest: &mut Manifest) -> Result<T> {
    match path {
        Some(p) => {
            manifest.add_input(p)?;
            read_json(p)
        }
        None => Ok(T::default()),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn prepare_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

fn check_preset(preset: Option<&str>) -> Result<()> {
    match preset {
        Some(p) if p != BIASED_PRESET => Err(Error::Config(format!("unknown preset `{p}`"))),
        _ => Ok(()),
    }
}

/// Loads the dataset, its schema and, when present, the ground truth.
fn load_data(args: &DataArgs, manifest: &mut Manifest) -> Result<Dataset> {
    let schema_path = args.schema.clone().unwrap_or_else(|| sibling(&args.data, SCHEMA_FILE));
    let schema: SchemaConfig = read_json(&schema_path)?;
    let mut ds = load_csv(&args.data, &schema)?;
    manifest.add_input(&args.data)?;
    manifest.add_input(&schema_path)?;
    let truth = args.truth.clone().or_else(|| {
        let p = sibling(&args.data, TRUTH_FILE);
        p.exists().then_some(p)
    });
    if let Some(t) = truth {
        read_ground_truth_csv(&mut ds, &t)?;
        manifest.add_input(&t)?;
    }
    Ok(ds)
}

fn model_name(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn file_stem_for(name: &str) -> String {
    name.replace(['/', '+'], "-")
}

pub fn gen(args: &GenArgs) -> Result<()> {
    let out = &args.common.out;
    prepare_out(out)?;
    let mut manifest = Manifest::new("gen", 0, serde_json::Value::Null);
    let dataset = match &args.input {
        Some(input) => {
            let mut cfg: SemiSyntheticConfig = read_config(args.common.config.as_deref(), &mut manifest)?;
            if let Some(s) = args.common.seed {
                cfg.seed = s;
            }
            let schema_path = args.schema.as_ref().expect("clap enforces --schema with --input");
            let schema: SchemaConfig = read_json(schema_path)?;
            manifest.add_input(schema_path)?;
            let raw = load_csv(input, &schema)?;
            manifest.add_input(input)?;
            let ds = semi_synthetic_outcomes(&raw, &cfg)?;
            manifest.seed = cfg.seed;
            manifest.config = serde_json::json!({ "semi_synthetic": cfg, "schema": schema });
            ds
        }
        None => {
            let mut value = match &args.common.config {
                Some(p) => {
                    manifest.add_input(p)?;
                    read_json::<serde_json::Value>(p)?
                }
                None => serde_json::json!({}),
            };
            let obj = value
                .as_object_mut()
                .ok_or_else(|| Error::Config("synthetic config must be a JSON object".into()))?;
            if let Some(p) = &args.preset {
                obj.insert("preset".into(), p.clone().into());
            }
            obj.entry("preset").or_insert_with(|| BIASED_PRESET.into());
            let mut cfg = SyntheticConfig::from_json(value)?;
            if let Some(s) = args.common.seed {
                cfg.seed = s;
            }
            if let Some(n) = args.n {
                cfg.n = n;
            }
            cfg.validate()?;
            manifest.seed = cfg.seed;
            manifest.config = serde_json::to_value(&cfg)?;
            sample_dataset(&cfg)?
        }
    };
    write_csv(&dataset, &out.join(DATASET_FILE))?;
    manifest.add_output(out, DATASET_FILE)?;
    write_ground_truth_csv(&dataset, &out.join(TRUTH_FILE))?;
    manifest.add_output(out, TRUTH_FILE)?;
    write_json(&out.join(SCHEMA_FILE), &dataset.schema.to_config())?;
    manifest.add_output(out, SCHEMA_FILE)?;
    manifest.write(out)
}

/// Expands `all` and checks every name against the known baselines.
fn resolve_baselines(names: &[String], train: &TrainConfig) -> Result<Vec<String>> {
    let cluster: Vec<String> = ClusterPredictorSpec::all(train).iter().map(|s| s.name()).collect();
    let pair: Vec<String> = PairKind::ALL.iter().map(|k| k.name().to_string()).collect();
    let mut out = Vec::new();
    for n in names {
        if n == "all" {
            out.extend(cluster.iter().cloned());
            out.extend(pair.iter().cloned());
        } else if cluster.contains(n) || pair.contains(n) {
            out.push(n.clone());
        } else {
            return Err(Error::Config(format!("unknown baseline `{n}`")));
        }
    }
    let mut seen = std::collections::HashSet::new();
    out.retain(|n| seen.insert(n.clone()));
    Ok(out)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    check_preset(args.preset.as_deref())?;
    let out = &args.common.out;
    prepare_out(out)?;
    let mut manifest = Manifest::new("train", 0, serde_json::Value::Null);
    let mut cfg: TrainRunConfig = read_config(args.common.config.as_deref(), &mut manifest)?;
    if let Some(s) = args.common.seed {
        cfg.seed = s;
    }
    cfg.train.seed = cfg.seed;
    cfg.pair.seed = cfg.seed;
    if let Some(b) = args.beta {
        cfg.train.beta = b;
    }
    if let Some(b) = &args.baselines {
        cfg.baselines = b.clone();
    }
    cfg.baselines = resolve_baselines(&cfg.baselines, &cfg.train)?;
    cfg.train.validate()?;
    manifest.seed = cfg.seed;
    manifest.config = serde_json::to_value(&cfg)?;

    let ds = load_data(&args.data, &mut manifest)?;
    let sp = split(ds.len(), cfg.train_fraction, cfg.seed)?;
    let train_set = normalize_fit_transform(&ds, &sp)?.subset(&sp.train);

    let (model, log) = match train_joint(&train_set, &cfg.train) {
        Ok(r) => r,
        Err(Error::Diverged {
            epoch,
            message,
            checkpoint,
        }) => {
            if let Some(cp) = &checkpoint {
                SavedModel::Matchrep((**cp).clone()).save(&out.join(CHECKPOINT_FILE))?;
            }
            return Err(Error::Diverged {
                epoch,
                message,
                checkpoint,
            });
        }
        Err(e) => return Err(e),
    };
    SavedModel::Matchrep(model).save(&out.join(MODEL_FILE))?;
    manifest.add_output(out, MODEL_FILE)?;
    log.write_csv(&out.join(TRAINING_LOG_FILE))?;
    manifest.add_output(out, TRAINING_LOG_FILE)?;

    for name in &cfg.baselines {
        let saved = match name.parse::<PairKind>() {
            Ok(kind) => SavedModel::PairRegressor(fit_pair_regressor(&train_set, kind, &cfg.pair)?),
            Err(_) => {
                let spec = ClusterPredictorSpec::all(&cfg.train)
                    .into_iter()
                    .find(|s| &s.name() == name)
                    .expect("names were resolved above");
                SavedModel::ClusterPredictor(fit_cluster_predictor(&train_set, &spec)?.0)
            }
        };
        let file = format!("{}.json", file_stem_for(name));
        saved.save(&out.join(&file))?;
        manifest.add_output(out, &file)?;
    }
    manifest.write(out)
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let out = &args.common.out;
    prepare_out(out)?;
    let mut manifest = Manifest::new("eval", 0, serde_json::Value::Null);
    let mut cfg: EvalRunConfig = read_config(args.common.config.as_deref(), &mut manifest)?;
    if let Some(s) = args.common.seed {
        cfg.seed = s;
    }
    manifest.seed = cfg.seed;
    manifest.config = serde_json::to_value(&cfg)?;
    let ds = load_data(&args.data, &mut manifest)?;
    let sp = split(ds.len(), cfg.train_fraction, cfg.seed)?;
    let (train_set, validation) = (ds.subset(&sp.train), ds.subset(&sp.validation));
    let mut reports = Vec::with_capacity(args.models.len());
    for path in &args.models {
        let model = SavedModel::load(path)?;
        manifest.add_input(path)?;
        let name = model_name(path);
        let report = evaluate(model.as_outcome_model(), &name, &train_set, &validation)?;
        let file = format!("eval_{name}.json");
        report.write_json(&out.join(&file))?;
        manifest.add_output(out, &file)?;
        reports.push(report);
    }
    EvalReport::write_csv(&reports, &out.join(EVAL_TABLE_FILE))?;
    manifest.add_output(out, EVAL_TABLE_FILE)?;
    manifest.write(out)
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    check_preset(args.preset.as_deref())?;
    let out = &args.common.out;
    prepare_out(out)?;
    let mut manifest = Manifest::new("simulate", 0, serde_json::Value::Null);
    let mut cfg: SimRunConfig = read_config(args.common.config.as_deref(), &mut manifest)?;
    if let Some(s) = args.common.seed {
        cfg.sim.seed = s;
    }
    if let Some(p) = &args.policies {
        cfg.policies = p.clone();
    }
    if let Some(s) = &args.scorer {
        cfg.scorer = s.clone();
    }
    if cfg.policies.is_empty() {
        let table: &[Policy] = if args.models.is_empty() { &Policy::TABLE[..4] } else { &Policy::TABLE };
        cfg.policies = table.iter().map(|p| p.name().to_string()).collect();
    }
    let policies: Vec<Policy> = cfg.policies.iter().map(|p| p.parse()).collect::<Result<_>>()?;
    cfg.sim.validate()?;
    manifest.seed = cfg.sim.seed;
    manifest.config = serde_json::to_value(&cfg)?;

    let ds = load_data(&args.data, &mut manifest)?;
    let mut models = Vec::with_capacity(args.models.len());
    for path in &args.models {
        models.push((model_name(path), SavedModel::load(path)?));
        manifest.add_input(path)?;
    }
    let oracle = Oracle::from_dataset(&ds)?;
    let stream = build_stream(&ds, cfg.sim.window, cfg.sim.seed)?;
    let model_scorers: Vec<Scorer> = models
        .iter()
        .map(|(name, m)| Scorer::from_model(name, m.as_outcome_model(), &ds))
        .collect::<Result<_>>()?;
    // The oracle scorer needs true recipient types, so it is only built on demand.
    let needs_plain = policies.iter().any(|p| matches!(p, Policy::Plain(Rule::Uf | Rule::Bf)));
    let oracle_scorer = match (needs_plain, cfg.scorer.as_str()) {
        (true, "oracle") => Some(Scorer::oracle(&ds)?),
        _ => None,
    };
    let plain_scorer = match &oracle_scorer {
        Some(s) => Some(s),
        None if cfg.scorer == "oracle" => None,
        None => Some(
            model_scorers
                .iter()
                .find(|s| s.name() == cfg.scorer)
                .ok_or_else(|| Error::Config(format!("scorer `{}` is neither `oracle` nor a --model", cfg.scorer)))?,
        ),
    };

    let mut reports = Vec::new();
    for &policy in &policies {
        let scorers: Vec<Option<&Scorer>> = match policy {
            Policy::Real | Policy::Plain(Rule::Fcfs) => vec![None],
            Policy::Plain(_) => vec![plain_scorer],
            Policy::Guided(_) => {
                let typed: Vec<Option<&Scorer>> =
                    model_scorers.iter().filter(|s| s.types().is_ok()).map(Some).collect();
                if typed.is_empty() {
                    return Err(Error::Config(format!("policy `{policy}` needs a typed --model")));
                }
                typed
            }
        };
        for scorer in scorers {
            let report = run_policy(&stream, policy, scorer, &oracle, &cfg.sim)?;
            let file = match scorer {
                Some(s) if policy.needs_scorer() => format!("ledger_{}_{}.csv", policy.name(), s.name()),
                _ => format!("ledger_{}.csv", policy.name()),
            };
            report.write_ledger_csv(&out.join(&file))?;
            manifest.add_output(out, &file)?;
            reports.push(report);
        }
    }
    SimReport::write_csv(&reports, &out.join(SIM_TABLE_FILE))?;
    manifest.add_output(out, SIM_TABLE_FILE)?;
    let summaries: Vec<SimReport> = reports
        .into_iter()
        .map(|mut r| {
            r.ledger.clear();
            r
        })
        .collect();
    write_json(&out.join(SIM_JSON_FILE), &summaries)?;
    manifest.add_output(out, SIM_JSON_FILE)?;
    manifest.write(out)
}
