use std::fs::{self, File, TryLockError};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use super::config::{Preset, RunConfig};
use super::manifest::{
    check_artifact, sha256_hex, write_atomic, Access, ArtifactRecord, OpenedRecord, PhaseRecord,
    RunManifest,
};
use super::{Cli, CliError, Command, ExperimentName};
use crate::attack::{
    attack_model_from_bytes, attack_model_to_bytes, attack_set_from_bytes, attack_set_to_bytes,
    build_attack_set, distill_shadow, evaluate_attack, label_trained_shadow, train_attack_models,
    AttackReport,
};
use crate::data::{
    dataset_from_bytes, dataset_to_bytes, gen_indicator_toy, gen_synthetic, load_mnist_dir, splits_from_bytes,
    splits_to_bytes, split_disjoint, Dataset, SplitIndices, SyntheticSpec,
};
use crate::experiments::{
    derive_seed, experiment_ablation, experiment_architectures, experiment_missing_class,
    experiment_overfit_sweep, Lab, STREAM_ATTACK, STREAM_BALANCE, STREAM_SHADOW, STREAM_TARGET,
};
use crate::models::{accuracy, as_oracle, build_arch, train_classifier_with_hook, TeacherOracle};
use crate::nn::{network_from_bytes, network_to_bytes, Network};

pub const ARTIFACT_DATASET: &str = "dataset.lld";
pub const ARTIFACT_SPLITS: &str = "splits.lls";
pub const ARTIFACT_TARGET: &str = "target.ckpt";
pub const ARTIFACT_TARGET_HISTORY: &str = "target_history.json";
pub const ARTIFACT_SHADOW: &str = "shadow.ckpt";
pub const ARTIFACT_SHADOW_HISTORY: &str = "shadow_history.json";
pub const ARTIFACT_ATTACK_SET: &str = "attack_set.las";
pub const ARTIFACT_ATTACK_MODEL: &str = "attack_model.lam";
pub const ARTIFACT_REPORT: &str = "report.json";

const LOCK_FILE: &str = ".lleaks.lock";

pub(super) fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Command::Report { manifest } = &cli.command {
        let path = manifest.clone().unwrap_or_else(|| RunManifest::path(&cli.out));
        return cmd_report(&path);
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(CliError::usage)?,
        None => RunConfig::defaults(Preset::Mnist),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    let mut ws = Workspace::open(&cli.out, cfg, matches!(cli.command, Command::PrepareData))?;
    match cli.command {
        Command::PrepareData => cmd_prepare_data(&mut ws),
        Command::TrainTarget => cmd_train_target(&mut ws),
        Command::DistillShadow => cmd_distill_shadow(&mut ws),
        Command::BuildAttack => cmd_build_attack(&mut ws),
        Command::TrainAttack => cmd_train_attack(&mut ws),
        Command::Evaluate => cmd_evaluate(&mut ws),
        Command::Experiment { name } => cmd_experiment(&mut ws, name),
        Command::Report { .. } => unreachable!("handled above"),
    }
}

/// An output directory held under its lock.
struct Workspace {
    out: PathBuf,
    cfg: RunConfig,
    manifest: RunManifest,
    _lock: File,
}

impl Workspace {
    fn open(out: &Path, cfg: RunConfig, fresh: bool) -> Result<Self, CliError> {
        fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        let lock_path = out.join(LOCK_FILE);
        let lock = File::create(&lock_path).map_err(|e| CliError::io(&lock_path, e))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(TryLockError::WouldBlock) => {
                return Err(CliError::usage(format!(
                    "{} is in use by another invocation",
                    out.display()
                )))
            }
            Err(TryLockError::Error(e)) => return Err(CliError::io(&lock_path, e)),
        }
        let hash = sha256_hex(cfg.canonical_json().as_bytes());
        let mut manifest = RunManifest::load(&RunManifest::path(out))?;
        if manifest.config_hash != hash {
            if !fresh && !manifest.phases.is_empty() {
                return Err(CliError::integrity(format!(
                    "{} was produced under config {}, current config is {}; rerun prepare-data",
                    out.display(),
                    short(&manifest.config_hash),
                    short(&hash)
                )));
            }
            manifest = RunManifest {
                config_hash: hash,
                phases: Vec::new(),
            };
        }
        Ok(Workspace {
            out: out.to_path_buf(),
            cfg,
            manifest,
            _lock: lock,
        })
    }

    fn phase(&self, name: &str) -> Phase {
        Phase {
            name: name.to_string(),
            started: Instant::now(),
            rec: PhaseRecord {
                phase: name.to_string(),
                seconds: 0.0,
                oracle_queries: 0,
                opened: Vec::new(),
                artifacts: Vec::new(),
                details: Default::default(),
            },
        }
    }

    /// Reads a prerequisite artifact after checking it against the manifest.
    fn read(&self, p: &mut Phase, artifact: &str, access: Access) -> Result<Vec<u8>, CliError> {
        let producer = producer_phase(artifact);
        let (_, rec) = self.manifest.producer(artifact).ok_or_else(|| {
            CliError::missing(format!(
                "{} needs {artifact}; run `{producer}` first",
                p.name
            ))
        })?;
        if !self.out.join(artifact).exists() {
            return Err(CliError::missing(format!(
                "{artifact} is missing from {}; rerun `{producer}`",
                self.out.display()
            )));
        }
        let bytes = check_artifact(&self.out, rec)
            .map_err(|e| CliError::integrity(format!("{e}; rerun `{producer}`")))?;
        p.rec.opened.push(OpenedRecord {
            path: artifact.to_string(),
            access,
            sha256: rec.sha256.clone(),
        });
        Ok(bytes)
    }

    fn open_data(&self, p: &mut Phase) -> Result<(Dataset, SplitIndices), CliError> {
        let ds = dataset_from_bytes(&self.read(p, ARTIFACT_DATASET, Access::Data)?)?;
        let splits = splits_from_bytes(&self.read(p, ARTIFACT_SPLITS, Access::Data)?)?;
        splits.check_disjoint(ds.len())?;
        Ok((ds, splits))
    }

    /// The target checkpoint, sealed before the caller sees it.
    fn open_target(&self, p: &mut Phase) -> Result<TeacherOracle, CliError> {
        let net = network_from_bytes(&self.read(p, ARTIFACT_TARGET, Access::Oracle)?)?;
        Ok(as_oracle(net))
    }

    fn open_model(&self, p: &mut Phase, artifact: &str) -> Result<Network, CliError> {
        Ok(network_from_bytes(&self.read(p, artifact, Access::Model)?)?)
    }

    fn write(&self, p: &mut Phase, artifact: &str, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(&self.out.join(artifact), bytes)?;
        p.rec.artifacts.push(ArtifactRecord {
            path: artifact.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn write_json(&self, p: &mut Phase, artifact: &str, v: &Value) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(v).expect("json value");
        text.push('\n');
        self.write(p, artifact, text.as_bytes())
    }

    fn finish(&mut self, mut p: Phase) -> Result<(), CliError> {
        p.rec.seconds = p.started.elapsed().as_secs_f64();
        log::info!("{} finished in {:.1}s", p.name, p.rec.seconds);
        self.manifest.record(p.rec);
        self.manifest.save(&RunManifest::path(&self.out))
    }

    fn seed(&self, stream: u64) -> u64 {
        derive_seed(self.cfg.seed, stream)
    }
}

struct Phase {
    name: String,
    started: Instant,
    rec: PhaseRecord,
}

impl Phase {
    fn detail(&mut self, key: &str, v: Value) {
        self.rec.details.insert(key.to_string(), v);
    }
}

fn producer_phase(artifact: &str) -> &'static str {
    match artifact {
        ARTIFACT_DATASET | ARTIFACT_SPLITS => "prepare-data",
        ARTIFACT_TARGET | ARTIFACT_TARGET_HISTORY => "train-target",
        ARTIFACT_SHADOW | ARTIFACT_SHADOW_HISTORY => "distill-shadow",
        ARTIFACT_ATTACK_SET => "build-attack",
        ARTIFACT_ATTACK_MODEL => "train-attack",
        _ => "evaluate",
    }
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

/// Materializes the configured dataset.
pub fn build_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    cfg.check_sources().map_err(CliError::usage)?;
    let d = &cfg.data;
    let spec = match d.preset {
        Preset::Mnist => return Ok(load_mnist_dir(&d.mnist_dir)?),
        Preset::PurchaseLike => SyntheticSpec::purchase_like(d.seed),
        Preset::TexasLike => SyntheticSpec::texas_like(d.seed),
        Preset::Toy => return Ok(gen_indicator_toy(600, 4)?),
    };
    Ok(gen_synthetic(&spec.with_flip_prob(d.flip_prob))?)
}

fn cmd_prepare_data(ws: &mut Workspace) -> Result<(), CliError> {
    let mut p = ws.phase("prepare-data");
    let ds = build_dataset(&ws.cfg)?;
    let splits = split_disjoint(&ds, &ws.cfg.split)?;
    ws.write(&mut p, ARTIFACT_DATASET, &dataset_to_bytes(&ds))?;
    ws.write(&mut p, ARTIFACT_SPLITS, &splits_to_bytes(&splits))?;
    p.detail("dataset", json!(ds.name()));
    p.detail("records", json!(ds.len()));
    p.detail(
        "split_sizes",
        json!({
            "target_train": splits.target_train.len(),
            "shadow_train": splits.shadow_train.len(),
            "test": splits.test.len(),
        }),
    );
    ws.finish(p)
}

fn cmd_train_target(ws: &mut Workspace) -> Result<(), CliError> {
    let mut p = ws.phase("train-target");
    let (ds, s) = ws.open_data(&mut p)?;
    let lab = &ws.cfg.lab;
    let seed = ws.seed(STREAM_TARGET);
    let net = build_arch(lab.target_arch, ds.sample_shape(), ds.num_classes(), seed)?;
    let sgd = lab.target_sgd.with_seed(seed);
    log::info!("training {} target for {} epochs", lab.target_arch, sgd.epochs);
    let (net, history) = train_classifier_with_hook(net, &ds, &s.target_train, &s.test, &sgd, |e, _| {
        log::debug!("target epoch {e}");
        Ok(())
    })?;
    let train_acc = accuracy(&net, &ds, &s.target_train)?;
    let test_acc = accuracy(&net, &ds, &s.test)?;
    ws.write(&mut p, ARTIFACT_TARGET, &network_to_bytes(&net))?;
    let summary = json!({
        "arch": lab.target_arch,
        "seed": seed,
        "train_accuracy": train_acc,
        "test_accuracy": test_acc,
        "overfitting_level": train_acc - test_acc,
        "history": history,
    });
    ws.write_json(&mut p, ARTIFACT_TARGET_HISTORY, &summary)?;
    p.detail("test_accuracy", json!(test_acc));
    p.detail("overfitting_level", json!(train_acc - test_acc));
    ws.finish(p)
}

fn cmd_distill_shadow(ws: &mut Workspace) -> Result<(), CliError> {
    let mut p = ws.phase("distill-shadow");
    let (ds, s) = ws.open_data(&mut p)?;
    let arch = ws.cfg.lab.shadow_arch;
    let sgd = ws.cfg.lab.shadow_sgd.with_seed(ws.seed(STREAM_SHADOW));
    let (net, history) = match ws.cfg.distill() {
        Some(d) => {
            let oracle = ws.open_target(&mut p)?;
            log::info!("distilling {arch} shadow at T = {}", d.temperature);
            let out = distill_shadow(&oracle, arch, &ds, &s.shadow_train, &s.test, &d, &sgd)?;
            p.rec.oracle_queries = oracle.query_count();
            out
        }
        None => {
            log::info!("training label-only {arch} shadow");
            label_trained_shadow(arch, &ds, &s.shadow_train, &s.test, &sgd)?
        }
    };
    let test_acc = accuracy(&net, &ds, &s.test)?;
    let train_acc = accuracy(&net, &ds, &s.shadow_train)?;
    let member_acc = accuracy(&net, &ds, &s.target_train)?;
    ws.write(&mut p, ARTIFACT_SHADOW, &network_to_bytes(&net))?;
    let summary = json!({
        "arch": arch,
        "mode": ws.cfg.shadow_mode,
        "distill": ws.cfg.distill(),
        "seed": sgd.seed,
        "train_accuracy": train_acc,
        "test_accuracy": test_acc,
        "target_member_accuracy": member_acc,
        "overfitting_level": member_acc - test_acc,
        "history": history,
    });
    ws.write_json(&mut p, ARTIFACT_SHADOW_HISTORY, &summary)?;
    p.detail("test_accuracy", json!(test_acc));
    ws.finish(p)
}

fn cmd_build_attack(ws: &mut Workspace) -> Result<(), CliError> {
    let mut p = ws.phase("build-attack");
    let (ds, s) = ws.open_data(&mut p)?;
    let shadow = ws.open_model(&mut p, ARTIFACT_SHADOW)?;
    let aset = build_attack_set(&shadow, &ds, &s.shadow_train, s.shadow_out(), ws.seed(STREAM_BALANCE))?;
    ws.write(&mut p, ARTIFACT_ATTACK_SET, &attack_set_to_bytes(&aset))?;
    p.detail("records", json!(aset.len()));
    p.detail("pre_balance_records", json!(aset.pre_balance_count()));
    p.detail("dropped_classes", json!(aset.dropped()));
    ws.finish(p)
}

fn cmd_train_attack(ws: &mut Workspace) -> Result<(), CliError> {
    let mut p = ws.phase("train-attack");
    let aset = attack_set_from_bytes(&ws.read(&mut p, ARTIFACT_ATTACK_SET, Access::Data)?)?;
    let mut acfg = ws.cfg.lab.attack;
    acfg.sgd.seed = ws.seed(STREAM_ATTACK);
    let models = train_attack_models(&aset, &acfg)?;
    ws.write(&mut p, ARTIFACT_ATTACK_MODEL, &attack_model_to_bytes(&models))?;
    ws.finish(p)
}

fn cmd_evaluate(ws: &mut Workspace) -> Result<(), CliError> {
    let mut p = ws.phase("evaluate");
    let (ds, s) = ws.open_data(&mut p)?;
    let models = attack_model_from_bytes(&ws.read(&mut p, ARTIFACT_ATTACK_MODEL, Access::Model)?)?;
    let oracle = ws.open_target(&mut p)?;
    let mut report = evaluate_attack(&models, &oracle, &ds, &s.target_train, s.eval_out())?;
    p.rec.oracle_queries = oracle.query_count();
    let target: Value = serde_json::from_slice(&ws.read(&mut p, ARTIFACT_TARGET_HISTORY, Access::Data)?)
        .map_err(|e| CliError::integrity(format!("{ARTIFACT_TARGET_HISTORY}: {e}")))?;
    let shadow: Value = serde_json::from_slice(&ws.read(&mut p, ARTIFACT_SHADOW_HISTORY, Access::Data)?)
        .map_err(|e| CliError::integrity(format!("{ARTIFACT_SHADOW_HISTORY}: {e}")))?;
    let m = &mut report.metadata;
    m.seeds.insert("run".into(), ws.cfg.seed);
    m.seeds.insert("target".into(), ws.seed(STREAM_TARGET));
    m.seeds.insert("shadow".into(), ws.seed(STREAM_SHADOW));
    m.seeds.insert("attack".into(), ws.seed(STREAM_ATTACK));
    m.seeds.insert("balance".into(), ws.seed(STREAM_BALANCE));
    m.shadow_arch = Some(ws.cfg.lab.shadow_arch);
    m.distill = ws.cfg.distill();
    m.target_overfit = target["overfitting_level"].as_f64();
    m.shadow_overfit = shadow["overfitting_level"].as_f64();
    m.oracle_queries_total = p.rec.oracle_queries
        + ws
            .manifest
            .phases
            .iter()
            .filter(|r| r.phase != "evaluate")
            .map(|r| r.oracle_queries)
            .sum::<u64>();
    let mut text = report.to_json();
    text.push('\n');
    ws.write(&mut p, ARTIFACT_REPORT, text.as_bytes())?;
    p.detail("ap", json!(report.ap));
    p.detail("ar", json!(report.ar));
    p.detail("f1", json!(report.f1));
    println!("AP {:.4}  AR {:.4}  F1 {:.4}", report.ap, report.ar, report.f1);
    ws.finish(p)
}

fn cmd_experiment(ws: &mut Workspace, name: ExperimentName) -> Result<(), CliError> {
    let mut p = ws.phase(&format!("experiment-{}", name.as_str()));
    let ds = build_dataset(&ws.cfg)?;
    let splits = split_disjoint(&ds, &ws.cfg.split)?;
    let lab = Lab::new(ds, splits, ws.cfg.lab.clone())?;
    let x = &ws.cfg.experiment;
    let (value, csv) = match name {
        ExperimentName::Ablation => {
            let r = experiment_ablation(&lab, &x.seeds)?;
            (serde_json::to_value(&r), r.to_csv())
        }
        ExperimentName::MissingClass => {
            let cfg = crate::experiments::MissingClassConfig {
                seed: ws.cfg.seed,
                ..x.missing_class
            };
            let r = experiment_missing_class(&lab, &cfg)?;
            let csv = format!(
                "class,bias,target_accuracy,distilled_accuracy,distilled_accuracy_bias,label_accuracy,label_accuracy_bias\n{},{},{},{},{},{},{}\n",
                cfg.class_id,
                cfg.bias,
                r.target_class_accuracy,
                r.distilled_class_accuracy,
                r.distilled_class_accuracy_bias,
                r.label_class_accuracy,
                r.label_class_accuracy_bias
            );
            (serde_json::to_value(&r), csv)
        }
        ExperimentName::OverfitSweep => {
            let r = experiment_overfit_sweep(&lab, ws.cfg.seed, &x.epoch_grid)?;
            let mut v = serde_json::to_value(&r).expect("sweep is serializable");
            v["spearman"] = json!(r.overfit_correlation());
            (Ok(v), r.to_csv())
        }
        ExperimentName::Architectures => {
            let r = experiment_architectures(&lab, &x.seeds, &x.archs)?;
            let mut v = serde_json::to_value(&r).expect("result is serializable");
            v["f1_spread"] = json!(r.f1_spread());
            (Ok(v), r.to_csv())
        }
    };
    let value = value.expect("experiment results are serializable");
    let stem = format!("experiment-{}", name.as_str());
    ws.write_json(&mut p, &format!("{stem}.json"), &value)?;
    ws.write(&mut p, &format!("{stem}.csv"), csv.as_bytes())?;
    print!("{csv}");
    ws.finish(p)
}

fn cmd_report(path: &Path) -> Result<(), CliError> {
    if !path.exists() {
        return Err(CliError::missing(format!("no manifest at {}", path.display())));
    }
    let manifest = RunManifest::load(path)?;
    if manifest.phases.is_empty() {
        println!("no runs recorded in {}", path.display());
        return Ok(());
    }
    let out = path.parent().unwrap_or(Path::new("."));
    manifest.verify(out)?;
    println!("config  {}", manifest.config_hash);
    println!();
    println!("{:<28} {:>10} {:>10} {:>9}", "phase", "seconds", "queries", "artifacts");
    for r in &manifest.phases {
        println!(
            "{:<28} {:>10.1} {:>10} {:>9}",
            r.phase,
            r.seconds,
            r.oracle_queries,
            r.artifacts.len()
        );
    }
    let total: f64 = manifest.phases.iter().map(|r| r.seconds).sum();
    println!("{:<28} {:>10.1}", "total", total);
    if let Some((_, rec)) = manifest.producer(ARTIFACT_REPORT) {
        let bytes = check_artifact(out, rec)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| CliError::integrity(format!("{ARTIFACT_REPORT} is not UTF-8")))?;
        let report = AttackReport::from_json(&text)
            .map_err(|e| CliError::integrity(format!("{ARTIFACT_REPORT}: {e}")))?;
        println!();
        println!("{:<8} {:>8}", "metric", "value");
        println!("{:<8} {:>8.4}", "AP", report.ap);
        println!("{:<8} {:>8.4}", "AR", report.ar);
        println!("{:<8} {:>8.4}", "F1", report.f1);
        let c = report.confusion;
        println!("tp {} fp {} tn {} fn {}", c.tp, c.fp, c.tn, c.fn_);
    }
    Ok(())
}
