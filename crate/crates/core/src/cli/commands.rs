use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::data::{load_csv, synth_generate, write_csv, Domain, NormalizationStats, SequenceDataset, StateLayout, SynthConfig};
use crate::diffcore::Tensor;
use crate::error::{DsvbError, Result};
use crate::scenarios::{build_scenario, DataSource};
use crate::trainer::{
    evaluate_checkpoint, holdout, run_experiment, train, train_baseline, ExperimentReport, JsonlLogger, Method,
    MethodRow, SeedResult, TrainConfig, VALIDATION_FRACTION,
};

use super::manifest::RunManifest;
use super::{Cli, Command, EvalArgs, ExperimentArgs, ExportArgs, InferArgs, MethodArg, SynthArgs, TrainArgs};

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Infer(a) => infer(a),
        Command::ExportLatents(a) => export_latents(a),
        Command::Experiment(a) => experiment(a),
    }
}

fn write_dataset(ds: &SequenceDataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv(ds, &mut w)?;
    w.flush()?;
    Ok(())
}

fn write_json(value: &impl serde::Serialize, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    if a.train_len == 0 || a.test_len == 0 {
        return Err(DsvbError::InvalidConfig("--train-len and --test-len must be positive".into()));
    }
    let mut cfg = SynthConfig {
        contact_mode: a.mode.into(),
        actuation: a.actuation.into(),
        seed: a.seed,
        samples: a.train_len + a.test_len,
        ..SynthConfig::default()
    };
    if let Some(s) = a.noise_std {
        cfg.noise_std = s;
    }
    cfg.validate()?;
    fs::create_dir_all(&a.out)?;
    let (tr, te) = synth_generate(&cfg)?.split_at(a.train_len)?;
    let train_path = a.out.join("train.csv");
    let test_path = a.out.join("test.csv");
    write_dataset(&tr, &train_path)?;
    write_dataset(&te, &test_path)?;
    let settings = json!({ "config": cfg, "train_len": a.train_len, "test_len": a.test_len });
    write_json(&settings, &a.out.join("synth.json"))?;

    let mut m = RunManifest::new("synth", settings);
    m.seeds = vec![a.seed];
    m.dataset(&train_path)?;
    m.dataset(&test_path)?;
    m.outputs = vec![train_path, test_path, a.out.join("synth.json")];
    m.write(&a.out.join("manifest.json"))?;
    log::info!("wrote {} train and {} test samples to {}", tr.len(), te.len(), a.out.display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let config = a.training.config(a.cell.into());
    config.validate()?;
    let dsvb = a.method == MethodArg::Dsvb;
    let target_raw = match (&a.target, dsvb) {
        (Some(p), true) => Some(load_csv(p, Domain::Target)?),
        (None, true) => return Err(DsvbError::InvalidConfig("dsvb training needs --target".into())),
        (Some(_), false) => {
            log::warn!("--target is ignored when training a baseline");
            None
        }
        (None, false) => None,
    };
    let source_raw = load_csv(&a.source, Domain::Source)?;
    let stats = NormalizationStats::fit(&source_raw)?;
    let (train_raw, val_raw) = holdout(&source_raw, VALIDATION_FRACTION, config.seq_len)?;
    let source = stats.apply(&train_raw)?;
    let validation = val_raw.map(|v| stats.apply(&v)).transpose()?;
    let target = target_raw.map(|t| stats.apply(&t.without_labels())).transpose()?;
    fs::create_dir_all(&a.out)?;
    write_json(&config, &a.out.join("config.json"))?;

    let results: Vec<Result<Vec<PathBuf>>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let dir = a.out.join(format!("seed-{seed}"));
            fs::create_dir_all(&dir)?;
            let mut logger = JsonlLogger::create(&dir.join("history.jsonl"), &dir.join("train_log.jsonl"))?;
            let outcome = if let Some(target) = &target {
                train(&config, seed, &source, target, validation.as_ref(), &mut logger).map(|out| {
                    let meta = |epoch: usize| meta_for(seed, epoch, &out.history);
                    let disc = out.discriminator.as_ref();
                    (
                        Checkpoint::from_vrnn(&out.model, disc, Some(stats.clone()), meta(config.epochs)),
                        Checkpoint::from_vrnn(&out.best, disc, Some(stats.clone()), meta(out.best_epoch)),
                    )
                })
            } else {
                train_baseline(&config, seed, &source, validation.as_ref(), &mut logger).map(|out| {
                    let meta = |epoch: usize| meta_for(seed, epoch, &out.history);
                    (
                        Checkpoint::from_baseline(&out.model, Some(stats.clone()), meta(config.epochs)),
                        Checkpoint::from_baseline(&out.best, Some(stats.clone()), meta(out.best_epoch)),
                    )
                })
            };
            let (last, best) = match outcome {
                Ok(pair) => pair,
                Err(DsvbError::TrainingDiverged {
                    epoch,
                    batch,
                    reason,
                    last_good,
                }) => {
                    if let Some(ck) = &last_good {
                        ck.save(dir.join("checkpoint_last_good.bin"))?;
                    }
                    log::error!("seed {seed} diverged at epoch {epoch}, batch {batch}: {reason}");
                    return Err(DsvbError::TrainingDiverged {
                        epoch,
                        batch,
                        reason,
                        last_good,
                    });
                }
                Err(e) => return Err(e),
            };
            let (p_last, p_best) = (dir.join("checkpoint.bin"), dir.join("checkpoint_best.bin"));
            last.save(&p_last)?;
            best.save(&p_best)?;
            log::info!("seed {seed}: wrote {}", p_last.display());
            Ok(vec![p_last, p_best, dir.join("history.jsonl"), dir.join("train_log.jsonl")])
        })
        .collect();

    let mut m = RunManifest::new(
        "train",
        json!({ "method": format!("{:?}", a.method).to_lowercase(), "train": config }),
    );
    m.seeds = config.seeds.clone();
    m.dataset(&a.source)?;
    if let (Some(p), true) = (&a.target, dsvb) {
        m.dataset(p)?;
    }
    let mut first_err = None;
    for r in results {
        match r {
            Ok(paths) => m.outputs.extend(paths),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    m.write(&a.out.join("manifest.json"))?;
    first_err.map_or(Ok(()), Err)
}

fn meta_for(seed: u64, epoch: usize, history: &[crate::trainer::EpochRecord]) -> CheckpointMeta {
    let rec = history.iter().find(|r| r.epoch == epoch).or(history.last());
    CheckpointMeta {
        seed,
        epoch,
        final_loss: rec.map(|r| r.generator_total),
        source_validation_rmse: rec.and_then(|r| r.source_validation_rmse),
    }
}

fn find_checkpoints(path: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_file() {
        out.push(path.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(path)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_checkpoints(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "checkpoint.bin") {
            out.push(p);
        }
    }
    Ok(())
}

fn per_channel_csv(rows: &[(String, u64, &'static str, Vec<f64>)]) -> String {
    let mut s = String::from("method,seed,domain");
    for c in StateLayout::columns() {
        s.push(',');
        s.push_str(&c);
    }
    s.push('\n');
    for (method, seed, domain, values) in rows {
        s.push_str(&format!("{method},{seed},{domain}"));
        for v in values {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s
}

fn write_report(report: &ExperimentReport, out: &Path) -> Result<Vec<PathBuf>> {
    let mut channels = Vec::new();
    for row in &report.rows {
        for s in &row.seeds {
            channels.push((row.method.clone(), s.seed, "source", s.source.per_channel.clone()));
            channels.push((row.method.clone(), s.seed, "target", s.target.per_channel.clone()));
        }
    }
    let paths = vec![
        out.join("rmse_table.csv"),
        out.join("rmse_table.json"),
        out.join("per_channel.csv"),
    ];
    fs::write(&paths[0], report.to_csv())?;
    write_json(report, &paths[1])?;
    fs::write(&paths[2], per_channel_csv(&channels))?;
    Ok(paths)
}

fn eval(a: EvalArgs) -> Result<()> {
    let mut paths = Vec::new();
    for p in &a.checkpoints {
        find_checkpoints(p, &mut paths)?;
    }
    if paths.is_empty() {
        return Err(DsvbError::InvalidConfig("no checkpoints found".into()));
    }
    let source = load_csv(&a.test_source, Domain::Source)?;
    let target = load_csv(&a.test_target, Domain::Target)?;
    let scored: Vec<Result<(String, SeedResult)>> = paths
        .par_iter()
        .map(|p| {
            let ck = Checkpoint::load(p)?;
            Ok((
                ck.model.label(),
                SeedResult {
                    seed: ck.meta.seed,
                    source: evaluate_checkpoint(&ck, &source, a.seq_len)?,
                    target: evaluate_checkpoint(&ck, &target, a.seq_len)?,
                    final_loss: ck.meta.final_loss.unwrap_or(f64::NAN),
                    discriminator_accuracy: None,
                    final_epoch_train_accuracy: None,
                },
            ))
        })
        .collect();
    let scored = scored.into_iter().collect::<Result<Vec<_>>>()?;
    let mut labels: Vec<String> = Method::all().iter().map(Method::to_string).collect();
    for (l, _) in &scored {
        if !labels.contains(l) {
            labels.push(l.clone());
        }
    }
    let rows = labels
        .into_iter()
        .filter_map(|l| {
            let seeds: Vec<SeedResult> = scored.iter().filter(|(m, _)| *m == l).map(|(_, r)| r.clone()).collect();
            (!seeds.is_empty()).then(|| MethodRow::from_seeds(l, seeds))
        })
        .collect();
    let report = ExperimentReport { scenario: 0, rows };
    fs::create_dir_all(&a.out)?;
    let outputs = write_report(&report, &a.out)?;
    print!("{}", report.to_csv());

    let mut m = RunManifest::new("eval", json!({ "seq_len": a.seq_len, "checkpoints": paths }));
    m.dataset(&a.test_source)?;
    m.dataset(&a.test_target)?;
    for p in &paths {
        m.dataset(p)?;
    }
    m.outputs = outputs;
    m.write(&a.out.join("manifest.json"))
}

/// Estimates of one checkpoint on one CSV, in state units.
fn estimate_file(ck: &Checkpoint, input: &Path, seq_len: usize) -> Result<(SequenceDataset, Tensor, Option<Tensor>, Tensor)> {
    let stats = ck
        .normalization
        .as_ref()
        .ok_or_else(|| DsvbError::Checkpoint("checkpoint has no normalization statistics".into()))?;
    let ds = load_csv(input, Domain::Source)?;
    let model = ck.build()?;
    if ds.n_y() != model.n_y() {
        return Err(DsvbError::shape(
            "infer",
            format!("input has {} measurement channels, model expects {}", ds.n_y(), model.n_y()),
        ));
    }
    let est = model.estimate(&stats.normalize_measurements(&ds.measurements)?, seq_len)?;
    let mean = stats.denormalize_states(&est.mean)?;
    let std = est.std.as_ref().map(|s| stats.denormalize_state_std(s)).transpose()?;
    Ok((ds, mean, std, est.mean))
}

fn infer(a: InferArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let (ds, mean, std, _) = estimate_file(&ck, &a.input, a.seq_len)?;
    let cols = StateLayout::columns();
    let mut w = csv::Writer::from_path(&a.out)?;
    let mut header = vec!["t".to_string()];
    header.extend(cols.iter().cloned());
    if std.is_some() {
        header.extend(cols.iter().map(|c| format!("{c}_std")));
    }
    w.write_record(&header)?;
    for r in 0..ds.len() {
        let mut rec = vec![ds.time[r].to_string()];
        rec.extend(mean.row_slice(r).iter().map(f64::to_string));
        if let Some(s) = &std {
            rec.extend(s.row_slice(r).iter().map(f64::to_string));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    log::info!("wrote {} estimates to {}", ds.len(), a.out.display());
    Ok(())
}

fn export_latents(a: ExportArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let mut w = csv::Writer::from_path(&a.out)?;
    let mut header = StateLayout::columns();
    header.push("domain".into());
    w.write_record(&header)?;
    for (path, domain) in [(&a.source, Domain::Source), (&a.target, Domain::Target)] {
        let (ds, mean, _, normalized) = estimate_file(&ck, path, a.seq_len)?;
        let z = if a.normalized { &normalized } else { &mean };
        for r in 0..ds.len() {
            let mut rec: Vec<String> = z.row_slice(r).iter().map(f64::to_string).collect();
            rec.push(domain.as_str().to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let methods: Vec<Method> = if a.methods.is_empty() {
        Method::all().to_vec()
    } else {
        a.methods.iter().map(|m| m.parse()).collect::<Result<_>>()?
    };
    let config: TrainConfig = a.training.config(crate::cells::CellType::Gru);
    let source = match (&a.source_train, &a.source_test, &a.target_train, &a.target_test) {
        (Some(st), Some(se), Some(tt), Some(te)) => DataSource::Csv {
            source_train: st.clone(),
            source_test: se.clone(),
            target_train: tt.clone(),
            target_test: te.clone(),
        },
        (None, None, None, None) => DataSource::Synthetic {
            base: SynthConfig {
                seed: a.data_seed,
                ..SynthConfig::default()
            },
            train_len: a.train_len,
            test_len: a.test_len,
        },
        _ => {
            return Err(DsvbError::InvalidConfig(
                "give all four CSV paths or none of them".into(),
            ))
        }
    };
    let data = build_scenario(a.scenario, &source)?;
    let report = run_experiment(&data, &config, &methods)?;
    fs::create_dir_all(&a.out)?;
    let mut outputs = write_report(&report, &a.out)?;
    print!("{}", report.to_csv());

    let mut m = RunManifest::new(
        "experiment",
        json!({
            "scenario": data.scenario,
            "data_seed": a.data_seed,
            "methods": methods.iter().map(Method::to_string).collect::<Vec<_>>(),
            "train": config,
        }),
    );
    m.seeds = config.seeds.clone();
    if let DataSource::Csv {
        source_train,
        source_test,
        target_train,
        target_test,
    } = &source
    {
        for p in [source_train, source_test, target_train, target_test] {
            m.dataset(p)?;
        }
    }
    outputs.push(a.out.join("manifest.json"));
    m.outputs = outputs;
    m.write(&a.out.join("manifest.json"))
}
