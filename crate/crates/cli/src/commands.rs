use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use gaitrisk::clip::clip_frame_limit;
use gaitrisk::config::{write_stamped_json, write_timestamp, write_with_meta, RunConfig};
use gaitrisk::eval::{run_experiment, train_model, ExperimentReport, Protocol, SelectionSpec, TaskKind};
use gaitrisk::explain::{shap_to_csv, summarize, summary_to_csv, tree_shap, ExplainTarget, Explanation, SummaryRow};
use gaitrisk::forest::RandomForest;
use gaitrisk::formats::{parse_tracks, read_detections, tracks_to_jsonl};
use gaitrisk::isolation::{select_participant, IsolationReport};
use gaitrisk::pipeline::build_feature_table;
use gaitrisk::synth::generate_dataset;
use gaitrisk::table::FeatureTable;
use gaitrisk::tracker::track;
use gaitrisk::{load_manifest, Error, Result, Track};
use log::info;
use serde_json::json;

use crate::{Cli, Command, ModelArgs, ProtocolArg, ProtocolArgs, SelectionArg, TaskArg};

pub fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.paths.out_dir = out.clone();
    }
    let name = command_name(&cli.command);
    apply_overrides(&mut config, &cli.command);
    config.validate()?;
    let out = config.paths.out_dir.clone();
    fs::create_dir_all(&out)?;

    match &cli.command {
        Command::Synth(_) => synth(&config, &out),
        Command::Track(a) => track_cmd(&config, &out, &a.detections),
        Command::Isolate(a) => isolate_cmd(&config, &out, &a.tracks, a.video_id.as_deref(), a.fps),
        Command::Features(_) => features_cmd(&config, &out).map(|_| ()),
        Command::Train(a) => {
            let table = FeatureTable::read(&a.features).map_err(|e| e.in_stage("features"))?;
            train_cmd(&config, &out, &table).map(|_| ())
        }
        Command::Eval(a) => {
            let table = FeatureTable::read(&a.features).map_err(|e| e.in_stage("features"))?;
            eval_cmd(&config, &out, &table).map(|_| ())
        }
        Command::Explain(a) => {
            let forest = read_model(&a.model)?;
            let table = FeatureTable::read(&a.features).map_err(|e| e.in_stage("features"))?;
            explain_cmd(&config, &out, &forest, &table)
        }
        Command::Pipeline(_) => {
            let table = features_cmd(&config, &out)?;
            let report = eval_cmd(&config, &out, &table)?;
            let forest = train_cmd(&config, &out, &table)?;
            explain_cmd(&config, &out, &forest, &table)?;
            println!("{}", report.render_table());
            Ok(())
        }
    }?;
    write_timestamp(&out, name)?;
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Synth(_) => "synth",
        Command::Track(_) => "track",
        Command::Isolate(_) => "isolate",
        Command::Features(_) => "features",
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::Explain(_) => "explain",
        Command::Pipeline(_) => "pipeline",
    }
}

fn apply_overrides(config: &mut RunConfig, command: &Command) {
    match command {
        Command::Synth(a) => {
            let s = &mut config.synth;
            set(&mut s.n_per_class, a.n_per_class);
            set(&mut s.sites, a.sites);
            set(&mut s.frames, a.frames);
            set(&mut s.fps, a.fps);
            set(&mut s.severity_jitter, a.severity_jitter);
            set(&mut s.noise_sigma, a.noise_sigma);
        }
        Command::Track(a) => {
            let t = &mut config.tracker;
            set(&mut t.iou_threshold, a.iou_threshold);
            set(&mut t.max_age, a.max_age);
            set(&mut t.min_hits, a.min_hits);
            set(&mut t.min_confidence, a.min_confidence);
        }
        Command::Isolate(a) => set(&mut config.clip.seconds, a.clip_seconds),
        Command::Features(a) => set_path(&mut config.paths.manifest, &a.manifest),
        Command::Train(a) => apply_model(config, &a.model),
        Command::Eval(a) => {
            apply_model(config, &a.model);
            apply_protocol(config, &a.protocol);
        }
        Command::Explain(_) => {}
        Command::Pipeline(a) => {
            set_path(&mut config.paths.manifest, &a.manifest);
            apply_model(config, &a.model);
            apply_protocol(config, &a.protocol);
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: &Option<PathBuf>) {
    if value.is_some() {
        slot.clone_from(value);
    }
}

fn apply_model(config: &mut RunConfig, m: &ModelArgs) {
    if let Some(t) = m.task {
        config.eval.task = match t {
            TaskArg::RiskBinary => TaskKind::RiskBinary,
            TaskArg::SeverityRegression => TaskKind::SeverityRegression,
            TaskArg::Severity4class => TaskKind::Severity4Class,
        };
    }
    set(&mut config.forest.n_trees, m.n_trees);
    if let Some(s) = m.selection {
        config.selection = match s {
            SelectionArg::All => SelectionSpec::All,
            SelectionArg::Rfecv => SelectionSpec::Rfecv {
                step: m.rfecv_step.unwrap_or(1),
                folds: 5,
                n_trees: None,
            },
            SelectionArg::ImportanceTopk => SelectionSpec::ImportanceTopk {
                k: m.k.unwrap_or(15),
                n_trees: None,
            },
            SelectionArg::RiskFeatures => SelectionSpec::Preset {
                name: "risk_features".into(),
            },
            SelectionArg::SeverityFeatures => SelectionSpec::Preset {
                name: "severity_features".into(),
            },
        };
    }
}

fn apply_protocol(config: &mut RunConfig, p: &ProtocolArgs) {
    let kind = p.protocol.or(match (&config.eval.protocol, &p.site) {
        (_, Some(_)) => Some(ProtocolArg::LeaveOneSiteOut),
        _ => None,
    });
    match kind {
        Some(ProtocolArg::KFold) => {
            let folds = p.folds.unwrap_or(match config.eval.protocol {
                Protocol::KFold { folds } => folds,
                Protocol::LeaveOneSiteOut { .. } => 10,
            });
            config.eval.protocol = Protocol::KFold { folds };
        }
        Some(ProtocolArg::LeaveOneSiteOut) => {
            config.eval.protocol = Protocol::LeaveOneSiteOut { site: p.site.clone() };
        }
        None => {
            if let (Some(f), Protocol::KFold { folds }) = (p.folds, &mut config.eval.protocol) {
                *folds = f;
            }
        }
    }
    set(&mut config.eval.repeats, p.repeats);
}

fn synth(config: &RunConfig, out: &Path) -> Result<()> {
    let manifest = generate_dataset(&config.synth, config.seed, out).map_err(|e| e.in_stage("synth"))?;
    let path = out.join("manifest.jsonl");
    // rewrite through the helper so the manifest gets its provenance sidecar
    write_with_meta(&path, &fs::read_to_string(&path)?, config)?;
    info!("wrote {} videos to {}", manifest.len(), out.display());
    println!("{}", path.display());
    Ok(())
}

fn stem(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.split('.').next().unwrap_or_default().to_string()
}

fn track_cmd(config: &RunConfig, out: &Path, detections: &Path) -> Result<()> {
    let dets = read_detections(detections).map_err(|e| e.in_stage("track"))?;
    let tracks = track(&dets, &config.tracker).map_err(|e| e.in_stage("track"))?;
    let path = out.join(format!("{}.tracks.jsonl", stem(detections)));
    write_with_meta(&path, &tracks_to_jsonl(&tracks)?, config)?;
    info!("{} tracks", tracks.len());
    println!("{}", path.display());
    Ok(())
}

fn isolate_cmd(config: &RunConfig, out: &Path, tracks_path: &Path, video_id: Option<&str>, fps: f64) -> Result<()> {
    let video = video_id.map_or_else(|| stem(tracks_path), str::to_string);
    let text = fs::read_to_string(tracks_path)?;
    let limit = clip_frame_limit(config.clip.seconds, fps);
    let tracks: Vec<Track> = parse_tracks(&text, tracks_path)
        .map_err(|e| e.in_stage("isolate"))?
        .into_iter()
        .map(|t| t.truncated(limit))
        .filter(|t| !t.is_empty())
        .collect();
    let report: IsolationReport = select_participant(&tracks, &config.isolation)
        .map_err(|e| Error::Record {
            video_id: video.clone(),
            source: Box::new(e),
        }
        .in_stage("isolate"))?;
    let body = json!({
        "video_id": video,
        "selected_track": report.selected_track,
        "scores": report.scores,
    });
    let path = out.join(format!("{video}.isolation.json"));
    write_stamped_json(&path, config, &body)?;
    println!("{}", serde_json::to_string(&body)?);
    Ok(())
}

fn features_cmd(config: &RunConfig, out: &Path) -> Result<FeatureTable> {
    let manifest_path = config
        .paths
        .manifest
        .as_ref()
        .ok_or_else(|| Error::Config("no manifest: pass --manifest or set paths.manifest".into()))?;
    let manifest = load_manifest(manifest_path).map_err(|e| e.in_stage("manifest"))?;
    let (table, audits) = build_feature_table(&manifest, &config.pipeline())?;
    write_with_meta(&out.join("features.csv"), &table.to_csv()?, config)?;
    write_stamped_json(&out.join("isolation_audit.json"), config, &audits)?;
    info!("{} videos, {} features", table.len(), table.feature_names.len());
    Ok(table)
}

fn train_cmd(config: &RunConfig, out: &Path, table: &FeatureTable) -> Result<RandomForest> {
    let forest = config.train_forest();
    let model = train_model(table, config.eval.task, &config.selection, &forest, forest.seed).map_err(|e| e.in_stage("train"))?;
    let body = json!({
        "task": config.eval.task,
        "model": serde_json::from_str::<serde_json::Value>(&model.to_json()?)?,
    });
    write_stamped_json(&out.join("model.json"), config, &body)?;
    info!("trained on {} features", model.feature_names.len());
    Ok(model)
}

fn read_model(path: &Path) -> Result<RandomForest> {
    let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    // accepts both stamped model files and bare serialized forests
    let model = value.pointer("/result/model").unwrap_or(&value);
    RandomForest::from_json(&model.to_string()).map_err(|e| e.in_stage("load model"))
}

fn eval_cmd(config: &RunConfig, out: &Path, table: &FeatureTable) -> Result<ExperimentReport> {
    let report = run_experiment(table, &config.eval_config(), config.seed).map_err(|e| e.in_stage("eval"))?;
    write_stamped_json(&out.join("report.json"), config, &report)?;
    write_with_meta(&out.join("report.txt"), &report.render_table(), config)?;
    write_with_meta(&out.join("scatter.csv"), &report.scatter_csv()?, config)?;
    println!("{}", out.join("report.json").display());
    Ok(report)
}

fn explain_cmd(config: &RunConfig, out: &Path, forest: &RandomForest, table: &FeatureTable) -> Result<()> {
    let sub = table.select_named(&forest.feature_names).map_err(|e| e.in_stage("explain"))?;
    let target = ExplainTarget::default_for(forest);
    let explanations: Vec<Explanation> = (0..sub.len())
        .map(|i| {
            tree_shap(forest, &sub.row(i), target).map_err(|e| Error::Record {
                video_id: sub.rows[i].video_id.clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("explain"))?;
    let ids: Vec<String> = sub.rows.iter().map(|r| r.video_id.clone()).collect();
    let summary: Vec<SummaryRow> = summarize(&explanations, &forest.feature_names);
    write_with_meta(&out.join("shap_values.csv"), &shap_to_csv(&ids, &explanations, &forest.feature_names)?, config)?;
    write_with_meta(&out.join("shap_summary.csv"), &summary_to_csv(&summary)?, config)?;
    let top: BTreeMap<&str, f64> = summary.iter().take(5).map(|r| (r.feature.as_str(), r.mean_abs_shap)).collect();
    info!("top features by mean |shap|: {top:?}");
    println!("{}", out.join("shap_summary.csv").display());
    Ok(())
}
