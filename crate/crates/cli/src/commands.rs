use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use log::info;
use tidybench::episodes::{generate_split, read_episodes, write_episodes, EpisodeSplit, SplitConfig};
use tidybench::harness::{results_to_jsonl, run_batch, trajectory_to_jsonl, RankerKind, RankerSource, ResultLine, RunConfig};
use tidybench::metrics::{aggregate as aggregate_metrics, es_at_k, AggregateRow, MetricsReport};
use tidybench::planner::PlannerConfig;
use tidybench::preferences::{
    aggregate, annotations_to_csv, fleiss_kappa, fleiss_kappa_by_object, read_annotations, synth_preferences, KappaMode,
    PreferenceTable, SceneVocabulary, SynthPrefsConfig, Vocabulary,
};
use tidybench::ranker::{calibrate_threshold, eval_map, train_cm, EmbeddingRanker, EmbeddingTable, ExternalScores, OracleScores, RandomScores, ScoreModel, TrainConfig};
use tidybench::synth::{structured_embeddings, synth_catalog, synth_scene, SceneGenConfig};
use tidybench::world::{load_scene, write_scene, Catalog, GridScene, ObjectSplit};

use crate::{AgreementArgs, EvalArgs, GenArgs, ReportArgs, RunArgs, SynthArgs, TrainArgs};

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Scene files, expanding directories to their `*.json` entries in name order.
fn load_scenes(paths: &[PathBuf]) -> Result<Vec<GridScene>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        bail!("--scene: no scene files found");
    }
    files.iter().map(|f| load_scene(f).with_context(|| format!("--scene {}", f.display()))).collect()
}

fn load_prefs(path: &Path) -> Result<PreferenceTable> {
    PreferenceTable::load(path).with_context(|| format!("--prefs {}", path.display()))
}

fn load_embeddings(path: Option<&PathBuf>) -> Result<Arc<EmbeddingTable>> {
    let path = path.context("--embeddings is required for this ranker")?;
    Ok(Arc::new(EmbeddingTable::load(path).with_context(|| format!("--embeddings {}", path.display()))?))
}

fn load_model(model: Option<&PathBuf>, embeddings: Option<&PathBuf>) -> Result<EmbeddingRanker> {
    let emb = load_embeddings(embeddings)?;
    let path = model.context("--model is required for --ranker embedding")?;
    EmbeddingRanker::load(path, emb).with_context(|| format!("--model {}", path.display()))
}

fn load_scores(path: Option<&PathBuf>) -> Result<ExternalScores> {
    let path = path.context("--scores is required for --ranker external")?;
    ExternalScores::load(path).with_context(|| format!("--scores {}", path.display()))
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let config = SceneGenConfig { rows: a.size, cols: a.size, rooms: a.rooms, ..SceneGenConfig::default() };
    let mut scenes = Vec::new();
    let scene_dir = a.out.join("scenes");
    fs::create_dir_all(&scene_dir).with_context(|| format!("creating {}", scene_dir.display()))?;
    for i in 0..a.scenes {
        let scene = synth_scene(&format!("scene{i:02}"), &config, a.seed.wrapping_add(i as u64)).context("scene generation")?;
        write_scene(&scene, scene_dir.join(format!("{}.json", scene.id())))?;
        scenes.push(scene);
    }
    let catalog = synth_catalog(a.objects, 0.4, a.seed);
    write(&a.out.join("catalog.json"), &catalog.to_json())?;
    let vocab = SceneVocabulary::from_scenes(&scenes);
    let prefs = SynthPrefsConfig { agreement: a.agreement, ..SynthPrefsConfig::default() };
    let records = synth_preferences(&catalog, &vocab, &prefs, a.seed);
    write(&a.out.join("annotations.csv"), &annotations_to_csv(&records))?;
    let table = aggregate(&records, &Vocabulary::any())?;
    write(&a.out.join("prefs.json"), &table.to_json())?;
    let emb = structured_embeddings(&catalog, &vocab, a.dim, a.noise, a.seed);
    write(&a.out.join("embeddings.txt"), &emb.to_text())?;
    println!("wrote {} scenes, {} objects, {} annotations, {} preference keys to {}", scenes.len(), catalog.objects.len(), records.len(), table.len(), a.out.display());
    Ok(())
}

fn parse_counts(text: &str) -> Result<BTreeMap<EpisodeSplit, usize>> {
    let mut out = BTreeMap::new();
    for part in text.split(',').filter(|p| !p.is_empty()) {
        let (name, n) = part.split_once('=').with_context(|| format!("--counts: expected split=count, got {part:?}"))?;
        let split: EpisodeSplit = name.trim().parse().map_err(|e: String| anyhow::anyhow!("--counts: {e}"))?;
        let n: usize = n.trim().parse().with_context(|| format!("--counts: bad count {n:?}"))?;
        out.insert(split, n);
    }
    Ok(out)
}

pub fn gen(a: GenArgs) -> Result<()> {
    let scenes = load_scenes(&a.scene)?;
    let table = load_prefs(&a.prefs)?;
    let catalog = Catalog::load(&a.catalog).with_context(|| format!("--catalog {}", a.catalog.display()))?;
    let ids: Vec<String> = scenes.iter().map(|s| s.id().to_string()).collect();
    let mut config = SplitConfig::desk_scale(&ids);
    if let Some(c) = &a.counts {
        config.counts = parse_counts(c)?;
    }
    if let Some(m) = a.max_steps {
        config.max_steps = m;
    }
    let splits = generate_split(&config, &scenes, &table, &catalog, a.seed)?;
    for (split, episodes) in &splits {
        let path = a.out.join(format!("{split}.jsonl"));
        fs::create_dir_all(&a.out)?;
        write_episodes(&path, episodes)?;
        println!("{split}: {} episodes -> {}", episodes.len(), path.display());
    }
    Ok(())
}

pub fn run(a: RunArgs) -> Result<()> {
    if a.ne == 0 {
        bail!("--ne must be positive");
    }
    if a.jobs == 0 {
        bail!("--jobs must be positive");
    }
    let scenes: BTreeMap<String, GridScene> = load_scenes(&a.scene)?.into_iter().map(|s| (s.id().to_string(), s)).collect();
    let episodes = read_episodes(&a.episodes).with_context(|| format!("--episodes {}", a.episodes.display()))?;
    let table = load_prefs(&a.prefs)?;
    let model;
    let scores;
    let (source, s_l) = match a.ranker {
        RankerKind::Oracle => (RankerSource::Oracle, OracleScores::THRESHOLD),
        RankerKind::Random => (RankerSource::Random, a.threshold),
        RankerKind::Noisy => {
            if !(0.0..=1.0).contains(&a.noise_p) {
                bail!("--noise-p must lie in [0, 1]");
            }
            (RankerSource::Noisy { p: a.noise_p }, OracleScores::THRESHOLD)
        }
        RankerKind::Embedding => {
            model = load_model(a.model.as_ref(), a.embeddings.as_ref())?;
            (RankerSource::Embedding(&model), a.threshold)
        }
        RankerKind::External => {
            scores = load_scores(a.scores.as_ref())?;
            (RankerSource::External(&scores), a.threshold)
        }
    };
    let config = RunConfig {
        explore: a.explore,
        planner: PlannerConfig { n_e: a.ne, max_steps: a.max_steps, ordering: a.order, s_l },
        seed: a.seed,
        jobs: a.jobs,
        keep_trajectories: true,
    };
    info!("running {} episodes with ranker={} explore={} jobs={}", episodes.len(), a.ranker, a.explore, a.jobs);
    let outputs = run_batch(&scenes, &episodes, &table, &source, &config)?;

    let traj_dir = a.out.join("trajectories");
    fs::create_dir_all(&traj_dir).with_context(|| format!("creating {}", traj_dir.display()))?;
    for o in &outputs {
        write(&traj_dir.join(format!("{}.jsonl", o.line.id)), &trajectory_to_jsonl(&o.trajectory))?;
    }
    let lines: Vec<ResultLine> = outputs.into_iter().map(|o| o.line).collect();
    write(&a.out.join("results.jsonl"), &results_to_jsonl(&lines))?;
    let reports: Vec<MetricsReport> = lines.iter().map(|l| l.metrics.clone()).collect();
    let row = aggregate_metrics(&format!("{}+{}", a.ranker, a.explore), &reports)?;
    print!("{}", AggregateRow::render_text(&[row]));
    Ok(())
}

fn split_objects(catalog: &Catalog, table: &PreferenceTable, split: ObjectSplit) -> BTreeSet<String> {
    let in_table = table.objects();
    catalog.names_in(split).into_iter().filter(|o| in_table.contains(o)).collect()
}

pub fn train(a: TrainArgs) -> Result<()> {
    let table = load_prefs(&a.prefs)?;
    let catalog = Catalog::load(&a.catalog).with_context(|| format!("--catalog {}", a.catalog.display()))?;
    let emb = load_embeddings(Some(&a.embeddings))?;
    let train_objects = split_objects(&catalog, &table, ObjectSplit::Seen);
    let val_objects = split_objects(&catalog, &table, ObjectSplit::ValUnseen);
    let config = TrainConfig {
        hidden: a.hidden,
        hidden_layers: a.layers,
        output: a.output,
        batch_size: a.batch,
        learning_rate: a.lr,
        weight_decay: a.wd,
        epochs: a.epochs,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let val = (!val_objects.is_empty()).then_some(&val_objects);
    let (model, log) = train_cm(emb, &table, &train_objects, val, &config)?;
    fs::create_dir_all(&a.out)?;
    model.save(a.out.join("model.json"))?;
    write(&a.out.join("train_log.json"), &serde_json::to_string_pretty(&log)?)?;
    let calib_objects = if val_objects.is_empty() { &train_objects } else { &val_objects };
    let calib = calibrate_threshold(&model, &table, calib_objects)?;
    write(&a.out.join("calibration.json"), &serde_json::to_string_pretty(&calib)?)?;
    let train_map = eval_map(&model, &table, &train_objects)?;
    println!("train objects {}: ORR mAP {:.3}, OR mAP {:.3}", train_map.objects, train_map.orr, train_map.or);
    if let (Some(orr), Some(or)) = (log.orr_val_map, log.or_val_map) {
        println!("val objects {}: ORR mAP {orr:.3} (epoch {}), OR mAP {or:.3} (epoch {})", val_objects.len(), log.orr_best_epoch, log.or_best_epoch);
    }
    println!("s_L = {:.2} (F1 {:.3})", calib.s_l, calib.f1);
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let table = load_prefs(&a.prefs)?;
    let catalog = Catalog::load(&a.catalog).with_context(|| format!("--catalog {}", a.catalog.display()))?;
    let model: Box<dyn ScoreModel> = match a.ranker {
        RankerKind::Oracle => Box::new(OracleScores::new(&table)),
        RankerKind::Random => Box::new(RandomScores::new(a.seed)),
        RankerKind::Embedding => Box::new(load_model(a.model.as_ref(), a.embeddings.as_ref())?),
        RankerKind::External => Box::new(load_scores(a.scores.as_ref())?),
        RankerKind::Noisy => bail!("--ranker noisy is episode-specific and cannot be evaluated on its own"),
    };
    let mut rows = BTreeMap::new();
    println!("{:<12} {:>8} {:>8} {:>8}", "split", "objects", "ORR", "OR");
    for split in ObjectSplit::ALL {
        let objects = split_objects(&catalog, &table, split);
        if objects.is_empty() {
            continue;
        }
        let r = eval_map(&model, &table, &objects)?;
        println!("{:<12} {:>8} {:>8.3} {:>8.3}", split.as_str(), r.objects, r.orr, r.or);
        rows.insert(split.as_str(), r);
    }
    if let Some(out) = &a.out {
        write(out, &serde_json::to_string_pretty(&rows)?)?;
    }
    Ok(())
}

pub fn agreement(a: AgreementArgs) -> Result<()> {
    let records = read_annotations(&a.prefs).with_context(|| format!("--prefs {}", a.prefs.display()))?;
    let three = fleiss_kappa(&records, KappaMode::ThreeWay)?;
    let merged = fleiss_kappa(&records, KappaMode::MergedIncorrect)?;
    println!("kappa (correct/misplaced/implausible): {three:.4}");
    println!("kappa (correct/incorrect): {merged:.4}");
    if let Some(out) = &a.out {
        let three = fleiss_kappa_by_object(&records, KappaMode::ThreeWay);
        let merged = fleiss_kappa_by_object(&records, KappaMode::MergedIncorrect);
        let fmt = |r: Option<&Result<f64, _>>| match r {
            Some(Ok(k)) => format!("{k}"),
            _ => String::new(),
        };
        let mut csv = String::from("object,kappa_three_way,kappa_merged\n");
        for object in three.keys() {
            csv.push_str(&format!("{object},{},{}\n", fmt(three.get(object)), fmt(merged.get(object))));
        }
        write(out, &csv)?;
    }
    Ok(())
}

fn label_of(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .or_else(|| path.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn report(a: ReportArgs) -> Result<()> {
    let table = a.prefs.as_deref().map(load_prefs).transpose()?;
    if a.es_at_k.is_some() && table.is_none() {
        bail!("--es-at-k needs --prefs");
    }
    let mut rows = Vec::new();
    let mut es_k = Vec::new();
    for path in &a.results {
        let lines = tidybench::harness::read_results(path).with_context(|| format!("reading {}", path.display()))?;
        let reports: Vec<MetricsReport> = lines.iter().map(|l| l.metrics.clone()).collect();
        let label = label_of(path);
        rows.push(aggregate_metrics(&label, &reports).with_context(|| format!("{} has no results", path.display()))?);
        if let (Some(k_max), Some(table)) = (a.es_at_k, &table) {
            let results: Vec<_> = lines.into_iter().map(|l| l.result).collect();
            let ks: Vec<Option<f64>> = (1..=k_max).map(|k| es_at_k(&results, table, k)).collect();
            es_k.push((label, ks));
        }
    }
    print!("{}", AggregateRow::render_text(&rows));
    for (label, ks) in &es_k {
        let cells: Vec<String> = ks.iter().enumerate().map(|(k, v)| format!("K={}:{}", k + 1, v.map_or("-".into(), |v| format!("{v:.3}")))).collect();
        println!("ES@K {label}: {}", cells.join(" "));
    }
    if let Some(out) = &a.out {
        write(out, &AggregateRow::render_csv(&rows))?;
    }
    Ok(())
}
