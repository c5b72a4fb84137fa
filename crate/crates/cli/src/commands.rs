use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use snapdial::analysis::{config_label, decode_turn, gate_stats, gates_csv, heatmap_from, trace_from, HeatMap, NeuronTrace};
use snapdial::corpus::{build_vocab, CorpusFile, Lexicon};
use snapdial::decoding::{decode_dialogues, from_jsonl, respond, to_jsonl, BeamConfig, Conversation, DecodeRecord};
use snapdial::evaluation::{evaluate_records, paired_csv, reports_csv, MetricReport, SeedMetrics, TopKMode};
use snapdial::experiment::{grid_rows, run_seed, split_corpus, synthetic_corpus, GridRow, Setup, SplitIds};
use snapdial::model::{Model, World};
use snapdial::tracker::{tracker_accuracy, train_trackers as fit_trackers, TrackerHyper};
use snapdial::training::{prepare_all, run_seeds, Checkpoint, TrainConfig, TrainHistory};

use crate::data::{self, create_dir, read_json, require, write_json, write_text, CorpusDir};
use crate::error::{CliError, Stage, StageExt};
use crate::manifest::RunManifest;
use crate::{AnalyzeArgs, ChatArgs, DecodeArgs, EvalArgs, GenCorpusArgs, ServeArgs, TrainArgs, TrainTrackersArgs};

pub fn gen_corpus(a: &GenCorpusArgs) -> Result<(), CliError> {
    if a.dialogues < 5 {
        return Err(CliError::usage("--dialogues must be at least 5"));
    }
    let (ontology, database, dialogues) = synthetic_corpus(a.dialogues, a.seed).stage(Stage::Corpus)?;
    let splits = split_corpus(&dialogues, a.seed).stage(Stage::Corpus)?;
    create_dir(&a.out, Stage::Corpus)?;
    let file = CorpusFile {
        ontology: ontology.clone(),
        dialogues,
    };
    write_json(&a.out.join(data::CORPUS), &file, Stage::Corpus)?;
    write_json(&a.out.join(data::ONTOLOGY), &ontology, Stage::Corpus)?;
    write_json(&a.out.join(data::DB), &database, Stage::Corpus)?;
    write_json(&a.out.join(data::SPLITS), &SplitIds::of(&splits), Stage::Corpus)?;
    let mut m = RunManifest::new("gen-corpus", &a.out);
    m.corpus_hash = Some(crate::manifest::sha256_file(&a.out.join(data::CORPUS))?);
    m.seeds = vec![a.seed];
    for f in [data::CORPUS, data::ONTOLOGY, data::DB, data::SPLITS] {
        m.add(f)?;
    }
    m.write("corpus.manifest.json")?;
    println!(
        "wrote {} dialogues ({} train / {} valid / {} test) to {}",
        file.dialogues.len(),
        splits.train.len(),
        splits.valid.len(),
        splits.test.len(),
        a.out.display()
    );
    Ok(())
}

pub fn train_trackers(a: &TrainTrackersArgs) -> Result<(), CliError> {
    let corpus = CorpusDir::load(&a.corpus)?;
    let hyper = TrackerHyper {
        lr: a.tracker_lr,
        max_epochs: a.tracker_epochs,
        seed: a.seed,
        ..TrackerHyper::default()
    };
    let ontology = &corpus.file.ontology;
    let trackers = fit_trackers(ontology, &corpus.splits.train, &corpus.splits.valid, &hyper).stage(Stage::Trackers)?;
    let vocab = build_vocab(ontology, &corpus.splits.train, a.min_count).stage(Stage::Trackers)?;
    write_json(&a.corpus.join(data::TRACKERS), &trackers, Stage::Trackers)?;
    write_json(&a.corpus.join(data::VOCAB), &vocab, Stage::Trackers)?;
    let mut m = RunManifest::new("train-trackers", &a.corpus);
    m.corpus_hash = Some(corpus.hash.clone());
    m.seeds = vec![a.seed];
    m.add(data::TRACKERS)?;
    m.add(data::VOCAB)?;
    m.write("trackers.manifest.json")?;
    let acc = tracker_accuracy(&trackers, ontology, &corpus.splits.valid);
    for (name, a) in ontology.tracker_names().iter().zip(acc) {
        println!("{name:<12} valid accuracy {:.3}", a);
    }
    println!("vocabulary: {} tokens", vocab.len());
    Ok(())
}

fn setup_of(corpus: &CorpusDir) -> Result<Setup, CliError> {
    let (world, vocab) = corpus.world()?;
    Ok(Setup {
        world,
        dialogues: corpus.file.dialogues.clone(),
        splits: corpus.splits.clone(),
        vocab,
    })
}

fn family_dir(root: &Path, config: &TrainConfig) -> PathBuf {
    root.join(&config.family_hash()[..16])
}

fn seed_dir(root: &Path, config: &TrainConfig) -> PathBuf {
    family_dir(root, config).join(config.seed.to_string())
}

/// Write the seed-independent config of a run family.
fn write_family(root: &Path, config: &TrainConfig) -> Result<(), CliError> {
    let family = TrainConfig {
        seed: 0,
        ..config.clone()
    };
    let text = serde_json::to_string_pretty(&family).expect("config serialises");
    write_text(&family_dir(root, config).join(data::CONFIG), &text, Stage::Train)
}

fn save_training(
    root: &Path,
    config: &TrainConfig,
    model: &Model,
    world: &World,
    history: &TrainHistory,
    corpus_hash: &str,
) -> Result<RunManifest, CliError> {
    let dir = seed_dir(root, config);
    create_dir(&dir, Stage::Train)?;
    Checkpoint::new(model, world)
        .save(&dir.join(data::CHECKPOINT))
        .stage(Stage::Train)?;
    write_text(&dir.join(data::HISTORY), &history.to_csv(), Stage::Train)?;
    let mut m = RunManifest::new("train", &dir);
    m.config_hash = Some(config.family_hash());
    m.corpus_hash = Some(corpus_hash.to_string());
    m.seeds = vec![config.seed];
    m.add(data::CHECKPOINT)?;
    m.add(data::HISTORY)?;
    Ok(m)
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    if a.seeds == 0 {
        return Err(CliError::usage("--seeds must be positive"));
    }
    let config = a.config.resolve(a.seed)?;
    let corpus = CorpusDir::load(&a.corpus)?;
    let (world, vocab) = corpus.world()?;
    write_family(&a.out, &config)?;
    let runs = run_seeds(&config, &world, &vocab, &corpus.splits.train, &corpus.splits.valid, a.seeds);
    let mut failed = Vec::new();
    for run in runs {
        let cfg = TrainConfig {
            seed: run.seed,
            ..config.clone()
        };
        match run.result {
            Ok((model, history)) => {
                let m = save_training(&a.out, &cfg, &model, &world, &history, &corpus.hash)?;
                m.write(data::MANIFEST)?;
                println!(
                    "seed {}: best epoch {} of {} (validLL {:.4}) -> {}",
                    run.seed,
                    history.best_epoch,
                    history.stop_epoch,
                    history.best_valid_ll(),
                    m.out_dir
                );
            }
            Err(e) => {
                eprintln!("seed {} failed: {e}", run.seed);
                failed.push(run.seed);
            }
        }
    }
    if failed.len() == a.seeds {
        return Err(CliError::at(Stage::Train, "every seed failed"));
    }
    Ok(())
}

fn write_dump(path: &Path, records: &[DecodeRecord], stage: Stage) -> Result<(), CliError> {
    write_text(path, &to_jsonl(records), stage)
}

pub fn decode(a: &DecodeArgs) -> Result<(), CliError> {
    require(&a.checkpoint)?;
    let corpus = CorpusDir::load(&a.corpus)?;
    let dialogues = corpus.split(&a.split)?;
    let ckpt = data::load_checkpoint(&a.checkpoint)?;
    let (model, world) = ckpt.restore().stage(Stage::Decode)?;
    let seed = a.seed.unwrap_or(model.config.seed);
    let records = decode_dialogues(&model, &world, dialogues, &a.beam.config(), seed).stage(Stage::Decode)?;
    let out = a.out.clone().unwrap_or_else(|| {
        a.checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join(data::DECODE)
    });
    write_dump(&out, &records, Stage::Decode)?;
    let dir = out.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut m = RunManifest::new("decode", &dir);
    m.config_hash = Some(model.config.family_hash());
    m.corpus_hash = Some(corpus.hash.clone());
    m.seeds = vec![seed];
    m.add(out.file_name().map(PathBuf::from).unwrap_or_else(|| out.clone()))?;
    m.write("decode.manifest.json")?;
    println!("decoded {} turns to {}", records.len(), out.display());
    Ok(())
}

/// Train, decode and score one seed, writing its run directory.
fn eval_seed(setup: &Setup, config: &TrainConfig, beam: &BeamConfig, root: &Path, corpus_hash: &str) -> Result<SeedMetrics, CliError> {
    let run = run_seed(setup, config, beam).stage(Stage::Eval)?;
    let mut m = save_training(root, config, &run.model, &setup.world, &run.history, corpus_hash)?;
    let dir = seed_dir(root, config);
    write_dump(&dir.join(data::DECODE), &run.records, Stage::Eval)?;
    write_json(&dir.join(data::METRICS), &run.metrics, Stage::Eval)?;
    m.command = "eval".into();
    m.add(data::DECODE)?;
    m.add(data::METRICS)?;
    m.write(data::MANIFEST)?;
    Ok(run.metrics)
}

/// Grid position of a configuration, for a stable table order.
fn table_key(c: &TrainConfig) -> (usize, String, bool) {
    let row = GridRow {
        variant: c.variant,
        attention: c.attention,
        belief: c.belief,
    };
    let pos = grid_rows().iter().position(|r| *r == row).unwrap_or(usize::MAX);
    (pos, format!("{}/{}", c.arch_label(), c.belief), c.snapshot)
}

struct Family {
    config: TrainConfig,
    metrics: Vec<SeedMetrics>,
    incomplete: Vec<u64>,
}

fn write_results(out: &Path, mut families: Vec<Family>, corpus_hash: &str, seeds: Vec<u64>) -> Result<Vec<MetricReport>, CliError> {
    families.sort_by_key(|f| table_key(&f.config));
    let reports: Vec<MetricReport> = families
        .into_iter()
        .map(|f| {
            MetricReport::aggregate(&f.config.arch_label(), f.config.belief, f.config.snapshot, f.metrics, f.incomplete)
        })
        .collect();
    let mut pairs = Vec::new();
    for p in reports.iter().filter(|r| !r.snapshot) {
        if let Some(q) = reports.iter().find(|q| q.snapshot && q.arch == p.arch && q.belief == p.belief) {
            pairs.push((p.clone(), q.clone()));
        }
    }
    create_dir(out, Stage::Eval)?;
    write_text(&out.join("results.csv"), &paired_csv(&pairs), Stage::Eval)?;
    write_text(&out.join("results_long.csv"), &reports_csv(&reports), Stage::Eval)?;
    let json = serde_json::to_string_pretty(&reports).expect("reports serialise");
    write_text(&out.join("results.json"), &json, Stage::Eval)?;
    let mut m = RunManifest::new("eval", out);
    m.corpus_hash = Some(corpus_hash.to_string());
    m.seeds = seeds;
    for f in ["results.csv", "results_long.csv", "results.json"] {
        m.add(f)?;
    }
    m.write(data::MANIFEST)?;
    Ok(reports)
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    if a.seeds == 0 {
        return Err(CliError::usage("--seeds must be positive"));
    }
    let corpus = CorpusDir::load(&a.corpus)?;
    let reports = match &a.runs {
        Some(runs) => rescore(runs, &corpus, &a.beam.config(), &a.out)?,
        None => {
            let base = a.config.resolve(a.seed)?;
            let setup = setup_of(&corpus)?;
            let rows = if a.grid {
                grid_rows()
            } else {
                vec![GridRow {
                    variant: base.variant,
                    attention: base.attention,
                    belief: base.belief,
                }]
            };
            let root = a.out.join("runs");
            let seeds: Vec<u64> = (0..a.seeds as u64).map(|k| base.seed + k).collect();
            let mut families = Vec::new();
            for row in rows {
                for snapshot in [false, true] {
                    let config = row.config(&base, snapshot);
                    write_family(&root, &config)?;
                    let mut family = Family {
                        config: config.clone(),
                        metrics: Vec::new(),
                        incomplete: Vec::new(),
                    };
                    for &seed in &seeds {
                        let cfg = TrainConfig { seed, ..config.clone() };
                        match eval_seed(&setup, &cfg, &a.beam.config(), &root, &corpus.hash) {
                            Ok(m) => {
                                println!(
                                    "{}/{}/{} seed {seed}: success {:.1} slot {:.1} t5 {:.4} t1 {:.4}",
                                    cfg.arch_label(),
                                    cfg.belief,
                                    if snapshot { "snapshot" } else { "plain" },
                                    m.success,
                                    m.slot_match,
                                    m.t5_bleu,
                                    m.t1_bleu
                                );
                                family.metrics.push(m);
                            }
                            Err(e) => {
                                eprintln!("{} seed {seed} failed: {e}", cfg.arch_label());
                                family.incomplete.push(seed);
                            }
                        }
                    }
                    families.push(family);
                }
            }
            write_results(&a.out, families, &corpus.hash, seeds)?
        }
    };
    for r in &reports {
        println!(
            "{:<12} {:<8} {:<5} success {:6.2} ± {:5.2}  slot {:6.2}  t5 {:.4}  t1 {:.4}  seeds {}",
            r.arch,
            r.belief.to_string(),
            r.snapshot,
            r.success.mean,
            r.success.std,
            r.slot_match.mean,
            r.t5_bleu.mean,
            r.t1_bleu.mean,
            r.seed_count()
        );
    }
    if reports.iter().all(|r| r.seed_count() == 0) {
        return Err(CliError::at(Stage::Eval, "no configuration produced results"));
    }
    Ok(())
}

/// Metrics from the decode dumps under `runs/<hash>/<seed>/`. Seeds with a
/// checkpoint but no dump are decoded first.
fn rescore(runs: &Path, corpus: &CorpusDir, beam: &BeamConfig, out: &Path) -> Result<Vec<MetricReport>, CliError> {
    require(runs)?;
    let mut families = Vec::new();
    let mut all_seeds = Vec::new();
    for fam in sorted_dirs(runs)? {
        let config_path = fam.join(data::CONFIG);
        if !config_path.exists() {
            continue;
        }
        let config: TrainConfig = read_json(&config_path, Stage::Eval)?;
        let mut family = Family {
            config,
            metrics: Vec::new(),
            incomplete: Vec::new(),
        };
        let mut seed_dirs: Vec<(u64, PathBuf)> = sorted_dirs(&fam)?
            .into_iter()
            .filter_map(|d| Some((d.file_name()?.to_str()?.parse().ok()?, d)))
            .collect();
        seed_dirs.sort();
        for (seed, dir) in seed_dirs {
            let dump = dir.join(data::DECODE);
            if !dump.exists() {
                let ckpt_path = dir.join(data::CHECKPOINT);
                if !ckpt_path.exists() {
                    family.incomplete.push(seed);
                    continue;
                }
                let (model, world) = data::load_checkpoint(&ckpt_path)?.restore().stage(Stage::Decode)?;
                let records = decode_dialogues(&model, &world, &corpus.splits.test, beam, seed).stage(Stage::Decode)?;
                write_dump(&dump, &records, Stage::Decode)?;
                let mut m = RunManifest::new("decode", &dir);
                m.config_hash = Some(model.config.family_hash());
                m.corpus_hash = Some(corpus.hash.clone());
                m.seeds = vec![seed];
                m.add(data::DECODE)?;
                m.write("decode.manifest.json")?;
            }
            let text = std::fs::read_to_string(&dump).map_err(|e| CliError::io(Stage::Eval, &dump, e))?;
            let records = from_jsonl(&text).stage(Stage::Eval)?;
            family
                .metrics
                .push(evaluate_records(seed, &records, &corpus.database, TopKMode::Best));
            if !all_seeds.contains(&seed) {
                all_seeds.push(seed);
            }
        }
        families.push(family);
    }
    if families.is_empty() {
        return Err(CliError::usage(format!("no run families under {}", runs.display())));
    }
    all_seeds.sort();
    write_results(out, families, &corpus.hash, all_seeds)
}

fn sorted_dirs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(Stage::Eval, dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    v.sort();
    Ok(v)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct TurnExport<T> {
    checkpoint: String,
    dialogue_id: String,
    turn: usize,
    #[serde(flatten)]
    payload: T,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct EntropyRow {
    checkpoint: String,
    mean_entropy: f64,
    rows: usize,
}

pub fn analyze(a: &AnalyzeArgs) -> Result<(), CliError> {
    let corpus = CorpusDir::load(&a.corpus)?;
    for c in &a.checkpoint {
        require(c)?;
    }
    let beam = a.beam.config();
    let mut stats = Vec::new();
    let mut heatmaps: Vec<TurnExport<HeatMap>> = Vec::new();
    let mut traces: Vec<TurnExport<NeuronTrace>> = Vec::new();
    let mut entropy = Vec::new();
    for path in &a.checkpoint {
        let (model, world) = data::load_checkpoint(path)?.restore().stage(Stage::Analyze)?;
        let label = format!("{}/seed{}", config_label(&model), model.config.seed);
        let prepared = prepare_all(&world, &model, &corpus.splits.test, model.config.seed);
        let inputs: Vec<_> = prepared.iter().flatten().cloned().collect();
        let mut g = gate_stats(&model, &inputs).stage(Stage::Analyze)?;
        g.config = label.clone();
        stats.push(g);
        let mut h_total = 0.0;
        let mut h_rows = 0usize;
        let turns = corpus
            .splits
            .test
            .iter()
            .zip(&prepared)
            .flat_map(|(d, ins)| ins.iter().enumerate().map(move |(t, i)| (d.id.clone(), t, i)))
            .take(a.turns);
        for (dialogue_id, turn, input) in turns {
            let decoded = decode_turn(&model, input, &beam).stage(Stage::Analyze)?;
            if model.config.attention {
                let map = heatmap_from(&model, &decoded).stage(Stage::Analyze)?;
                h_total += map.mean_entropy() * map.rows.len() as f64;
                h_rows += map.rows.len();
                heatmaps.push(TurnExport {
                    checkpoint: label.clone(),
                    dialogue_id: dialogue_id.clone(),
                    turn,
                    payload: map,
                });
            }
            if model.config.snapshot {
                traces.push(TurnExport {
                    checkpoint: label.clone(),
                    dialogue_id,
                    turn,
                    payload: trace_from(&model, &decoded).stage(Stage::Analyze)?,
                });
            }
        }
        if h_rows > 0 {
            entropy.push(EntropyRow {
                checkpoint: label,
                mean_entropy: h_total / h_rows as f64,
                rows: h_rows,
            });
        }
    }
    create_dir(&a.out, Stage::Analyze)?;
    write_text(&a.out.join("gates.csv"), &gates_csv(&stats), Stage::Analyze)?;
    write_json(&a.out.join("gates.json"), &stats, Stage::Analyze)?;
    write_json(&a.out.join("heatmaps.json"), &heatmaps, Stage::Analyze)?;
    write_json(&a.out.join("traces.json"), &traces, Stage::Analyze)?;
    write_json(&a.out.join("entropy.json"), &entropy, Stage::Analyze)?;
    let mut m = RunManifest::new("analyze", &a.out);
    m.corpus_hash = Some(corpus.hash.clone());
    for f in ["gates.csv", "gates.json", "heatmaps.json", "traces.json", "entropy.json"] {
        m.add(f)?;
    }
    m.write(data::MANIFEST)?;
    print!("{}", gates_csv(&stats));
    println!(
        "{} heat maps, {} traces written to {}",
        heatmaps.len(),
        traces.len(),
        a.out.display()
    );
    Ok(())
}

pub fn serve(a: &ServeArgs) -> Result<(), CliError> {
    use snapdial_server::{AppState, Loaded};
    let loaded = match &a.checkpoint {
        Some(p) => {
            require(p)?;
            let ckpt = data::load_checkpoint(p)?;
            Some(Loaded::from_checkpoint(&ckpt, a.beam.config()).stage(Stage::Serve)?)
        }
        None => None,
    };
    let addr: std::net::SocketAddr = format!("{}:{}", a.bind, a.port)
        .parse()
        .map_err(|e| CliError::usage(format!("invalid bind address: {e}")))?;
    let runtime = tokio::runtime::Runtime::new().stage(Stage::Serve)?;
    println!("serving on http://{addr}");
    runtime
        .block_on(snapdial_server::serve(addr, AppState::new(loaded)))
        .stage(Stage::Serve)
}

pub fn chat(a: &ChatArgs) -> Result<(), CliError> {
    require(&a.checkpoint)?;
    let (model, world) = data::load_checkpoint(&a.checkpoint)?.restore().stage(Stage::Chat)?;
    let lexicon = Lexicon::new(&world.ontology, &world.database);
    let mut conv = Conversation::new(&world, a.seed.unwrap_or(model.config.seed));
    let beam = a.beam.config();
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();
    let prompt = |out: &mut std::io::Stdout| {
        let _ = write!(out, "you> ");
        let _ = out.flush();
    };
    prompt(&mut stdout);
    for line in stdin.lock().lines() {
        let line = line.map_err(|e| CliError::at(Stage::Chat, e))?;
        let text = line.trim();
        if text == "quit" || text == "exit" {
            break;
        }
        if text.is_empty() {
            prompt(&mut stdout);
            continue;
        }
        let turn = respond(&model, &world, &lexicon, &mut conv, text, &beam).stage(Stage::Chat)?;
        println!("system> {}", turn.response.surface);
        if a.skeletal {
            println!("  skeletal: {}", turn.response.skeletal.join(" "));
            let beliefs: BTreeMap<_, _> = turn.input.belief.top_values(&world.ontology);
            println!("  belief: {beliefs:?}  db bin: {}", turn.input.bin);
        }
        prompt(&mut stdout);
    }
    println!();
    Ok(())
}
