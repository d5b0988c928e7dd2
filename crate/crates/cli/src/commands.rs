use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use ragseco::data::synthetic::{generate, SyntheticConfig};
use ragseco::data::{make_splits, Charset, Dataset, Ddi, SplitPlan};
use ragseco::model::{Checkpoint, GraphInputs, HyperParams, Model, ModelDims};
use ragseco::train::{argmax, compute_metrics, train, LossRecord};
use ragseco::{Error, Result};

use crate::config::{FoldSel, RunConfig};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let drugs = cfg.require("drugs", &cfg.drugs)?;
    let ddis = cfg.require("ddis", &cfg.ddis)?;
    Dataset::load(&drugs, &ddis)
}

fn load_charset(cfg: &RunConfig) -> Result<Charset> {
    match &cfg.charset {
        Some(_) => Charset::load(&cfg.require("charset", &cfg.charset)?),
        None => Ok(Charset::default()),
    }
}

fn load_plan(cfg: &RunConfig, ds: &Dataset) -> Result<SplitPlan> {
    let path = cfg.manifest_path();
    let plan = SplitPlan::load(&path)?;
    plan.validate(ds).map_err(|issues| Error::Data {
        location: Some(path.display().to_string()),
        message: format!("manifest does not fit the dataset: {}", issues.join("; ")),
    })?;
    Ok(plan)
}

fn selected_folds(cfg: &RunConfig, plan: &SplitPlan) -> Result<Vec<usize>> {
    match cfg.fold {
        FoldSel::All => Ok((0..plan.folds.len()).collect()),
        FoldSel::One(f) if f < plan.folds.len() => Ok(vec![f]),
        FoldSel::One(f) => Err(Error::Config(format!(
            "fold {f} not in manifest with {} folds",
            plan.folds.len()
        ))),
    }
}

fn fold_ddis(ds: &Dataset, idx: &[usize]) -> Vec<Ddi> {
    idx.iter().map(|&k| ds.ddis[k]).collect()
}

fn checkpoint_path(explicit: &Option<PathBuf>, cfg: &RunConfig, fold: usize) -> PathBuf {
    explicit.clone().unwrap_or_else(|| cfg.fold_dir(fold).join("checkpoint.txt"))
}

/// Loads a checkpoint with the graph constants of its fold.
fn load_model(path: &Path, cfg: &RunConfig, ds: &Dataset, train_ddis: &[Ddi]) -> Result<(Model, GraphInputs)> {
    let model = Model::from_checkpoint(&Checkpoint::load(path)?)?;
    let inputs = GraphInputs::build(ds, train_ddis, &model.hp, &load_charset(cfg)?)?;
    model.check_inputs(&inputs)?;
    Ok((model, inputs))
}

pub fn split(cfg: &RunConfig) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let plan = make_splits(&ds, cfg.task, cfg.fold_count, cfg.seed)?;
    let path = cfg.manifest_path();
    write_text(&path, &plan.to_manifest())?;
    for (f, fold) in plan.folds.iter().enumerate() {
        println!(
            "fold {f}: train={} test={} known_drugs={} new_drugs={}",
            fold.train.len(),
            fold.test.len(),
            fold.known_drugs.len(),
            fold.new_drugs.len()
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn validate_manifest(cfg: &RunConfig) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let path = cfg.manifest_path();
    let plan = SplitPlan::load(&path)?;
    match plan.validate(&ds) {
        Ok(()) => {
            println!("{}: ok ({} folds, task {})", path.display(), plan.folds.len(), plan.task.number());
            Ok(())
        }
        Err(issues) => {
            for issue in &issues {
                eprintln!("{}: {issue}", path.display());
            }
            Err(Error::Data {
                location: Some(path.display().to_string()),
                message: format!("{} manifest issue(s)", issues.len()),
            })
        }
    }
}

fn train_fold(cfg: &RunConfig, hp: &HyperParams, ds: &Dataset, charset: &Charset, plan: &SplitPlan, f: usize) -> Result<String> {
    let train_ddis = fold_ddis(ds, &plan.folds[f].train);
    let inputs = GraphInputs::build(ds, &train_ddis, hp, charset)?;
    let mut model = Model::new(hp.clone(), cfg.variant, ModelDims::of(&inputs))?;
    let dir = cfg.fold_dir(f);
    let log_path = dir.join("loss.log");
    let mut log = create(&log_path)?;
    writeln!(log, "{}", LossRecord::HEADER).map_err(io_err(&log_path))?;
    let result = train(&mut model, &inputs, &train_ddis, |r| {
        writeln!(log, "{}", r.to_line()).map_err(io_err(&log_path))
    });
    log.flush().map_err(io_err(&log_path))?;
    let records = result.map_err(|e| match e {
        Error::Numerical(m) => Error::Numerical(format!("fold {f}: {m}")),
        other => other,
    })?;
    let ck = dir.join("checkpoint.txt");
    model.to_checkpoint().save(&ck)?;
    let last = records.last().map_or(String::from("no steps"), |r| format!("final L={}", r.total));
    Ok(format!("fold {f}: {} steps, {last}; wrote {}", records.len(), ck.display()))
}

pub fn train_cmd(cfg: &RunConfig) -> Result<()> {
    let hp = cfg.hyperparams(&[])?;
    let ds = load_dataset(cfg)?;
    let charset = load_charset(cfg)?;
    let plan = load_plan(cfg, &ds)?;
    let folds = selected_folds(cfg, &plan)?;
    if cfg.parallel && folds.len() > 1 {
        let results: Vec<Result<String>> = std::thread::scope(|scope| {
            let handles: Vec<_> = folds
                .iter()
                .map(|&f| {
                    let (hp, ds, charset, plan) = (&hp, &ds, &charset, &plan);
                    scope.spawn(move || train_fold(cfg, hp, ds, charset, plan, f))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
        });
        let mut first_err = None;
        for r in results {
            match r {
                Ok(line) => println!("{line}"),
                Err(e) => {
                    eprintln!("error: {e}");
                    first_err.get_or_insert(e);
                }
            }
        }
        return first_err.map_or(Ok(()), Err);
    }
    for f in folds {
        println!("{}", train_fold(cfg, &hp, &ds, &charset, &plan, f)?);
    }
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, checkpoint: &Option<PathBuf>) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let plan = load_plan(cfg, &ds)?;
    for f in selected_folds(cfg, &plan)? {
        let fold = &plan.folds[f];
        let (mut model, inputs) = load_model(&checkpoint_path(checkpoint, cfg, f), cfg, &ds, &fold_ddis(&ds, &fold.train))?;
        let test = fold_ddis(&ds, &fold.test);
        if test.is_empty() {
            return Err(Error::Data {
                location: None,
                message: format!("fold {f} has no test interactions"),
            });
        }
        let pairs: Vec<(usize, usize)> = test.iter().map(|d| (d.a, d.b)).collect();
        let labels: Vec<usize> = test.iter().map(|d| d.event).collect();
        let report = compute_metrics(&model.predict(&inputs, &pairs)?, &labels)?;
        let path = cfg.fold_dir(f).join("metrics.txt");
        write_text(&path, &report.to_text())?;
        for w in &report.warnings {
            log::warn!("fold {f}: {w}");
        }
        println!("fold {f}: {}", report.summary());
    }
    Ok(())
}

/// Reads `drug_a <tab> drug_b` lines; blank lines, `#` comments and a header are skipped.
fn read_pairs(path: &Path) -> Result<Vec<(usize, String, String)>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("drug_id_a") {
            continue;
        }
        let mut cells = line.split('\t').map(str::trim);
        match (cells.next(), cells.next()) {
            (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => out.push((n + 1, a.to_string(), b.to_string())),
            _ => {
                return Err(Error::Data {
                    location: Some(format!("{}:{}", path.display(), n + 1)),
                    message: "expected two tab-separated drug ids".into(),
                })
            }
        }
    }
    Ok(out)
}

pub fn predict(cfg: &RunConfig, checkpoint: &Option<PathBuf>, pairs_path: &Option<PathBuf>, top: Option<usize>) -> Result<()> {
    if pairs_path.is_none() && top.is_none() {
        return Err(Error::Config("predict needs --pairs, --top or both".into()));
    }
    let ds = load_dataset(cfg)?;
    let plan = load_plan(cfg, &ds)?;
    let f = match selected_folds(cfg, &plan)?[..] {
        [f] => f,
        _ => return Err(Error::Config("predict works on a single fold".into())),
    };
    let fold = &plan.folds[f];
    let train_ddis = fold_ddis(&ds, &fold.train);
    let (mut model, inputs) = load_model(&checkpoint_path(checkpoint, cfg, f), cfg, &ds, &train_ddis)?;
    let r = model.dims.num_relations;
    let dir = cfg.fold_dir(f);
    let mut failures = 0;

    if let Some(pairs_path) = pairs_path {
        let ids = ds.id_index();
        let mut known = Vec::new();
        for (line, a, b) in read_pairs(pairs_path)? {
            let loc = format!("{}:{line}", pairs_path.display());
            match (ids.get(a.as_str()), ids.get(b.as_str())) {
                (Some(&i), Some(&j)) if i != j => known.push((i, j, a, b)),
                (Some(_), Some(_)) => {
                    eprintln!("{loc}: drug `{a}` paired with itself");
                    failures += 1;
                }
                (ia, _) => {
                    let bad = if ia.is_none() { &a } else { &b };
                    eprintln!("{loc}: unknown drug id `{bad}`");
                    failures += 1;
                }
            }
        }
        let idx: Vec<(usize, usize)> = known.iter().map(|k| (k.0, k.1)).collect();
        let probs = if idx.is_empty() {
            None
        } else {
            Some(model.predict(&inputs, &idx)?)
        };
        let path = dir.join("predictions.tsv");
        let mut w = create(&path)?;
        let header: Vec<String> = (0..r).map(|c| format!("p{c}")).collect();
        writeln!(w, "drug_id_a\tdrug_id_b\ttop_event\t{}", header.join("\t")).map_err(io_err(&path))?;
        for (k, (_, _, a, b)) in known.iter().enumerate() {
            let row = probs.as_ref().expect("nonempty").row(k);
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(w, "{a}\t{b}\t{}\t{}", argmax(row), cells.join("\t")).map_err(io_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
        println!("fold {f}: {} prediction(s) written to {}", known.len(), path.display());
    }

    if let Some(n) = top {
        let train_pairs: BTreeSet<(usize, usize)> = train_ddis.iter().map(|d| (d.a, d.b)).collect();
        let candidates: Vec<(usize, usize)> = (0..ds.num_drugs())
            .flat_map(|i| (i + 1..ds.num_drugs()).map(move |j| (i, j)))
            .filter(|p| !train_pairs.contains(p))
            .collect();
        let probs = model.predict(&inputs, &candidates)?;
        let path = dir.join(format!("top{n}.tsv"));
        let mut w = create(&path)?;
        writeln!(w, "event\trank\tdrug_id_a\tdrug_id_b\tprobability").map_err(io_err(&path))?;
        for event in 0..r {
            for (rank, k) in top_n(&probs_column(&probs, event), n).into_iter().enumerate() {
                let (i, j) = candidates[k];
                writeln!(
                    w,
                    "{event}\t{}\t{}\t{}\t{}",
                    rank + 1,
                    ds.drugs[i].drug_id,
                    ds.drugs[j].drug_id,
                    probs.at(k, event)
                )
                .map_err(io_err(&path))?;
            }
        }
        w.flush().map_err(io_err(&path))?;
        info!("ranked {} candidate pairs", candidates.len());
        println!("fold {f}: top {n} per event written to {}", path.display());
    }

    if failures > 0 {
        return Err(Error::Data {
            location: pairs_path.as_ref().map(|p| p.display().to_string()),
            message: format!("{failures} pair line(s) could not be scored"),
        });
    }
    Ok(())
}

fn probs_column(probs: &ragseco::autodiff::Tensor, c: usize) -> Vec<f64> {
    (0..probs.shape()[0]).map(|k| probs.at(k, c)).collect()
}

/// Indices of the `n` largest scores, highest first; ties keep input order.
fn top_n(scores: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order.truncate(n);
    order
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let mut syn = SyntheticConfig {
        seed: cfg.seed,
        ..SyntheticConfig::default()
    };
    for (k, v) in &cfg.overrides {
        if !syn.set(k, v)? {
            return Err(Error::Config(format!("unknown generator setting `{k}`")));
        }
    }
    let ds = generate(&syn)?;
    let drugs = cfg.drugs.clone().unwrap_or_else(|| cfg.out.join("drugs.tsv"));
    let ddis = cfg.ddis.clone().unwrap_or_else(|| cfg.out.join("ddis.tsv"));
    for p in [&drugs, &ddis] {
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
    }
    ds.save(&drugs, &ddis)?;
    println!(
        "{} drugs, {} interactions, {} event types -> {}, {}",
        ds.num_drugs(),
        ds.num_ddis(),
        ds.num_relations,
        drugs.display(),
        ddis.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_n_orders_by_score_then_position() {
        assert_eq!(top_n(&[0.1, 0.9, 0.5, 0.9], 3), vec![1, 3, 2]);
        assert_eq!(top_n(&[0.2], 5), vec![0]);
    }
}
