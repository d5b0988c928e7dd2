//! Trains on a generated dataset and prints train/test metrics.
//!
//! `cargo run --release --example synthetic_run -- <task> <variant> <seed> [key=value ...]`

use std::time::Instant;

use ragseco::data::synthetic::{generate, SyntheticConfig};
use ragseco::data::{make_splits, Charset, Task};
use ragseco::model::{GraphInputs, HyperParams, Model, ModelDims, Variant};
use ragseco::train::{evaluate, train};

fn main() -> ragseco::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let task: Task = args.first().map_or("1", String::as_str).parse()?;
    let variant: Variant = args.get(1).map_or("full", String::as_str).parse()?;
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut hp = HyperParams::profile("synthetic", task)?;
    hp.seed = seed;
    let mut syn = SyntheticConfig { seed, ..SyntheticConfig::default() };
    let mut folds: Vec<usize> = vec![0];
    let mut fold_count = 5;
    let mut all_folds = false;
    for kv in args.iter().skip(3) {
        let (k, v) = kv.split_once('=').expect("key=value");
        match k {
            "folds" => fold_count = v.parse().unwrap(),
            "fold" if v == "all" => all_folds = true,
            "fold" => folds = vec![v.parse().unwrap()],
            _ => {
                if !syn.set(k, v)? {
                    hp.set(k, v)?;
                }
            }
        }
    }
    let ds = generate(&syn)?;
    let plan = make_splits(&ds, task, fold_count, seed)?;
    if all_folds {
        folds = (0..fold_count).collect();
    }
    let charset = Charset::default();
    let (mut correct, mut total) = (0.0, 0usize);
    for fold in folds {
        let f = &plan.folds[fold];
        let train_ddis: Vec<_> = f.train.iter().map(|&k| ds.ddis[k]).collect();
        let test_ddis: Vec<_> = f.test.iter().map(|&k| ds.ddis[k]).collect();
        let inputs = GraphInputs::build(&ds, &train_ddis, &hp, &charset)?;
        let mut model = Model::new(hp.clone(), variant, ModelDims::of(&inputs))?;
        let start = Instant::now();
        let log = train(&mut model, &inputs, &train_ddis, |_| Ok(()))?;
        let elapsed = start.elapsed();
        let tr = evaluate(&mut model, &inputs, &train_ddis)?;
        let (first, last) = (log.first().unwrap(), log.last().unwrap());
        println!(
            "fold {fold}: drugs={} ddis={} train={} test={} steps={} time={:.1}s L {:.3}->{:.3}",
            ds.num_drugs(),
            ds.num_ddis(),
            train_ddis.len(),
            test_ddis.len(),
            log.len(),
            elapsed.as_secs_f64(),
            first.total,
            last.total
        );
        println!("  train {}", tr.summary());
        if !test_ddis.is_empty() {
            let te = evaluate(&mut model, &inputs, &test_ddis)?;
            println!("  test  {}", te.summary());
            correct += te.acc * test_ddis.len() as f64;
            total += test_ddis.len();
        }
    }
    if total > 0 {
        println!("pooled test acc {:.4} over {total}", correct / total as f64);
    }
    Ok(())
}
