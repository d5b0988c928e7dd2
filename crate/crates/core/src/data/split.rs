use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::Dataset;
use crate::error::{Error, Result};

/// Evaluation scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    /// Unseen interactions between known drugs.
    KnownKnown = 1,
    /// Interactions between a known and a new drug.
    KnownNew = 2,
    /// Interactions between two new drugs.
    NewNew = 3,
}

impl Task {
    pub fn number(self) -> u8 {
        self as u8
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" => Ok(Task::KnownKnown),
            "2" => Ok(Task::KnownNew),
            "3" => Ok(Task::NewNew),
            other => Err(Error::config(format!("task must be 1, 2 or 3, got `{other}`"))),
        }
    }
}

/// Index lists into `Dataset::ddis` and `Dataset::drugs`, all sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub known_drugs: Vec<usize>,
    pub new_drugs: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    pub task: Task,
    pub seed: u64,
    pub num_drugs: usize,
    pub num_ddis: usize,
    pub folds: Vec<Fold>,
}

fn chunk(len: usize, folds: usize, f: usize) -> std::ops::Range<usize> {
    f * len / folds..(f + 1) * len / folds
}

pub fn make_splits(ds: &Dataset, task: Task, fold_count: usize, seed: u64) -> Result<SplitPlan> {
    if fold_count < 2 {
        return Err(Error::config(format!("need at least 2 folds, got {fold_count}")));
    }
    if ds.num_drugs() == 0 || ds.num_ddis() == 0 {
        return Err(Error::config("cannot split an empty dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all_drugs: Vec<usize> = (0..ds.num_drugs()).collect();
    let mut folds = Vec::with_capacity(fold_count);
    match task {
        Task::KnownKnown => {
            let mut order: Vec<usize> = (0..ds.num_ddis()).collect();
            order.shuffle(&mut rng);
            for f in 0..fold_count {
                let mut test = order[chunk(order.len(), fold_count, f)].to_vec();
                test.sort_unstable();
                let held: BTreeSet<usize> = test.iter().copied().collect();
                let train = (0..ds.num_ddis()).filter(|k| !held.contains(k)).collect();
                folds.push(Fold {
                    train,
                    test,
                    known_drugs: all_drugs.clone(),
                    new_drugs: Vec::new(),
                });
            }
        }
        Task::KnownNew | Task::NewNew => {
            let mut order = all_drugs.clone();
            order.shuffle(&mut rng);
            let want_new = if task == Task::KnownNew { 1 } else { 2 };
            for f in 0..fold_count {
                let mut is_new = vec![false; ds.num_drugs()];
                for &d in &order[chunk(order.len(), fold_count, f)] {
                    is_new[d] = true;
                }
                let mut fold = Fold::default();
                for (k, ddi) in ds.ddis.iter().enumerate() {
                    match is_new[ddi.a] as usize + is_new[ddi.b] as usize {
                        0 => fold.train.push(k),
                        n if n == want_new => fold.test.push(k),
                        _ => {}
                    }
                }
                for d in 0..ds.num_drugs() {
                    if is_new[d] {
                        fold.new_drugs.push(d);
                    } else {
                        fold.known_drugs.push(d);
                    }
                }
                folds.push(fold);
            }
        }
    }
    for (f, fold) in folds.iter().enumerate() {
        if fold.test.is_empty() {
            log::warn!("task {} fold {f} has no test interactions", task.number());
        }
    }
    Ok(SplitPlan {
        task,
        seed,
        num_drugs: ds.num_drugs(),
        num_ddis: ds.num_ddis(),
        folds,
    })
}

const MANIFEST_HEADER: &str = "ragseco-split v1";
const LIST_KEYS: [&str; 4] = ["new_drugs", "known_drugs", "train", "test"];

impl SplitPlan {
    pub fn to_manifest(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MANIFEST_HEADER}");
        let _ = writeln!(s, "task {}", self.task.number());
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "drugs {}", self.num_drugs);
        let _ = writeln!(s, "ddis {}", self.num_ddis);
        let _ = writeln!(s, "folds {}", self.folds.len());
        for (f, fold) in self.folds.iter().enumerate() {
            let _ = writeln!(s, "\n[fold {f}]");
            for (key, list) in LIST_KEYS.iter().zip([
                &fold.new_drugs,
                &fold.known_drugs,
                &fold.train,
                &fold.test,
            ]) {
                let items: Vec<String> = list.iter().map(usize::to_string).collect();
                let _ = writeln!(s, "{key} {}", items.join(" "));
            }
        }
        s
    }

    pub fn parse_manifest(text: &str, source: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::data_at(format!("{source}:{line}"), msg);
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.trim_end()))
            .filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, MANIFEST_HEADER)) => {}
            Some((n, l)) => return Err(err(n, format!("expected `{MANIFEST_HEADER}`, got `{l}`"))),
            None => return Err(Error::data_at(source.to_string(), "empty manifest")),
        }
        let mut header = |key: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((n, l)) => match l.split_once(' ') {
                    Some((k, v)) if k == key => Ok((n, v.trim().to_string())),
                    _ => Err(err(n, format!("expected `{key} <value>`, got `{l}`"))),
                },
                None => Err(Error::data_at(source.to_string(), format!("missing `{key}`"))),
            }
        };
        let number = |(n, v): (usize, String)| -> Result<u64> {
            v.parse().map_err(|_| err(n, format!("`{v}` is not a non-negative integer")))
        };
        let (n, t) = header("task")?;
        let task = t.parse::<Task>().map_err(|e| err(n, e.to_string()))?;
        let seed = number(header("seed")?)?;
        let num_drugs = number(header("drugs")?)? as usize;
        let num_ddis = number(header("ddis")?)? as usize;
        let fold_count = number(header("folds")?)? as usize;
        let mut folds = Vec::with_capacity(fold_count);
        for f in 0..fold_count {
            match lines.next() {
                Some((_, l)) if l == format!("[fold {f}]") => {}
                Some((n, l)) => return Err(err(n, format!("expected `[fold {f}]`, got `{l}`"))),
                None => return Err(Error::data_at(source.to_string(), format!("missing fold {f}"))),
            }
            let mut lists: Vec<Vec<usize>> = Vec::with_capacity(4);
            for key in LIST_KEYS {
                let (n, l) = lines
                    .next()
                    .ok_or_else(|| Error::data_at(source.to_string(), format!("fold {f} missing `{key}`")))?;
                let mut parts = l.split_whitespace();
                if parts.next() != Some(key) {
                    return Err(err(n, format!("expected `{key} ...`, got `{l}`")));
                }
                let list = parts
                    .map(|p| p.parse::<usize>().map_err(|_| err(n, format!("bad index `{p}`"))))
                    .collect::<Result<Vec<_>>>()?;
                lists.push(list);
            }
            let mut it = lists.into_iter();
            let (new_drugs, known_drugs, train, test) =
                (it.next().unwrap(), it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
            folds.push(Fold {
                train,
                test,
                known_drugs,
                new_drugs,
            });
        }
        if let Some((n, l)) = lines.next() {
            return Err(err(n, format!("unexpected trailing content `{l}`")));
        }
        Ok(SplitPlan {
            task,
            seed,
            num_drugs,
            num_ddis,
            folds,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_manifest()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SplitPlan::parse_manifest(&text, &path.display().to_string())
    }

    /// Checks every task invariant against the dataset; returns all violations found.
    pub fn validate(&self, ds: &Dataset) -> std::result::Result<(), Vec<String>> {
        let mut problems = Vec::new();
        if self.num_drugs != ds.num_drugs() || self.num_ddis != ds.num_ddis() {
            problems.push(format!(
                "manifest was made for {} drugs / {} ddis, dataset has {} / {}",
                self.num_drugs,
                self.num_ddis,
                ds.num_drugs(),
                ds.num_ddis()
            ));
            return Err(problems);
        }
        let mut tested = vec![0usize; ds.num_ddis()];
        for (f, fold) in self.folds.iter().enumerate() {
            let out_of_range = fold.train.iter().chain(&fold.test).any(|&k| k >= ds.num_ddis())
                || fold.known_drugs.iter().chain(&fold.new_drugs).any(|&d| d >= ds.num_drugs());
            if out_of_range {
                problems.push(format!("fold {f}: index out of range"));
                continue;
            }
            let new: BTreeSet<usize> = fold.new_drugs.iter().copied().collect();
            let known: BTreeSet<usize> = fold.known_drugs.iter().copied().collect();
            if new.len() + known.len() != ds.num_drugs() || !new.is_disjoint(&known) {
                problems.push(format!("fold {f}: known and new drugs do not partition the drug set"));
            }
            let new_count = |k: usize| new.contains(&ds.ddis[k].a) as usize + new.contains(&ds.ddis[k].b) as usize;
            let train: BTreeSet<usize> = fold.train.iter().copied().collect();
            if fold.test.iter().any(|k| train.contains(k)) {
                problems.push(format!("fold {f}: train and test share an interaction"));
            }
            if let Some(&k) = fold.train.iter().find(|&&k| new_count(k) > 0) {
                problems.push(format!("fold {f}: train interaction {k} touches a new drug"));
            }
            for &k in &fold.test {
                tested[k] += 1;
            }
            match self.task {
                Task::KnownKnown => {
                    if !new.is_empty() {
                        problems.push(format!("fold {f}: task 1 fold lists new drugs"));
                    }
                    if train.len() + fold.test.len() != ds.num_ddis() {
                        problems.push(format!("fold {f}: train and test do not cover all interactions"));
                    }
                }
                Task::KnownNew | Task::NewNew => {
                    let want = if self.task == Task::KnownNew { 1 } else { 2 };
                    if let Some(&k) = fold.test.iter().find(|&&k| new_count(k) != want) {
                        problems.push(format!(
                            "fold {f}: test interaction {k} has {} new endpoints, expected {want}",
                            new_count(k)
                        ));
                    }
                }
            }
        }
        if self.task == Task::KnownKnown {
            if let Some(k) = tested.iter().position(|&c| c != 1) {
                problems.push(format!("interaction {k} is tested {} times across folds", tested[k]));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{generate, SyntheticConfig};

    fn dataset() -> Dataset {
        generate(&SyntheticConfig {
            drugs: 30,
            ..SyntheticConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn task1_partitions_interactions() {
        let ds = dataset();
        let plan = make_splits(&ds, Task::KnownKnown, 5, 3).unwrap();
        let mut all: Vec<usize> = plan.folds.iter().flat_map(|f| f.test.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..ds.num_ddis()).collect::<Vec<_>>());
        let sizes: Vec<usize> = plan.folds.iter().map(|f| f.test.len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        plan.validate(&ds).unwrap();
    }

    #[test]
    fn task2_tests_touch_one_new_drug() {
        let ds = dataset();
        let plan = make_splits(&ds, Task::KnownNew, 5, 3).unwrap();
        for fold in &plan.folds {
            let new: BTreeSet<_> = fold.new_drugs.iter().collect();
            for &k in &fold.test {
                let d = ds.ddis[k];
                assert_eq!(new.contains(&d.a) as u8 + new.contains(&d.b) as u8, 1);
            }
        }
        plan.validate(&ds).unwrap();
    }

    #[test]
    fn task3_train_and_test_drugs_are_disjoint() {
        let ds = dataset();
        let plan = make_splits(&ds, Task::NewNew, 5, 11).unwrap();
        for fold in &plan.folds {
            let drugs_of = |ks: &[usize]| -> BTreeSet<usize> {
                ks.iter().flat_map(|&k| [ds.ddis[k].a, ds.ddis[k].b]).collect()
            };
            assert!(drugs_of(&fold.train).is_disjoint(&drugs_of(&fold.test)));
        }
        plan.validate(&ds).unwrap();
    }

    #[test]
    fn deterministic_and_roundtrips() {
        let ds = dataset();
        for task in [Task::KnownKnown, Task::KnownNew, Task::NewNew] {
            let a = make_splits(&ds, task, 5, 9).unwrap();
            let b = make_splits(&ds, task, 5, 9).unwrap();
            assert_eq!(a.to_manifest(), b.to_manifest());
            assert_eq!(SplitPlan::parse_manifest(&a.to_manifest(), "m").unwrap(), a);
        }
        let a = make_splits(&ds, Task::KnownKnown, 5, 9).unwrap();
        let c = make_splits(&ds, Task::KnownKnown, 5, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn validate_catches_tampering() {
        let ds = dataset();
        let mut plan = make_splits(&ds, Task::NewNew, 5, 1).unwrap();
        let leaked = plan.folds[0].test[0];
        plan.folds[0].train.push(leaked);
        let problems = plan.validate(&ds).unwrap_err();
        assert!(problems.iter().any(|p| p.contains("touches a new drug")));
    }

    #[test]
    fn rejects_bad_arguments() {
        let ds = dataset();
        assert!(make_splits(&ds, Task::KnownKnown, 1, 0).is_err());
        let empty = Dataset::new(ds.drugs.clone(), vec![], 1).unwrap();
        assert!(make_splits(&empty, Task::KnownKnown, 5, 0).is_err());
        let err = SplitPlan::parse_manifest("ragseco-split v1\ntask 4\n", "m.txt").unwrap_err();
        assert!(err.to_string().contains("m.txt:2"));
    }
}
