use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Drug attributes used for similarity features and the similarity graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Attribute {
    Substructure,
    Enzyme,
    Target,
}

impl Attribute {
    pub const ALL: [Attribute; 3] = [Attribute::Substructure, Attribute::Enzyme, Attribute::Target];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Substructure => "substructure",
            Attribute::Enzyme => "enzyme",
            Attribute::Target => "target",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DrugRecord {
    pub drug_id: String,
    /// Descriptor tokens per attribute, indexed by [`Attribute::index`].
    pub descriptors: [BTreeSet<String>; 3],
    pub smiles: String,
}

impl DrugRecord {
    pub fn new(drug_id: impl Into<String>, smiles: impl Into<String>) -> Self {
        DrugRecord {
            drug_id: drug_id.into(),
            descriptors: Default::default(),
            smiles: smiles.into(),
        }
    }

    pub fn with(mut self, attr: Attribute, tokens: &[&str]) -> Self {
        self.descriptors[attr.index()] = tokens.iter().map(|t| t.to_string()).collect();
        self
    }

    pub fn descriptors(&self, attr: Attribute) -> &BTreeSet<String> {
        &self.descriptors[attr.index()]
    }
}

/// One labelled interaction between two distinct drugs, stored with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ddi {
    pub a: usize,
    pub b: usize,
    pub event: usize,
}

impl Ddi {
    pub fn new(i: usize, j: usize, event: usize) -> Self {
        Ddi {
            a: i.min(j),
            b: i.max(j),
            event,
        }
    }

    pub fn touches(&self, drug: usize) -> bool {
        self.a == drug || self.b == drug
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub drugs: Vec<DrugRecord>,
    pub ddis: Vec<Ddi>,
    pub num_relations: usize,
}

impl Dataset {
    /// Validates ids, pair uniqueness and event ranges.
    pub fn new(drugs: Vec<DrugRecord>, ddis: Vec<Ddi>, num_relations: usize) -> Result<Self> {
        let mut seen_ids = HashSet::new();
        for d in &drugs {
            if !seen_ids.insert(d.drug_id.as_str()) {
                return Err(Error::data(format!("duplicate drug id {}", d.drug_id)));
            }
        }
        let mut seen_pairs = HashSet::new();
        for ddi in &ddis {
            if ddi.a == ddi.b {
                return Err(Error::data(format!("self interaction on drug index {}", ddi.a)));
            }
            if ddi.b >= drugs.len() {
                return Err(Error::data(format!("drug index {} out of range", ddi.b)));
            }
            if ddi.event >= num_relations {
                return Err(Error::data(format!(
                    "event type {} outside 0..{num_relations}",
                    ddi.event
                )));
            }
            if !seen_pairs.insert((ddi.a, ddi.b)) {
                return Err(Error::data(format!(
                    "pair ({}, {}) listed more than once",
                    drugs[ddi.a].drug_id, drugs[ddi.b].drug_id
                )));
            }
        }
        Ok(Dataset {
            drugs,
            ddis,
            num_relations,
        })
    }

    pub fn num_drugs(&self) -> usize {
        self.drugs.len()
    }

    pub fn num_ddis(&self) -> usize {
        self.ddis.len()
    }

    pub fn index_of(&self, drug_id: &str) -> Option<usize> {
        self.drugs.iter().position(|d| d.drug_id == drug_id)
    }

    pub fn id_index(&self) -> HashMap<&str, usize> {
        self.drugs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.drug_id.as_str(), i))
            .collect()
    }

    /// Loads the drugs and interactions TSV files.
    pub fn load(drugs_path: &Path, ddis_path: &Path) -> Result<Self> {
        let drugs_file = std::fs::File::open(drugs_path).map_err(|e| Error::io(drugs_path, e))?;
        let drugs = read_drugs(drugs_file, &drugs_path.display().to_string())?;
        let ddis_file = std::fs::File::open(ddis_path).map_err(|e| Error::io(ddis_path, e))?;
        let (ddis, r) = read_ddis(ddis_file, &drugs, &ddis_path.display().to_string())?;
        Dataset::new(drugs, ddis, r)
    }

    pub fn save(&self, drugs_path: &Path, ddis_path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(drugs_path).map_err(|e| Error::io(drugs_path, e))?;
        write_drugs(&mut f, &self.drugs).map_err(|e| Error::io(drugs_path, e))?;
        let mut f = std::fs::File::create(ddis_path).map_err(|e| Error::io(ddis_path, e))?;
        write_ddis(&mut f, self).map_err(|e| Error::io(ddis_path, e))
    }
}

const DRUG_COLUMNS: [&str; 5] = ["drug_id", "substructure", "enzyme", "target", "smiles"];
const DDI_COLUMNS: [&str; 3] = ["drug_id_a", "drug_id_b", "event_type"];

fn tsv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .quoting(false)
        .flexible(false)
        .from_reader(reader)
}

fn csv_error(source: &str, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line());
    match line {
        Some(l) => Error::data_at(format!("{source}:{l}"), err.to_string()),
        None => Error::data_at(source.to_string(), err.to_string()),
    }
}

/// Maps required column names to positions; unknown columns are ignored.
fn column_positions(source: &str, headers: &csv::StringRecord, required: &[&str]) -> Result<Vec<usize>> {
    required
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim() == *name)
                .ok_or_else(|| Error::data_at(format!("{source}:1"), format!("missing column `{name}`")))
        })
        .collect()
}

fn tokens(cell: &str) -> BTreeSet<String> {
    cell.split('|')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn read_drugs<R: Read>(reader: R, source: &str) -> Result<Vec<DrugRecord>> {
    let mut rdr = tsv_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
    let cols = column_positions(source, &headers, &DRUG_COLUMNS)?;
    let mut drugs = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(source, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let id = record[cols[0]].trim();
        if id.is_empty() {
            return Err(Error::data_at(
                format!("{source}:{line}:{}", cols[0] + 1),
                "empty drug_id",
            ));
        }
        let mut drug = DrugRecord::new(id, record[cols[4]].trim());
        for attr in Attribute::ALL {
            drug.descriptors[attr.index()] = tokens(&record[cols[1 + attr.index()]]);
        }
        drugs.push(drug);
    }
    Ok(drugs)
}

/// Reads interactions against a known drug list; returns them with the event-type count.
pub fn read_ddis<R: Read>(reader: R, drugs: &[DrugRecord], source: &str) -> Result<(Vec<Ddi>, usize)> {
    let ids: HashMap<&str, usize> = drugs
        .iter()
        .enumerate()
        .map(|(i, d)| (d.drug_id.as_str(), i))
        .collect();
    let mut rdr = tsv_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
    let cols = column_positions(source, &headers, &DDI_COLUMNS)?;
    let mut ddis = Vec::new();
    let mut max_event = None;
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(source, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let lookup = |c: usize| -> Result<usize> {
            let id = record[cols[c]].trim();
            ids.get(id).copied().ok_or_else(|| {
                Error::data_at(
                    format!("{source}:{line}:{}", cols[c] + 1),
                    format!("unknown drug id `{id}`"),
                )
            })
        };
        let i = lookup(0)?;
        let j = lookup(1)?;
        let raw = record[cols[2]].trim();
        let event: usize = raw.parse().map_err(|_| {
            Error::data_at(
                format!("{source}:{line}:{}", cols[2] + 1),
                format!("event_type `{raw}` is not a non-negative integer"),
            )
        })?;
        if i == j {
            return Err(Error::data_at(
                format!("{source}:{line}"),
                format!("drug `{}` interacts with itself", drugs[i].drug_id),
            ));
        }
        max_event = Some(max_event.map_or(event, |m: usize| m.max(event)));
        ddis.push(Ddi::new(i, j, event));
    }
    Ok((ddis, max_event.map_or(0, |m| m + 1)))
}

pub fn write_drugs<W: Write>(w: &mut W, drugs: &[DrugRecord]) -> std::io::Result<()> {
    writeln!(w, "{}", DRUG_COLUMNS.join("\t"))?;
    for d in drugs {
        let cells: Vec<String> = Attribute::ALL
            .iter()
            .map(|a| d.descriptors(*a).iter().cloned().collect::<Vec<_>>().join("|"))
            .collect();
        writeln!(w, "{}\t{}\t{}", d.drug_id, cells.join("\t"), d.smiles)?;
    }
    Ok(())
}

pub fn write_ddis<W: Write>(w: &mut W, ds: &Dataset) -> std::io::Result<()> {
    writeln!(w, "{}", DDI_COLUMNS.join("\t"))?;
    for ddi in &ds.ddis {
        writeln!(
            w,
            "{}\t{}\t{}",
            ds.drugs[ddi.a].drug_id, ds.drugs[ddi.b].drug_id, ddi.event
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const DRUGS: &str = "drug_id\tsubstructure\tenzyme\ttarget\tsmiles\tpathway\n\
        D1\ta|b\te1\t\tCCO\tp1\n\
        D2\tb\t\tt1|t2\tc1ccccc1\tp2\n\
        D3\t\t\t\tN\t\n";

    #[test]
    fn parses_drugs_and_ignores_extra_columns() {
        let drugs = read_drugs(DRUGS.as_bytes(), "drugs.tsv").unwrap();
        assert_eq!(drugs.len(), 3);
        assert_eq!(drugs[0].descriptors(Attribute::Substructure).len(), 2);
        assert!(drugs[0].descriptors(Attribute::Target).is_empty());
        assert_eq!(drugs[1].smiles, "c1ccccc1");
        assert!(drugs[2].descriptors.iter().all(BTreeSet::is_empty));
    }

    #[test]
    fn parses_ddis_and_counts_relations() {
        let drugs = read_drugs(DRUGS.as_bytes(), "drugs.tsv").unwrap();
        let text = "drug_id_a\tdrug_id_b\tevent_type\nD2\tD1\t0\nD1\tD3\t2\n";
        let (ddis, r) = read_ddis(text.as_bytes(), &drugs, "ddis.tsv").unwrap();
        assert_eq!(r, 3);
        assert_eq!(ddis[0], Ddi { a: 0, b: 1, event: 0 });
        let ds = Dataset::new(drugs, ddis, r).unwrap();
        assert_eq!(ds.num_ddis(), 2);
    }

    #[test]
    fn reports_line_and_column() {
        let drugs = read_drugs(DRUGS.as_bytes(), "drugs.tsv").unwrap();
        let text = "drug_id_a\tdrug_id_b\tevent_type\nD1\tD2\t0\nD1\tDX\t1\n";
        let err = read_ddis(text.as_bytes(), &drugs, "ddis.tsv").unwrap_err().to_string();
        assert!(err.contains("ddis.tsv:3:2"), "{err}");

        let text = "drug_id_a\tdrug_id_b\tevent_type\nD1\tD2\tx\n";
        let err = read_ddis(text.as_bytes(), &drugs, "ddis.tsv").unwrap_err().to_string();
        assert!(err.contains("ddis.tsv:2:3"), "{err}");

        let bad = "drug_id\tsubstructure\tenzyme\ttarget\tsmiles\nD1\ta\n";
        let err = read_drugs(bad.as_bytes(), "drugs.tsv").unwrap_err().to_string();
        assert!(err.contains("drugs.tsv:2"), "{err}");
    }

    #[test]
    fn rejects_duplicate_pairs_and_self_loops() {
        let drugs = read_drugs(DRUGS.as_bytes(), "drugs.tsv").unwrap();
        let text = "drug_id_a\tdrug_id_b\tevent_type\nD1\tD2\t0\nD2\tD1\t1\n";
        let (ddis, r) = read_ddis(text.as_bytes(), &drugs, "d").unwrap();
        assert!(Dataset::new(drugs.clone(), ddis, r).is_err());
        let text = "drug_id_a\tdrug_id_b\tevent_type\nD1\tD1\t0\n";
        assert!(read_ddis(text.as_bytes(), &drugs, "d").is_err());
    }

    #[test]
    fn save_then_load_preserves_dataset() {
        let drugs = read_drugs(DRUGS.as_bytes(), "drugs.tsv").unwrap();
        let ds = Dataset::new(drugs, vec![Ddi::new(0, 2, 1), Ddi::new(1, 2, 0)], 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (dp, ip) = (dir.path().join("drugs.tsv"), dir.path().join("ddis.tsv"));
        ds.save(&dp, &ip).unwrap();
        assert_eq!(Dataset::load(&dp, &ip).unwrap(), ds);
    }
}
