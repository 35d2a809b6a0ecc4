//! Triple files, vocabularies, inverse relations and the filter index.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Suffix appended to a relation name to name its inverse.
pub const INVERSE_SUFFIX: &str = "_reverse";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: usize,
    pub rel: usize,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, rel: usize, tail: usize) -> Self {
        Triple { head, rel, tail }
    }
}

/// String ids in first-appearance order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I: IntoIterator<Item = String>>(names: I) -> Self {
        let mut v = Vocab::new();
        for n in names {
            v.intern(&n);
        }
        v
    }

    /// Id of `name`, assigning the next one if unseen.
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Parses `head<TAB>relation<TAB>tail` lines, interning names into the
/// vocabularies. Blank lines are skipped.
pub fn parse_triples(
    text: &str,
    path: &Path,
    entities: &mut Vocab,
    relations: &mut Vocab,
) -> Result<Vec<Triple>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.trim().is_empty()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let h = entities.intern(fields[0].trim());
        let r = relations.intern(fields[1].trim());
        let t = entities.intern(fields[2].trim());
        out.push(Triple::new(h, r, t));
    }
    Ok(out)
}

/// Reads one triple file.
pub fn load_triples(path: &Path, entities: &mut Vocab, relations: &mut Vocab) -> Result<Vec<Triple>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_triples(&text, path, entities, relations)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.txt",
            Split::Valid => "valid.txt",
            Split::Test => "test.txt",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "dev" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(Error::Invalid(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct KgDataset {
    pub entities: Vocab,
    pub relations: Vocab,
    /// Relation count before inverse augmentation.
    pub raw_relations: usize,
    pub augmented: bool,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    /// Entities first seen in valid or test.
    pub unseen_entities: usize,
    filter: HashMap<(usize, usize), BTreeSet<usize>>,
}

impl KgDataset {
    pub fn new(entities: Vocab, relations: Vocab, train: Vec<Triple>, valid: Vec<Triple>, test: Vec<Triple>) -> Result<Self> {
        let (ne, nr) = (entities.len(), relations.len());
        for t in train.iter().chain(&valid).chain(&test) {
            if t.head >= ne || t.tail >= ne || t.rel >= nr {
                return Err(Error::Invalid(format!(
                    "triple ({}, {}, {}) outside vocabularies of {ne} entities and {nr} relations",
                    t.head, t.rel, t.tail
                )));
            }
        }
        let mut d = KgDataset {
            raw_relations: relations.len(),
            entities,
            relations,
            augmented: false,
            train,
            valid,
            test,
            unseen_entities: 0,
            filter: HashMap::new(),
        };
        d.rebuild_filter();
        Ok(d)
    }

    /// Loads `train.txt`, `valid.txt` and `test.txt` from `dir`. Missing
    /// valid/test files are treated as empty.
    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "data directory not found"),
            ));
        }
        let mut entities = Vocab::new();
        let mut relations = Vocab::new();
        let train = load_triples(&dir.join(Split::Train.file_name()), &mut entities, &mut relations)?;
        let seen = entities.len();
        let mut rest = Vec::new();
        for split in [Split::Valid, Split::Test] {
            let p = dir.join(split.file_name());
            rest.push(if p.exists() {
                load_triples(&p, &mut entities, &mut relations)?
            } else {
                Vec::new()
            });
        }
        let unseen = entities.len() - seen;
        if unseen > 0 {
            log::warn!("{unseen} entities appear only in valid/test");
        }
        let test = rest.pop().unwrap_or_default();
        let valid = rest.pop().unwrap_or_default();
        let mut d = KgDataset::new(entities, relations, train, valid, test)?;
        d.unseen_entities = unseen;
        Ok(d)
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn split(&self, s: Split) -> &[Triple] {
        match s {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    /// Id of the inverse of raw relation `r`.
    pub fn inverse_of(&self, r: usize) -> usize {
        if r < self.raw_relations {
            r + self.raw_relations
        } else {
            r - self.raw_relations
        }
    }

    /// `(t, r⁻¹, h)` for a raw triple.
    pub fn reversed(&self, t: &Triple) -> Triple {
        Triple::new(t.tail, self.inverse_of(t.rel), t.head)
    }

    /// Adds `(t, r⁻¹, h)` for every train triple and doubles the relation
    /// vocabulary. The filter index then covers both directions of every
    /// split. Idempotent.
    pub fn augment_inverse(mut self) -> Self {
        if self.augmented {
            return self;
        }
        let raw = self.raw_relations;
        for r in 0..raw {
            let name = format!("{}{}", self.relations.name(r), INVERSE_SUFFIX);
            self.relations.intern(&name);
        }
        // a relation named like an inverse would collide in the vocabulary
        assert_eq!(self.relations.len(), 2 * raw, "relation names collide with inverse names");
        let inv: Vec<Triple> = self.train.iter().map(|t| Triple::new(t.tail, t.rel + raw, t.head)).collect();
        self.train.extend(inv);
        self.augmented = true;
        self.rebuild_filter();
        self
    }

    fn rebuild_filter(&mut self) {
        let mut f: HashMap<(usize, usize), BTreeSet<usize>> = HashMap::new();
        let raw = self.raw_relations;
        for t in self.train.iter().chain(&self.valid).chain(&self.test) {
            f.entry((t.head, t.rel)).or_default().insert(t.tail);
            if self.augmented && t.rel < raw {
                f.entry((t.tail, t.rel + raw)).or_default().insert(t.head);
            }
        }
        self.filter = f;
    }

    /// True tails of `(head, rel)` over all splits.
    pub fn true_tails(&self, head: usize, rel: usize) -> Option<&BTreeSet<usize>> {
        self.filter.get(&(head, rel))
    }

    pub fn filter_len(&self) -> usize {
        self.filter.values().map(|s| s.len()).sum()
    }
}
