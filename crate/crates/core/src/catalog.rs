//! Object classes, containers and the canonical indexing of unordered object
//! pairs. Every other module refers to objects and pairs by the ordinals
//! defined here.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// An ordered set of unique object-class names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectCatalog {
    objects: Vec<String>,
    index: HashMap<String, usize>,
}

impl ObjectCatalog {
    /// Names are trimmed; empty or duplicate names are rejected.
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut objects = Vec::new();
        let mut index = HashMap::new();
        for name in names {
            let name = name.as_ref().trim();
            if name.is_empty() {
                return Err(Error::EmptyObjectName);
            }
            if index.insert(name.to_string(), objects.len()).is_some() {
                return Err(Error::DuplicateObject(name.to_string()));
            }
            objects.push(name.to_string());
        }
        Ok(Self { objects, index })
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let names: Vec<String> = serde_json::from_str(json)?;
        Self::new(names)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.objects).expect("string list serializes")
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.objects
    }

    pub fn name(&self, ordinal: usize) -> Result<&str> {
        self.objects.get(ordinal).map(String::as_str).ok_or(Error::ObjectOutOfRange(ordinal, self.objects.len()))
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name.trim()).copied()
    }

    pub fn ordinal(&self, name: &str) -> Result<usize> {
        self.get(name).ok_or_else(|| Error::UnknownObject(name.trim().to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    /// SHA-256 over the newline-joined names, hex encoded. Stored in model
    /// files so a model is never applied to a reordered catalog.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for name in &self.objects {
            hasher.update(name.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

/// Unordered object pairs `{l, k}` with `l < k`, in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairIndex {
    pairs: Vec<(usize, usize)>,
    lookup: HashMap<(usize, usize), usize>,
}

fn ordered(l: usize, k: usize) -> (usize, usize) {
    if l < k {
        (l, k)
    } else {
        (k, l)
    }
}

impl PairIndex {
    /// All pairs over `0..n`, so `M = n(n-1)/2`.
    pub fn all(n: usize) -> Self {
        let pairs = (0..n).flat_map(|l| (l + 1..n).map(move |k| (l, k))).collect();
        Self::from_sorted(pairs)
    }

    /// All pairs over the catalog, or over `subset` when given.
    pub fn build(catalog: &ObjectCatalog, subset: Option<&[usize]>) -> Result<Self> {
        let Some(subset) = subset else {
            return Ok(Self::all(catalog.len()));
        };
        let mut members = subset.to_vec();
        for &o in &members {
            if o >= catalog.len() {
                return Err(Error::ObjectOutOfRange(o, catalog.len()));
            }
        }
        members.sort_unstable();
        if let Some(w) = members.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate object ordinal {} in subset", w[0])));
        }
        let pairs =
            members.iter().enumerate().flat_map(|(a, &l)| members[a + 1..].iter().map(move |&k| (l, k))).collect();
        Ok(Self::from_sorted(pairs))
    }

    /// Index over an arbitrary set of pairs; order and orientation of the
    /// input do not matter, duplicates collapse.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut out = Vec::new();
        for (l, k) in pairs {
            if l == k {
                return Err(Error::SelfPair(l, k));
            }
            out.push(ordered(l, k));
        }
        out.sort_unstable();
        out.dedup();
        Ok(Self::from_sorted(out))
    }

    fn from_sorted(pairs: Vec<(usize, usize)>) -> Self {
        let lookup = pairs.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        Self { pairs, lookup }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, l: usize, k: usize) -> Option<usize> {
        if l == k {
            return None;
        }
        self.lookup.get(&ordered(l, k)).copied()
    }

    pub fn lookup(&self, l: usize, k: usize) -> Result<usize> {
        if l == k {
            return Err(Error::SelfPair(l, k));
        }
        self.get(l, k).ok_or(Error::UnknownPair(l, k))
    }

    pub fn pair(&self, ordinal: usize) -> Result<(usize, usize)> {
        self.pairs.get(ordinal).copied().ok_or(Error::PairOutOfRange(ordinal, self.pairs.len()))
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Pair ordinals whose both objects are in `objects`.
    pub fn pairs_within(&self, objects: &[usize]) -> Vec<usize> {
        let mut out = Vec::new();
        for (a, &l) in objects.iter().enumerate() {
            for &k in &objects[a + 1..] {
                if let Some(i) = self.get(l, k) {
                    out.push(i);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Pair ordinals touching `object`.
    pub fn pairs_of(&self, object: usize) -> Vec<usize> {
        self.pairs.iter().enumerate().filter(|(_, &(l, k))| l == object || k == object).map(|(i, _)| i).collect()
    }

    pub fn names<'a>(&self, catalog: &'a ObjectCatalog, ordinal: usize) -> Result<(&'a str, &'a str)> {
        let (l, k) = self.pair(ordinal)?;
        Ok((catalog.name(l)?, catalog.name(k)?))
    }
}

/// The containers available to hold objects (shelves, boxes, ...).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainerSet {
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl ContainerSet {
    pub fn new(count: usize) -> Result<Self> {
        let set = Self { count, labels: None };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("container count must be at least 1".into()));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.count {
                return Err(Error::Config(format!(
                    "{} container labels given for {} containers",
                    labels.len(),
                    self.count
                )));
            }
        }
        Ok(())
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(json)?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}
