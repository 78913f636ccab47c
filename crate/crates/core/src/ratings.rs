//! Sparse pair-by-user ratings.
//!
//! Rows are pair ordinals from a [`PairIndex`], columns are user ordinals.
//! Entries are reals in `[0, 1]`; the three survey answers map to
//! [`RatingClass`] values but predictions and expert outputs are continuous.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::catalog::{ObjectCatalog, PairIndex};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingClass {
    No,
    Maybe,
    Yes,
}

impl RatingClass {
    pub const ALL: [RatingClass; 3] = [RatingClass::No, RatingClass::Maybe, RatingClass::Yes];

    pub fn value(self) -> f64 {
        match self {
            RatingClass::No => 0.0,
            RatingClass::Maybe => 0.5,
            RatingClass::Yes => 1.0,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            RatingClass::No => "no",
            RatingClass::Maybe => "maybe",
            RatingClass::Yes => "yes",
        }
    }
}

/// Nearest of {0, 0.5, 1}; ties go to the lower class.
pub fn round_to_class(rating: f64) -> RatingClass {
    if rating <= 0.25 {
        RatingClass::No
    } else if rating <= 0.75 {
        RatingClass::Maybe
    } else {
        RatingClass::Yes
    }
}

/// The answer scale a protocol works on. Arrangement-derived data only has
/// {0, 1}; survey data has the three-valued scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingScale {
    Binary,
    Ternary,
}

impl RatingScale {
    pub fn classes(self) -> &'static [RatingClass] {
        match self {
            RatingScale::Binary => &[RatingClass::No, RatingClass::Yes],
            RatingScale::Ternary => &RatingClass::ALL,
        }
    }

    /// Nearest class on this scale, ties toward the lower class.
    pub fn round(self, rating: f64) -> RatingClass {
        match self {
            RatingScale::Ternary => round_to_class(rating),
            RatingScale::Binary if rating <= 0.5 => RatingClass::No,
            RatingScale::Binary => RatingClass::Yes,
        }
    }
}

fn check_rating(rating: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rating) {
        Ok(())
    } else {
        Err(Error::RatingOutOfRange(rating))
    }
}

/// A known rating `(pair, user, value)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub pair: usize,
    pub user: usize,
    pub rating: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RatingsMatrix {
    n_pairs: usize,
    by_user: Vec<BTreeMap<usize, f64>>,
    by_pair: Vec<BTreeMap<usize, f64>>,
    known: usize,
}

impl RatingsMatrix {
    pub fn new(n_pairs: usize, n_users: usize) -> Self {
        Self { n_pairs, by_user: vec![BTreeMap::new(); n_users], by_pair: vec![BTreeMap::new(); n_pairs], known: 0 }
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    pub fn n_users(&self) -> usize {
        self.by_user.len()
    }

    /// Number of known entries `R`.
    pub fn len(&self) -> usize {
        self.known
    }

    pub fn is_empty(&self) -> bool {
        self.known == 0
    }

    pub fn fill_ratio(&self) -> f64 {
        let cells = self.n_pairs * self.n_users();
        if cells == 0 {
            0.0
        } else {
            self.known as f64 / cells as f64
        }
    }

    fn check(&self, pair: usize, user: usize) -> Result<()> {
        if pair >= self.n_pairs {
            return Err(Error::PairOutOfRange(pair, self.n_pairs));
        }
        if user >= self.n_users() {
            return Err(Error::UserOutOfRange(user, self.n_users()));
        }
        Ok(())
    }

    /// Store a rating, replacing any previous value for the same cell.
    pub fn insert(&mut self, pair: usize, user: usize, rating: f64) -> Result<()> {
        check_rating(rating)?;
        self.check(pair, user)?;
        if self.by_user[user].insert(pair, rating).is_none() {
            self.known += 1;
        }
        self.by_pair[pair].insert(user, rating);
        Ok(())
    }

    pub fn remove(&mut self, pair: usize, user: usize) -> Result<Option<f64>> {
        self.check(pair, user)?;
        let old = self.by_user[user].remove(&pair);
        if old.is_some() {
            self.by_pair[pair].remove(&user);
            self.known -= 1;
        }
        Ok(old)
    }

    pub fn get(&self, pair: usize, user: usize) -> Option<f64> {
        self.by_user.get(user)?.get(&pair).copied()
    }

    /// Append an empty user column and return its ordinal.
    pub fn push_user(&mut self) -> usize {
        self.by_user.push(BTreeMap::new());
        self.by_user.len() - 1
    }

    /// Known ratings of `user` (the set `I_j`), ordered by pair.
    pub fn user_column(&self, user: usize) -> Result<Vec<(usize, f64)>> {
        let column = self.by_user.get(user).ok_or(Error::UserOutOfRange(user, self.n_users()))?;
        Ok(column.iter().map(|(&p, &r)| (p, r)).collect())
    }

    /// Known ratings of `pair` (the set `J_i`), ordered by user.
    pub fn pair_row(&self, pair: usize) -> Result<Vec<(usize, f64)>> {
        let row = self.by_pair.get(pair).ok_or(Error::PairOutOfRange(pair, self.n_pairs))?;
        Ok(row.iter().map(|(&u, &r)| (u, r)).collect())
    }

    pub fn user_count(&self, user: usize) -> usize {
        self.by_user.get(user).map_or(0, BTreeMap::len)
    }

    pub fn pair_count(&self, pair: usize) -> usize {
        self.by_pair.get(pair).map_or(0, BTreeMap::len)
    }

    /// All known entries, user-major then pair order.
    pub fn entries(&self) -> impl Iterator<Item = Entry> + '_ {
        self.by_user
            .iter()
            .enumerate()
            .flat_map(|(user, column)| column.iter().map(move |(&pair, &rating)| Entry { pair, user, rating }))
    }

    /// Matrix restricted to the given user columns, renumbered in the order
    /// given.
    pub fn select_users(&self, users: &[usize]) -> Result<RatingsMatrix> {
        let mut out = RatingsMatrix::new(self.n_pairs, users.len());
        for (new, &old) in users.iter().enumerate() {
            for (pair, rating) in self.user_column(old)? {
                out.insert(pair, new, rating)?;
            }
        }
        Ok(out)
    }
}

/// A ratings matrix together with the names its ordinals refer to. This is
/// what the CSV and JSON formats carry.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsDataset {
    pub catalog: ObjectCatalog,
    pub pairs: PairIndex,
    pub users: Vec<String>,
    pub matrix: RatingsMatrix,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    pair_a: String,
    pair_b: String,
    user_id: String,
    rating: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JsonEntry {
    pub pair_a: String,
    pub pair_b: String,
    pub user: String,
    pub rating: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RatingsJson {
    pub objects: Vec<String>,
    pub users: Vec<String>,
    pub entries: Vec<JsonEntry>,
}

impl RatingsDataset {
    /// Read `pair_a,pair_b,user_id,rating` rows.
    ///
    /// Without a catalog, object names are collected and sorted; with one,
    /// unknown names are an error. Pairs are the distinct pairs that occur,
    /// users are sorted by id, so the result is independent of row order.
    pub fn read_csv<R: Read>(reader: R, catalog: Option<&ObjectCatalog>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["pair_a", "pair_b", "user_id", "rating"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::parse(1, format!("expected header `{}`", expected.join(","))));
        }
        let mut rows = Vec::new();
        for record in rdr.deserialize::<CsvRow>() {
            let line = rows.len() as u64 + 2;
            let row = record?;
            if row.pair_a.trim() == row.pair_b.trim() {
                return Err(Error::parse(line, format!("self-pair `{}`", row.pair_a)));
            }
            if !(0.0..=1.0).contains(&row.rating) {
                return Err(Error::parse(line, format!("rating {} outside [0, 1]", row.rating)));
            }
            rows.push((line, row));
        }

        let catalog = match catalog {
            Some(c) => c.clone(),
            None => {
                let names: BTreeSet<&str> = rows.iter().flat_map(|(_, r)| [r.pair_a.trim(), r.pair_b.trim()]).collect();
                ObjectCatalog::new(names)?
            }
        };
        let users: Vec<String> =
            rows.iter().map(|(_, r)| r.user_id.trim().to_string()).collect::<BTreeSet<_>>().into_iter().collect();
        let user_index: BTreeMap<&str, usize> = users.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();

        let mut resolved = Vec::with_capacity(rows.len());
        for (line, row) in &rows {
            let a = catalog
                .get(&row.pair_a)
                .ok_or_else(|| Error::parse(*line, format!("unknown object `{}`", row.pair_a)))?;
            let b = catalog
                .get(&row.pair_b)
                .ok_or_else(|| Error::parse(*line, format!("unknown object `{}`", row.pair_b)))?;
            resolved.push((a, b, user_index[row.user_id.trim()], row.rating));
        }
        let pairs = PairIndex::from_pairs(resolved.iter().map(|&(a, b, _, _)| (a, b)))?;
        let mut matrix = RatingsMatrix::new(pairs.len(), users.len());
        for (a, b, user, rating) in resolved {
            matrix.insert(pairs.lookup(a, b)?, user, rating)?;
        }
        Ok(Self { catalog, pairs, users, matrix })
    }

    pub fn load_csv(path: impl AsRef<std::path::Path>, catalog: Option<&ObjectCatalog>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, catalog)
    }

    /// Write all known entries. Ratings use the shortest decimal that
    /// round-trips, so class values come out as `0`, `0.5`, `1`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["pair_a", "pair_b", "user_id", "rating"])?;
        for entry in self.matrix.entries() {
            let (a, b) = self.pairs.names(&self.catalog, entry.pair)?;
            wtr.write_record([a, b, &self.users[entry.user], &format!("{}", entry.rating)])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<RatingsJson> {
        let mut entries = Vec::with_capacity(self.matrix.len());
        for entry in self.matrix.entries() {
            let (a, b) = self.pairs.names(&self.catalog, entry.pair)?;
            entries.push(JsonEntry {
                pair_a: a.to_string(),
                pair_b: b.to_string(),
                user: self.users[entry.user].clone(),
                rating: entry.rating,
            });
        }
        Ok(RatingsJson { objects: self.catalog.names().to_vec(), users: self.users.clone(), entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn insert_counts_and_overwrites() {
        let mut m = RatingsMatrix::new(3, 2);
        m.insert(0, 0, 1.0).unwrap();
        assert_eq!(m.len(), 1);
        m.insert(0, 0, 0.0).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.get(0, 0), Some(0.0));
    }

    #[test]
    fn insert_validates() {
        let mut m = RatingsMatrix::new(3, 2);
        assert!(matches!(m.insert(0, 0, 1.5), Err(Error::RatingOutOfRange(_))));
        assert!(matches!(m.insert(0, 0, -0.1), Err(Error::RatingOutOfRange(_))));
        assert!(matches!(m.insert(3, 0, 0.5), Err(Error::PairOutOfRange(3, 3))));
        assert!(matches!(m.insert(0, 2, 0.5), Err(Error::UserOutOfRange(2, 2))));
        assert!(m.insert(0, 0, f64::NAN).is_err());
    }

    #[test]
    fn rounding_to_classes() {
        assert_eq!(round_to_class(0.74), RatingClass::Maybe);
        assert_eq!(round_to_class(0.76), RatingClass::Yes);
        assert_eq!(round_to_class(0.25), RatingClass::No);
        assert_eq!(round_to_class(0.75), RatingClass::Maybe);
        assert_eq!(round_to_class(-0.1), RatingClass::No);
        assert_eq!(round_to_class(1.3), RatingClass::Yes);
        assert_eq!(RatingScale::Binary.round(0.5), RatingClass::No);
        assert_eq!(RatingScale::Binary.round(0.51), RatingClass::Yes);
    }

    #[test]
    fn column_and_row_views() {
        let mut m = RatingsMatrix::new(4, 2);
        assert!(m.user_column(1).unwrap().is_empty());
        m.insert(0, 0, 1.0).unwrap();
        m.insert(2, 0, 0.5).unwrap();
        m.insert(3, 0, 0.0).unwrap();
        m.insert(2, 1, 1.0).unwrap();
        assert_eq!(m.user_column(0).unwrap().len(), 3);
        assert_eq!(m.pair_row(2).unwrap(), vec![(0, 0.5), (1, 1.0)]);
        assert!(m.user_column(2).is_err());
        assert!(m.pair_row(4).is_err());
    }

    #[test]
    fn csv_round_trip_and_order_independence() {
        let csv_a = "pair_a,pair_b,user_id,rating\n\
                     tea,coffee,u2,1\n\
                     salt,pepper,u1,0.5\n\
                     coffee,salt,u1,0\n";
        let csv_b = "pair_a,pair_b,user_id,rating\n\
                     salt,coffee,u1,0\n\
                     pepper,salt,u1,0.5\n\
                     coffee,tea,u2,1\n";
        let a = RatingsDataset::read_csv(csv_a.as_bytes(), None).unwrap();
        let b = RatingsDataset::read_csv(csv_b.as_bytes(), None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.matrix.len(), 3);

        let mut out = Vec::new();
        a.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out.clone()).unwrap();
        assert!(text.contains(",0.5\n"));
        let c = RatingsDataset::read_csv(out.as_slice(), None).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let bad = "pair_a,pair_b,user_id,rating\ntea,coffee,u1,1\ntea,coffee,u1,1.7\n";
        match RatingsDataset::read_csv(bad.as_bytes(), None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let header = "a,b,c,d\n";
        assert!(matches!(RatingsDataset::read_csv(header.as_bytes(), None), Err(Error::Parse { line: 1, .. })));
        let catalog = ObjectCatalog::new(["tea"]).unwrap();
        let unknown = "pair_a,pair_b,user_id,rating\ntea,coffee,u1,1\n";
        assert!(RatingsDataset::read_csv(unknown.as_bytes(), Some(&catalog)).is_err());
    }

    #[test]
    fn json_export_lists_everything() {
        let csv = "pair_a,pair_b,user_id,rating\ntea,coffee,u1,1\n";
        let ds = RatingsDataset::read_csv(csv.as_bytes(), None).unwrap();
        let json = ds.to_json().unwrap();
        assert_eq!(json.objects, vec!["coffee", "tea"]);
        assert_eq!(json.entries.len(), 1);
        assert_eq!(json.entries[0].pair_a, "coffee");
    }

    proptest! {
        #[test]
        fn index_sets_stay_consistent(ops in proptest::collection::vec((0usize..6, 0usize..5, 0u8..3, any::<bool>()), 0..60)) {
            let mut m = RatingsMatrix::new(6, 5);
            for (pair, user, class, remove) in ops {
                if remove {
                    m.remove(pair, user).unwrap();
                } else {
                    m.insert(pair, user, f64::from(class) / 2.0).unwrap();
                }
            }
            let by_users: usize = (0..5).map(|u| m.user_column(u).unwrap().len()).sum();
            let by_pairs: usize = (0..6).map(|p| m.pair_row(p).unwrap().len()).sum();
            prop_assert_eq!(by_users, m.len());
            prop_assert_eq!(by_pairs, m.len());
            prop_assert_eq!(m.entries().count(), m.len());
            for e in m.entries() {
                prop_assert_eq!(m.pair_row(e.pair).unwrap().iter().find(|(u, _)| *u == e.user).map(|x| x.1), Some(e.rating));
            }
        }

        #[test]
        fn csv_round_trip_is_bit_exact(values in proptest::collection::vec(0u32..=1_000_000, 1..20)) {
            let names: Vec<String> = (0..8).map(|i| format!("o{i}")).collect();
            let catalog = ObjectCatalog::new(&names).unwrap();
            let pairs = PairIndex::all(8);
            let mut matrix = RatingsMatrix::new(pairs.len(), values.len());
            for (u, v) in values.iter().enumerate() {
                matrix.insert(u % pairs.len(), u, f64::from(*v) / 1e6).unwrap();
            }
            let users = (0..values.len()).map(|u| format!("user{u:03}")).collect();
            let ds = RatingsDataset { catalog: catalog.clone(), pairs, users, matrix };
            let mut out = Vec::new();
            ds.write_csv(&mut out).unwrap();
            let back = RatingsDataset::read_csv(out.as_slice(), Some(&catalog)).unwrap();
            let a: Vec<u64> = ds.matrix.entries().map(|e| e.rating.to_bits()).collect();
            let b: Vec<u64> = back.matrix.entries().map(|e| e.rating.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
