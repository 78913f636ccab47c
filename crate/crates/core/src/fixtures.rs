//! Bundled scenario data: toy and grocery catalogs, planted user
//! arrangements, and three grocery category hierarchies.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::catalog::{ObjectCatalog, PairIndex};
use crate::error::Result;
use crate::evaluation::synthetic::{bootstrap_columns, ArchetypeSpec};
use crate::experts::{ExpertMixture, TaxonomyExpert};
use crate::factorization::{train, StoredModel, TrainConfig};
use crate::probing::{probes_from_arrangement, Arrangement, NamedArrangement};
use crate::ratings::RatingScale;

pub const TOYS_OBJECTS: &str = include_str!("../fixtures/toys_objects.json");
pub const TOYS_ARCHETYPES: &str = include_str!("../fixtures/toys_archetypes.json");
pub const GROCERY_OBJECTS: &str = include_str!("../fixtures/grocery_objects.json");
pub const GROCERY_ARCHETYPES: &str = include_str!("../fixtures/grocery_archetypes.json");
pub const SHELVING_USERS: &str = include_str!("../fixtures/shelving_users.json");
pub const GROCERY_E1: &str = include_str!("../fixtures/grocery_e1.tsv");
pub const GROCERY_E2: &str = include_str!("../fixtures/grocery_e2.tsv");
pub const GROCERY_E3: &str = include_str!("../fixtures/grocery_e3.tsv");

/// Number of grocery pairs that appear in the survey-shaped matrix.
pub const GROCERY_SURVEY_PAIRS: usize = 179;
/// Objects on the shelving survey: the first 17 groceries.
pub const SHELVING_OBJECTS: usize = 17;

fn arrangements(json: &str, catalog: &ObjectCatalog) -> Result<Vec<Arrangement>> {
    let named: Vec<NamedArrangement> = serde_json::from_str(json)?;
    named.iter().map(|a| a.to_ordinals(catalog)).collect()
}

/// 26 toys.
pub fn toys_catalog() -> ObjectCatalog {
    ObjectCatalog::from_json_str(TOYS_OBJECTS).expect("bundled toy catalog")
}

/// Fifteen box arrangements of the toys: four use four boxes, seven use
/// five and four use six.
pub fn toys_archetypes(catalog: &ObjectCatalog) -> Result<Vec<Arrangement>> {
    arrangements(TOYS_ARCHETYPES, catalog)
}

/// 22 grocery items.
pub fn grocery_catalog() -> ObjectCatalog {
    ObjectCatalog::from_json_str(GROCERY_OBJECTS).expect("bundled grocery catalog")
}

/// Survey-style tastes over all 22 groceries, with "maybe" between related
/// shelves.
pub fn grocery_archetypes() -> Vec<ArchetypeSpec> {
    serde_json::from_str(GROCERY_ARCHETYPES).expect("bundled grocery archetypes")
}

/// A fixed subset of the 231 grocery pairs, of the size the survey covered.
pub fn grocery_pairs(catalog: &ObjectCatalog) -> PairIndex {
    let all = PairIndex::all(catalog.len());
    let mut chosen: Vec<(usize, usize)> = all.pairs().to_vec();
    chosen.shuffle(&mut ChaCha8Rng::seed_from_u64(179));
    chosen.truncate(GROCERY_SURVEY_PAIRS.min(chosen.len()));
    PairIndex::from_pairs(chosen).expect("distinct pairs")
}

/// The 17 groceries of the shelving survey.
pub fn shelving_catalog() -> ObjectCatalog {
    let groceries = grocery_catalog();
    ObjectCatalog::new(&groceries.names()[..SHELVING_OBJECTS]).expect("prefix of a valid catalog")
}

/// Fifteen planted shelf arrangements of the shelving objects: four users
/// with four shelves, three with five, eight with six. The first user is
/// the four-shelf example.
pub fn shelving_users(catalog: &ObjectCatalog) -> Result<Vec<Arrangement>> {
    arrangements(SHELVING_USERS, catalog)
}

/// Three grocery hierarchies. In the first, canned corn and canned tuna
/// score 0.4; in the second 1/3. The first does not list rice and none of
/// them relate bread or candy closely to anything.
pub fn grocery_experts() -> Vec<TaxonomyExpert> {
    [("grocery_e1", GROCERY_E1), ("grocery_e2", GROCERY_E2), ("grocery_e3", GROCERY_E3)]
        .into_iter()
        .map(|(name, text)| TaxonomyExpert::parse(name, text).expect("bundled hierarchy"))
        .collect()
}

pub fn grocery_mixture() -> ExpertMixture {
    ExpertMixture::new(grocery_experts())
}

/// A model of the shelving objects trained on `copies` bootstrapped users
/// per planted arrangement, each rating 40 of the 136 pairs.
pub fn shelving_model(copies: usize, seed: u64) -> Result<StoredModel> {
    let catalog = shelving_catalog();
    let pairs = PairIndex::all(catalog.len());
    let mut columns = Vec::new();
    for user in shelving_users(&catalog)? {
        let probes = probes_from_arrangement(&user, &pairs)?;
        let column: Vec<f64> = (0..pairs.len()).map(|p| probes.get(p).unwrap_or(0.0)).collect();
        columns.extend(std::iter::repeat_n(column, copies));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrix = bootstrap_columns(&columns, (40, 40), 0.0, RatingScale::Binary, &mut rng)?;
    let model = train(&matrix, &TrainConfig { seed, ..TrainConfig::default() })?;
    StoredModel::new(model, catalog, pairs)
}
