//! Probing sessions: a queue of questions, the answers so far, and the
//! arrangement they imply.

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tidyup_core::factorization::TrainConfig;
use tidyup_core::probing::{select_probes, solve_new_user};
use tidyup_core::{
    Error, ExpertMixture, NamedArrangement, ProbeSet, Result, SpectralConfig, StoredModel, UserPreferences, UserProfile,
};

/// What every session shares: the frozen item model and how to use it.
#[derive(Debug, Clone)]
pub struct Engine {
    pub model: Arc<StoredModel>,
    pub experts: Option<Arc<ExpertMixture>>,
    pub train: TrainConfig,
    pub spectral: SpectralConfig,
    /// Objects arranged when a session does not name its own.
    pub objects: Vec<String>,
}

impl Engine {
    pub fn new(model: StoredModel) -> Self {
        let objects = model.catalog.names().to_vec();
        let train = TrainConfig { k: model.model.k, lambda: model.model.lambda, ..TrainConfig::default() };
        Self { model: Arc::new(model), experts: None, train, spectral: SpectralConfig::default(), objects }
    }

    pub fn with_experts(mut self, experts: ExpertMixture) -> Self {
        self.experts = Some(Arc::new(experts));
        self
    }

    pub fn with_objects(mut self, objects: Vec<String>) -> Self {
        self.objects = objects;
        self
    }

    fn pair_names(&self, pair: usize) -> Result<[String; 2]> {
        let (a, b) = self.model.pairs.names(&self.model.catalog, pair)?;
        Ok([a.to_string(), b.to_string()])
    }

    fn pair_of(&self, a: &str, b: &str) -> Result<usize> {
        let catalog = &self.model.catalog;
        let (l, k) = (catalog.ordinal(a)?, catalog.ordinal(b)?);
        if l == k {
            return Err(Error::SelfNamedPair(a.to_string()));
        }
        self.model.pairs.lookup(l, k)
    }
}

/// Settings fixed when a session is created.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSettings {
    pub containers: usize,
    pub probes: usize,
    pub seed: u64,
    pub objects: Vec<String>,
}

/// State needed to undo the latest move by moving the object back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MoveUndo {
    object: String,
    companions: BTreeSet<String>,
    probes: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    pub settings: SessionSettings,
    probes: ProbeSet,
    profile: UserProfile,
    queue: VecDeque<usize>,
    arrangement: NamedArrangement,
    last_move: Option<MoveUndo>,
}

/// Persisted form of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub settings: SessionSettings,
    pub probes: Vec<(usize, f64)>,
    pub profile: UserProfile,
    pub queue: Vec<usize>,
    pub arrangement: NamedArrangement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    last_move: Option<MoveUndo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub pair: [String; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answered {
    pub pair: [String; 2],
    pub rating: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub user_bias: f64,
    pub factors: Vec<f64>,
}

/// Everything a client may want to render, with no side effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub containers: usize,
    pub seed: u64,
    pub objects: Vec<String>,
    pub answered: Vec<Answered>,
    pub queue: Vec<Probe>,
    pub next_probe: Option<Probe>,
    pub arrangement: NamedArrangement,
    pub profile: ProfileSummary,
}

fn check_answer(rating: f64) -> Result<()> {
    if [0.0, 0.5, 1.0].contains(&rating) {
        Ok(())
    } else {
        Err(Error::Config(format!("rating must be 0, 0.5 or 1, got {rating}")))
    }
}

fn changed_pairs(before: &ProbeSet, after: &ProbeSet) -> usize {
    let dropped = before.iter().filter(|&(p, _)| after.get(p).is_none()).count();
    dropped + after.iter().filter(|&(p, r)| before.get(p) != Some(r)).count()
}

impl Session {
    pub fn new(engine: &Engine, id: String, settings: SessionSettings) -> Result<Self> {
        if settings.containers == 0 {
            return Err(Error::Config("at least one container is required".into()));
        }
        if settings.objects.len() < 2 {
            return Err(Error::Config("at least two objects are required".into()));
        }
        let queue = select_probes(&engine.model.model, settings.probes, settings.seed)?;
        let mut session = Self {
            id,
            settings,
            probes: ProbeSet::new(),
            profile: UserProfile::zeros(engine.model.model.k),
            queue: queue.into(),
            arrangement: NamedArrangement::default(),
            last_move: None,
        };
        session.refresh(engine)?;
        Ok(session)
    }

    fn refresh(&mut self, engine: &Engine) -> Result<()> {
        self.profile = if self.probes.is_empty() {
            UserProfile::zeros(engine.model.model.k)
        } else {
            solve_new_user(&engine.model.model, &self.probes, &engine.train)?
        };
        let mut prefs = UserPreferences::new(&engine.model, &self.profile, &self.probes);
        if let Some(experts) = &engine.experts {
            prefs = prefs.with_experts(experts);
        }
        self.arrangement =
            prefs.arrange(&self.settings.objects, self.settings.containers, self.settings.seed, &engine.spectral)?;
        Ok(())
    }

    pub fn arrangement(&self) -> &NamedArrangement {
        &self.arrangement
    }

    pub fn probes(&self) -> &ProbeSet {
        &self.probes
    }

    pub fn profile(&self) -> &UserProfile {
        &self.profile
    }

    pub fn next_probe(&self, engine: &Engine) -> Result<Option<Probe>> {
        self.queue.front().map(|&p| Ok(Probe { pair: engine.pair_names(p)? })).transpose()
    }

    /// Record a rating for any modelled pair. The pair leaves the queue.
    pub fn answer(&mut self, engine: &Engine, a: &str, b: &str, rating: f64) -> Result<()> {
        check_answer(rating)?;
        let pair = engine.pair_of(a, b)?;
        let previous = self.probes.clone();
        self.probes.insert(pair, rating)?;
        self.refresh_or_revert(engine, previous)?;
        self.queue.retain(|&p| p != pair);
        self.last_move = None;
        Ok(())
    }

    /// Put `object` into container `target` (an index into the current
    /// arrangement, or past its end for an empty container) and learn from
    /// it. Returns how many probes changed.
    pub fn move_object(&mut self, engine: &Engine, object: &str, target: usize) -> Result<usize> {
        let current = self
            .arrangement
            .containers
            .iter()
            .position(|c| c.iter().any(|o| o == object))
            .ok_or_else(|| Error::UnknownObject(object.to_string()))?;
        if target >= self.settings.containers {
            return Err(Error::Config(format!(
                "container {target} out of range for {} containers",
                self.settings.containers
            )));
        }
        if target == current {
            return Ok(0);
        }
        let companions: BTreeSet<String> =
            self.arrangement.containers.get(target).into_iter().flatten().cloned().collect();
        let previous = self.probes.clone();

        let undo = self.last_move.take().filter(|u| u.object == object && u.companions == companions);
        let next_undo = match undo {
            Some(undo) => {
                self.probes = ProbeSet::from_entries(undo.probes)?;
                None
            }
            None => {
                for other in self.arrangement.containers.iter().flatten().filter(|o| o.as_str() != object) {
                    if let Ok(pair) = engine.pair_of(object, other) {
                        self.probes.insert(pair, if companions.contains(other) { 1.0 } else { 0.0 })?;
                    }
                }
                Some(MoveUndo {
                    object: object.to_string(),
                    companions: self.arrangement.containers[current]
                        .iter()
                        .filter(|o| o.as_str() != object)
                        .cloned()
                        .collect(),
                    probes: previous.iter().collect(),
                })
            }
        };
        self.refresh_or_revert(engine, previous.clone())?;
        self.last_move = next_undo;
        Ok(changed_pairs(&previous, &self.probes))
    }

    fn refresh_or_revert(&mut self, engine: &Engine, previous: ProbeSet) -> Result<()> {
        if let Err(e) = self.refresh(engine) {
            self.probes = previous;
            self.refresh(engine)?;
            return Err(e);
        }
        Ok(())
    }

    pub fn snapshot(&self, engine: &Engine) -> Result<SessionSnapshot> {
        let answered = self
            .probes
            .iter()
            .map(|(p, rating)| Ok(Answered { pair: engine.pair_names(p)?, rating }))
            .collect::<Result<Vec<_>>>()?;
        let queue =
            self.queue.iter().map(|&p| Ok(Probe { pair: engine.pair_names(p)? })).collect::<Result<Vec<_>>>()?;
        Ok(SessionSnapshot {
            session_id: self.id.clone(),
            containers: self.settings.containers,
            seed: self.settings.seed,
            objects: self.settings.objects.clone(),
            answered,
            next_probe: queue.first().cloned(),
            queue,
            arrangement: self.arrangement.clone(),
            profile: ProfileSummary { user_bias: self.profile.user_bias, factors: self.profile.factors.clone() },
        })
    }

    pub fn to_record(&self) -> SessionRecord {
        SessionRecord {
            id: self.id.clone(),
            settings: self.settings.clone(),
            probes: self.probes.iter().collect(),
            profile: self.profile.clone(),
            queue: self.queue.iter().copied().collect(),
            arrangement: self.arrangement.clone(),
            last_move: self.last_move.clone(),
        }
    }

    pub fn from_record(engine: &Engine, record: SessionRecord) -> Result<Self> {
        let n_pairs = engine.model.pairs.len();
        if let Some(&bad) = record.queue.iter().find(|&&p| p >= n_pairs) {
            return Err(Error::PairOutOfRange(bad, n_pairs));
        }
        let probes = ProbeSet::from_entries(record.probes)?;
        if let Some(bad) = probes.pairs().into_iter().find(|&p| p >= n_pairs) {
            return Err(Error::PairOutOfRange(bad, n_pairs));
        }
        if record.profile.factors.len() != engine.model.model.k {
            return Err(Error::Dimension("stored profile does not match the model's K".into()));
        }
        Ok(Self {
            id: record.id,
            settings: record.settings,
            probes,
            profile: record.profile,
            queue: record.queue.into(),
            arrangement: record.arrangement,
            last_move: record.last_move,
        })
    }
}
