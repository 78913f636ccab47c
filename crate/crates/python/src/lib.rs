//! Python bindings: train a model, probe a new user, and arrange objects.

use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use tidyup_core::factorization::{rmse, train};
use tidyup_core::probing::{predict_for_user, random_probes, select_probes, solve_new_user};
use tidyup_core::{
    ErrorKind, ExpertMixture, ProbeSet, RatingsDataset, SpectralConfig, StoredModel, TaxonomyExpert, TrainConfig,
    UserPreferences, UserProfile,
};

create_exception!(tidyup, AbstentionError, PyValueError, "No expert can rate a pair of objects.");

fn to_py(err: tidyup_core::Error) -> PyErr {
    let message = err.to_string();
    match err.kind() {
        ErrorKind::Io => PyOSError::new_err(message),
        ErrorKind::Validation => PyValueError::new_err(message),
        ErrorKind::Numerical => PyArithmeticError::new_err(message),
        ErrorKind::Abstention => AbstentionError::new_err(message),
    }
}

trait OrPy<T> {
    fn or_py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for tidyup_core::Result<T> {
    fn or_py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// A user's bias and latent factors.
#[pyclass(module = "tidyup", from_py_object)]
#[derive(Clone)]
pub struct Profile {
    inner: UserProfile,
}

#[pymethods]
impl Profile {
    #[new]
    fn new(user_bias: f64, factors: Vec<f64>) -> Self {
        Self { inner: UserProfile { user_bias, factors } }
    }

    #[getter]
    fn user_bias(&self) -> f64 {
        self.inner.user_bias
    }

    #[getter]
    fn factors(&self) -> Vec<f64> {
        self.inner.factors.clone()
    }

    fn __repr__(&self) -> String {
        format!("Profile(user_bias={}, factors={:?})", self.inner.user_bias, self.inner.factors)
    }
}

/// A mixture of category hierarchies that rates pairs of unseen objects.
#[pyclass(module = "tidyup")]
pub struct Experts {
    inner: ExpertMixture,
}

#[pymethods]
impl Experts {
    /// Build from hierarchy texts, one `parent<TAB>child` edge per line.
    #[new]
    fn new(hierarchies: Vec<String>) -> PyResult<Self> {
        let experts = hierarchies
            .iter()
            .enumerate()
            .map(|(i, text)| TaxonomyExpert::parse(format!("expert{}", i + 1), text))
            .collect::<tidyup_core::Result<Vec<_>>>()
            .or_py()?;
        Ok(Self { inner: ExpertMixture::new(experts) })
    }

    #[staticmethod]
    fn load(paths: Vec<String>) -> PyResult<Self> {
        Ok(Self { inner: ExpertMixture::load_hierarchies(&paths).or_py()? })
    }

    fn __len__(&self) -> usize {
        self.inner.experts.len()
    }
}

/// Wu-Palmer similarity of two classes in a hierarchy, or `None` when either
/// is missing from it.
#[pyfunction]
fn wup(hierarchy: &str, a: &str, b: &str) -> PyResult<Option<f64>> {
    Ok(TaxonomyExpert::parse("hierarchy", hierarchy).or_py()?.wup(a, b))
}

/// A trained factor model with its catalog and pair index.
#[pyclass(module = "tidyup")]
pub struct Model {
    inner: StoredModel,
}

impl Model {
    fn pair(&self, a: &str, b: &str) -> PyResult<usize> {
        let catalog = &self.inner.catalog;
        let (l, k) = (catalog.ordinal(a).or_py()?, catalog.ordinal(b).or_py()?);
        self.inner.pairs.lookup(l, k).or_py()
    }

    fn probe_set(&self, answers: &[(String, String, f64)]) -> PyResult<ProbeSet> {
        let mut probes = ProbeSet::new();
        for (a, b, rating) in answers {
            probes.insert(self.pair(a, b)?, *rating).or_py()?;
        }
        Ok(probes)
    }

    fn check_profile(&self, profile: &Profile) -> PyResult<()> {
        if profile.inner.factors.len() != self.inner.model.k {
            return Err(PyValueError::new_err(format!(
                "profile has {} factors, model has K={}",
                profile.inner.factors.len(),
                self.inner.model.k
            )));
        }
        Ok(())
    }

    fn names(&self, pair: usize) -> PyResult<(String, String)> {
        let (a, b) = self.inner.pairs.names(&self.inner.catalog, pair).or_py()?;
        Ok((a.to_string(), b.to_string()))
    }
}

#[pymethods]
impl Model {
    /// Fit a model to ratings CSV text with header `pair_a,pair_b,user_id,rating`.
    #[staticmethod]
    #[pyo3(signature = (ratings_csv, seed, k = 3, lam = 0.01, max_iterations = 500))]
    fn train(
        py: Python<'_>,
        ratings_csv: &str,
        seed: u64,
        k: usize,
        lam: f64,
        max_iterations: usize,
    ) -> PyResult<Self> {
        let config = TrainConfig { k, lambda: lam, max_iterations, seed, ..TrainConfig::default() };
        config.validate().or_py()?;
        let data = RatingsDataset::read_csv(ratings_csv.as_bytes(), None).or_py()?;
        let model = py.detach(|| train(&data.matrix, &config)).or_py()?;
        Ok(Self { inner: StoredModel::new(model, data.catalog, data.pairs).or_py()? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: StoredModel::load(path).or_py()? })
    }

    #[staticmethod]
    fn from_json(json: &str) -> PyResult<Self> {
        Ok(Self { inner: StoredModel::from_json(json).or_py()? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).or_py()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().or_py()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.model.k
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.inner.model.lambda
    }

    #[getter]
    fn objects(&self) -> Vec<String> {
        self.inner.catalog.names().to_vec()
    }

    #[getter]
    fn pairs(&self) -> PyResult<Vec<(String, String)>> {
        (0..self.inner.pairs.len()).map(|p| self.names(p)).collect()
    }

    /// Root-mean-square training error on ratings CSV text.
    fn rmse(&self, ratings_csv: &str) -> PyResult<f64> {
        let data = RatingsDataset::read_csv(ratings_csv.as_bytes(), Some(&self.inner.catalog)).or_py()?;
        if data.pairs != self.inner.pairs {
            return Err(PyValueError::new_err("ratings cover different pairs than the model"));
        }
        rmse(&self.inner.model, &data.matrix).or_py()
    }

    /// Pairs to ask a new user about, by `"cluster"` or `"random"` choice.
    #[pyo3(signature = (count, seed, strategy = "cluster"))]
    fn select_probes(&self, count: usize, seed: u64, strategy: &str) -> PyResult<Vec<(String, String)>> {
        let chosen = match strategy {
            "cluster" => select_probes(&self.inner.model, count, seed),
            "random" => random_probes(&(0..self.inner.pairs.len()).collect::<Vec<_>>(), count, seed),
            other => return Err(PyValueError::new_err(format!("unknown strategy `{other}`"))),
        }
        .or_py()?;
        chosen.into_iter().map(|p| self.names(p)).collect()
    }

    /// Solve a new user's profile from `(object, object, rating)` answers.
    #[pyo3(signature = (answers, lam = None))]
    fn solve_user(&self, answers: Vec<(String, String, f64)>, lam: Option<f64>) -> PyResult<Profile> {
        let probes = self.probe_set(&answers)?;
        let config = TrainConfig {
            k: self.inner.model.k,
            lambda: lam.unwrap_or(self.inner.model.lambda),
            ..TrainConfig::default()
        };
        Ok(Profile { inner: solve_new_user(&self.inner.model, &probes, &config).or_py()? })
    }

    /// Predicted rating of one pair for a profile.
    fn predict(&self, profile: &Profile, a: &str, b: &str) -> PyResult<f64> {
        self.check_profile(profile)?;
        predict_for_user(&self.inner.model, &profile.inner, self.pair(a, b)?).or_py()
    }

    /// Group objects into at most `containers` containers. Answers override
    /// predictions; `experts` rate objects the model has never seen.
    #[pyo3(signature = (profile, seed, containers = 6, answers = Vec::new(), objects = None, experts = None))]
    fn arrange(
        &self,
        profile: &Profile,
        seed: u64,
        containers: usize,
        answers: Vec<(String, String, f64)>,
        objects: Option<Vec<String>>,
        experts: Option<&Experts>,
    ) -> PyResult<Vec<Vec<String>>> {
        self.check_profile(profile)?;
        let probes = self.probe_set(&answers)?;
        let names = objects.unwrap_or_else(|| self.inner.catalog.names().to_vec());
        let mut prefs = UserPreferences::new(&self.inner, &profile.inner, &probes);
        if let Some(experts) = experts {
            prefs = prefs.with_experts(&experts.inner);
        }
        let arranged = prefs.arrange(&names, containers, seed, &SpectralConfig::default()).or_py()?;
        Ok(arranged.containers)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(objects={}, pairs={}, k={}, lam={})",
            self.inner.catalog.len(),
            self.inner.pairs.len(),
            self.inner.model.k,
            self.inner.model.lambda
        )
    }
}

/// Run an evaluation protocol and return its report as JSON.
#[pyfunction]
#[pyo3(signature = (name, seed, config = None))]
fn run_protocol(py: Python<'_>, name: &str, seed: u64, config: Option<&str>) -> PyResult<String> {
    let config: Option<serde_json::Value> =
        config.map(serde_json::from_str).transpose().map_err(|e| PyValueError::new_err(format!("config: {e}")))?;
    let report = py.detach(|| tidyup_core::run_protocol(name, config.as_ref(), seed)).or_py()?;
    report.to_json().or_py()
}

#[pymodule]
fn tidyup(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<Profile>()?;
    m.add_class::<Experts>()?;
    m.add_function(wrap_pyfunction!(wup, m)?)?;
    m.add_function(wrap_pyfunction!(run_protocol, m)?)?;
    m.add("AbstentionError", m.py().get_type::<AbstentionError>())?;
    Ok(())
}
