use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tidyup_core::evaluation::GenSpec;
use tidyup_core::factorization::{rmse, train, TrainConfig};
use tidyup_core::probing::{predict_for_user, random_probes, select_probes, solve_new_user};
use tidyup_core::{
    run_protocol, ExpertMixture, ObjectCatalog, ProbeSet, RatingsDataset, SpectralConfig, StoredModel, UserPreferences,
    UserProfile,
};

use crate::{
    ArrangeArgs, Command, EvalArgs, Failure, GenArgs, NewUserArgs, PredictArgs, SelectProbesArgs, ServeArgs, Strategy,
    TrainArgs, EXIT_IO, EXIT_VALIDATION,
};

type Outcome = Result<(), Failure>;

/// A solved profile tied to the catalog of the model it was solved against.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProfileFile {
    catalog_fingerprint: String,
    #[serde(flatten)]
    profile: UserProfile,
}

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Train(args) => cmd_train(args),
        Command::NewUser(args) => cmd_new_user(args),
        Command::SelectProbes(args) => cmd_select_probes(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Arrange(args) => cmd_arrange(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gen(args) => cmd_gen(args),
        Command::Serve(args) => cmd_serve(args),
    }
}

fn check_inputs<'a>(paths: impl IntoIterator<Item = &'a PathBuf>) -> Outcome {
    for path in paths {
        if !path.is_file() {
            return Err(Failure::new(EXIT_IO, format!("cannot read `{}`", path.display())));
        }
    }
    Ok(())
}

fn check_output(path: &Path) -> Outcome {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if parent.is_dir() {
        Ok(())
    } else {
        Err(Failure::new(EXIT_IO, format!("directory `{}` does not exist", parent.display())))
    }
}

fn io_failure(path: &Path, err: io::Error) -> Failure {
    Failure::new(EXIT_IO, format!("`{}`: {err}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

/// Standard output, or the file at `path`.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match path {
        Some(p) => Ok(Box::new(create(p)?)),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn write_text(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn load_profile(path: &Path, model: &StoredModel) -> Result<UserProfile, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let file: ProfileFile =
        serde_json::from_str(&text).map_err(|e| Failure::new(EXIT_IO, format!("`{}`: {e}", path.display())))?;
    if file.catalog_fingerprint != model.catalog.fingerprint() {
        return Err(Failure::new(EXIT_VALIDATION, "profile was solved against a different catalog"));
    }
    if file.profile.factors.len() != model.model.k {
        return Err(Failure::new(
            EXIT_VALIDATION,
            format!("profile has {} factors, model has K={}", file.profile.factors.len(), model.model.k),
        ));
    }
    Ok(file.profile)
}

fn load_probes(path: &Path, model: &StoredModel) -> Result<ProbeSet, Failure> {
    let file = File::open(path).map_err(|e| io_failure(path, e))?;
    Ok(ProbeSet::read_csv(file, &model.catalog, &model.pairs)?)
}

fn load_experts(hierarchies: &[PathBuf], config: Option<&Path>) -> Result<Option<ExpertMixture>, Failure> {
    if let Some(path) = config {
        return Ok(Some(ExpertMixture::load_config(path)?));
    }
    if hierarchies.is_empty() {
        return Ok(None);
    }
    Ok(Some(ExpertMixture::load_hierarchies(hierarchies)?))
}

fn cmd_train(args: TrainArgs) -> Outcome {
    check_inputs([&args.ratings].into_iter().chain(&args.catalog))?;
    check_output(&args.out)?;
    let config = TrainConfig {
        k: args.k,
        lambda: args.lambda,
        max_iterations: args.max_iterations,
        tolerance: args.tolerance,
        seed: args.seed,
        ..TrainConfig::default()
    };
    config.validate()?;
    let catalog = args.catalog.as_ref().map(ObjectCatalog::load).transpose()?;
    let data = RatingsDataset::load_csv(&args.ratings, catalog.as_ref())?;
    let model = train(&data.matrix, &config)?;
    let error = rmse(&model, &data.matrix)?;
    let stored = StoredModel::new(model, data.catalog, data.pairs)?;
    write_text(&args.out, &stored.to_json()?)?;
    println!(
        "trained K={} lambda={} on {} ratings ({} pairs, {} users): rmse {error:.6}",
        config.k,
        config.lambda,
        data.matrix.len(),
        data.matrix.n_pairs(),
        data.matrix.n_users()
    );
    Ok(())
}

fn cmd_new_user(args: NewUserArgs) -> Outcome {
    check_inputs([&args.model, &args.probes])?;
    check_output(&args.out)?;
    let model = StoredModel::load(&args.model)?;
    let probes = load_probes(&args.probes, &model)?;
    let config =
        TrainConfig { k: model.model.k, lambda: args.lambda.unwrap_or(model.model.lambda), ..TrainConfig::default() };
    let profile = solve_new_user(&model.model, &probes, &config)?;
    let file = ProfileFile { catalog_fingerprint: model.catalog.fingerprint(), profile };
    write_text(&args.out, &serde_json::to_string_pretty(&file).map_err(tidyup_core::Error::from)?)?;
    println!("solved profile from {} probes", probes.len());
    Ok(())
}

fn cmd_select_probes(args: SelectProbesArgs) -> Outcome {
    check_inputs([&args.model])?;
    if let Some(out) = &args.out {
        check_output(out)?;
    }
    let model = StoredModel::load(&args.model)?;
    let chosen = match args.strategy {
        Strategy::Cluster => select_probes(&model.model, args.count, args.seed)?,
        Strategy::Random => {
            let all: Vec<usize> = (0..model.pairs.len()).collect();
            random_probes(&all, args.count, args.seed)?
        }
    };
    let mut wtr = csv::Writer::from_writer(sink(args.out.as_deref())?);
    let write = |wtr: &mut csv::Writer<Box<dyn Write>>| -> Result<(), tidyup_core::Error> {
        wtr.write_record(["pair_a", "pair_b"])?;
        for &pair in &chosen {
            let (a, b) = model.pairs.names(&model.catalog, pair)?;
            wtr.write_record([a, b])?;
        }
        wtr.flush()?;
        Ok(())
    };
    write(&mut wtr)?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct PairRow {
    pair_a: String,
    pair_b: String,
}

fn read_pairs(path: &Path, model: &StoredModel) -> Result<Vec<usize>, Failure> {
    let file = File::open(path).map_err(|e| io_failure(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<PairRow>().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(tidyup_core::Error::from)?;
        let lookup = || -> tidyup_core::Result<usize> {
            let (a, b) = (model.catalog.ordinal(&row.pair_a)?, model.catalog.ordinal(&row.pair_b)?);
            if a == b {
                return Err(tidyup_core::Error::SelfNamedPair(row.pair_a.clone()));
            }
            model.pairs.lookup(a, b)
        };
        out.push(lookup().map_err(|e| Failure::new(EXIT_VALIDATION, format!("line {line}: {e}")))?);
    }
    Ok(out)
}

fn cmd_predict(args: PredictArgs) -> Outcome {
    check_inputs([&args.model, &args.profile].into_iter().chain(&args.pairs))?;
    if let Some(out) = &args.out {
        check_output(out)?;
    }
    let model = StoredModel::load(&args.model)?;
    let profile = load_profile(&args.profile, &model)?;
    let pairs = match &args.pairs {
        Some(path) => read_pairs(path, &model)?,
        None => (0..model.pairs.len()).collect(),
    };
    let mut wtr = csv::Writer::from_writer(sink(args.out.as_deref())?);
    let write = |wtr: &mut csv::Writer<Box<dyn Write>>| -> Result<(), tidyup_core::Error> {
        wtr.write_record(["pair_a", "pair_b", "rating"])?;
        for &pair in &pairs {
            let (a, b) = model.pairs.names(&model.catalog, pair)?;
            let rating = predict_for_user(&model.model, &profile, pair)?.clamp(0.0, 1.0);
            wtr.write_record([a, b, &rating.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    };
    write(&mut wtr)?;
    Ok(())
}

fn cmd_arrange(args: ArrangeArgs) -> Outcome {
    check_inputs(
        [&args.model, &args.profile]
            .into_iter()
            .chain(&args.probes)
            .chain(&args.objects)
            .chain(&args.hierarchies)
            .chain(&args.experts),
    )?;
    check_output(&args.out)?;
    let model = StoredModel::load(&args.model)?;
    let profile = load_profile(&args.profile, &model)?;
    let probes = match &args.probes {
        Some(path) => load_probes(path, &model)?,
        None => ProbeSet::new(),
    };
    let names: Vec<String> = match &args.objects {
        Some(path) => ObjectCatalog::load(path)?.names().to_vec(),
        None => model.catalog.names().to_vec(),
    };
    let experts = load_experts(&args.hierarchies, args.experts.as_deref())?;
    let unknown: Vec<&str> = names.iter().filter(|n| !model.catalog.contains(n)).map(String::as_str).collect();
    if experts.is_none() && !unknown.is_empty() {
        return Err(Failure::new(
            EXIT_VALIDATION,
            format!("objects unknown to the model need --hierarchy or --experts: {}", unknown.join(", ")),
        ));
    }
    let mut prefs = UserPreferences::new(&model, &profile, &probes);
    if let Some(mixture) = &experts {
        prefs = prefs.with_experts(mixture);
    }
    let arrangement = prefs.arrange(&names, args.containers, args.seed, &SpectralConfig::default())?;
    let json = serde_json::to_string_pretty(&arrangement).map_err(tidyup_core::Error::from)?;
    write_text(&args.out, &json)?;
    println!("{} objects in {} containers", names.len(), arrangement.containers.len());
    for (i, container) in arrangement.containers.iter().enumerate() {
        println!("  {}: {}", i + 1, container.join(", "));
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Outcome {
    check_inputs(&args.config)?;
    check_output(&args.out)?;
    let config: Option<Value> = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            Some(serde_json::from_str(&text).map_err(|e| Failure::new(EXIT_IO, format!("`{}`: {e}", path.display())))?)
        }
        None => None,
    };
    let report = run_protocol(&args.protocol, config.as_ref(), args.seed)?;
    write_text(&args.out, &report.to_json()?)?;
    print!("{}", report.to_table());
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Outcome {
    check_inputs([&args.spec])?;
    check_output(&args.out)?;
    let data = GenSpec::load(&args.spec)?.generate(args.seed)?;
    let out = create(&args.out)?;
    data.write_csv(out)?;
    println!(
        "{} ratings for {} users over {} pairs ({:.1}% missing)",
        data.matrix.len(),
        data.matrix.n_users(),
        data.matrix.n_pairs(),
        100.0 * (1.0 - data.matrix.fill_ratio())
    );
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> Outcome {
    use tidyup_service::{cors, serve, AppState, Engine};

    check_inputs(args.model.iter().chain(&args.objects).chain(&args.hierarchies).chain(&args.experts))?;
    let state = match &args.model {
        Some(path) => {
            let mut engine = Engine::new(StoredModel::load(path)?);
            if let Some(objects) = &args.objects {
                engine = engine.with_objects(ObjectCatalog::load(objects)?.names().to_vec());
            }
            if let Some(mixture) = load_experts(&args.hierarchies, args.experts.as_deref())? {
                engine = engine.with_experts(mixture);
            }
            AppState::new(engine)
        }
        None => AppState::without_model(),
    };
    if let Some(path) = args.sessions.as_ref().filter(|p| p.is_file()) {
        let restored = state.load_sessions(path)?;
        println!("restored {restored} sessions from {}", path.display());
    }
    let cors = cors(args.allow_origin.as_deref())
        .map_err(|e| Failure::new(EXIT_VALIDATION, format!("--allow-origin: {e}")))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
    runtime.block_on(async {
        let address = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&address)
            .await
            .map_err(|e| Failure::new(EXIT_IO, format!("cannot listen on {address}: {e}")))?;
        println!("listening on http://{}", listener.local_addr().map_err(|e| Failure::new(EXIT_IO, e.to_string()))?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        serve(listener, state, cors, args.sessions.as_deref(), shutdown).await?;
        Ok(())
    })
}
