//! Experiment config documents (TOML).
//!
//! A document holds the fields of [`ExperimentConfig`] plus two optional
//! tables: `[run]` (output directory, sweep workers) and `[sweep]` (a list
//! of values per field; every combination becomes one run, and the key
//! `seed` sets all four seeds at once). Sweep axes are taken in sorted key
//! order. Fields left out take the defaults
//! of the document's `task`. Validation reports every invalid field, not
//! just the first.

use std::path::{Path, PathBuf};

use chanex_core::channel::{ArrayGeometry, OfdmConfig};
use chanex_core::scene::{SceneParams, TerminalCluster};
use chanex_core::tasks::{
    AntennaParams, CrossbandParams, ExperimentConfig, FrequencyParams, ModelParams, PatternSource, Seeds,
    SelectionParams, Task, TerminalParams, Variant,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{io_at, Error, Result};

/// Command-line values; each one wins over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub task: Option<String>,
    pub variant: Option<String>,
    pub r: Option<usize>,
    pub snr_db: Option<f64>,
    pub epochs: Option<usize>,
    /// Sets all four seeds.
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
}

/// The `[run]` table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub out_dir: PathBuf,
    /// Concurrent runs in a sweep.
    pub jobs: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { out_dir: PathBuf::from("runs"), jobs: 1 }
    }
}

/// A parsed and validated document.
#[derive(Clone, Debug)]
pub struct ConfigDocument {
    /// The experiment with every sweep axis at its file value.
    pub experiment: ExperimentConfig,
    pub run: RunSection,
    /// Sweep axes, sorted by key.
    pub sweep: Vec<(String, Vec<Value>)>,
    runs: Vec<ExperimentConfig>,
}

impl ConfigDocument {
    /// One config per sweep combination, the last axis varying fastest;
    /// just the experiment when there is no sweep.
    pub fn runs(&self) -> &[ExperimentConfig] {
        &self.runs
    }
}

/// Reads and validates the document at `path`.
pub fn load(path: &Path, overrides: &Overrides) -> Result<ConfigDocument> {
    let text = std::fs::read_to_string(path).map_err(io_at(path))?;
    parse(&text, overrides)
}

/// A document made of `overrides` alone.
pub fn from_overrides(overrides: &Overrides) -> Result<ConfigDocument> {
    parse("", overrides)
}

pub fn parse(text: &str, overrides: &Overrides) -> Result<ConfigDocument> {
    let mut user: Table = toml::from_str(text).map_err(|e| Error::Schema(vec![format!("syntax: {}", e.message())]))?;
    let mut errors = Vec::new();
    apply_overrides(&mut user, overrides, &mut errors);

    let run = match user.remove("run") {
        None => RunSection::default(),
        Some(v) => v.try_into::<RunSection>().unwrap_or_else(|e| {
            errors.push(format!("run: {}", e.message()));
            RunSection::default()
        }),
    };
    if run.jobs == 0 {
        errors.push("run.jobs: must be at least 1".into());
    }
    let sweep_table = match user.remove("sweep") {
        None => Table::new(),
        Some(Value::Table(t)) => t,
        Some(other) => {
            errors.push(format!("sweep: expected a table, found {}", other.type_str()));
            Table::new()
        }
    };

    let experiment = match experiment_from_table(&user) {
        Ok(c) => Some(c),
        Err(mut e) => {
            errors.append(&mut e);
            None
        }
    };
    let template = schema_template(experiment.as_ref().map_or(Task::Antenna, |c| c.task));
    let mut sweep = Vec::new();
    for (key, values) in &sweep_table {
        let slot = if key == "seed" { Some(Value::Integer(0)) } else { lookup(&template, key).cloned() };
        let Some(slot) = slot else {
            errors.push(format!("sweep.{key}: unknown field"));
            continue;
        };
        match values {
            Value::Array(items) if !items.is_empty() => {
                let before = errors.len();
                for item in items {
                    check_value(&slot, item, &format!("sweep.{key}"), &mut errors);
                }
                if errors.len() == before {
                    sweep.push((key.clone(), items.clone()));
                }
            }
            _ => errors.push(format!("sweep.{key}: expected a non-empty array of values")),
        }
    }
    if !errors.is_empty() {
        return Err(Error::Schema(errors));
    }
    let experiment = experiment.expect("no errors means the experiment parsed");
    let runs = expand(&user, &sweep)?;
    Ok(ConfigDocument { experiment, run, sweep, runs })
}

fn apply_overrides(user: &mut Table, o: &Overrides, errors: &mut Vec<String>) {
    if let Some(t) = &o.task {
        user.insert("task".into(), Value::String(t.clone()));
    }
    if let Some(v) = &o.variant {
        user.insert("variant".into(), Value::String(v.clone()));
    }
    let int = |v: u64, name: &str, errors: &mut Vec<String>| match i64::try_from(v) {
        Ok(i) => Some(Value::Integer(i)),
        Err(_) => {
            errors.push(format!("{name}: {v} does not fit a TOML integer"));
            None
        }
    };
    if let Some(r) = o.r.and_then(|r| int(r as u64, "r", errors)) {
        user.insert("r".into(), r);
    }
    if let Some(e) = o.epochs.and_then(|e| int(e as u64, "epochs", errors)) {
        user.insert("epochs".into(), e);
    }
    if let Some(db) = o.snr_db {
        user.insert("snr_db".into(), Value::Float(db));
    }
    if let Some(seed) = o.seed.and_then(|s| int(s, "seed", errors)) {
        set_seed(user, seed, errors);
    }
    if let Some(dir) = &o.out_dir {
        set_path(user, "run.out_dir", Value::String(dir.to_string_lossy().into_owned()), errors);
    }
    if let Some(j) = o.jobs.and_then(|j| int(j as u64, "jobs", errors)) {
        set_path(user, "run.jobs", j, errors);
    }
}

fn set_seed(table: &mut Table, seed: Value, errors: &mut Vec<String>) {
    for k in ["scene", "init", "data", "noise"] {
        set_path(table, &format!("seeds.{k}"), seed.clone(), errors);
    }
}

/// Sets a dotted path, creating tables on the way.
fn set_path(table: &mut Table, path: &str, value: Value, errors: &mut Vec<String>) {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts.pop().expect("split yields one part");
    let mut t = table;
    for (i, p) in parts.iter().enumerate() {
        let entry = t.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        let Value::Table(inner) = entry else {
            errors.push(format!("{}: expected a table, found {}", parts[..=i].join("."), entry.type_str()));
            return;
        };
        t = inner;
    }
    t.insert(last.into(), value);
}

fn lookup<'a>(v: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(v, |v, p| v.as_table()?.get(p))
}

fn task_names() -> String {
    Task::ALL.iter().map(|t| t.name()).collect::<Vec<_>>().join(", ")
}

/// Parses the experiment fields of a document into a config or the list
/// of everything wrong with them.
fn experiment_from_table(user: &Table) -> std::result::Result<ExperimentConfig, Vec<String>> {
    let mut errors = Vec::new();
    let task = match user.get("task") {
        None => {
            errors.push(format!("task: required, one of {}", task_names()));
            None
        }
        Some(Value::String(s)) => Task::from_name(s).or_else(|| {
            errors.push(format!("task: unknown task `{s}`, expected one of {}", task_names()));
            None
        }),
        Some(other) => {
            errors.push(format!("task: expected a string, found {}", other.type_str()));
            None
        }
    };
    let template = schema_template(task.unwrap_or(Task::Antenna));
    let mut defaults = match Value::try_from(ExperimentConfig::for_task(task.unwrap_or(Task::Antenna))) {
        Ok(Value::Table(t)) => t,
        _ => unreachable!("a config serializes to a table"),
    };
    let template = template.as_table().expect("template is a table");
    for (key, value) in user {
        if key == "task" {
            continue;
        }
        let before = errors.len();
        match template.get(key) {
            None => errors.push(format!("{key}: unknown field")),
            Some(slot) => check_value(slot, value, key, &mut errors),
        }
        if errors.len() == before {
            let mut merged = defaults.get(key).cloned().unwrap_or_else(|| value.clone());
            merge(&mut merged, value);
            if let Err(e) = check_field(key, &merged) {
                errors.push(format!("{key}: {e}"));
            }
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    for (key, value) in user {
        match defaults.get_mut(key) {
            Some(slot) => merge(slot, value),
            None => {
                defaults.insert(key.clone(), value.clone());
            }
        }
    }
    let config: ExperimentConfig = Value::Table(defaults).try_into().map_err(|e: toml::de::Error| vec![e.message().to_string()])?;
    config.validate().map_err(|e| vec![e.to_string()])?;
    Ok(config)
}

/// Recursive overlay: tables merge key by key, anything else replaces.
fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

/// Default config of `task` with every optional slot filled in, so that
/// the shape of every accepted key is known.
fn schema_template(task: Task) -> Value {
    let mut c = ExperimentConfig::for_task(task);
    let b = c.scene.bounds;
    c.scene.terminal_region.get_or_insert(b);
    c.scene.scatterer_region.get_or_insert(b);
    if c.scene.terminal_clusters.is_empty() {
        c.scene.terminal_clusters.push(TerminalCluster { center: b.lerp([0.5; 3]), radius: 1.0, count: 1 });
    }
    if c.pattern_indices.is_empty() {
        c.pattern_indices.push(0);
    }
    Value::try_from(c).expect("a config serializes to TOML")
}

fn is_db_string(v: &Value) -> bool {
    matches!(v.as_str(), Some("inf" | "+inf" | "-inf"))
}

/// Structural check of `got` against the template slot `want`.
fn check_value(want: &Value, got: &Value, path: &str, errors: &mut Vec<String>) {
    let numeric = |v: &Value| matches!(v, Value::Integer(_) | Value::Float(_)) || is_db_string(v);
    match (want, got) {
        (Value::Table(w), Value::Table(g)) => {
            for (k, v) in g {
                let sub = format!("{path}.{k}");
                match w.get(k) {
                    Some(slot) => check_value(slot, v, &sub, errors),
                    None => errors.push(format!("{sub}: unknown field")),
                }
            }
        }
        (Value::Array(w), Value::Array(g)) => {
            if let Some(slot) = w.first() {
                for (i, v) in g.iter().enumerate() {
                    check_value(slot, v, &format!("{path}[{i}]"), errors);
                }
            }
        }
        (Value::Float(_), g) if numeric(g) => {}
        (w, g) if is_db_string(w) && numeric(g) => {}
        (Value::Integer(_), Value::Integer(_)) | (Value::String(_), Value::String(_)) | (Value::Boolean(_), Value::Boolean(_)) => {}
        (w, g) => errors.push(format!("{path}: expected {}, found {}", w.type_str(), g.type_str())),
    }
}

#[derive(Deserialize)]
struct Db {
    #[serde(with = "chanex_core::serde_db")]
    #[allow(dead_code)]
    value: f64,
}

/// Deserializes one top-level field on its own, so its error names it.
fn check_field(key: &str, v: &Value) -> std::result::Result<(), String> {
    fn de<T: DeserializeOwned>(v: &Value) -> std::result::Result<(), String> {
        v.clone().try_into::<T>().map(drop).map_err(|e| e.message().to_string())
    }
    match key {
        "scene" => de::<SceneParams>(v),
        "array" => de::<ArrayGeometry>(v),
        "ofdm" => de::<OfdmConfig>(v),
        "pattern" => de::<PatternSource>(v),
        "pattern_indices" => de::<Vec<usize>>(v),
        "variant" => de::<Variant>(v),
        "r" | "epochs" | "batch_size" => de::<usize>(v),
        "learning_rate" => de::<f64>(v),
        "seeds" => de::<Seeds>(v),
        "snr_db" => {
            let mut t = Table::new();
            t.insert("value".into(), v.clone());
            de::<Db>(&Value::Table(t))
        }
        "model" => de::<ModelParams>(v),
        "antenna" => de::<AntennaParams>(v),
        "frequency" => de::<FrequencyParams>(v),
        "crossband" => de::<CrossbandParams>(v),
        "terminal" => de::<TerminalParams>(v),
        "selection" => de::<SelectionParams>(v),
        _ => Ok(()),
    }
}

fn expand(user: &Table, sweep: &[(String, Vec<Value>)]) -> Result<Vec<ExperimentConfig>> {
    let mut out = Vec::new();
    let mut index = vec![0usize; sweep.len()];
    loop {
        let mut table = user.clone();
        let mut errors = Vec::new();
        for ((key, values), &i) in sweep.iter().zip(&index) {
            if key == "seed" {
                set_seed(&mut table, values[i].clone(), &mut errors);
            } else {
                set_path(&mut table, key, values[i].clone(), &mut errors);
            }
        }
        let label: Vec<String> = sweep.iter().zip(&index).map(|((k, v), &i)| format!("{k}={}", v[i])).collect();
        match experiment_from_table(&table) {
            Ok(c) if errors.is_empty() => out.push(c),
            Ok(_) => return Err(Error::Schema(errors)),
            Err(e) => {
                return Err(Error::Schema(e.into_iter().map(|m| format!("sweep point [{}]: {m}", label.join(", "))).collect()))
            }
        }
        // Odometer step, last axis fastest.
        let mut axis = sweep.len();
        loop {
            if axis == 0 {
                return Ok(out);
            }
            axis -= 1;
            index[axis] += 1;
            if index[axis] < sweep[axis].1.len() {
                break;
            }
            index[axis] = 0;
        }
    }
}

/// JSON of `config` with object keys sorted, the input to every hash.
pub fn canonical_json(config: &ExperimentConfig) -> String {
    let value = serde_json::to_value(config).expect("config serializes to JSON");
    serde_json::to_string(&value).expect("JSON value serializes")
}

fn digest(domain: &str, body: &str) -> String {
    let mut h = Sha256::new();
    h.update(domain.as_bytes());
    h.update(b"\n");
    h.update(body.as_bytes());
    hex::encode(h.finalize())
}

/// Content address of a run: changes with any field, seeds included.
pub fn config_hash(config: &ExperimentConfig) -> String {
    digest("chanex-config-v1", &canonical_json(config))
}

/// Content address of the dataset a config trains on.
pub fn dataset_hash(config: &ExperimentConfig) -> String {
    digest("chanex-dataset-v1", &canonical_json(&config.dataset_key()))
}

/// Full document for `config`, loadable with [`parse`].
pub fn to_toml(config: &ExperimentConfig) -> Result<String> {
    toml::to_string_pretty(config).map_err(|e| Error::format("config", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn none() -> Overrides {
        Overrides::default()
    }

    #[test]
    fn defaults_follow_the_task() {
        let doc = parse("task = \"frequency_in_band\"", &none()).unwrap();
        assert_eq!(doc.experiment, ExperimentConfig::for_task(Task::FrequencyInBand));
        assert_eq!(doc.runs().len(), 1);
        assert_eq!(doc.run, RunSection::default());
    }

    #[test]
    fn nested_fields_merge_into_defaults() {
        let doc = parse("task = \"antenna\"\nsnr_db = 10\n[model]\nchannels = 7\n[scene]\nnum_terminals = 12", &none()).unwrap();
        let mut want = ExperimentConfig::for_task(Task::Antenna);
        want.model.channels = 7;
        want.scene.num_terminals = 12;
        want.snr_db = 10.0;
        assert_eq!(doc.experiment, want);
    }

    #[test]
    fn every_invalid_field_is_listed() {
        let text = "task = \"antenna\"\nbogus = 1\nr = \"eight\"\nvariant = \"mlp\"\n[model]\nchanels = 3\n[frequency]\ncp_mode = \"half\"";
        let Err(Error::Schema(errors)) = parse(text, &none()) else { panic!("expected a schema error") };
        let joined = errors.join("\n");
        for field in ["bogus", "r:", "variant", "model.chanels", "frequency"] {
            assert!(joined.contains(field), "{field} missing from {joined}");
        }
        assert_eq!(errors.len(), 5, "{joined}");
    }

    #[test]
    fn unknown_task_names_the_field() {
        let Err(Error::Schema(errors)) = parse("task = \"weather\"", &none()) else { panic!() };
        assert!(errors[0].starts_with("task:"), "{errors:?}");
        assert!(matches!(parse("", &none()), Err(Error::Schema(_))));
    }

    #[test]
    fn overrides_win_over_the_file() {
        let o = Overrides {
            variant: Some("ode_cnn".into()),
            r: Some(16),
            epochs: Some(3),
            seed: Some(9),
            snr_db: Some(5.0),
            out_dir: Some("elsewhere".into()),
            jobs: Some(2),
            ..none()
        };
        let doc = parse("task = \"antenna\"\nr = 8\nepochs = 100\n[run]\nout_dir = \"x\"", &o).unwrap();
        let c = &doc.experiment;
        assert_eq!((c.variant, c.r, c.epochs, c.snr_db), (Variant::OdeCnn, 16, 3, 5.0));
        assert_eq!(c.seeds, Seeds::all(9));
        assert_eq!(doc.run, RunSection { out_dir: "elsewhere".into(), jobs: 2 });
    }

    #[test]
    fn infinite_snr_round_trips() {
        let doc = parse("task = \"antenna\"\nsnr_db = \"inf\"", &none()).unwrap();
        assert_eq!(doc.experiment.snr_db, f64::INFINITY);
        let text = to_toml(&doc.experiment).unwrap();
        assert_eq!(parse(&text, &none()).unwrap().experiment, doc.experiment);
    }

    #[test]
    fn semantic_errors_are_reported() {
        let Err(Error::Schema(errors)) = parse("task = \"cross_band\"\nvariant = \"cnn\"", &none()) else { panic!() };
        assert!(errors[0].contains("variant"), "{errors:?}");
    }

    #[test]
    fn sweep_expands_in_order() {
        let text = "task = \"antenna\"\n[sweep]\nvariant = [\"cnn\", \"ode_cnn\"]\nr = [8, 16]\nseed = [1, 2, 3]";
        let doc = parse(text, &none()).unwrap();
        let runs = doc.runs();
        assert_eq!(runs.len(), 12);
        // Axes sorted by key: r, seed, variant.
        assert_eq!((runs[0].r, runs[0].seeds.init, runs[0].variant), (8, 1, Variant::Cnn));
        assert_eq!((runs[1].r, runs[1].seeds.init, runs[1].variant), (8, 1, Variant::OdeCnn));
        assert_eq!((runs[2].r, runs[2].seeds.init, runs[2].variant), (8, 2, Variant::Cnn));
        assert_eq!((runs[11].r, runs[11].variant, runs[11].seeds.scene), (16, Variant::OdeCnn, 3));
        let hashes: std::collections::BTreeSet<_> = runs.iter().map(config_hash).collect();
        assert_eq!(hashes.len(), 12);
    }

    #[test]
    fn bad_sweeps_are_schema_errors() {
        for text in ["[sweep]\nnope = [1]", "[sweep]\nr = []", "[sweep]\nr = [\"a\"]", "[sweep]\nvariant = [\"dnn\"]"] {
            let text = format!("task = \"antenna\"\n{text}");
            assert!(matches!(parse(&text, &none()), Err(Error::Schema(_))), "{text}");
        }
    }

    #[test]
    fn hash_ignores_key_order_and_tracks_values() {
        let a = parse("task = \"antenna\"\nr = 16\nepochs = 5", &none()).unwrap().experiment;
        let b = parse("epochs = 5\nr = 16\ntask = \"antenna\"", &none()).unwrap().experiment;
        assert_eq!(config_hash(&a), config_hash(&b));
        let c = ExperimentConfig { epochs: 6, ..a.clone() };
        assert_ne!(config_hash(&a), config_hash(&c));
        assert_eq!(dataset_hash(&a), dataset_hash(&c));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn optional_scene_regions_are_accepted() {
        let text = "task = \"antenna\"\n[scene.terminal_region]\nmin = { x = 1.0, y = 1.0, z = 1.0 }\nmax = { x = 5.0, y = 5.0, z = 2.0 }";
        let doc = parse(text, &none()).unwrap();
        assert!(doc.experiment.scene.terminal_region.is_some());
    }
}
