use chanex::config::{config_hash, dataset_hash, load, parse, to_toml, Overrides};
use chanex::Error;
use chanex_core::tasks::{ExperimentConfig, Task};

#[test]
fn all_invalid_fields_are_reported_together() {
    let text = r#"
task = "terminal"
epochs = -3
learning_rate = "fast"
[terminal]
source_cluster = 0
target = 2
[scene]
num_scaterers = 3
"#;
    let Err(Error::Schema(errors)) = parse(text, &Overrides::default()) else { panic!("expected schema errors") };
    let joined = errors.join("\n");
    for needle in ["epochs", "learning_rate", "terminal.target", "scene.num_scaterers"] {
        assert!(joined.contains(needle), "{needle} not reported in:\n{joined}");
    }
    assert_eq!(errors.len(), 4, "{joined}");
}

#[test]
fn unknown_task_error_names_the_field_and_exits_1() {
    let err = parse("task = \"beamforming\"", &Overrides::default()).unwrap_err();
    assert!(err.to_string().contains("task: unknown task `beamforming`"), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn hash_is_stable_under_reordering_and_reformatting() {
    let a = "task = \"antenna\"\nr = 8\n[model]\nchannels = 4\nkernel = 3\n[seeds]\ninit = 5\ndata = 2";
    let b = "[seeds]\ndata = 2\ninit = 5\n\n[model]\nkernel = 3\nchannels   =   4\n";
    let o = Overrides { task: Some("antenna".into()), r: Some(8), ..Overrides::default() };
    let ca = parse(a, &Overrides::default()).unwrap().experiment;
    let cb = parse(b, &o).unwrap().experiment;
    assert_eq!(config_hash(&ca), config_hash(&cb));

    // Writing the resolved config out and back keeps the hash.
    let again = parse(&to_toml(&ca).unwrap(), &Overrides::default()).unwrap().experiment;
    assert_eq!(config_hash(&again), config_hash(&ca));

    // Training-only fields leave the dataset hash alone; scene fields do not.
    let mut c = ca.clone();
    c.learning_rate *= 2.0;
    assert_eq!(dataset_hash(&c), dataset_hash(&ca));
    assert_ne!(config_hash(&c), config_hash(&ca));
    c.scene.num_terminals += 1;
    assert_ne!(dataset_hash(&c), dataset_hash(&ca));
}

#[test]
fn defaults_of_every_task_round_trip() {
    for task in Task::ALL {
        let c = ExperimentConfig::for_task(task);
        let text = to_toml(&c).unwrap();
        assert_eq!(parse(&text, &Overrides::default()).unwrap().experiment, c, "{}", task.name());
    }
}

#[test]
fn missing_config_file_exits_1() {
    let err = load(std::path::Path::new("/nonexistent/exp.toml"), &Overrides::default()).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}
