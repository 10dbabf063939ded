use d2dsched::config::ExperimentConfig;
use d2dsched::simulator::{replicate, run_scheduler, SeedEnvironment};
use d2dsched::trace::{read_records, read_trace_str, trace_to_string, write_records, RunSummary};
use d2dsched::NetworkTopology;

const CONFIG: &str = r#"
[network]
links = 6
area_side = 300.0

[run]
blocks = 120
seeds = 3
seed = 5

[[scheduler]]
kind = "banditlinq"
clustering = "feedback"
max_cluster_size = 3

[[scheduler]]
kind = "lquasiopt"
clustering = "pathloss"
max_cluster_size = 3

[[scheduler]]
kind = "itlinq"

[[scheduler]]
kind = "random"
flip_prob = 0.2
"#;

fn config() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(CONFIG, &[]).unwrap()
}

#[test]
fn traces_survive_csv_round_trip() {
    let r = replicate(&config()).unwrap();
    assert_eq!(r.traces.len(), 12);
    for t in &r.traces {
        let text = trace_to_string(&t.rows).unwrap();
        assert_eq!(read_trace_str(&text).unwrap(), t.rows, "{} seed {}", t.scheduler, t.seed);
    }
}

#[test]
fn summaries_survive_csv_round_trip() {
    let summaries = replicate(&config()).unwrap().summaries();
    let mut buf = Vec::new();
    write_records(&mut buf, "summary", &summaries).unwrap();
    let back: Vec<RunSummary> = read_records(buf.as_slice(), "summary").unwrap();
    assert_eq!(back, summaries);
}

#[test]
fn saved_topology_reproduces_the_run() {
    let c = config();
    let env = SeedEnvironment::new(&c, 9).unwrap();
    let json = env.epochs[0].0.to_json().unwrap();
    let loaded = NetworkTopology::from_json_str(&json).unwrap();
    let again = SeedEnvironment::with_topology(&c, 9, loaded).unwrap();
    for i in 0..c.schedulers.len() {
        let a = run_scheduler(&c, i, &env).unwrap();
        let b = run_scheduler(&c, i, &again).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.summary, b.summary);
    }
}

#[test]
fn config_snapshot_is_a_fixed_point() {
    let c = config();
    let snapshot = c.to_toml_string().unwrap();
    let again = ExperimentConfig::from_toml_str(&snapshot, &[]).unwrap();
    assert_eq!(again, c);
    assert_eq!(again.to_toml_string().unwrap(), snapshot);
}
