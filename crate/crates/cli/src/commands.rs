use std::fs;
use std::path::Path;

use d2dsched::config::{value_text, ExperimentConfig, Override, SweepSpec};
use d2dsched::simulator::{replicate, seeds, Replication};
use d2dsched::trace::{aggregate, trace_to_string, write_records, RunSummary};
use d2dsched::validation::{run_validation, Level, ValidationOptions};
use serde::Serialize;

use crate::output::{safe_name, unix_now, Manifest, Staging, SweepRecord, Timing};
use crate::{ExperimentArgs, Failure};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const TRACE_DIR: &str = "traces";

fn read_config(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::invalid(format!("cannot read config {}: {e}", path.display())))
}

/// `--set` entries followed by the dedicated flags, in that order.
fn overrides(args: &ExperimentArgs) -> Result<Vec<Override>, Failure> {
    let mut list = args
        .overrides
        .iter()
        .map(|s| s.parse::<Override>())
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = args.seed {
        list.push(Override::new("run.seed", toml::Value::Integer(seed as i64)));
    }
    if let Some(workers) = args.workers {
        list.push(Override::new("run.workers", toml::Value::Integer(workers as i64)));
    }
    Ok(list)
}

fn parse(path: &Path, text: &str, overrides: &[Override]) -> Result<ExperimentConfig, Failure> {
    ExperimentConfig::from_toml_str(text, overrides).map_err(|e| {
        let f = Failure::from(e);
        Failure {
            message: format!("{}: {}", path.display(), f.message),
            ..f
        }
    })
}

fn csv_bytes(name: &str, write: impl FnOnce(&mut Vec<u8>) -> d2dsched::Result<()>) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| Failure::runtime(format!("writing {name}: {e}")))?;
    Ok(buf)
}

/// Writes traces, summaries and aggregates of one replicate under `prefix`.
fn write_replication(staging: &mut Staging, prefix: &str, r: &Replication) -> Result<(), Failure> {
    for t in &r.traces {
        let rel = format!("{prefix}{TRACE_DIR}/{}/seed-{}.csv", safe_name(&t.scheduler), t.seed);
        let text = trace_to_string(&t.rows)?;
        staging.write(&rel, text.as_bytes())?;
    }
    let summaries = r.summaries();
    staging.write(
        &format!("{prefix}{SUMMARY_FILE}"),
        &csv_bytes(SUMMARY_FILE, |b| write_records(b, "summary", &summaries))?,
    )?;
    staging.write(
        &format!("{prefix}{AGGREGATE_FILE}"),
        &csv_bytes(AGGREGATE_FILE, |b| write_records(b, "aggregate", &r.aggregates))?,
    )?;
    Ok(())
}

fn print_aggregates(title: &str, r: &Replication) {
    println!("{title}");
    println!("{:<20} {:>6} {:>12} {:>10} {:>12}", "scheduler", "seeds", "r_avg", "stderr", "throughput");
    for a in &r.aggregates {
        println!(
            "{:<20} {:>6} {:>12.4} {:>10.4} {:>12.4}",
            a.scheduler, a.seeds, a.r_avg_mean, a.r_avg_stderr, a.throughput_mean
        );
    }
}

pub fn run(args: &ExperimentArgs) -> Result<(), Failure> {
    let started = unix_now();
    let text = read_config(&args.config)?;
    let config = parse(&args.config, &text, &overrides(args)?)?;
    let mut staging = Staging::create(&args.out, args.force)?;
    let r = replicate(&config)?;
    write_replication(&mut staging, "", &r)?;
    let snapshot = config.to_toml_string()?;
    staging.write(CONFIG_FILE, snapshot.as_bytes())?;
    let mut manifest = Manifest::new("run");
    manifest.config = Some(snapshot);
    manifest.seeds = seeds(&config);
    let finished = unix_now();
    manifest.timing = Some(Timing {
        started_unix: started,
        finished_unix: finished,
        elapsed_seconds: finished - started,
    });
    staging.commit(manifest)?;
    print_aggregates(&format!("wrote {}", args.out.display()), &r);
    Ok(())
}

/// CSV of `rows` with an extra leading column `key`.
fn with_key_column<T: Serialize>(schema: &str, key: &str, rows: &[(String, T)]) -> Result<Vec<u8>, Failure> {
    let broken = |e: csv::Error| Failure::runtime(format!("writing {schema}: {e}"));
    let mut out = format!("# {schema}-schema: {}\n", d2dsched::trace::SUMMARY_SCHEMA_VERSION).into_bytes();
    let mut w = csv::Writer::from_writer(&mut out);
    let mut header_written = false;
    for (value, row) in rows {
        let mut one = csv::Writer::from_writer(Vec::new());
        one.serialize(row).map_err(broken)?;
        let bytes = one.into_inner().map_err(|e| Failure::runtime(e.to_string()))?;
        let mut reader = csv::Reader::from_reader(bytes.as_slice());
        if !header_written {
            let mut header = csv::StringRecord::new();
            header.push_field(key);
            header.extend(reader.headers().map_err(broken)?.iter());
            w.write_record(&header).map_err(broken)?;
            header_written = true;
        }
        for record in reader.records() {
            let mut full = csv::StringRecord::new();
            full.push_field(value);
            full.extend(record.map_err(broken)?.iter());
            w.write_record(&full).map_err(broken)?;
        }
    }
    w.flush()?;
    drop(w);
    Ok(out)
}

pub fn sweep(args: &ExperimentArgs, spec: &str) -> Result<(), Failure> {
    let started = unix_now();
    let spec: SweepSpec = spec.parse()?;
    let text = read_config(&args.config)?;
    let base = overrides(args)?;
    let base_config = parse(&args.config, &text, &base)?;
    let mut configs = Vec::new();
    for o in spec.overrides() {
        let mut list = base.clone();
        list.push(o.clone());
        configs.push((value_text(&o.value), parse(&args.config, &text, &list)?));
    }
    let mut staging = Staging::create(&args.out, args.force)?;
    let mut all_summaries: Vec<(String, RunSummary)> = Vec::new();
    let mut all_aggregates = Vec::new();
    let mut all_seeds = Vec::new();
    for (value, config) in &configs {
        let r = replicate(config)?;
        let prefix = format!("{}/", safe_name(&format!("{}={value}", spec.key)));
        write_replication(&mut staging, &prefix, &r)?;
        print_aggregates(&format!("{} = {value}", spec.key), &r);
        let summaries = r.summaries();
        all_aggregates.extend(aggregate(&summaries).into_iter().map(|a| (value.clone(), a)));
        all_summaries.extend(summaries.into_iter().map(|s| (value.clone(), s)));
        for s in seeds(config) {
            if !all_seeds.contains(&s) {
                all_seeds.push(s);
            }
        }
    }
    staging.write(SUMMARY_FILE, &with_key_column("summary", &spec.key, &all_summaries)?)?;
    staging.write(AGGREGATE_FILE, &with_key_column("aggregate", &spec.key, &all_aggregates)?)?;
    let snapshot = base_config.to_toml_string()?;
    staging.write(CONFIG_FILE, snapshot.as_bytes())?;
    let mut manifest = Manifest::new("sweep");
    manifest.config = Some(snapshot);
    manifest.sweep = Some(SweepRecord {
        key: spec.key.clone(),
        values: configs.iter().map(|(v, _)| v.clone()).collect(),
    });
    manifest.seeds = all_seeds;
    let finished = unix_now();
    manifest.timing = Some(Timing {
        started_unix: started,
        finished_unix: finished,
        elapsed_seconds: finished - started,
    });
    staging.commit(manifest)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

pub fn validate(level: &str, out: Option<&Path>, seed: Option<u64>, tamper: bool) -> Result<(), Failure> {
    let started = unix_now();
    let level: Level = level.parse()?;
    let mut options = ValidationOptions::new(level);
    if let Some(seed) = seed {
        options.seed = seed;
    }
    if tamper {
        options = options.tampered();
    }
    let mut staging = out.map(|o| Staging::create(o, false)).transpose()?;
    let report = run_validation(&options)?;
    println!("{report}");
    if let Some(mut staging) = staging.take() {
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        staging.write("validation.csv", &buf)?;
        let mut manifest = Manifest::new("validate");
        manifest.seeds = vec![options.seed];
        let finished = unix_now();
        manifest.timing = Some(Timing {
            started_unix: started,
            finished_unix: finished,
            elapsed_seconds: finished - started,
        });
        staging.commit(manifest)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::oracle(format!("{} oracle checks failed", report.failures())))
    }
}
