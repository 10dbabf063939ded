//! Long-format export of a `run` or `sweep` directory.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use d2dsched::trace::{read_records, read_trace, RunSummary};
use walkdir::WalkDir;

use crate::commands::{SUMMARY_FILE, TRACE_DIR};
use crate::output::{safe_name, Manifest, Staging};
use crate::svg::{line_chart, Series};
use crate::Failure;

pub const LONG_SCHEMA_VERSION: u32 = 1;
pub const LONG_FILE: &str = "long.csv";

/// (group, scheduler) -> t -> (sum, count) of the regret curve.
type RegretCurves = BTreeMap<(String, String), BTreeMap<usize, (f64, usize)>>;

struct TraceFile {
    /// Sweep subdirectory (`key=value`), empty for a plain run.
    group: String,
    dir_name: String,
    seed: u64,
    path: PathBuf,
}

fn find_traces(input: &Path) -> Result<Vec<TraceFile>, Failure> {
    let mut found = Vec::new();
    for entry in WalkDir::new(input).sort_by_file_name() {
        let entry = entry.map_err(|e| Failure::runtime(e.to_string()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(input).unwrap_or(entry.path());
        let parts: Vec<String> = rel.iter().map(|p| p.to_string_lossy().into_owned()).collect();
        let n = parts.len();
        if n < 3 || parts[n - 3] != TRACE_DIR {
            continue;
        }
        let Some(seed) = parts[n - 1]
            .strip_prefix("seed-")
            .and_then(|s| s.strip_suffix(".csv"))
            .and_then(|s| s.parse().ok())
        else {
            continue;
        };
        found.push(TraceFile {
            group: parts[..n - 3].join("/"),
            dir_name: parts[n - 2].clone(),
            seed,
            path: entry.path().to_path_buf(),
        });
    }
    Ok(found)
}

fn invalid_file(path: &Path) -> impl Fn(d2dsched::Error) -> Failure + '_ {
    move |e| Failure::invalid(format!("{}: {e}", path.display()))
}

fn read_summaries(path: &Path) -> Result<Vec<RunSummary>, Failure> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = fs::File::open(path)?;
    read_records(BufReader::new(file), "summary").map_err(invalid_file(path))
}

/// `key=value` of a sweep group, if it has that shape.
fn group_x(group: &str) -> (String, String) {
    match group.rsplit('/').next().and_then(|g| g.split_once('=')) {
        Some((k, v)) => (k.to_string(), v.to_string()),
        None => (String::new(), String::new()),
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

pub fn export(input: &Path, out: &Path, svg: bool, force: bool) -> Result<(), Failure> {
    if !input.is_dir() {
        return Err(Failure::invalid(format!("{} is not a directory", input.display())));
    }
    let traces = find_traces(input)?;
    if traces.is_empty() {
        return Err(Failure::invalid(format!("no traces found under {}", input.display())));
    }

    let mut summaries: BTreeMap<String, Vec<RunSummary>> = BTreeMap::new();
    for t in &traces {
        if !summaries.contains_key(&t.group) {
            let path = input.join(&t.group).join(SUMMARY_FILE);
            summaries.insert(t.group.clone(), read_summaries(&path)?);
        }
    }
    let label = |group: &str, dir: &str| -> String {
        summaries[group]
            .iter()
            .find(|s| safe_name(&s.scheduler) == dir)
            .map(|s| s.scheduler.clone())
            .unwrap_or_else(|| dir.to_string())
    };

    let mut w = csv::Writer::from_writer(Vec::new());
    let broken = |e: csv::Error| Failure::runtime(format!("writing {LONG_FILE}: {e}"));
    w.write_record(["group", "scheduler", "seed", "x_name", "x", "metric", "value"])
        .map_err(broken)?;

    for (group, list) in &summaries {
        let (x_name, x) = group_x(group);
        for s in list {
            let seed = s.seed.to_string();
            let mut metrics = vec![("r_avg", Some(s.r_avg)), ("mean_throughput", Some(s.mean_throughput))];
            metrics.push(("regret_optimal", s.regret_optimal));
            metrics.push(("regret_quasi", s.regret_quasi));
            for (m, v) in metrics {
                if let Some(v) = v {
                    w.write_record([group, &s.scheduler, &seed, &x_name, &x, m, &num(v)])
                        .map_err(broken)?;
                }
            }
        }
    }

    let mut regret = RegretCurves::new();
    for t in &traces {
        let scheduler = label(&t.group, &t.dir_name);
        let file = fs::File::open(&t.path)?;
        let rows = read_trace(BufReader::new(file)).map_err(invalid_file(&t.path))?;
        let seed = t.seed.to_string();
        let curve = regret.entry((t.group.clone(), scheduler.clone())).or_default();
        for r in rows {
            let tt = r.t.to_string();
            let metrics = [
                ("sum_se", Some(r.sum_se)),
                ("sum_throughput", Some(r.sum_throughput)),
                ("regret_optimal", r.regret_optimal),
                ("regret_quasi", r.regret_quasi),
            ];
            for (m, v) in metrics {
                if let Some(v) = v {
                    w.write_record([&t.group, &scheduler, &seed, "t", &tt, m, &num(v)])
                        .map_err(broken)?;
                }
            }
            if let Some(v) = r.regret_optimal.or(r.regret_quasi) {
                let e = curve.entry(r.t).or_insert((0.0, 0));
                e.0 += v;
                e.1 += 1;
            }
        }
    }
    let body = w.into_inner().map_err(|e| Failure::runtime(e.to_string()))?;
    let mut long = format!("# long-schema: {LONG_SCHEMA_VERSION}\n").into_bytes();
    long.extend(body);

    let mut staging = Staging::create(out, force)?;
    staging.write(LONG_FILE, &long)?;
    if svg {
        staging.write("ravg.svg", ravg_chart(&summaries).as_bytes())?;
        staging.write("regret.svg", regret_chart(&regret).as_bytes())?;
    }
    let mut manifest = Manifest::new("export");
    let mut seeds: Vec<u64> = traces.iter().map(|t| t.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    manifest.seeds = seeds;
    staging.commit(manifest)?;
    println!("wrote {}", out.display());
    Ok(())
}

/// Mean R^Avg per scheduler against the numeric sweep value (the group
/// index when the values are not numeric).
fn ravg_chart(summaries: &BTreeMap<String, Vec<RunSummary>>) -> String {
    let mut x_name = String::new();
    let mut by_scheduler: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for (i, (group, list)) in summaries.iter().enumerate() {
        let (k, v) = group_x(group);
        if !k.is_empty() {
            x_name = k;
        }
        let x = v.parse::<f64>().unwrap_or(i as f64);
        let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        for s in list {
            let e = acc.entry(&s.scheduler).or_insert((0.0, 0));
            e.0 += s.r_avg;
            e.1 += 1;
        }
        for (name, (sum, n)) in acc {
            by_scheduler.entry(name.to_string()).or_default().push((x, sum / n as f64));
        }
    }
    let series: Vec<Series> = by_scheduler
        .into_iter()
        .map(|(label, mut points)| {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { label, points }
        })
        .collect();
    let x_label = if x_name.is_empty() { "run".to_string() } else { x_name };
    line_chart("Average sum spectral efficiency", &x_label, "R avg (bit/s/Hz)", &series)
}

fn regret_chart(regret: &RegretCurves) -> String {
    let series: Vec<Series> = regret
        .iter()
        .filter(|(_, curve)| !curve.is_empty())
        .map(|((group, scheduler), curve)| Series {
            label: if group.is_empty() {
                scheduler.clone()
            } else {
                format!("{group} {scheduler}")
            },
            points: curve.iter().map(|(&t, &(s, n))| (t as f64, s / n as f64)).collect(),
        })
        .collect();
    line_chart("Cumulative regret", "t", "regret", &series)
}
