//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each and exits non-zero if any failed.
//!
//! Sequential on purpose: criteria 4 and 5 are timing measurements and must
//! not share the machine with the other checks.

use std::collections::HashMap;
use std::fs;
use std::io::BufReader;
use std::panic;
use std::path::Path;
use std::time::{Duration, Instant};

use evclust_cli::bench::{bench_stream, measure_rounds, median, translate, DEFAULT_WARMUP};
use evclust_cli::run;
use evclust_core::io::{read_events_binary, read_events_csv, write_events_binary, write_events_csv};
use evclust_core::oracle::{build_polyforest, component_summaries, qualification_indices, Polyforest};
use evclust_core::synth::{gen_separated_bursts, SeparatedConfig, SynthRng};
use evclust_core::{ClusterParams, ClusterRecord, Event, Freshness, Polarity, SensorGeometry, StreamClusterer};
use tempfile::TempDir;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn invoke(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("evclust").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn invoke_ok(args: &[&str]) -> Result<String, String> {
    let (code, out, err) = invoke(args);
    ensure(code == 0, || format!("`evclust {}` exited {code}: {err}", args.join(" ")))?;
    Ok(out)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn parse_clusters(text: &str) -> Vec<ClusterRecord> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("root_t_us,root_x,root_y,end_t_us,event_count,pixel_count"));
    lines
        .map(|l| {
            let v: Vec<u64> = l.split(',').map(|f| f.parse().unwrap()).collect();
            ClusterRecord {
                root_t: v[0],
                root_x: v[1] as u16,
                root_y: v[2] as u16,
                end_t: v[3],
                event_count: v[4],
                pixel_count: v[5],
            }
        })
        .collect()
}

fn read_any(path: &Path) -> Vec<Event> {
    let file = BufReader::new(fs::File::open(path).unwrap());
    if path.extension().is_some_and(|e| e == "csv") {
        read_events_csv(file).unwrap()
    } else {
        read_events_binary(file).unwrap()
    }
}

fn random_stream(rng: &mut SynthRng, len: usize, side: u16, max_gap: u64) -> Vec<Event> {
    let mut t = rng.below(1_000);
    (0..len)
        .map(|_| {
            t += rng.below(max_gap + 1);
            Event::new(t, rng.below(side.into()) as u16, rng.below(side.into()) as u16, rng.polarity())
        })
        .collect()
}

/// Every pair of events from different oracle components that are within
/// `radius` of each other is more than `delta` apart in time.
fn is_well_separated(forest: &Polyforest, delta: u64, radius: u16) -> bool {
    let ev = &forest.events;
    (0..ev.len()).all(|j| {
        (0..j)
            .rev()
            .take_while(|&i| ev[j].t - ev[i].t <= delta)
            .all(|i| forest.component_of[i] == forest.component_of[j] || ev[i].pixel().chebyshev(ev[j].pixel()) > radius)
    })
}

const GRID: [(u64, u16, u64, u64); 24] = {
    let mut grid = [(0, 0, 0, 0); 24];
    let deltas = [500, 2000];
    let radii = [1, 2];
    let ns = [3, 10];
    let ms = [1, 2, 5];
    let mut i = 0;
    while i < 24 {
        grid[i] = (deltas[i / 12], radii[i / 6 % 2], ns[i / 3 % 2], ms[i % 3]);
        i += 1;
    }
    grid
};

fn lamp_demo() -> Check {
    let dir = TempDir::new().unwrap();
    let lamp = dir.path().join("lamp.evc1");
    let rows_path = dir.path().join("rows.csv");
    invoke_ok(&["synth", "--out", s(&lamp), "--freq", "100", "--periods", "10", "--events-per-burst", "40", "--seed", "2024"])?;

    let started = Instant::now();
    invoke_ok(&[
        "cluster", "--input", s(&lamp), "--polarity", "pos", "--delta-us", "2000", "--radius", "1", "--min-events", "10",
        "--min-pixels", "5", "--output", s(&rows_path),
    ])?;
    let elapsed = started.elapsed();
    let rows = parse_clusters(&fs::read_to_string(&rows_path).unwrap());

    // First positive event of each half period that holds positive events.
    let period = 10_000;
    let mut expected: Vec<Event> = Vec::new();
    for e in read_any(&lamp).into_iter().filter(|e| e.p == Polarity::Positive) {
        if expected.last().is_none_or(|f| f.t / period != e.t / period) {
            expected.push(e);
        }
    }
    ensure(expected.len() == 10, || format!("generator produced {} positive bursts", expected.len()))?;
    ensure(rows.len() == 10, || format!("expected 10 rows, got {}", rows.len()))?;
    for (k, (row, first)) in rows.iter().zip(&expected).enumerate() {
        ensure(row.root_key() == (first.t, first.x, first.y), || {
            format!("burst {k}: root {:?}, first positive event {:?}", row.root_key(), (first.t, first.x, first.y))
        })?;
    }
    ensure(elapsed < Duration::from_secs(1), || format!("cluster took {elapsed:?}"))?;
    Ok(format!("10 rows, roots exact, cluster run {:.1} ms", elapsed.as_secs_f64() * 1e3))
}

fn oracle_equivalence() -> Check {
    let dir = TempDir::new().unwrap();
    let geom = SensorGeometry::new(64, 64).unwrap();
    let mut matched = 0u64;
    let mut events_total = 0usize;
    for i in 0..200u64 {
        let (delta, radius, n, m) = GRID[i as usize % GRID.len()];
        let events = gen_separated_bursts(&SeparatedConfig::new(geom, delta, radius, 5000, 10_000 + i)).unwrap();
        ensure(events.len() <= 5000, || format!("stream {i} has {} events", events.len()))?;
        let forest = build_polyforest(&events, delta, radius).map_err(|e| e.to_string())?;
        ensure(is_well_separated(&forest, delta, radius), || format!("stream {i} is not well separated"))?;
        events_total += events.len();

        let path = dir.path().join(format!("s{i}.evc1"));
        write_events_binary(fs::File::create(&path).unwrap(), &events).unwrap();
        let (delta, radius, n, m) = (delta.to_string(), radius.to_string(), n.to_string(), m.to_string());
        let out = invoke_ok(&[
            "verify", "--input", s(&path), "--width", "64", "--height", "64", "--delta-us", &delta, "--radius", &radius,
            "--min-events", &n, "--min-pixels", &m,
        ])
        .map_err(|e| format!("stream {i}: {e}"))?;
        let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
        matched += doc["matched"].as_u64().unwrap();
    }
    ensure(matched > 0, || "no stream produced a row".into())?;
    Ok(format!("200/200 streams exit 0, {events_total} events, {matched} rows matched"))
}

fn hot_pixel() -> Check {
    let dir = TempDir::new().unwrap();
    let hot = dir.path().join("hot.csv");
    invoke_ok(&[
        "synth", "--signal", "none", "--hot-pixel", "32,32,10000", "--duration-us", "100000", "--width", "64", "--height",
        "64", "--out", s(&hot), "--seed", "3",
    ])?;
    let count = read_any(&hot).len();
    ensure((900..=1100).contains(&count), || format!("hot pixel fired {count} times"))?;

    let base = ["cluster", "--input", s(&hot), "--width", "64", "--height", "64"];
    let strict = parse_clusters(&invoke_ok(&[&base[..], &["--min-pixels", "2"]].concat())?);
    ensure(strict.is_empty(), || format!("m=2 gave {} rows", strict.len()))?;
    let loose = parse_clusters(&invoke_ok(&[&base[..], &["--min-pixels", "1", "--min-events", "3"]].concat())?);
    ensure(!loose.is_empty(), || "m=1 n=3 gave no rows".into())?;
    ensure(loose.iter().all(|r| r.pixel_count == 1), || format!("rows with several pixels: {loose:?}"))?;
    Ok(format!("{count} events; m=2: 0 rows; m=1,n=3: {} rows, all pixel_count=1", loose.len()))
}

struct Timing {
    /// ns/event of small N over large N, per geometry.
    size_ratio: [f64; 2],
    /// ns/event of 1280x720 over 128x128, per N.
    geometry_ratio: [f64; 2],
    medians: Vec<(String, f64)>,
}

fn timing() -> &'static Timing {
    use std::sync::OnceLock;
    static TIMING: OnceLock<Timing> = OnceLock::new();
    TIMING.get_or_init(|| {
        let params = ClusterParams::new(2000, 1, 10, 5).unwrap();
        let small = SensorGeometry::new(128, 128).unwrap();
        let large = SensorGeometry::new(1280, 720).unwrap();
        let mut cells = Vec::new();
        for n in [100_000, 1_000_000] {
            let base = bench_stream(DEFAULT_WARMUP + n, 7);
            for g in [small, large] {
                cells.push((g, translate(&base, g)));
            }
        }
        // cells: (1e5, small), (1e5, large), (1e6, small), (1e6, large)
        let rounds = measure_rounds(&cells, DEFAULT_WARMUP, params, 15);
        let ratio = |a: usize, b: usize| median(rounds.iter().map(|r| r[a].ns_per_event / r[b].ns_per_event).collect());
        Timing {
            size_ratio: [ratio(0, 2), ratio(1, 3)],
            geometry_ratio: [ratio(1, 0), ratio(3, 2)],
            medians: (0..4)
                .map(|c| {
                    let m = rounds[0][c];
                    (
                        format!("{}@{}", m.geometry, m.events),
                        median(rounds.iter().map(|r| r[c].ns_per_event).collect()),
                    )
                })
                .collect(),
        }
    })
}

fn describe(t: &Timing) -> String {
    t.medians
        .iter()
        .map(|(k, v)| format!("{k} {v:.1}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn linear_scaling() -> Check {
    let t = timing();
    for (ratio, geom) in t.size_ratio.iter().zip(["128x128", "1280x720"]) {
        let spread = ratio.max(1.0 / ratio) - 1.0;
        ensure(spread <= 0.30, || format!("{geom}: 1e5/1e6 ns/event ratio {ratio:.3}; {}", describe(t)))?;
    }
    Ok(format!(
        "1e5/1e6 ns/event ratio {:.3} (128x128), {:.3} (1280x720); medians ns/event: {}",
        t.size_ratio[0],
        t.size_ratio[1],
        describe(t)
    ))
}

fn resolution_independence() -> Check {
    let t = timing();
    for (ratio, n) in t.geometry_ratio.iter().zip(["1e5", "1e6"]) {
        ensure(*ratio <= 1.10, || format!("N={n}: 1280x720/128x128 ns/event ratio {ratio:.3}; {}", describe(t)))?;
    }
    Ok(format!(
        "1280x720/128x128 ns/event ratio {:.3} (N=1e5), {:.3} (N=1e6)",
        t.geometry_ratio[0], t.geometry_ratio[1]
    ))
}

fn early_detection() -> Check {
    let geom = SensorGeometry::new(64, 64).unwrap();
    let mut detections = 0;
    for i in 0..50u64 {
        let (delta, radius, n, m) = GRID[i as usize % GRID.len()];
        let params = ClusterParams::new(delta, radius, n, m).unwrap();
        let events = gen_separated_bursts(&SeparatedConfig::new(geom, delta, radius, 3000, 20_000 + i)).unwrap();
        let forest = build_polyforest(&events, delta, radius).map_err(|e| e.to_string())?;
        let summaries = component_summaries(&forest);
        let first = qualification_indices(&forest, n, m);
        let expected: HashMap<(u64, u16, u16), usize> = summaries
            .iter()
            .zip(&first)
            .filter_map(|(s, at)| at.map(|at| ((s.root_t, s.root_x, s.root_y), at)))
            .collect();

        let mut c = StreamClusterer::new(geom, params).unwrap();
        let mut fired = HashMap::new();
        for (idx, e) in events.iter().enumerate() {
            if let Some(det) = c.process_event(e).map_err(|e| e.to_string())?.detection {
                if det.freshness == Freshness::NewRow {
                    fired.insert(det.record.root_key(), idx);
                }
            }
        }
        ensure(fired == expected, || format!("stream {i}: detector {fired:?} vs reference {expected:?}"))?;
        detections += fired.len();
    }
    Ok(format!("{detections} detections over 50 streams, all at the reference index"))
}

fn structural_suite() -> Check {
    let mut rng = SynthRng::new(77);
    let mut rows = 0;
    for i in 0..1000 {
        let len = rng.range_inclusive(0, 400) as usize;
        let side = rng.range_inclusive(2, 24) as u16;
        let max_gap = rng.range_inclusive(0, 300);
        let delta = rng.range_inclusive(1, 600);
        let radius = rng.range_inclusive(0, 3) as u16;
        let events = random_stream(&mut rng, len, side, max_gap);

        let forest = build_polyforest(&events, delta, radius).map_err(|e| format!("stream {i}: {e}"))?;
        forest.check_invariants().map_err(|e| format!("stream {i}: {e}"))?;

        let params = ClusterParams::new(delta, radius, rng.range_inclusive(3, 8), rng.range_inclusive(1, 4)).unwrap();
        let geom = SensorGeometry::new(side.into(), side.into()).unwrap();
        let mut c = StreamClusterer::new(geom, params).unwrap();
        c.process_all(&events).map_err(|e| e.to_string())?;
        for r in c.results() {
            ensure(r.satisfies_invariants(&params), || format!("stream {i}: bad record {r:?}"))?;
        }
        rows += c.results().len();
    }

    let dir = TempDir::new().unwrap();
    for seed in ["1", "99"] {
        let mut outputs = Vec::new();
        for run_no in 0..2 {
            let events = dir.path().join(format!("e{run_no}.evc1"));
            let rows_path = dir.path().join(format!("r{run_no}.csv"));
            let det = dir.path().join(format!("d{run_no}.jsonl"));
            invoke_ok(&["synth", "--out", s(&events), "--seed", seed, "--background-rate", "1", "--hot-pixel", "10,10,5000"])?;
            invoke_ok(&[
                "cluster", "--input", s(&events), "--min-events", "5", "--min-pixels", "2", "--output", s(&rows_path),
                "--detections", s(&det),
            ])?;
            outputs.push([fs::read(&events).unwrap(), fs::read(&rows_path).unwrap(), fs::read(&det).unwrap()]);
        }
        ensure(outputs[0] == outputs[1], || format!("seed {seed}: runs differ"))?;
    }
    Ok(format!("1000 forests valid, {rows} records valid, pipeline byte-identical across runs"))
}

fn io_round_trip() -> Check {
    let dir = TempDir::new().unwrap();
    let mut rng = SynthRng::new(8);
    for i in 0..100 {
        let len = rng.range_inclusive(0, 500) as usize;
        let events = random_stream(&mut rng, len, 40, 200);

        let mut csv = Vec::new();
        write_events_csv(&mut csv, &events).unwrap();
        let from_csv = read_events_csv(csv.as_slice()).map_err(|e| e.to_string())?;
        let mut bin = Vec::new();
        write_events_binary(&mut bin, &from_csv).unwrap();
        let from_bin = read_events_binary(bin.as_slice()).map_err(|e| e.to_string())?;
        let mut csv_again = Vec::new();
        write_events_csv(&mut csv_again, &from_bin).unwrap();
        let mut bin_again = Vec::new();
        write_events_binary(&mut bin_again, &read_events_csv(csv_again.as_slice()).unwrap()).unwrap();
        ensure(from_bin == events && csv_again == csv && bin_again == bin, || format!("stream {i} changed in transit"))?;

        let csv_path = dir.path().join(format!("s{i}.csv"));
        let bin_path = dir.path().join(format!("s{i}.evc1"));
        fs::write(&csv_path, &csv).unwrap();
        fs::write(&bin_path, &bin).unwrap();
        let args = |p: &Path| -> Vec<String> {
            ["cluster", "--input", s(p), "--width", "40", "--height", "40", "--delta-us", "300", "--min-events", "3", "--min-pixels", "2"]
                .map(String::from)
                .to_vec()
        };
        let a = invoke_ok(&args(&csv_path).iter().map(String::as_str).collect::<Vec<_>>())?;
        let b = invoke_ok(&args(&bin_path).iter().map(String::as_str).collect::<Vec<_>>())?;
        ensure(a == b, || format!("stream {i}: cluster output depends on encoding"))?;
    }
    Ok("100 streams round-trip exactly; cluster output identical for csv and evc1".into())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("lamp demo", lamp_demo),
        ("reference equivalence", oracle_equivalence),
        ("hot-pixel suppression", hot_pixel),
        ("linear scaling", linear_scaling),
        ("resolution independence", resolution_independence),
        ("early detection", early_detection),
        ("structural properties", structural_suite),
        ("i/o round trip", io_round_trip),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {} PASS {name} [{secs:.2}s]: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL {name} [{secs:.2}s]: {why}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
