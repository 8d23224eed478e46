use std::collections::BTreeMap;
use std::io::{BufWriter, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use schoolsense::analytics::{
    availability_report, collect_activity, detect_events, detect_outliers, site_comfort, weekend_performance,
    Acceptability, ComfortConfig, OutlierConfig, PerformanceConfig, Series, EVENT_SPAN_MS, EVENT_THRESHOLD,
};
use schoolsense::engine::{Engine, EngineConfig, EngineWorker};
use schoolsense::fleetsim::{bench, run_pipeline, BenchConfig, Fleet, FleetConfig, PipelineOptions};
use schoolsense::ingest::{
    engine_queue, fetch_jsonl, format_bus_message, poll_cycle, BusMapper, LineIngestor, LineListener, PollSource,
    PollSourceConfig,
};
use schoolsense::model::{format_time, parse_time, Granularity, ResourceId, ResourceKind, Site, Topology, MS_PER_HOUR};
use schoolsense::query::http::ApiServer;
use schoolsense::query::{parse_fields, project, Dispatcher, Directory, Field, KeyTable, QueryRequest, QueryService};
use schoolsense::store::{ReplaySpeed, Store};

mod report;

use report::{write_atomic, write_json};

#[derive(Parser)]
#[command(name = "schoolsense", version, about = "School-building sensing platform")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Topology TOML (sites, rooms, resources).
    #[arg(long, env = "SCHOOLSENSE_TOPOLOGY")]
    topology: Option<PathBuf>,
    /// Store root directory.
    #[arg(long, env = "SCHOOLSENSE_STORE", default_value = "schoolsense-store")]
    store: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Accept bus lines (`device/sensor<TAB>value@epoch_ms`) into the engine and store.
    Ingest(IngestArgs),
    /// Poll a vendor export file into the engine and store.
    Poll(PollArgs),
    /// Serve the Data API over an existing store.
    Serve(ServeArgs),
    /// Historical query against the store.
    Query(QueryArgs),
    #[command(subcommand)]
    Analyze(Analyze),
    /// Generate a synthetic fleet stream into a store directory or a TCP ingest address.
    Simulate(SimulateArgs),
    /// Paced load against a single instrumented engine worker.
    Bench(BenchArgs),
    /// Re-deliver stored raw readings as bus lines.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    common: Common,
    /// TCP address to accept bus lines on.
    #[arg(long, conflicts_with = "input")]
    listen: Option<String>,
    /// Read bus lines from a file (`-` for stdin) instead of a socket.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Also serve the Data API (historical and real-time) on this address.
    #[arg(long, requires = "keys")]
    http: Option<String>,
    #[arg(long)]
    keys: Option<PathBuf>,
    /// Register unknown device/sensor pairs on first sight.
    #[arg(long)]
    auto_register: bool,
    /// Record per-event submit latency and print it on exit.
    #[arg(long)]
    instrument: bool,
    /// Stop listening after this many seconds (default: run until killed).
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Args)]
struct PollArgs {
    #[command(flatten)]
    common: Common,
    /// Poll source TOML: source_id, path, poll_period, cursor.
    #[arg(long)]
    source: PathBuf,
    /// Override the configured period, seconds.
    #[arg(long)]
    period: Option<u64>,
    /// Stop after this many cycles (default: forever).
    #[arg(long)]
    cycles: Option<u64>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    http: String,
    #[arg(long)]
    keys: PathBuf,
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    resource: String,
    #[arg(long, default_value = "hour")]
    granularity: Granularity,
    /// Epoch ms, RFC 3339 or YYYY-MM-DD.
    #[arg(long)]
    from: String,
    #[arg(long)]
    to: String,
    /// Comma-separated subset of avg,min,max,count,energy.
    #[arg(long, default_value = "avg,min,max,count,energy")]
    fields: String,
    #[arg(long, default_value = "csv", value_parser = ["csv", "json"])]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct Period {
    #[command(flatten)]
    common: Common,
    /// First day (site-local), YYYY-MM-DD.
    #[arg(long)]
    from: NaiveDate,
    /// Day after the last one, YYYY-MM-DD.
    #[arg(long)]
    to: NaiveDate,
    /// Report directory (default: print the main table to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Analyse raw readings as stored, without replacing outliers first.
    #[arg(long)]
    raw: bool,
}

#[derive(Subcommand)]
enum Analyze {
    /// Trailing-window 3·IQR outlier flags per resource.
    Outliers {
        #[command(flatten)]
        period: Period,
        /// One resource (default: every resource in the topology).
        #[arg(long)]
        resource: Option<String>,
        #[arg(long, default_value_t = 24.0)]
        window_hours: f64,
    },
    /// Sensor availability, outages and outlier rates per site and kind.
    Availability {
        #[command(flatten)]
        period: Period,
        #[arg(long, default_value_t = 24.0)]
        window_hours: f64,
    },
    /// Adaptive thermal comfort per room and site during school hours.
    Comfort {
        #[command(flatten)]
        period: Period,
        /// One site (default: all).
        #[arg(long)]
        site: Option<String>,
        /// Outdoor temperature resource (default: the site's weather station).
        #[arg(long)]
        outdoor: Option<String>,
        /// Wind speed resource (default: the site's weather station, if any).
        #[arg(long)]
        wind: Option<String>,
        #[arg(long)]
        no_wind: bool,
        /// Acceptability class, percent.
        #[arg(long, default_value = "80", value_parser = ["80", "90"])]
        acceptability: String,
    },
    /// Weekend temperature rise per room, ranked.
    Performance {
        #[command(flatten)]
        period: Period,
        #[arg(long)]
        site: Option<String>,
        #[arg(long)]
        outdoor: Option<String>,
    },
    /// Fast temperature rises and drops (window openings, heating).
    Events {
        #[command(flatten)]
        period: Period,
        #[arg(long)]
        site: Option<String>,
        #[arg(long)]
        resource: Option<String>,
        #[arg(long, default_value_t = EVENT_THRESHOLD)]
        threshold: f64,
        /// Minutes.
        #[arg(long, default_value_t = (EVENT_SPAN_MS / 60_000) as u32)]
        span: u32,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// Fleet TOML; defaults to the 850-sensor fleet over one day.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    days: Option<u32>,
    /// `host:port` of a running `ingest --listen`, or a directory for a new store.
    #[arg(long)]
    sink: String,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 500.0)]
    rate: f64,
    /// Seconds.
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// JSON report path.
    #[arg(long, default_value = "bench-report.json")]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    from: String,
    #[arg(long)]
    to: String,
    /// Multiplier on recorded time (`10`, `10x`) or `max`.
    #[arg(long, default_value = "max")]
    speed: ReplaySpeed,
    /// `host:port`, a file path, or `-` for stdout.
    #[arg(long, default_value = "-")]
    sink: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest(a) => ingest(a),
        Command::Poll(a) => poll(a),
        Command::Serve(a) => serve(a),
        Command::Query(a) => query(a),
        Command::Analyze(a) => analyze(a),
        Command::Simulate(a) => simulate(a),
        Command::Bench(a) => run_bench(a),
        Command::Replay(a) => replay(a),
    }
}

fn topology(c: &Common) -> Result<Topology> {
    let path = c.topology.as_ref().ok_or_else(|| anyhow!("topology required"))?;
    Ok(Topology::load(path)?)
}

fn open_store(c: &Common, topo: &Topology) -> Result<(Arc<Directory>, Arc<Store<f64>>)> {
    let directory = Arc::new(Directory::from_topology(topo)?);
    let store = Arc::new(Store::open(&c.store, directory.clone())?);
    Ok((directory, store))
}

fn time_arg(s: &str) -> Result<i64> {
    parse_time(s).with_context(|| format!("bad time {s:?}"))
}

fn resource_id(s: &str) -> Result<ResourceId> {
    ResourceId::new(s).map_err(|e| anyhow!("{e}"))
}

fn ingest(a: IngestArgs) -> Result<()> {
    if a.listen.is_none() && a.input.is_none() {
        bail!("one of --listen or --input required");
    }
    let topo = topology(&a.common)?;
    let (directory, store) = open_store(&a.common, &topo)?;
    let dispatcher = Arc::new(Dispatcher::new());
    let engine = Engine::new(EngineConfig { instrument: a.instrument, ..Default::default() }, store.clone())
        .with_dispatcher(dispatcher.clone());
    let (forwarder, rx) = engine_queue(4096);
    let worker = EngineWorker::spawn(engine, rx);
    let mapper = Arc::new(BusMapper::new(directory).with_auto_register(a.auto_register));
    let api = match (&a.http, &a.keys) {
        (Some(addr), Some(keys)) => {
            let service = Arc::new(QueryService::new(store.clone(), dispatcher));
            let server = ApiServer::start(addr, service, Arc::new(KeyTable::load(keys)?))?;
            eprintln!("data api on http://{}", server.addr());
            Some(server)
        }
        _ => None,
    };

    let counters = if let Some(path) = &a.input {
        let ingestor = LineIngestor::new(mapper, forwarder).with_quarantine(store.clone()).with_blocking(true);
        if path.as_os_str() == "-" {
            ingestor.consume(std::io::stdin().lock())?;
        } else {
            let f = std::fs::File::open(path).with_context(|| format!("{}", path.display()))?;
            ingestor.consume(f)?;
        }
        ingestor.counters()
    } else {
        let ingestor = Arc::new(LineIngestor::new(mapper, forwarder).with_quarantine(store.clone()));
        let listener = LineListener::bind(a.listen.as_deref().unwrap(), ingestor.clone())?;
        eprintln!("listening on {}", listener.local_addr());
        let deadline = a.duration.map(|d| Instant::now() + Duration::from_secs_f64(d));
        // buffered raw data is persisted every few seconds while listening
        while deadline.map_or(true, |d| Instant::now() < d) {
            std::thread::sleep(Duration::from_millis(500).min(
                deadline.map_or(Duration::MAX, |d| d.saturating_duration_since(Instant::now())),
            ));
            store.flush()?;
        }
        listener.stop();
        let c = ingestor.counters();
        drop(ingestor);
        c
    };
    let (engine, report) = worker.join();
    if let Some(api) = api {
        api.shutdown();
    }
    println!(
        "accepted {} malformed {} unknown {} dropped {} processed {} rejected {}",
        counters.accepted,
        counters.malformed,
        counters.unknown,
        counters.dropped,
        report.processed,
        report.errors + report.too_old
    );
    if a.instrument {
        print_latency(&engine.latency_report());
    }
    Ok(())
}

fn print_latency(rows: &[schoolsense::engine::LatencyStats]) {
    println!("{:<8} {:>10} {:>10} {:>10} {:>10} {:>10}", "type", "count", "mean_ms", "median_ms", "p99_ms", "max_ms");
    for l in rows {
        println!(
            "{:<8} {:>10} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            l.aggregation_type.to_string(),
            l.count,
            l.mean_ms,
            l.median_ms,
            l.p99_ms,
            l.max_ms
        );
    }
}

fn poll(a: PollArgs) -> Result<()> {
    let topo = topology(&a.common)?;
    let (directory, store) = open_store(&a.common, &topo)?;
    let cfg = PollSourceConfig::load(&a.source)?;
    let mut src = PollSource::new(cfg.source_id.clone(), a.period.unwrap_or(cfg.poll_period), cfg.cursor)?;
    let mapper = BusMapper::new(directory);
    let engine = Engine::new(EngineConfig::default(), store.clone());
    let (forwarder, rx) = engine_queue(4096);
    let worker = EngineWorker::spawn(engine, rx);
    let mut cycle = 0u64;
    loop {
        let started = Instant::now();
        match poll_cycle::<f64, _, _>(&mut src, &mapper, |cursor| fetch_jsonl(&cfg.path, cursor)) {
            Ok((readings, rejected)) => {
                let n = readings.len();
                for r in readings {
                    forwarder.forward_blocking(r).map_err(|_| anyhow!("engine unavailable"))?;
                }
                for (rec, e) in &rejected {
                    log::warn!("rejected {}/{}: {e}", rec.device, rec.sensor);
                    store.quarantine(&rec.device, &rec.sensor, rec.value, rec.ts)?;
                }
                println!("cycle {cycle}: {n} readings, {} rejected, cursor {}", rejected.len(), src.cursor);
            }
            Err(e) => eprintln!("cycle {cycle}: {e}"),
        }
        cycle += 1;
        if a.cycles.is_some_and(|c| cycle >= c) {
            break;
        }
        let period = Duration::from_secs(src.poll_period);
        std::thread::sleep(period.saturating_sub(started.elapsed()));
    }
    drop(forwarder);
    worker.join();
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let topo = topology(&a.common)?;
    let (_, store) = open_store(&a.common, &topo)?;
    let service = Arc::new(QueryService::new(store, Arc::new(Dispatcher::new())));
    let server = ApiServer::start(&a.http, service, Arc::new(KeyTable::load(&a.keys)?))?;
    eprintln!("data api on http://{}", server.addr());
    match a.duration {
        Some(d) => std::thread::sleep(Duration::from_secs_f64(d)),
        None => loop {
            std::thread::park();
        },
    }
    server.shutdown();
    Ok(())
}

fn query(a: QueryArgs) -> Result<()> {
    let topo = topology(&a.common)?;
    let (_, store) = open_store(&a.common, &topo)?;
    let service = QueryService::new(store, Arc::new(Dispatcher::new()));
    let fields: Vec<Field> = parse_fields(&a.fields).map_err(|e| anyhow!(e))?;
    let mut q = QueryRequest::new(resource_id(&a.resource)?, a.granularity, time_arg(&a.from)?, time_arg(&a.to)?);
    q.fields = fields.clone();
    let resp = service.historical(&q)?;
    let text = if a.format == "json" {
        let rows: Vec<serde_json::Value> = resp
            .summaries
            .iter()
            .map(|s| {
                let mut m = serde_json::Map::new();
                m.insert("start".into(), s.interval.start.into());
                for (k, v) in project(s, &fields) {
                    m.insert(k.into(), v.map_or(serde_json::Value::Null, Into::into));
                }
                serde_json::Value::Object(m)
            })
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({
            "resource_id": q.resource_id,
            "granularity": q.granularity,
            "latency_ms": resp.latency_ms,
            "summaries": rows,
        }))? + "\n"
    } else {
        let mut out = String::from("start,time");
        for f in &fields {
            out.push(',');
            out.push_str(f.name());
        }
        out.push('\n');
        for s in &resp.summaries {
            out.push_str(&format!("{},{}", s.interval.start, format_time(s.interval.start)));
            for (_, v) in project(s, &fields) {
                out.push(',');
                if let Some(v) = v {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    };
    emit(a.out.as_deref(), &text)?;
    eprintln!("{} summaries in {:.3} ms", resp.summaries.len(), resp.latency_ms);
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => match std::io::stdout().write_all(text.as_bytes()) {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            r => Ok(r?),
        },
    }
}

/// Raw readings of `id` over `[t0, t1)`.
fn raw_series(store: &Store<f64>, topo: &Topology, id: &ResourceId, t0: i64, t1: i64) -> Result<Series<f64>> {
    let unit = topo
        .resources()
        .into_iter()
        .find(|d| &d.resource_id == id)
        .map(|d| d.units)
        .unwrap_or_default();
    Ok(Series::from_readings(id.clone(), unit, &store.get_raw(id, t0, t1)?))
}

/// Raw readings with outliers replaced, unless `raw`.
fn clean_series(store: &Store<f64>, topo: &Topology, id: &ResourceId, t0: i64, t1: i64, raw: bool) -> Result<Series<f64>> {
    let s = raw_series(store, topo, id, t0, t1)?;
    if raw || s.is_empty() {
        return Ok(s);
    }
    Ok(detect_outliers(&s, OutlierConfig::default())?.0)
}

/// Indoor temperature series per room of `site`; rooms without data are skipped.
fn room_temperatures(
    store: &Store<f64>,
    topo: &Topology,
    site: &Site,
    t0: i64,
    t1: i64,
    raw: bool,
) -> Result<BTreeMap<String, Series<f64>>> {
    let mut out = BTreeMap::new();
    for room in &site.rooms {
        if let Some(d) = room.resources.iter().find(|d| d.sensor == "temperature") {
            let s = clean_series(store, topo, &d.resource_id, t0, t1, raw)?;
            if !s.is_empty() {
                out.insert(room.id.clone(), s);
            }
        }
    }
    Ok(out)
}

/// The site's weather-station resource for `sensor`, or the explicit override.
fn weather_resource(site: &Site, sensor: &str, explicit: Option<&str>) -> Result<Option<ResourceId>> {
    if let Some(e) = explicit {
        return Ok(Some(resource_id(e)?));
    }
    Ok(site
        .resources
        .iter()
        .find(|d| d.kind == ResourceKind::Weather && d.sensor == sensor)
        .map(|d| d.resource_id.clone()))
}

fn sites<'a>(topo: &'a Topology, only: Option<&str>) -> Result<Vec<&'a Site>> {
    match only {
        Some(id) => Ok(vec![topo.site(id).ok_or_else(|| anyhow!("unknown site {id}"))?]),
        None => Ok(topo.sites.iter().collect()),
    }
}

fn window_ms(hours: f64) -> Result<i64> {
    if !(hours > 0.0 && hours.is_finite()) {
        bail!("window must be positive");
    }
    Ok((hours * MS_PER_HOUR as f64).round() as i64)
}

fn analyze(a: Analyze) -> Result<()> {
    match a {
        Analyze::Outliers { period, resource, window_hours } => {
            let topo = topology(&period.common)?;
            let (_, store) = open_store(&period.common, &topo)?;
            let cfg = OutlierConfig::with_window(window_ms(window_hours)?);
            let ids: Vec<ResourceId> = match resource {
                Some(r) => vec![resource_id(&r)?],
                None => topo.resources().into_iter().map(|d| d.resource_id).collect(),
            };
            let t0 = schoolsense::model::date_start_utc(period.from);
            let t1 = schoolsense::model::date_start_utc(period.to);
            let mut csv = String::from("resource_id,ts,time,original,replacement,fence\n");
            let mut all = Vec::new();
            for id in &ids {
                let s = raw_series(&store, &topo, id, t0, t1)?;
                if s.is_empty() {
                    continue;
                }
                let (_, flags) = detect_outliers(&s, cfg)?;
                for f in &flags {
                    csv.push_str(&format!(
                        "{},{},{},{},{},{:?}\n",
                        id,
                        f.ts,
                        format_time(f.ts),
                        f.original,
                        f.replacement,
                        f.fence
                    ));
                }
                all.push((id.clone(), flags));
            }
            match &period.out {
                Some(dir) => {
                    write_atomic(&dir.join("outliers.csv"), csv.as_bytes())?;
                    write_json(&dir.join("outliers.json"), &all)?;
                }
                None => emit(None, &csv)?,
            }
        }
        Analyze::Availability { period, window_hours } => {
            let topo = topology(&period.common)?;
            let (_, store) = open_store(&period.common, &topo)?;
            let cfg = OutlierConfig::with_window(window_ms(window_hours)?);
            let activity = collect_activity(&store, &topo, period.from, period.to, cfg)?;
            let rep = availability_report(&topo, &activity, period.from, period.to)?;
            match &period.out {
                Some(dir) => {
                    write_atomic(&dir.join("sites.csv"), rep.sites_csv().as_bytes())?;
                    write_atomic(&dir.join("kinds.csv"), rep.kinds_csv().as_bytes())?;
                    write_atomic(&dir.join("matrix.csv"), rep.matrix_csv().as_bytes())?;
                    write_json(&dir.join("availability.json"), &rep)?;
                }
                None => emit(None, &rep.sites_csv())?,
            }
        }
        Analyze::Comfort { period, site, outdoor, wind, no_wind, acceptability } => {
            let topo = topology(&period.common)?;
            let (_, store) = open_store(&period.common, &topo)?;
            let cfg = ComfortConfig {
                acceptability: if acceptability == "90" { Acceptability::Ninety } else { Acceptability::Eighty },
            };
            let mut csv = String::new();
            let mut all = Vec::new();
            for s in sites(&topo, site.as_deref())? {
                let t0 = s.local_day_range(period.from).0;
                let t1 = s.local_day_range(period.to).0;
                let Some(out_id) = weather_resource(s, "temperature", outdoor.as_deref())? else {
                    log::warn!("site {} has no outdoor temperature resource; skipped", s.id);
                    continue;
                };
                // a week of history for the prevailing mean
                let out_series = clean_series(&store, &topo, &out_id, t0 - 8 * 24 * MS_PER_HOUR, t1, period.raw)?;
                let wind_series = match (no_wind, weather_resource(s, "wind_speed", wind.as_deref())?) {
                    (false, Some(w)) => Some(clean_series(&store, &topo, &w, t0, t1, period.raw)?),
                    _ => None,
                };
                let rooms = room_temperatures(&store, &topo, s, t0, t1, period.raw)?;
                if rooms.is_empty() || out_series.is_empty() {
                    log::warn!("site {} has no data in the period; skipped", s.id);
                    continue;
                }
                let rep = site_comfort(s, &rooms, &out_series, wind_series.as_ref(), period.from, period.to, cfg)?;
                let part = rep.to_csv();
                if csv.is_empty() {
                    csv.push_str(&part);
                } else {
                    csv.extend(part.lines().skip(1).map(|l| format!("{l}\n")));
                }
                all.push(rep);
            }
            if all.is_empty() {
                bail!("no site with indoor and outdoor temperature data in the period");
            }
            match &period.out {
                Some(dir) => {
                    write_atomic(&dir.join("comfort.csv"), csv.as_bytes())?;
                    write_json(&dir.join("comfort.json"), &all)?;
                }
                None => emit(None, &csv)?,
            }
        }
        Analyze::Performance { period, site, outdoor } => {
            let topo = topology(&period.common)?;
            let (_, store) = open_store(&period.common, &topo)?;
            let mut csv = String::from("site,rank,room_id,mean_rise,days,flagged\n");
            let mut all = BTreeMap::new();
            for s in sites(&topo, site.as_deref())? {
                let t0 = s.local_day_range(period.from).0;
                let t1 = s.local_day_range(period.to).0;
                let rooms = room_temperatures(&store, &topo, s, t0, t1, period.raw)?;
                if rooms.is_empty() {
                    continue;
                }
                let weather = match weather_resource(s, "temperature", outdoor.as_deref())? {
                    Some(id) => Some(clean_series(&store, &topo, &id, t0, t1, period.raw)?).filter(|w| !w.is_empty()),
                    None => None,
                };
                let rep = match weekend_performance(&rooms, weather.as_ref(), s, period.from, period.to, PerformanceConfig::default()) {
                    Ok(r) => r,
                    Err(schoolsense::analytics::AnalyticsError::NoWeekendData) => continue,
                    Err(e) => return Err(e.into()),
                };
                for (i, r) in rep.ranking.iter().enumerate() {
                    csv.push_str(&format!("{},{},{},{:.3},{},{}\n", s.id, i + 1, r.room_id, r.mean_rise, r.days, r.flagged));
                }
                all.insert(s.id.clone(), rep);
            }
            if all.is_empty() {
                bail!("no weekend indoor temperature data in the period");
            }
            match &period.out {
                Some(dir) => {
                    write_atomic(&dir.join("performance.csv"), csv.as_bytes())?;
                    write_json(&dir.join("performance.json"), &all)?;
                }
                None => emit(None, &csv)?,
            }
        }
        Analyze::Events { period, site, resource, threshold, span } => {
            let topo = topology(&period.common)?;
            let (_, store) = open_store(&period.common, &topo)?;
            let t0 = schoolsense::model::date_start_utc(period.from);
            let t1 = schoolsense::model::date_start_utc(period.to);
            let ids: Vec<ResourceId> = match resource {
                Some(r) => vec![resource_id(&r)?],
                None => sites(&topo, site.as_deref())?
                    .iter()
                    .flat_map(|s| s.rooms.iter())
                    .filter_map(|r| r.resources.iter().find(|d| d.sensor == "temperature"))
                    .map(|d| d.resource_id.clone())
                    .collect(),
            };
            let mut csv = String::from("resource_id,time,start,end,direction,magnitude\n");
            let mut all = Vec::new();
            for id in ids {
                let mut s = raw_series(&store, &topo, &id, t0, t1)?;
                if !period.raw && !s.is_empty() {
                    // a replacement value would itself read as a step; drop flagged points instead
                    let (_, flags) = detect_outliers(&s, OutlierConfig::default())?;
                    let flagged: std::collections::HashSet<usize> = flags.iter().map(|f| f.index).collect();
                    s.points = s.points.into_iter().enumerate().filter(|(i, _)| !flagged.contains(i)).map(|(_, p)| p).collect();
                }
                if s.is_empty() {
                    continue;
                }
                let events = detect_events(&s, threshold, span as i64 * 60_000)?;
                for e in &events {
                    csv.push_str(&format!(
                        "{},{},{},{},{:?},{:.3}\n",
                        id,
                        format_time(e.time),
                        format_time(e.start),
                        format_time(e.end),
                        e.direction,
                        e.magnitude
                    ));
                }
                all.push((id, events));
            }
            match &period.out {
                Some(dir) => {
                    write_atomic(&dir.join("events.csv"), csv.as_bytes())?;
                    write_json(&dir.join("events.json"), &all)?;
                }
                None => emit(None, &csv)?,
            }
        }
    }
    Ok(())
}

/// `host:port` rather than a path.
fn is_addr(sink: &str) -> bool {
    sink.contains(':') && !sink.contains('/') && !sink.contains('\\')
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => FleetConfig::load(p)?,
        None => FleetConfig { days: 1, ..FleetConfig::full_fleet() },
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.days {
        cfg.days = d;
    }
    let fleet = Fleet::generate(cfg)?;
    if is_addr(&a.sink) {
        let mut w = BufWriter::new(TcpStream::connect(&a.sink).with_context(|| format!("connect {}", a.sink))?);
        let mut n = 0u64;
        for m in fleet.stream() {
            writeln!(w, "{}", m.to_line())?;
            n += 1;
        }
        w.flush()?;
        println!("sent {n} messages to {}", a.sink);
        return Ok(());
    }
    let dir = PathBuf::from(&a.sink);
    std::fs::create_dir_all(&dir)?;
    write_atomic(&dir.join("topology.toml"), fleet.topology.to_toml_string().as_bytes())?;
    let rep = run_pipeline(&fleet, PipelineOptions::new(&dir))?;
    write_json(&dir.join("ground_truth.json"), &rep.ground_truth)?;
    println!(
        "emitted {} accepted {} processed {} stored {} injected outliers {} in {:.1} s",
        rep.emitted,
        rep.ingest.accepted,
        rep.processed,
        rep.stored,
        rep.ground_truth.outliers.len(),
        rep.wall_s
    );
    println!("store {} (topology.toml, ground_truth.json)", dir.display());
    Ok(())
}

fn run_bench(a: BenchArgs) -> Result<()> {
    let fleet = FleetConfig { days: 1, ..FleetConfig::full_fleet() };
    let rep = bench(BenchConfig { rate: a.rate, duration: a.duration, seed: a.seed, fleet, ..Default::default() })?;
    write_json(&a.out, &rep)?;
    println!(
        "sent {} processed {} drops {} backpressure {} throughput {:.1} msg/s capacity {:.0} msg/s",
        rep.sent, rep.processed, rep.drops, rep.backpressure_events, rep.throughput, rep.capacity
    );
    print_latency(&rep.latency);
    println!("report {}", a.out.display());
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<()> {
    let directory = match &a.common.topology {
        Some(p) => Directory::from_topology(&Topology::load(p)?)?,
        None => Directory::new(),
    };
    let store = Store::<f64>::open(&a.common.store, Arc::new(directory))?;
    let (t0, t1) = (time_arg(&a.from)?, time_arg(&a.to)?);
    let mut w: Box<dyn Write> = if a.sink == "-" {
        Box::new(BufWriter::new(std::io::stdout().lock()))
    } else if is_addr(&a.sink) {
        Box::new(BufWriter::new(TcpStream::connect(&a.sink).with_context(|| format!("connect {}", a.sink))?))
    } else {
        Box::new(BufWriter::new(std::fs::File::create(&a.sink)?))
    };
    let rep = store.replay(t0, t1, a.speed, &mut |r| writeln!(w, "{}", format_bus_message(r, true).to_line()))?;
    w.flush()?;
    eprintln!("replayed {} readings in {:.3} s", rep.count, rep.wall.as_secs_f64());
    Ok(())
}
