mod common;

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;
use std::time::Duration;

use common::*;
use schoolsense::engine::{Engine, EngineConfig, EngineWorker};
use schoolsense::ingest::{engine_queue, BusMapper, LineIngestor, LineListener};
use schoolsense::model::{AggregationType, Granularity};
use schoolsense::query::http::ApiServer;
use schoolsense::query::{Dispatcher, KeyTable, QueryRequest, QueryService, Update};
use schoolsense::store::{ReplaySpeed, Store};

const T0: i64 = 1_506_816_000_000;

fn get(addr: std::net::SocketAddr, path: &str, key: Option<&str>) -> (u16, String) {
    let mut s = TcpStream::connect(addr).unwrap();
    let auth = key.map(|k| format!("X-Api-Key: {k}\r\n")).unwrap_or_default();
    write!(s, "GET {path} HTTP/1.1\r\nHost: x\r\n{auth}Connection: close\r\n\r\n").unwrap();
    let mut buf = String::new();
    s.read_to_string(&mut buf).unwrap();
    let status = buf[9..12].parse().unwrap();
    let body = buf.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    (status, body)
}

#[test]
fn socket_lines_reach_engine_and_store() {
    let dir = tempfile::tempdir().unwrap();
    let descs = [descriptor(0, AggregationType::Average), descriptor(1, AggregationType::Power)];
    let directory = directory(&descs);
    let store = Arc::new(Store::<f64>::open(dir.path(), directory.clone()).unwrap());
    let (fwd, rx) = engine_queue(64);
    let worker = EngineWorker::spawn(Engine::new(EngineConfig::default(), store.clone()), rx);
    let ing = Arc::new(LineIngestor::new(Arc::new(BusMapper::new(directory)), fwd).with_quarantine(store.clone()));
    let listener = LineListener::bind("127.0.0.1:0", ing.clone()).unwrap();
    {
        let mut c = TcpStream::connect(listener.local_addr()).unwrap();
        for i in 0..10 {
            writeln!(c, "dev0/temperature\t{}@{}", 20 + i, T0 + i * 30_000).unwrap();
            writeln!(c, "dev1/current_l1\t10@{}", T0 + i * 30_000).unwrap();
        }
        writeln!(c, "ghost/sensor\t1@{T0}").unwrap();
        writeln!(c, "no tab here").unwrap();
    }
    // wait for the connection thread to drain
    for _ in 0..200 {
        let c = ing.counters();
        if c.accepted + c.malformed + c.unknown == 22 {
            break;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    listener.stop();
    let counters = ing.counters();
    drop(ing);
    let (engine, report) = worker.join();
    assert_eq!((counters.accepted, counters.unknown, counters.malformed), (20, 1, 1));
    assert_eq!(report.processed, 20);
    assert_eq!(store.quarantine_count(), 1);
    let five = engine.store().summaries(&descs[0].resource_id, Granularity::FiveMin, T0, T0 + HOUR).unwrap();
    assert_eq!(five.len(), 1);
    assert!((five[0].avg - 24.5).abs() < 1e-12);
    let power = engine.store().summaries(&descs[1].resource_id, Granularity::FiveMin, T0, T0 + HOUR).unwrap();
    assert!((power[0].energy_wh.unwrap() - 2300.0 * 5.0 / 60.0).abs() < 1e-9);
}

#[test]
fn replay_reproduces_summaries_exactly() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let descs: Vec<_> = (0..3).map(|i| descriptor(i, AggregationType::ALL[i])).collect();
    let mut e = engine_at(a.path(), directory(&descs));
    for k in 0..2000i64 {
        let d = &descs[(k % 3) as usize];
        e.submit(&reading(d, T0 + k * 41_000, ((k * 37) % 101) as f64 / 7.0)).unwrap();
    }
    e.flush().unwrap();
    let original = e.store().export_summaries().unwrap();

    let mut fresh = engine_at(b.path(), directory(&descs));
    let rep = e
        .store()
        .replay(T0, T0 + 10 * DAY, ReplaySpeed::Max, &mut |r| fresh.submit(r).map(|_| ()))
        .unwrap();
    fresh.flush().unwrap();
    assert_eq!(rep.count, 2000);
    assert_eq!(fresh.store().export_summaries().unwrap(), original);
}

#[test]
fn historical_matches_store_scan_and_http() {
    let dir = tempfile::tempdir().unwrap();
    let d = descriptor(0, AggregationType::Average);
    let dispatcher = Arc::new(Dispatcher::new());
    let directory = directory(std::slice::from_ref(&d));
    let store = Arc::new(Store::<f64>::open(dir.path(), directory).unwrap());
    let mut e = Engine::new(EngineConfig::default(), store.clone()).with_dispatcher(dispatcher.clone());
    let service = Arc::new(QueryService::new(store.clone(), dispatcher));
    let sub = service.subscribe(None).unwrap();
    for k in 0..500i64 {
        e.submit(&reading(&d, T0 + k * 60_000, (k % 13) as f64)).unwrap();
    }
    e.flush().unwrap();

    let q = QueryRequest::new(d.resource_id.clone(), Granularity::Hour, T0 + 2 * HOUR, T0 + 5 * HOUR);
    let resp = service.historical(&q).unwrap();
    let scan = store.summaries(&d.resource_id, Granularity::Hour, T0 + 2 * HOUR, T0 + 5 * HOUR).unwrap();
    assert_eq!(resp.summaries, scan);
    assert_eq!(resp.summaries.len(), 3);
    assert_eq!(service.latency_log().len(), 1);

    // real-time: one update per granularity per reading, per-resource order
    let updates = sub.drain();
    assert_eq!(updates.len(), 500 * 5);
    assert!(updates.iter().all(|u| matches!(u, Update::Summary(_))));

    let mut keys = KeyTable::new();
    keys.allow_all("k");
    let api = ApiServer::start("127.0.0.1:0", service, Arc::new(keys)).unwrap();
    let path = format!("/historical?resource=r0&granularity=hour&from={}&to={}&fields=avg,count", T0 + 2 * HOUR, T0 + 5 * HOUR);
    let (status, body) = get(api.addr(), &path, Some("k"));
    assert_eq!(status, 200, "{body}");
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    let rows = v["summaries"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["count"].as_f64().unwrap() as u64, scan[0].count);
    assert!(rows[0].get("min").is_none());
    assert_eq!(get(api.addr(), &path, None).0, 401);
    assert_eq!(get(api.addr(), &path, Some("nope")).0, 401);
    assert_eq!(get(api.addr(), "/historical?resource=zz&granularity=hour&from=0&to=1", Some("k")).0, 404);
    let (status, body) = get(api.addr(), "/directory", Some("k"));
    assert_eq!(status, 200);
    assert!(body.contains("\"r0\""));
    api.shutdown();
}

#[test]
fn evicted_intervals_persist_in_store() {
    let dir = tempfile::tempdir().unwrap();
    let d = descriptor(0, AggregationType::Average);
    let mut e = engine_at(dir.path(), directory(std::slice::from_ref(&d)));
    for k in 0..100i64 {
        e.submit(&reading(&d, T0 + k * FIVE_MIN, k as f64)).unwrap();
    }
    let retained = e.retained(&d.resource_id, Granularity::FiveMin);
    assert_eq!(retained.len(), 48);
    assert_eq!(retained[0].start, T0 + 52 * FIVE_MIN);
    e.flush().unwrap();
    let stored = e.store().summaries(&d.resource_id, Granularity::FiveMin, T0, T0 + DAY).unwrap();
    assert_eq!(stored.len(), 100);
    // older than the retained window: stored raw, kept out of summaries
    assert!(e.submit(&reading(&d, T0 + 1000, 99.0)).is_err());
    assert_eq!(e.store().get_raw(&d.resource_id, T0, T0 + 2000).unwrap().len(), 2);
}

#[test]
fn slow_subscriber_drops_oldest() {
    let dir = tempfile::tempdir().unwrap();
    let d = descriptor(0, AggregationType::Average);
    let dirx = directory(std::slice::from_ref(&d));
    let dispatcher = Arc::new(Dispatcher::<f64>::new());
    let sub = dispatcher.subscribe(&dirx, None, 10).unwrap();
    let store = Arc::new(Store::<f64>::open(dir.path(), dirx).unwrap());
    let mut e = Engine::new(EngineConfig::default(), store).with_dispatcher(dispatcher);
    for k in 0..6i64 {
        e.submit(&reading(&d, T0 + k * FIVE_MIN, 1.0)).unwrap();
    }
    // 30 updates into a queue of 10
    assert_eq!(sub.dropped(), 20);
    let kept = sub.drain();
    assert_eq!(kept.len(), 10);
    let Update::Summary(last) = kept.last().unwrap() else { panic!() };
    assert_eq!(last.interval.granularity, Granularity::Year);
}
