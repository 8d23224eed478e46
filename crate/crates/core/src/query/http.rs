//! Local HTTP front end for the Data API.
//!
//! | Method | Path          | Parameters                                                   |
//! |--------|---------------|--------------------------------------------------------------|
//! | GET    | `/directory`  | none                                                         |
//! | GET    | `/historical` | `resource`, `granularity`, `from`, `to`, optional `fields`   |
//! | GET    | `/subscribe`  | optional `resources` (comma list), `max` (default 100), `wait_ms` (default 1000) |
//!
//! Every request carries an `X-Api-Key` header (or `api_key` parameter).
//! `/subscribe` long-polls and answers with newline-delimited JSON updates.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde_json::json;
use tiny_http::{Header, Method, Request, Response, Server};

use crate::model::{parse_time, Granularity, ResourceId};
use crate::scalar::Scalar;

use super::{parse_fields, project, Access, Decision, KeyTable, QueryError, QueryRequest, QueryService};

pub struct ApiServer {
    server: Arc<Server>,
    addr: SocketAddr,
    handle: Option<JoinHandle<()>>,
}

impl ApiServer {
    pub fn start<T: Scalar>(
        addr: &str,
        service: Arc<QueryService<T>>,
        keys: Arc<KeyTable>,
    ) -> std::io::Result<Self> {
        let server = Arc::new(Server::http(addr).map_err(std::io::Error::other)?);
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("not an ip listener"))?;
        let srv = server.clone();
        let handle = std::thread::spawn(move || {
            for req in srv.incoming_requests() {
                let service = service.clone();
                let keys = keys.clone();
                std::thread::spawn(move || handle(req, &service, &keys));
            }
        });
        Ok(ApiServer { server, addr, handle: Some(handle) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ApiServer {
    fn drop(&mut self) {
        self.server.unblock();
    }
}

struct Reply {
    status: u16,
    body: String,
    content_type: &'static str,
}

fn error(status: u16, msg: impl std::fmt::Display) -> Reply {
    Reply {
        status,
        body: json!({ "error": msg.to_string() }).to_string(),
        content_type: "application/json",
    }
}

fn ok_json(v: serde_json::Value) -> Reply {
    Reply { status: 200, body: v.to_string(), content_type: "application/json" }
}

fn handle<T: Scalar>(req: Request, service: &QueryService<T>, keys: &KeyTable) {
    let reply = route(&req, service, keys);
    let header = Header::from_bytes("Content-Type", reply.content_type).expect("static header");
    let resp = Response::from_string(reply.body).with_status_code(reply.status).with_header(header);
    if let Err(e) = req.respond(resp) {
        log::warn!("http respond failed: {e}");
    }
}

fn route<T: Scalar>(req: &Request, service: &QueryService<T>, keys: &KeyTable) -> Reply {
    if *req.method() != Method::Get {
        return error(405, "only GET is supported");
    }
    let (path, query) = req.url().split_once('?').unwrap_or((req.url(), ""));
    let params: HashMap<String, String> = url::form_urlencoded::parse(query.as_bytes()).into_owned().collect();
    let key = req
        .headers()
        .iter()
        .find(|h| h.field.equiv("X-Api-Key"))
        .map(|h| h.value.as_str().to_string())
        .or_else(|| params.get("api_key").cloned());
    let Some(key) = key else {
        return error(401, "missing api key");
    };
    if keys.authorize(&key, Access::Directory) == Decision::Deny {
        return error(401, "unknown api key");
    }
    match path {
        "/directory" => ok_json(json!(service.directory().list_resources())),
        "/historical" => historical(&params, service, keys, &key),
        "/subscribe" => subscribe(&params, service, keys, &key),
        _ => error(404, format!("no route {path}")),
    }
}

fn required<'a>(params: &'a HashMap<String, String>, name: &str) -> Result<&'a str, Reply> {
    params.get(name).map(String::as_str).ok_or_else(|| error(400, format!("missing parameter {name}")))
}

fn historical<T: Scalar>(
    params: &HashMap<String, String>,
    service: &QueryService<T>,
    keys: &KeyTable,
    key: &str,
) -> Reply {
    let parsed = (|| {
        let resource = ResourceId::new(required(params, "resource")?).map_err(|e| error(400, e))?;
        let granularity: Granularity = required(params, "granularity")?.parse().map_err(|e| error(400, e))?;
        let from = parse_time(required(params, "from")?).map_err(|e| error(400, e))?;
        let to = parse_time(required(params, "to")?).map_err(|e| error(400, e))?;
        let mut q = QueryRequest::new(resource, granularity, from, to);
        if let Some(f) = params.get("fields") {
            q.fields = parse_fields(f).map_err(|e| error(400, e))?;
        }
        Ok::<_, Reply>(q)
    })();
    let q = match parsed {
        Ok(q) => q,
        Err(r) => return r,
    };
    if keys.authorize(key, Access::Resource(&q.resource_id)) == Decision::Deny {
        return error(403, format!("key not allowed for {}", q.resource_id));
    }
    match service.historical(&q) {
        Ok(resp) => {
            let rows: Vec<_> = resp
                .summaries
                .iter()
                .map(|s| {
                    let mut m = serde_json::Map::new();
                    m.insert("start".into(), json!(s.interval.start));
                    for (name, v) in project(s, &q.fields) {
                        m.insert(name.into(), json!(v));
                    }
                    serde_json::Value::Object(m)
                })
                .collect();
            ok_json(json!({
                "resource": q.resource_id,
                "granularity": q.granularity,
                "latency_ms": resp.latency_ms,
                "summaries": rows,
            }))
        }
        Err(e @ QueryError::UnknownResource(_)) => error(404, e),
        Err(e @ QueryError::RangeTooLarge { .. }) => error(413, e),
        Err(e @ QueryError::InvalidRange(..)) => error(400, e),
        Err(e) => error(500, e),
    }
}

fn subscribe<T: Scalar>(
    params: &HashMap<String, String>,
    service: &QueryService<T>,
    keys: &KeyTable,
    key: &str,
) -> Reply {
    let ids = match params.get("resources").filter(|s| !s.is_empty()) {
        None => None,
        Some(list) => match list.split(',').map(ResourceId::new).collect::<Result<Vec<_>, _>>() {
            Ok(ids) => Some(ids),
            Err(e) => return error(400, e),
        },
    };
    match &ids {
        Some(ids) => {
            if let Some(id) = ids.iter().find(|id| keys.authorize(key, Access::Resource(id)) == Decision::Deny) {
                return error(403, format!("key not allowed for {id}"));
            }
        }
        None => {
            if keys.authorize(key, Access::AllResources) == Decision::Deny {
                return error(403, "key may only subscribe to explicit resources");
            }
        }
    }
    let max: usize = params.get("max").and_then(|s| s.parse().ok()).unwrap_or(100);
    let wait = Duration::from_millis(params.get("wait_ms").and_then(|s| s.parse().ok()).unwrap_or(1000));
    let sub = match service.subscribe(ids.as_deref()) {
        Ok(s) => s,
        Err(e) => return error(404, e),
    };
    let deadline = Instant::now() + wait;
    let mut body = String::new();
    let mut n = 0;
    while n < max {
        let left = deadline.saturating_duration_since(Instant::now());
        match sub.recv_timeout(left) {
            Some(u) => {
                body.push_str(&serde_json::to_string(&u).expect("update serializes"));
                body.push('\n');
                n += 1;
            }
            None => break,
        }
    }
    Reply { status: 200, body, content_type: "application/x-ndjson" }
}
