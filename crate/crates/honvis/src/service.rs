//! JSON API over an immutable bundle snapshot plus a store of subgraph
//! sessions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use honvis_core::aggregate::{GroupAttribute, GroupingConfig, GroupingMode, WeightScheme};
use honvis_core::analytics::{analyze, AnalyticsReport, AnalyzeConfig};
use honvis_core::layout::{dependency_layout, force_layout, DependencyOptions, RightOrder, ScatterLayout, DEFAULT_ITERATIONS};
use honvis_core::network::EdgeHistograms;
use honvis_core::subgraph::{init_session, trace_step, Direction, SubgraphError, SubgraphSession, DEFAULT_EPSILON};
use honvis_core::{Network, PortId};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bundle::NetworkBundle;
use crate::views::{aggregation_view, session_view, step_view};

pub const SESSION_CAPACITY: usize = 64;
pub const DEFAULT_PAGE: usize = 100;
pub const MAX_PAGE: usize = 1000;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "status": self.status.as_u16(), "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

struct SessionEntry {
    session: Arc<Mutex<SubgraphSession>>,
    created_at: u64,
    last_used: u64,
}

#[derive(Default)]
struct StoreInner {
    entries: HashMap<String, SessionEntry>,
    clock: u64,
}

/// Sessions keyed by random 128-bit hex ids; the least recently used one is
/// evicted once capacity is exceeded.
pub struct SessionStore {
    inner: Mutex<StoreInner>,
    capacity: usize,
}

impl SessionStore {
    pub fn new(capacity: usize) -> Self {
        SessionStore { inner: Mutex::new(StoreInner::default()), capacity }
    }

    pub fn insert(&self, session: SubgraphSession) -> (String, u64) {
        let mut inner = self.inner.lock().unwrap();
        let id = loop {
            let id = format!("{:032x}", rand::random::<u128>());
            if !inner.entries.contains_key(&id) {
                break id;
            }
        };
        while inner.entries.len() >= self.capacity {
            let oldest = inner.entries.iter().min_by_key(|(_, e)| e.last_used).map(|(k, _)| k.clone());
            match oldest {
                Some(k) => inner.entries.remove(&k),
                None => break,
            };
        }
        inner.clock += 1;
        let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let last_used = inner.clock;
        inner
            .entries
            .insert(id.clone(), SessionEntry { session: Arc::new(Mutex::new(session)), created_at, last_used });
        (id, created_at)
    }

    fn get(&self, id: &str) -> Option<(Arc<Mutex<SubgraphSession>>, u64)> {
        let mut inner = self.inner.lock().unwrap();
        inner.clock += 1;
        let now = inner.clock;
        let entry = inner.entries.get_mut(id)?;
        entry.last_used = now;
        Some((entry.session.clone(), entry.created_at))
    }

    pub fn remove(&self, id: &str) -> bool {
        self.inner.lock().unwrap().entries.remove(id).is_some()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, id: &str) -> bool {
        self.inner.lock().unwrap().entries.contains_key(id)
    }
}

pub struct AppState {
    bundle: NetworkBundle,
    analytics: OnceLock<Arc<AnalyticsReport>>,
    layout: OnceLock<Arc<ScatterLayout>>,
    pub sessions: SessionStore,
}

impl AppState {
    /// Explicit metrics and layout take precedence over those in the bundle.
    pub fn new(mut bundle: NetworkBundle, metrics: Option<AnalyticsReport>, layout: Option<ScatterLayout>) -> Self {
        let analytics = OnceLock::new();
        if let Some(a) = metrics.or_else(|| bundle.analytics.take()) {
            let _ = analytics.set(Arc::new(a));
        }
        let scatter = OnceLock::new();
        if let Some(l) = layout.or_else(|| bundle.layout.take()) {
            let _ = scatter.set(Arc::new(l));
        }
        AppState { bundle, analytics, layout: scatter, sessions: SessionStore::new(SESSION_CAPACITY) }
    }

    pub fn bundle(&self) -> &NetworkBundle {
        &self.bundle
    }

    /// Computed on first use when neither the bundle nor a metrics file had it.
    pub fn analytics_blocking(&self) -> Arc<AnalyticsReport> {
        self.analytics
            .get_or_init(|| Arc::new(analyze(&self.bundle.fon, &self.bundle.hon, AnalyzeConfig::default())))
            .clone()
    }

    pub fn layout_blocking(&self) -> Arc<ScatterLayout> {
        self.layout.get_or_init(|| Arc::new(force_layout(&self.bundle.hon, 0, DEFAULT_ITERATIONS))).clone()
    }
}

type Shared = Arc<AppState>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

async fn analytics(state: &Shared) -> Result<Arc<AnalyticsReport>, ApiError> {
    if let Some(a) = state.analytics.get() {
        return Ok(a.clone());
    }
    let s = state.clone();
    blocking(move || s.analytics_blocking()).await
}

type Params = BTreeMap<String, String>;

fn param<T: FromStr>(q: &Params, key: &str, default: T) -> Result<T, ApiError>
where
    T::Err: std::fmt::Display,
{
    match q.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|e| ApiError::bad_request(format!("invalid {key} '{v}': {e}"))),
    }
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/summary", get(summary))
        .route("/api/ports", get(list_ports))
        .route("/api/ports/{id}", get(port_detail))
        .route("/api/ports/{id}/dependency", get(port_dependency))
        .route("/api/pagerank", get(pagerank))
        .route("/api/communities", get(communities))
        .route("/api/layout", get(scatter))
        .route("/api/aggregation", get(aggregation))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session).delete(delete_session))
        .route("/api/sessions/{id}/trace", post(trace))
        .route("/api/transitions/histogram", get(histogram))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .with_state(state)
}

async fn summary(State(state): State<Shared>) -> ApiResult<Value> {
    let b = state.bundle();
    Ok(Json(json!({
        "format_version": b.format_version,
        "build_params": b.build_params,
        "ports": b.ports.len(),
        "fon_nodes": b.fon.node_count(),
        "fon_edges": b.fon.edges().len(),
        "hon_nodes": b.hon.node_count(),
        "hon_edges": b.hon.edges().len(),
        "higher_order_nodes": b.hon.nodes().iter().filter(|n| n.order() > 1).count(),
        "max_order": b.hon.max_node_order(),
        "total_transitions": b.hon.total_weight(),
    })))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PortSort {
    HonCount,
    PagerankDelta,
    Name,
}

impl FromStr for PortSort {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hon_count" => Ok(PortSort::HonCount),
            "pagerank_delta" => Ok(PortSort::PagerankDelta),
            "name" => Ok(PortSort::Name),
            _ => Err("expected hon_count, pagerank_delta or name".into()),
        }
    }
}

/// `min_lon,min_lat,max_lon,max_lat`; min_lon > max_lon wraps the antimeridian.
#[derive(Debug, Clone, Copy)]
struct BBox([f64; 4]);

impl FromStr for BBox {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: Vec<f64> = s
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        match v.as_slice() {
            &[a, b, c, d] if b <= d && v.iter().all(|x| x.is_finite()) => Ok(BBox([a, b, c, d])),
            _ => Err("expected min_lon,min_lat,max_lon,max_lat".into()),
        }
    }
}

impl BBox {
    fn contains(&self, lon: f64, lat: f64) -> bool {
        let [min_lon, min_lat, max_lon, max_lat] = self.0;
        let lon_ok = if min_lon <= max_lon { lon >= min_lon && lon <= max_lon } else { lon >= min_lon || lon <= max_lon };
        lon_ok && lat >= min_lat && lat <= max_lat
    }
}

#[derive(Debug, Clone, Serialize)]
struct PortSummary {
    port_id: PortId,
    name: String,
    lat: f64,
    lon: f64,
    country: String,
    eco_realm: String,
    temperature: f64,
    salinity: f64,
    freshwater: bool,
    hon_count: usize,
    max_order: usize,
    fon_pagerank: f64,
    hon_pagerank: f64,
    pagerank_delta: f64,
}

fn port_summary(state: &AppState, a: &AnalyticsReport, id: &PortId) -> Option<PortSummary> {
    let b = state.bundle();
    let p = b.ports.get(id.as_str())?;
    let nodes = b.hon.nodes_of_port(id.as_str());
    let score = |m: &BTreeMap<PortId, f64>| m.get(id).copied().unwrap_or(0.0);
    Some(PortSummary {
        port_id: p.port_id.clone(),
        name: p.name.clone(),
        lat: p.lat,
        lon: p.lon,
        country: p.country.clone(),
        eco_realm: p.eco_realm.clone(),
        temperature: p.temperature,
        salinity: p.salinity,
        freshwater: p.freshwater,
        hon_count: nodes.len(),
        max_order: nodes.iter().map(|&n| b.hon.node(n).order()).max().unwrap_or(0),
        fon_pagerank: score(&a.fon_pagerank),
        hon_pagerank: score(&a.hon_port_pagerank),
        pagerank_delta: score(&a.pagerank_delta),
    })
}

async fn list_ports(State(state): State<Shared>, q: Result<Query<Params>, QueryRejection>) -> ApiResult<Value> {
    let Query(q) = q?;
    let sort: PortSort = param(&q, "sort", PortSort::Name)?;
    let offset: usize = param(&q, "offset", 0)?;
    let limit: usize = param(&q, "limit", DEFAULT_PAGE)?;
    if limit > MAX_PAGE {
        return Err(ApiError::bad_request(format!("limit may not exceed {MAX_PAGE}")));
    }
    let bbox: Option<BBox> = q.get("bbox").map(|v| v.parse()).transpose().map_err(|e| {
        ApiError::bad_request(format!("invalid bbox: {e}"))
    })?;
    let a = analytics(&state).await?;
    let mut items: Vec<PortSummary> = state
        .bundle()
        .ports
        .iter()
        .filter(|p| bbox.is_none_or(|b| b.contains(p.lon, p.lat)))
        .filter_map(|p| port_summary(&state, &a, &p.port_id))
        .collect();
    match sort {
        PortSort::Name => items.sort_by(|x, y| x.name.cmp(&y.name).then(x.port_id.cmp(&y.port_id))),
        PortSort::HonCount => items.sort_by(|x, y| y.hon_count.cmp(&x.hon_count).then(x.port_id.cmp(&y.port_id))),
        PortSort::PagerankDelta => items.sort_by(|x, y| {
            y.pagerank_delta.total_cmp(&x.pagerank_delta).then(x.port_id.cmp(&y.port_id))
        }),
    }
    let total = items.len();
    let page: Vec<PortSummary> = items.into_iter().skip(offset).take(limit).collect();
    Ok(Json(json!({ "total": total, "offset": offset, "limit": limit, "items": page })))
}

fn known_port(state: &AppState, id: &str) -> Result<PortId, ApiError> {
    state
        .bundle()
        .ports
        .get(id)
        .map(|p| p.port_id.clone())
        .ok_or_else(|| ApiError::not_found(format!("unknown port '{id}'")))
}

async fn port_detail(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Value> {
    let port = known_port(&state, &id)?;
    let a = analytics(&state).await?;
    let b = state.bundle();
    let summary = port_summary(&state, &a, &port);
    let nodes: Vec<_> = b.hon.nodes_of_port(port.as_str()).iter().map(|&n| &a.node_metrics[n]).collect();
    let fon_total: u64 = b.fon.edges().iter().filter(|e| e.src == port).map(|e| e.weight).sum();
    let next: Vec<Value> = b
        .fon
        .edges()
        .iter()
        .filter(|e| e.src == port)
        .map(|e| json!({ "port": e.dst, "weight": e.weight, "probability": e.weight as f64 / fon_total as f64 }))
        .collect();
    Ok(Json(json!({ "port": summary, "nodes": nodes, "next_ports": next })))
}

async fn port_dependency(
    State(state): State<Shared>,
    Path(id): Path<String>,
    q: Result<Query<Params>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(q) = q?;
    let port = known_port(&state, &id)?;
    let options = DependencyOptions {
        min_prob: param(&q, "min_prob", 0.0)?,
        min_ships: param(&q, "min_ships", 0)?,
        right_order: param(&q, "right_order", RightOrder::Rank)?,
    };
    if !(0.0..=1.0).contains(&options.min_prob) {
        return Err(ApiError::bad_request("min_prob must lie in [0, 1]"));
    }
    let a = analytics(&state).await?;
    let b = state.bundle();
    let focus = b.hon.nodes_of_port(port.as_str()).to_vec();
    let layout = dependency_layout(&b.hon, &a.node_metrics, &focus, &options, &b.ports, Some(&a.hon_port_pagerank));
    Ok(Json(layout).into_response())
}

async fn pagerank(State(state): State<Shared>, q: Result<Query<Params>, QueryRejection>) -> ApiResult<Value> {
    let Query(q) = q?;
    let net = q.get("net").map(String::as_str).unwrap_or("hon");
    let a = analytics(&state).await?;
    let b = state.bundle();
    let entries: Vec<Value> = match net {
        "fon" => a.fon_pagerank.iter().map(|(p, s)| json!({ "label": p, "port": p, "score": s })).collect(),
        "hon" => a
            .hon_pagerank
            .scores
            .iter()
            .enumerate()
            .map(|(i, s)| json!({ "node": i, "label": b.hon.node_label(i), "port": b.hon.node_port(i), "score": s }))
            .collect(),
        "delta" => a
            .pagerank_delta
            .iter()
            .map(|(p, d)| {
                let fon = a.fon_pagerank.get(p).copied().unwrap_or(0.0);
                let hon = a.hon_port_pagerank.get(p).copied().unwrap_or(0.0);
                json!({ "label": p, "port": p, "score": d, "fon": fon, "hon": hon })
            })
            .collect(),
        other => return Err(ApiError::bad_request(format!("invalid net '{other}': expected fon, hon or delta"))),
    };
    Ok(Json(json!({ "net": net, "entries": entries })))
}

async fn communities(State(state): State<Shared>) -> ApiResult<Value> {
    let a = analytics(&state).await?;
    let b = state.bundle();
    let c = &a.communities;
    let nodes: Vec<Value> = c
        .assignment
        .iter()
        .enumerate()
        .map(|(i, k)| json!({ "node": i, "label": b.hon.node_label(i), "port": b.hon.node_port(i), "community": k }))
        .collect();
    Ok(Json(json!({
        "count": c.count,
        "modularity": c.modularity,
        "resolution": c.resolution,
        "seed": c.seed,
        "nodes": nodes,
    })))
}

async fn scatter(State(state): State<Shared>) -> ApiResult<Value> {
    let layout = match state.layout.get() {
        Some(l) => l.clone(),
        None => {
            let s = state.clone();
            blocking(move || s.layout_blocking()).await?
        }
    };
    let b = state.bundle();
    let nodes: Vec<Value> = layout
        .positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            json!({ "node": i, "label": b.hon.node_label(i), "port": b.hon.node_port(i),
                    "order": b.hon.node(i).order(), "x": p[0], "y": p[1] })
        })
        .collect();
    Ok(Json(json!({ "seed": layout.seed, "iterations": layout.iterations, "nodes": nodes })))
}

async fn aggregation(State(state): State<Shared>, q: Result<Query<Params>, QueryRejection>) -> Result<Response, ApiError> {
    let Query(q) = q?;
    let grouping = GroupingConfig {
        attribute: param(&q, "attribute", GroupAttribute::EcoRealm)?,
        mode: param(&q, "grouping", GroupingMode::Exact)?,
        weight_scheme: param(&q, "weight", WeightScheme::Uniform)?,
    };
    let bundle_chords: bool = param(&q, "bundle", true)?;
    let filter: Option<BTreeSet<usize>> = match q.get("session") {
        None => None,
        Some(id) => {
            let (s, _) = state.sessions.get(id).ok_or_else(|| ApiError::not_found(format!("unknown session '{id}'")))?;
            let s = s.lock().unwrap();
            let mut ids: BTreeSet<usize> = s.reached().collect();
            ids.extend(s.mass.keys().copied());
            Some(ids)
        }
    };
    let s = state.clone();
    let view = blocking(move || {
        let b = s.bundle();
        aggregation_view(&b.hon, &b.ports, &grouping, filter.as_ref(), bundle_chords)
    })
    .await?
    .map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(view).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub seeds: Vec<String>,
    #[serde(default = "forward")]
    pub direction: String,
}

fn forward() -> String {
    "forward".into()
}

fn subgraph_error(e: SubgraphError) -> ApiError {
    match e {
        SubgraphError::NoSeeds => ApiError::bad_request(e.to_string()),
        SubgraphError::UnknownSeed(_) => ApiError::not_found(e.to_string()),
        SubgraphError::TooLarge { .. } => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    }
}

async fn create_session(
    State(state): State<Shared>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let direction: Direction = req.direction.parse().map_err(|e: String| ApiError::bad_request(e))?;
    let hon = &state.bundle().hon;
    let seeds = req
        .seeds
        .iter()
        .map(|l| hon.node_by_label(l).ok_or_else(|| ApiError::not_found(format!("unknown node '{l}'"))))
        .collect::<Result<Vec<usize>, _>>()?;
    let session = init_session(hon, &seeds, direction, DEFAULT_EPSILON).map_err(subgraph_error)?;
    let view_session = session.clone();
    let (id, created_at) = state.sessions.insert(session);
    let view = session_view(&id, created_at, &view_session, hon);
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

fn session(state: &AppState, id: &str) -> Result<(Arc<Mutex<SubgraphSession>>, u64), ApiError> {
    state.sessions.get(id).ok_or_else(|| ApiError::not_found(format!("unknown session '{id}'")))
}

async fn get_session(State(state): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let (s, created_at) = session(&state, &id)?;
    let view = session_view(&id, created_at, &s.lock().unwrap(), &state.bundle().hon);
    Ok(Json(view).into_response())
}

async fn delete_session(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Value> {
    if !state.sessions.remove(&id) {
        return Err(ApiError::not_found(format!("unknown session '{id}'")));
    }
    Ok(Json(json!({ "deleted": id })))
}

async fn trace(State(state): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let (s, _) = session(&state, &id)?;
    let a = analytics(&state).await?;
    let hon = &state.bundle().hon;
    let report = {
        let mut guard = s.lock().unwrap();
        trace_step(&mut guard, hon, &a.communities.assignment).map_err(subgraph_error)?
    };
    Ok(Json(step_view(&report, hon, &a.communities.assignment)).into_response())
}

#[derive(Debug, Serialize)]
struct HistogramView {
    src: String,
    dst: Option<PortId>,
    weight: u64,
    #[serde(flatten)]
    histograms: EdgeHistograms,
}

async fn histogram(State(state): State<Shared>, q: Result<Query<Params>, QueryRejection>) -> Result<Response, ApiError> {
    let Query(q) = q?;
    let hon = &state.bundle().hon;
    let src = q.get("src").ok_or_else(|| ApiError::bad_request("src is required"))?;
    let node = hon.node_by_label(src).ok_or_else(|| ApiError::not_found(format!("unknown node '{src}'")))?;
    let dst = q.get("dst").map(|d| known_port(&state, d)).transpose()?;
    let mut out = HistogramView { src: src.clone(), dst: dst.clone(), weight: 0, histograms: EdgeHistograms::default() };
    for e in hon.edges().iter().filter(|e| e.src == node) {
        if dst.as_ref().is_none_or(|d| hon.node(e.dst).port() == d) {
            out.weight += e.weight;
            out.histograms.absorb(&e.histograms);
        }
    }
    Ok(Json(out).into_response())
}

/// Binds `addr` and serves until interrupted.
pub async fn serve(state: AppState, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    eprintln!("{}", json!({ "event": "listening", "addr": local.to_string() }));
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
