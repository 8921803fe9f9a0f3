//! HTTP front end for a trained model: schema, reshape, health, and
//! static hosting of the web client.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use base64::Engine as _;
use serde::Serialize;
use serde_json::Value;
use tower_http::services::ServeDir;

use bodyshape::anthropometry::{index_of, ParamKind, ParameterMatrix, ParameterVector, Unit, SCHEMA, SCHEMA_ID};
use bodyshape::imputer::{ImputeMethod, Imputer, ImputerConfig};
use bodyshape::mapper::{Mapper, ReshapeResult};
use bodyshape::mesh::write_obj;
use bodyshape::selector::ModelMetadata;
use bodyshape::Error;

/// Env var that overrides the bind address.
pub const BIND_ENV: &str = "BODYSHAPE_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

/// Everything the handlers share; immutable after startup.
pub struct AppState {
    mapper: Mapper,
    data: ParameterMatrix,
    /// Pre-rendered /api/schema body, constant for the process lifetime.
    schema: Bytes,
}

impl AppState {
    /// `data` defaults to the training rows stored in the model.
    pub fn new(mapper: Mapper, data: Option<ParameterMatrix>) -> Result<Self, Error> {
        let data = match data {
            Some(d) => d,
            None => mapper
                .training_parameters()
                .cloned()
                .ok_or_else(|| Error::ModelFormat("model carries no training parameters".into()))?,
        };
        let schema = Bytes::from(serde_json::to_vec(&schema_document(&mapper, &data))?);
        Ok(AppState { mapper, data, schema })
    }

    pub fn mapper(&self) -> &Mapper {
        &self.mapper
    }
}

#[derive(Serialize)]
struct SchemaEntry {
    id: u8,
    key: &'static str,
    name: &'static str,
    kind: ParamKind,
    unit: Unit,
    mean: f64,
    std: f64,
    min: f64,
    max: f64,
}

#[derive(Serialize)]
struct SchemaDocument<'a> {
    schema: &'static str,
    parameters: Vec<SchemaEntry>,
    model: &'a ModelMetadata,
}

fn schema_document<'a>(mapper: &'a Mapper, data: &ParameterMatrix) -> SchemaDocument<'a> {
    let model = mapper.model();
    let range = data.stats();
    SchemaDocument {
        schema: SCHEMA_ID,
        parameters: SCHEMA
            .iter()
            .enumerate()
            .map(|(j, d)| SchemaEntry {
                id: d.id,
                key: d.key,
                name: d.name,
                kind: d.kind,
                unit: d.unit,
                mean: model.stats().mean[j],
                std: model.stats().std[j],
                min: range.min[j],
                max: range.max[j],
            })
            .collect(),
        model: model.metadata(),
    }
}

pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/schema", get(schema))
        .route("/api/reshape", post(reshape))
        .route("/api/health", get(health))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

fn json_response(status: StatusCode, body: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error_response(status: StatusCode, body: &ErrorBody) -> Response {
    json_response(status, serde_json::to_vec(body).unwrap_or_default())
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    fields: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<String>,
}

impl ErrorBody {
    fn new(error: impl Into<String>) -> Self {
        ErrorBody {
            error: error.into(),
            fields: BTreeMap::new(),
            id: None,
        }
    }
}

async fn schema(State(state): State<Arc<AppState>>) -> Response {
    json_response(StatusCode::OK, state.schema.to_vec())
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    let mesh = state.mapper.model().mean_mesh();
    let body = serde_json::json!({
        "status": "ok",
        "vertices": mesh.vertex_count(),
        "faces": mesh.face_count(),
    });
    json_response(StatusCode::OK, body.to_string().into_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    JsonMesh,
    Obj,
}

/// A parsed reshape request: flat JSON object of parameter keys, plus the
/// optional `seed`, `method` and `format` fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ReshapeRequest {
    pub partial: ParameterVector,
    pub seed: u64,
    pub method: ImputeMethod,
    pub format: MeshFormat,
}

impl ReshapeRequest {
    pub fn parse(body: &[u8]) -> Result<Self, ErrorBodyPublic> {
        let value: Value = serde_json::from_slice(body)
            .map_err(|e| ErrorBodyPublic::message(format!("request body is not valid JSON: {e}")))?;
        let Value::Object(map) = value else {
            return Err(ErrorBodyPublic::message("request body must be a JSON object"));
        };
        let mut fields = BTreeMap::new();
        let mut req = ReshapeRequest {
            partial: ParameterVector::empty(),
            seed: 0,
            method: ImputeMethod::Mice,
            format: MeshFormat::JsonMesh,
        };
        for (key, v) in &map {
            match key.as_str() {
                "seed" => match v.as_u64() {
                    Some(s) => req.seed = s,
                    None => {
                        fields.insert(key.clone(), "must be a non-negative integer".into());
                    }
                },
                "method" => match v.as_str().map(str::parse::<ImputeMethod>) {
                    Some(Ok(m)) => req.method = m,
                    _ => {
                        fields.insert(key.clone(), "must be one of mice, mean, knn".into());
                    }
                },
                "format" => match v.as_str() {
                    Some("json-mesh") => req.format = MeshFormat::JsonMesh,
                    Some("obj") => req.format = MeshFormat::Obj,
                    _ => {
                        fields.insert(key.clone(), "must be \"json-mesh\" or \"obj\"".into());
                    }
                },
                _ => match (index_of(key), v.as_f64()) {
                    (None, _) => {
                        fields.insert(key.clone(), "unknown parameter".into());
                    }
                    (Some(_), None) => {
                        fields.insert(key.clone(), "must be a number".into());
                    }
                    (Some(i), Some(x)) => {
                        let mut one = ParameterVector::empty();
                        one.set(i, x);
                        match one.validate() {
                            Ok(()) => req.partial.set(i, x),
                            Err(e) => {
                                fields.insert(key.clone(), e.to_string());
                            }
                        }
                    }
                },
            }
        }
        if !fields.is_empty() {
            let valid: Vec<&str> = SCHEMA.iter().map(|d| d.key).collect();
            return Err(ErrorBodyPublic(ErrorBody {
                error: format!("invalid request; parameter names: {}", valid.join(", ")),
                fields,
                id: None,
            }));
        }
        if req.partial.present_count() == 0 {
            return Err(ErrorBodyPublic::message("at least one parameter required"));
        }
        Ok(req)
    }
}

/// Client-facing validation failure.
#[derive(Debug)]
pub struct ErrorBodyPublic(ErrorBody);

impl ErrorBodyPublic {
    fn message(msg: impl Into<String>) -> Self {
        ErrorBodyPublic(ErrorBody::new(msg))
    }

    pub fn error(&self) -> &str {
        &self.0.error
    }

    pub fn fields(&self) -> &BTreeMap<String, String> {
        &self.0.fields
    }
}

#[derive(Serialize)]
struct ParameterEntry {
    id: u8,
    key: &'static str,
    value: f64,
    imputed: bool,
    achieved: f64,
}

#[derive(Serialize)]
#[serde(tag = "format")]
enum MeshPayload {
    #[serde(rename = "json-mesh")]
    Json { vertices: Vec<f64>, faces: Vec<u32> },
    #[serde(rename = "obj")]
    Obj { obj_base64: String },
}

#[derive(Serialize)]
struct ReshapeResponse<'a> {
    parameters: Vec<ParameterEntry>,
    mesh: MeshPayload,
    seed: u64,
    model: &'a ModelMetadata,
}

/// Runs one request against the shared model; the JSON body is a pure
/// function of the request.
pub fn handle_reshape(state: &AppState, req: &ReshapeRequest) -> Result<Vec<u8>, Error> {
    let config = ImputerConfig {
        method: req.method,
        seed: req.seed,
        ..ImputerConfig::default()
    };
    let imputer = Imputer::new(&state.data, &config)?;
    let out = state.mapper.reshape_with(&req.partial, &imputer)?;
    render_reshape(state.mapper.model().metadata(), &out, req.format, req.seed)
}

/// The reshape response document; also what `bodyshape reshape` writes for
/// `.json` outputs.
pub fn render_reshape(
    model: &ModelMetadata,
    out: &ReshapeResult,
    format: MeshFormat,
    seed: u64,
) -> Result<Vec<u8>, Error> {
    let mesh = match format {
        MeshFormat::JsonMesh => MeshPayload::Json {
            vertices: out.mesh.vertices().iter().flat_map(|v| [v.x, v.y, v.z]).collect(),
            faces: out.mesh.faces().iter().flatten().copied().collect(),
        },
        MeshFormat::Obj => MeshPayload::Obj {
            obj_base64: base64::engine::general_purpose::STANDARD.encode(write_obj(&out.mesh)),
        },
    };
    let response = ReshapeResponse {
        parameters: SCHEMA
            .iter()
            .enumerate()
            .map(|(j, d)| ParameterEntry {
                id: d.id,
                key: d.key,
                value: out.parameters.values[j],
                imputed: out.imputed[j],
                achieved: out.achieved.values[j],
            })
            .collect(),
        mesh,
        seed,
        model,
    };
    Ok(serde_json::to_vec(&response)?)
}

async fn reshape(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req = match ReshapeRequest::parse(&body) {
        Ok(r) => r,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, &e.0),
    };
    let result = tokio::task::spawn_blocking(move || handle_reshape(&state, &req)).await;
    match result {
        Ok(Ok(bytes)) => json_response(StatusCode::OK, bytes),
        Ok(Err(Error::InvalidParameter(msg))) => error_response(StatusCode::BAD_REQUEST, &ErrorBody::new(msg)),
        Ok(Err(e)) => internal_error(&e.to_string()),
        Err(e) => internal_error(&e.to_string()),
    }
}

fn internal_error(detail: &str) -> Response {
    let id = uuid::Uuid::new_v4().to_string();
    tracing::error!(%id, %detail, "reshape failed");
    error_response(
        StatusCode::INTERNAL_SERVER_ERROR,
        &ErrorBody {
            error: "internal error".into(),
            fields: BTreeMap::new(),
            id: Some(id),
        },
    )
}

/// Serves until Ctrl-C or SIGTERM, then drains in-flight requests.
pub async fn serve(state: Arc<AppState>, bind: SocketAddr, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state, static_dir))
        .with_graceful_shutdown(shutdown_signal())
        .await
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutting down");
}
