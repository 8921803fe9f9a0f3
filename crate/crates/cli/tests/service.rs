use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use base64::Engine as _;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use bodyshape::mapper::Mapper;
use bodyshape::mesh::parse_obj;
use bodyshape::selector::{train_model, TrainOptions};
use bodyshape::synth::{generate, GeneratorConfig};
use bodyshape_cli::service::{router, AppState};

fn state() -> Arc<AppState> {
    static STATE: OnceLock<Arc<AppState>> = OnceLock::new();
    STATE
        .get_or_init(|| {
            let data = generate(&GeneratorConfig::with_n_seed(60, 11)).unwrap();
            let model = train_model(&data.meshes, data.spec(), 4, TrainOptions { seed: 11 }).unwrap();
            Arc::new(AppState::new(Mapper::from_model(model).unwrap(), None).unwrap())
        })
        .clone()
}

async fn call(app: axum::Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

async fn get(path: &str) -> (StatusCode, Vec<u8>) {
    call(router(state(), None), Request::get(path).body(Body::empty()).unwrap()).await
}

async fn post(body: &str) -> (StatusCode, Vec<u8>) {
    let req = Request::post("/api/reshape")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    call(router(state(), None), req).await
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

#[tokio::test]
async fn schema_lists_nineteen_parameters_with_slider_statistics() {
    let (status, body) = get("/api/schema").await;
    assert_eq!(status, StatusCode::OK);
    let doc = json(&body);
    let params = doc["parameters"].as_array().unwrap();
    assert_eq!(params.len(), 19);
    assert_eq!(params[1]["key"], "height");
    assert_eq!(params[1]["unit"], "mm");
    for p in params {
        assert!(p["std"].as_f64().unwrap() > 0.0, "{p}");
        let (lo, mean, hi) = (p["min"].as_f64().unwrap(), p["mean"].as_f64().unwrap(), p["max"].as_f64().unwrap());
        assert!(lo <= mean && mean <= hi, "{p}");
    }
    assert_eq!(doc["model"]["k"], 4);
    // constant for the process lifetime
    assert_eq!(get("/api/schema").await.1, body);
}

#[tokio::test]
async fn health_reports_ok() {
    let (status, body) = get("/api/health").await;
    assert_eq!(status, StatusCode::OK);
    let doc = json(&body);
    assert_eq!(doc["status"], "ok");
    assert_eq!(doc["faces"], 2496);
}

#[tokio::test]
async fn reshape_returns_full_parameters_and_template_faces() {
    let (status, body) = post(r#"{"height":1700,"weight":60,"chest":900}"#).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let doc = json(&body);
    let params = doc["parameters"].as_array().unwrap();
    assert_eq!(params.len(), 19);
    let imputed = params.iter().filter(|p| p["imputed"] == true).count();
    assert_eq!(imputed, 16);
    assert_eq!(params[1]["value"], 1700.0);
    assert_eq!(params[1]["imputed"], false);
    assert_eq!(doc["mesh"]["format"], "json-mesh");

    let template = state().mapper().model().mean_mesh().clone();
    let faces: Vec<u32> = doc["mesh"]["faces"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap() as u32)
        .collect();
    let expected: Vec<u32> = template.faces().iter().flatten().copied().collect();
    assert_eq!(faces, expected);
    assert_eq!(doc["mesh"]["vertices"].as_array().unwrap().len(), 3 * template.vertex_count());
}

#[tokio::test]
async fn obj_format_is_base64_obj_text() {
    let (status, body) = post(r#"{"height":1650,"format":"obj"}"#).await;
    assert_eq!(status, StatusCode::OK);
    let doc = json(&body);
    assert_eq!(doc["mesh"]["format"], "obj");
    let text = base64::engine::general_purpose::STANDARD
        .decode(doc["mesh"]["obj_base64"].as_str().unwrap())
        .unwrap();
    let mesh = parse_obj(std::str::from_utf8(&text).unwrap()).unwrap();
    assert_eq!(mesh.faces(), state().mapper().model().mean_mesh().faces());
}

#[tokio::test]
async fn empty_request_is_rejected() {
    let (status, body) = post("{}").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(json(&body)["error"], "at least one parameter required");
}

#[tokio::test]
async fn invalid_fields_get_field_messages() {
    let (status, body) = post(r#"{"bogus":1,"height":"tall","weight":-4}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let doc = json(&body);
    let fields = doc["fields"].as_object().unwrap();
    assert_eq!(fields.len(), 3);
    assert_eq!(fields["bogus"], "unknown parameter");
    assert_eq!(fields["height"], "must be a number");
    assert!(fields["weight"].as_str().unwrap().contains("weight"));

    let (status, _) = post("not json").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post("[1]").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn identical_requests_give_identical_bytes() {
    let req = r#"{"height":1720,"gluteal_hip":1010,"seed":7}"#;
    let (_, a) = post(req).await;
    let (_, b) = post(req).await;
    assert_eq!(a, b);
    // key order in the request does not matter
    let (_, c) = post(r#"{"seed":7,"gluteal_hip":1010,"height":1720}"#).await;
    assert_eq!(a, c);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_requests_share_the_model() {
    let app = router(state(), None);
    let bodies = ["{\"height\":1600}", "{\"height\":1800}", "{\"weight\":90}", "{\"chest\":1000}"];
    let mut handles = Vec::new();
    for round in 0..2 {
        for b in bodies {
            let app = app.clone();
            handles.push(tokio::spawn(async move {
                let req = Request::post("/api/reshape").body(Body::from(b)).unwrap();
                (round, b, call(app, req).await)
            }));
        }
    }
    let mut first = std::collections::HashMap::new();
    for h in handles {
        let (_, b, (status, body)) = h.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        let prev = first.entry(b).or_insert_with(|| body.clone());
        assert_eq!(*prev, body);
    }
}

#[tokio::test]
async fn static_files_are_served_and_unknown_paths_404() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>ui</html>").unwrap();
    let app = router(state(), Some(dir.path().to_path_buf()));
    let (status, body) = call(app.clone(), Request::get("/").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"<html>ui</html>");
    let (status, _) = call(app.clone(), Request::get("/api/missing").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(app, Request::get("/api/schema").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
}
