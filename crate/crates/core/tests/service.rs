use axum::body::Body;
use axum::http::{Request, StatusCode};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use echogan::dataio::{
    decode_frame_png, encode_frame_png, encode_mask_png, load_mask_file, make_split, make_synthetic_fixture,
    mask_path, write_study, ExperimentName, LabelMap,
};
use echogan::inference::{checkpoints_in, generate_from_mask, router, AppState, GenerationRequest, ModelRegistry};
use echogan::networks::ModelConfig;
use echogan::trainer::{run_experiment, TrainConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

/// Trains two tiny experiments and loads their final checkpoints.
fn trained_registry(data: &std::path::Path, out: &std::path::Path) -> ModelRegistry {
    let recs = make_synthetic_fixture(4, 3, 128).unwrap();
    for r in &recs {
        write_study(data, r).unwrap();
    }
    let ids: Vec<String> = recs.iter().map(|r| r.patient_id.clone()).collect();
    let manifest = make_split(&ids, 0, 1).unwrap();
    let model = ModelConfig {
        image_size: 128,
        generator_base_channels: 4,
        discriminator_base_channels: 4,
        ..ModelConfig::default()
    };
    for experiment in [ExperimentName::A, ExperimentName::E] {
        let train = TrainConfig {
            total_iterations: 5,
            batch_size: 2,
            experiment,
            ..TrainConfig::default()
        };
        run_experiment(&train, &model, &manifest, data, out).unwrap();
    }
    ModelRegistry::load(&checkpoints_in(out).unwrap()).unwrap()
}

async fn call(app: axum::Router, req: Request<Body>) -> (StatusCode, Value) {
    let res = app.oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn generate_request(checkpoint: &str, png: &[u8]) -> Request<Body> {
    Request::post("/generate")
        .header("content-type", "application/json")
        .body(Body::from(
            json!({"checkpoint": checkpoint, "mask_png_b64": BASE64.encode(png)}).to_string(),
        ))
        .unwrap()
}

#[tokio::test]
async fn round_trip_against_a_trained_checkpoint() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let registry = trained_registry(data.path(), out.path());
    let mask = load_mask_file(&mask_path(data.path(), "fixture0002")).unwrap();
    let local = generate_from_mask(&GenerationRequest::new(mask.clone(), "experiment-e"), registry.get("experiment-e").unwrap())
        .unwrap();
    let app = router(AppState::new(registry));

    let (status, models) = call(app.clone(), Request::get("/models").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let ids: Vec<&str> = models.as_array().unwrap().iter().map(|m| m["checkpoint"].as_str().unwrap()).collect();
    assert_eq!(ids, ["experiment-a", "experiment-e"]);
    assert_eq!(models[0]["condition_spec"]["labels"], json!([1]));
    assert_eq!(models[1]["input_size"], json!(128));

    let png = encode_mask_png(&mask).unwrap();
    let (status, first) = call(app.clone(), generate_request("experiment-e", &png)).await;
    assert_eq!(status, StatusCode::OK, "{first}");
    let (_, second) = call(app.clone(), generate_request("experiment-e", &png)).await;
    assert_eq!(first["image_png_b64"], second["image_png_b64"]);

    // The wire image is the in-process result quantised to 8 bits.
    let wire = BASE64.decode(first["image_png_b64"].as_str().unwrap()).unwrap();
    assert_eq!(wire, encode_frame_png(&local.image).unwrap());
    let decoded = decode_frame_png(&wire).unwrap();
    assert_eq!(encode_frame_png(&decoded).unwrap(), wire);

    let (_, again) = call(app, Request::get("/models").body(Body::empty()).unwrap()).await;
    assert_eq!(models, again);
}

#[tokio::test]
async fn out_of_range_labels_are_unprocessable() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let app = router(AppState::new(trained_registry(data.path(), out.path())));
    // Build an 8-bit raster holding label 7 by hand; LabelMap refuses it.
    let ok = encode_mask_png(&LabelMap::zeros(2, 2)).unwrap();
    let decoded = image::load_from_memory(&ok).unwrap().into_luma8();
    let mut raw = decoded.into_raw();
    raw[1] = 7;
    let mut bad = std::io::Cursor::new(Vec::new());
    image::GrayImage::from_raw(2, 2, raw)
        .unwrap()
        .write_to(&mut bad, image::ImageFormat::Png)
        .unwrap();
    let (status, body) = call(app.clone(), generate_request("experiment-a", bad.get_ref())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].is_string());
    let (status, _) = call(app, generate_request("experiment-z", &ok)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
