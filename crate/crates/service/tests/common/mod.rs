#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use scribe_core::asr::{EngineDescriptor, MockSpan, MockTable};
use scribe_core::cpr::RestorerHandle;
use scribe_core::diarise::{ClusterConfig, MergeConfig, SpectralConfig, SpectralEmbedder};
use scribe_core::media::{encode_wav, AudioBuffer};
use scribe_core::vad::{EnergyDetector, VadConfig};
use scribe_service::job::ProgressEvent;
use scribe_service::pipeline::Engines;
use tower::ServiceExt;

pub const RATE: u32 = 16_000;

/// (start, end, speaker) of each voiced stretch in the fixture.
pub const TURNS: [(f64, f64, usize); 4] = [(0.5, 2.0, 0), (2.6, 4.0, 0), (5.0, 7.0, 1), (8.0, 9.5, 0)];

pub const MOCK_TEXT: [(f64, f64, &str); 3] =
    [(0.5, 4.0, "dia duit a chara"), (5.0, 7.0, "conas atá tú"), (8.0, 9.5, "tá mé go maith")];

/// Ten seconds: speaker 0 is a 300 + 600 Hz pair, speaker 1 a 2000 + 2600 Hz
/// pair, over a faint deterministic noise floor.
pub fn two_speaker_samples() -> Vec<f32> {
    let n = 10 * RATE as usize;
    let mut state: u32 = 0x2545_f491;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        state = state.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
        let noise = ((state >> 8) as f64 / (1u32 << 24) as f64 - 0.5) * 2e-3;
        let t = i as f64 / RATE as f64;
        let voiced = TURNS.iter().find(|(a, b, _)| (*a..*b).contains(&t));
        let v = match voiced {
            Some((_, _, 0)) => 0.3 * (2.0 * PI * 300.0 * t).sin() + 0.2 * (2.0 * PI * 600.0 * t).sin(),
            Some(_) => 0.3 * (2.0 * PI * 2000.0 * t).sin() + 0.2 * (2.0 * PI * 2600.0 * t).sin(),
            None => 0.0,
        };
        out.push((v + noise) as f32);
    }
    out
}

pub fn two_speaker_wav() -> Vec<u8> {
    encode_wav(&AudioBuffer::new(two_speaker_samples(), RATE).unwrap())
}

pub fn mock_table() -> MockTable {
    MockTable {
        spans: MOCK_TEXT.iter().map(|&(s, e, t)| MockSpan { start_s: s, end_s: e, text: t.into() }).collect(),
        ..Default::default()
    }
}

pub fn e2e_engines() -> Engines {
    Engines {
        detector: Arc::new(EnergyDetector::new(VadConfig::default())),
        embedder: Arc::new(SpectralEmbedder::new(SpectralConfig::default())),
        recogniser: Arc::new(EngineDescriptor::mock("mock", mock_table())),
        restorer: Arc::new(RestorerHandle::Identity),
        cluster: ClusterConfig::default(),
        merge: MergeConfig::default(),
    }
}

pub fn golden_srt() -> Vec<u8> {
    std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/two_speakers.srt")).unwrap()
}

const BOUNDARY: &str = "scribe-test-boundary";

pub fn upload_request(file_name: &str, bytes: &[u8]) -> Request<Body> {
    let mut body = Vec::new();
    body.extend_from_slice(
        format!(
            "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{file_name}\"\r\nContent-Type: audio/wav\r\n\r\n"
        )
        .as_bytes(),
    );
    body.extend_from_slice(bytes);
    body.extend_from_slice(format!("\r\n--{BOUNDARY}--\r\n").as_bytes());
    Request::builder()
        .method(Method::POST)
        .uri("/jobs")
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(body))
        .unwrap()
}

pub async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>) {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

pub async fn patch_json(app: &Router, uri: &str, json: serde_json::Value) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(Method::PATCH)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(json.to_string()))
        .unwrap();
    send(app, req).await
}

pub async fn upload(app: &Router, bytes: &[u8]) -> String {
    let (status, body) = send(app, upload_request("fixture.wav", bytes)).await;
    assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&body));
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    v["id"].as_str().unwrap().to_string()
}

/// Reads the whole event stream (it closes at a terminal state) and
/// decodes the `data:` lines.
pub async fn events(app: &Router, id: &str) -> Vec<ProgressEvent> {
    let (status, body) = get(app, &format!("/jobs/{id}/events")).await;
    assert_eq!(status, StatusCode::OK);
    String::from_utf8(body)
        .unwrap()
        .lines()
        .filter_map(|l| l.strip_prefix("data: ").or_else(|| l.strip_prefix("data:")))
        .map(|d| serde_json::from_str(d).unwrap())
        .collect()
}
