//! Client-side contract tests for the remote backend against an in-process
//! fake of the segmentation service.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde_json::{json, Value};
use sqa_core::backend::{self, BackendError, PromptableSegmenter, ReferenceBackend, RemoteBackend, SEGMENT_PATH};
use sqa_core::raster::{decode_image_png, encode_mask_png};
use sqa_core::scoring::score_sample;
use sqa_core::{BinaryMask, BoxPrompt, Image, PointPrompt, Prompt, PromptQuery, ScoringConfig, SegmentationMap};
use tiny_http::{Header, Response, Server};

/// What the fake answers for the n-th request (0-based).
type Handler = dyn Fn(usize, &Value) -> (u16, String) + Send + Sync;

struct FakeService {
    server: Arc<Server>,
    thread: Option<JoinHandle<()>>,
    hits: Arc<AtomicUsize>,
    seen: Arc<Mutex<Vec<(String, String, Value)>>>,
}

impl FakeService {
    fn start(handler: Box<Handler>) -> Self {
        let server = Arc::new(Server::http("127.0.0.1:0").expect("bind"));
        let hits = Arc::new(AtomicUsize::new(0));
        let seen = Arc::new(Mutex::new(Vec::new()));
        let thread = {
            let server = server.clone();
            let hits = hits.clone();
            let seen = seen.clone();
            std::thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    let mut body = String::new();
                    req.as_reader().read_to_string(&mut body).unwrap();
                    let value: Value = serde_json::from_str(&body).unwrap_or(Value::Null);
                    let n = hits.fetch_add(1, Ordering::SeqCst);
                    seen.lock()
                        .unwrap()
                        .push((req.method().to_string(), req.url().to_string(), value.clone()));
                    let (status, text) = handler(n, &value);
                    let header = Header::from_bytes("Content-Type", "application/json").unwrap();
                    let _ = req.respond(Response::from_string(text).with_status_code(status).with_header(header));
                }
            })
        };
        Self {
            server,
            thread: Some(thread),
            hits,
            seen,
        }
    }

    fn endpoint(&self) -> String {
        format!("http://{}", self.server.server_addr().to_ip().unwrap())
    }

    fn client(&self, retries: u32) -> RemoteBackend {
        RemoteBackend::new(self.endpoint(), Duration::from_secs(5), retries, 4)
    }

    fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for FakeService {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn mask_body(mask: &BinaryMask) -> String {
    json!({ "mask_png_base64": BASE64.encode(encode_mask_png(mask).unwrap()) }).to_string()
}

fn parse_prompt(body: &Value) -> Prompt {
    serde_json::from_value(body["prompt"].clone()).expect("prompt")
}

fn decode_request_image(body: &Value) -> Image {
    let bytes = BASE64.decode(body["image_png_base64"].as_str().unwrap()).unwrap();
    decode_image_png(&bytes, "request").unwrap()
}

/// A service that runs the reference segmenter on whatever it is sent.
fn reference_service() -> FakeService {
    FakeService::start(Box::new(|_, body| {
        let image = decode_request_image(body);
        let query = PromptQuery {
            image: &image,
            prompt: parse_prompt(body),
            context: None,
        };
        let mask = ReferenceBackend::new(12).segment_raw(&query).unwrap();
        (200, mask_body(&mask))
    }))
}

fn scene() -> (Image, SegmentationMap) {
    let disk = |cx: i64, cy: i64, r: i64| move |x: u32, y: u32| (x as i64 - cx).pow(2) + (y as i64 - cy).pow(2) <= r * r;
    let a = disk(8, 8, 5);
    let b = disk(22, 20, 6);
    let px = (0..32 * 28)
        .map(|i| {
            let (x, y) = (i % 32, i / 32);
            if a(x, y) || b(x, y) {
                200
            } else {
                40
            }
        })
        .collect();
    let image = Image::gray(32, 28, px).unwrap();
    let pred = SegmentationMap::new(vec![
        BinaryMask::from_fn(32, 28, a),
        BinaryMask::from_fn(32, 28, |x, y| b(x, y) && x < 26),
    ])
    .unwrap();
    (image, pred)
}

#[test]
fn request_is_bit_exact_wire_shape() {
    let svc = reference_service();
    let client = svc.client(0);
    let (image, _) = scene();
    backend::segment_point(&client, &image, PointPrompt { x: 8, y: 7 }, None).unwrap();
    backend::segment_box(
        &client,
        &image,
        BoxPrompt {
            x_min: 16,
            y_min: 14,
            x_max: 28,
            y_max: 26,
        },
        None,
    )
    .unwrap();

    let seen = svc.seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    for (method, url, _) in seen.iter() {
        assert_eq!(method, "POST");
        assert_eq!(url, SEGMENT_PATH);
    }
    let keys = |v: &Value| {
        let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
        k.sort();
        k
    };
    assert_eq!(keys(&seen[0].2), ["image_png_base64", "prompt"]);
    assert_eq!(seen[0].2["prompt"], json!({"type": "point", "x": 8, "y": 7}));
    assert_eq!(
        seen[1].2["prompt"],
        json!({"type": "box", "x_min": 16, "y_min": 14, "x_max": 28, "y_max": 26})
    );
    let sent = decode_request_image(&seen[0].2);
    assert_eq!(sent.dims(), image.dims());
    assert_eq!(sent.pixels(), image.pixels());
}

#[test]
fn golden_round_trip_matches_local_reference() {
    let svc = reference_service();
    let client = svc.client(0);
    let (image, pred) = scene();
    let cfg = ScoringConfig::default();
    let remote = score_sample("golden", &image, &pred, &client, &cfg).unwrap();
    let local = score_sample("golden", &image, &pred, &ReferenceBackend::new(12), &cfg).unwrap();
    assert_eq!(remote, local);
    assert_eq!(svc.hits(), 2 * remote.num_objects);
}

#[test]
fn server_errors_are_retried_until_recovery() {
    let svc = FakeService::start(Box::new(|n, body| {
        if n < 2 {
            (500, "{\"error\":\"warming up\"}".into())
        } else {
            let image = decode_request_image(body);
            let (w, h) = image.dims();
            (200, mask_body(&BinaryMask::full(w, h)))
        }
    }));
    let (image, _) = scene();
    let got = backend::segment_point(&svc.client(2), &image, PointPrompt { x: 1, y: 1 }, None).unwrap();
    assert_eq!(got.mask.area(), 32 * 28);
    assert_eq!(svc.hits(), 3);
}

#[test]
fn persistent_server_errors_exhaust_retries() {
    let svc = FakeService::start(Box::new(|_, _| (503, "busy".into())));
    let (image, _) = scene();
    let err = backend::segment_point(&svc.client(2), &image, PointPrompt { x: 1, y: 1 }, None).unwrap_err();
    assert!(matches!(err, BackendError::Unavailable { attempts: 3, .. }), "{err}");
    assert_eq!(svc.hits(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let svc = FakeService::start(Box::new(|_, _| (400, "{\"error\":\"bad prompt\"}".into())));
    let (image, _) = scene();
    let err = backend::segment_point(&svc.client(3), &image, PointPrompt { x: 1, y: 1 }, None).unwrap_err();
    assert!(matches!(err, BackendError::Protocol { .. }), "{err}");
    assert_eq!(svc.hits(), 1);
}

#[test]
fn wrong_size_mask_violates_dimension_law() {
    let svc = FakeService::start(Box::new(|_, _| (200, mask_body(&BinaryMask::full(4, 4)))));
    let (image, _) = scene();
    let err = backend::segment_point(&svc.client(0), &image, PointPrompt { x: 1, y: 1 }, None).unwrap_err();
    assert!(matches!(err, BackendError::DimensionLaw { .. }), "{err}");
}

#[test]
fn malformed_bodies_are_protocol_errors() {
    let bodies = [
        "not json".to_string(),
        json!({"mask": "AAAA"}).to_string(),
        json!({"mask_png_base64": "%%%"}).to_string(),
        json!({"mask_png_base64": BASE64.encode(b"not a png")}).to_string(),
    ];
    for body in bodies {
        let svc = FakeService::start(Box::new(move |_, _| (200, body.clone())));
        let (image, _) = scene();
        let err = backend::segment_point(&svc.client(2), &image, PointPrompt { x: 1, y: 1 }, None).unwrap_err();
        assert!(matches!(err, BackendError::Protocol { .. }), "{err}");
        assert_eq!(svc.hits(), 1);
    }
}

#[test]
fn non_binary_mask_values_are_rejected() {
    let svc = FakeService::start(Box::new(|_, body| {
        let (w, h) = decode_request_image(body).dims();
        let gray = Image::filled(w, h, 128);
        let png = sqa_core::raster::encode_image_png(&gray).unwrap();
        (200, json!({ "mask_png_base64": BASE64.encode(png) }).to_string())
    }));
    let (image, _) = scene();
    let err = backend::segment_point(&svc.client(0), &image, PointPrompt { x: 1, y: 1 }, None).unwrap_err();
    assert!(matches!(err, BackendError::Protocol { .. }), "{err}");
}

#[test]
fn failed_call_does_not_affect_later_calls() {
    let svc = FakeService::start(Box::new(|n, body| {
        if n == 0 {
            return (200, "garbage".into());
        }
        let image = decode_request_image(body);
        let query = PromptQuery {
            image: &image,
            prompt: parse_prompt(body),
            context: None,
        };
        (200, mask_body(&ReferenceBackend::new(12).segment_raw(&query).unwrap()))
    }));
    let client = svc.client(0);
    let (image, _) = scene();
    let p = PointPrompt { x: 8, y: 8 };
    assert!(backend::segment_point(&client, &image, p, None).is_err());
    let first = backend::segment_point(&client, &image, p, None).unwrap();
    let second = backend::segment_point(&client, &image, p, None).unwrap();
    assert_eq!(first.mask, second.mask);
    let local = backend::segment_point(&ReferenceBackend::new(12), &image, p, None).unwrap();
    assert_eq!(first.mask, local.mask);
}

#[test]
fn concurrent_clients_share_one_backend() {
    let svc = reference_service();
    let client = Arc::new(svc.client(1));
    let (image, _) = scene();
    let expected = backend::segment_point(&ReferenceBackend::new(12), &image, PointPrompt { x: 22, y: 20 }, None)
        .unwrap()
        .mask;
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let client = client.clone();
            let image = image.clone();
            std::thread::spawn(move || {
                backend::segment_point(client.as_ref(), &image, PointPrompt { x: 22, y: 20 }, None)
                    .unwrap()
                    .mask
            })
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), expected);
    }
    assert_eq!(svc.hits(), 8);
}
