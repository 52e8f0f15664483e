//! HTTP client for an external promptable-segmenter service.
//!
//! Wire protocol: `POST {endpoint}/v1/segment` with
//! `{"image_png_base64": ..., "prompt": {"type": "point", "x", "y"} | {"type": "box", "x_min", "y_min", "x_max", "y_max"}}`,
//! answered by `200 {"mask_png_base64": ...}` holding a single-channel 8-bit
//! 0/255 PNG of the image's dimensions.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use log::warn;
use serde::{Deserialize, Serialize};

use super::{BackendError, Prompt, PromptQuery, PromptableSegmenter};
use crate::raster::{decode_mask_png, encode_image_png, BinaryMask};

pub const SEGMENT_PATH: &str = "/v1/segment";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRequest {
    pub image_png_base64: String,
    pub prompt: WirePrompt,
}

pub type WirePrompt = Prompt;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireMaskResponse {
    pub mask_png_base64: String,
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct InFlight {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.cv.notify_one();
    }
}

enum Attempt {
    Retryable(String),
    Fatal(BackendError),
}

pub struct RemoteBackend {
    endpoint: String,
    agent: ureq::Agent,
    retries: u32,
    in_flight: InFlight,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("endpoint", &self.endpoint)
            .field("retries", &self.retries)
            .finish()
    }
}

impl RemoteBackend {
    pub fn new(endpoint: impl Into<String>, timeout: Duration, retries: u32, max_in_flight: usize) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            agent: config.into(),
            retries,
            in_flight: InFlight::new(max_in_flight),
        }
    }

    pub fn url(&self) -> String {
        format!("{}{}", self.endpoint, SEGMENT_PATH)
    }

    fn attempt(&self, url: &str, body: &WireRequest, label: &str) -> Result<BinaryMask, Attempt> {
        let mut resp = self
            .agent
            .post(url)
            .send_json(body)
            .map_err(|e| Attempt::Retryable(e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            let msg = format!("HTTP {status}: {}", text.trim());
            return if status >= 500 {
                Err(Attempt::Retryable(msg))
            } else {
                Err(Attempt::Fatal(BackendError::Protocol {
                    field: "status".into(),
                    message: msg,
                }))
            };
        }
        let parsed: WireMaskResponse = resp.body_mut().read_json().map_err(|e| {
            Attempt::Fatal(BackendError::Protocol {
                field: "body".into(),
                message: e.to_string(),
            })
        })?;
        let bytes = BASE64.decode(parsed.mask_png_base64.as_bytes()).map_err(|e| {
            Attempt::Fatal(BackendError::Protocol {
                field: "mask_png_base64".into(),
                message: e.to_string(),
            })
        })?;
        decode_mask_png(&bytes, label).map_err(|e| {
            Attempt::Fatal(BackendError::Protocol {
                field: "mask_png_base64".into(),
                message: e.to_string(),
            })
        })
    }
}

impl PromptableSegmenter for RemoteBackend {
    fn id(&self) -> &str {
        "remote"
    }

    fn segment_raw(&self, query: &PromptQuery<'_>) -> Result<BinaryMask, BackendError> {
        let body = WireRequest {
            image_png_base64: BASE64.encode(encode_image_png(query.image)?),
            prompt: query.prompt,
        };
        let url = self.url();
        let label = format!("response from {url}");
        let attempts = self.retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            let _permit = self.in_flight.acquire();
            match self.attempt(&url, &body, &label) {
                Ok(mask) => return Ok(mask),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retryable(msg)) => {
                    if attempt < attempts {
                        warn!("remote backend attempt {attempt}/{attempts} failed: {msg}");
                    }
                    last = msg;
                }
            }
        }
        Err(BackendError::Unavailable {
            attempts,
            message: last,
        })
    }
}
