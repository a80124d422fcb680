use super::wire::{
    DepthReply, GenerateBody, HealthReply, ImageBody, ImageReply, LatentBody, LatentReply, ResidualBody,
    ResidualReply, WireTensor,
};
use super::{check_response, Guidance, GuidanceError, GuidanceRequest, GuidanceResponse, Result};
use crate::Tensor3;
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::time::{Duration, Instant};
use ureq::Agent;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);
/// Generous cap: a decoded 1024² image is ~17 MB of base64.
const BODY_LIMIT: u64 = 1 << 30;

/// HTTP client for the guidance sidecar.
#[derive(Debug, Clone)]
pub struct RemoteGuidance {
    endpoint: String,
    timeout: Duration,
    retries: usize,
    agent: Agent,
}

impl RemoteGuidance {
    pub fn new(endpoint: &str, timeout: Duration, retries: usize) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            timeout,
            retries,
            agent,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn url(&self, path: &str) -> String {
        format!("{}/v1/{path}", self.endpoint)
    }

    fn map_transport(&self, e: ureq::Error) -> GuidanceError {
        match e {
            ureq::Error::Timeout(_) => GuidanceError::Timeout(self.timeout),
            ureq::Error::Io(e) if e.kind() == std::io::ErrorKind::TimedOut => GuidanceError::Timeout(self.timeout),
            ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
                GuidanceError::Unreachable(format!("{}: {e}", self.endpoint))
            }
            ureq::Error::BadUri(u) => GuidanceError::Unreachable(format!("bad endpoint {u}")),
            other => GuidanceError::Protocol(other.to_string()),
        }
    }

    fn read_reply<R: DeserializeOwned>(&self, mut resp: ureq::http::Response<ureq::Body>) -> Result<R> {
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            let message = serde_json::from_str::<serde_json::Value>(&body)
                .ok()
                .and_then(|v| v.get("error").or(v.get("detail")).map(|m| m.to_string()))
                .unwrap_or(body);
            return Err(GuidanceError::Server { status, message });
        }
        resp.body_mut()
            .with_config()
            .limit(BODY_LIMIT)
            .read_json()
            .map_err(|e| match e {
                ureq::Error::Json(e) => GuidanceError::Protocol(format!("malformed reply: {e}")),
                other => self.map_transport(other),
            })
    }

    /// Runs `op`, retrying transient failures up to `retries` times.
    fn with_retries<T>(&self, op: impl Fn() -> Result<T>) -> Result<T> {
        let mut attempt = 0;
        loop {
            match op() {
                Err(e) if e.is_transient() && attempt < self.retries => attempt += 1,
                other => return other,
            }
        }
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R> {
        let url = self.url(path);
        self.with_retries(|| {
            let resp = self.agent.post(&url).send_json(body).map_err(|e| self.map_transport(e))?;
            self.read_reply(resp)
        })
    }
}

impl Guidance for RemoteGuidance {
    fn call(&self, req: &GuidanceRequest) -> Result<GuidanceResponse> {
        req.validate()?;
        let start = Instant::now();
        let (wire, model): (WireTensor, Option<String>) = match req {
            GuidanceRequest::Residual {
                z,
                mask,
                prompt,
                tau,
                seed,
                ..
            } => {
                let body = ResidualBody {
                    z: WireTensor::from_tensor(z),
                    mask: WireTensor::from_mask(mask),
                    prompt: prompt.clone(),
                    tau: *tau,
                    seed: *seed,
                };
                let r: ResidualReply = self.post("residual", &body)?;
                (r.residual, r.model)
            }
            GuidanceRequest::Generate { prompt, seed, size } => {
                let body = GenerateBody {
                    prompt: prompt.clone(),
                    seed: *seed,
                    size: *size,
                };
                let r: ImageReply = self.post("generate", &body)?;
                (r.image, r.model)
            }
            GuidanceRequest::Depth { image } => {
                let r: DepthReply = self.post("depth", &ImageBody {
                    image: WireTensor::from_tensor(image),
                })?;
                (r.depth, r.model)
            }
            GuidanceRequest::Encode { image } => {
                let r: LatentReply = self.post("encode", &ImageBody {
                    image: WireTensor::from_tensor(image),
                })?;
                (r.z, r.model)
            }
            GuidanceRequest::Decode { z } => {
                let r: ImageReply = self.post("decode", &LatentBody {
                    z: WireTensor::from_tensor(z),
                })?;
                (r.image, r.model)
            }
        };
        let tensor: Tensor3 = wire.to_tensor()?;
        check_response(req, &tensor)?;
        Ok(GuidanceResponse {
            tensor,
            model: model.unwrap_or_else(|| "remote".to_string()),
            wall_ms: start.elapsed().as_millis() as u64,
        })
    }

    fn health(&self) -> Result<Vec<String>> {
        let url = self.url("health");
        self.with_retries(|| {
            let resp = self.agent.get(&url).call().map_err(|e| self.map_transport(e))?;
            let r: HealthReply = self.read_reply(resp)?;
            Ok(r.models)
        })
    }

    fn mode(&self) -> &'static str {
        "remote"
    }
}
