use std::time::{Duration, Instant};

use super::{
    encode_blocks, estimate_tokens, AnalystBackend, AnalystRequest, BackendError, Blocks, NavigatorBackend,
    NavigatorRequest, PlannerBackend, PlannerRequest, Reply, Usage,
};

/// HTTP adapter for an out-of-process model server.
///
/// Each call POSTs the labeled blocks as `text/plain` with `x-nexus-role` and
/// `x-nexus-seed` headers; the response body is the reply text. Servers may
/// report accounting through `x-tokens-in`, `x-tokens-out` and `x-infer-ms`;
/// otherwise tokens are estimated and inference time is the round trip.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    endpoint: String,
    identity: String,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(endpoint: impl Into<String>, identity: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            identity: identity.into(),
            agent,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn call(&self, role: &str, seed: u64, blocks: &Blocks<'_>) -> Result<Reply, BackendError> {
        let body = encode_blocks(blocks);
        let started = Instant::now();
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("content-type", "text/plain; charset=utf-8")
            .header("x-nexus-role", role)
            .header("x-nexus-seed", &seed.to_string())
            .send(body.as_str())
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let header = |name: &str| -> Option<u64> {
            resp.headers()
                .get(name)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse().ok())
        };
        let (tin, tout, ms) = (header("x-tokens-in"), header("x-tokens-out"), header("x-infer-ms"));
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let elapsed = started.elapsed().as_millis() as u64;
        Ok(Reply {
            usage: Usage {
                infer_ms: ms.unwrap_or(elapsed),
                tokens_in: tin.unwrap_or_else(|| estimate_tokens(&body)),
                tokens_out: tout.unwrap_or_else(|| estimate_tokens(&text)),
            },
            text,
        })
    }
}

impl PlannerBackend for RemoteBackend {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn plan(&self, request: &PlannerRequest<'_>) -> Result<Reply, BackendError> {
        self.call("planner", request.seed, &request.blocks())
    }
}

impl NavigatorBackend for RemoteBackend {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn next_move(&self, request: &NavigatorRequest<'_>) -> Result<Reply, BackendError> {
        self.call("navigator", request.seed, &request.blocks())
    }
}

impl AnalystBackend for RemoteBackend {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn analyze(&self, request: &AnalystRequest<'_>) -> Result<Reply, BackendError> {
        self.call("analyst", request.seed, &request.blocks())
    }
}
