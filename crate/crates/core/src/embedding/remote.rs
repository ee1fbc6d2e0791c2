use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};

pub const EMBED_URL_ENV: &str = "CONTEXTJOIN_EMBED_URL";

/// Largest batch the embedding service accepts per request.
const MAX_BATCH: usize = 256;

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f32>>,
    dims: usize,
}

#[derive(Deserialize)]
struct Health {
    #[serde(default)]
    status: Option<String>,
    dims: usize,
    #[serde(default)]
    model: Option<String>,
}

/// Client for an HTTP service speaking the `/embed` protocol.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    base_url: String,
    dims: usize,
    model: Option<String>,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    /// Asks the service's `/health` endpoint for its dimensionality.
    pub fn connect(base_url: &str, timeout: Duration) -> Result<Self> {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        let base_url = base_url.trim_end_matches('/').to_owned();
        let health: Health = agent
            .get(&format!("{base_url}/health"))
            .call()
            .map_err(unavailable)?
            .into_json()
            .map_err(|e| Error::ProviderUnavailable(format!("bad /health response: {e}")))?;
        if let Some(status) = health.status.filter(|s| s != "ok") {
            return Err(Error::ProviderUnavailable(format!("service reports status `{status}`")));
        }
        if health.dims == 0 {
            return Err(Error::ProviderUnavailable("service reports 0 dimensions".into()));
        }
        Ok(Self {
            base_url,
            dims: health.dims,
            model: health.model,
            agent,
        })
    }

    /// Connects to `$CONTEXTJOIN_EMBED_URL`, if set.
    pub fn from_env(timeout: Duration) -> Option<Result<Self>> {
        std::env::var(EMBED_URL_ENV)
            .ok()
            .filter(|u| !u.is_empty())
            .map(|url| Self::connect(&url, timeout))
    }

    fn post(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let response: EmbedResponse = self
            .agent
            .post(&format!("{}/embed", self.base_url))
            .send_json(EmbedRequest { texts })
            .map_err(unavailable)?
            .into_json()
            .map_err(|e| Error::ProviderUnavailable(format!("bad /embed response: {e}")))?;
        if response.dims != self.dims {
            return Err(Error::Dimension {
                expected: self.dims,
                actual: response.dims,
            });
        }
        if response.embeddings.len() != texts.len() {
            return Err(Error::ProviderUnavailable(format!(
                "service returned {} embeddings for {} texts",
                response.embeddings.len(),
                texts.len()
            )));
        }
        response
            .embeddings
            .into_iter()
            .map(|v| {
                if v.len() != self.dims {
                    return Err(Error::Dimension {
                        expected: self.dims,
                        actual: v.len(),
                    });
                }
                let components: Vec<f64> = v.into_iter().map(f64::from).collect();
                Ok(EmbeddingVector::normalized(&components))
            })
            .collect()
    }
}

fn unavailable(e: ureq::Error) -> Error {
    match e {
        ureq::Error::Status(code, response) => Error::ProviderUnavailable(format!(
            "HTTP {code}: {}",
            response.into_string().unwrap_or_default()
        )),
        ureq::Error::Transport(t) => Error::ProviderUnavailable(t.to_string()),
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn id(&self) -> String {
        match &self.model {
            Some(model) => format!("remote:{model}-{}", self.dims),
            None => format!("remote-{}", self.dims),
        }
    }

    fn dims(&self) -> usize {
        self.dims
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(MAX_BATCH) {
            out.extend(self.post(chunk)?);
        }
        Ok(out)
    }
}
