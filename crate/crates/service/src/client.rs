//! Blocking HTTP client for the enrollment server.

use std::time::Duration;

use eegauth_core::features::FeatureVector;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::server::{Health, UserList};
use crate::{AuthenticateRequest, Decision, EnrollRequest, EnrollResponse, ErrorBody, ServiceError};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request to {url} failed: {source}")]
    Transport {
        url: String,
        #[source]
        source: reqwest::Error,
    },
    #[error("server returned {status}: {error}")]
    Server { status: u16, error: ServiceError },
    #[error("unexpected response from {url}: {message}")]
    Decode { url: String, message: String },
}

pub struct Client {
    base: String,
    http: reqwest::blocking::Client,
}

impl Client {
    /// `timeout` bounds each request; enrollment takes up to the server's
    /// search budget, so it should exceed that.
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, ClientError> {
        let base = base_url.trim_end_matches('/').to_string();
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|source| ClientError::Transport {
                url: base.clone(),
                source,
            })?;
        Ok(Client { base, http })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/api/v1/{path}", self.base)
    }

    fn finish<T: DeserializeOwned>(url: String, resp: reqwest::blocking::Response) -> Result<T, ClientError> {
        let status = resp.status();
        let bytes = resp.bytes().map_err(|source| ClientError::Transport {
            url: url.clone(),
            source,
        })?;
        if status.is_success() {
            return serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode {
                url,
                message: e.to_string(),
            });
        }
        let error = match serde_json::from_slice::<ErrorBody>(&bytes) {
            Ok(body) => ServiceError::from_body(body),
            Err(_) => ServiceError::Internal(String::from_utf8_lossy(&bytes).into_owned()),
        };
        Err(ClientError::Server {
            status: status.as_u16(),
            error,
        })
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        let url = self.url(path);
        let resp = self.http.post(&url).json(body).send().map_err(|source| ClientError::Transport {
            url: url.clone(),
            source,
        })?;
        Self::finish(url, resp)
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let url = self.url(path);
        let resp = self.http.get(&url).send().map_err(|source| ClientError::Transport {
            url: url.clone(),
            source,
        })?;
        Self::finish(url, resp)
    }

    pub fn enroll(&self, req: &EnrollRequest) -> Result<EnrollResponse, ClientError> {
        let resp: EnrollResponse = self.post("enroll", req)?;
        resp.model.validate().map_err(|e| ClientError::Decode {
            url: self.url("enroll"),
            message: e.to_string(),
        })?;
        Ok(resp)
    }

    pub fn authenticate(&self, user_id: &str, instances: &[FeatureVector], threshold: f64) -> Result<Decision, ClientError> {
        self.post(
            "authenticate",
            &AuthenticateRequest {
                user_id: user_id.into(),
                instances: instances.to_vec(),
                threshold,
            },
        )
    }

    pub fn users(&self) -> Result<Vec<String>, ClientError> {
        self.get::<UserList>("users").map(|l| l.users)
    }

    pub fn health(&self) -> Result<Health, ClientError> {
        self.get("health")
    }
}
