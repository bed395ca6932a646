//! Two-phase authentication service: a server that stores enrollment
//! features and trains per-user models, and the decision rule a terminal
//! applies to a fresh session with the model it received.

pub mod client;
pub mod server;
pub mod store;

use std::time::Instant;

use eegauth_core::autoselect::{select_model, SearchBudget, DEFAULT_BUDGET_S, DEFAULT_K_FOLDS};
use eegauth_core::classifiers::{AlgorithmId, HyperParams, TrainedModel};
use eegauth_core::dataset::{assemble_user_dataset, DatasetManifest, Label, DEFAULT_CLASS_SIZE};
use eegauth_core::features::{feature_names, FeatureVector};
use eegauth_core::{seed, Error as CoreError, ExecMode};
use serde::{Deserialize, Serialize};

pub use store::FeatureStore;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_SESSION_SIZE: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    /// Not enough other users stored yet; the caller's features were kept.
    #[error("enrollment unavailable: {0}")]
    EnrollmentUnavailable(String),
    /// The search budget ran out before any model was evaluated. Retryable.
    #[error("no model: {0}")]
    NoModel(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("empty session")]
    EmptySession,
    #[error("not found: {0}")]
    NotFound(String),
    #[error("storage: {0}")]
    Storage(String),
    #[error("internal: {0}")]
    Internal(String),
}

/// Error body on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::InvalidRequest(_) => "invalid_request",
            ServiceError::EnrollmentUnavailable(_) => "enrollment_unavailable",
            ServiceError::NoModel(_) => "no_model",
            ServiceError::Training(_) => "training_failed",
            ServiceError::Schema(_) => "schema_mismatch",
            ServiceError::EmptySession => "empty_session",
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Storage(_) => "storage",
            ServiceError::Internal(_) => "internal",
        }
    }

    pub fn http_status(&self) -> u16 {
        match self {
            ServiceError::InvalidRequest(_) | ServiceError::EmptySession => 400,
            ServiceError::NotFound(_) => 404,
            ServiceError::EnrollmentUnavailable(_) => 409,
            ServiceError::Schema(_) | ServiceError::Training(_) => 422,
            ServiceError::NoModel(_) => 503,
            ServiceError::Storage(_) | ServiceError::Internal(_) => 500,
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, ServiceError::NoModel(_))
    }

    pub fn body(&self) -> ErrorBody {
        let message = match self {
            ServiceError::InvalidRequest(m)
            | ServiceError::EnrollmentUnavailable(m)
            | ServiceError::NoModel(m)
            | ServiceError::Training(m)
            | ServiceError::Schema(m)
            | ServiceError::NotFound(m)
            | ServiceError::Storage(m)
            | ServiceError::Internal(m) => m.clone(),
            ServiceError::EmptySession => "session contains no instances".into(),
        };
        ErrorBody {
            code: self.code().into(),
            message,
        }
    }

    pub fn from_body(body: ErrorBody) -> Self {
        let m = body.message;
        match body.code.as_str() {
            "invalid_request" => ServiceError::InvalidRequest(m),
            "enrollment_unavailable" => ServiceError::EnrollmentUnavailable(m),
            "no_model" => ServiceError::NoModel(m),
            "training_failed" => ServiceError::Training(m),
            "schema_mismatch" => ServiceError::Schema(m),
            "empty_session" => ServiceError::EmptySession,
            "not_found" => ServiceError::NotFound(m),
            "storage" => ServiceError::Storage(m),
            "internal" => ServiceError::Internal(m),
            _ => ServiceError::Internal(format!("{}: {m}", body.code)),
        }
    }
}

impl From<CoreError> for ServiceError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::InsufficientPool { .. } => ServiceError::EnrollmentUnavailable(msg),
            CoreError::NoModel { .. } => ServiceError::NoModel(msg),
            CoreError::Schema(_) => ServiceError::Schema(msg),
            CoreError::DegenerateTraining(_) | CoreError::Data(_) => ServiceError::Training(msg),
            CoreError::Validation(_) | CoreError::HyperParams(_) => ServiceError::InvalidRequest(msg),
            CoreError::Io { .. } => ServiceError::Storage(msg),
            _ => ServiceError::Internal(msg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub budget_s: f64,
    pub k_folds: usize,
    pub server_seed: u64,
    /// Instances per enrollment, and impostors drawn per dataset.
    pub class_size: usize,
    pub max_evaluations: Option<usize>,
    /// Concurrent training jobs.
    pub workers: usize,
    pub serial: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            budget_s: DEFAULT_BUDGET_S,
            k_folds: DEFAULT_K_FOLDS,
            server_seed: 0,
            class_size: DEFAULT_CLASS_SIZE,
            max_evaluations: None,
            workers: 2,
            serial: false,
        }
    }
}

impl ServiceConfig {
    pub fn mode(&self) -> ExecMode {
        if self.serial {
            ExecMode::Serial
        } else {
            ExecMode::Parallel
        }
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        let bad = |f: &str, v: String| Err(ServiceError::InvalidRequest(format!("{f}: {v}")));
        if !(self.budget_s > 0.0 && self.budget_s.is_finite()) {
            return bad("budget_s", format!("must be positive, got {}", self.budget_s));
        }
        if self.k_folds < 2 {
            return bad("k_folds", format!("must be at least 2, got {}", self.k_folds));
        }
        if self.class_size < self.k_folds {
            return bad("class_size", format!("must be at least k_folds, got {}", self.class_size));
        }
        if self.max_evaluations == Some(0) {
            return bad("max_evaluations", "must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers", "must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrollRequest {
    pub user_id: String,
    pub instances: Vec<FeatureVector>,
    pub client_nonce: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub algorithm: AlgorithmId,
    pub params: HyperParams,
    pub cv_accuracy: f64,
    pub evaluations: usize,
    pub abandoned: usize,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrollResponse {
    pub user_id: String,
    pub model: TrainedModel,
    pub summary: SearchSummary,
    /// Which impostor sources went into the dataset; never the user.
    pub dataset: DatasetManifest,
    pub client_nonce: String,
    /// Server-side time from request receipt to response.
    pub elapsed_s: f64,
}

/// Seed of one enrollment, from the user, the client nonce and the
/// server's master seed.
pub fn enrollment_seed(server_seed: u64, user: &str, nonce: &str) -> u64 {
    seed::derive(server_seed, &["enroll", user, nonce])
}

/// Stores the user's features, then trains and returns their model. If
/// the store does not yet hold enough other users the features are kept
/// and [`ServiceError::EnrollmentUnavailable`] is returned.
pub fn enroll(req: &EnrollRequest, store: &FeatureStore, cfg: &ServiceConfig) -> Result<EnrollResponse, ServiceError> {
    let t0 = Instant::now();
    cfg.validate()?;
    store::validate_user_id(&req.user_id)?;
    if req.instances.len() != cfg.class_size {
        return Err(ServiceError::InvalidRequest(format!(
            "expected {} instances, got {}",
            cfg.class_size,
            req.instances.len()
        )));
    }
    store.put_user(&req.user_id, &req.instances)?;
    let own = store
        .get_user(&req.user_id)?
        .ok_or_else(|| ServiceError::Internal("stored features vanished".into()))?;
    let pool = store.get_pool(&req.user_id)?;
    if pool.len() < cfg.class_size {
        return Err(ServiceError::EnrollmentUnavailable(format!(
            "need {} instances from other users, store has {}",
            cfg.class_size,
            pool.len()
        )));
    }

    let s = enrollment_seed(cfg.server_seed, &req.user_id, &req.client_nonce);
    let ds = assemble_user_dataset(&req.user_id, &own, &pool, seed::derive(s, &["assemble"]))?;
    let manifest = ds.manifest();
    if manifest.impostor_sources.iter().any(|r| r.subject == req.user_id) {
        return Err(ServiceError::Internal(format!("impostor pool of {} contains the user", req.user_id)));
    }
    let mut budget = SearchBudget::new(cfg.budget_s, seed::derive(s, &["search"]));
    budget.max_evaluations = cfg.max_evaluations;
    let sel = select_model(&ds, &budget, cfg.k_folds, cfg.mode())?;
    store.put_model(&req.user_id, &sel.model)?;

    let chosen = sel.trace.chosen_entry();
    Ok(EnrollResponse {
        user_id: req.user_id.clone(),
        summary: SearchSummary {
            algorithm: chosen.algorithm,
            params: chosen.params,
            cv_accuracy: chosen.cv_accuracy,
            evaluations: sel.trace.entries.len(),
            abandoned: sel.trace.abandoned,
            elapsed_s: sel.trace.total_elapsed_s,
        },
        model: sel.model,
        dataset: manifest,
        client_nonce: req.client_nonce.clone(),
        elapsed_s: t0.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Grant,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub outcome: Outcome,
    pub genuine_fraction: f64,
    pub n_instances: usize,
    pub threshold: f64,
}

/// Classifies every instance of the session and grants access only if the
/// genuine fraction is strictly above `threshold`. Ties deny.
pub fn authenticate(model: &TrainedModel, session: &[FeatureVector], threshold: f64) -> Result<Decision, ServiceError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(ServiceError::InvalidRequest(format!("threshold must be in [0, 1], got {threshold}")));
    }
    if session.is_empty() {
        return Err(ServiceError::EmptySession);
    }
    model.check_feature_order(&feature_names())?;
    let mut genuine = 0usize;
    for f in session {
        if model.predict(f)? == Label::Genuine {
            genuine += 1;
        }
    }
    let fraction = genuine as f64 / session.len() as f64;
    Ok(Decision {
        outcome: if fraction > threshold { Outcome::Grant } else { Outcome::Deny },
        genuine_fraction: fraction,
        n_instances: session.len(),
        threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthenticateRequest {
    pub user_id: String,
    pub instances: Vec<FeatureVector>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

/// Server-side check against the user's stored model.
pub fn authenticate_stored(req: &AuthenticateRequest, store: &FeatureStore) -> Result<Decision, ServiceError> {
    let model = store
        .get_model(&req.user_id)?
        .ok_or_else(|| ServiceError::NotFound(format!("no model for user {}", req.user_id)))?;
    authenticate(&model, &req.instances, req.threshold)
}

#[cfg(test)]
mod tests;
