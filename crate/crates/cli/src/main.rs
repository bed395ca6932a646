//! `eegauth`: synthetic cohorts, feature extraction, cohort evaluation and
//! the enrollment server with its client commands.

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use eegauth_core::classifiers::TrainedModel;
use eegauth_core::dataset::{self, Instance};
use eegauth_core::features::FeatureVector;
use eegauth_core::pipeline::{self, EvalConfig, ExtractConfig};
use eegauth_core::signal::{self, io as sigio};
use eegauth_core::synth::{self, CohortSpec};
use eegauth_core::ExecMode;
use eegauth_service::client::{Client, ClientError};
use eegauth_service::server;
use eegauth_service::{authenticate, EnrollRequest, FeatureStore, Outcome, ServiceConfig, DEFAULT_SESSION_SIZE};

const EXIT_ERROR: u8 = 1;
const EXIT_DENY: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "eegauth", version, about = "EEG band-power authentication toolkit")]
struct Cli {
    /// JSON object of flag values for the subcommand (keys are flag names).
    /// Flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Run every data-parallel stage sequentially.
    #[arg(long, global = true)]
    serial: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a seeded synthetic cohort of recordings.
    SynthCohort(SynthArgs),
    /// Filter, segment and featurise every recording of a directory.
    ExtractFeatures(ExtractArgs),
    /// Per-user model search and per-user report over a feature table.
    EvaluateCohort(EvaluateArgs),
    /// Run the enrollment server.
    Serve(ServeArgs),
    /// Upload a user's features and save the model the server returns.
    Enroll(EnrollArgs),
    /// Decide grant or deny for a session. Exit 0 grants, 2 denies, 1 is an error.
    Authenticate(AuthArgs),
}

#[derive(Args)]
#[command(args_override_self = true)]
struct SynthArgs {
    #[arg(long, default_value_t = 15)]
    subjects: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Spread of subject signatures; 0 makes every subject identical.
    #[arg(long, default_value_t = 1.0)]
    separability: f64,
    /// Relative per-recording jitter of band powers.
    #[arg(long, default_value_t = 0.1)]
    jitter: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_floor: f64,
    /// Recording length in seconds.
    #[arg(long, default_value_t = 30.0)]
    duration: f64,
    #[arg(long, default_value_t = signal::DEFAULT_SAMPLE_RATE_HZ)]
    sample_rate: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct ExtractArgs {
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    #[arg(long, default_value_t = pipeline::DEFAULT_SEGMENTS)]
    segments: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct EvaluateArgs {
    #[arg(long)]
    features: PathBuf,
    /// Search budget per user, seconds.
    #[arg(long, default_value_t = 60.0)]
    budget: f64,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stop each search after this many evaluations (reproducible runs).
    #[arg(long)]
    max_evals: Option<usize>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct ServeArgs {
    #[arg(long, env = "EEGAUTH_STORE", value_name = "DIR")]
    store: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value_t = 60.0)]
    budget: f64,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_evals: Option<usize>,
    /// Enrollment size, and impostors drawn per dataset.
    #[arg(long, default_value_t = dataset::DEFAULT_CLASS_SIZE)]
    class_size: usize,
    /// Concurrent training jobs.
    #[arg(long, default_value_t = 2)]
    workers: usize,
    /// Feature table to load into the store before serving, one user per subject.
    #[arg(long, value_name = "FILE")]
    import: Option<PathBuf>,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct EnrollArgs {
    #[arg(long, value_name = "URL")]
    server: String,
    #[arg(long)]
    user: String,
    /// Feature table; the rows whose subject is `--user` are uploaded.
    #[arg(long)]
    features: PathBuf,
    /// Client nonce; together with the user and the server seed it fixes
    /// the enrollment's randomness.
    #[arg(long, default_value = "0")]
    nonce: String,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// Request timeout, seconds.
    #[arg(long, default_value_t = 600)]
    timeout: u64,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct AuthArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Use only the rows of this subject.
    #[arg(long)]
    subject: Option<String>,
    /// Session size: the first N rows are classified.
    #[arg(long, default_value_t = DEFAULT_SESSION_SIZE)]
    n: usize,
    #[arg(long, default_value_t = eegauth_service::DEFAULT_THRESHOLD)]
    threshold: f64,
}

/// Inserts the config file's flags right after the subcommand name, so
/// anything typed on the command line overrides them.
fn merge_config(args: Vec<String>) -> Result<Vec<String>> {
    let mut path = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().ok_or_else(|| anyhow!("--config needs a file"))?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing config {path}"))?;
    let obj = value
        .as_object()
        .ok_or_else(|| anyhow!("config {path}: expected a JSON object of flags"))?;
    let mut injected = Vec::new();
    for (key, v) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        match v {
            serde_json::Value::Bool(true) => injected.push(flag),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::String(s) => injected.extend([flag, s.clone()]),
            serde_json::Value::Number(n) => injected.extend([flag, n.to_string()]),
            _ => bail!("config {path}: field {key} must be a string, number or boolean"),
        }
    }
    let names = ["synth-cohort", "extract-features", "evaluate-cohort", "serve", "enroll", "authenticate"];
    let Some(pos) = rest.iter().position(|a| names.contains(&a.as_str())) else {
        return Ok(rest);
    };
    rest.splice(pos + 1..pos + 1, injected);
    Ok(rest)
}

fn mode(serial: bool) -> ExecMode {
    if serial {
        ExecMode::Serial
    } else {
        ExecMode::Parallel
    }
}

fn synth_cohort(a: &SynthArgs, serial: bool) -> Result<u8> {
    let spec = CohortSpec {
        n_subjects: a.subjects,
        duration_s: a.duration,
        sample_rate_hz: a.sample_rate,
        separability: a.separability,
        intra_jitter: a.jitter,
        noise_floor: a.noise_floor,
        seed: a.seed,
    };
    if let Err(e) = spec.validate() {
        let flags = [
            ("n_subjects", "--subjects"),
            ("duration_s", "--duration"),
            ("sample_rate_hz", "--sample-rate"),
            ("separability", "--separability"),
            ("intra_jitter", "--jitter"),
            ("noise_floor", "--noise-floor"),
        ];
        let msg = e.to_string();
        let flag = flags.iter().find(|(f, _)| msg.contains(f)).map_or("config", |(_, flag)| flag);
        bail!("invalid {flag}: {msg}");
    }
    let members = synth::make_cohort(&spec, mode(serial))?;
    synth::write_cohort(&a.out, &spec, &members)?;
    println!("wrote {} recordings to {}", members.len(), a.out.display());
    Ok(0)
}

fn extract_features(a: &ExtractArgs, serial: bool) -> Result<u8> {
    if a.segments == 0 {
        bail!("invalid --segments: must be at least 1");
    }
    let recs = sigio::read_recordings_dir(&a.input)?;
    let cfg = ExtractConfig {
        n_segments: a.segments,
        seed: a.seed,
        ..ExtractConfig::default()
    };
    let instances = pipeline::extract_cohort(&recs, &cfg, mode(serial))?;
    dataset::save_features_csv(&instances, &a.out)?;
    println!("wrote {} rows for {} subjects to {}", instances.len(), recs.len(), a.out.display());
    Ok(0)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn evaluate(a: &EvaluateArgs, serial: bool) -> Result<u8> {
    if !(a.budget > 0.0 && a.budget.is_finite()) {
        bail!("invalid --budget: must be positive, got {}", a.budget);
    }
    if a.folds < 2 {
        bail!("invalid --folds: must be at least 2, got {}", a.folds);
    }
    if a.max_evals == Some(0) {
        bail!("invalid --max-evals: must be at least 1");
    }
    let instances = dataset::load_features_csv(&a.features)?;
    let cfg = EvalConfig {
        budget_s: a.budget,
        k_folds: a.folds,
        seed: a.seed,
        max_evaluations: a.max_evals,
    };
    let run = pipeline::evaluate_cohort(&instances, &cfg, mode(serial))?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut csv = Vec::new();
    run.write_csv(&mut csv)?;
    write_file(&a.out.join("cohort_report.csv"), &csv)?;
    write_file(&a.out.join("stats.json"), &(serde_json::to_vec_pretty(&run.stats)?))?;
    write_file(&a.out.join("run.json"), &(serde_json::to_vec_pretty(&run)?))?;

    for o in &run.outcomes {
        match (&o.error, &o.algorithm) {
            (Some(e), _) => println!("{}: failed: {e}", o.user),
            (None, Some(alg)) => println!(
                "{}: {alg} cv_accuracy {:.4} after {} evaluations",
                o.user,
                o.cv_accuracy.unwrap_or(f64::NAN),
                o.evaluations
            ),
            _ => {}
        }
    }
    if let Some(r) = &run.report {
        println!(
            "mean accuracy {:.4} (sd {:.4}), tpr {:.4}, fpr {:.4}",
            r.mean.accuracy, r.sd.accuracy, r.mean.tpr, r.mean.fpr
        );
    }
    if let Some(e) = &run.stats_error {
        println!("statistics skipped: {e}");
    }
    if run.failures() > 0 {
        eprintln!("{} of {} users failed", run.failures(), run.outcomes.len());
        return Ok(EXIT_PARTIAL);
    }
    Ok(0)
}

fn serve(a: &ServeArgs, serial: bool) -> Result<u8> {
    let cfg = ServiceConfig {
        budget_s: a.budget,
        k_folds: a.folds,
        server_seed: a.seed,
        class_size: a.class_size,
        max_evaluations: a.max_evals,
        workers: a.workers,
        serial,
    };
    cfg.validate()?;
    let store = FeatureStore::open(&a.store)?;
    if let Some(path) = &a.import {
        let instances = dataset::load_features_csv(path)?;
        let users = store.import_instances(&instances)?;
        println!("imported {} users from {}", users.len(), path.display());
    }
    server::run(SocketAddr::new(a.host, a.port), Arc::new(store), cfg, |addr| {
        println!("listening on http://{addr}");
        let _ = std::io::stdout().flush();
    })?;
    Ok(0)
}

fn user_rows(path: &Path, subject: Option<&str>) -> Result<Vec<Instance>> {
    let mut rows = dataset::load_features_csv(path)?;
    if let Some(s) = subject {
        rows.retain(|r| r.source_subject == s);
        if rows.is_empty() {
            bail!("{}: no rows for subject {s}", path.display());
        }
    }
    Ok(rows)
}

fn enroll(a: &EnrollArgs) -> Result<u8> {
    let mut rows = user_rows(&a.features, Some(&a.user))?;
    rows.sort_by_key(|r| r.segment_index);
    let req = EnrollRequest {
        user_id: a.user.clone(),
        instances: rows.iter().map(|r| r.features).collect(),
        client_nonce: a.nonce.clone(),
    };
    let client = Client::new(&a.server, Duration::from_secs(a.timeout))?;
    let resp = match client.enroll(&req) {
        Ok(r) => r,
        Err(ClientError::Server { error, .. }) if error.is_retryable() => {
            bail!("{error} (retry with a larger server budget)")
        }
        Err(e) => return Err(e.into()),
    };
    resp.model.save(&a.out)?;
    let summary = serde_json::json!({
        "user_id": resp.user_id,
        "model": a.out,
        "summary": resp.summary,
        "impostor_instances": resp.dataset.impostor_sources.len(),
        "elapsed_s": resp.elapsed_s,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(0)
}

fn authenticate_cmd(a: &AuthArgs) -> Result<u8> {
    let model = TrainedModel::load(&a.model)?;
    let rows = user_rows(&a.features, a.subject.as_deref())?;
    let session: Vec<FeatureVector> = rows.iter().take(a.n).map(|r| r.features).collect();
    let decision = authenticate(&model, &session, a.threshold)?;
    println!("{}", serde_json::to_string(&decision)?);
    Ok(match decision.outcome {
        Outcome::Grant => 0,
        Outcome::Deny => EXIT_DENY,
    })
}

fn run(cli: Cli) -> Result<u8> {
    let serial = cli.serial;
    match &cli.cmd {
        Cmd::SynthCohort(a) => synth_cohort(a, serial),
        Cmd::ExtractFeatures(a) => extract_features(a, serial),
        Cmd::EvaluateCohort(a) => evaluate(a, serial),
        Cmd::Serve(a) => serve(a, serial),
        Cmd::Enroll(a) => enroll(a),
        Cmd::Authenticate(a) => authenticate_cmd(a),
    }
}

fn main() -> ExitCode {
    let args = match merge_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_ERROR);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
