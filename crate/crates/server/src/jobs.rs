//! Background jobs for engine work (source application, denoising).

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::Serialize;
use serde_json::Value;

use crate::error::ApiError;

const KEEP_FINISHED: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Succeeded,
    Failed,
    Cancelled,
}

impl JobState {
    pub fn is_finished(self) -> bool {
        self != JobState::Running
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobStatus {
    pub id: u64,
    pub kind: String,
    pub project: String,
    pub state: JobState,
    /// Kind-specific progress, e.g. the EM iteration and log-likelihood.
    pub progress: Option<Value>,
    pub result: Option<Value>,
    pub error: Option<Value>,
}

/// Handed to job bodies so they can report progress and notice
/// cancellation.
#[derive(Debug)]
pub struct JobCtx {
    cancel: AtomicBool,
    status: Mutex<JobStatus>,
}

impl JobCtx {
    /// A context nobody else observes, for work run in the foreground.
    pub fn detached(kind: &str) -> Arc<Self> {
        Arc::new(Self::new(0, kind, ""))
    }

    fn new(id: u64, kind: &str, project: &str) -> Self {
        JobCtx {
            cancel: AtomicBool::new(false),
            status: Mutex::new(JobStatus {
                id,
                kind: kind.to_string(),
                project: project.to_string(),
                state: JobState::Running,
                progress: None,
                result: None,
                error: None,
            }),
        }
    }

    pub fn is_cancelled(&self) -> bool {
        self.cancel.load(Ordering::Relaxed)
    }

    pub fn cancel(&self) {
        self.cancel.store(true, Ordering::Relaxed);
    }

    pub fn set_progress(&self, progress: Value) {
        self.lock().progress = Some(progress);
    }

    pub fn status(&self) -> JobStatus {
        self.lock().clone()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, JobStatus> {
        self.status.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn finish(&self, outcome: &Result<Value, ApiError>) {
        let mut s = self.lock();
        match outcome {
            Ok(v) => {
                s.state = JobState::Succeeded;
                s.result = Some(v.clone());
            }
            Err(e) => {
                s.state = if self.is_cancelled() {
                    JobState::Cancelled
                } else {
                    JobState::Failed
                };
                s.error = Some(e.body());
            }
        }
    }
}

#[derive(Debug, Default)]
pub struct Jobs {
    next: AtomicU64,
    jobs: Mutex<BTreeMap<u64, Arc<JobCtx>>>,
}

impl Jobs {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts `body` on the blocking pool and returns its id at once.
    pub fn spawn<F>(&self, kind: &str, project: &str, body: F) -> u64
    where
        F: FnOnce(&JobCtx) -> Result<Value, ApiError> + Send + 'static,
    {
        let id = self.next.fetch_add(1, Ordering::Relaxed) + 1;
        let ctx = Arc::new(JobCtx::new(id, kind, project));
        {
            let mut jobs = self.jobs.lock().unwrap_or_else(|e| e.into_inner());
            jobs.insert(id, ctx.clone());
            prune(&mut jobs);
        }
        tokio::task::spawn_blocking(move || {
            let outcome = body(&ctx);
            ctx.finish(&outcome);
        });
        id
    }

    pub fn get(&self, id: u64) -> Option<JobStatus> {
        let jobs = self.jobs.lock().unwrap_or_else(|e| e.into_inner());
        jobs.get(&id).map(|j| j.status())
    }

    /// Requests cancellation; finished jobs are unaffected.
    pub fn cancel(&self, id: u64) -> Option<JobStatus> {
        let jobs = self.jobs.lock().unwrap_or_else(|e| e.into_inner());
        let job = jobs.get(&id)?;
        if !job.status().state.is_finished() {
            job.cancel();
        }
        Some(job.status())
    }
}

fn prune(jobs: &mut BTreeMap<u64, Arc<JobCtx>>) {
    let finished: Vec<u64> = jobs
        .iter()
        .filter(|(_, j)| j.status().state.is_finished())
        .map(|(&id, _)| id)
        .collect();
    let excess = finished.len().saturating_sub(KEEP_FINISHED);
    for id in finished.into_iter().take(excess) {
        jobs.remove(&id);
    }
}

/// Runs `body` on the blocking pool and waits for it.
pub async fn run_blocking<F>(kind: &str, body: F) -> Result<Value, ApiError>
where
    F: FnOnce(&JobCtx) -> Result<Value, ApiError> + Send + 'static,
{
    let ctx = JobCtx::detached(kind);
    tokio::task::spawn_blocking(move || body(&ctx))
        .await
        .map_err(|e| ApiError::internal(format!("worker panicked: {e}")))?
}
