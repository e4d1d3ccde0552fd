//! Transcription job service: storage, pipeline workers, progress events
//! and the HTTP API.

pub mod config;
pub mod events;
pub mod export;
pub mod http;
pub mod job;
pub mod pipeline;
pub mod store;
pub mod transcript;

use std::sync::Arc;

use futures::Stream;
use scribe_core::ssl::TrainingManifest;
use thiserror::Error;
use uuid::Uuid;

use crate::events::{progress_stream, EventHub};
use crate::export::{ExportError, ExportFormat};
use crate::job::{Job, JobState, ProgressEvent};
use crate::pipeline::{Engines, Pipeline, Scheduler, Workers};
use crate::store::{BlobKind, Store, StoreError};
use crate::transcript::{EditOp, TranscriptDoc, TranscriptError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("no job {0}")]
    NotFound(Uuid),
    #[error("upload is empty")]
    EmptyUpload,
    #[error("job is {0}, not done")]
    NotReady(JobState),
    #[error("job queue is closed")]
    QueueClosed,
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error(transparent)]
    Storage(StoreError),
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(id) => ServiceError::NotFound(id),
            other => ServiceError::Storage(other),
        }
    }
}

pub struct Service {
    store: Arc<Store>,
    hub: Arc<EventHub>,
    scheduler: Scheduler,
}

impl Service {
    /// Starts workers on the current tokio runtime.
    pub fn start(store: Store, engines: Engines, workers: Workers) -> Arc<Self> {
        let store = Arc::new(store);
        let hub = Arc::new(EventHub::new());
        let pipeline = Arc::new(Pipeline::new(store.clone(), hub.clone(), engines));
        let scheduler = Scheduler::start(pipeline, workers);
        Arc::new(Self { store, hub, scheduler })
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn hub(&self) -> &Arc<EventHub> {
        &self.hub
    }

    /// Persists the upload as a new job and queues it.
    pub fn create_job(&self, media_name: &str, upload: &[u8]) -> Result<Uuid, ServiceError> {
        if upload.is_empty() {
            return Err(ServiceError::EmptyUpload);
        }
        let job = Job::new(media_name);
        let id = job.id;
        self.store.create(job, upload)?;
        if !self.scheduler.submit(id) {
            return Err(ServiceError::QueueClosed);
        }
        Ok(id)
    }

    pub fn job(&self, id: Uuid) -> Result<Job, ServiceError> {
        self.store.job(id).ok_or(ServiceError::NotFound(id))
    }

    pub fn transcript(&self, id: Uuid) -> Result<TranscriptDoc, ServiceError> {
        let rec = self.store.record(id).ok_or(ServiceError::NotFound(id))?;
        match rec.transcript {
            Some(doc) if rec.job.state == JobState::Done => Ok(doc),
            _ => Err(ServiceError::NotReady(rec.job.state)),
        }
    }

    pub fn edit(&self, id: Uuid, seg_id: u32, op: &EditOp) -> Result<TranscriptDoc, ServiceError> {
        let (doc, ()) = self.store.update_transcript::<_, ServiceError>(id, |job, doc| {
            if job.state != JobState::Done {
                return Err(ServiceError::NotReady(job.state));
            }
            Ok(doc.apply(seg_id, op)?)
        })?;
        Ok(doc)
    }

    pub fn export(&self, id: Uuid, format: ExportFormat) -> Result<Vec<u8>, ServiceError> {
        Ok(export::export(&self.transcript(id)?, format))
    }

    pub fn corrections(&self, id: Uuid) -> Result<TrainingManifest, ServiceError> {
        let doc = self.transcript(id)?;
        let audio = self.store.blob_ref(id, BlobKind::Audio);
        Ok(export::corrections(&id.to_string(), &audio, &doc)?)
    }

    pub fn events(&self, id: Uuid) -> Result<impl Stream<Item = ProgressEvent> + Send + 'static, ServiceError> {
        progress_stream(self.store.clone(), self.hub.clone(), id).ok_or(ServiceError::NotFound(id))
    }
}
