//! The transcription pipeline and the workers that run it.
//!
//! Work is split between two worker roles fed by queues: media workers
//! convert, detect speech and diarise; recognition workers transcribe and
//! restore. Stage work runs on blocking threads.

use std::fmt::Display;
use std::sync::Arc;
use std::time::{Duration, Instant};

use scribe_core::asr::Recogniser;
use scribe_core::cpr::{restore, CprError, PlainInput, RestorerHandle, RichTranscript};
use scribe_core::diarise::{cluster, merge_adjacent, ClusterConfig, DiarisedSegment, MergeConfig, SpeakerEmbedder};
use scribe_core::media::{self, AudioBuffer};
use scribe_core::vad::SpeechDetector;
use tokio::sync::{mpsc, Mutex as AsyncMutex};
use uuid::Uuid;

use crate::events::EventHub;
use crate::job::{Job, JobError, JobState};
use crate::store::{BlobKind, Store, StoreError};
use crate::transcript::{Segment, TranscriptDoc};

/// Minimum spacing of journalled progress writes within a stage.
pub const PERSIST_INTERVAL: Duration = Duration::from_millis(100);

/// Capitalisation and punctuation restoration for one segment.
pub trait Restorer: Send + Sync {
    fn restore(&self, input: &PlainInput) -> Result<RichTranscript, CprError>;
}

impl Restorer for RestorerHandle {
    fn restore(&self, input: &PlainInput) -> Result<RichTranscript, CprError> {
        restore(input, self)
    }
}

#[derive(Clone)]
pub struct Engines {
    pub detector: Arc<dyn SpeechDetector>,
    pub embedder: Arc<dyn SpeakerEmbedder>,
    pub recogniser: Arc<dyn Recogniser>,
    pub restorer: Arc<dyn Restorer>,
    pub cluster: ClusterConfig,
    pub merge: MergeConfig,
}

/// What the media half hands to the recognition half.
pub struct MediaOutput {
    pub audio: AudioBuffer,
    pub segments: Vec<DiarisedSegment>,
}

struct StageFailure(String);

impl From<StoreError> for StageFailure {
    fn from(e: StoreError) -> Self {
        StageFailure(e.to_string())
    }
}

impl From<JobError> for StageFailure {
    fn from(e: JobError) -> Self {
        StageFailure(e.to_string())
    }
}

fn tagged(stage: JobState) -> impl Fn(&dyn Display) -> StageFailure {
    move |e| StageFailure(format!("{stage}: {e}"))
}

pub struct Pipeline {
    pub store: Arc<Store>,
    pub hub: Arc<EventHub>,
    pub engines: Engines,
}

struct Reporter<'a> {
    pipeline: &'a Pipeline,
    id: Uuid,
    stage: JobState,
    last_write: Instant,
}

impl Reporter<'_> {
    /// Records progress for the stage. Every call updates the in-memory
    /// snapshot and subscribers; the journal is written at most once per
    /// [`PERSIST_INTERVAL`], and always at 1.0.
    fn report(&mut self, fraction: f64) -> Result<(), StageFailure> {
        let persist = fraction >= 1.0 || self.last_write.elapsed() >= PERSIST_INTERVAL;
        let stage = self.stage;
        let (job, changed) = self.pipeline.store.update_job::<_, StageFailure>(self.id, persist, |j| {
            Ok(j.set_progress(stage, fraction.clamp(0.0, 1.0))?)
        })?;
        if persist {
            self.last_write = Instant::now();
        }
        if changed {
            self.pipeline.hub.publish(self.id, job.event());
        }
        Ok(())
    }
}

impl Pipeline {
    pub fn new(store: Arc<Store>, hub: Arc<EventHub>, engines: Engines) -> Self {
        Self { store, hub, engines }
    }

    fn enter(&self, id: Uuid, stage: JobState) -> Result<Reporter<'_>, StageFailure> {
        let (job, ()) = self.store.update_job::<_, StageFailure>(id, true, |j| Ok(j.advance(stage)?))?;
        self.hub.publish(id, job.event());
        Ok(Reporter { pipeline: self, id, stage, last_write: Instant::now() })
    }

    fn fail(&self, id: Uuid, StageFailure(msg): StageFailure) {
        let res = self.store.update_job::<_, StoreError>(id, true, |j: &mut Job| {
            // A job already terminal stays as it is.
            let _ = j.fail(msg.clone());
            Ok(())
        });
        match res {
            Ok((job, ())) => self.hub.publish(id, job.event()),
            Err(e) => tracing::error!(%id, "could not record failure {msg:?}: {e}"),
        }
    }

    /// Converting, detecting and diarising. On error the job is failed and
    /// `None` returned.
    pub fn run_media(&self, id: Uuid) -> Option<MediaOutput> {
        match self.media_stages(id) {
            Ok(out) => Some(out),
            Err(e) => {
                self.fail(id, e);
                None
            }
        }
    }

    /// Recognising and restoring, then done.
    pub fn run_recognition(&self, id: Uuid, input: MediaOutput) {
        if let Err(e) = self.recognition_stages(id, input) {
            self.fail(id, e);
        }
    }

    /// Both halves on the calling thread.
    pub fn run(&self, id: Uuid) {
        if let Some(out) = self.run_media(id) {
            self.run_recognition(id, out);
        }
    }

    fn media_stages(&self, id: Uuid) -> Result<MediaOutput, StageFailure> {
        let mut r = self.enter(id, JobState::Converting)?;
        let err = tagged(JobState::Converting);
        let upload = self.store.blob(id, BlobKind::Upload).map_err(|e| err(&e))?;
        let audio = media::ingest(&upload).map_err(|e| err(&e))?;
        self.store.put_blob(id, BlobKind::Audio, &media::encode_wav(&audio)).map_err(|e| err(&e))?;
        r.report(1.0)?;

        let mut r = self.enter(id, JobState::Detecting)?;
        let err = tagged(JobState::Detecting);
        let speech = self.engines.detector.detect(&audio).map_err(|e| err(&e))?;
        r.report(1.0)?;

        let mut r = self.enter(id, JobState::Diarising)?;
        let err = tagged(JobState::Diarising);
        let mut embeddings = Vec::with_capacity(speech.len());
        for (i, seg) in speech.iter().enumerate() {
            embeddings.push(self.engines.embedder.embed(&audio, seg).map_err(|e| err(&e))?);
            r.report((i + 1) as f64 / (speech.len() + 1) as f64)?;
        }
        let segments = if speech.is_empty() {
            Vec::new()
        } else {
            let labels = cluster(&embeddings, &self.engines.cluster).map_err(|e| err(&e))?;
            let labelled: Vec<DiarisedSegment> = speech
                .iter()
                .zip(labels)
                .map(|(&segment, speaker_id)| DiarisedSegment { segment, speaker_id })
                .collect();
            merge_adjacent(&labelled, &self.engines.merge).map_err(|e| err(&e))?
        };
        r.report(1.0)?;
        Ok(MediaOutput { audio, segments })
    }

    fn recognition_stages(&self, id: Uuid, input: MediaOutput) -> Result<(), StageFailure> {
        let MediaOutput { audio, segments } = input;
        let n = segments.len();

        let mut r = self.enter(id, JobState::Recognising)?;
        let err = tagged(JobState::Recognising);
        let mut raw = Vec::with_capacity(n);
        for (i, s) in segments.iter().enumerate() {
            let hyp = self.engines.recogniser.recognise(&audio, &s.segment).map_err(|e| err(&e))?;
            raw.push(PlainInput::new(hyp.text).map_err(|e| err(&e))?);
            r.report((i + 1) as f64 / n as f64)?;
        }
        r.report(1.0)?;

        let mut r = self.enter(id, JobState::Restoring)?;
        let err = tagged(JobState::Restoring);
        let mut doc_segments = Vec::with_capacity(n);
        for (i, (s, plain)) in segments.iter().zip(raw).enumerate() {
            let rich = self.engines.restorer.restore(&plain).map_err(|e| err(&e))?;
            doc_segments.push(Segment {
                seg_id: i as u32,
                start_s: s.segment.start_s,
                end_s: s.segment.end_s,
                speaker_id: s.speaker_id,
                raw_text: plain.as_str().to_string(),
                rich_text: rich.into_string(),
                edited: false,
            });
            r.report((i + 1) as f64 / n as f64)?;
        }
        r.report(1.0)?;

        let doc = TranscriptDoc::new(doc_segments).map_err(|e| err(&e))?;
        let job = self.store.finish(id, doc)?;
        self.hub.publish(id, job.event());
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Workers {
    pub media: usize,
    pub recognition: usize,
}

impl Default for Workers {
    fn default() -> Self {
        Self { media: 2, recognition: 2 }
    }
}

/// Handle to the running workers; dropping it lets them drain and exit.
#[derive(Clone)]
pub struct Scheduler {
    media_tx: mpsc::UnboundedSender<Uuid>,
}

impl Scheduler {
    /// Spawns the workers on the current tokio runtime.
    pub fn start(pipeline: Arc<Pipeline>, workers: Workers) -> Self {
        let (media_tx, media_rx) = mpsc::unbounded_channel::<Uuid>();
        let (asr_tx, asr_rx) = mpsc::unbounded_channel::<(Uuid, MediaOutput)>();
        let media_rx = Arc::new(AsyncMutex::new(media_rx));
        let asr_rx = Arc::new(AsyncMutex::new(asr_rx));

        for _ in 0..workers.media.max(1) {
            let (rx, tx, p) = (media_rx.clone(), asr_tx.clone(), pipeline.clone());
            tokio::spawn(async move {
                loop {
                    let Some(id) = rx.lock().await.recv().await else { break };
                    let p = p.clone();
                    match tokio::task::spawn_blocking(move || p.run_media(id)).await {
                        Ok(Some(out)) => {
                            let _ = tx.send((id, out));
                        }
                        Ok(None) => {}
                        Err(e) => tracing::error!(%id, "media worker panicked: {e}"),
                    }
                }
            });
        }
        drop(asr_tx);
        for _ in 0..workers.recognition.max(1) {
            let (rx, p) = (asr_rx.clone(), pipeline.clone());
            tokio::spawn(async move {
                loop {
                    let Some((id, out)) = rx.lock().await.recv().await else { break };
                    let p = p.clone();
                    if let Err(e) = tokio::task::spawn_blocking(move || p.run_recognition(id, out)).await {
                        tracing::error!(%id, "recognition worker panicked: {e}");
                    }
                }
            });
        }
        Self { media_tx }
    }

    pub fn submit(&self, id: Uuid) -> bool {
        self.media_tx.send(id).is_ok()
    }
}
