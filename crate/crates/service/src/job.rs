use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Uploaded,
    Converting,
    Detecting,
    Diarising,
    Recognising,
    Restoring,
    Done,
    Failed,
}

impl JobState {
    /// The success path, in order.
    pub const PIPELINE: [JobState; 7] = [
        JobState::Uploaded,
        JobState::Converting,
        JobState::Detecting,
        JobState::Diarising,
        JobState::Recognising,
        JobState::Restoring,
        JobState::Done,
    ];

    /// States that do work and report progress.
    pub const STAGES: [JobState; 5] =
        [JobState::Converting, JobState::Detecting, JobState::Diarising, JobState::Recognising, JobState::Restoring];

    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }

    pub fn is_stage(self) -> bool {
        Self::STAGES.contains(&self)
    }

    /// Position on the success path; `None` for `Failed`.
    pub fn rank(self) -> Option<usize> {
        Self::PIPELINE.iter().position(|&s| s == self)
    }

    pub fn next(self) -> Option<JobState> {
        self.rank().and_then(|r| Self::PIPELINE.get(r + 1).copied())
    }

    pub fn can_transition_to(self, to: JobState) -> bool {
        if self.is_terminal() {
            return false;
        }
        to == JobState::Failed || self.next() == Some(to)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JobState::Uploaded => "uploaded",
            JobState::Converting => "converting",
            JobState::Detecting => "detecting",
            JobState::Diarising => "diarising",
            JobState::Recognising => "recognising",
            JobState::Restoring => "restoring",
            JobState::Done => "done",
            JobState::Failed => "failed",
        }
    }
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JobError {
    #[error("cannot move from {from} to {to}")]
    InvalidTransition { from: JobState, to: JobState },
    #[error("progress for {stage} reported while job is {state}")]
    StageNotActive { stage: JobState, state: JobState },
    #[error("progress fraction {0} is not in [0, 1]")]
    InvalidFraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: Uuid,
    pub media_name: String,
    pub state: JobState,
    pub stage_progress: BTreeMap<JobState, f64>,
    pub error: Option<String>,
    pub created_at: DateTime<Utc>,
    /// Bumped on every change; events carry it so subscribers can drop
    /// anything older than a snapshot they already hold.
    pub version: u64,
}

impl Job {
    pub fn new(media_name: impl Into<String>) -> Self {
        Self {
            id: Uuid::new_v4(),
            media_name: media_name.into(),
            state: JobState::Uploaded,
            stage_progress: JobState::STAGES.iter().map(|&s| (s, 0.0)).collect(),
            error: None,
            created_at: Utc::now(),
            version: 0,
        }
    }

    pub fn advance(&mut self, to: JobState) -> Result<(), JobError> {
        if !self.state.can_transition_to(to) {
            return Err(JobError::InvalidTransition { from: self.state, to });
        }
        if to == JobState::Done {
            // A stage with nothing to do still counts as finished.
            for f in self.stage_progress.values_mut() {
                *f = 1.0;
            }
        }
        self.state = to;
        self.version += 1;
        Ok(())
    }

    pub fn fail(&mut self, message: impl Into<String>) -> Result<(), JobError> {
        self.advance(JobState::Failed)?;
        self.error = Some(message.into());
        Ok(())
    }

    /// Records progress for the active stage. Values below the stored one
    /// are ignored; returns whether anything changed.
    pub fn set_progress(&mut self, stage: JobState, fraction: f64) -> Result<bool, JobError> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(JobError::InvalidFraction(fraction));
        }
        if stage != self.state || !stage.is_stage() {
            return Err(JobError::StageNotActive { stage, state: self.state });
        }
        let slot = self.stage_progress.entry(stage).or_insert(0.0);
        if fraction <= *slot {
            return Ok(false);
        }
        *slot = fraction;
        self.version += 1;
        Ok(true)
    }

    /// Event describing the job as it stands.
    pub fn event(&self) -> ProgressEvent {
        let stage = self.state.is_stage().then_some(self.state);
        let fraction = match (stage, self.state) {
            (Some(s), _) => self.stage_progress.get(&s).copied().unwrap_or(0.0),
            (None, JobState::Done) => 1.0,
            _ => 0.0,
        };
        ProgressEvent { version: self.version, stage, fraction, state: self.state, error: self.error.clone() }
    }
}

/// One server-push update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressEvent {
    pub version: u64,
    pub stage: Option<JobState>,
    pub fraction: f64,
    pub state: JobState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Checks an event log: states follow the pipeline without skipping or
/// reversing, fractions never drop within a stage, and nothing follows a
/// terminal state.
pub fn check_event_log(events: &[ProgressEvent]) -> Result<(), String> {
    let mut prev: Option<&ProgressEvent> = None;
    for (i, e) in events.iter().enumerate() {
        if let Some(p) = prev {
            if p.state.is_terminal() {
                return Err(format!("event {i} follows terminal state {}", p.state));
            }
            if p.state == e.state {
                if e.fraction < p.fraction {
                    return Err(format!("event {i}: {} fraction fell from {} to {}", e.state, p.fraction, e.fraction));
                }
            } else if !p.state.can_transition_to(e.state) {
                return Err(format!("event {i}: {} -> {}", p.state, e.state));
            }
            if e.version <= p.version {
                return Err(format!("event {i}: version {} after {}", e.version, p.version));
            }
        }
        prev = Some(e);
    }
    Ok(())
}
