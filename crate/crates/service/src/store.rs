//! Job storage: an in-memory map backed by an append-only JSON-lines
//! journal. Every persisted change is journalled before it becomes
//! visible. Opening a store replays the journal and rewrites it compacted.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::job::{Job, JobState};
use crate::transcript::TranscriptDoc;

const JOURNAL: &str = "journal.jsonl";
const BLOBS: &str = "blobs";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage failure: {0}")]
    StorageFailure(#[from] io::Error),
    #[error("journal line {line} is corrupt: {msg}")]
    Corrupt { line: usize, msg: String },
    #[error("no job {0}")]
    NotFound(Uuid),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlobKind {
    /// The file as uploaded.
    Upload,
    /// 16 kHz mono PCM16 WAV produced by conversion.
    Audio,
}

impl BlobKind {
    fn suffix(self) -> &'static str {
        match self {
            BlobKind::Upload => "upload",
            BlobKind::Audio => "wav",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub job: Job,
    pub transcript: Option<TranscriptDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Entry {
    Job { job: Job },
    Transcript { id: Uuid, doc: TranscriptDoc },
}

#[derive(Default)]
struct Inner {
    records: HashMap<Uuid, Record>,
    journal: Option<File>,
    mem_blobs: HashMap<(Uuid, BlobKind), Vec<u8>>,
}

impl Inner {
    fn append(&mut self, entry: &Entry) -> io::Result<()> {
        if let Some(f) = self.journal.as_mut() {
            let mut line = serde_json::to_vec(entry).map_err(io::Error::other)?;
            line.push(b'\n');
            f.write_all(&line)?;
            f.sync_data()?;
        }
        Ok(())
    }
}

pub struct Store {
    dir: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl Store {
    /// A store that keeps nothing on disk.
    pub fn in_memory() -> Self {
        Self { dir: None, inner: Mutex::new(Inner::default()) }
    }

    /// Opens (or creates) a store in `dir`. Jobs that were mid-pipeline
    /// when the journal ends are marked failed; their ids are returned.
    pub fn open(dir: impl AsRef<Path>) -> Result<(Self, Vec<Uuid>), StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join(BLOBS))?;
        let path = dir.join(JOURNAL);
        let mut records = replay(&path)?;

        let mut interrupted = Vec::new();
        for rec in records.values_mut() {
            if !rec.job.state.is_terminal() {
                let from = rec.job.state;
                rec.job.fail(format!("{from}: interrupted by service restart")).expect("non-terminal job can fail");
                interrupted.push(rec.job.id);
            }
        }
        interrupted.sort();

        let tmp = dir.join(format!("{JOURNAL}.tmp"));
        {
            let mut out = File::create(&tmp)?;
            let mut ids: Vec<&Uuid> = records.keys().collect();
            ids.sort_by_key(|id| (records[*id].job.created_at, **id));
            for id in ids {
                let rec = &records[id];
                writeln!(out, "{}", serde_json::to_string(&Entry::Job { job: rec.job.clone() }).map_err(io::Error::other)?)?;
                if let Some(doc) = &rec.transcript {
                    let e = Entry::Transcript { id: *id, doc: doc.clone() };
                    writeln!(out, "{}", serde_json::to_string(&e).map_err(io::Error::other)?)?;
                }
            }
            out.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        let journal = OpenOptions::new().append(true).open(&path)?;
        let inner = Inner { records, journal: Some(journal), mem_blobs: HashMap::new() };
        Ok((Self { dir: Some(dir), inner: Mutex::new(inner) }, interrupted))
    }

    fn blob_file(&self, id: Uuid, kind: BlobKind) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(BLOBS).join(format!("{id}.{}", kind.suffix())))
    }

    /// Where a blob lives, for references in exported manifests.
    pub fn blob_ref(&self, id: Uuid, kind: BlobKind) -> String {
        match self.blob_file(id, kind) {
            Some(p) => p.display().to_string(),
            None => format!("{id}.{}", kind.suffix()),
        }
    }

    pub fn put_blob(&self, id: Uuid, kind: BlobKind, bytes: &[u8]) -> Result<(), StoreError> {
        match self.blob_file(id, kind) {
            Some(p) => {
                let tmp = p.with_extension("tmp");
                fs::write(&tmp, bytes)?;
                fs::rename(tmp, p)?;
            }
            None => {
                self.inner.lock().mem_blobs.insert((id, kind), bytes.to_vec());
            }
        }
        Ok(())
    }

    pub fn blob(&self, id: Uuid, kind: BlobKind) -> Result<Vec<u8>, StoreError> {
        match self.blob_file(id, kind) {
            Some(p) => Ok(fs::read(p)?),
            None => self.inner.lock().mem_blobs.get(&(id, kind)).cloned().ok_or(StoreError::NotFound(id)),
        }
    }

    /// Stores the upload, then the job.
    pub fn create(&self, job: Job, upload: &[u8]) -> Result<(), StoreError> {
        self.put_blob(job.id, BlobKind::Upload, upload)?;
        let mut inner = self.inner.lock();
        inner.append(&Entry::Job { job: job.clone() })?;
        inner.records.insert(job.id, Record { job, transcript: None });
        Ok(())
    }

    pub fn record(&self, id: Uuid) -> Option<Record> {
        self.inner.lock().records.get(&id).cloned()
    }

    pub fn job(&self, id: Uuid) -> Option<Job> {
        self.inner.lock().records.get(&id).map(|r| r.job.clone())
    }

    pub fn job_ids(&self) -> Vec<Uuid> {
        self.inner.lock().records.keys().copied().collect()
    }

    /// Runs `f` on a copy of the job and commits the copy if `f` succeeds.
    /// With `persist` false only the in-memory snapshot changes; the next
    /// persisted write carries it to the journal.
    pub fn update_job<T, E>(&self, id: Uuid, persist: bool, f: impl FnOnce(&mut Job) -> Result<T, E>) -> Result<(Job, T), E>
    where
        E: From<StoreError>,
    {
        let mut inner = self.inner.lock();
        let mut job = inner.records.get(&id).ok_or(StoreError::NotFound(id))?.job.clone();
        let out = f(&mut job)?;
        if persist {
            inner.append(&Entry::Job { job: job.clone() }).map_err(StoreError::from)?;
        }
        inner.records.get_mut(&id).expect("checked above").job = job.clone();
        Ok((job, out))
    }

    /// Same as [`Store::update_job`] for the transcript, which must exist.
    pub fn update_transcript<T, E>(&self, id: Uuid, f: impl FnOnce(&Job, &mut TranscriptDoc) -> Result<T, E>) -> Result<(TranscriptDoc, T), E>
    where
        E: From<StoreError>,
    {
        let mut inner = self.inner.lock();
        let rec = inner.records.get(&id).ok_or(StoreError::NotFound(id))?;
        let mut doc = rec.transcript.clone().unwrap_or_default();
        let out = f(&rec.job, &mut doc)?;
        inner.append(&Entry::Transcript { id, doc: doc.clone() }).map_err(StoreError::from)?;
        inner.records.get_mut(&id).expect("checked above").transcript = Some(doc.clone());
        Ok((doc, out))
    }

    /// Stores the finished transcript and moves the job to done in one
    /// locked step, so readers never see `done` without a transcript.
    pub fn finish(&self, id: Uuid, doc: TranscriptDoc) -> Result<Job, StoreError> {
        let mut inner = self.inner.lock();
        let mut job = inner.records.get(&id).ok_or(StoreError::NotFound(id))?.job.clone();
        job.advance(JobState::Done).map_err(|e| io::Error::other(e.to_string()))?;
        inner.append(&Entry::Transcript { id, doc: doc.clone() })?;
        inner.append(&Entry::Job { job: job.clone() })?;
        let rec = inner.records.get_mut(&id).expect("checked above");
        rec.job = job.clone();
        rec.transcript = Some(doc);
        Ok(job)
    }
}

fn replay(path: &Path) -> Result<HashMap<Uuid, Record>, StoreError> {
    let mut records: HashMap<Uuid, Record> = HashMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(records),
        Err(e) => return Err(e.into()),
    };
    let lines: Vec<String> = BufReader::new(file).lines().collect::<io::Result<_>>()?;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: Entry = match serde_json::from_str(line) {
            Ok(e) => e,
            // A torn final write from a crash.
            Err(_) if i + 1 == lines.len() => break,
            Err(e) => return Err(StoreError::Corrupt { line: i + 1, msg: e.to_string() }),
        };
        match entry {
            Entry::Job { job } => {
                records
                    .entry(job.id)
                    .and_modify(|r| r.job = job.clone())
                    .or_insert(Record { job, transcript: None });
            }
            Entry::Transcript { id, doc } => match records.get_mut(&id) {
                Some(r) => r.transcript = Some(doc),
                None => return Err(StoreError::Corrupt { line: i + 1, msg: format!("transcript for unknown job {id}") }),
            },
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::Segment;

    fn doc() -> TranscriptDoc {
        TranscriptDoc::new(vec![Segment {
            seg_id: 0,
            start_s: 0.0,
            end_s: 1.0,
            speaker_id: 0,
            raw_text: "slán".into(),
            rich_text: "Slán.".into(),
            edited: false,
        }])
        .unwrap()
    }

    fn run_to_done(store: &Store, id: Uuid) {
        for &s in &JobState::STAGES {
            store.update_job::<_, StoreError>(id, true, |j| Ok(j.advance(s).unwrap())).unwrap();
        }
        store.finish(id, doc()).unwrap();
    }

    #[test]
    fn replay_restores_state_and_fails_interrupted() {
        let dir = tempfile::tempdir().unwrap();
        let (done_id, running_id);
        {
            let (store, interrupted) = Store::open(dir.path()).unwrap();
            assert!(interrupted.is_empty());
            let a = Job::new("a.wav");
            let b = Job::new("b.wav");
            done_id = a.id;
            running_id = b.id;
            store.create(a, b"RIFF").unwrap();
            store.create(b, b"RIFF").unwrap();
            run_to_done(&store, done_id);
            store.update_job::<_, StoreError>(running_id, true, |j| Ok(j.advance(JobState::Converting).unwrap())).unwrap();
            // Not persisted: lost on restart.
            store
                .update_job::<_, StoreError>(running_id, false, |j| Ok(j.set_progress(JobState::Converting, 0.5).unwrap()))
                .unwrap();
        }
        let (store, interrupted) = Store::open(dir.path()).unwrap();
        assert_eq!(interrupted, vec![running_id]);
        let done = store.record(done_id).unwrap();
        assert_eq!(done.job.state, JobState::Done);
        assert_eq!(done.transcript, Some(doc()));
        let failed = store.job(running_id).unwrap();
        assert_eq!(failed.state, JobState::Failed);
        assert_eq!(failed.stage_progress[&JobState::Converting], 0.0);
        assert!(failed.error.unwrap().starts_with("converting:"));
        assert_eq!(store.blob(done_id, BlobKind::Upload).unwrap(), b"RIFF");

        // Compaction leaves one line per job plus one per transcript.
        let text = fs::read_to_string(dir.path().join(JOURNAL)).unwrap();
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn torn_tail_is_ignored_but_inner_corruption_is_not() {
        let dir = tempfile::tempdir().unwrap();
        let id = {
            let (store, _) = Store::open(dir.path()).unwrap();
            let job = Job::new("a.wav");
            let id = job.id;
            store.create(job, b"x").unwrap();
            run_to_done(&store, id);
            id
        };
        let path = dir.path().join(JOURNAL);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"type\":\"job\",\"jo").unwrap();
        drop(f);
        let (store, _) = Store::open(dir.path()).unwrap();
        assert_eq!(store.job(id).unwrap().state, JobState::Done);
        drop(store);

        let mut text = fs::read_to_string(&path).unwrap();
        text.insert_str(0, "garbage\n");
        fs::write(&path, text).unwrap();
        assert!(matches!(Store::open(dir.path()), Err(StoreError::Corrupt { line: 1, .. })));
    }

    #[test]
    fn failed_update_commits_nothing() {
        let store = Store::in_memory();
        let job = Job::new("a.wav");
        let id = job.id;
        store.create(job.clone(), b"x").unwrap();
        let r: Result<(Job, ()), StoreError> = store.update_job(id, true, |j| {
            j.media_name = "changed".into();
            Err(StoreError::NotFound(id))
        });
        assert!(r.is_err());
        assert_eq!(store.job(id).unwrap(), job);
        assert!(matches!(store.update_job::<(), StoreError>(Uuid::nil(), true, |_| Ok(())), Err(StoreError::NotFound(_))));
    }

    #[test]
    fn memory_blobs() {
        let store = Store::in_memory();
        let id = Uuid::new_v4();
        assert!(store.blob(id, BlobKind::Audio).is_err());
        store.put_blob(id, BlobKind::Audio, b"abc").unwrap();
        assert_eq!(store.blob(id, BlobKind::Audio).unwrap(), b"abc");
        assert_eq!(store.blob_ref(id, BlobKind::Audio), format!("{id}.wav"));
    }
}
