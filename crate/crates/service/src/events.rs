//! Fan-out of progress events to any number of subscribers.

use std::collections::HashMap;
use std::sync::Arc;

use futures::Stream;
use parking_lot::Mutex;
use tokio::sync::broadcast::{self, error::RecvError};
use uuid::Uuid;

use crate::job::ProgressEvent;
use crate::store::Store;

const CHANNEL_CAPACITY: usize = 256;

#[derive(Default)]
pub struct EventHub {
    channels: Mutex<HashMap<Uuid, broadcast::Sender<ProgressEvent>>>,
}

impl EventHub {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn subscribe(&self, id: Uuid) -> broadcast::Receiver<ProgressEvent> {
        self.channels
            .lock()
            .entry(id)
            .or_insert_with(|| broadcast::channel(CHANNEL_CAPACITY).0)
            .subscribe()
    }

    /// Sends to current subscribers. A terminal event closes the channel
    /// once delivered.
    pub fn publish(&self, id: Uuid, event: ProgressEvent) {
        let mut channels = self.channels.lock();
        let terminal = event.state.is_terminal();
        if let Some(tx) = channels.get(&id) {
            let _ = tx.send(event);
        }
        if terminal {
            channels.remove(&id);
        }
    }

    /// Drops the channel if nobody listens any more.
    fn release(&self, id: Uuid) {
        let mut channels = self.channels.lock();
        if channels.get(&id).is_some_and(|tx| tx.receiver_count() == 0) {
            channels.remove(&id);
        }
    }

    pub fn channel_count(&self) -> usize {
        self.channels.lock().len()
    }
}

struct Cursor {
    rx: broadcast::Receiver<ProgressEvent>,
    store: Arc<Store>,
    hub: Arc<EventHub>,
    id: Uuid,
    pending: Option<ProgressEvent>,
    last: Option<u64>,
    finished: bool,
    closed: bool,
}

impl Cursor {
    fn newer(&self, e: &ProgressEvent) -> bool {
        self.last.is_none_or(|l| e.version > l)
    }

    fn resnapshot(&mut self) {
        if let Some(job) = self.store.job(self.id) {
            let e = job.event();
            if self.newer(&e) {
                self.pending = Some(e);
            }
        }
    }
}

impl Drop for Cursor {
    fn drop(&mut self) {
        // Receiver is dropped after this body, so count it out by hand.
        let mut channels = self.hub.channels.lock();
        if channels.get(&self.id).is_some_and(|tx| tx.receiver_count() <= 1) {
            channels.remove(&self.id);
        }
    }
}

/// Current snapshot, then live events newer than it, ending after a
/// terminal state. A subscriber that falls behind gets a fresh snapshot in
/// place of the events it missed. `None` if the job does not exist.
pub fn progress_stream(store: Arc<Store>, hub: Arc<EventHub>, id: Uuid) -> Option<impl Stream<Item = ProgressEvent>> {
    // Subscribe before reading the snapshot so nothing falls in between.
    let rx = hub.subscribe(id);
    let Some(job) = store.job(id) else {
        drop(rx);
        hub.release(id);
        return None;
    };
    let cursor = Cursor {
        rx,
        store,
        hub,
        id,
        pending: Some(job.event()),
        last: None,
        finished: false,
        closed: false,
    };
    Some(futures::stream::unfold(cursor, |mut c| async move {
        loop {
            if c.finished {
                return None;
            }
            if let Some(e) = c.pending.take() {
                c.last = Some(e.version);
                c.finished = e.state.is_terminal();
                return Some((e, c));
            }
            if c.closed {
                return None;
            }
            match c.rx.recv().await {
                Ok(e) if c.newer(&e) => c.pending = Some(e),
                Ok(_) => {}
                Err(RecvError::Lagged(_)) => c.resnapshot(),
                Err(RecvError::Closed) => {
                    c.closed = true;
                    c.resnapshot();
                }
            }
        }
    }))
}
