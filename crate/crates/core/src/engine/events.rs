use std::cmp::Ordering;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum EventKind {
    DownloadComplete,
    /// Buffer reaches zero; stale unless `epoch` is current.
    BufferDrain { epoch: u64 },
    PlaybackStart,
    PlaybackResume,
    /// A scheduled request goes out; stale unless `token` is current.
    SchedulerWakeup { token: u64 },
}

impl EventKind {
    /// Order among events at the same instant.
    pub(crate) fn priority(self) -> u8 {
        match self {
            EventKind::DownloadComplete => 0,
            EventKind::BufferDrain { .. } => 1,
            EventKind::PlaybackStart | EventKind::PlaybackResume => 2,
            EventKind::SchedulerWakeup { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Event {
    pub time: f64,
    pub kind: EventKind,
    /// Insertion counter, the final tie-break.
    pub seq: u64,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.priority().cmp(&other.kind.priority()))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}
