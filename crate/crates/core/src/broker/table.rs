// Licensed under the Apache-2.0 license

use std::collections::{BTreeMap, BTreeSet};

use crate::mqtt::TopicFilter;

/// Broker-assigned identifier for one live connection.
pub type SessionId = u64;

/// Filter to subscriber mapping. Empty entries are removed eagerly, so a
/// disconnected session leaves nothing behind.
#[derive(Debug, Default)]
pub struct SubscriptionTable {
    entries: BTreeMap<TopicFilter, BTreeSet<SessionId>>,
}

impl SubscriptionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn subscribe(&mut self, session: SessionId, filter: TopicFilter) {
        self.entries.entry(filter).or_default().insert(session);
    }

    pub fn unsubscribe(&mut self, session: SessionId, filter: &TopicFilter) {
        if let Some(set) = self.entries.get_mut(filter) {
            set.remove(&session);
            if set.is_empty() {
                self.entries.remove(filter);
            }
        }
    }

    pub fn remove_session(&mut self, session: SessionId) {
        self.entries.retain(|_, set| {
            set.remove(&session);
            !set.is_empty()
        });
    }

    /// Sessions that should receive a publish to `topic`. Each session
    /// appears once however many of its filters match.
    pub fn route(&self, topic: &str) -> BTreeSet<SessionId> {
        let mut out = BTreeSet::new();
        for (filter, sessions) in &self.entries {
            if filter.matches(topic) {
                out.extend(sessions.iter().copied());
            }
        }
        out
    }

    pub fn filters_of(&self, session: SessionId) -> Vec<&TopicFilter> {
        self.entries
            .iter()
            .filter(|(_, s)| s.contains(&session))
            .map(|(f, _)| f)
            .collect()
    }

    pub fn sessions(&self) -> BTreeSet<SessionId> {
        self.entries.values().flatten().copied().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(s: &str) -> TopicFilter {
        TopicFilter::new(s).unwrap()
    }

    #[test]
    fn single_subscriber() {
        let mut t = SubscriptionTable::new();
        t.subscribe(1, f("camera/stream"));
        assert_eq!(t.route("camera/stream"), BTreeSet::from([1]));
        assert!(t.route("camera/other").is_empty());
    }

    #[test]
    fn overlapping_filters_deliver_once() {
        let mut t = SubscriptionTable::new();
        t.subscribe(7, f("camera/+"));
        t.subscribe(7, f("#"));
        t.subscribe(8, f("camera/stream"));
        assert_eq!(t.route("camera/stream"), BTreeSet::from([7, 8]));
    }

    #[test]
    fn no_subscribers() {
        assert!(SubscriptionTable::new().route("camera/stream").is_empty());
    }

    #[test]
    fn removing_session_leaves_no_references() {
        let mut t = SubscriptionTable::new();
        t.subscribe(1, f("a/#"));
        t.subscribe(1, f("b"));
        t.subscribe(2, f("b"));
        t.remove_session(1);
        assert_eq!(t.sessions(), BTreeSet::from([2]));
        assert!(t.filters_of(1).is_empty());
        t.unsubscribe(2, &f("b"));
        assert!(t.is_empty());
    }
}
