//! The Master's topic registry, kept as a pure structure so its bookkeeping
//! can be tested (and replayed) without the network. No registration call
//! carries or checks credentials anywhere in this file: the lack of
//! authentication is the modeled weakness, not an oversight.

use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    pub caller_id: String,
    pub uri: String,
}

#[derive(Debug, Clone, Default)]
pub struct TopicEntry {
    pub type_name: String,
    pub publishers: Vec<Endpoint>,
    pub subscribers: Vec<Endpoint>,
}

/// A publisherUpdate callback the master owes a subscriber.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublisherUpdate {
    pub subscriber_uri: String,
    pub topic: String,
    pub publisher_uris: Vec<String>,
}

/// Ordered registration/unregistration log, the replay oracle's input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegistryOp {
    RegisterPublisher {
        caller_id: String,
        topic: String,
        type_name: String,
        uri: String,
    },
    RegisterSubscriber {
        caller_id: String,
        topic: String,
        type_name: String,
        uri: String,
    },
    UnregisterPublisher {
        caller_id: String,
        topic: String,
        uri: String,
    },
    UnregisterSubscriber {
        caller_id: String,
        topic: String,
        uri: String,
    },
}

#[derive(Debug, Default)]
pub struct MasterRegistry {
    topics: BTreeMap<String, TopicEntry>,
    nodes: BTreeMap<String, String>,
    pub log: Vec<RegistryOp>,
}

fn upsert(list: &mut Vec<Endpoint>, caller_id: &str, uri: &str) {
    match list.iter_mut().find(|e| e.caller_id == caller_id) {
        Some(e) => e.uri = uri.to_string(),
        None => list.push(Endpoint {
            caller_id: caller_id.to_string(),
            uri: uri.to_string(),
        }),
    }
}

impl MasterRegistry {
    pub fn new() -> MasterRegistry {
        MasterRegistry::default()
    }

    /// Registers a publisher. Returns the current subscriber URIs plus the
    /// publisherUpdate fan-out owed to every subscriber of the topic.
    pub fn register_publisher(
        &mut self,
        caller_id: &str,
        topic: &str,
        type_name: &str,
        uri: &str,
    ) -> (Vec<String>, Vec<PublisherUpdate>) {
        self.log.push(RegistryOp::RegisterPublisher {
            caller_id: caller_id.to_string(),
            topic: topic.to_string(),
            type_name: type_name.to_string(),
            uri: uri.to_string(),
        });
        self.nodes.insert(caller_id.to_string(), uri.to_string());
        let entry = self.topics.entry(topic.to_string()).or_default();
        if entry.type_name.is_empty() {
            entry.type_name = type_name.to_string();
        }
        upsert(&mut entry.publishers, caller_id, uri);
        let sub_uris: Vec<String> = entry.subscribers.iter().map(|e| e.uri.clone()).collect();
        let updates = Self::updates_for(topic, entry);
        (sub_uris, updates)
    }

    /// Registers a subscriber and returns the current publisher URIs.
    pub fn register_subscriber(
        &mut self,
        caller_id: &str,
        topic: &str,
        type_name: &str,
        uri: &str,
    ) -> Vec<String> {
        self.log.push(RegistryOp::RegisterSubscriber {
            caller_id: caller_id.to_string(),
            topic: topic.to_string(),
            type_name: type_name.to_string(),
            uri: uri.to_string(),
        });
        self.nodes.insert(caller_id.to_string(), uri.to_string());
        let entry = self.topics.entry(topic.to_string()).or_default();
        if entry.type_name.is_empty() {
            entry.type_name = type_name.to_string();
        }
        upsert(&mut entry.subscribers, caller_id, uri);
        entry.publishers.iter().map(|e| e.uri.clone()).collect()
    }

    pub fn unregister_publisher(
        &mut self,
        caller_id: &str,
        topic: &str,
        uri: &str,
    ) -> (usize, Vec<PublisherUpdate>) {
        self.log.push(RegistryOp::UnregisterPublisher {
            caller_id: caller_id.to_string(),
            topic: topic.to_string(),
            uri: uri.to_string(),
        });
        let entry = match self.topics.get_mut(topic) {
            Some(e) => e,
            None => return (0, Vec::new()),
        };
        let before = entry.publishers.len();
        entry.publishers.retain(|e| e.caller_id != caller_id);
        let removed = before - entry.publishers.len();
        let updates = if removed > 0 {
            Self::updates_for(topic, entry)
        } else {
            Vec::new()
        };
        self.drop_if_empty(topic);
        (removed, updates)
    }

    pub fn unregister_subscriber(&mut self, caller_id: &str, topic: &str, uri: &str) -> usize {
        self.log.push(RegistryOp::UnregisterSubscriber {
            caller_id: caller_id.to_string(),
            topic: topic.to_string(),
            uri: uri.to_string(),
        });
        let entry = match self.topics.get_mut(topic) {
            Some(e) => e,
            None => return 0,
        };
        let before = entry.subscribers.len();
        entry.subscribers.retain(|e| e.caller_id != caller_id);
        let removed = before - entry.subscribers.len();
        self.drop_if_empty(topic);
        removed
    }

    fn drop_if_empty(&mut self, topic: &str) {
        if let Some(entry) = self.topics.get(topic) {
            if entry.publishers.is_empty() && entry.subscribers.is_empty() {
                self.topics.remove(topic);
            }
        }
    }

    fn updates_for(topic: &str, entry: &TopicEntry) -> Vec<PublisherUpdate> {
        let uris: Vec<String> = entry.publishers.iter().map(|e| e.uri.clone()).collect();
        entry
            .subscribers
            .iter()
            .map(|sub| PublisherUpdate {
                subscriber_uri: sub.uri.clone(),
                topic: topic.to_string(),
                publisher_uris: uris.clone(),
            })
            .collect()
    }

    /// Consistent snapshot: per topic, publisher and subscriber caller ids.
    pub fn get_system_state(&self) -> Vec<(String, Vec<String>, Vec<String>)> {
        self.topics
            .iter()
            .map(|(topic, entry)| {
                (
                    topic.clone(),
                    entry.publishers.iter().map(|e| e.caller_id.clone()).collect(),
                    entry.subscribers.iter().map(|e| e.caller_id.clone()).collect(),
                )
            })
            .collect()
    }

    pub fn topic(&self, name: &str) -> Option<&TopicEntry> {
        self.topics.get(name)
    }

    pub fn node_uri(&self, caller_id: &str) -> Option<&str> {
        self.nodes.get(caller_id).map(|s| s.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_registry_registers_first_publisher() {
        let mut reg = MasterRegistry::new();
        let (subs, updates) = reg.register_publisher("/p", "/a", "T", "1.1.1.1:1");
        assert!(subs.is_empty());
        assert!(updates.is_empty());
        assert_eq!(reg.topic("/a").unwrap().publishers.len(), 1);
    }

    #[test]
    fn rogue_publisher_fans_out_to_all_subscribers() {
        let mut reg = MasterRegistry::new();
        reg.register_subscriber("/s1", "/cmd", "T", "1.1.1.1:10");
        reg.register_subscriber("/s2", "/cmd", "T", "1.1.1.2:10");
        reg.register_publisher("/legit", "/cmd", "T", "1.1.1.3:20");
        let (subs, updates) = reg.register_publisher("/rogue", "/cmd", "T", "6.6.6.6:666");
        assert_eq!(subs.len(), 2);
        assert_eq!(updates.len(), 2);
        for u in &updates {
            assert!(u.publisher_uris.contains(&"6.6.6.6:666".to_string()));
            assert_eq!(u.publisher_uris.len(), 2);
        }
    }

    #[test]
    fn subscribe_to_missing_topic_creates_pending_entry() {
        let mut reg = MasterRegistry::new();
        let pubs = reg.register_subscriber("/s", "/nope", "T", "1.1.1.1:10");
        assert!(pubs.is_empty());
        assert!(reg.topic("/nope").is_some());
    }

    #[test]
    fn duplicate_subscribe_is_idempotent() {
        let mut reg = MasterRegistry::new();
        reg.register_subscriber("/s", "/t", "T", "1.1.1.1:10");
        reg.register_subscriber("/s", "/t", "T", "1.1.1.1:10");
        assert_eq!(reg.topic("/t").unwrap().subscribers.len(), 1);
    }

    #[test]
    fn topic_removed_when_empty() {
        let mut reg = MasterRegistry::new();
        reg.register_publisher("/p", "/t", "T", "1.1.1.1:1");
        let (removed, _) = reg.unregister_publisher("/p", "/t", "1.1.1.1:1");
        assert_eq!(removed, 1);
        assert!(reg.topic("/t").is_none());
    }

    #[test]
    fn snapshot_reflects_bookkeeping() {
        let mut reg = MasterRegistry::new();
        reg.register_publisher("/p", "/cmd", "T", "1.1.1.1:1");
        reg.register_subscriber("/s", "/cmd", "T", "1.1.1.2:2");
        let state = reg.get_system_state();
        assert_eq!(state.len(), 1);
        assert_eq!(state[0].0, "/cmd");
        assert_eq!(state[0].1, vec!["/p".to_string()]);
        assert_eq!(state[0].2, vec!["/s".to_string()]);
    }
}
