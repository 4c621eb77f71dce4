use std::collections::HashMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::RngCore;
use surveystat_core::Principal;

/// In-memory sessions keyed by a random 128-bit id. Sessions do not survive
/// a restart; clients authenticate again with a viewer token, while a
/// respondent whose token was redeemed must be issued a new one.
pub struct SessionStore {
    ttl: Duration,
    sessions: Mutex<HashMap<String, (Principal, Instant)>>,
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        Self {
            ttl,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    /// Starts a session and returns its id (32 lowercase hex digits).
    pub fn create(&self, principal: Principal) -> String {
        let mut bytes = [0u8; 16];
        rand::rng().fill_bytes(&mut bytes);
        let id = hex::encode(bytes);
        let now = Instant::now();
        let mut sessions = self.lock();
        sessions.retain(|_, (_, expires)| *expires > now);
        sessions.insert(id.clone(), (principal, now + self.ttl));
        id
    }

    /// The session's principal, unless it is unknown or expired.
    pub fn get(&self, id: &str) -> Option<Principal> {
        let mut sessions = self.lock();
        match sessions.get(id) {
            Some((p, expires)) if *expires > Instant::now() => Some(p.clone()),
            Some(_) => {
                sessions.remove(id);
                None
            }
            None => None,
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, (Principal, Instant)>> {
        self.sessions.lock().unwrap_or_else(|e| e.into_inner())
    }
}
