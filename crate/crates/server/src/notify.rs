//! Post-commit confirmation messages.
//!
//! A notification is created inside the store's commit callback, so it
//! exists only for durably stored responses and is queued in commit order.
//! One background worker drains the bounded queue and delivers through the
//! configured [`Transport`] with bounded exponential backoff. Nothing here
//! ever blocks or fails an HTTP request: a full queue or an exhausted retry
//! budget only marks the notification `failed`.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use serde::Serialize;
use tokio::sync::{mpsc, Notify};

use crate::config::{NotifyConfig, TransportConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Message {
    pub to: String,
    pub subject: String,
    pub body: String,
    pub questionnaire_id: String,
    pub version: u64,
}

#[async_trait]
pub trait Transport: Send + Sync + 'static {
    async fn deliver(&self, message: &Message) -> Result<(), String>;
}

/// Keeps delivered messages in memory. `set_down(true)` simulates an
/// outage: deliveries fail until it is cleared.
#[derive(Default)]
pub struct CaptureTransport {
    messages: Mutex<Vec<Message>>,
    down: AtomicBool,
}

impl CaptureTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_down(&self, down: bool) {
        self.down.store(down, Ordering::SeqCst);
    }

    pub fn messages(&self) -> Vec<Message> {
        self.messages.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

#[async_trait]
impl Transport for CaptureTransport {
    async fn deliver(&self, message: &Message) -> Result<(), String> {
        if self.down.load(Ordering::SeqCst) {
            return Err("capture transport is down".into());
        }
        self.messages
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(message.clone());
        Ok(())
    }
}

/// POSTs each message as JSON to a single gateway endpoint; any 2xx
/// answer counts as delivered.
pub struct GatewayTransport {
    client: reqwest::Client,
    endpoint: String,
}

impl GatewayTransport {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            client: reqwest::Client::builder()
                .timeout(std::time::Duration::from_secs(10))
                .build()
                .expect("http client"),
            endpoint: endpoint.into(),
        }
    }
}

#[async_trait]
impl Transport for GatewayTransport {
    async fn deliver(&self, message: &Message) -> Result<(), String> {
        let resp = self
            .client
            .post(&self.endpoint)
            .json(message)
            .send()
            .await
            .map_err(|e| e.to_string())?;
        if resp.status().is_success() {
            Ok(())
        } else {
            Err(format!("gateway answered {}", resp.status()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryState {
    Pending,
    Sent,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Notification {
    pub id: usize,
    pub recipient: String,
    pub questionnaire_title: String,
    pub submitted_at: DateTime<Utc>,
    pub state: DeliveryState,
    pub attempts: u32,
    #[serde(skip)]
    message: Message,
}

struct Shared {
    log: Mutex<Vec<Notification>>,
    pending: AtomicUsize,
    idle: Notify,
}

/// Handle for enqueueing confirmations. Cheap to clone.
#[derive(Clone)]
pub struct Notifier {
    tx: Option<mpsc::Sender<usize>>,
    shared: Arc<Shared>,
}

/// What to confirm.
pub struct Confirmation<'a> {
    pub recipient: &'a str,
    pub questionnaire_id: &'a str,
    pub questionnaire_title: &'a str,
    pub version: u64,
    pub submitted_at: DateTime<Utc>,
}

impl Notifier {
    /// A notifier that records nothing and sends nothing.
    pub fn disabled() -> Self {
        Self {
            tx: None,
            shared: Arc::new(Shared {
                log: Mutex::new(Vec::new()),
                pending: AtomicUsize::new(0),
                idle: Notify::new(),
            }),
        }
    }

    /// Starts the delivery worker on the current Tokio runtime.
    pub fn start(transport: Arc<dyn Transport>, config: NotifyConfig) -> Self {
        let (tx, mut rx) = mpsc::channel::<usize>(config.queue_capacity);
        let notifier = Self {
            tx: Some(tx),
            ..Self::disabled()
        };
        let shared = notifier.shared.clone();
        tokio::spawn(async move {
            while let Some(id) = rx.recv().await {
                let message = shared.lock()[id].message.clone();
                let mut attempts = 0;
                let state = loop {
                    attempts += 1;
                    match transport.deliver(&message).await {
                        Ok(()) => break DeliveryState::Sent,
                        Err(e) if attempts >= config.max_attempts => {
                            tracing::warn!(notification = id, attempts, "confirmation failed: {e}");
                            break DeliveryState::Failed;
                        }
                        Err(e) => {
                            tracing::debug!(notification = id, attempts, "confirmation retry: {e}");
                            tokio::time::sleep(config.backoff(attempts)).await;
                        }
                    }
                };
                {
                    let mut log = shared.lock();
                    log[id].state = state;
                    log[id].attempts = attempts;
                }
                shared.finish_one();
            }
        });
        notifier
    }

    /// Records and queues a confirmation. Never blocks: with a full queue the
    /// notification is marked failed straight away. Returns its id, or
    /// `None` when notifications are disabled.
    pub fn enqueue(&self, c: Confirmation<'_>) -> Option<usize> {
        let tx = self.tx.as_ref()?;
        let message = Message {
            to: c.recipient.to_string(),
            subject: format!("Thank you for answering \"{}\"", c.questionnaire_title),
            body: format!(
                "Your answers to \"{}\" were stored successfully at {}.",
                c.questionnaire_title,
                c.submitted_at.to_rfc3339()
            ),
            questionnaire_id: c.questionnaire_id.to_string(),
            version: c.version,
        };
        let id = {
            let mut log = self.shared.lock();
            let id = log.len();
            log.push(Notification {
                id,
                recipient: c.recipient.to_string(),
                questionnaire_title: c.questionnaire_title.to_string(),
                submitted_at: c.submitted_at,
                state: DeliveryState::Pending,
                attempts: 0,
                message,
            });
            id
        };
        self.shared.pending.fetch_add(1, Ordering::SeqCst);
        if tx.try_send(id).is_err() {
            tracing::warn!(notification = id, "confirmation queue full");
            self.shared.lock()[id].state = DeliveryState::Failed;
            self.shared.finish_one();
        }
        Some(id)
    }

    pub fn notifications(&self) -> Vec<Notification> {
        self.shared.lock().clone()
    }

    pub fn count(&self, state: DeliveryState) -> usize {
        self.shared.lock().iter().filter(|n| n.state == state).count()
    }

    /// Resolves once every queued notification has reached a final state.
    pub async fn wait_idle(&self) {
        loop {
            let idle = self.shared.idle.notified();
            if self.shared.pending.load(Ordering::SeqCst) == 0 {
                return;
            }
            idle.await;
        }
    }
}

impl Shared {
    fn lock(&self) -> std::sync::MutexGuard<'_, Vec<Notification>> {
        self.log.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn finish_one(&self) {
        if self.pending.fetch_sub(1, Ordering::SeqCst) == 1 {
            self.idle.notify_waiters();
        }
    }
}

/// The transport selected by configuration. `None` means disabled.
pub fn transport_for(config: &TransportConfig) -> Option<Arc<dyn Transport>> {
    match config {
        TransportConfig::Disabled => None,
        TransportConfig::Capture => Some(Arc::new(CaptureTransport::new())),
        TransportConfig::Gateway { endpoint } => Some(Arc::new(GatewayTransport::new(endpoint.clone()))),
    }
}
