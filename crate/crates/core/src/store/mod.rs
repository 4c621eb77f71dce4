//! Embedded single-directory file store.
//!
//! On-disk layout under the store root:
//!
//! ```text
//! questionnaires/<id>/definition.json   current questionnaire (replaced atomically)
//! questionnaires/<id>/salt              hex salt for token digests
//! questionnaires/<id>/tokens.log        token events, one JSON object per line
//! questionnaires/<id>/responses.log     {"version": k, "record": {...}} per line
//! questionnaires/<id>/.lock             advisory writer lock
//! datasets/<id>.csv                     header row + numeric rows
//! reports/<id>.json                     report specifications
//! ```
//!
//! The response log is append-only and its line count is the questionnaire's
//! data version. Writers are serialized per questionnaire (in-process mutex
//! plus an OS file lock shared with other processes); snapshot readers only
//! take a short read lock on the in-memory record list.

mod dataset;
mod log;

pub use dataset::{Dataset, DatasetError};

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::report::ReportSpec;
use crate::survey::{
    generate_token, validate_id, DefinitionError, Principal, Questionnaire, RawToken,
    ResponseRecord, TokenClass, TokenDigester, TokenFingerprint, TokenRejection,
};
use log::{QuestionnaireLog, TokenEvent, SALT_FILE};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt store file {path} at line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("unknown questionnaire {0:?}")]
    UnknownQuestionnaire(String),
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("unknown report spec {0:?}")]
    UnknownReportSpec(String),
    #[error("{kind} {id:?} already exists")]
    Exists { kind: &'static str, id: String },
    #[error("invalid id: {0}")]
    InvalidId(String),
    #[error(transparent)]
    Definition(#[from] DefinitionError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Token(#[from] TokenRejection),
    #[error("a response was already submitted with this token")]
    AlreadySubmitted,
    #[error("viewer tokens cannot submit responses")]
    ViewerCannotSubmit,
    #[error("token count must be at least 1")]
    InvalidTokenCount,
    #[error("record belongs to questionnaire {found:?}, not {expected:?}")]
    QuestionnaireMismatch { expected: String, found: String },
    #[error("version {requested} requested but only {current} responses exist")]
    VersionAhead { requested: u64, current: u64 },
}

impl StoreError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Immutable view of a questionnaire's responses at one version.
#[derive(Debug, Clone)]
pub struct ResponseSnapshot {
    pub questionnaire_id: String,
    pub version: u64,
    pub records: Vec<Arc<ResponseRecord>>,
}

pub struct Store {
    root: PathBuf,
    logs: Mutex<HashMap<String, Arc<QuestionnaireLog>>>,
}

impl Store {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["questionnaires", "datasets", "reports"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(|e| StoreError::io(&dir, e))?;
        }
        Ok(Self {
            root,
            logs: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn questionnaire_dir(&self, id: &str) -> PathBuf {
        self.root.join("questionnaires").join(id)
    }

    fn definition_path(&self, id: &str) -> PathBuf {
        self.questionnaire_dir(id).join("definition.json")
    }

    fn dataset_path(&self, id: &str) -> PathBuf {
        self.root.join("datasets").join(format!("{id}.csv"))
    }

    fn spec_path(&self, id: &str) -> PathBuf {
        self.root.join("reports").join(format!("{id}.json"))
    }

    // ---- questionnaires -------------------------------------------------

    /// Persists a new questionnaire. Fails if the id is taken.
    pub fn store_questionnaire(&self, q: &Questionnaire) -> Result<String, StoreError> {
        q.check()?;
        let dir = self.questionnaire_dir(&q.id);
        match fs::create_dir(&dir) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(StoreError::Exists {
                    kind: "questionnaire",
                    id: q.id.clone(),
                })
            }
            Err(e) => return Err(StoreError::io(&dir, e)),
        }
        let salt = TokenDigester::random().salt_hex();
        write_atomic(&dir.join(SALT_FILE), salt.as_bytes())?;
        write_atomic(&self.definition_path(&q.id), &to_json(q))?;
        Ok(q.id.clone())
    }

    /// Stores `q`, or replaces the existing definition with the same id and
    /// bumps its version. Tokens and responses are kept.
    pub fn replace_questionnaire(&self, q: &Questionnaire) -> Result<Questionnaire, StoreError> {
        match self.load_questionnaire(&q.id) {
            Ok(current) => {
                let revised = current.revise(q.clone())?;
                revised.check()?;
                let log = self.log(&q.id)?;
                let _guard = log.write()?;
                write_atomic(&self.definition_path(&q.id), &to_json(&revised))?;
                Ok(revised)
            }
            Err(StoreError::UnknownQuestionnaire(_)) => {
                let mut fresh = q.clone();
                fresh.version = 1;
                self.store_questionnaire(&fresh)?;
                Ok(fresh)
            }
            Err(e) => Err(e),
        }
    }

    pub fn load_questionnaire(&self, id: &str) -> Result<Questionnaire, StoreError> {
        if validate_id(id).is_err() {
            return Err(StoreError::UnknownQuestionnaire(id.to_string()));
        }
        let path = self.definition_path(id);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::UnknownQuestionnaire(id.to_string()))
            }
            Err(e) => return Err(StoreError::io(&path, e)),
        };
        let q: Questionnaire = serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
            path: path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        q.check()?;
        Ok(q)
    }

    pub fn questionnaire_ids(&self) -> Result<Vec<String>, StoreError> {
        list_ids(&self.root.join("questionnaires"), |p| {
            p.is_dir().then(|| p.file_name()?.to_str().map(str::to_string)).flatten()
        })
    }

    fn log(&self, id: &str) -> Result<Arc<QuestionnaireLog>, StoreError> {
        let mut logs = self.logs.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(log) = logs.get(id) {
            return Ok(log.clone());
        }
        // Existence check doubles as id validation.
        self.load_questionnaire(id)?;
        let log = Arc::new(QuestionnaireLog::open(&self.questionnaire_dir(id), id)?);
        logs.insert(id.to_string(), log.clone());
        Ok(log)
    }

    // ---- tokens -----------------------------------------------------------

    /// Issues `n` fresh tokens. Only their salted digests are persisted; the
    /// raw tokens are returned exactly once.
    pub fn issue_tokens(
        &self,
        questionnaire_id: &str,
        n: usize,
        level: u32,
        class: TokenClass,
    ) -> Result<Vec<RawToken>, StoreError> {
        if n == 0 {
            return Err(StoreError::InvalidTokenCount);
        }
        let log = self.log(questionnaire_id)?;
        let mut guard = log.write()?;
        let mut rng = rand::rng();
        let mut raw = Vec::with_capacity(n);
        let mut events = Vec::with_capacity(n);
        let mut fresh = std::collections::HashSet::new();
        while raw.len() < n {
            let token = generate_token(&mut rng);
            let fingerprint = log.digester.digest(token.as_str());
            if guard.state.registry.contains(&fingerprint) || !fresh.insert(fingerprint.clone()) {
                continue;
            }
            events.push(TokenEvent::Issued {
                fingerprint,
                level,
                class,
            });
            raw.push(token);
        }
        guard.append_token_events(&events)?;
        Ok(raw)
    }

    pub fn fingerprint(&self, questionnaire_id: &str, raw: &str) -> Result<TokenFingerprint, StoreError> {
        Ok(self.log(questionnaire_id)?.digester.digest(raw))
    }

    /// Redeems a token. Respondent tokens succeed exactly once, durably;
    /// viewer tokens are reusable and leave no trace.
    pub fn redeem_token(&self, questionnaire_id: &str, raw: &str) -> Result<Principal, StoreError> {
        let log = self.log(questionnaire_id)?;
        let fingerprint = log.digester.digest(raw);
        let mut guard = log.write()?;
        let principal = guard.state.registry.check(&fingerprint)?;
        if principal.class == TokenClass::Respondent {
            guard.append_token_events(&[TokenEvent::Redeemed { fingerprint }])?;
        }
        Ok(principal)
    }

    /// What [`Store::redeem_token`] would return, without redeeming.
    pub fn check_token(&self, questionnaire_id: &str, raw: &str) -> Result<Principal, StoreError> {
        let log = self.log(questionnaire_id)?;
        let fingerprint = log.digester.digest(raw);
        let guard = log.write()?;
        Ok(guard.state.registry.check(&fingerprint)?)
    }

    pub fn revoke_token(&self, questionnaire_id: &str, raw: &str) -> Result<(), StoreError> {
        let log = self.log(questionnaire_id)?;
        let fingerprint = log.digester.digest(raw);
        let mut guard = log.write()?;
        if !guard.state.registry.contains(&fingerprint) {
            return Err(TokenRejection::UnknownToken.into());
        }
        guard.append_token_events(&[TokenEvent::Revoked { fingerprint }])?;
        Ok(())
    }

    // ---- responses --------------------------------------------------------

    /// Appends a validated response; see [`Store::append_response_with`].
    pub fn append_response(&self, questionnaire_id: &str, record: ResponseRecord) -> Result<u64, StoreError> {
        self.append_response_with(questionnaire_id, record, |_, _| {})
    }

    /// Appends a validated response and returns the new version.
    ///
    /// The record's token must be a respondent token that is not revoked and
    /// has no response yet; the stored line itself marks the token redeemed,
    /// so redemption and append are one atomic step. The record is flushed to
    /// disk before `on_commit` runs (still under the writer lock, so commit
    /// callbacks observe commit order) and before this returns.
    pub fn append_response_with(
        &self,
        questionnaire_id: &str,
        record: ResponseRecord,
        on_commit: impl FnOnce(u64, &ResponseRecord),
    ) -> Result<u64, StoreError> {
        if record.questionnaire_id != questionnaire_id {
            return Err(StoreError::QuestionnaireMismatch {
                expected: questionnaire_id.to_string(),
                found: record.questionnaire_id,
            });
        }
        let log = self.log(questionnaire_id)?;
        let mut guard = log.write()?;
        let fp = &record.token_fingerprint;
        if guard.state.responded.contains(fp) {
            return Err(StoreError::AlreadySubmitted);
        }
        let token = guard
            .state
            .registry
            .get(fp)
            .ok_or(TokenRejection::UnknownToken)?;
        if token.class == TokenClass::Viewer {
            return Err(StoreError::ViewerCannotSubmit);
        }
        if token.state == crate::survey::TokenState::Revoked {
            return Err(TokenRejection::Revoked.into());
        }
        let snapshot_record = record.clone();
        let version = guard.append_response(record)?;
        on_commit(version, &snapshot_record);
        Ok(version)
    }

    pub fn load_responses(
        &self,
        questionnaire_id: &str,
        at_version: Option<u64>,
    ) -> Result<ResponseSnapshot, StoreError> {
        let (version, records) = self.log(questionnaire_id)?.snapshot(at_version)?;
        Ok(ResponseSnapshot {
            questionnaire_id: questionnaire_id.to_string(),
            version,
            records,
        })
    }

    /// Number of accepted responses.
    pub fn version(&self, questionnaire_id: &str) -> Result<u64, StoreError> {
        Ok(self.log(questionnaire_id)?.version())
    }

    /// Whether a response has been stored under this token fingerprint.
    pub fn has_response(&self, questionnaire_id: &str, fp: &TokenFingerprint) -> Result<bool, StoreError> {
        let log = self.log(questionnaire_id)?;
        let guard = log.write()?;
        Ok(guard.state.responded.contains(fp))
    }

    // ---- datasets ---------------------------------------------------------

    pub fn store_dataset(&self, dataset: &Dataset, overwrite: bool) -> Result<String, StoreError> {
        let path = self.dataset_path(&dataset.id);
        create_or_replace(&path, dataset.to_csv().as_bytes(), overwrite, "dataset", &dataset.id)?;
        Ok(dataset.id.clone())
    }

    pub fn load_dataset(&self, id: &str) -> Result<Dataset, StoreError> {
        if validate_id(id).is_err() {
            return Err(StoreError::UnknownDataset(id.to_string()));
        }
        let path = self.dataset_path(id);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::UnknownDataset(id.to_string()))
            }
            Err(e) => return Err(StoreError::io(&path, e)),
        };
        Ok(Dataset::from_csv(id, &text)?)
    }

    pub fn dataset_ids(&self) -> Result<Vec<String>, StoreError> {
        list_ids(&self.root.join("datasets"), |p| {
            (p.extension()? == "csv").then(|| p.file_stem()?.to_str().map(str::to_string))?
        })
    }

    // ---- report specs -----------------------------------------------------

    pub fn store_report_spec(&self, spec: &ReportSpec, overwrite: bool) -> Result<String, StoreError> {
        validate_id(&spec.id).map_err(StoreError::InvalidId)?;
        create_or_replace(&self.spec_path(&spec.id), &to_json(spec), overwrite, "report spec", &spec.id)?;
        Ok(spec.id.clone())
    }

    pub fn load_report_spec(&self, id: &str) -> Result<ReportSpec, StoreError> {
        if validate_id(id).is_err() {
            return Err(StoreError::UnknownReportSpec(id.to_string()));
        }
        let path = self.spec_path(id);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::UnknownReportSpec(id.to_string()))
            }
            Err(e) => return Err(StoreError::io(&path, e)),
        };
        serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
            path,
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn report_spec_ids(&self) -> Result<Vec<String>, StoreError> {
        list_ids(&self.root.join("reports"), |p| {
            (p.extension()? == "json").then(|| p.file_stem()?.to_str().map(str::to_string))?
        })
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("store documents serialize");
    bytes.push(b'\n');
    bytes
}

fn list_ids(dir: &Path, pick: impl Fn(&Path) -> Option<String>) -> Result<Vec<String>, StoreError> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| StoreError::io(dir, e))? {
        let entry = entry.map_err(|e| StoreError::io(dir, e))?;
        if let Some(id) = pick(&entry.path()) {
            if validate_id(&id).is_ok() {
                ids.push(id);
            }
        }
    }
    ids.sort();
    Ok(ids)
}

fn create_or_replace(
    path: &Path,
    bytes: &[u8],
    overwrite: bool,
    kind: &'static str,
    id: &str,
) -> Result<(), StoreError> {
    validate_id(id).map_err(StoreError::InvalidId)?;
    if !overwrite && path.exists() {
        return Err(StoreError::Exists {
            kind,
            id: id.to_string(),
        });
    }
    write_atomic(path, bytes)
}

/// Write to a temporary sibling, fsync, then rename over the target.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension(format!(
        "tmp{}",
        std::process::id() ^ rand::random::<u32>()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        if let Some(parent) = path.parent() {
            // Directory fsync is best effort; not every platform allows it.
            let _ = fs::File::open(parent).and_then(|d| d.sync_all());
        }
        Ok(())
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        StoreError::io(path, e)
    })
}
