use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Answer format of a single question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    /// Five-point agreement scale, answered with an integer in `1..=5`.
    Likert5,
    /// One of `options`, answered with a zero-based option index.
    Choice,
    /// Any finite real number.
    Numeric,
    FreeText,
}

impl QuestionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            QuestionKind::Likert5 => "likert5",
            QuestionKind::Choice => "choice",
            QuestionKind::Numeric => "numeric",
            QuestionKind::FreeText => "free_text",
        }
    }

    /// Kinds whose answers are categories (frequency tables, cross tabs).
    pub fn is_categorical(self) -> bool {
        !matches!(self, QuestionKind::Numeric)
    }

    /// Kinds whose answers can be treated as real numbers.
    pub fn is_quantitative(self) -> bool {
        matches!(self, QuestionKind::Likert5 | QuestionKind::Numeric)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Question {
    pub id: String,
    pub prompt: String,
    pub kind: QuestionKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    #[serde(default = "default_required")]
    pub required: bool,
}

fn default_required() -> bool {
    true
}

/// A validated, versioned questionnaire.
///
/// Invariants: at least one question, unique question ids, options present
/// exactly on choice questions, `version >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Questionnaire {
    pub id: String,
    pub title: String,
    pub questions: Vec<Question>,
    pub min_level_to_view_report: u32,
    pub version: u64,
}

impl Questionnaire {
    pub fn question(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }

    /// Replaces the definition with `next`, keeping the id and bumping the
    /// version by one.
    pub fn revise(&self, mut next: Questionnaire) -> Result<Questionnaire, DefinitionError> {
        if next.id != self.id {
            return Err(DefinitionError::IdMismatch {
                expected: self.id.clone(),
                found: next.id,
            });
        }
        next.version = self.version + 1;
        Ok(next)
    }

    /// Re-checks the structural invariants; used on documents loaded from disk.
    pub fn check(&self) -> Result<(), DefinitionError> {
        validate_id(&self.id).map_err(DefinitionError::InvalidId)?;
        if self.title.trim().is_empty() {
            return Err(DefinitionError::EmptyTitle);
        }
        if self.questions.is_empty() {
            return Err(DefinitionError::EmptyQuestionList);
        }
        let mut seen = HashSet::new();
        for q in &self.questions {
            validate_id(&q.id).map_err(DefinitionError::InvalidId)?;
            if !seen.insert(q.id.as_str()) {
                return Err(DefinitionError::DuplicateQuestionId(q.id.clone()));
            }
            if q.prompt.trim().is_empty() {
                return Err(DefinitionError::EmptyPrompt(q.id.clone()));
            }
            match (q.kind, q.options.is_empty()) {
                (QuestionKind::Choice, true) => {
                    return Err(DefinitionError::ChoiceWithoutOptions(q.id.clone()))
                }
                (QuestionKind::Choice, false) => {}
                (_, false) => return Err(DefinitionError::UnexpectedOptions(q.id.clone())),
                (_, true) => {}
            }
        }
        if self.version == 0 {
            return Err(DefinitionError::ZeroVersion);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DefinitionError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty question list")]
    EmptyQuestionList,
    #[error("duplicate question id {0:?}")]
    DuplicateQuestionId(String),
    #[error("choice question {0:?} has no options")]
    ChoiceWithoutOptions(String),
    #[error("question {0:?} declares options but is not a choice question")]
    UnexpectedOptions(String),
    #[error("question {0:?} has an empty prompt")]
    EmptyPrompt(String),
    #[error("questionnaire title is empty")]
    EmptyTitle,
    #[error("invalid identifier: {0}")]
    InvalidId(String),
    #[error("questionnaire version must start at 1")]
    ZeroVersion,
    #[error("revision changes questionnaire id from {expected:?} to {found:?}")]
    IdMismatch { expected: String, found: String },
}

/// Identifiers double as file names in the store, so they are restricted to
/// `[A-Za-z0-9_-]{1,64}`.
pub fn validate_id(id: &str) -> Result<(), String> {
    if id.is_empty() || id.len() > 64 {
        return Err(format!("{id:?} must be 1 to 64 characters long"));
    }
    if !id
        .bytes()
        .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
    {
        return Err(format!("{id:?} may only contain letters, digits, '_' and '-'"));
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceDocument {
    id: String,
    title: String,
    #[serde(default)]
    min_level_to_view_report: u32,
    #[serde(default, rename = "question")]
    questions: Vec<Question>,
}

/// Parses a questionnaire source document (TOML: top-level keys plus ordered
/// `[[question]]` blocks) into a version-1 [`Questionnaire`].
///
/// Invalid input is rejected, never repaired.
pub fn create_questionnaire(source: &str) -> Result<Questionnaire, DefinitionError> {
    let doc: SourceDocument = toml::from_str(source).map_err(|e| DefinitionError::Parse {
        line: e
            .span()
            .map(|span| line_of(source, span.start))
            .unwrap_or(1),
        message: e.message().trim().to_string(),
    })?;
    let q = Questionnaire {
        id: doc.id,
        title: doc.title,
        questions: doc.questions,
        min_level_to_view_report: doc.min_level_to_view_report,
        version: 1,
    };
    q.check()?;
    Ok(q)
}

fn line_of(text: &str, offset: usize) -> usize {
    let end = offset.min(text.len());
    text.as_bytes()[..end].iter().filter(|&&b| b == b'\n').count() + 1
}
