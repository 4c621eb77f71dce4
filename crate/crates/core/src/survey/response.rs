use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::questionnaire::{Question, QuestionKind, Questionnaire};
use super::token::TokenFingerprint;

/// A type-checked answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Likert(u8),
    /// Zero-based index into the question's options.
    Choice(usize),
    Numeric(f64),
    Text(String),
}

impl Answer {
    /// Numeric reading of quantitative answers (likert and numeric).
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Answer::Likert(v) => Some(f64::from(v)),
            Answer::Numeric(v) => Some(v),
            _ => None,
        }
    }

    /// Category label used by frequency tables and cross tabulations.
    pub fn category(&self, question: &Question) -> String {
        match self {
            Answer::Likert(v) => v.to_string(),
            Answer::Choice(i) => question.options[*i].clone(),
            Answer::Numeric(v) => v.to_string(),
            Answer::Text(s) => s.clone(),
        }
    }
}

/// One respondent's validated answers. Only the token fingerprint is kept,
/// never the raw token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub questionnaire_id: String,
    pub token_fingerprint: TokenFingerprint,
    pub answers: BTreeMap<String, Answer>,
    pub submitted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    MissingRequired,
    OutOfRange,
    WrongType,
    UnknownQuestion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub question_id: String,
    pub kind: ViolationKind,
    pub message: String,
}

impl Violation {
    fn new(question_id: &str, kind: ViolationKind, message: impl Into<String>) -> Self {
        Self {
            question_id: question_id.to_string(),
            kind,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.question_id, self.message)
    }
}

/// Checks `answers` against `questionnaire` and returns either the typed
/// record or every violation found, in question order followed by unknown
/// ids.
///
/// A JSON `null` counts as "not answered", as does a blank free-text string.
pub fn validate_response(
    questionnaire: &Questionnaire,
    answers: &serde_json::Map<String, Value>,
    token_fingerprint: TokenFingerprint,
    submitted_at: DateTime<Utc>,
) -> Result<ResponseRecord, Vec<Violation>> {
    let mut violations = Vec::new();
    let mut typed = BTreeMap::new();

    for question in &questionnaire.questions {
        match answers.get(&question.id) {
            None | Some(Value::Null) => {
                if question.required {
                    violations.push(Violation::new(
                        &question.id,
                        ViolationKind::MissingRequired,
                        "missing required answer",
                    ));
                }
            }
            Some(raw) => match check_answer(question, raw) {
                Ok(Some(answer)) => {
                    typed.insert(question.id.clone(), answer);
                }
                Ok(None) if question.required => violations.push(Violation::new(
                    &question.id,
                    ViolationKind::MissingRequired,
                    "missing required answer",
                )),
                Ok(None) => {}
                Err(v) => violations.push(v),
            },
        }
    }
    for key in answers.keys() {
        if questionnaire.question(key).is_none() {
            violations.push(Violation::new(
                key,
                ViolationKind::UnknownQuestion,
                "unknown question",
            ));
        }
    }

    if violations.is_empty() {
        Ok(ResponseRecord {
            questionnaire_id: questionnaire.id.clone(),
            token_fingerprint,
            answers: typed,
            submitted_at,
        })
    } else {
        Err(violations)
    }
}

fn check_answer(question: &Question, raw: &Value) -> Result<Option<Answer>, Violation> {
    let wrong_type =
        |expected: &str| Violation::new(&question.id, ViolationKind::WrongType, format!("expected {expected}"));
    match question.kind {
        QuestionKind::Likert5 => {
            let v = integer(raw).ok_or_else(|| wrong_type("an integer from 1 to 5"))?;
            if (1..=5).contains(&v) {
                Ok(Some(Answer::Likert(v as u8)))
            } else {
                Err(Violation::new(
                    &question.id,
                    ViolationKind::OutOfRange,
                    format!("out of range: {v} is not in 1..5"),
                ))
            }
        }
        QuestionKind::Choice => {
            let v = integer(raw).ok_or_else(|| wrong_type("an option index"))?;
            if v >= 0 && (v as u64) < question.options.len() as u64 {
                Ok(Some(Answer::Choice(v as usize)))
            } else {
                Err(Violation::new(
                    &question.id,
                    ViolationKind::OutOfRange,
                    format!(
                        "out of range: option index {v} is not in 0..{}",
                        question.options.len() - 1
                    ),
                ))
            }
        }
        QuestionKind::Numeric => match raw.as_f64() {
            Some(v) if v.is_finite() => Ok(Some(Answer::Numeric(v))),
            _ => Err(wrong_type("a finite number")),
        },
        QuestionKind::FreeText => match raw {
            Value::String(s) if s.trim().is_empty() => Ok(None),
            Value::String(s) => Ok(Some(Answer::Text(s.clone()))),
            _ => Err(wrong_type("text")),
        },
    }
}

fn integer(raw: &Value) -> Option<i64> {
    let n = raw.as_number()?;
    if let Some(i) = n.as_i64() {
        return Some(i);
    }
    // 3.0 is accepted as 3; 3.5 is not an integer.
    let f = n.as_f64()?;
    (f.fract() == 0.0 && f.abs() < 1e15).then_some(f as i64)
}
