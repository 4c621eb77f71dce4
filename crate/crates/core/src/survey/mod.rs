//! Questionnaires, response validation and respondent/viewer access tokens.

mod questionnaire;
mod response;
mod token;

pub use questionnaire::{
    create_questionnaire, validate_id, DefinitionError, Question, QuestionKind, Questionnaire,
};
pub use response::{validate_response, Answer, ResponseRecord, Violation, ViolationKind};
pub use token::{
    generate_token, Principal, RawToken, TokenClass, TokenDigester, TokenFingerprint,
    TokenRecord, TokenRegistry, TokenRejection, TokenState, TOKEN_LEN,
};
