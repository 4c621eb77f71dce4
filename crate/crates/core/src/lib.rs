//! Core of the surveystat service: questionnaires and single-use access
//! tokens, descriptive / control-chart / principal-component statistics,
//! role-filtered report composition with SVG charts, and the append-only
//! file store that everything is persisted in.
//!
//! The HTTP service and the operator CLI live in the `surveystat` crate and
//! are thin compositions of what is exported here.

pub mod defaults;
pub mod report;
pub mod stats;
pub mod store;
pub mod survey;

pub use report::{compose_report, filter_by_level, filter_by_role, Report, ReportCache, ReportSpec};
pub use store::{Dataset, Store, StoreError};
pub use survey::{Principal, Questionnaire, ResponseRecord};
