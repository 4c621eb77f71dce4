//! Built-in material installed by `surveystat import-default`: the event
//! evaluation questionnaire and two reference datasets, each with a report
//! spec.

use crate::report::{AnalysisKind, BlockSpec, ReportSource, ReportSpec};
use crate::stats::PcaMode;
use crate::store::{Dataset, Store, StoreError};
use crate::survey::{create_questionnaire, Questionnaire};

pub const EVENT_TOML: &str = include_str!("../data/event.toml");
pub const SPC_CSV: &str = include_str!("../data/spc_default.csv");
pub const PCA_CSV: &str = include_str!("../data/pca_default.csv");

pub const EVENT_ID: &str = "event";
pub const SPC_ID: &str = "spc-default";
pub const PCA_ID: &str = "pca-default";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefaultKind {
    Event,
    Spc,
    Pca,
}

impl DefaultKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "event" => Some(Self::Event),
            "spc" => Some(Self::Spc),
            "pca" => Some(Self::Pca),
            _ => None,
        }
    }

    /// Id shared by the installed questionnaire or dataset and its spec.
    pub fn id(self) -> &'static str {
        match self {
            Self::Event => EVENT_ID,
            Self::Spc => SPC_ID,
            Self::Pca => PCA_ID,
        }
    }
}

pub fn event_questionnaire() -> Questionnaire {
    create_questionnaire(EVENT_TOML).expect("bundled questionnaire is valid")
}

pub fn spc_dataset() -> Dataset {
    Dataset::from_csv(SPC_ID, SPC_CSV).expect("bundled dataset is valid")
}

pub fn pca_dataset() -> Dataset {
    Dataset::from_csv(PCA_ID, PCA_CSV).expect("bundled dataset is valid")
}

/// Item profiles for everyone, the numeric summary and the first/last item
/// cross-tabulation for coordinators, the component analysis for directors.
pub fn event_spec() -> ReportSpec {
    ReportSpec {
        id: EVENT_ID.into(),
        source: ReportSource::Questionnaire(EVENT_ID.into()),
        blocks: vec![
            BlockSpec::new(AnalysisKind::Likert, 0).titled("Answer distribution per item"),
            BlockSpec::new(AnalysisKind::Summary, 1).titled("Item summary statistics"),
            BlockSpec::new(AnalysisKind::Crosstab, 1)
                .titled("Program relevance against overall satisfaction")
                .fields(["q1", "q11"]),
            BlockSpec::new(AnalysisKind::Pca, 2)
                .titled("Principal components of the item scores")
                .mode(PcaMode::Correlation),
        ],
    }
}

pub fn spc_spec() -> ReportSpec {
    ReportSpec {
        id: SPC_ID.into(),
        source: ReportSource::Dataset(SPC_ID.into()),
        blocks: vec![
            BlockSpec::new(AnalysisKind::XbarR, 0).titled("X-bar and R control charts"),
            BlockSpec::new(AnalysisKind::Summary, 1).titled("Measurement summary"),
        ],
    }
}

pub fn pca_spec() -> ReportSpec {
    ReportSpec {
        id: PCA_ID.into(),
        source: ReportSource::Dataset(PCA_ID.into()),
        blocks: vec![
            BlockSpec::new(AnalysisKind::Pca, 0)
                .titled("Principal components")
                .mode(PcaMode::Correlation),
            BlockSpec::new(AnalysisKind::Summary, 1).titled("Variable summary"),
        ],
    }
}

/// Installs one default and its report spec. Without `overwrite`, an
/// existing questionnaire, dataset or spec of the same id is an error.
/// Returns the installed id.
pub fn install(store: &Store, kind: DefaultKind, overwrite: bool) -> Result<String, StoreError> {
    match kind {
        DefaultKind::Event => {
            let q = event_questionnaire();
            if overwrite {
                store.replace_questionnaire(&q)?;
            } else {
                store.store_questionnaire(&q)?;
            }
            // A stale spec would block the fresh install.
            store.store_report_spec(&event_spec(), true)?;
        }
        DefaultKind::Spc => {
            store.store_dataset(&spc_dataset(), overwrite)?;
            store.store_report_spec(&spc_spec(), true)?;
        }
        DefaultKind::Pca => {
            store.store_dataset(&pca_dataset(), overwrite)?;
            store.store_report_spec(&pca_spec(), true)?;
        }
    }
    Ok(kind.id().to_string())
}
