//! Report specifications, composition, role filtering and chart rendering.
//!
//! A [`ReportSpec`] binds an ordered list of analysis blocks to one source
//! (a questionnaire's responses or a stored dataset). Composing it against a
//! snapshot yields a [`Report`] stamped with the snapshot's data version.
//! Reports are recomputed lazily: [`ReportCache`] hands out the cached report
//! while its version stamp matches the store, and recomputes otherwise.

mod cache;
mod compose;
pub mod svg;

pub use cache::{current_report, CacheKey, ReportCache};
pub use compose::{compose_at, compose_report, ReportError, SourceData};
pub use svg::{render_chart_svg, Chart, RenderError};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::stats::{
    ControlChartResult, CrossTab, FrequencyTable, LikertProfile, PcaMode, PcaResult, SummaryStats,
};
use crate::store::{Store, StoreError};
use crate::survey::{Principal, QuestionKind, Questionnaire};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisKind {
    Frequency,
    Summary,
    Likert,
    Crosstab,
    XbarR,
    Pca,
}

impl AnalysisKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AnalysisKind::Frequency => "frequency",
            AnalysisKind::Summary => "summary",
            AnalysisKind::Likert => "likert",
            AnalysisKind::Crosstab => "crosstab",
            AnalysisKind::XbarR => "xbar_r",
            AnalysisKind::Pca => "pca",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "snake_case")]
pub enum ReportSource {
    Questionnaire(String),
    Dataset(String),
}

/// Block parameters. `fields` names questions (questionnaire sources) or
/// columns (dataset sources); empty means "every applicable one".
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockParams {
    #[serde(default)]
    pub fields: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<PcaMode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub kind: AnalysisKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default)]
    pub params: BlockParams,
    /// Lowest hierarchy level allowed to see this block.
    #[serde(default)]
    pub min_level: u32,
}

impl BlockSpec {
    pub fn new(kind: AnalysisKind, min_level: u32) -> Self {
        Self {
            kind,
            title: None,
            params: BlockParams::default(),
            min_level,
        }
    }

    pub fn titled(mut self, title: &str) -> Self {
        self.title = Some(title.to_string());
        self
    }

    pub fn fields<S: Into<String>>(mut self, fields: impl IntoIterator<Item = S>) -> Self {
        self.params.fields = fields.into_iter().map(Into::into).collect();
        self
    }

    pub fn mode(mut self, mode: PcaMode) -> Self {
        self.params.mode = Some(mode);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSpec {
    pub id: String,
    pub source: ReportSource,
    pub blocks: Vec<BlockSpec>,
}

impl ReportSpec {
    /// The report shown for a questionnaire that has no stored spec: one
    /// level-0 block per applicable analysis.
    pub fn default_for(q: &Questionnaire) -> Self {
        let has = |k: QuestionKind| q.questions.iter().any(|x| x.kind == k);
        let mut blocks = Vec::new();
        if has(QuestionKind::Likert5) {
            blocks.push(BlockSpec::new(AnalysisKind::Likert, 0));
        }
        if has(QuestionKind::Choice) || has(QuestionKind::FreeText) {
            let fields = q
                .questions
                .iter()
                .filter(|x| matches!(x.kind, QuestionKind::Choice | QuestionKind::FreeText))
                .map(|x| x.id.clone());
            blocks.push(BlockSpec::new(AnalysisKind::Frequency, 0).fields(fields));
        }
        if has(QuestionKind::Numeric) {
            let fields = q
                .questions
                .iter()
                .filter(|x| x.kind == QuestionKind::Numeric)
                .map(|x| x.id.clone());
            blocks.push(BlockSpec::new(AnalysisKind::Summary, 0).fields(fields));
        }
        Self {
            id: q.id.clone(),
            source: ReportSource::Questionnaire(q.id.clone()),
            blocks,
        }
    }
}

/// The spec used for a questionnaire's report: the stored spec with the
/// questionnaire's id when one exists, otherwise [`ReportSpec::default_for`].
pub fn spec_for_questionnaire(store: &Store, q: &Questionnaire) -> Result<ReportSpec, StoreError> {
    match store.load_report_spec(&q.id) {
        Ok(spec) if spec.source == ReportSource::Questionnaire(q.id.clone()) => Ok(spec),
        Ok(_) | Err(StoreError::UnknownReportSpec(_)) => Ok(ReportSpec::default_for(q)),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyItem {
    pub field: String,
    pub table: FrequencyTable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryItem {
    pub field: String,
    /// `None` when nobody answered.
    pub summary: Option<SummaryStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LikertItem {
    pub field: String,
    pub profile: LikertProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossTabItem {
    pub row_field: String,
    pub col_field: String,
    pub table: CrossTab,
}

/// Numeric payload of a successfully computed block.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum BlockResult {
    Frequency { items: Vec<FrequencyItem> },
    Summary { items: Vec<SummaryItem> },
    Likert { items: Vec<LikertItem> },
    Crosstab(CrossTabItem),
    XbarR(ControlChartResult),
    Pca(PcaResult),
}

impl BlockResult {
    pub fn kind(&self) -> AnalysisKind {
        match self {
            BlockResult::Frequency { .. } => AnalysisKind::Frequency,
            BlockResult::Summary { .. } => AnalysisKind::Summary,
            BlockResult::Likert { .. } => AnalysisKind::Likert,
            BlockResult::Crosstab(_) => AnalysisKind::Crosstab,
            BlockResult::XbarR(_) => AnalysisKind::XbarR,
            BlockResult::Pca(_) => AnalysisKind::Pca,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BlockOutcome {
    Ok {
        result: BlockResult,
        charts: Vec<Chart>,
    },
    /// Nothing to analyze yet (a live survey starts with zero responses).
    Empty { message: String },
    /// The analysis precondition failed for this block only.
    Error { message: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportBlock {
    /// Position of the block in its spec.
    pub index: usize,
    pub kind: AnalysisKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub min_level: u32,
    pub params: BlockParams,
    #[serde(flatten)]
    pub outcome: BlockOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub spec_id: String,
    pub source: ReportSource,
    /// Store version whose data produced this report.
    pub data_version: u64,
    /// Commit time of the newest record in the snapshot (none for datasets
    /// and empty snapshots). Derived from data, so composition stays
    /// deterministic.
    pub generated_at: Option<DateTime<Utc>>,
    /// Level the blocks were filtered for; `None` for the unfiltered report.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub viewer_level: Option<u32>,
    pub blocks: Vec<ReportBlock>,
}

impl Report {
    /// Canonical serialized form: pretty JSON plus a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

/// Keeps exactly the blocks with `min_level <= level`, in order.
pub fn filter_by_level(report: &Report, level: u32) -> Report {
    Report {
        blocks: report
            .blocks
            .iter()
            .filter(|b| b.min_level <= level)
            .cloned()
            .collect(),
        viewer_level: Some(level),
        ..report.clone()
    }
}

pub fn filter_by_role(report: &Report, viewer: &Principal) -> Report {
    filter_by_level(report, viewer.level)
}
