use thiserror::Error;

use super::svg::render_chart_svg;
use super::{
    AnalysisKind, BlockOutcome, BlockResult, BlockSpec, CrossTabItem, FrequencyItem, LikertItem,
    Report, ReportBlock, ReportSource, ReportSpec, SummaryItem,
};
use crate::stats::{
    self, cross_tab_with_categories, frequency_table, frequency_table_with_categories,
    likert_profile, summary_stats, xbar_r_chart, DataMatrix, StatsError,
};
use crate::store::{Dataset, ResponseSnapshot, Store, StoreError};
use crate::survey::{Answer, Question, QuestionKind, Questionnaire};

const NO_DATA: &str = "no data yet";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("block {block} references unknown field {field:?}")]
    DanglingReference { block: usize, field: String },
    #[error("block {block}: {message}")]
    InvalidBlock { block: usize, message: String },
    #[error("report spec source {expected:?} does not match the supplied data {found:?}")]
    SourceMismatch {
        expected: ReportSource,
        found: ReportSource,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// The data a report is composed from.
#[derive(Clone, Copy)]
pub enum SourceData<'a> {
    Questionnaire {
        questionnaire: &'a Questionnaire,
        snapshot: &'a ResponseSnapshot,
    },
    Dataset(&'a Dataset),
}

impl SourceData<'_> {
    fn source(&self) -> ReportSource {
        match self {
            SourceData::Questionnaire { questionnaire, .. } => {
                ReportSource::Questionnaire(questionnaire.id.clone())
            }
            SourceData::Dataset(d) => ReportSource::Dataset(d.id.clone()),
        }
    }
}

/// Loads the spec's source from the store at `at_version` (latest when
/// `None`) and composes the report.
pub fn compose_at(store: &Store, spec: &ReportSpec, at_version: Option<u64>) -> Result<Report, ReportError> {
    match &spec.source {
        ReportSource::Questionnaire(id) => {
            let questionnaire = store.load_questionnaire(id)?;
            let snapshot = store.load_responses(id, at_version)?;
            compose_report(
                spec,
                SourceData::Questionnaire {
                    questionnaire: &questionnaire,
                    snapshot: &snapshot,
                },
            )
        }
        ReportSource::Dataset(id) => compose_report(spec, SourceData::Dataset(&store.load_dataset(id)?)),
    }
}

/// Computes every block of `spec` from exactly the given data.
///
/// Spec-level problems (unknown fields, block kinds that do not fit the
/// source) fail the whole report. Analysis failures are confined to their
/// block, which then carries an error message while the others render.
pub fn compose_report(spec: &ReportSpec, data: SourceData<'_>) -> Result<Report, ReportError> {
    if spec.source != data.source() {
        return Err(ReportError::SourceMismatch {
            expected: spec.source.clone(),
            found: data.source(),
        });
    }
    let (data_version, generated_at) = match data {
        SourceData::Questionnaire { snapshot, .. } => (
            snapshot.version,
            snapshot.records.last().map(|r| r.submitted_at),
        ),
        // Datasets are immutable once stored.
        SourceData::Dataset(_) => (1, None),
    };

    let mut blocks = Vec::with_capacity(spec.blocks.len());
    for (index, block) in spec.blocks.iter().enumerate() {
        let outcome = match data {
            SourceData::Questionnaire {
                questionnaire,
                snapshot,
            } => {
                let questions = resolve_questions(index, block, questionnaire)?;
                if snapshot.records.is_empty() {
                    BlockOutcome::Empty {
                        message: NO_DATA.into(),
                    }
                } else {
                    questionnaire_block(block, &questions, snapshot)
                }
            }
            SourceData::Dataset(dataset) => {
                let columns = resolve_columns(index, block, dataset)?;
                dataset_block(block, &columns, dataset)
            }
        };
        blocks.push(ReportBlock {
            index,
            kind: block.kind,
            title: block.title.clone(),
            min_level: block.min_level,
            params: block.params.clone(),
            outcome,
        });
    }

    Ok(Report {
        spec_id: spec.id.clone(),
        source: spec.source.clone(),
        data_version,
        generated_at,
        viewer_level: None,
        blocks,
    })
}

fn finish(result: Result<BlockResult, StatsError>) -> BlockOutcome {
    match result {
        Ok(result) => match render_chart_svg(&result) {
            Ok(charts) => BlockOutcome::Ok { result, charts },
            // Table-only kinds.
            Err(_) => BlockOutcome::Ok {
                result,
                charts: Vec::new(),
            },
        },
        Err(e) => BlockOutcome::Error {
            message: e.to_string(),
        },
    }
}

// ---- questionnaire sources ---------------------------------------------------

fn resolve_questions<'q>(
    index: usize,
    block: &BlockSpec,
    q: &'q Questionnaire,
) -> Result<Vec<&'q Question>, ReportError> {
    let accepts = |kind: QuestionKind| match block.kind {
        AnalysisKind::Frequency | AnalysisKind::Crosstab => kind.is_categorical(),
        AnalysisKind::Summary | AnalysisKind::Pca => kind.is_quantitative(),
        AnalysisKind::Likert => kind == QuestionKind::Likert5,
        AnalysisKind::XbarR => false,
    };
    if block.kind == AnalysisKind::XbarR {
        return Err(ReportError::InvalidBlock {
            block: index,
            message: "xbar_r blocks need a dataset source".into(),
        });
    }
    let questions: Vec<&Question> = if block.params.fields.is_empty() {
        q.questions.iter().filter(|x| accepts(x.kind)).collect()
    } else {
        block
            .params
            .fields
            .iter()
            .map(|f| {
                let question = q.question(f).ok_or_else(|| ReportError::DanglingReference {
                    block: index,
                    field: f.clone(),
                })?;
                if accepts(question.kind) {
                    Ok(question)
                } else {
                    Err(ReportError::InvalidBlock {
                        block: index,
                        message: format!(
                            "{} blocks cannot use {} question {:?}",
                            block.kind.as_str(),
                            question.kind.as_str(),
                            question.id
                        ),
                    })
                }
            })
            .collect::<Result<_, _>>()?
    };
    if block.kind == AnalysisKind::Crosstab && questions.len() != 2 {
        return Err(ReportError::InvalidBlock {
            block: index,
            message: format!("crosstab needs exactly 2 fields, got {}", questions.len()),
        });
    }
    if questions.is_empty() {
        return Err(ReportError::InvalidBlock {
            block: index,
            message: format!("no questions suitable for a {} block", block.kind.as_str()),
        });
    }
    Ok(questions)
}

fn declared_categories(q: &Question) -> Option<Vec<String>> {
    match q.kind {
        QuestionKind::Choice => Some(q.options.clone()),
        QuestionKind::Likert5 => Some(stats::descriptive::likert_categories()),
        _ => None,
    }
}

fn categories_of(q: &Question, snapshot: &ResponseSnapshot) -> Vec<String> {
    let present: Vec<String> = snapshot
        .records
        .iter()
        .filter_map(|r| r.answers.get(&q.id).map(|a| a.category(q)))
        .collect();
    declared_categories(q).unwrap_or_else(|| frequency_table(&present).categories)
}

fn questionnaire_block(block: &BlockSpec, questions: &[&Question], snapshot: &ResponseSnapshot) -> BlockOutcome {
    let answers_of = |q: &Question| -> Vec<&Answer> {
        snapshot
            .records
            .iter()
            .filter_map(|r| r.answers.get(&q.id))
            .collect()
    };
    let result = match block.kind {
        AnalysisKind::Frequency => questions
            .iter()
            .map(|q| {
                let values: Vec<String> = answers_of(q).iter().map(|a| a.category(q)).collect();
                let table = match declared_categories(q) {
                    Some(cats) => frequency_table_with_categories(&cats, &values)?,
                    None => frequency_table(&values),
                };
                Ok(FrequencyItem {
                    field: q.id.clone(),
                    table,
                })
            })
            .collect::<Result<_, StatsError>>()
            .map(|items| BlockResult::Frequency { items }),
        AnalysisKind::Summary => questions
            .iter()
            .map(|q| {
                let values: Vec<f64> = answers_of(q).iter().filter_map(|a| a.as_f64()).collect();
                Ok(SummaryItem {
                    field: q.id.clone(),
                    summary: if values.is_empty() {
                        None
                    } else {
                        Some(summary_stats(&values)?)
                    },
                })
            })
            .collect::<Result<_, StatsError>>()
            .map(|items| BlockResult::Summary { items }),
        AnalysisKind::Likert => questions
            .iter()
            .map(|q| {
                let values: Vec<u8> = answers_of(q)
                    .iter()
                    .filter_map(|a| match a {
                        Answer::Likert(v) => Some(*v),
                        _ => None,
                    })
                    .collect();
                Ok(LikertItem {
                    field: q.id.clone(),
                    profile: likert_profile(&values)?,
                })
            })
            .collect::<Result<_, StatsError>>()
            .map(|items| BlockResult::Likert { items }),
        AnalysisKind::Crosstab => {
            let (rq, cq) = (questions[0], questions[1]);
            let pairs: Vec<(String, String)> = snapshot
                .records
                .iter()
                .filter_map(|r| Some((r.answers.get(&rq.id)?.category(rq), r.answers.get(&cq.id)?.category(cq))))
                .collect();
            cross_tab_with_categories(&categories_of(rq, snapshot), &categories_of(cq, snapshot), &pairs).map(
                |table| {
                    BlockResult::Crosstab(CrossTabItem {
                        row_field: rq.id.clone(),
                        col_field: cq.id.clone(),
                        table,
                    })
                },
            )
        }
        AnalysisKind::Pca => {
            let rows: Vec<Vec<f64>> = snapshot
                .records
                .iter()
                .filter_map(|r| {
                    questions
                        .iter()
                        .map(|q| r.answers.get(&q.id).and_then(Answer::as_f64))
                        .collect::<Option<Vec<f64>>>()
                })
                .collect();
            if rows.len() < 2 {
                return BlockOutcome::Empty {
                    message: format!(
                        "not enough complete responses yet ({} of 2 needed)",
                        rows.len()
                    ),
                };
            }
            let names = questions.iter().map(|q| q.id.clone()).collect();
            DataMatrix::new(names, rows)
                .and_then(|m| stats::pca(&m, block.params.mode.unwrap_or_default()))
                .map(BlockResult::Pca)
        }
        AnalysisKind::XbarR => unreachable!("rejected while resolving fields"),
    };
    finish(result)
}

// ---- dataset sources -------------------------------------------------------

fn resolve_columns(index: usize, block: &BlockSpec, dataset: &Dataset) -> Result<Vec<usize>, ReportError> {
    if !matches!(block.kind, AnalysisKind::Summary | AnalysisKind::XbarR | AnalysisKind::Pca) {
        return Err(ReportError::InvalidBlock {
            block: index,
            message: format!("{} blocks need a questionnaire source", block.kind.as_str()),
        });
    }
    if block.params.fields.is_empty() {
        return Ok((0..dataset.columns.len()).collect());
    }
    block
        .params
        .fields
        .iter()
        .map(|f| {
            dataset.column_index(f).ok_or_else(|| ReportError::DanglingReference {
                block: index,
                field: f.clone(),
            })
        })
        .collect()
}

fn dataset_block(block: &BlockSpec, columns: &[usize], dataset: &Dataset) -> BlockOutcome {
    let result = match block.kind {
        AnalysisKind::Summary => columns
            .iter()
            .map(|&c| {
                Ok(SummaryItem {
                    field: dataset.columns[c].clone(),
                    summary: Some(summary_stats(&dataset.column(c))?),
                })
            })
            .collect::<Result<_, StatsError>>()
            .map(|items| BlockResult::Summary { items }),
        AnalysisKind::XbarR => dataset
            .to_subgroups(columns)
            .and_then(|d| xbar_r_chart(&d))
            .map(BlockResult::XbarR),
        AnalysisKind::Pca => dataset
            .to_data_matrix(columns)
            .and_then(|m| stats::pca(&m, block.params.mode.unwrap_or_default()))
            .map(BlockResult::Pca),
        _ => unreachable!("rejected while resolving columns"),
    };
    finish(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::PcaMode;
    use crate::survey::{create_questionnaire, TokenFingerprint};
    use crate::ResponseRecord;
    use chrono::{TimeZone, Utc};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn event() -> Questionnaire {
        create_questionnaire(include_str!("../../data/event.toml")).unwrap()
    }

    fn snapshot(q: &Questionnaire, rows: &[[u8; 11]]) -> ResponseSnapshot {
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let answers: BTreeMap<_, _> = row
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| (format!("q{}", j + 1), Answer::Likert(v)))
                    .collect();
                Arc::new(ResponseRecord {
                    questionnaire_id: q.id.clone(),
                    token_fingerprint: TokenFingerprint::from_hex(format!("{i:064x}")),
                    answers,
                    submitted_at: Utc.with_ymd_and_hms(2024, 3, 1, 10, i as u32, 0).unwrap(),
                })
            })
            .collect();
        ResponseSnapshot {
            questionnaire_id: q.id.clone(),
            version: rows.len() as u64,
            records,
        }
    }

    fn spec(blocks: Vec<BlockSpec>) -> ReportSpec {
        ReportSpec {
            id: "event".into(),
            source: ReportSource::Questionnaire("event".into()),
            blocks,
        }
    }

    fn source<'a>(q: &'a Questionnaire, s: &'a ResponseSnapshot) -> SourceData<'a> {
        SourceData::Questionnaire {
            questionnaire: q,
            snapshot: s,
        }
    }

    #[test]
    fn likert_block_over_eleven_questions() {
        let q = event();
        let snap = snapshot(&q, &[[1; 11], [3; 11], [5; 11]]);
        let r = compose_report(&spec(vec![BlockSpec::new(AnalysisKind::Likert, 0)]), source(&q, &snap)).unwrap();
        assert_eq!(r.data_version, 3);
        assert_eq!(r.generated_at, Some(snap.records[2].submitted_at));
        let BlockOutcome::Ok { result: BlockResult::Likert { items }, charts } = &r.blocks[0].outcome else {
            panic!("unexpected {:?}", r.blocks[0].outcome);
        };
        assert_eq!(items.len(), 11);
        assert_eq!(charts.len(), 11);
        assert_eq!(items[0].profile.frequencies.counts, vec![1, 0, 1, 0, 1]);
    }

    #[test]
    fn empty_snapshot_renders_placeholders() {
        let q = event();
        let snap = snapshot(&q, &[]);
        let blocks = vec![
            BlockSpec::new(AnalysisKind::Likert, 0),
            BlockSpec::new(AnalysisKind::Pca, 2),
            BlockSpec::new(AnalysisKind::Crosstab, 1).fields(["q1", "q2"]),
        ];
        let r = compose_report(&spec(blocks), source(&q, &snap)).unwrap();
        assert_eq!(r.data_version, 0);
        assert!(r.generated_at.is_none());
        for b in &r.blocks {
            assert!(matches!(&b.outcome, BlockOutcome::Empty { message } if message == "no data yet"));
        }
    }

    #[test]
    fn failing_block_is_isolated() {
        let q = event();
        // Every answer to q1 is identical, so correlation PCA over it fails.
        let snap = snapshot(&q, &[[3, 1, 2, 3, 4, 5, 1, 2, 3, 4, 5], [3, 2, 3, 4, 5, 1, 2, 3, 4, 5, 1], [3, 5, 4, 3, 2, 1, 5, 4, 3, 2, 1]]);
        let blocks = vec![
            BlockSpec::new(AnalysisKind::Pca, 0).mode(PcaMode::Correlation),
            BlockSpec::new(AnalysisKind::Summary, 0),
        ];
        let r = compose_report(&spec(blocks), source(&q, &snap)).unwrap();
        assert!(matches!(&r.blocks[0].outcome, BlockOutcome::Error { message } if message.contains("q1")));
        assert!(matches!(&r.blocks[1].outcome, BlockOutcome::Ok { .. }));
    }

    #[test]
    fn pca_with_one_response_is_a_placeholder() {
        let q = event();
        let snap = snapshot(&q, &[[1; 11]]);
        let r = compose_report(&spec(vec![BlockSpec::new(AnalysisKind::Pca, 0)]), source(&q, &snap)).unwrap();
        assert!(matches!(&r.blocks[0].outcome, BlockOutcome::Empty { .. }));
    }

    #[test]
    fn dangling_and_invalid_references() {
        let q = event();
        let snap = snapshot(&q, &[[1; 11]]);
        let err = compose_report(&spec(vec![BlockSpec::new(AnalysisKind::Summary, 0).fields(["q99"])]), source(&q, &snap))
            .unwrap_err();
        assert!(matches!(err, ReportError::DanglingReference { block: 0, ref field } if field == "q99"));
        let err = compose_report(&spec(vec![BlockSpec::new(AnalysisKind::Crosstab, 0).fields(["q1"])]), source(&q, &snap))
            .unwrap_err();
        assert!(matches!(err, ReportError::InvalidBlock { .. }));
        let err = compose_report(&spec(vec![BlockSpec::new(AnalysisKind::XbarR, 0)]), source(&q, &snap)).unwrap_err();
        assert!(matches!(err, ReportError::InvalidBlock { .. }));
    }

    #[test]
    fn crosstab_uses_declared_likert_levels() {
        let q = event();
        let snap = snapshot(&q, &[[1; 11], [1; 11], [5; 11]]);
        let r = compose_report(&spec(vec![BlockSpec::new(AnalysisKind::Crosstab, 1).fields(["q1", "q2"])]), source(&q, &snap))
            .unwrap();
        let BlockOutcome::Ok { result: BlockResult::Crosstab(item), charts } = &r.blocks[0].outcome else {
            panic!()
        };
        assert!(charts.is_empty());
        assert_eq!(item.table.row_labels.len(), 5);
        assert_eq!(item.table.cell("1", "1"), Some(2));
        assert_eq!(item.table.cell("5", "5"), Some(1));
        assert_eq!(item.table.total, 3);
    }

    #[test]
    fn dataset_blocks() {
        let d = Dataset::from_csv("spc-default", include_str!("../../data/spc_default.csv")).unwrap();
        let spec = ReportSpec {
            id: "spc".into(),
            source: ReportSource::Dataset("spc-default".into()),
            blocks: vec![
                BlockSpec::new(AnalysisKind::XbarR, 0),
                BlockSpec::new(AnalysisKind::Summary, 1).fields(["d1"]),
                BlockSpec::new(AnalysisKind::Pca, 1).mode(PcaMode::Covariance),
            ],
        };
        let r = compose_report(&spec, SourceData::Dataset(&d)).unwrap();
        let BlockOutcome::Ok { result: BlockResult::XbarR(chart), charts } = &r.blocks[0].outcome else {
            panic!()
        };
        assert_eq!(chart.xbar_points.len(), 40);
        assert_eq!(charts.iter().map(|c| c.name.as_str()).collect::<Vec<_>>(), vec!["xbar", "r"]);
        assert!(matches!(&r.blocks[2].outcome, BlockOutcome::Ok { result: BlockResult::Pca(_), .. }));

        let bad = ReportSpec {
            blocks: vec![BlockSpec::new(AnalysisKind::Likert, 0)],
            ..spec.clone()
        };
        assert!(matches!(compose_report(&bad, SourceData::Dataset(&d)), Err(ReportError::InvalidBlock { .. })));
        let dangling = ReportSpec {
            blocks: vec![BlockSpec::new(AnalysisKind::Pca, 0).fields(["nope"])],
            ..spec.clone()
        };
        assert!(matches!(
            compose_report(&dangling, SourceData::Dataset(&d)),
            Err(ReportError::DanglingReference { .. })
        ));
        let other = ReportSpec {
            source: ReportSource::Dataset("other".into()),
            ..spec
        };
        assert!(matches!(compose_report(&other, SourceData::Dataset(&d)), Err(ReportError::SourceMismatch { .. })));
    }

    #[test]
    fn composition_is_byte_deterministic() {
        let q = event();
        let snap = snapshot(&q, &[[1, 2, 3, 4, 5, 1, 2, 3, 4, 5, 1], [2, 2, 4, 4, 1, 1, 3, 3, 5, 5, 2], [5, 4, 3, 2, 1, 5, 4, 3, 2, 1, 3]]);
        let s = spec(vec![
            BlockSpec::new(AnalysisKind::Likert, 0),
            BlockSpec::new(AnalysisKind::Frequency, 0).fields(["q3"]),
            BlockSpec::new(AnalysisKind::Pca, 2),
        ]);
        let a = compose_report(&s, source(&q, &snap)).unwrap().to_json();
        let b = compose_report(&s, source(&q, &snap)).unwrap().to_json();
        assert_eq!(a, b);
    }
}
