use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use super::compose::{compose_report, ReportError, SourceData};
use super::{Report, ReportSource, ReportSpec};
use crate::store::Store;

/// Everything a composed report depends on. Equal keys give byte-identical
/// reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheKey {
    pub spec: ReportSpec,
    /// Questionnaire definition version, or a digest of the dataset cells.
    pub source_revision: u64,
    pub data_version: u64,
}

/// Lazily recomputed reports, one slot per spec id. A lookup whose key no
/// longer matches recomputes and replaces the slot.
#[derive(Default)]
pub struct ReportCache {
    slots: Mutex<HashMap<String, (CacheKey, Arc<Report>)>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl ReportCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    /// The cached report for `key`, or the result of `compute`. The lock is
    /// not held while computing; concurrent misses may compute twice, and
    /// the slot keeps whichever report has the newer data version.
    pub fn get_or_compute<F>(&self, key: CacheKey, compute: F) -> Result<Arc<Report>, ReportError>
    where
        F: FnOnce() -> Result<Report, ReportError>,
    {
        if let Some((k, report)) = self.lock().get(&key.spec.id) {
            if *k == key {
                self.hits.fetch_add(1, Ordering::Relaxed);
                return Ok(Arc::clone(report));
            }
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let report = Arc::new(compute()?);
        let mut slots = self.lock();
        let stale = match slots.get(&key.spec.id) {
            Some((k, _)) => k.spec != key.spec || k.source_revision != key.source_revision || k.data_version <= key.data_version,
            None => true,
        };
        if stale {
            slots.insert(key.spec.id.clone(), (key, Arc::clone(&report)));
        }
        Ok(report)
    }

    pub fn invalidate(&self, spec_id: &str) {
        self.lock().remove(spec_id);
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, (CacheKey, Arc<Report>)>> {
        self.slots.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// The report for `spec` over the store's current data, from the cache when
/// its version stamp still matches.
pub fn current_report(store: &Store, cache: &ReportCache, spec: &ReportSpec) -> Result<Arc<Report>, ReportError> {
    match &spec.source {
        ReportSource::Questionnaire(id) => {
            let questionnaire = store.load_questionnaire(id)?;
            let snapshot = store.load_responses(id, None)?;
            let key = CacheKey {
                spec: spec.clone(),
                source_revision: questionnaire.version,
                data_version: snapshot.version,
            };
            cache.get_or_compute(key, || {
                compose_report(
                    spec,
                    SourceData::Questionnaire {
                        questionnaire: &questionnaire,
                        snapshot: &snapshot,
                    },
                )
            })
        }
        ReportSource::Dataset(id) => {
            let dataset = store.load_dataset(id)?;
            let mut h = DefaultHasher::new();
            dataset.columns.hash(&mut h);
            for row in &dataset.rows {
                for v in row {
                    v.to_bits().hash(&mut h);
                }
            }
            let key = CacheKey {
                spec: spec.clone(),
                source_revision: h.finish(),
                data_version: 1,
            };
            cache.get_or_compute(key, || compose_report(spec, SourceData::Dataset(&dataset)))
        }
    }
}
