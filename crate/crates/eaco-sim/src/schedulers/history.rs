//! Performance history keyed by co-location signature.
//!
//! A signature is the sorted model multiset of a co-located group plus its
//! GPU count. Records start out seeded from the measured profiles and are
//! replaced by observations as co-allocated jobs complete epochs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::profiledb::{normalize_set, ModelSet, ProfileDb};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Seeded,
    Observed,
}

/// Observed (or seeded) per-epoch performance for one signature.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SigRecord {
    /// Per-member-model epoch time, hours.
    pub per_model_epoch_h: BTreeMap<String, f64>,
    /// Set-level GPU core utilization, percent.
    pub set_gpu_util: f64,
    pub provenance: Provenance,
}

/// The scheduler's accumulated performance knowledge.
#[derive(Debug, Clone, Default)]
pub struct History {
    records: BTreeMap<(ModelSet, u32), SigRecord>,
}

impl History {
    pub fn new() -> Self {
        History::default()
    }

    /// Seeds the history with every profile in the database: exclusive
    /// profiles as singleton signatures at their effective epoch rate,
    /// co-location profiles at their measured set-average rate.
    pub fn seeded_from(db: &ProfileDb) -> Self {
        let mut records = BTreeMap::new();
        for p in db.exclusive_profiles() {
            let sig = (normalize_set(&[&p.model_name]), p.gpu_count);
            let mut per_model = BTreeMap::new();
            per_model.insert(p.model_name.clone(), p.effective_epoch_h());
            records.insert(sig, SigRecord {
                per_model_epoch_h: per_model,
                set_gpu_util: p.avg_gpu_util,
                provenance: Provenance::Seeded,
            });
        }
        for c in db.colocation_profiles() {
            let sig = (c.model_set.clone(), c.gpu_count);
            let mut per_model = BTreeMap::new();
            for m in &c.model_set {
                let epoch = db
                    .ground_truth_epoch_time(m, &c.model_set, c.gpu_count)
                    .expect("profiled members have exclusive profiles");
                per_model.insert(m.clone(), epoch);
            }
            records.insert(sig, SigRecord {
                per_model_epoch_h: per_model,
                set_gpu_util: c.avg_gpu_util,
                provenance: Provenance::Seeded,
            });
        }
        History { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, models: &[String], gpu_count: u32) -> Option<&SigRecord> {
        self.records.get(&(normalize_set(models), gpu_count))
    }

    /// Exact-signature epoch estimate for one member model.
    pub fn epoch_for(&self, models: &[String], gpu_count: u32, model: &str) -> Option<f64> {
        self.get(models, gpu_count)
            .and_then(|r| r.per_model_epoch_h.get(model))
            .copied()
    }

    /// Records a measured epoch time. The record flips to `Observed`,
    /// replacing the seeded value for this signature.
    pub fn record_observed(
        &mut self,
        models: &[String],
        gpu_count: u32,
        model: &str,
        epoch_h: f64,
        set_gpu_util: f64,
    ) -> Result<()> {
        if !(epoch_h > 0.0) {
            return Err(SimError::Contract(format!(
                "observed epoch time must be positive, got {epoch_h}"
            )));
        }
        let key = (normalize_set(models), gpu_count);
        let rec = self.records.entry(key).or_insert_with(|| SigRecord {
            per_model_epoch_h: BTreeMap::new(),
            set_gpu_util,
            provenance: Provenance::Observed,
        });
        rec.per_model_epoch_h.insert(model.to_string(), epoch_h);
        rec.set_gpu_util = set_gpu_util;
        rec.provenance = Provenance::Observed;
        Ok(())
    }

    /// Scales every seeded epoch estimate by `factor`, leaving observations
    /// alone. Useful for modeling stale or optimistic histories.
    pub fn scale_seeded_epochs(&mut self, factor: f64) {
        for rec in self.records.values_mut() {
            if rec.provenance == Provenance::Seeded {
                for v in rec.per_model_epoch_h.values_mut() {
                    *v *= factor;
                }
            }
        }
    }
}
