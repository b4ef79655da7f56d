//! Measured job profiles and the simulator's interference/power ground truth.
//!
//! The database holds two kinds of records: exclusive profiles (one model
//! training alone on a GPU set) and co-location profiles (a multiset of
//! models sharing the same GPU set). A built-in default carries the measured
//! data for AlexNet, ResNet-18, ResNet-50 and VGG-16 on 8xV100 nodes,
//! alone and in six co-located combinations.
//!
//! Combinations not covered by a profile are answered by a fallback model
//! fitted at load time: a linear slowdown in co-residency count and
//! over-saturation utilization, plus an additive power model with a shared
//! node baseline.
//!
//! Two power queries exist on purpose. [`ProfileDb::ground_truth_power`]
//! returns the *reported* average wattage of a profile, which for long runs
//! with staggered completions averages over low-occupancy tail phases.
//! [`ProfileDb::simulation_power`] returns `energy / duration`, the constant
//! draw that integrates back to the measured energy, which is what the
//! event engine uses between events.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Relative tolerance for the `energy == power * duration` consistency check.
pub const ENERGY_CONSISTENCY_TOL: f64 = 0.005;
/// Relative tolerance for the `n_epochs * epoch_time == jct` consistency check.
pub const EPOCH_CONSISTENCY_TOL: f64 = 0.02;
/// Saturation point of the slowdown model, in summed exclusive GPU
/// utilization percent. Not identifiable from the measured co-location rows
/// (they all sit below it), so it is pinned to the default scheduling
/// utilization threshold rather than fitted.
pub const UTIL_SATURATION_DEFAULT: f64 = 90.0;
/// Default scheduler-side pessimism applied to fallback estimates.
pub const SAFETY_MARGIN_DEFAULT: f64 = 0.10;

/// Measured profile of one model training alone on `gpu_count` GPUs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobProfile {
    pub model_name: String,
    pub gpu_count: u32,
    pub avg_power_w: f64,
    pub total_energy_kwh: f64,
    pub jct_h: f64,
    /// Reported per-epoch time. Rounded in the source measurements; the
    /// engine derives its exact per-epoch time as `jct_h / n_epochs`.
    pub epoch_time_h: f64,
    pub n_epochs: u32,
    pub avg_mem_util: f64,
    pub max_mem_util: f64,
    pub avg_gpu_util: f64,
    pub max_gpu_util: f64,
}

impl JobProfile {
    /// Per-epoch time consistent with the measured JCT (`jct / n_epochs`).
    pub fn effective_epoch_h(&self) -> f64 {
        self.jct_h / f64::from(self.n_epochs)
    }

    /// Constant power that integrates to the measured energy over the JCT.
    pub fn consistent_power_w(&self) -> f64 {
        self.total_energy_kwh / self.jct_h * 1000.0
    }
}

/// Measured profile of a model multiset sharing one GPU set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoLocationProfile {
    /// Sorted model-name multiset.
    pub model_set: Vec<String>,
    pub gpu_count: u32,
    pub avg_power_w: f64,
    pub total_energy_kwh: f64,
    pub avg_jct_h: f64,
    /// Absent where the measurement could not attribute per-epoch times
    /// (the jobs stopped time-slicing uniformly).
    pub avg_epoch_time_h: Option<f64>,
    pub avg_mem_util: f64,
    pub max_mem_util: f64,
    pub avg_gpu_util: f64,
    pub max_gpu_util: f64,
}

impl CoLocationProfile {
    /// Constant power that integrates to the measured energy over the
    /// average JCT.
    pub fn consistent_power_w(&self) -> f64 {
        self.total_energy_kwh / self.avg_jct_h * 1000.0
    }

    fn set_label(&self) -> String {
        self.model_set.join("&")
    }
}

/// Fallback interference/power model for unprofiled combinations.
///
/// For a co-located multiset `S` on one node:
///
/// ```text
/// slowdown(S)     = 1 + c_util * max(0, sum_util(S) - saturation)/100
///                     + c_count * (|S| - 1)
/// epoch_time_j(S) = epoch_time_j(exclusive) * slowdown(S)
/// power(S)        = base + sum_j (power_j(exclusive) - base)   [>= base]
/// ```
///
/// where `sum_util` adds the members' exclusive average GPU utilizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackModel {
    /// Node baseline counted once per node, watts.
    pub base_power_w: f64,
    /// Slowdown per percent of summed utilization beyond saturation.
    pub slowdown_coeff_util: f64,
    /// Slowdown per extra co-located job.
    pub slowdown_coeff_count: f64,
    /// Saturation point for the utilization term, percent.
    pub util_saturation: f64,
    /// Scheduler-side pessimism applied on top of fallback estimates.
    pub safety_margin: f64,
}

impl fmt::Display for FallbackModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "base={:.1}W c_util={:.4} c_count={:.4} sat={:.0}%",
            self.base_power_w, self.slowdown_coeff_util, self.slowdown_coeff_count, self.util_saturation
        )
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct ProfileFile {
    #[serde(default)]
    schema_version: u32,
    exclusive: Vec<JobProfile>,
    colocated: Vec<CoLocationProfile>,
}

/// Sorted multiset of model names, the key for co-location lookups.
pub type ModelSet = Vec<String>;

/// Normalizes a model multiset into its canonical sorted form.
pub fn normalize_set<S: AsRef<str>>(models: &[S]) -> ModelSet {
    let mut v: Vec<String> = models.iter().map(|m| m.as_ref().to_string()).collect();
    v.sort();
    v
}

/// Read-only profile database. Safe to share across threads once loaded.
#[derive(Debug, Clone)]
pub struct ProfileDb {
    exclusive: BTreeMap<String, BTreeMap<u32, JobProfile>>,
    colocated: BTreeMap<(ModelSet, u32), CoLocationProfile>,
    fallback: FallbackModel,
}

const DEFAULT_PROFILES_JSON: &str = include_str!("data/default_profiles.json");

impl ProfileDb {
    /// Builds the database with the built-in measured data.
    pub fn embedded() -> Result<Self> {
        Self::from_json_str(DEFAULT_PROFILES_JSON)
    }

    /// Loads and validates a profile document from a file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Parses, validates, and fits a database from a JSON document.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ProfileFile =
            serde_json::from_str(text).map_err(|e| SimError::ProfileParse(e.to_string()))?;

        let mut exclusive: BTreeMap<String, BTreeMap<u32, JobProfile>> = BTreeMap::new();
        for p in file.exclusive {
            validate_exclusive(&p)?;
            let by_count = exclusive.entry(p.model_name.clone()).or_default();
            if by_count.insert(p.gpu_count, p).is_some() {
                return Err(SimError::ProfileParse("duplicate exclusive profile".into()));
            }
        }
        let mut colocated = BTreeMap::new();
        for mut c in file.colocated {
            c.model_set.sort();
            validate_colocated(&c, &exclusive)?;
            let key = (c.model_set.clone(), c.gpu_count);
            if colocated.insert(key, c).is_some() {
                return Err(SimError::ProfileParse("duplicate co-location profile".into()));
            }
        }

        let fallback = fit_fallback_impl(&exclusive, &colocated)?;
        Ok(ProfileDb { exclusive, colocated, fallback })
    }

    /// All known model names (over every GPU count).
    pub fn models(&self) -> Vec<String> {
        self.exclusive.keys().cloned().collect()
    }

    pub fn fallback(&self) -> &FallbackModel {
        &self.fallback
    }

    pub fn colocation_profiles(&self) -> impl Iterator<Item = &CoLocationProfile> {
        self.colocated.values()
    }

    pub fn exclusive_profiles(&self) -> impl Iterator<Item = &JobProfile> {
        self.exclusive.values().flat_map(|m| m.values())
    }

    /// Exclusive profile for `model`, unique over GPU counts.
    pub fn exclusive_profile(&self, model: &str) -> Result<&JobProfile> {
        let by_count = self
            .exclusive
            .get(model)
            .ok_or_else(|| SimError::UnknownModel(model.to_string()))?;
        if by_count.len() > 1 {
            return Err(SimError::Contract(format!(
                "model '{model}' is profiled for several GPU counts; use exclusive_profile_for"
            )));
        }
        Ok(by_count.values().next().expect("nonempty"))
    }

    /// Exclusive profile for `(model, gpu_count)` exactly.
    pub fn exclusive_profile_for(&self, model: &str, gpu_count: u32) -> Result<&JobProfile> {
        self.exclusive
            .get(model)
            .and_then(|m| m.get(&gpu_count))
            .ok_or_else(|| SimError::UnknownModel(format!("{model} ({gpu_count} GPUs)")))
    }

    /// Co-location profile for the given multiset, if measured.
    pub fn colocation_profile(&self, coset: &[String], gpu_count: u32) -> Option<&CoLocationProfile> {
        self.colocated.get(&(normalize_set(coset), gpu_count))
    }

    /// Slowdown factor of the fallback model for a co-located multiset.
    pub fn fallback_slowdown(&self, coset: &[String], gpu_count: u32) -> Result<f64> {
        let mut sum_util = 0.0;
        for m in coset {
            sum_util += self.exclusive_profile_for(m, gpu_count)?.avg_gpu_util;
        }
        let fb = &self.fallback;
        let over = (sum_util - fb.util_saturation).max(0.0);
        Ok(1.0 + fb.slowdown_coeff_util * over / 100.0
            + fb.slowdown_coeff_count * (coset.len() as f64 - 1.0))
    }

    /// Ground-truth per-epoch time of `model` while co-located with `coset`
    /// (which must contain it). Profiled sets answer with their measured
    /// set-average; unprofiled sets fall back to the fitted slowdown model.
    pub fn ground_truth_epoch_time(&self, model: &str, coset: &[String], gpu_count: u32) -> Result<f64> {
        let set = normalize_set(coset);
        if !set.iter().any(|m| m == model) {
            return Err(SimError::Contract(format!(
                "ground_truth_epoch_time: '{model}' is not a member of the co-located set"
            )));
        }
        let own = self.exclusive_profile_for(model, gpu_count)?;
        if set.len() == 1 {
            return Ok(own.effective_epoch_h());
        }
        if let Some(cp) = self.colocated.get(&(set.clone(), gpu_count)) {
            return Ok(match cp.avg_epoch_time_h {
                Some(e) => e,
                // The measurement reports only the mean JCT; spread it over
                // the member's epoch count so each member finishes there.
                None => cp.avg_jct_h / f64::from(own.n_epochs),
            });
        }
        Ok(own.effective_epoch_h() * self.fallback_slowdown(&set, gpu_count)?)
    }

    /// Reported average node power while `coset` trains together, watts.
    pub fn ground_truth_power(&self, coset: &[String], gpu_count: u32) -> Result<f64> {
        let set = normalize_set(coset);
        if set.is_empty() {
            return Err(SimError::Contract("ground_truth_power: empty co-located set".into()));
        }
        if set.len() == 1 {
            return Ok(self.exclusive_profile_for(&set[0], gpu_count)?.avg_power_w);
        }
        if let Some(cp) = self.colocated.get(&(set.clone(), gpu_count)) {
            return Ok(cp.avg_power_w);
        }
        self.fallback_power(&set, gpu_count)
    }

    /// Node power used for energy integration, watts. Equals
    /// `energy / duration` for profiled combinations so a simulated run of a
    /// profiled set integrates back to its measured energy exactly.
    pub fn simulation_power(&self, coset: &[String], gpu_count: u32) -> Result<f64> {
        let set = normalize_set(coset);
        if set.is_empty() {
            return Err(SimError::Contract("simulation_power: empty co-located set".into()));
        }
        if set.len() == 1 {
            return Ok(self.exclusive_profile_for(&set[0], gpu_count)?.consistent_power_w());
        }
        if let Some(cp) = self.colocated.get(&(set.clone(), gpu_count)) {
            return Ok(cp.consistent_power_w());
        }
        self.fallback_power(&set, gpu_count)
    }

    fn fallback_power(&self, set: &[String], gpu_count: u32) -> Result<f64> {
        let base = self.fallback.base_power_w;
        let mut total = base;
        for m in set {
            total += self.exclusive_profile_for(m, gpu_count)?.consistent_power_w() - base;
        }
        Ok(total.max(base))
    }

    /// Ground-truth average GPU core utilization of a co-located multiset.
    pub fn ground_truth_gpu_util(&self, coset: &[String], gpu_count: u32) -> Result<f64> {
        let set = normalize_set(coset);
        if set.is_empty() {
            return Ok(0.0);
        }
        if set.len() == 1 {
            return Ok(self.exclusive_profile_for(&set[0], gpu_count)?.avg_gpu_util);
        }
        if let Some(cp) = self.colocated.get(&(set.clone(), gpu_count)) {
            return Ok(cp.avg_gpu_util);
        }
        let mut sum = 0.0;
        for m in &set {
            sum += self.exclusive_profile_for(m, gpu_count)?.avg_gpu_util;
        }
        Ok(sum.min(100.0))
    }

    /// Re-runs the fallback fit against the loaded profiles.
    pub fn fit_fallback(&self) -> Result<FallbackModel> {
        fit_fallback_impl(&self.exclusive, &self.colocated)
    }
}

fn check_util_pair(record: &str, what: &str, avg: f64, max: f64) -> Result<()> {
    if !(0.0..=100.0).contains(&avg) || !(0.0..=100.0).contains(&max) || avg > max {
        return Err(SimError::ProfileValidation {
            record: record.to_string(),
            reason: format!("{what} utilization must satisfy 0 <= avg <= max <= 100 (avg={avg}, max={max})"),
        });
    }
    Ok(())
}

fn validate_exclusive(p: &JobProfile) -> Result<()> {
    let record = format!("exclusive '{}'", p.model_name);
    if p.avg_power_w <= 0.0 || p.total_energy_kwh <= 0.0 || p.jct_h <= 0.0 || p.epoch_time_h <= 0.0 {
        return Err(SimError::ProfileValidation {
            record,
            reason: "power, energy, JCT and epoch time must be positive".into(),
        });
    }
    if p.n_epochs == 0 || p.gpu_count == 0 {
        return Err(SimError::ProfileValidation {
            record,
            reason: "n_epochs and gpu_count must be positive".into(),
        });
    }
    let implied = p.avg_power_w * p.jct_h / 1000.0;
    let rel = (implied - p.total_energy_kwh).abs() / p.total_energy_kwh;
    if rel > ENERGY_CONSISTENCY_TOL {
        return Err(SimError::ProfileValidation {
            record,
            reason: format!(
                "energy {:.2} kWh is inconsistent with power x JCT = {:.2} kWh ({:.2}% off)",
                p.total_energy_kwh,
                implied,
                rel * 100.0
            ),
        });
    }
    let implied_jct = f64::from(p.n_epochs) * p.epoch_time_h;
    if (implied_jct - p.jct_h).abs() / p.jct_h > EPOCH_CONSISTENCY_TOL {
        return Err(SimError::ProfileValidation {
            record,
            reason: format!(
                "n_epochs x epoch_time = {implied_jct:.2} h does not match JCT {:.2} h",
                p.jct_h
            ),
        });
    }
    check_util_pair(&record, "memory", p.avg_mem_util, p.max_mem_util)?;
    check_util_pair(&record, "GPU", p.avg_gpu_util, p.max_gpu_util)
}

fn validate_colocated(
    c: &CoLocationProfile,
    exclusive: &BTreeMap<String, BTreeMap<u32, JobProfile>>,
) -> Result<()> {
    let record = format!("colocated '{}'", c.set_label());
    if c.model_set.len() < 2 {
        return Err(SimError::ProfileValidation {
            record,
            reason: "a co-location profile needs at least two members".into(),
        });
    }
    if c.avg_power_w <= 0.0 || c.total_energy_kwh <= 0.0 || c.avg_jct_h <= 0.0 {
        return Err(SimError::ProfileValidation {
            record,
            reason: "power, energy and JCT must be positive".into(),
        });
    }
    for m in &c.model_set {
        if !exclusive.get(m).map(|x| x.contains_key(&c.gpu_count)).unwrap_or(false) {
            return Err(SimError::ProfileValidation {
                record,
                reason: format!("member '{m}' has no exclusive profile for {} GPUs", c.gpu_count),
            });
        }
    }
    let implied = c.avg_power_w * c.avg_jct_h / 1000.0;
    let rel = (implied - c.total_energy_kwh).abs() / c.total_energy_kwh;
    match c.avg_epoch_time_h {
        Some(e) => {
            if e <= 0.0 {
                return Err(SimError::ProfileValidation {
                    record,
                    reason: "epoch time must be positive".into(),
                });
            }
            if rel > ENERGY_CONSISTENCY_TOL {
                return Err(SimError::ProfileValidation {
                    record,
                    reason: format!(
                        "energy {:.2} kWh is inconsistent with power x avg JCT = {:.2} kWh ({:.2}% off)",
                        c.total_energy_kwh,
                        implied,
                        rel * 100.0
                    ),
                });
            }
        }
        // No per-epoch attribution: the members stopped completing in
        // lockstep, so the reported average power spans a window longer
        // than the mean JCT. Require the implied window to cover it.
        None => {
            let implied_window = c.total_energy_kwh / c.avg_power_w * 1000.0;
            if implied_window + 1e-9 < c.avg_jct_h {
                return Err(SimError::ProfileValidation {
                    record,
                    reason: format!(
                        "implied active window {implied_window:.2} h is shorter than avg JCT {:.2} h",
                        c.avg_jct_h
                    ),
                });
            }
        }
    }
    check_util_pair(&record, "memory", c.avg_mem_util, c.max_mem_util)?;
    check_util_pair(&record, "GPU", c.avg_gpu_util, c.max_gpu_util)
}

/// Weighted least squares for the slowdown coefficients with a
/// non-negativity clamp, followed by the base-power fit.
fn fit_fallback_impl(
    exclusive: &BTreeMap<String, BTreeMap<u32, JobProfile>>,
    colocated: &BTreeMap<(ModelSet, u32), CoLocationProfile>,
) -> Result<FallbackModel> {
    let member = |set: &ModelSet, gc: u32, m: &String| -> Result<&JobProfile> {
        exclusive.get(m).and_then(|x| x.get(&gc)).ok_or_else(|| {
            SimError::DegenerateFit(format!("no exclusive profile for '{m}' in set {set:?}"))
        })
    };

    // Slowdown rows: co-location profiles that report an epoch time.
    // target = measured set-average epoch over the members' mean exclusive
    // effective epoch.
    struct Row {
        x_util: f64,
        x_count: f64,
        target: f64,
    }
    let mut rows = Vec::new();
    for ((set, gc), cp) in colocated {
        let Some(epoch) = cp.avg_epoch_time_h else { continue };
        let mut mean_excl = 0.0;
        let mut sum_util = 0.0;
        for m in set {
            let p = member(set, *gc, m)?;
            mean_excl += p.effective_epoch_h();
            sum_util += p.avg_gpu_util;
        }
        mean_excl /= set.len() as f64;
        rows.push(Row {
            x_util: (sum_util - UTIL_SATURATION_DEFAULT).max(0.0) / 100.0,
            x_count: set.len() as f64 - 1.0,
            target: epoch / mean_excl,
        });
    }
    if rows.len() < 2 {
        return Err(SimError::DegenerateFit(format!(
            "need at least 2 co-location profiles with epoch times, have {}",
            rows.len()
        )));
    }

    // Minimize sum over rows of ((1 + a*x_util + b*x_count - target)/target)^2
    // subject to a, b >= 0. Closed-form 2x2 normal equations; if a coefficient
    // comes out negative, refit with it pinned at zero.
    let solve = |pin_util: bool, pin_count: bool| -> (f64, f64, f64) {
        let (mut s_uu, mut s_uc, mut s_cc, mut s_ur, mut s_cr) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for r in &rows {
            let w = 1.0 / (r.target * r.target);
            let (xu, xc) = (if pin_util { 0.0 } else { r.x_util }, if pin_count { 0.0 } else { r.x_count });
            let rhs = r.target - 1.0;
            s_uu += w * xu * xu;
            s_uc += w * xu * xc;
            s_cc += w * xc * xc;
            s_ur += w * xu * rhs;
            s_cr += w * xc * rhs;
        }
        let det = s_uu * s_cc - s_uc * s_uc;
        let (a, b) = if pin_util && pin_count {
            (0.0, 0.0)
        } else if pin_util {
            (0.0, if s_cc > 0.0 { s_cr / s_cc } else { 0.0 })
        } else if pin_count {
            (if s_uu > 0.0 { s_ur / s_uu } else { 0.0 }, 0.0)
        } else if det.abs() > 1e-18 {
            ((s_cc * s_ur - s_uc * s_cr) / det, (s_uu * s_cr - s_uc * s_ur) / det)
        } else {
            (0.0, if s_cc > 0.0 { s_cr / s_cc } else { 0.0 })
        };
        let sse: f64 = rows
            .iter()
            .map(|r| {
                let pred = 1.0 + a * r.x_util + b * r.x_count;
                let e = (pred - r.target) / r.target;
                e * e
            })
            .sum();
        (a, b, sse)
    };

    let mut best = solve(false, false);
    if best.0 < 0.0 || best.1 < 0.0 {
        best = [solve(true, false), solve(false, true), solve(true, true)]
            .into_iter()
            .filter(|(a, b, _)| *a >= 0.0 && *b >= 0.0)
            .min_by(|x, y| x.2.total_cmp(&y.2))
            .unwrap_or((0.0, 0.0, f64::INFINITY));
    }
    let (coeff_util, coeff_count, _) = best;

    // Base power: minimize squared relative error of the additive model
    // against every co-located power row, in energy-consistent watts.
    let mut num = 0.0;
    let mut den = 0.0;
    for ((set, gc), cp) in colocated {
        let target = cp.consistent_power_w();
        let mut sum_p = 0.0;
        for m in set {
            sum_p += member(set, *gc, m)?.consistent_power_w();
        }
        let n1 = set.len() as f64 - 1.0;
        let w = 1.0 / (target * target);
        num += w * n1 * (sum_p - target);
        den += w * n1 * n1;
    }
    if den <= 0.0 {
        return Err(SimError::DegenerateFit("no multi-member power rows to fit the base against".into()));
    }

    Ok(FallbackModel {
        base_power_w: num / den,
        slowdown_coeff_util: coeff_util,
        slowdown_coeff_count: coeff_count,
        util_saturation: UTIL_SATURATION_DEFAULT,
        safety_margin: SAFETY_MARGIN_DEFAULT,
    })
}
