//! Per-phone Gaussian duration models and the goodness-of-phonemic-duration
//! score (log-density of an observed duration under the phone's Gaussian).

use std::collections::BTreeMap;

use crate::align::{spans_to_durations, Alignment, HOP_MS};
use crate::error::{Error, Result};
use crate::inventory;

pub const STD_FLOOR_MS: f64 = 5.0;
pub const MIN_COUNT: usize = 10;
pub const GLOBAL_KEY: &str = "__GLOBAL__";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DurationStats {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub count: usize,
}

impl DurationStats {
    pub fn log_density(&self, duration_ms: f64) -> f64 {
        let z = duration_ms - self.mean_ms;
        -(self.std_ms * (2.0 * std::f64::consts::PI).sqrt()).ln()
            - z * z / (2.0 * self.std_ms * self.std_ms)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DurationModel {
    pub phones: BTreeMap<String, DurationStats>,
    pub global: Option<DurationStats>,
}

impl DurationModel {
    /// The entry used for `phone`: its own if it has at least
    /// [`MIN_COUNT`] samples, otherwise the pooled global entry.
    pub fn entry(&self, phone: &str) -> Result<DurationStats> {
        match (self.phones.get(phone), self.global) {
            (Some(s), _) if s.count >= MIN_COUNT => Ok(*s),
            (_, Some(g)) => Ok(g),
            (Some(s), None) => Ok(*s),
            (None, None) => Err(Error::MissingDuration(phone.to_string())),
        }
    }

    pub fn delegates(&self, phone: &str) -> bool {
        self.phones.get(phone).is_none_or(|s| s.count < MIN_COUNT)
    }
}

/// Running sum/sum-of-squares accumulator. Merging two accumulators is
/// associative, so partial fits over disjoint shards can be combined.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    fn stats(&self) -> DurationStats {
        let sample_std = if self.count > 1 {
            (self.m2 / (self.count - 1) as f64).sqrt()
        } else {
            0.0
        };
        DurationStats {
            mean_ms: self.mean,
            std_ms: sample_std.max(STD_FLOOR_MS),
            count: self.count,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct DurationFitter {
    phones: BTreeMap<String, Accumulator>,
    global: Accumulator,
}

impl DurationFitter {
    pub fn push(&mut self, phone: &str, duration_ms: f64) {
        self.phones.entry(phone.to_string()).or_default().push(duration_ms);
        self.global.push(duration_ms);
    }

    pub fn push_alignment(&mut self, alignment: &Alignment) {
        for (phone, d) in spans_to_durations(alignment, HOP_MS) {
            self.push(&phone, d);
        }
    }

    pub fn merge(&mut self, other: &DurationFitter) {
        for (p, acc) in &other.phones {
            self.phones.entry(p.clone()).or_default().merge(acc);
        }
        self.global.merge(&other.global);
    }

    pub fn finish(&self) -> Result<DurationModel> {
        if self.global.count == 0 {
            return Err(Error::Empty("no duration samples".into()));
        }
        Ok(DurationModel {
            phones: self.phones.iter().map(|(p, a)| (p.clone(), a.stats())).collect(),
            global: Some(self.global.stats()),
        })
    }
}

pub fn fit_durations<S: AsRef<str>>(
    samples: impl IntoIterator<Item = (S, f64)>,
) -> Result<DurationModel> {
    let mut fitter = DurationFitter::default();
    for (p, d) in samples {
        fitter.push(p.as_ref(), d);
    }
    fitter.finish()
}

pub fn gopd(duration_ms: f64, phone: &str, model: &DurationModel) -> Result<f64> {
    if !(duration_ms > 0.0 && duration_ms.is_finite()) {
        return Err(Error::Domain(format!("duration {duration_ms} ms is not positive")));
    }
    inventory::index_of(phone)?;
    Ok(model.entry(phone)?.log_density(duration_ms))
}

pub fn gopd_vector(alignment: &Alignment, model: &DurationModel) -> Result<Vec<f64>> {
    spans_to_durations(alignment, HOP_MS)
        .iter()
        .map(|(p, d)| gopd(*d, p, model))
        .collect()
}
