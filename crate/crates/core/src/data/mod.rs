//! Time-series containers, normalization, missingness emulation, windowing
//! and synthetic generators.

mod csv_io;
mod split;
mod synth;

pub use csv_io::{
    load_csv, load_mask_csv, mask_path, read_csv, save_csv, save_mask_csv, write_csv,
};
pub use split::{split, window, DatasetSplit, SplitFractions};
pub use synth::{ar_seasonal, random_walk, synth_cloud, SynthConfig};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::DistVector;
use crate::rng::seeded;

/// `T x N` series with a per-cell observed mask. Missing cells hold `NaN`
/// internally and are only reachable through [`TimeSeries::get`] as `None`.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    steps: usize,
    dims: usize,
    /// Index of the first row in the source timeline.
    start: i64,
    values: Vec<f64>,
    observed: Vec<bool>,
}

impl TimeSeries {
    /// A fully observed series from row-major values.
    pub fn complete(steps: usize, dims: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != steps * dims {
            return Err(Error::Shape(format!(
                "{} values for {steps}x{dims}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite value in complete series".into()));
        }
        Ok(Self {
            steps,
            dims,
            start: 0,
            values,
            observed: vec![true; steps * dims],
        })
    }

    pub fn from_rows(rows: &[Vec<Option<f64>>], dims: usize) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * dims);
        let mut observed = Vec::with_capacity(rows.len() * dims);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != dims {
                return Err(Error::Shape(format!(
                    "row {t} has {} cells, expected {dims}",
                    row.len()
                )));
            }
            for cell in row {
                match cell {
                    Some(v) if v.is_finite() => {
                        values.push(*v);
                        observed.push(true);
                    }
                    Some(v) => return Err(Error::Data(format!("non-finite value {v} at row {t}"))),
                    None => {
                        values.push(f64::NAN);
                        observed.push(false);
                    }
                }
            }
        }
        Ok(Self {
            steps: rows.len(),
            dims,
            start: 0,
            values,
            observed,
        })
    }

    pub fn with_start(mut self, start: i64) -> Self {
        self.start = start;
        self
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn get(&self, t: usize, d: usize) -> Option<f64> {
        let i = t * self.dims + d;
        self.observed[i].then(|| self.values[i])
    }

    pub fn is_observed(&self, t: usize, d: usize) -> bool {
        self.observed[t * self.dims + d]
    }

    pub fn row(&self, t: usize) -> Vec<Option<f64>> {
        (0..self.dims).map(|d| self.get(t, d)).collect()
    }

    /// Row values; panics on a missing cell.
    pub fn row_complete(&self, t: usize) -> &[f64] {
        let r = &self.values[t * self.dims..(t + 1) * self.dims];
        assert!(
            self.observed[t * self.dims..(t + 1) * self.dims]
                .iter()
                .all(|&o| o),
            "row {t} has missing cells"
        );
        r
    }

    /// Observed cells of a fully observed row as a certain belief.
    pub fn row_certain(&self, t: usize) -> DistVector {
        DistVector::certain(self.row_complete(t))
    }

    pub fn is_complete(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    pub fn missing_count(&self) -> usize {
        self.observed.iter().filter(|&&o| !o).count()
    }

    pub fn mask(&self) -> &[bool] {
        &self.observed
    }

    pub fn set_missing(&mut self, t: usize, d: usize) {
        let i = t * self.dims + d;
        self.observed[i] = false;
        self.values[i] = f64::NAN;
    }

    pub fn set(&mut self, t: usize, d: usize, v: f64) {
        let i = t * self.dims + d;
        self.observed[i] = true;
        self.values[i] = v;
    }

    /// Rows `from .. from + len` as a new series.
    pub fn slice(&self, from: usize, len: usize) -> Result<Self> {
        if from + len > self.steps {
            return Err(Error::Range(format!(
                "slice {from}+{len} beyond {} steps",
                self.steps
            )));
        }
        let a = from * self.dims;
        let b = (from + len) * self.dims;
        Ok(Self {
            steps: len,
            dims: self.dims,
            start: self.start + from as i64,
            values: self.values[a..b].to_vec(),
            observed: self.observed[a..b].to_vec(),
        })
    }

    /// Column `d` with missing cells as `None`.
    pub fn column(&self, d: usize) -> Vec<Option<f64>> {
        (0..self.steps).map(|t| self.get(t, d)).collect()
    }

    fn map_observed(&self, f: impl Fn(usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for (i, v) in out.values.iter_mut().enumerate() {
            if self.observed[i] {
                *v = f(i % self.dims, *v);
            }
        }
        out
    }
}

impl PartialEq for TimeSeries {
    fn eq(&self, other: &Self) -> bool {
        self.steps == other.steps
            && self.dims == other.dims
            && self.start == other.start
            && self.observed == other.observed
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.observed)
                .all(|((a, b), &o)| !o || a.to_bits() == b.to_bits())
    }
}

/// Per-dimension location and scale used to z-score series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-6;

impl NormStats {
    /// Population mean and std over the observed cells of `series`.
    pub fn fit(series: &[TimeSeries]) -> Result<Self> {
        let dims = series
            .first()
            .ok_or_else(|| Error::Data("no series to fit statistics on".into()))?
            .dims;
        let mut count = vec![0usize; dims];
        let mut sum = vec![0.0; dims];
        for s in series {
            if s.dims != dims {
                return Err(Error::Shape(format!(
                    "series with {} dims among {dims}-dim series",
                    s.dims
                )));
            }
            for t in 0..s.steps {
                for d in 0..dims {
                    if let Some(v) = s.get(t, d) {
                        count[d] += 1;
                        sum[d] += v;
                    }
                }
            }
        }
        if let Some(d) = count.iter().position(|&c| c == 0) {
            return Err(Error::Data(format!("dimension {d} has no observed values")));
        }
        let mean: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
        let mut sq = vec![0.0; dims];
        for s in series {
            for t in 0..s.steps {
                for d in 0..dims {
                    if let Some(v) = s.get(t, d) {
                        sq[d] += (v - mean[d]).powi(2);
                    }
                }
            }
        }
        let std = sq
            .iter()
            .zip(&count)
            .map(|(q, &c)| (q / c as f64).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn identity(dims: usize) -> Self {
        Self {
            mean: vec![0.0; dims],
            std: vec![1.0; dims],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() {
            return Err(Error::Shape("normalization mean/std lengths differ".into()));
        }
        if self
            .std
            .iter()
            .any(|s| !(*s >= STD_FLOOR) || !s.is_finite())
            || self.mean.iter().any(|m| !m.is_finite())
        {
            return Err(Error::Data("normalization statistics out of range".into()));
        }
        Ok(())
    }

    fn check(&self, series: &TimeSeries) -> Result<()> {
        if series.dims != self.dims() {
            return Err(Error::Shape(format!(
                "{}-dim statistics for a {}-dim series",
                self.dims(),
                series.dims
            )));
        }
        Ok(())
    }

    pub fn normalize(&self, series: &TimeSeries) -> Result<TimeSeries> {
        self.check(series)?;
        Ok(series.map_observed(|d, v| (v - self.mean[d]) / self.std[d]))
    }

    pub fn denormalize(&self, series: &TimeSeries) -> Result<TimeSeries> {
        self.check(series)?;
        Ok(series.map_observed(|d, v| v * self.std[d] + self.mean[d]))
    }

    /// A normalized-unit belief mapped to original units.
    pub fn denormalize_belief(&self, b: &DistVector) -> DistVector {
        let mu = b
            .mu()
            .iter()
            .enumerate()
            .map(|(d, m)| m * self.std[d] + self.mean[d])
            .collect();
        let sigma = b
            .sigma()
            .iter()
            .enumerate()
            .map(|(d, s)| s * self.std[d])
            .collect();
        DistVector::from_parts_unchecked(mu, sigma)
    }
}

/// Removes each cell independently with probability `rate`. The input must be
/// fully observed; it stays untouched and serves as ground truth.
pub fn emulate_missing(series: &TimeSeries, rate: f64, seed: u64) -> Result<TimeSeries> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Range(format!("missing rate {rate} not in [0, 1)")));
    }
    if !series.is_complete() {
        return Err(Error::Data(
            "missingness can only be emulated on a fully observed series".into(),
        ));
    }
    let mut rng = seeded(seed);
    let mut out = series.clone();
    for t in 0..series.steps {
        for d in 0..series.dims {
            if rng.random::<f64>() < rate {
                out.set_missing(t, d);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_worked_example() {
        let s = TimeSeries::complete(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let stats = NormStats::fit(std::slice::from_ref(&s)).unwrap();
        assert!((stats.mean[0] - 2.0).abs() < 1e-15);
        assert!((stats.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let n = stats.normalize(&s).unwrap();
        let want = [-1.22474, 0.0, 1.22474];
        for t in 0..3 {
            assert!((n.get(t, 0).unwrap() - want[t]).abs() < 1e-5);
        }
    }

    #[test]
    fn constant_dimension_is_floored() {
        let s = TimeSeries::complete(4, 2, vec![5.0, 1.0, 5.0, 2.0, 5.0, 3.0, 5.0, 4.0]).unwrap();
        let stats = NormStats::fit(std::slice::from_ref(&s)).unwrap();
        assert_eq!(stats.std[0], STD_FLOOR);
        let n = stats.normalize(&s).unwrap();
        assert!((0..4).all(|t| n.get(t, 0) == Some(0.0)));
    }

    #[test]
    fn mask_survives_normalization() {
        let rows = vec![
            vec![Some(1.0), None],
            vec![None, Some(3.0)],
            vec![Some(2.0), Some(4.0)],
        ];
        let s = TimeSeries::from_rows(&rows, 2).unwrap();
        let stats = NormStats::fit(std::slice::from_ref(&s)).unwrap();
        let n = stats.normalize(&s).unwrap();
        assert_eq!(n.mask(), s.mask());
        assert_eq!(stats.normalize(&s).unwrap().missing_count(), 2);
    }

    #[test]
    fn emulate_missing_rates_and_determinism() {
        let s = TimeSeries::complete(100, 3, (0..300).map(|i| i as f64).collect()).unwrap();
        assert_eq!(emulate_missing(&s, 0.0, 1).unwrap(), s);
        let a = emulate_missing(&s, 0.5, 42).unwrap();
        let b = emulate_missing(&s, 0.5, 42).unwrap();
        assert_eq!(a, b);
        let masked = a.missing_count() as i64;
        assert!((masked - 150).abs() <= 50, "{masked}");
        for t in 0..100 {
            for d in 0..3 {
                if let Some(v) = a.get(t, d) {
                    assert_eq!(Some(v), s.get(t, d));
                }
            }
        }
        assert!(emulate_missing(&a, 0.1, 1).is_err());
        assert!(emulate_missing(&s, 1.0, 1).is_err());
    }

    proptest! {
        #[test]
        fn denormalize_inverts_normalize(
            vals in proptest::collection::vec(-1e6..1e6f64, 12),
        ) {
            let s = TimeSeries::complete(4, 3, vals).unwrap();
            let stats = NormStats::fit(std::slice::from_ref(&s)).unwrap();
            let back = stats.denormalize(&stats.normalize(&s).unwrap()).unwrap();
            for t in 0..4 {
                for d in 0..3 {
                    let (a, b) = (s.get(t, d).unwrap(), back.get(t, d).unwrap());
                    prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
                }
            }
        }
    }
}
