use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::TimeSeries;
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Contiguous windows of length `len` starting every `stride` steps.
pub fn window(series: &TimeSeries, len: usize, stride: usize) -> Result<Vec<TimeSeries>> {
    if len == 0 || stride == 0 {
        return Err(Error::Config(
            "window length and stride must be positive".into(),
        ));
    }
    if len > series.steps() {
        return Err(Error::Range(format!(
            "window length {len} exceeds series length {}",
            series.steps()
        )));
    }
    (0..=series.steps() - len)
        .step_by(stride)
        .map(|from| series.slice(from, len))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|f| !(0.0..=1.0).contains(f))
            || ((all.iter().sum::<f64>()) - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "split fractions {}/{}/{} must be in [0,1] and sum to 1",
                self.train, self.val, self.test
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<TimeSeries>,
    pub val: Vec<TimeSeries>,
    pub test: Vec<TimeSeries>,
}

/// Shuffles windows with `seed`, then partitions by `fractions`.
/// Train and validation counts are rounded; the test split takes the rest.
pub fn split(
    mut windows: Vec<TimeSeries>,
    fractions: SplitFractions,
    seed: u64,
) -> Result<DatasetSplit> {
    fractions.validate()?;
    let n = windows.len();
    windows.shuffle(&mut seeded(seed));
    let n_train = ((fractions.train * n as f64).round() as usize).min(n);
    let n_val = ((fractions.val * n as f64).round() as usize).min(n - n_train);
    let test = windows.split_off(n_train + n_val);
    let val = windows.split_off(n_train);
    Ok(DatasetSplit {
        train: windows,
        val,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(steps: usize) -> TimeSeries {
        TimeSeries::complete(steps, 1, (0..steps).map(|t| t as f64).collect()).unwrap()
    }

    #[test]
    fn window_counts() {
        assert_eq!(window(&series(120), 120, 1).unwrap().len(), 1);
        let w = window(&series(240), 120, 120).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[1].get(0, 0), Some(120.0));
        assert_eq!(w[1].start(), 120);
        assert_eq!(window(&series(10), 4, 3).unwrap().len(), 3);
        assert!(matches!(
            window(&series(100), 120, 120),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn split_80_10_10() {
        let windows: Vec<_> = (0..100).map(|i| series(2).with_start(i)).collect();
        let s = split(windows, SplitFractions::default(), 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (80, 10, 10));
        let mut starts: Vec<i64> = s
            .train
            .iter()
            .chain(&s.val)
            .chain(&s.test)
            .map(|w| w.start())
            .collect();
        starts.sort();
        assert_eq!(starts, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn split_is_seeded() {
        let windows: Vec<_> = (0..30).map(|i| series(2).with_start(i)).collect();
        let a = split(windows.clone(), SplitFractions::default(), 1).unwrap();
        let b = split(windows.clone(), SplitFractions::default(), 1).unwrap();
        let c = split(windows, SplitFractions::default(), 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn bad_fractions_rejected() {
        let f = SplitFractions {
            train: 0.8,
            val: 0.3,
            test: 0.1,
        };
        assert!(split(vec![], f, 0).is_err());
    }
}
