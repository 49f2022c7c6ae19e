//! Evaluation harness: emulate missingness on held-out windows, run each
//! method's filtering pass, and score one-step forecasts against the retained
//! ground truth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{filter_with_method, Method};
use crate::data::{emulate_missing, TimeSeries};
use crate::error::{Error, Result};
use crate::fmt::fmt17;
use crate::forecaster::UPropModel;
use crate::prob::{nll_term, Z95};
use crate::rng::derive_seed;

const MASK_TAG: u64 = 0x3a5c;
const SAMPLE_TAG: u64 = 0x5a3e;

/// Seed of the missingness mask for one window. Shared by every method and
/// lookahead so all cells of a row see the same gaps.
pub fn mask_seed(seed: u64, rate: f64, window: usize) -> u64 {
    derive_seed(seed, &[MASK_TAG, rate.to_bits(), window as u64])
}

/// Seed of the sample-imputation stream for one window of one grid cell.
pub fn sample_seed(seed: u64, rate: f64, lookahead: usize, method: Method, window: usize) -> u64 {
    derive_seed(
        seed,
        &[
            SAMPLE_TAG,
            rate.to_bits(),
            lookahead as u64,
            method as u64,
            window as u64,
        ],
    )
}

/// Sums over the scored cells of one or more windows.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScoreTally {
    pub nll_sum: f64,
    pub inside95: usize,
    pub count: usize,
}

impl ScoreTally {
    pub fn merge(&mut self, other: &ScoreTally) {
        self.nll_sum += other.nll_sum;
        self.inside95 += other.inside95;
        self.count += other.count;
    }

    /// Per-point NLL.
    pub fn mean_nll(&self) -> f64 {
        self.nll_sum / self.count as f64
    }

    pub fn coverage(&self) -> f64 {
        self.inside95 as f64 / self.count as f64
    }
}

/// Scores the one-step forecasts of a masked copy of `truth` (both
/// normalized) for every cell of rows `max(warmup, 1)..`. Row 0 has no
/// forecast.
pub fn score_window(
    model: &UPropModel,
    truth: &TimeSeries,
    masked: &TimeSeries,
    method: Method,
    seed: u64,
    warmup: usize,
) -> Result<ScoreTally> {
    if !truth.is_complete() {
        return Err(Error::Data("ground truth window has missing cells".into()));
    }
    let steps = filter_with_method(model, masked, method, seed)?;
    let mut tally = ScoreTally::default();
    for t in warmup.max(1)..truth.steps() {
        let b = steps[t - 1].forecast.at(1);
        for (d, &x) in truth.row_complete(t).iter().enumerate() {
            let (m, s) = (b.mu()[d], b.sigma()[d]);
            tally.nll_sum += nll_term(m, s, x);
            tally.inside95 += usize::from((x - m).abs() <= Z95 * s);
            tally.count += 1;
        }
    }
    Ok(tally)
}

/// Scores `method` over raw-unit test windows at one missing rate.
pub fn evaluate_cell(
    model: &UPropModel,
    windows: &[TimeSeries],
    rate: f64,
    lookahead: usize,
    method: Method,
    seed: u64,
    warmup: Option<usize>,
) -> Result<ScoreTally> {
    if windows.is_empty() {
        return Err(Error::Data("no evaluation windows".into()));
    }
    let mut total = ScoreTally::default();
    for (w, raw) in windows.iter().enumerate() {
        let truth = model.norm.normalize(raw)?;
        let masked = emulate_missing(&truth, rate, mask_seed(seed, rate, w))?;
        let tally = score_window(
            model,
            &truth,
            &masked,
            method,
            sample_seed(seed, rate, lookahead, method, w),
            warmup.unwrap_or(0),
        )?;
        total.merge(&tally);
    }
    if total.count == 0 {
        return Err(Error::Data("warmup leaves no scored cells".into()));
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub missing_rate: f64,
    pub lookahead: usize,
    pub method: Method,
    pub nll: f64,
    pub coverage95: f64,
    pub count: usize,
}

/// Per-point NLL for every (missing rate, lookahead, method).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub rates: Vec<f64>,
    pub lookaheads: Vec<usize>,
    pub methods: Vec<Method>,
    /// Rate-major, then lookahead, then method.
    pub cells: Vec<EvalCell>,
}

impl EvalGrid {
    fn index(&self, ri: usize, ki: usize, mi: usize) -> usize {
        (ri * self.lookaheads.len() + ki) * self.methods.len() + mi
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, ri: usize, ki: usize, method: Method) -> Option<&EvalCell> {
        let mi = self.methods.iter().position(|m| *m == method)?;
        self.cells.get(self.index(ri, ki, mi))
    }

    /// `method - uprop` per-point NLL.
    pub fn difference(&self, ri: usize, ki: usize, method: Method) -> Option<f64> {
        Some(self.cell(ri, ki, method)?.nll - self.cell(ri, ki, Method::Uprop)?.nll)
    }

    /// Rows are missing rates, columns lookaheads.
    pub fn difference_table(&self, method: Method) -> Option<Vec<Vec<f64>>> {
        (0..self.rates.len())
            .map(|ri| {
                (0..self.lookaheads.len())
                    .map(|ki| self.difference(ri, ki, method))
                    .collect()
            })
            .collect()
    }

    /// Long format: `missing_rate,lookahead,method,nll,coverage95,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("missing_rate,lookahead,method,nll,coverage95,count\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt17(c.missing_rate),
                c.lookahead,
                c.method,
                fmt17(c.nll),
                fmt17(c.coverage95),
                c.count
            ));
        }
        out
    }

    /// Difference table with one row per missing rate and one column per
    /// lookahead.
    pub fn difference_csv(&self, method: Method) -> Option<String> {
        let table = self.difference_table(method)?;
        let mut out = String::from("missing_rate");
        for k in &self.lookaheads {
            out.push_str(&format!(",k{k}"));
        }
        out.push('\n');
        for (rate, row) in self.rates.iter().zip(&table) {
            out.push_str(&fmt17(*rate));
            for v in row {
                out.push(',');
                out.push_str(&fmt17(*v));
            }
            out.push('\n');
        }
        Some(out)
    }
}

/// Runs every grid cell in parallel. `models` pairs each training lookahead
/// with its model; `windows` are raw-unit, fully observed test windows.
pub fn evaluate_grid(
    models: &[(usize, &UPropModel)],
    windows: &[TimeSeries],
    rates: &[f64],
    methods: &[Method],
    seed: u64,
    warmup: Option<usize>,
) -> Result<EvalGrid> {
    if models.is_empty() || rates.is_empty() || methods.is_empty() {
        return Err(Error::Config(
            "evaluation grid needs models, rates and methods".into(),
        ));
    }
    if let Some(r) = rates.iter().find(|r| !(0.0..1.0).contains(*r)) {
        return Err(Error::Range(format!("missing rate {r} not in [0, 1)")));
    }
    let jobs: Vec<(f64, usize, &UPropModel, Method)> = rates
        .iter()
        .flat_map(|&r| {
            models
                .iter()
                .flat_map(move |&(k, m)| methods.iter().map(move |&meth| (r, k, m, meth)))
        })
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(rate, k, model, method)| {
            let t = evaluate_cell(model, windows, rate, k, method, seed, warmup)?;
            Ok(EvalCell {
                missing_rate: rate,
                lookahead: k,
                method,
                nll: t.mean_nll(),
                coverage95: t.coverage(),
                count: t.count,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalGrid {
        rates: rates.to_vec(),
        lookaheads: models.iter().map(|(k, _)| *k).collect(),
        methods: methods.to_vec(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ar_seasonal, window, NormStats};
    use crate::forecaster::ModelConfig;

    fn model(seed: u64) -> UPropModel {
        let cfg = ModelConfig {
            dims: 2,
            layers: 1,
            hidden: 5,
            dropout: 0.1,
            readout_hidden: vec![],
            sigma_floor: 1e-3,
        };
        UPropModel::new(cfg, NormStats::identity(2), seed).unwrap()
    }

    fn windows() -> Vec<TimeSeries> {
        window(&ar_seasonal(2, 120, 4), 40, 40).unwrap()
    }

    #[test]
    fn grid_shape_and_zero_rate_equivalence() {
        let (a, b) = (model(1), model(2));
        let grid = evaluate_grid(
            &[(2, &a), (4, &b)],
            &windows(),
            &[0.0, 0.2, 0.5],
            &Method::ALL,
            9,
            None,
        )
        .unwrap();
        assert_eq!(grid.len(), 3 * 2 * 3);
        for ki in 0..2 {
            for m in Method::ALL {
                assert_eq!(grid.difference(0, ki, m), Some(0.0));
                assert_eq!(
                    grid.cell(0, ki, m).unwrap().nll,
                    grid.cell(0, ki, Method::Uprop).unwrap().nll
                );
            }
        }
        let diff = grid.difference_table(Method::Mean).unwrap();
        for (ri, row) in diff.iter().enumerate() {
            for (ki, v) in row.iter().enumerate() {
                let expected = grid.cell(ri, ki, Method::Mean).unwrap().nll
                    - grid.cell(ri, ki, Method::Uprop).unwrap().nll;
                assert_eq!(*v, expected);
            }
        }
        let again = evaluate_grid(
            &[(2, &a), (4, &b)],
            &windows(),
            &[0.0, 0.2, 0.5],
            &Method::ALL,
            9,
            None,
        )
        .unwrap();
        assert_eq!(grid, again);
    }

    #[test]
    fn scored_cell_count() {
        let m = model(3);
        let t = evaluate_cell(&m, &windows(), 0.2, 2, Method::Uprop, 1, None).unwrap();
        assert_eq!(t.count, 3 * (40 - 1) * 2);
        let warm = evaluate_cell(&m, &windows(), 0.2, 2, Method::Uprop, 1, Some(10)).unwrap();
        assert_eq!(warm.count, 3 * (40 - 10) * 2);
        assert!((0.0..=1.0).contains(&t.coverage()));
    }

    #[test]
    fn csv_shapes() {
        let m = model(4);
        let grid = evaluate_grid(
            &[(2, &m), (8, &m)],
            &windows(),
            &[0.05, 0.1],
            &Method::ALL,
            0,
            None,
        )
        .unwrap();
        assert_eq!(grid.to_csv().lines().count(), 1 + 12);
        let d = grid.difference_csv(Method::Sample).unwrap();
        assert_eq!(d.lines().next().unwrap(), "missing_rate,k2,k8");
        assert_eq!(d.lines().count(), 3);
        let no_uprop =
            evaluate_grid(&[(2, &m)], &windows(), &[0.1], &[Method::Mean], 0, None).unwrap();
        assert!(no_uprop.difference(0, 0, Method::Mean).is_none());
    }

    #[test]
    fn rejects_bad_rates() {
        let m = model(5);
        assert!(evaluate_grid(&[(2, &m)], &windows(), &[1.0], &Method::ALL, 0, None).is_err());
    }
}
