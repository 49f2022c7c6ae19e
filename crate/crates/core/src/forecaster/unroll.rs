//! Sequence loss and its gradient by backpropagation through time.
//!
//! A [`SequencePlan`] describes one unrolled pass: per step, either a given
//! input belief or feedback of the previous step's prediction, an optional
//! ground-truth target scored against the step's prediction, and whether
//! inter-layer dropout is active. Gradients flow through the feedback edges,
//! so multi-step rollout losses are differentiated exactly.

use rand::Rng;

use super::model::{UPropModel, Weights};
use crate::data::TimeSeries;
use crate::error::{Error, Result};
use crate::nn::{ReadoutCache, StackStepCache};
use crate::prob::{nll_term, SigmaSquash};

#[derive(Debug, Clone, PartialEq)]
pub enum StepInput {
    /// Flattened `[mu, sigma]` input.
    Given(Vec<f64>),
    /// The previous step's prediction.
    Feedback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanStep {
    pub input: StepInput,
    pub target: Option<Vec<f64>>,
    pub dropout: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SequencePlan {
    pub steps: Vec<PlanStep>,
}

impl SequencePlan {
    /// Training pass on a complete normalized window: rows `0..anchor` are fed
    /// as certain observations with dropout on, then `k - 1` predictions are
    /// fed back with dropout off; the `k` predictions are scored against rows
    /// `anchor .. anchor + k`.
    pub fn training(window: &TimeSeries, anchor: usize, k: usize) -> Result<Self> {
        if anchor == 0 || k == 0 || anchor + k > window.steps() {
            return Err(Error::Range(format!(
                "anchor {anchor} with lookahead {k} does not fit a {}-step window",
                window.steps()
            )));
        }
        let n = window.dims();
        let mut steps = Vec::with_capacity(anchor + k - 1);
        for s in 0..anchor + k - 1 {
            let input = if s < anchor {
                let mut flat = window.row_complete(s).to_vec();
                flat.extend(std::iter::repeat_n(0.0, n));
                StepInput::Given(flat)
            } else {
                StepInput::Feedback
            };
            let target = (s + 1 >= anchor).then(|| window.row_complete(s + 1).to_vec());
            steps.push(PlanStep {
                input,
                target,
                dropout: s < anchor,
            });
        }
        Ok(Self { steps })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    fn scored_terms(&self, dims: usize) -> usize {
        self.steps.iter().filter(|s| s.target.is_some()).count() * dims
    }
}

struct StepCache {
    stack: StackStepCache,
    readout: ReadoutCache,
    raw: Vec<f64>,
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

fn run<R: Rng + ?Sized>(
    weights: &Weights,
    squash: SigmaSquash,
    dims: usize,
    plan: &SequencePlan,
    rng: &mut R,
    mut keep: Option<&mut Vec<StepCache>>,
) -> Result<f64> {
    let terms = plan.scored_terms(dims);
    if terms == 0 {
        return Err(Error::Range("sequence plan scores no targets".into()));
    }
    let mut h = weights.stack.zero_state();
    let mut prev: Option<Vec<f64>> = None;
    let mut total = 0.0;
    for (s, step) in plan.steps.iter().enumerate() {
        let x = match &step.input {
            StepInput::Given(v) => {
                if v.len() != 2 * dims {
                    return Err(Error::Shape(format!(
                        "step {s} input has width {}",
                        v.len()
                    )));
                }
                v.clone()
            }
            StepInput::Feedback => prev
                .take()
                .ok_or_else(|| Error::Range("feedback at the first step".into()))?,
        };
        let (top, stack_cache) = weights.stack.step_cached(&x, &mut h, step.dropout, rng);
        let (raw, readout_cache) = weights.readout.forward_cached(&top);
        let mu = raw[..dims].to_vec();
        let sigma: Vec<f64> = raw[dims..].iter().map(|&r| squash.apply(r)).collect();
        if let Some(target) = &step.target {
            if target.len() != dims {
                return Err(Error::Shape(format!(
                    "step {s} target has width {}",
                    target.len()
                )));
            }
            total += (0..dims)
                .map(|d| nll_term(mu[d], sigma[d], target[d]))
                .sum::<f64>();
        }
        let mut flat = mu.clone();
        flat.extend_from_slice(&sigma);
        prev = Some(flat);
        if let Some(caches) = keep.as_deref_mut() {
            caches.push(StepCache {
                stack: stack_cache,
                readout: readout_cache,
                raw,
                mu,
                sigma,
            });
        }
    }
    Ok(total / terms as f64)
}

/// Mean per-point NLL of the plan's targets.
pub fn sequence_loss<R: Rng + ?Sized>(
    model: &UPropModel,
    plan: &SequencePlan,
    rng: &mut R,
) -> Result<f64> {
    run(&model.weights, model.squash, model.dims(), plan, rng, None)
}

/// Loss and its gradient with respect to every weight tensor.
pub fn sequence_loss_grad<R: Rng + ?Sized>(
    model: &UPropModel,
    plan: &SequencePlan,
    rng: &mut R,
) -> Result<(f64, Weights)> {
    let dims = model.dims();
    let weights = &model.weights;
    let mut caches = Vec::with_capacity(plan.len());
    let loss = run(weights, model.squash, dims, plan, rng, Some(&mut caches))?;
    let scale = 1.0 / plan.scored_terms(dims) as f64;

    let mut grads = weights.zeros_like();
    let mut dh_carry = weights.stack.zero_state();
    // dL/d[mu, sigma] of the current step's prediction arriving from the
    // next step's input
    let mut d_pred = vec![0.0; 2 * dims];
    for s in (0..plan.len()).rev() {
        let c = &caches[s];
        let mut d_raw = d_pred;
        if let Some(target) = &plan.steps[s].target {
            for d in 0..dims {
                let (m, sg) = (c.mu[d], c.sigma[d]);
                let e = target[d] - m;
                d_raw[d] += -e / (sg * sg) * scale;
                d_raw[dims + d] += (1.0 / sg - e * e / (sg * sg * sg)) * scale;
            }
        }
        for d in 0..dims {
            d_raw[dims + d] *= model.squash.derivative(c.raw[dims + d]);
        }
        let dtop = weights
            .readout
            .backward(&c.readout, &d_raw, &mut grads.readout);
        let dx = weights
            .stack
            .backward_step(&c.stack, &dtop, &mut dh_carry, &mut grads.stack);
        d_pred = match plan.steps[s].input {
            StepInput::Feedback => dx,
            StepInput::Given(_) => vec![0.0; 2 * dims],
        };
    }
    Ok((loss, grads))
}
