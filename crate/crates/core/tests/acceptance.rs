//! Acceptance suite. Every test prints one `PASS`/`FAIL` line for its
//! criterion and fails when the criterion is not met.
//!
//! The directional, calibration and detection criteria share one desk-scale
//! experiment: 10 synthetic nodes of 2000 steps, split by time into train
//! (rows 0..1600), validation (1600..1800) and test (1800..2000) regions, and
//! one model per training lookahead in {2, 4, 8, 16}.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;
use uprop::baselines::{filter_with_method, Method};
use uprop::checkpoint::ModelCheckpoint;
use uprop::data::{
    emulate_missing, random_walk, read_csv, synth_cloud, window, write_csv, SynthConfig,
};
use uprop::eval::{evaluate_cell, evaluate_grid, EvalGrid};
use uprop::forecaster::{
    filter_series, rollout, sequence_loss, sequence_loss_grad, train, SequencePlan,
};
use uprop::novelty::{calibrate_threshold, kl_scores, KlDirection};
use uprop::prob::{kl, nll, nll_term, DistVector};
use uprop::rng::{derive_seed, seeded};
use uprop::{ModelConfig, NormStats, TimeSeries, TrainConfig, UPropModel};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "[{}] criterion {id}: {name} | {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

const LOOKAHEADS: [usize; 4] = [2, 4, 8, 16];
const RATES: [f64; 4] = [0.05, 0.1, 0.2, 0.5];
const WINDOW: usize = 120;
const TRAIN_STRIDE: usize = 3;
const TEST_STRIDE: usize = 20;
const SEED: u64 = 2024;

struct Experiment {
    models: Vec<(usize, UPropModel)>,
    train_time: Vec<Duration>,
    val_streams: Vec<TimeSeries>,
    test_streams: Vec<TimeSeries>,
    test_windows: Vec<TimeSeries>,
}

fn experiment() -> &'static Experiment {
    static EXP: OnceLock<Experiment> = OnceLock::new();
    EXP.get_or_init(|| {
        let nodes = synth_cloud(&SynthConfig {
            nodes: 10,
            steps: 2000,
            seed: SEED,
        })
        .unwrap();
        let mut train_windows = Vec::new();
        let mut test_windows = Vec::new();
        let mut val_streams = Vec::new();
        let mut test_streams = Vec::new();
        for s in &nodes {
            train_windows.extend(window(&s.slice(0, 1600).unwrap(), WINDOW, TRAIN_STRIDE).unwrap());
            val_streams.push(s.slice(1600, 200).unwrap());
            let test = s.slice(1800, 200).unwrap();
            test_windows.extend(window(&test, WINDOW, TEST_STRIDE).unwrap());
            test_streams.push(test);
        }
        let model_config = ModelConfig {
            hidden: 32,
            ..ModelConfig::new(3)
        };
        let mut models = Vec::new();
        let mut train_time = Vec::new();
        for k in LOOKAHEADS {
            let config = TrainConfig {
                lookahead: k,
                epochs: 10,
                window_length: WINDOW,
                seed: SEED,
                ..TrainConfig::default()
            };
            let start = Instant::now();
            let (model, history) = train(&train_windows, &model_config, &config).unwrap();
            train_time.push(start.elapsed());
            println!(
                "trained k={k} in {:.1?}: loss {:.4} -> {:.4}",
                start.elapsed(),
                history[0],
                history[history.len() - 1]
            );
            models.push((k, model));
        }
        Experiment {
            models,
            train_time,
            val_streams,
            test_streams,
            test_windows,
        }
    })
}

fn grid() -> &'static EvalGrid {
    static GRID: OnceLock<EvalGrid> = OnceLock::new();
    GRID.get_or_init(|| {
        let exp = experiment();
        let refs: Vec<(usize, &UPropModel)> = exp.models.iter().map(|(k, m)| (*k, m)).collect();
        let mut rates = vec![0.0];
        rates.extend(RATES);
        let grid =
            evaluate_grid(&refs, &exp.test_windows, &rates, &Method::ALL, SEED, None).unwrap();
        for m in [Method::Mean, Method::Sample] {
            println!(
                "{m} - uprop per-point NLL\n{}",
                grid.difference_csv(m).unwrap()
            );
        }
        grid
    })
}

// criterion 1

fn small_random_model(rng: &mut impl Rng, seed: u64) -> (UPropModel, SequencePlan) {
    let dims = [2, 3][rng.random_range(0..2)];
    let hidden = [4, 8][rng.random_range(0..2)];
    let layers = rng.random_range(1..=2);
    let k = rng.random_range(1..=2);
    let cfg = ModelConfig {
        dims,
        layers,
        hidden,
        dropout: 0.2,
        readout_hidden: vec![],
        sigma_floor: 1e-3,
    };
    let model = UPropModel::new(cfg, NormStats::identity(dims), seed).unwrap();
    let steps = 10;
    let values = (0..steps * dims)
        .map(|_| rng.random_range(-1.5..1.5))
        .collect();
    let window = TimeSeries::complete(steps, dims, values).unwrap();
    let anchor = rng.random_range(3..=steps - k);
    (model, SequencePlan::training(&window, anchor, k).unwrap())
}

#[test]
fn c1_gradient_oracle() {
    let start = Instant::now();
    let mut rng = seeded(11);
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for case in 0..20u64 {
        let (model, plan) = small_random_model(&mut rng, case);
        let dropout_seed = 100 + case;
        let (_, grads) = sequence_loss_grad(&model, &plan, &mut seeded(dropout_seed)).unwrap();
        let h = 1e-5;
        let mut probe = model.clone();
        for (ti, g) in grads.tensors().iter().enumerate() {
            for i in 0..g.data.len() {
                let orig = probe.weights.tensors()[ti].data[i];
                probe.weights.tensors_mut()[ti].data[i] = orig + h;
                let up = sequence_loss(&probe, &plan, &mut seeded(dropout_seed)).unwrap();
                probe.weights.tensors_mut()[ti].data[i] = orig - h;
                let down = sequence_loss(&probe, &plan, &mut seeded(dropout_seed)).unwrap();
                probe.weights.tensors_mut()[ti].data[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = g.data[i];
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-4 && elapsed < Duration::from_secs(60);
    report(
        1,
        "gradient oracle",
        pass,
        &format!("20 models, {checked} partials, max rel err {worst:.2e}, {elapsed:.1?}"),
    );
}

// criterion 2

fn log_pdf(mu: f64, sigma: f64, x: f64) -> f64 {
    -0.5 * ((x - mu) / sigma).powi(2) - (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln()
}

fn pdf(mu: f64, sigma: f64, x: f64) -> f64 {
    log_pdf(mu, sigma, x).exp()
}

/// Composite Simpson rule with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn c2_closed_form_oracles() {
    let mut rng = seeded(22);
    let mut worst_nll: f64 = 0.0;
    let mut worst_kl: f64 = 0.0;
    for _ in 0..100 {
        let (m1, s1) = (rng.random_range(-3.0..3.0), rng.random_range(0.3..3.0));
        let (m2, s2) = (rng.random_range(-3.0..3.0), rng.random_range(0.3..3.0));
        let (a, b) = (m1 - 14.0 * s1, m1 + 14.0 * s1);
        let p = DistVector::new(vec![m1], vec![s1]).unwrap();
        let q = DistVector::new(vec![m2], vec![s2]).unwrap();
        // E_p[nll(q, x)] by quadrature of the library nll, against the Gaussian cross-entropy
        let cross = simpson(|x| pdf(m1, s1, x) * nll(&q, &[x]).unwrap(), a, b, 20_000);
        let closed = 0.5 * (2.0 * std::f64::consts::PI * s2 * s2).ln()
            + (s1 * s1 + (m1 - m2).powi(2)) / (2.0 * s2 * s2);
        let x = rng.random_range(-4.0..4.0);
        let direct = -log_pdf(m2, s2, x);
        worst_nll = worst_nll
            .max((closed - cross).abs())
            .max((nll(&q, &[x]).unwrap() - direct).abs());
        let kl_num = simpson(
            |x| pdf(m1, s1, x) * (log_pdf(m1, s1, x) - log_pdf(m2, s2, x)),
            a,
            b,
            20_000,
        );
        worst_kl = worst_kl.max((kl(&p, &q).unwrap() - kl_num).abs());
    }
    let nll_worked = nll_term(0.0, 1.0, 0.0);
    let kl_worked = kl(
        &DistVector::new(vec![0.0], vec![1.0]).unwrap(),
        &DistVector::new(vec![1.0], vec![2.0]).unwrap(),
    )
    .unwrap();
    let worked_ok =
        format!("{nll_worked:.6}") == "0.918939" && format!("{kl_worked:.6}") == "0.443147";
    let pass = worst_nll <= 1e-6 && worst_kl <= 1e-6 && worked_ok;
    report(
        2,
        "closed-form oracles",
        pass,
        &format!("max |nll err| {worst_nll:.1e}, max |kl err| {worst_kl:.1e}, worked {nll_worked:.6} / {kl_worked:.6}"),
    );
}

// criterion 3

#[test]
fn c3_no_missing_equivalence() {
    let exp = experiment();
    let grid = grid();
    let mut forecasts_identical = true;
    for (_, model) in &exp.models {
        for (w, raw) in exp.test_windows.iter().enumerate().take(10) {
            let s = emulate_missing(&model.norm.normalize(raw).unwrap(), 0.0, w as u64).unwrap();
            let base = filter_with_method(model, &s, Method::Uprop, 0).unwrap();
            for m in [Method::Mean, Method::Sample] {
                forecasts_identical &= filter_with_method(model, &s, m, 99).unwrap() == base;
            }
        }
    }
    let mut cells_identical = true;
    let mut diffs_zero = true;
    for ki in 0..LOOKAHEADS.len() {
        let u = grid.cell(0, ki, Method::Uprop).unwrap();
        for m in [Method::Mean, Method::Sample] {
            cells_identical &= grid.cell(0, ki, m).unwrap().nll.to_bits() == u.nll.to_bits();
            diffs_zero &= grid.difference(0, ki, m) == Some(0.0);
        }
    }
    let pass = forecasts_identical && cells_identical && diffs_zero;
    report(
        3,
        "no-missing equivalence",
        pass,
        &format!("forecasts bit-identical {forecasts_identical}, cells identical {cells_identical}, differences 0 {diffs_zero}"),
    );
}

// criterion 4

#[test]
fn c4_directional_tables() {
    let exp = experiment();
    let grid = grid();
    let total_train: Duration = exp.train_time.iter().sum();
    let table = |m: Method| -> Vec<Vec<f64>> { grid.difference_table(m).unwrap()[1..].to_vec() };
    let (mean, sample) = (table(Method::Mean), table(Method::Sample));
    let mut details = Vec::new();
    let mut pass = total_train < Duration::from_secs(15 * 60);
    details.push(format!("training {total_train:.0?}"));
    for (name, t) in [("mean", &mean), ("sample", &sample)] {
        let cells: Vec<f64> = t.iter().flatten().copied().collect();
        let min = cells.iter().copied().fold(f64::INFINITY, f64::min);
        let positive = cells.iter().filter(|&&d| d >= 0.005).count();
        let worst_inversions = (0..LOOKAHEADS.len())
            .map(|ki| {
                (1..RATES.len())
                    .filter(|&ri| t[ri][ki] < t[ri - 1][ki])
                    .count()
            })
            .max()
            .unwrap();
        let ok = min >= -0.02 && positive >= 12 && worst_inversions <= 1;
        pass &= ok;
        details.push(format!("{name}: min {min:+.4}, >=+0.005 in {positive}/16, max inversions/column {worst_inversions}"));
    }
    let sample_worse = mean
        .iter()
        .flatten()
        .zip(sample.iter().flatten())
        .filter(|(m, s)| s > m)
        .count();
    pass &= sample_worse >= 12;
    details.push(format!("sample > mean in {sample_worse}/16"));
    report(4, "directional tables", pass, &details.join("; "));
}

// criterion 5

#[test]
fn c5_calibration() {
    let exp = experiment();
    let mut pass = true;
    let mut details = Vec::new();
    for (k, model) in &exp.models {
        let clean = evaluate_cell(model, &exp.test_windows, 0.0, *k, Method::Uprop, SEED, None)
            .unwrap()
            .coverage();
        let up = evaluate_cell(model, &exp.test_windows, 0.5, *k, Method::Uprop, SEED, None)
            .unwrap()
            .coverage();
        let mean = evaluate_cell(model, &exp.test_windows, 0.5, *k, Method::Mean, SEED, None)
            .unwrap()
            .coverage();
        pass &= (0.88..=0.99).contains(&clean) && up - mean >= 0.05;
        details.push(format!(
            "k={k}: clean {clean:.3}, 50% missing uprop {up:.3} vs mean {mean:.3}"
        ));
    }
    report(5, "95% interval calibration", pass, &details.join("; "));
}

// criterion 6

#[test]
fn c6_uncertainty_growth() {
    let series = random_walk(1, 8000, 6);
    let train_windows = window(&series.slice(0, 6000).unwrap(), 60, 5).unwrap();
    let test_windows = window(&series.slice(6000, 2000).unwrap(), 60, 15).unwrap();
    let cfg = ModelConfig {
        layers: 2,
        hidden: 16,
        ..ModelConfig::new(1)
    };
    let tc = TrainConfig {
        lookahead: 8,
        epochs: 40,
        batch_size: 8,
        window_length: 60,
        seed: 6,
        ..TrainConfig::default()
    };
    let (model, _) = train(&train_windows, &cfg, &tc).unwrap();
    let (mut s1, mut s8) = (0.0, 0.0);
    for w in &test_windows {
        let norm = model.norm.normalize(w).unwrap();
        let context: Vec<DistVector> = (0..52).map(|t| norm.row_certain(t)).collect();
        let f = rollout(&model, &context, 8).unwrap();
        s1 += f.at(1).sigma()[0];
        s8 += f.at(8).sigma()[0];
    }
    let n = test_windows.len() as f64;
    let (s1, s8) = (s1 / n, s8 / n);
    report(
        6,
        "uncertainty growth",
        s8 > s1 && test_windows.len() >= 100,
        &format!(
            "{} windows, mean sigma step 1 {s1:.4}, step 8 {s8:.4}",
            test_windows.len()
        ),
    );
}

// criterion 7

#[test]
fn c7_kl_detection() {
    let exp = experiment();
    let (_, model) = exp.models.iter().find(|(k, _)| *k == 8).unwrap();
    let (near, far) = (1, 8);
    let score = |s: &TimeSeries| {
        kl_scores(
            model,
            &model.norm.normalize(s).unwrap(),
            near,
            far,
            KlDirection::NearFar,
        )
        .unwrap()
    };
    let calibration: Vec<f64> = exp
        .val_streams
        .iter()
        .flat_map(|s| score(s).into_iter().map(|(_, v)| v))
        .collect();
    let threshold = calibrate_threshold(uprop::NoveltyKind::Kl, &calibration, 0.99).unwrap();

    let clean: Vec<f64> = exp
        .test_streams
        .iter()
        .flat_map(|s| score(s).into_iter().map(|(_, v)| v))
        .collect();
    let fpr = clean.iter().filter(|&&v| threshold.flags(v)).count() as f64 / clean.len() as f64;

    let mut rng = seeded(derive_seed(SEED, &[7]));
    let (mut hits, mut trials) = (0, 0);
    for stream in &exp.test_streams {
        for _ in 0..5 {
            let at = rng.random_range(40..180);
            let dim = rng.random_range(0..3);
            let mut shifted = stream.clone();
            for t in at..shifted.steps() {
                let v = shifted.get(t, dim).unwrap();
                shifted.set(t, dim, v + 6.0 * model.norm.std[dim]);
            }
            let flagged = score(&shifted)
                .iter()
                .any(|&(t, v)| (at..=at + 3).contains(&t) && threshold.flags(v));
            hits += usize::from(flagged);
            trials += 1;
        }
    }
    let recall = hits as f64 / trials as f64;
    report(
        7,
        "kl novelty detection",
        recall >= 0.9 && fpr <= 0.03,
        &format!("cutoff {:.4} from {} scores, recall {hits}/{trials} = {recall:.3}, clean false-positive rate {fpr:.4}", threshold.cutoff, calibration.len()),
    );
}

// criterion 8

#[test]
fn c8_determinism_and_round_trips() {
    let windows = window(
        &synth_cloud(&SynthConfig {
            nodes: 1,
            steps: 600,
            seed: 8,
        })
        .unwrap()[0],
        60,
        30,
    )
    .unwrap();
    let cfg = ModelConfig {
        layers: 2,
        hidden: 8,
        ..ModelConfig::new(3)
    };
    let tc = TrainConfig {
        lookahead: 4,
        epochs: 3,
        batch_size: 4,
        window_length: 60,
        seed: 8,
        ..TrainConfig::default()
    };
    let bytes = || {
        let (m, h) = train(&windows, &cfg, &tc).unwrap();
        ModelCheckpoint::from_model(&m, &tc, h[h.len() - 1])
            .to_json()
            .unwrap()
    };
    let first = bytes();
    let retrain_identical = first == bytes();

    let ck = ModelCheckpoint::from_json(&first).unwrap();
    let checkpoint_exact = ck.to_json().unwrap() == first;
    let model = ck.to_model().unwrap();
    let (orig, _) = train(&windows, &cfg, &tc).unwrap();
    let probe = model.norm.normalize(&windows[0]).unwrap();
    let forecasts_exact =
        filter_series(&model, &probe).unwrap() == filter_series(&orig, &probe).unwrap();

    let masked = emulate_missing(&windows[1], 0.3, 8).unwrap();
    let mut buf = Vec::new();
    write_csv(&masked, &mut buf).unwrap();
    let back = read_csv(buf.as_slice()).unwrap();
    let csv_exact = back == masked && back.mask() == masked.mask();

    let mut tail = probe.clone();
    for t in 40..60 {
        for d in 0..3 {
            tail.set_missing(t, d);
        }
    }
    let filtered = filter_series(&model, &tail).unwrap();
    let context: Vec<DistVector> = (0..40).map(|t| probe.row_certain(t)).collect();
    let rolled = rollout(&model, &context, 21).unwrap();
    let tail_exact = (39..60).all(|t| filtered[t].forecast.at(1) == rolled.at(t - 38));

    let pass = retrain_identical && checkpoint_exact && forecasts_exact && csv_exact && tail_exact;
    report(
        8,
        "determinism and round-trips",
        pass,
        &format!(
            "retrain bytes {retrain_identical}, checkpoint {checkpoint_exact}, forecasts {forecasts_exact}, csv {csv_exact}, missing tail = rollout {tail_exact}"
        ),
    );
}
