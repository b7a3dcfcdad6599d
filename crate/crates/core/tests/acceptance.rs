//! Acceptance suite. Prints one line per criterion and exits non-zero if
//! any of them fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{domain_distance, eigenvalues, explicit_a, frob_diff, random_symmetric, trace_margin};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgdml::data::{make_synthetic, read_libsvm};
use sgdml::eval::classification_error;
use sgdml::linalg::domain_project;
use sgdml::loss::{loss_deriv, loss_value, minibatch_gradient, minibatch_loss, objective};
use sgdml::optim::sampling::{adaptive_decision, gradient_norm_gamma, hybrid_decision};
use sgdml::optim::{fit, train};
use sgdml::triplets::{generate_triplets, split_train_test};
use sgdml::{Algorithm, Dataset, LossKind, MetricMatrix, TrainConfig, TrainReport, Triplet};

type Outcome = Result<String, String>;

const N: usize = 100_000;
const SEEDS: [u64; 3] = [0, 1, 2];

fn benchmark(seed: u64) -> (Dataset, Dataset) {
    let train = make_synthetic(3, 20, 100, 10, seed).unwrap();
    let test = make_synthetic(3, 20, 100, 10, seed + 1000).unwrap();
    (train, test)
}

fn config(alg: Algorithm, seed: u64) -> TrainConfig {
    TrainConfig { seed, n_constraints: N, ..TrainConfig::for_algorithm(alg) }
}

fn verdict(failures: Vec<String>, ok: String) -> Outcome {
    if failures.is_empty() {
        Ok(ok)
    } else {
        Err(failures.join("; "))
    }
}

/// Synthetic benchmark runs shared by several criteria.
struct Bench {
    seed: u64,
    train: Dataset,
    test: Dataset,
    triplets: Vec<Triplet>,
    runs: Vec<TrainReport>,
}

impl Bench {
    fn run(seed: u64) -> Bench {
        let (train, test) = benchmark(seed);
        let triplets = generate_triplets(&train, N, seed).unwrap();
        let runs = Algorithm::ALL
            .iter()
            .map(|&alg| train_on(&config(alg, seed), &triplets, &train))
            .collect();
        Bench { seed, train, test, triplets, runs }
    }

    fn report(&self, alg: Algorithm) -> &TrainReport {
        self.runs.iter().find(|r| r.algorithm == alg).unwrap()
    }
}

fn train_on(cfg: &TrainConfig, triplets: &[Triplet], data: &Dataset) -> TrainReport {
    train(cfg, triplets, data).unwrap()
}

fn update_counts() -> Outcome {
    let (data, _) = benchmark(0);
    let triplets = generate_triplets(&data, N, 0).unwrap();
    let mini = train_on(&config(Algorithm::MiniSgd, 0), &triplets, &data);
    let full = train_on(&config(Algorithm::FullSgd, 0), &triplets, &data);
    let got = (mini.updates, mini.projections, full.updates, full.projections);
    let detail = format!("mini {}/{} full {}/{}", got.0, got.1, got.2, got.3);
    if got == (10_000, 10_000, 100_000, 100_000) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn projection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures = Vec::new();
    let mut worst_gap: f64 = 0.0;
    for case in 0..1000 {
        let d = [2, 3, 8, 64][case % 4];
        let scale = rng.random_range(0.1..10.0);
        let m = random_symmetric(&mut rng, d, scale);
        let radius = rng.random_range(0.5..20.0);
        let p = domain_project(&m, radius).unwrap();
        let norm = p.frobenius_norm();
        let min_eig = eigenvalues(&p)[0];
        if min_eig < -1e-9 * norm {
            failures.push(format!("case {case}: min eig {min_eig:e}"));
        }
        if norm > radius * (1.0 + 1e-12) {
            failures.push(format!("case {case}: norm {norm} > {radius}"));
        }
        if d <= 3 {
            let ours = frob_diff(&m, &p);
            let best = domain_distance(&m, radius);
            worst_gap = worst_gap.max((ours - best).abs());
            if (ours - best).abs() > 1e-6 {
                failures.push(format!("case {case}: distance {ours} vs oracle {best}"));
            }
            // Brute force: random feasible candidates are never closer.
            for _ in 0..50 {
                let b = random_symmetric(&mut rng, d, 1.0);
                let mut c = MetricMatrix::zeros(d);
                for i in 0..d {
                    for j in 0..d {
                        let v: f64 = (0..d).map(|k| b.get(i, k) * b.get(j, k)).sum();
                        c.set(i, j, v);
                    }
                }
                let cn = c.frobenius_norm();
                let c = c.scaled(rng.random_range(0.0..radius) / cn.max(1e-300));
                if frob_diff(&m, &c) < ours - 1e-9 {
                    failures.push(format!("case {case}: candidate beats projection"));
                }
            }
        }
    }
    verdict(failures, format!("1000 matrices, worst low-dim distance gap {worst_gap:.1e}"))
}

fn loss_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0usize;
    for l in [1.0, 3.0, 10.0] {
        let kind = LossKind::Smooth { l };
        for _ in 0..1_000_000 {
            let z = rng.random_range(-50.0..=50.0);
            let g = loss_deriv(kind, z).abs();
            if g > 1.0 || g > l * loss_value(kind, z) + 1e-12 {
                violations += 1;
            }
        }
    }
    let detail = format!("{violations} violations in 3x10^6 samples");
    if violations == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let h = 1e-6;
    for case in 0..50 {
        let d = rng.random_range(1..=10);
        let b = rng.random_range(1..=8);
        let n = 12;
        let data = common::gaussian_dataset(&mut rng, (0..n).map(|i| i % 3).collect(), d, 3);
        let m = random_symmetric(&mut rng, d, 0.3);
        let batch: Vec<Triplet> = (0..b)
            .map(|_| Triplet::new(rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n)))
            .collect();
        let kind = LossKind::Smooth { l: rng.random_range(1.0..10.0) };
        let g = minibatch_gradient(&m, &batch, &data, kind).unwrap();
        let scale = g.as_slice().iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for i in 0..d {
            for j in i..d {
                // Symmetric perturbation of (i, j) and (j, i) together.
                let bump = |s: f64| {
                    let mut p = m.clone();
                    p.set(i, j, m.get(i, j) + s);
                    if i != j {
                        p.set(j, i, m.get(j, i) + s);
                    }
                    minibatch_loss(&p, &batch, &data, kind).unwrap()
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let analytic = if i == j { g.get(i, i) } else { g.get(i, j) + g.get(j, i) };
                // Entries that cancel to zero are compared on the matrix scale.
                let rel = (fd - analytic).abs() / analytic.abs().max(1e-6 * scale).max(1e-300);
                worst = worst.max(rel);
                if rel > 1e-5 {
                    failures.push(format!("case {case} ({i},{j}): fd {fd} vs {analytic}"));
                }
            }
        }
    }
    failures.truncate(5);
    verdict(failures, format!("50 instances, worst relative error {worst:.1e}"))
}

/// Mean and standard error of each coordinate over the draws.
struct Moments {
    sum: Vec<f64>,
    sq: Vec<f64>,
    n: usize,
}

impl Moments {
    fn new(len: usize) -> Self {
        Moments { sum: vec![0.0; len], sq: vec![0.0; len], n: 0 }
    }

    fn push(&mut self, weight: f64, entries: &[f64]) {
        self.n += 1;
        for ((s, q), e) in self.sum.iter_mut().zip(self.sq.iter_mut()).zip(entries) {
            let x = weight * e;
            *s += x;
            *q += x * x;
        }
    }

    /// Largest `|mean - target| / SE` over the entries.
    fn worst_z(&self, target: &[f64]) -> f64 {
        let n = self.n as f64;
        let mut worst: f64 = 0.0;
        for ((s, q), t) in self.sum.iter().zip(&self.sq).zip(target) {
            let mean = s / n;
            let var = (q / n - mean * mean).max(0.0) * n / (n - 1.0);
            let se = (var / n).sqrt();
            let gap = (mean - t).abs();
            let z = if se > 0.0 {
                gap / se
            } else if gap <= 1e-12 * t.abs().max(1e-300) {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
        }
        worst
    }
}

fn unbiasedness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = common::gaussian_dataset(&mut rng, (0..30).map(|i| i % 3).collect(), 4, 3);
    let triplets = generate_triplets(&data, 10, 5).unwrap();
    let kind = LossKind::Smooth { l: 3.0 };
    let m = MetricMatrix::identity(4).scaled(0.15);

    // AS-SGD: one triplet, frozen M.
    let t = &triplets[0];
    let a = explicit_a(t, &data);
    let deriv = loss_deriv(kind, trace_margin(&m, t, &data));
    let mut as_moments = Moments::new(a.len());
    for _ in 0..100_000 {
        let w = adaptive_decision(deriv, &mut rng).unwrap_or(0.0);
        as_moments.push(w, &a);
    }
    let target: Vec<f64> = a.iter().map(|x| deriv * x).collect();
    let z_as = as_moments.worst_z(&target);

    // HA-SGD: one batch, frozen M, W above the batch gradient norm.
    let grad = minibatch_gradient(&m, &triplets, &data, kind).unwrap();
    let w = 2.5 * grad.frobenius_norm();
    let gamma = gradient_norm_gamma(grad.frobenius_norm(), w);
    let mut ha_moments = Moments::new(grad.as_slice().len());
    for _ in 0..10_000 {
        let weight = hybrid_decision(gamma, 1e-8, &mut rng).unwrap_or(0.0);
        ha_moments.push(weight, grad.as_slice());
    }
    let z_ha = ha_moments.worst_z(grad.as_slice());

    let detail = format!("AS |l'|={:.3} worst {z_as:.2} SE; HA gamma={gamma:.2} worst {z_ha:.2} SE", deriv.abs());
    if z_as <= 3.0 && z_ha <= 3.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn update_bound(benches: &[Bench]) -> Outcome {
    let delta: f64 = 0.01;
    let m = (2.0 * (N as f64).log2()).ceil();
    let mut failures = Vec::new();
    let mut tightest: f64 = 0.0;
    let mut count = 0;
    let extra: Vec<TrainReport> = (3..20)
        .map(|seed| {
            let (train, _) = benchmark(seed);
            fit(&config(Algorithm::AsSgd, seed), &train).unwrap().1
        })
        .collect();
    for r in benches.iter().map(|b| b.report(Algorithm::AsSgd)).chain(&extra) {
        let LossKind::Smooth { l } = r.config.loss else { unreachable!() };
        let bound = 1.5 * l * r.loss_sum + 2.5 * (m / delta).ln();
        tightest = tightest.max(r.updates as f64 / bound);
        count += 1;
        if r.updates as f64 > bound {
            failures.push(format!("seed {}: {} > {bound:.1}", r.config.seed, r.updates));
        }
    }
    verdict(failures, format!("{count} runs, m = {m}, largest updates/bound {tightest:.3}"))
}

fn parity(benches: &[Bench]) -> Outcome {
    let mean_loss = |alg| {
        benches
            .iter()
            .map(|b| {
                let r = b.report(alg);
                objective(&r.averaged_metric, &b.triplets, &b.train, r.config.loss).unwrap()
            })
            .sum::<f64>()
            / benches.len() as f64
    };
    let full = mean_loss(Algorithm::FullSgd);
    let mut parts = vec![format!("sgd {full:.4}")];
    let mut failures = Vec::new();
    for alg in [Algorithm::MiniSgd, Algorithm::AsSgd, Algorithm::HrSgd, Algorithm::HaSgd] {
        let v = mean_loss(alg);
        let rel = (v - full).abs() / full;
        parts.push(format!("{} {v:.4} ({:+.0}%)", alg.key(), 100.0 * (v - full) / full));
        if rel > 0.10 {
            failures.push(alg.key().to_string());
        }
    }
    let detail = parts.join(", ");
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; outside 10%: {}", failures.join(" ")))
    }
}

fn efficacy(benches: &[Bench]) -> Outcome {
    let mut failures = Vec::new();
    let mut parts = Vec::new();
    for b in benches {
        let base = classification_error(&MetricMatrix::identity(20), &b.train, &b.test, 3).unwrap();
        let mut line = format!("seed {}: euclid {:.1}%", b.seed, base.error_percent());
        for r in &b.runs {
            let e = classification_error(&r.averaged_metric, &b.train, &b.test, 3).unwrap();
            line.push_str(&format!(" {} {:.1}%", r.algorithm.key(), e.error_percent()));
            if e.error_rate >= base.error_rate {
                failures.push(format!("seed {} {}", b.seed, r.algorithm.key()));
            }
        }
        parts.push(line);
    }

    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/digits.libsvm");
    let digits = read_libsvm(path).unwrap();
    let (train_set, test_set) = split_train_test(&digits, 0.7, 0).unwrap();
    let base = classification_error(&MetricMatrix::identity(digits.dim()), &train_set, &test_set, 3).unwrap();
    let mut line = format!("digits: euclid {:.2}%", base.error_percent());
    for alg in Algorithm::ALL {
        let (_, r) = fit(&config(alg, 0), &train_set).unwrap();
        let e = classification_error(&r.averaged_metric, &train_set, &test_set, 3).unwrap();
        line.push_str(&format!(" {} {:.2}%", alg.key(), e.error_percent()));
        if e.error_percent() > base.error_percent() + 0.5 {
            failures.push(format!("digits {}", alg.key()));
        }
    }
    parts.push(line);
    let detail = parts.join(" | ");
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; failing: {}", failures.join(", ")))
    }
}

fn update_reduction(benches: &[Bench]) -> Outcome {
    let mut failures = Vec::new();
    let mut parts = Vec::new();
    for b in benches {
        let (a, hr, ha) = (
            b.report(Algorithm::AsSgd).updates,
            b.report(Algorithm::HrSgd).updates,
            b.report(Algorithm::HaSgd).updates,
        );
        parts.push(format!("seed {}: as {a} hr {hr} ha {ha}", b.seed));
        if a >= N / 2 {
            failures.push(format!("seed {} as", b.seed));
        }
        for (name, u) in [("hr", hr), ("ha", ha)] {
            if u >= N / 10 {
                failures.push(format!("seed {} {name}", b.seed));
            }
        }
    }
    let detail = parts.join(", ");
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; failing: {}", failures.join(", ")))
    }
}

fn determinism() -> Outcome {
    let (train_set, test_set) = benchmark(4);
    let render = |alg| {
        let (_, mut r) = fit(&config(alg, 4), &train_set).unwrap();
        r.wall_time_ms = 0;
        let e = classification_error(&r.averaged_metric, &train_set, &test_set, 3).unwrap();
        (serde_json::to_string(&r).unwrap(), serde_json::to_string(&e).unwrap(), r.final_metric)
    };
    let mut failures = Vec::new();
    for alg in Algorithm::ALL {
        if render(alg) != render(alg) {
            failures.push(alg.key().to_string());
        }
    }
    verdict(failures, "all five algorithms byte-identical".into())
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut timed = |id, name, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match &outcome {
            Ok(d) => println!("criterion {id:>2} {name:<22} PASS ({d}) [{secs:.1}s]"),
            Err(d) => println!("criterion {id:>2} {name:<22} FAIL ({d}) [{secs:.1}s]"),
        }
        results.push((id, name, outcome, secs));
    };

    timed(1, "update counts", &update_counts);
    timed(2, "projection", &projection);
    timed(3, "loss bounds", &loss_bounds);
    timed(4, "gradient check", &gradient_check);
    timed(5, "sampling unbiasedness", &unbiasedness);

    let start = Instant::now();
    let benches: Vec<Bench> = SEEDS.iter().map(|&s| Bench::run(s)).collect();
    println!("synthetic benchmark: 3 seeds x 5 algorithms in {:.1}s", start.elapsed().as_secs_f64());

    timed(6, "update bound", &|| update_bound(&benches));
    timed(7, "convergence parity", &|| parity(&benches));
    timed(8, "efficacy", &|| efficacy(&benches));
    timed(9, "update reduction", &|| update_reduction(&benches));
    timed(10, "determinism", &determinism);

    let failed: Vec<usize> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {failed:?}");
        ExitCode::FAILURE
    }
}
