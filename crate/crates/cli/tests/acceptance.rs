//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use hsl_cli::config::{ExperimentConfig, ExperimentKind, Method};
use hsl_cli::sweep::{build_cells, run_trials, summarize, SummaryRow};
use hsl_core::baselines::{pca, rpca, AlmOptions};
use hsl_core::eval::spectrum_profile;
use hsl_core::hsl::{fit, fit_cold_start, fit_warm_start_path, gradients, loss};
use hsl_core::matrix::norm2;
use hsl_core::prox::{l1_prox, l2_prox, lf_project};
use hsl_core::synth::{generate_categorical, SynthSpec};
use hsl_core::{Config, Matrix, Model, RngStream};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn workers() -> usize {
    std::thread::available_parallelism()
        .map_or(4, |n| n.get())
        .min(10)
}

// ---------------------------------------------------------------- prox oracles

fn refine(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    const POINTS: usize = 201;
    let mut best = lo;
    for _ in 0..14 {
        let step = (hi - lo) / (POINTS - 1) as f64;
        let mut best_val = f64::INFINITY;
        for i in 0..POINTS {
            let t = lo + step * i as f64;
            let v = f(t);
            if v < best_val {
                best_val = v;
                best = t;
            }
        }
        lo = lo.max(best - step);
        hi = hi.min(best + step);
    }
    best
}

/// Minimizer along the ray through `x`, where every penalty here is radial.
fn radial_oracle(x: &[f64], hi: f64, penalty: impl Fn(f64) -> f64) -> Vec<f64> {
    let nrm = norm2(x);
    if nrm == 0.0 {
        return vec![0.0; x.len()];
    }
    // ½‖t·x/‖x‖ − x‖² = ½(t − ‖x‖)²
    let t = refine(|t| 0.5 * (t - nrm) * (t - nrm) + penalty(t), 0.0, hi);
    x.iter().map(|v| v / nrm * t).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn criterion_prox() -> Verdict {
    let mut rng = RngStream::new(101, 0);
    let mut worst = [0.0f64; 3];
    for _ in 0..100 {
        let len = 1 + rng.index(8);
        let x: Vec<f64> = (0..len)
            .map(|_| 10.0 * (2.0 * rng.uniform01::<f64>() - 1.0))
            .collect();
        let u = 12.0 * rng.uniform01::<f64>();
        let got = l2_prox(&x, u).unwrap();
        let want = radial_oracle(&x, norm2(&x), |t| u * t);
        worst[0] = worst[0].max(max_abs_diff(&got, &want));

        let b = 10.0 * (2.0 * rng.uniform01::<f64>() - 1.0);
        let got = l1_prox(b, u).unwrap();
        let want = refine(
            |y| 0.5 * (y - b) * (y - b) + u * y.abs(),
            b.min(0.0),
            b.max(0.0),
        );
        worst[1] = worst[1].max((got - want).abs());

        let (r, c) = (1 + rng.index(4), 1 + rng.index(4));
        let scale = 3.0 * rng.uniform01::<f64>();
        let m: Matrix = rng.gaussian_matrix(r, c, 0.0, scale * scale).unwrap();
        let got = lf_project(&m);
        // Indicator of the unit Frobenius ball as an infinite penalty beyond radius 1.
        let want = radial_oracle(m.as_slice(), norm2(m.as_slice()).min(1.0), |_| 0.0);
        worst[2] = worst[2].max(max_abs_diff(got.as_slice(), &want));
    }
    let pass = worst.iter().all(|&w| w < 1e-6);
    verdict(
        pass,
        format!(
            "max deviation l2 {:.1e}, l1 {:.1e}, unit-ball projection {:.1e}",
            worst[0], worst[1], worst[2]
        ),
    )
}

// ------------------------------------------------------------------ gradients

fn criterion_gradients() -> Verdict {
    let (n, p, k, h) = (20, 30, 4, 1e-6);
    let mut worst = 0.0f64;
    for point in 0..20 {
        let mut rng = RngStream::new(202, point);
        let x: Matrix = rng.gaussian_matrix(n, p, 0.0, 1.0).unwrap();
        let m = Model::from_factors(
            rng.gaussian_matrix(n, k, 0.0, 1.0).unwrap(),
            rng.gaussian_matrix(k, p, 0.0, 1.0).unwrap(),
            rng.gaussian_matrix(n, p, 0.0, 1.0).unwrap(),
            (0..p).map(|_| rng.standard_normal()).collect(),
        );
        let g = gradients(&x, &m.z, &m.a, &m.w, &m.b).unwrap();
        let analytic: [&[f64]; 4] = [g.z.as_slice(), g.a.as_slice(), g.w.as_slice(), &g.b];
        for (block, an) in analytic.iter().enumerate() {
            let numeric: Vec<f64> = (0..an.len())
                .map(|i| {
                    let at = |delta: f64| {
                        let mut c = m.clone();
                        match block {
                            0 => c.z.as_mut_slice()[i] += delta,
                            1 => c.a.as_mut_slice()[i] += delta,
                            2 => c.w.as_mut_slice()[i] += delta,
                            _ => c.b[i] += delta,
                        }
                        loss(&x, &c.z, &c.a, &c.w, &c.b).unwrap()
                    };
                    (at(h) - at(-h)) / (2.0 * h)
                })
                .collect();
            let diff: Vec<f64> = an.iter().zip(&numeric).map(|(a, b)| a - b).collect();
            worst = worst.max(norm2(&diff) / norm2(&numeric).max(1e-12));
        }
    }
    verdict(
        worst < 1e-5,
        format!("worst relative error {worst:.2e} over 20 points x 4 blocks"),
    )
}

// --------------------------------------------------------- solver behaviour

const HARNESS_LAMBDA: f64 = 0.5;

fn default_instance(seed: u64) -> (hsl_core::synth::SynthInstance<f64>, Config) {
    let inst = generate_categorical::<f64>(&SynthSpec::default_benchmark(seed)).unwrap();
    let mut cfg = Config::with_k(20);
    cfg.seed = seed;
    (inst, cfg)
}

fn criterion_monotone() -> Verdict {
    let results: Vec<(bool, usize, bool)> = parallel_map(0..10u64, |seed| {
        let (inst, cfg) = default_instance(seed);
        let m = fit_cold_start(&inst.x, HARNESS_LAMBDA, 0.0, &cfg, 0).unwrap();
        let mono = m.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-10);
        (mono, m.outer_iterations, m.converged)
    });
    let monotone = results.iter().filter(|r| r.0).count();
    let fast = results.iter().filter(|r| r.2 && r.1 <= 50).count();
    let iters: Vec<usize> = results.iter().map(|r| r.1).collect();
    verdict(
        monotone == 10 && fast >= 8,
        format!("{monotone}/10 monotone traces, {fast}/10 converged within 50 outer iterations {iters:?}"),
    )
}

fn criterion_warm_vs_cold() -> Verdict {
    let results: Vec<(f64, f64)> = parallel_map(0..10u64, |seed| {
        let (inst, cfg) = default_instance(seed);
        let path = fit_warm_start_path(&inst.x, HARNESS_LAMBDA, None, &cfg).unwrap();
        let gamma = path.gamma_max() / 2.0;
        let prev = path
            .models
            .iter()
            .rfind(|m| m.gamma_at_fit <= gamma)
            .unwrap()
            .clone();
        let mut c = cfg.clone();
        c.lambda = HARNESS_LAMBDA;
        c.gamma = gamma;
        let warm = fit(&inst.x, &c, prev).unwrap();
        let cold = fit_cold_start(&inst.x, HARNESS_LAMBDA, gamma, &cfg, 7).unwrap();
        (
            warm.final_objective().unwrap(),
            cold.final_objective().unwrap(),
        )
    });
    let warm = results.iter().map(|r| r.0).sum::<f64>() / 10.0;
    let cold = results.iter().map(|r| r.1).sum::<f64>() / 10.0;
    verdict(
        warm <= cold,
        format!("mean objective at gamma_max/2: warm {warm:.5e}, cold {cold:.5e}"),
    )
}

// ------------------------------------------------------ harness experiments

fn harness_config(kind: ExperimentKind, methods: &[Method]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment = kind;
    cfg.methods = methods.to_vec();
    cfg.trials = 10;
    cfg.jobs = workers();
    cfg.hsl.lambda = HARNESS_LAMBDA;
    cfg
}

fn run_summary(cfg: &ExperimentConfig) -> Vec<SummaryRow> {
    let cells = build_cells(cfg).unwrap();
    summarize(&run_trials(cfg, &cells).unwrap())
}

fn metric(rows: &[SummaryRow], label: &str, name: &str) -> f64 {
    let row = rows.iter().find(|r| r.label == label).unwrap();
    row.metrics.iter().find(|m| m.0 == name).unwrap().1
}

fn criterion_exact_recovery() -> Verdict {
    let mut cfg = harness_config(ExperimentKind::PhaseTransition, &[Method::Hsl]);
    cfg.grid.phase_k = vec![10];
    cfg.grid.phase_s = vec![20];
    let rows = run_summary(&cfg);
    let successes = rows[0].successes.unwrap();
    verdict(
        successes >= 8,
        format!(
            "{successes}/10 trials with subspace error <= 1e-3 and F1 = 1 (mean error {:.2e})",
            metric(&rows, "hsl", "subspace_error")
        ),
    )
}

fn criterion_baselines() -> Verdict {
    let cfg = harness_config(ExperimentKind::Fit, &[Method::Hsl, Method::Pca, Method::Op]);
    let rows = run_summary(&cfg);
    let se = |m| metric(&rows, m, "subspace_error");
    let s = |m| metric(&rows, m, "s_error");
    let pass = se("hsl") < se("pca") && se("hsl") < se("op") && s("hsl") < s("op");
    verdict(
        pass,
        format!(
            "subspace error hsl {:.4} pca {:.4} op {:.4}; s error hsl {:.2} op {:.2}",
            se("hsl"),
            se("pca"),
            se("op"),
            s("hsl"),
            s("op")
        ),
    )
}

fn criterion_spectrum() -> Verdict {
    let profile = |theta: [f64; 3]| {
        let spec = SynthSpec {
            n: 100,
            p: 1000,
            k: 20,
            sigma2: 1e-4,
            theta,
            ..SynthSpec::default_benchmark(303)
        };
        spectrum_profile(&generate_categorical::<f64>(&spec).unwrap().x, 20).unwrap()
    };
    let low = profile([1.0, 0.0, 0.0]);
    let high = profile([0.0, 1.0, 0.0]);
    let mixed = profile([0.5, 0.5, 0.0]);
    let pass = low.head_drop_ratio < 0.05
        && (0.4..=0.65).contains(&high.last_ratio)
        && mixed.head_kth_ratio > 0.2
        && mixed.tail_half_ratio > 0.1;
    verdict(
        pass,
        format!(
            "low-rank s21/s1 {:.2e}; high-d s100/s1 {:.3}; hybrid s20/s1 {:.3}, s50/s1 {:.3}",
            low.head_drop_ratio, high.last_ratio, mixed.head_kth_ratio, mixed.tail_half_ratio
        ),
    )
}

// ------------------------------------------------------------------ baselines

/// Orthonormal columns by modified Gram-Schmidt on a Gaussian draw.
fn random_orthonormal(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
    let g: Matrix = rng.gaussian_matrix(rows, cols, 0.0, 1.0).unwrap();
    let mut q: Vec<Vec<f64>> = Vec::new();
    for j in 0..cols {
        let mut v: Vec<f64> = (0..rows).map(|i| g.get(i, j)).collect();
        for _ in 0..2 {
            for u in &q {
                let d: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= d * y);
            }
        }
        let nrm = norm2(&v);
        q.push(v.into_iter().map(|x| x / nrm).collect());
    }
    let mut out = Matrix::zeros(rows, cols);
    for (j, col) in q.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            out.set(i, j, v);
        }
    }
    out
}

fn criterion_pca() -> Verdict {
    let mut rng = RngStream::new(808, 0);
    let mut worst = 0.0f64;
    for t in 0..10 {
        let (n, p) = (8 + rng.index(30), 8 + rng.index(30));
        let r = n.min(p);
        let k = 1 + t % (r - 1);
        let mut sv: Vec<f64> = (0..r)
            .map(|_| 0.1 + 10.0 * rng.uniform01::<f64>())
            .collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        let u = random_orthonormal(n, r, &mut rng);
        let v = random_orthonormal(p, r, &mut rng);
        let x = u.column_scale(&sv).unwrap().matmul_tr(&v).unwrap();
        let tail: f64 = sv[k..].iter().map(|s| s * s).sum();
        let fit = pca(&x, k).unwrap();
        let resid = x.sub(&fit.l).unwrap().frobenius_norm();
        worst = worst.max((resid * resid - tail).abs() / tail);
    }
    verdict(
        worst < 1e-8,
        format!("worst relative gap to the singular value tail {worst:.2e}"),
    )
}

fn criterion_rpca() -> Verdict {
    let (n, p, r) = (100, 200, 5);
    let mut rng = RngStream::new(909, 0);
    let u: Matrix = rng.gaussian_matrix(n, r, 0.0, 1.0).unwrap();
    let v: Matrix = rng.gaussian_matrix(r, p, 0.0, 1.0).unwrap();
    let l = u.matmul(&v).unwrap();
    let mut x = l.clone();
    for idx in rng.subset(n * p, n * p / 100) {
        let sign = if rng.uniform01::<f64>() < 0.5 {
            -1.0
        } else {
            1.0
        };
        x.as_mut_slice()[idx] += sign * 10.0;
    }
    let lambda = 1.0 / (n as f64).sqrt();
    let d = rpca(&x, lambda, &AlmOptions::default()).unwrap();
    let rel = d.l.sub(&l).unwrap().frobenius_norm() / l.frobenius_norm();
    verdict(
        rel < 1e-3,
        format!(
            "relative L error {rel:.2e} (rank {}, {} iterations)",
            d.rank_of_l, d.iterations
        ),
    )
}

// ---------------------------------------------------------------- determinism

fn sweep_run(out: &Path, jobs: usize) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_hsl"))
        .env("HSL_LOG", "error")
        .args([
            "sweep",
            "--experiment",
            "sweep-noise",
            "--grid",
            "0.1,1",
            "--n",
            "30",
            "--p",
            "40",
            "--k",
            "3",
            "--trials",
            "3",
            "--seed",
            "17",
            "--jobs",
        ])
        .arg(jobs.to_string())
        .arg("--out")
        .arg(out)
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("sweep at --jobs {jobs} exited with {status}"))
    }
}

fn criterion_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let runs = [("a", 1), ("b", 1), ("c", 8), ("d", 8)];
    for (name, jobs) in runs {
        if let Err(e) = sweep_run(&dir.path().join(name), jobs) {
            return verdict(false, e);
        }
    }
    let mut mismatches = Vec::new();
    for file in ["results.csv", "trials.csv"] {
        let reference = std::fs::read(dir.path().join("a").join(file)).unwrap();
        for (name, jobs) in &runs[1..] {
            if std::fs::read(dir.path().join(name).join(file)).unwrap() != reference {
                mismatches.push(format!("{file} at --jobs {jobs}"));
            }
        }
    }
    let pass = mismatches.is_empty();
    let detail = if pass {
        "results.csv and trials.csv byte-identical across 2 runs each at --jobs 1 and 8".into()
    } else {
        format!("differs: {}", mismatches.join(", "))
    };
    verdict(pass, detail)
}

// ---------------------------------------------------------------------- driver

fn parallel_map<T: Send>(seeds: std::ops::Range<u64>, f: impl Fn(u64) -> T + Sync) -> Vec<T> {
    std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .map(|seed| {
                s.spawn({
                    let f = &f;
                    move || f(seed)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

fn main() {
    let criteria: [(&str, Option<Duration>, fn() -> Verdict); 10] = [
        (
            "prox operators match brute-force minimizers",
            Some(Duration::from_secs(10)),
            criterion_prox,
        ),
        (
            "analytic gradients match central differences",
            Some(Duration::from_secs(10)),
            criterion_gradients,
        ),
        (
            "monotone descent on the default instance",
            None,
            criterion_monotone,
        ),
        (
            "zero-noise exact recovery",
            Some(Duration::from_secs(600)),
            criterion_exact_recovery,
        ),
        (
            "HSL beats PCA and OP at default noise",
            None,
            criterion_baselines,
        ),
        (
            "warm starts reach lower objectives than cold",
            None,
            criterion_warm_vs_cold,
        ),
        ("spectrum shapes by feature roles", None, criterion_spectrum),
        (
            "PCA residual equals the singular value tail",
            None,
            criterion_pca,
        ),
        (
            "RPCA recovers a spiked low-rank matrix",
            None,
            criterion_rpca,
        ),
        (
            "sweep output is deterministic across thread counts",
            None,
            criterion_determinism,
        ),
    ];
    let mut failures = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut v = run();
        let elapsed = start.elapsed();
        if let Some(limit) = limit {
            if elapsed > *limit {
                v.pass = false;
                v.detail
                    .push_str(&format!("; exceeded {}s budget", limit.as_secs()));
            }
        }
        if !v.pass {
            failures += 1;
        }
        println!(
            "{} [{:>2}] {name}: {} ({:.1}s)",
            if v.pass { "PASS" } else { "FAIL" },
            i + 1,
            v.detail,
            elapsed.as_secs_f64()
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
