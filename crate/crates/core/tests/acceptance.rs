//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use glovekit::emulator::{emulate_to_vec, EmulatorConfig};
use glovekit::model::{
    fit_distribution, fit_weights, BasisConfig, Demonstration, TrajectoryModel, WeightMatrix,
};
use glovekit::protocol::{encode_channels, StreamParser, FRAME_LEN, MAX_RAW};

use common::CupRun;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: String) -> Outcome {
    if cond {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn random_channels(rng: &mut ChaCha8Rng) -> [u16; 5] {
    std::array::from_fn(|_| rng.random_range(0..=MAX_RAW))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let frames: Vec<[u16; 5]> = (0..100_000).map(|_| random_channels(&mut rng)).collect();
    let mut bytes = Vec::with_capacity(frames.len() * FRAME_LEN);
    for f in &frames {
        bytes.extend_from_slice(&encode_channels(*f).unwrap());
    }

    let mut parser = StreamParser::new();
    let clean: Vec<[u16; 5]> = parser
        .decode(&bytes)
        .iter()
        .map(|f| *f.channels())
        .collect();
    if clean != frames || parser.bytes_skipped() != 0 {
        return Err(format!(
            "clean stream: {} of {} frames, {} bytes skipped",
            clean.len(),
            frames.len(),
            parser.bytes_skipped()
        ));
    }

    let mut corrupted = bytes.clone();
    let mut damaged = vec![false; frames.len()];
    let flips = bytes.len() / 100;
    for _ in 0..flips {
        let pos = rng.random_range(0..corrupted.len());
        corrupted[pos] ^= rng.random_range(1..=255u8);
        damaged[pos / FRAME_LEN] = true;
    }
    let mut parser = StreamParser::new();
    let decoded: Vec<[u16; 5]> = parser
        .decode(&corrupted)
        .iter()
        .map(|f| *f.channels())
        .collect();
    let intact: Vec<&[u16; 5]> = frames
        .iter()
        .zip(&damaged)
        .filter(|(_, d)| !**d)
        .map(|(f, _)| f)
        .collect();
    let mut next = 0;
    for f in &decoded {
        if next < intact.len() && f == intact[next] {
            next += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        next == intact.len() && elapsed < Duration::from_secs(5),
        format!(
            "1e5 frames exact; corrupted: {}/{} intact frames recovered, {} bytes skipped, {:.2?}",
            next,
            intact.len(),
            parser.bytes_skipped(),
            elapsed
        ),
    )
}

fn criterion_2() -> Outcome {
    let cfg = EmulatorConfig::parse(common::CUP_CONF).unwrap();
    let bytes = emulate_to_vec(&cfg, 600.0).unwrap();
    let expected = bytes.len() / FRAME_LEN;
    let mut best = 0.0f64;
    for _ in 0..3 {
        let mut parser = StreamParser::new();
        let start = Instant::now();
        let mut decoded = 0usize;
        for chunk in bytes.chunks(4096) {
            decoded += parser.decode(chunk).len();
        }
        let rate = decoded as f64 / start.elapsed().as_secs_f64();
        if decoded != expected {
            return Err(format!("decoded {decoded} of {expected} frames"));
        }
        best = best.max(rate);
    }
    check(
        best >= 35_000.0,
        format!("{best:.0} frames/s over {expected} frames"),
    )
}

fn criterion_3() -> Outcome {
    let (t, k, d) = (50, 10, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for problem in 0..100 {
        let lambda = [0.0, 1e-6, 1e-2][problem % 3];
        let rows: Vec<Vec<f64>> = (0..t)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let basis = BasisConfig::new(k).unwrap().with_ridge(lambda).unwrap();
        let w = fit_weights(&Demonstration::from_rows(&rows, 0.01).unwrap(), &basis)
            .map_err(|e| format!("problem {problem}: {e}"))?;
        let oracle = common::oracle_ridge(&rows, k, basis.width(), lambda);
        for (j, col) in oracle.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                worst = worst.max((w.0[(i, j)] - v).abs());
            }
        }
    }
    check(worst <= 1e-8, format!("max |w - w_oracle| = {worst:.3e}"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let k = rng.random_range(2..=40);
        let phase: f64 = rng.random_range(0.0..=1.0);
        let row = BasisConfig::new(k).unwrap().row(phase).unwrap();
        worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
    }
    let single = BasisConfig::new(1).unwrap();
    let exact_single = (0..=100).all(|i| single.row(i as f64 / 100.0).unwrap() == vec![1.0]);
    check(
        worst <= 1e-12 && exact_single,
        format!("max |sum - 1| = {worst:.3e}; K=1 exactly 1.0: {exact_single}"),
    )
}

fn criterion_5() -> Outcome {
    let (k, d, eps) = (4, 2, 1e-8);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let weights: Vec<WeightMatrix> = (0..3)
            .map(|_| WeightMatrix(DMatrix::from_fn(k, d, |_, _| rng.random_range(-2.0..2.0))))
            .collect();
        let (mean, cov) = fit_distribution(&weights, eps).unwrap();
        let samples: Vec<Vec<f64>> = weights
            .iter()
            .map(|w| w.stacked().iter().copied().collect())
            .collect();
        let (om, oc) = common::oracle_covariance(&samples);
        for a in 0..k * d {
            worst = worst.max((mean[a] - om[a]).abs());
            for b in 0..k * d {
                let expected = oc[a][b] + if a == b { eps } else { 0.0 };
                worst = worst.max((cov[(a, b)] - expected).abs());
            }
        }
    }
    let same = WeightMatrix(DMatrix::from_fn(k, d, |i, j| {
        0.1 * i as f64 - 0.7 * j as f64 + 0.3
    }));
    let (mean, cov) = fit_distribution(&[same.clone(), same.clone(), same.clone()], eps).unwrap();
    let identity_ok = cov == DMatrix::identity(k * d, k * d) * eps && mean == same.stacked();
    check(
        worst <= 1e-12 && identity_ok,
        format!(
            "max deviation from oracle {worst:.3e}; identical samples give eps*I: {identity_ok}"
        ),
    )
}

fn criterion_6(run: &CupRun) -> Outcome {
    let demos: Vec<Demonstration> = run
        .demos
        .iter()
        .map(|d| d.to_demonstration().unwrap())
        .collect();
    let fit = TrajectoryModel::fit(
        &demos,
        run.model.labels().to_vec(),
        run.model.basis(),
        run.model.eps_reg(),
    )
    .unwrap();
    let t = demos[0].samples();
    let mean = fit.model.mean_trajectory(t).unwrap();
    let r0 = fit.weights[0].reconstruct(run.model.basis(), t).unwrap();
    let r1 = fit.weights[1].reconstruct(run.model.basis(), t).unwrap();
    let worst = (&mean - (r0 + r1) * 0.5).amax();
    check(
        worst <= 1e-9,
        format!("max |mean - average reconstruction| = {worst:.3e}"),
    )
}

fn criterion_7(run: &CupRun) -> Outcome {
    let model = &run.model;
    let t = 3000;
    let std = model.marginal_std(t).unwrap();
    let floor = model.eps_reg().sqrt();
    let min_std = std.min();
    if min_std < floor {
        return Err(format!(
            "min marginal std {min_std:.3e} < sqrt(eps) {floor:.3e}"
        ));
    }

    let k = model.basis().num_basis();
    let draws = 100_000;
    let probes: Vec<usize> = (0..=10).map(|i| i * (t - 1) / 10).collect();
    let phi = model.basis().design_matrix(t).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for d in 0..model.dims() {
        let block: Vec<Vec<f64>> = (0..k)
            .map(|a| {
                (0..k)
                    .map(|b| model.weight_cov()[(d * k + a, d * k + b)])
                    .collect()
            })
            .collect();
        let l = common::oracle_cholesky(&block).ok_or(format!("joint {d} covariance not PD"))?;
        let mu: Vec<f64> = (0..k).map(|a| model.weight_mean()[d * k + a]).collect();
        let sigma_y = model.noise()[d].sqrt();
        let mut sum = vec![0.0; probes.len()];
        let mut sum_sq = vec![0.0; probes.len()];
        let mut z = vec![0.0; k];
        let mut w = vec![0.0; k];
        for _ in 0..draws {
            z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            for a in 0..k {
                w[a] = mu[a] + (0..=a).map(|b| l[a][b] * z[b]).sum::<f64>();
            }
            for (p, &i) in probes.iter().enumerate() {
                let n: f64 = rng.sample(StandardNormal);
                let y: f64 = (0..k).map(|a| phi[(i, a)] * w[a]).sum::<f64>() + sigma_y * n;
                sum[p] += y;
                sum_sq[p] += y * y;
            }
        }
        for (p, &i) in probes.iter().enumerate() {
            let m = sum[p] / draws as f64;
            let mc = ((sum_sq[p] - draws as f64 * m * m) / (draws - 1) as f64).sqrt();
            worst = worst.max((mc / std[(i, d)] - 1.0).abs());
        }
    }
    check(
        worst <= 0.02,
        format!(
            "min std {min_std:.3e} >= {floor:.1e}; Monte Carlo ({draws} draws, {} joints x {} phases) max rel diff {:.2}%",
            model.dims(),
            probes.len(),
            worst * 100.0
        ),
    )
}

fn criterion_8(run: &CupRun, elapsed: Duration) -> Outcome {
    let noise = run.injected_noise_std();
    let t = run.clean.samples();
    let mean = run.model.mean_trajectory(t).unwrap();
    let mut failures = Vec::new();
    let mut worst_ratio = 0.0f64;
    for (d, (label, sigma)) in run.model.labels().iter().zip(&noise).enumerate() {
        let a: Vec<f64> = mean.column(d).iter().copied().collect();
        let b: Vec<f64> = run.clean.values.column(d).iter().copied().collect();
        let e = common::rmse(&a, &b);
        worst_ratio = worst_ratio.max(e / sigma);
        if e >= *sigma {
            failures.push(format!("{label} mean rmse {e:.4} >= noise {sigma:.4}"));
        }
    }
    let worst_track = run.tracking.rmse.iter().copied().fold(0.0, f64::max);
    if worst_track >= 0.05 {
        failures.push(format!("tracking rmse {worst_track:.4} >= 0.05"));
    }
    if elapsed >= Duration::from_secs(30) {
        failures.push(format!("runtime {elapsed:.2?}"));
    }
    let summary = format!(
        "{} joints x {} samples; worst mean rmse / noise std = {worst_ratio:.3}; worst tracking rmse {worst_track:.2e} rad; {elapsed:.2?}",
        run.model.dims(),
        t
    );
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; {}", failures.join("; ")))
    }
}

fn criterion_9(run: &CupRun) -> Outcome {
    let coverage = run.eval.overall_coverage();
    check(
        coverage >= 0.95,
        format!(
            "{:.2}% of training samples inside +/-2 std",
            coverage * 100.0
        ),
    )
}

fn pipeline_once(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let fixture = |name: &str| fixtures.join(name).display().to_string();
    let out = |name: &str| dir.join(name).display().to_string();
    let sweep = format!("emu:{}", fixture("calibration_sweep.conf"));
    let cup = format!("emu:{}", fixture("cup_stacking.conf"));
    let steps: Vec<Vec<String>> = vec![
        vec![
            "calibrate",
            "--transport",
            &sweep,
            "--duration",
            "3",
            "--out",
            &out("calib.txt"),
        ]
        .into_iter()
        .map(String::from)
        .collect(),
        vec![
            "record".into(),
            "--transport".into(),
            cup.clone(),
            "--calibration".into(),
            out("calib.txt"),
            "--coupling".into(),
            fixture("coupling13.txt"),
            "--seed".into(),
            "11".into(),
            "--out".into(),
            out("demo0.csv"),
        ],
        vec![
            "record".into(),
            "--transport".into(),
            cup,
            "--calibration".into(),
            out("calib.txt"),
            "--coupling".into(),
            fixture("coupling13.txt"),
            "--seed".into(),
            "12".into(),
            "--out".into(),
            out("demo1.csv"),
        ],
        vec![
            "train".into(),
            out("demo0.csv"),
            out("demo1.csv"),
            "--out".into(),
            out("model.promp"),
        ],
        vec![
            "reproduce".into(),
            "--model".into(),
            out("model.promp"),
            "--out".into(),
            out("tracking.csv"),
            "--summary".into(),
            out("summary.txt"),
        ],
        vec![
            "eval".into(),
            "--model".into(),
            out("model.promp"),
            out("demo0.csv"),
            out("demo1.csv"),
            "--plot".into(),
            out("plot.csv"),
            "--report".into(),
            out("report.csv"),
        ],
    ];
    for args in &steps {
        let status = Command::new(env!("CARGO_BIN_EXE_glovekit"))
            .args(args)
            .env_remove("DEMO_SEED")
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!(
                "`glovekit {}` failed: {}",
                args[0],
                String::from_utf8_lossy(&status.stderr)
            ));
        }
    }
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|n| {
            std::fs::read(dir.join(&n))
                .map(|b| (n, b))
                .map_err(|e| e.to_string())
        })
        .collect()
}

fn criterion_10() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = pipeline_once(a.path())?;
    let second = pipeline_once(b.path())?;
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    check(
        first.len() == 8 && first.len() == second.len() && differing.is_empty(),
        format!(
            "{} files compared ({}); differing: {:?}",
            names.len(),
            names.join(", "),
            differing
        ),
    )
}

fn main() {
    let start = Instant::now();
    let run = common::run_cup_stacking();
    let cup_elapsed = start.elapsed();

    let results: Vec<(&str, Outcome)> = vec![
        ("protocol round-trip and resync", criterion_1()),
        ("parser throughput", criterion_2()),
        ("regression oracle", criterion_3()),
        ("basis identities", criterion_4()),
        ("distribution statistics", criterion_5()),
        ("mean linearity", criterion_6(&run)),
        ("variance sanity", criterion_7(&run)),
        ("cup-stacking analog", criterion_8(&run, cup_elapsed)),
        ("band coverage", criterion_9(&run)),
        ("determinism", criterion_10()),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(msg) => println!("[PASS] criterion {} ({name}): {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("[FAIL] criterion {} ({name}): {msg}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
