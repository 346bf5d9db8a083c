//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

#![allow(clippy::too_many_arguments, clippy::needless_range_loop, clippy::vec_init_then_push)]

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Matrix2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use selfstab::feedback::{plan_block, track_purification};
use selfstab::protocol::{derive_seed, EnsembleSummary};
use selfstab::qubit::{dissipator, innovation_term, linear_entropy, sigma_minus, sigma_plus, sigma_x, sigma_y, sigma_z, C64};
use selfstab::sme::{self, simulate_block};
use selfstab::{
    qfi, run_ensemble, Bloch, HypothesisBank, MeasurementOp, NoiseModel, Operator, PauliAxis, PhaseGrid, ProtocolConfig,
    QubitState, SimConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(n: usize, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let pass = out.pass && in_time;
    let limit_text = limit.map_or(String::new(), |l| format!(" (limit {:.0?})", l));
    println!(
        "criterion {n}: {} | {} | runtime {:.2?}{limit_text}",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed
    );
    pass
}

fn random_bloch(rng: &mut impl Rng) -> Bloch {
    loop {
        let v = Bloch::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() <= 1.0 {
            return v;
        }
    }
}

fn random_operator(rng: &mut impl Rng) -> Operator {
    Matrix2::from_fn(|_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

fn bloch_by_trace(m: &Operator) -> Bloch {
    Bloch::new(
        (sigma_x() * m).trace().re,
        (sigma_y() * m).trace().re,
        (sigma_z() * m).trace().re,
    )
}

fn max_abs(m: &Operator) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = [0.0f64; 4];
    for _ in 0..1000 {
        let r = random_bloch(&mut rng);
        let rho = QubitState::from_bloch(r).unwrap();
        let c = random_operator(&mut rng);
        let d = dissipator(&c, &rho);
        let h = innovation_term(&c, &rho);
        worst[0] = worst[0].max(d.trace().norm());
        worst[1] = worst[1].max(h.trace().norm());
        worst[2] = worst[2].max(max_abs(&(d - d.adjoint())).max(max_abs(&(h - h.adjoint()))));
        let rb = bloch_by_trace(rho.matrix());
        worst[3] = worst[3].max((linear_entropy(&rho) - 0.5 * (1.0 - rb.norm_squared())).abs());
    }
    Outcome {
        pass: worst.iter().all(|w| *w <= 1e-10),
        detail: format!(
            "1000 trials, max |tr D|={:.1e} |tr H|={:.1e} hermiticity={:.1e} S_L={:.1e} (tol 1e-10)",
            worst[0], worst[1], worst[2], worst[3]
        ),
    }
}

fn criterion_2() -> Outcome {
    let kappa = 1.0;
    let dt = 1e-3;
    let steps = 3000;
    let seeds = 100;
    let cfg = SimConfig {
        phi_true: 0.3,
        g_axis: PauliAxis::x(),
        noise: NoiseModel::noiseless(),
        dt,
        steps_per_block: steps,
        seed: 0,
    };
    let rho0 = QubitState::from_bloch(Bloch::new(0.0, 0.0, 0.8)).unwrap();
    // Per seed: S_L after every step, and -2κ tr[XρXρ] at the start of every step.
    let runs: Vec<(Vec<f64>, Vec<f64>)> = (0..seeds)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(2, i));
            let run = track_purification(&rho0, &cfg, kappa, 1.0, steps, &mut rng).unwrap();
            let states = run.record.states.unwrap();
            let entropy = states.iter().map(linear_entropy).collect();
            let mut prev = rho0.clone();
            let mut law = Vec::with_capacity(steps);
            for (axis, s) in run.record.axes.iter().zip(&states) {
                let x = axis.operator();
                let r = prev.matrix();
                law.push(-2.0 * kappa * (x * r * x * r).trace().re);
                prev = s.clone();
            }
            (entropy, law)
        })
        .collect();

    let s0 = linear_entropy(&rho0);
    let mean_s = |j: usize| runs.iter().map(|(s, _)| s[j]).sum::<f64>() / seeds as f64;
    let window = 500;
    let mut worst_rel = 0.0f64;
    for w in 0..steps / window {
        let a = w * window;
        let b = a + window;
        let start = if a == 0 { s0 } else { mean_s(a - 1) };
        let measured = (mean_s(b - 1) - start) / (window as f64 * dt);
        let predicted = runs.iter().map(|(_, l)| l[a..b].iter().sum::<f64>()).sum::<f64>() / (seeds as f64 * window as f64);
        worst_rel = worst_rel.max(((measured - predicted) / predicted).abs());
    }
    let mut worst_spread = 0.0f64;
    for j in 0..steps {
        let m = mean_s(j);
        let var = runs.iter().map(|(s, _)| (s[j] - m).powi(2)).sum::<f64>() / (seeds - 1) as f64;
        worst_spread = worst_spread.max(var.sqrt());
    }
    Outcome {
        pass: worst_rel <= 0.02 && worst_spread <= 1e-2,
        detail: format!(
            "closed-loop perpendicular axes, 100 seeds, t in [0,3]: max rel. error of dS_L/dt over 500-step windows {:.2}% (tol 2%), max pointwise std of S_L {:.2e} (tol 1e-2)",
            100.0 * worst_rel,
            worst_spread
        ),
    }
}

fn martingale_check(noise: NoiseModel, label: &str) -> (bool, String) {
    let n_traj = 10_000u64;
    let steps = 2000;
    let every = steps / 10;
    let cfg = SimConfig {
        phi_true: 0.3,
        g_axis: PauliAxis::x(),
        noise,
        dt: 1e-3,
        steps_per_block: steps,
        seed: 0,
    };
    let rho0 = QubitState::from_bloch(Bloch::y()).unwrap();
    let schedule = plan_block(1, 0.35, &rho0, &cfg.control_model(), 1.0, 1.0).unwrap().ops();
    let mean_path = sme::mean_evolution(&rho0, &schedule, cfg.phi_true, &cfg).unwrap();

    let sums = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(3, i));
            let mut rho = rho0.clone();
            let mut acc = vec![(Vector3::zeros(), Vector3::zeros()); 10];
            for (j, meas) in schedule.iter().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                rho = sme::step(&rho, meas, &cfg, z * cfg.dt.sqrt()).unwrap().0;
                if (j + 1) % every == 0 {
                    let r = rho.bloch();
                    let slot = &mut acc[(j + 1) / every - 1];
                    slot.0 += r;
                    slot.1 += r.component_mul(&r);
                }
            }
            acc
        })
        .reduce(
            || vec![(Vector3::zeros(), Vector3::zeros()); 10],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    x.0 += y.0;
                    x.1 += y.1;
                }
                a
            },
        );
    let n = n_traj as f64;
    let mut worst = 0.0f64;
    for (c, (s, s2)) in sums.iter().enumerate() {
        let mean: Bloch = s / n;
        let var: Bloch = (s2 / n - mean.component_mul(&mean)) * (n / (n - 1.0));
        let se = (var.sum() / n).sqrt();
        let target = mean_path[(c + 1) * every].bloch();
        worst = worst.max((mean - target).norm() / se);
    }
    (worst <= 3.0, format!("{label}: max |mean - mean_evolution| = {worst:.2} SE"))
}

fn criterion_3() -> Outcome {
    let (good, g) = martingale_check(NoiseModel::thermal(0.01, 0.1).unwrap(), "good");
    let (bad, b) = martingale_check(NoiseModel::thermal(1.0, 0.1).unwrap(), "bad");
    Outcome {
        pass: good && bad,
        detail: format!("10^4 trajectories, 10 checkpoints over t in (0,2], planned schedule; {g}; {b} (tol 3 SE)"),
    }
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for nbar in [0.0, 0.5, 2.0] {
        let cfg = SimConfig {
            phi_true: 0.0,
            g_axis: PauliAxis::x(),
            noise: NoiseModel::thermal(1.0, nbar).unwrap(),
            dt: 1e-3,
            steps_per_block: 30_000,
            seed: 0,
        };
        let meas = MeasurementOp::new(PauliAxis::z(), 0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho0 = QubitState::from_bloch(Bloch::new(0.3, 0.2, 0.9)).unwrap();
        let (rho, _) = simulate_block(&rho0, &vec![meas; cfg.steps_per_block], &cfg, &mut rng).unwrap();
        let err = (rho.bloch().z + 1.0 / (2.0 * nbar + 1.0)).abs();
        worst = worst.max(err);
        parts.push(format!("nbar={nbar}: |<σz> + 1/(2nbar+1)| = {err:.1e}"));
    }
    Outcome {
        pass: worst <= 1e-6,
        detail: format!("unmonitored, t=30/γ: {} (tol 1e-6)", parts.join(", ")),
    }
}

/// The linear (ostensible-measure) filter: Euler steps of
/// dρ̃ = L ρ̃ dt + √η (c ρ̃ + ρ̃ c†) dY with the unnormalized trace kept.
fn linear_filter_trace(
    rho0: &Operator,
    phi: f64,
    g: &Operator,
    jumps: &[Operator],
    c: &Operator,
    eta: f64,
    dt: f64,
    record: &[f64],
) -> f64 {
    let i = C64::new(0.0, 1.0);
    let lind = |l: &Operator, r: &Operator| {
        let ld = l.adjoint();
        l * r * ld - (ld * l * r + r * ld * l) * C64::from(0.5)
    };
    let mut r = *rho0;
    for dy_big in record {
        let h = g * C64::from(phi);
        let mut drift = -(h * r - r * h) * i + lind(c, &r);
        for l in jumps {
            drift += lind(l, &r);
        }
        let innov = (c * r + r * c.adjoint()) * C64::from(eta.sqrt() * dy_big);
        r += drift * C64::from(dt) + innov;
    }
    r.trace().re
}

fn criterion_5() -> Outcome {
    let dt: f64 = 1e-6;
    let (kappa, eta): (f64, f64) = (1.0, 0.8);
    let (gamma, nbar) = (0.2, 0.3);
    let axis = PauliAxis::new(Bloch::new(0.2, -0.5, 0.8)).unwrap();
    let meas = MeasurementOp::new(axis, kappa, eta).unwrap();
    let noise = NoiseModel::thermal(gamma, nbar).unwrap();
    let rho0 = QubitState::from_bloch(Bloch::new(0.3, 0.5, 0.6)).unwrap();
    let grid = PhaseGrid::new(0.0, 1.0, 3).unwrap();
    let signs = [1.0, 1.0, -1.0, 1.0, -1.0];
    let big: Vec<f64> = signs.iter().map(|s| s * dt.sqrt()).collect();

    let mut bank = HypothesisBank::new(grid, &rho0).unwrap();
    for d in &big {
        let dy = d / (4.0 * eta).sqrt();
        bank.assimilate(dy, &meas, &noise, &PauliAxis::x(), dt).unwrap();
    }
    let ll = bank.raw_log_likelihood();

    let n = axis.vector();
    let c = (sigma_x() * C64::from(n.x) + sigma_y() * C64::from(n.y) + sigma_z() * C64::from(n.z)) * C64::from((kappa / 2.0).sqrt());
    let jumps = [sigma_minus() * C64::from((gamma * (nbar + 1.0)).sqrt()), sigma_plus() * C64::from((gamma * nbar).sqrt())];
    let mut worst = 0.0f64;
    for k in 0..3 {
        let oracle = linear_filter_trace(rho0.matrix(), grid.node(k), &sigma_x(), &jumps, &c, eta, dt, &big);
        worst = worst.max((ll[k].exp() - oracle).abs() / oracle);
    }
    Outcome {
        pass: worst <= 1e-6,
        detail: format!("3 nodes, 5 steps at dt=1e-6: max relative |exp(l_k) - tr(linear filter)| = {worst:.2e} (tol 1e-6)"),
    }
}

fn good_config() -> ProtocolConfig {
    ProtocolConfig::with_phi(0.3)
}

fn bad_config() -> ProtocolConfig {
    let mut cfg = ProtocolConfig::with_phi(0.3);
    cfg.sim.noise = NoiseModel::thermal(1.0, 0.1).unwrap();
    cfg
}

fn three_block_ensemble() -> EnsembleSummary {
    let mut cfg = good_config();
    cfg.max_blocks = 3;
    cfg.epsilon = 1e-9;
    run_ensemble(&cfg, 200, 6).unwrap()
}

fn criterion_6(s: &EnsembleSummary) -> Outcome {
    let covered = s
        .trajectories
        .iter()
        .filter(|t| t.blocks.last().is_some_and(|b| b.abs_error <= 3.0 * b.std))
        .count();
    let frac = covered as f64 / s.n_traj as f64;
    let medians: Vec<f64> = s.blocks.iter().map(|b| b.std.median).collect();
    let shrinking = medians.len() == 3 && medians.windows(2).all(|w| w[1] < w[0]);
    Outcome {
        pass: s.failures == 0 && frac >= 0.9 && shrinking,
        detail: format!(
            "200 seeds, 3 blocks: {:.1}% with |φ_est-φ*| <= 3σ (need >= 90%), median σ by block {:?}, failures {}",
            100.0 * frac,
            medians.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>(),
            s.failures
        ),
    }
}

fn criterion_7() -> Outcome {
    let t = Instant::now();
    let good = run_ensemble(&good_config(), 200, 7).unwrap();
    let good_time = t.elapsed();
    let t = Instant::now();
    let bad = run_ensemble(&bad_config(), 200, 7).unwrap();
    let bad_time = t.elapsed();
    let fmt = |m: Option<f64>| m.map_or("not reached".to_string(), |v| format!("{v}"));
    let purity_good = good.blocks[0].purity.median;
    let purity_bad = bad.blocks[0].purity.median;
    let limit = Duration::from_secs(600);
    Outcome {
        pass: bad.median_blocks() > good.median_blocks()
            && purity_bad < purity_good
            && good_time <= limit
            && bad_time <= limit,
        detail: format!(
            "ε={}, max_blocks={}: median blocks-to-tolerance good {} vs bad (γ=1) {}; median block-1 purity good {:.4} vs bad {:.4}; runtimes {:.1?} / {:.1?} (limit 10 min each)",
            good_config().epsilon,
            good_config().max_blocks,
            fmt(good.median_blocks_to_tolerance),
            fmt(bad.median_blocks_to_tolerance),
            purity_good,
            purity_bad,
            good_time,
            bad_time
        ),
    }
}

fn criterion_8(s: &EnsembleSummary) -> Outcome {
    let last: Vec<_> = s.trajectories.iter().filter_map(|t| t.blocks.last()).collect();
    let n = last.len() as f64;
    let mean = last.iter().map(|b| b.phi_est).sum::<f64>() / n;
    let sd = (last.iter().map(|b| (b.phi_est - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let reported = last.iter().map(|b| b.std).sum::<f64>() / n;
    let ratio = reported / sd;
    Outcome {
        pass: (0.5..=2.0).contains(&ratio),
        detail: format!(
            "good-control ensemble after 3 blocks: std of φ_est {sd:.4}, mean reported σ {reported:.4}, ratio {ratio:.2} (need within [0.5, 2])"
        ),
    }
}

fn criterion_9() -> Outcome {
    let x = PauliAxis::x();
    let mixed = qfi(&QubitState::maximally_mixed(), &x);
    let pure = qfi(&QubitState::from_bloch(Bloch::z()).unwrap(), &x);
    let partial = qfi(&QubitState::from_bloch(Bloch::new(0.0, 0.0, 0.5)).unwrap(), &x);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut violations = 0;
    for _ in 0..1000 {
        let a = QubitState::from_bloch(random_bloch(&mut rng)).unwrap();
        let b = QubitState::from_bloch(random_bloch(&mut rng)).unwrap();
        let g = PauliAxis::new(random_bloch(&mut rng)).unwrap_or(x);
        let p: f64 = rng.random();
        let mix = a.mix(&b, p);
        if qfi(&mix, &g) > p * qfi(&a, &g) + (1.0 - p) * qfi(&b, &g) + 1e-12 {
            violations += 1;
        }
    }
    let ok = mixed.abs() < 1e-12 && (pure - 2.0).abs() < 1e-12 && (partial - 0.5).abs() < 1e-12 && violations == 0;
    Outcome {
        pass: ok,
        detail: format!(
            "qfi(I/2)={mixed:.1e}, qfi(|e>, σx)={pure}, qfi((I+0.5σz)/2, σx)={partial}, convexity violations {violations}/1000"
        ),
    }
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn criterion_10() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_selfstab");
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("c.toml");
    std::fs::write(&config, "[sim]\nphi_true = 0.3\nsteps_per_block = 500\n[grid]\nn_points = 64\n[protocol]\nmax_blocks = 3\n").unwrap();
    let mut details = Vec::new();
    let mut ok = true;
    for (name, args) in [
        ("run", vec!["run", "--seed", "7"]),
        ("ensemble", vec!["ensemble", "--traj", "6", "--seed", "7"]),
        ("run json", vec!["run", "--seed", "7", "--format", "json"]),
    ] {
        let mut trees = Vec::new();
        for rep in 0..2 {
            let out = tmp.path().join(format!("{}-{rep}", name.replace(' ', "-")));
            let status = Command::new(exe)
                .args(&args)
                .arg("--config")
                .arg(&config)
                .arg("--out-dir")
                .arg(&out)
                .output()
                .unwrap();
            ok &= status.status.success();
            trees.push(tree_bytes(&out));
        }
        let same = trees[0] == trees[1] && !trees[0].is_empty();
        ok &= same;
        details.push(format!("{name}: {} files {}", trees[0].len(), if same { "identical" } else { "DIFFER" }));
    }
    Outcome {
        pass: ok,
        detail: format!("master seed 7 twice via the CLI: {}", details.join(", ")),
    }
}

fn main() {
    let min = |m: u64| Some(Duration::from_secs(60 * m));
    let mut results = Vec::new();
    results.push(check(1, Some(Duration::from_secs(1)), criterion_1));
    results.push(check(2, Some(Duration::from_secs(30)), criterion_2));
    results.push(check(3, min(5), criterion_3));
    results.push(check(4, Some(Duration::from_secs(10)), criterion_4));
    results.push(check(5, Some(Duration::from_secs(1)), criterion_5));
    let mut ensemble = None;
    results.push(check(6, min(10), || {
        let s = three_block_ensemble();
        let out = criterion_6(&s);
        ensemble = Some(s);
        out
    }));
    results.push(check(7, None, criterion_7));
    let ensemble = ensemble.expect("criterion 6 ran");
    results.push(check(8, None, || criterion_8(&ensemble)));
    results.push(check(9, None, criterion_9));
    results.push(check(10, None, criterion_10));
    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
