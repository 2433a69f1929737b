//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, Matrix2xX};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use shapefit::convex::{penalized_objective, recover_pose, solve_noiseless, solve_noisy, SolverOptions};
use shapefit::dictionary::{learn_dictionary, DictLearnOptions};
use shapefit::prox::{project_l1_ball, prox_spectral};
use shapefit::{LandmarkSet2D, Shape3D};
use shapefit_harness::benchmark::{far_from_mean_benchmark, BenchmarkConfig};
use shapefit_harness::evaluate::{evaluate_items, DatasetItem};
use shapefit_harness::methods::{Method, MethodOptions};
use shapefit_harness::phase::{monotonicity_violations, run_grid, trial_seed, PhaseConfig, SUCCESS_THRESHOLD};
use shapefit_harness::synth::synth_instance;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// k = 50, z = 3, p = 150: exact recovery in at least 9 of 10 trials.
/// Also covers the tightness check on the successful trials.
fn exact_recovery() -> (Outcome, Outcome) {
    let start = Instant::now();
    let solver = PhaseConfig::default().solver;
    let mut successes = 0;
    let mut worst_tight: f64 = 0.0;
    let mut worst_defect: f64 = 0.0;
    let mut worst_err: f64 = 0.0;
    for trial in 0..10 {
        let inst = synth_instance(50, 150, 3, trial_seed(0, 150, 3, trial)).unwrap();
        let res = solve_noiseless(&inst.w, &inst.dict, &solver).unwrap();
        let truth = inst.true_motion.to_matrix();
        let rel = (res.motion.to_matrix() - &truth).norm() / truth.norm();
        worst_err = worst_err.max(rel);
        if rel >= SUCCESS_THRESHOLD {
            continue;
        }
        successes += 1;
        for (block, active) in res.motion.blocks().iter().zip(&res.active) {
            if !active {
                continue;
            }
            let (s1, s2) = block.singular_values();
            worst_tight = worst_tight.max((s1 / s2 - 1.0).abs());
            let pose = recover_pose(block, 0.0);
            let defect = (pose.rotation.transpose() * pose.rotation - nalgebra::Matrix3::identity()).amax();
            worst_defect = worst_defect.max(defect);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let c1 = outcome(
        successes >= 9 && elapsed < 300.0,
        format!("{successes}/10 recovered, worst relative error {worst_err:.2e}, {elapsed:.2}s"),
    );
    let c6 = outcome(
        successes > 0 && worst_tight < 1e-3 && worst_defect < 1e-6,
        format!("max |s1/s2 - 1| {worst_tight:.2e}, max orthonormality defect {worst_defect:.2e}"),
    );
    (c1, c6)
}

fn phase_structure() -> Outcome {
    let start = Instant::now();
    let rows = run_grid(&PhaseConfig::default()).unwrap();
    let violations = monotonicity_violations(&rows, 0.2);
    let full = rows.iter().filter(|r| r.frequency == 1.0).count();
    let low = rows.iter().filter(|r| r.frequency < 0.5).count();
    outcome(
        violations.is_empty() && full > 0 && low > 0,
        format!(
            "{} cells, {full} at frequency 1, {low} below 0.5, {} monotonicity violations, {:.1}s",
            rows.len(),
            violations.len(),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Largest singular value and the rank-one subgradient `u vᵀ` of the
/// spectral norm, from the eigen-decomposition of `XᵀX`.
fn spectral_subgradient(x: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let eig = (x.transpose() * x).symmetric_eigen();
    let (i, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
    let v = eig.eigenvectors.column(i).into_owned();
    let xv = x * &v;
    let sigma = xv.norm();
    if sigma == 0.0 {
        return (0.0, DMatrix::zeros(x.nrows(), x.ncols()));
    }
    (sigma, (xv / sigma) * v.transpose())
}

/// Best objective of the subgradient method with steps `1/(t+1)`.
fn subgradient_oracle(y: &DMatrix<f64>, lambda: f64, steps: usize) -> f64 {
    let mut x = y.clone();
    let mut best = f64::INFINITY;
    for t in 0..steps {
        let (sigma, g) = spectral_subgradient(&x);
        best = best.min(0.5 * (y - &x).norm_squared() + lambda * sigma);
        let step = (&x - y) + g * lambda;
        x -= step / (t as f64 + 1.0);
    }
    best
}

fn prox_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_nuclear: f64 = 0.0;
    let mut worst_align: f64 = f64::INFINITY;
    let mut worst_gap: f64 = 0.0;
    let mut count = 0;
    for (rows, cols) in [(2, 3), (4, 4)] {
        for _ in 0..1000 {
            let scale = rng.random_range(0.1..3.0);
            let y = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal) * scale);
            let lambda = rng.random_range(0.05..2.0);
            let x = prox_spectral(&y, lambda);
            let z = (&y - &x) / lambda;
            let nuclear: f64 = singular_values(&z).iter().sum();
            let top = singular_values(&x)[0];
            worst_nuclear = worst_nuclear.max(nuclear - 1.0);
            worst_align = worst_align.min(z.dot(&x) - top);
            let f = 0.5 * (&y - &x).norm_squared() + lambda * top;
            // the oracle converges slowly; give it longer only where needed
            let mut gap = (f - subgradient_oracle(&y, lambda, 3000)).abs();
            if gap > 1e-4 {
                gap = (f - subgradient_oracle(&y, lambda, 50_000)).abs();
            }
            worst_gap = worst_gap.max(gap);
            count += 1;
        }
    }
    outcome(
        worst_nuclear <= 1e-8 && worst_align >= -1e-8 && worst_gap <= 1e-4,
        format!(
            "{count} matrices, max nuclear excess {worst_nuclear:.1e}, min <Z,X>-|X|2 {worst_align:.1e}, max oracle gap {worst_gap:.1e}"
        ),
    )
}

/// Sort, find the largest `ρ` with `u_ρ > (Σ_{i≤ρ} u_i − r)/ρ`, shrink.
fn l1_oracle(v: &[f64], radius: f64) -> Vec<f64> {
    if v.iter().map(|x| x.abs()).sum::<f64>() <= radius {
        return v.to_vec();
    }
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - radius) / (j + 1) as f64;
        if uj > t {
            theta = t;
        }
    }
    v.iter().map(|x| x.signum() * (x.abs() - theta).max(0.0)).collect()
}

fn l1_projection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=50);
        let v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0).collect();
        let radius = rng.random_range(0.0..2.0 * n as f64);
        let got = project_l1_ball(&v, radius);
        let want = l1_oracle(&v, radius);
        for (a, b) in got.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst <= 1e-10, format!("10000 vectors, max deviation {worst:.1e}"))
}

fn admm_discipline() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut converged = 0;
    let mut worst_spread: f64 = 0.0;
    for i in 0..100u64 {
        let k = rng.random_range(2..=64);
        let p = rng.random_range(5..=50);
        let z = rng.random_range(1..=k.min(5));
        let inst = synth_instance(k, p, z, 1000 + i).unwrap();
        let noise = Matrix2xX::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.01);
        let w = LandmarkSet2D::fully_visible(inst.w.points() + noise).unwrap();
        let mut objectives = Vec::new();
        for mu in [0.1, 1.0, 10.0] {
            let opts = SolverOptions {
                mu_init: mu,
                ..Default::default()
            };
            let res = solve_noisy(&w, &inst.dict, &opts).unwrap();
            if mu == 1.0 && res.converged && res.primal_residual < 1e-4 && res.dual_residual < 1e-4 {
                converged += 1;
            }
            objectives.push(penalized_objective(&w, &inst.dict, &res.motion, opts.lambda).unwrap());
        }
        let lo = objectives.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = objectives.iter().copied().fold(0.0, f64::max);
        worst_spread = worst_spread.max((hi - lo) / lo.max(1e-12));
    }
    outcome(
        converged >= 95 && worst_spread < 1e-3,
        format!("{converged}/100 converged within 500 iterations, max objective spread over mu {worst_spread:.1e}"),
    )
}

fn baseline_ordering() -> Outcome {
    let bench = far_from_mean_benchmark(&BenchmarkConfig::default()).unwrap();
    let items: Vec<DatasetItem> = bench
        .items
        .into_iter()
        .map(|i| DatasetItem {
            name: i.name,
            w: i.w,
            truth: Some(i.truth),
        })
        .collect();
    let table = evaluate_items(&items, &bench.dict, &Method::ALL, &MethodOptions::default()).unwrap();
    let convex = table.mean(Method::Convex).unwrap();
    let cold = table.mean(Method::AltMin).unwrap();
    let warm = table.mean(Method::AltMinWarm).unwrap();
    outcome(
        convex < cold && warm < cold,
        format!("{} items: convex {convex:.4}, altmin {cold:.4}, altmin_warm {warm:.4}", items.len()),
    )
}

fn dictionary_learning() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let shape = |rng: &mut ChaCha8Rng| {
        Shape3D::new(nalgebra::Matrix3xX::from_fn(15, |_, _| rng.sample(StandardNormal)))
            .unwrap()
            .centralize()
    };
    let shapes: Vec<Shape3D> = (0..20).map(|_| shape(&mut rng)).collect();
    let learned = learn_dictionary(&shapes, 4, 0.1, &DictLearnOptions::default()).unwrap();
    let monotone = learned.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    let min_c = learned.coefficients.min();
    let max_norm = learned
        .dictionary
        .bases()
        .iter()
        .map(Shape3D::frobenius_norm)
        .fold(0.0, f64::max);
    let kkt = learned.coeff_kkt.max(learned.basis_kkt);

    let few: Vec<Shape3D> = (0..6).map(|_| shape(&mut rng)).collect();
    let exact = learn_dictionary(&few, 6, 1e-6, &DictLearnOptions::default()).unwrap();
    let residual = exact.relative_residuals(&few).into_iter().fold(0.0, f64::max);
    outcome(
        monotone && min_c >= -1e-12 && max_norm <= 1.0 + 1e-9 && kkt < 1e-6 && residual < 1e-3,
        format!(
            "monotone {monotone} over {} alternations, min C {min_c:.1e}, max |B|F {max_norm:.6}, KKT {kkt:.1e}, n=k residual {residual:.1e}",
            learned.iterations
        ),
    )
}

fn throughput() -> Outcome {
    let inst = synth_instance(64, 15, 5, 9).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let start = Instant::now();
        solve_noisy(&inst.w, &inst.dict, &SolverOptions::default()).unwrap();
        worst = worst.max(start.elapsed().as_secs_f64());
    }
    outcome(worst < 1.0, format!("k=64, p=15: slowest of 5 solves {worst:.3}s"))
}

fn shapefit(args: &[&str], cwd: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_shapefit"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Outcome {
    let run = |dir: &Path| -> Vec<(String, Vec<u8>)> {
        let steps: &[&[&str]] = &[
            &["simulate", "--p-list", "20,60", "--z-list", "1,4", "--k", "20", "--trials", "3", "--seed", "7", "--out", "grid.csv"],
            &["simulate", "--kind", "benchmark", "--instances", "6", "--seed", "7", "--out", "bench"],
            &["solve", "--landmarks", "bench/item0.2d.csv", "--dict", "bench/dictionary.json", "--seed", "7", "--out", "convex.json"],
            &["solve", "--landmarks", "bench/item1.2d.csv", "--dict", "bench/dictionary.json", "--method", "altmin", "--seed", "7", "--out", "altmin.json"],
            &["solve", "--landmarks", "bench/item2.2d.csv", "--dict", "bench/dictionary.json", "--method", "altmin_warm", "--seed", "7", "--out", "warm.json"],
            &["evaluate", "--dataset", "bench", "--dict", "bench/dictionary.json", "--seed", "7", "--out", "eval.csv"],
        ];
        for args in steps {
            assert!(shapefit(args, dir), "shapefit {args:?} failed");
        }
        std::fs::create_dir(dir.join("train")).unwrap();
        for i in 0..6 {
            std::fs::copy(dir.join(format!("bench/item{i}.3d.csv")), dir.join(format!("train/s{i}.csv"))).unwrap();
        }
        let learn = ["learn-dict", "--shapes", "train", "--k", "3", "--beta", "0.01", "--seed", "7", "--out", "dict.json"];
        assert!(shapefit(&learn, dir), "learn-dict failed");

        let mut files = Vec::new();
        for entry in walk(dir) {
            let rel = entry.strip_prefix(dir).unwrap().display().to_string();
            files.push((rel, std::fs::read(&entry).unwrap()));
        }
        files.sort();
        files
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run(a.path());
    let second = run(b.path());
    let differing: Vec<&String> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| &x.0)
        .collect();
    outcome(
        first.len() == second.len() && differing.is_empty(),
        format!("{} output files compared, {} differ", first.len(), differing.len()),
    )
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}

fn main() {
    let (c1, c6) = exact_recovery();
    let results = [
        (1, "exact recovery", c1),
        (2, "phase-transition structure", phase_structure()),
        (3, "spectral prox", prox_correctness()),
        (4, "l1-ball projection", l1_projection()),
        (5, "ADMM convergence", admm_discipline()),
        (6, "tightness", c6),
        (7, "convex vs alternating baseline", baseline_ordering()),
        (8, "dictionary learning", dictionary_learning()),
        (9, "throughput", throughput()),
        (10, "determinism", determinism()),
    ];
    let mut failed = 0;
    for (id, name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {tag}  {name}: {}", o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
