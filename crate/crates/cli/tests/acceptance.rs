// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance suite. One PASS/FAIL line per criterion, each built from named
//! checks at the stated tolerance.
//!
//! Two checks are known to fail because their targets are out of reach for a
//! faithful implementation; they are listed in `EXPECTED_RED` with the reason
//! and still print FAIL. The process exits non-zero on any other failure, or
//! if an expected-red check starts passing (the list is then stale).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mdprobe::container;
use mdprobe::dataset::prepare;
use mdprobe::eval::{pair_decision, published};
use mdprobe::losses::{ccs_loss, gradient, pca_direction};
use mdprobe::trainer::{random_baseline, train_best_of, train_one};
use mdprobe::{
    accuracy, gen_synthetic, grid_search, normalize, random_cosine_tail, ContrastActivationSet, Direction,
    GridSearchConfig, LossSpec, OrientationMode, Prober, SearchObjective, SignMode, SyntheticConfig, TrainConfig,
};
use mdprobe_oracles::{
    abs_cos, central_difference, cosine_tail_by_quadrature, extreme_eigenvector, gaussian, gaussian_vec,
    monte_carlo_mean_abs_cosine, relative_error, rotated_gaussian_rows, second_moment, Loss, Pairs,
};
use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// (criterion, check, reason). Checked by exact name.
const EXPECTED_RED: &[(&str, &str, &str)] = &[
    (
        "synthetic recovery",
        "random baseline accuracy in [0.45, 0.55]",
        "with isotropic noise, the signal-to-noise ratio MD needs for 0.95 also lifts auto-oriented random directions above 0.55",
    ),
    (
        "tail probability",
        "log10 P(d=1024, c=0.63) = -237 +/- 2",
        "the regularized-beta tail at c=0.63 is about 10^-114 (matched by quadrature); 10^-237 corresponds to c near 0.8",
    ),
];

struct Check {
    name: String,
    pass: bool,
    detail: String,
}

fn check(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        pass,
        detail: detail.into(),
    }
}

fn to_nd(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

fn to_na(m: ndarray::ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

fn slice(a: &Array1<f64>) -> Vec<f64> {
    a.to_vec()
}

fn oracle_loss(spec: &LossSpec) -> Loss {
    match *spec {
        LossSpec::Ccs => Loss::Ccs,
        LossSpec::Supervised => Loss::Supervised,
        LossSpec::Md { lambda } => Loss::Md { lambda },
        LossSpec::Ma { lambda, sign_mode } => Loss::Ma {
            lambda,
            literal: sign_mode == SignMode::Literal,
        },
        LossSpec::Smr { lambda, sign_mode } => Loss::Smr {
            lambda,
            literal: sign_mode == SignMode::Literal,
        },
    }
}

fn gradients() -> Vec<Check> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let names = ["ccs", "md", "ma-literal", "ma-md-consistent", "smr-literal", "smr-md-consistent", "supervised"];
    let mut worst = [0.0f64; 7];
    for _ in 0..100 {
        let n = rng.random_range(2..=20);
        let d = rng.random_range(1..=8);
        let pairs = Pairs {
            plus: (0..n).map(|_| gaussian_vec(&mut rng, d)).collect(),
            minus: (0..n).map(|_| gaussian_vec(&mut rng, d)).collect(),
            labels: (0..n).map(|_| rng.random_range(0..=1u8)).collect(),
        };
        let theta = gaussian_vec(&mut rng, d);
        let bias: f64 = rng.sample(StandardNormal);
        let lambda = rng.random_range(0.0..0.999);
        let flat = |rows: &Vec<Vec<f64>>| Array2::from_shape_vec((n, d), rows.concat()).unwrap();
        let set = ContrastActivationSet::new(flat(&pairs.plus), flat(&pairs.minus), Some(pairs.labels.clone())).unwrap();
        let prober = Prober::unconstrained(Array1::from(theta.clone()), bias).unwrap();
        let specs = [
            LossSpec::Ccs,
            LossSpec::Md { lambda },
            LossSpec::Ma { lambda, sign_mode: SignMode::Literal },
            LossSpec::Ma { lambda, sign_mode: SignMode::MdConsistent },
            LossSpec::Smr { lambda, sign_mode: SignMode::Literal },
            LossSpec::Smr { lambda, sign_mode: SignMode::MdConsistent },
            LossSpec::Supervised,
        ];
        for (k, spec) in specs.iter().enumerate() {
            let (g, gb) = gradient(spec, &prober, &set).unwrap();
            let mut analytic = g.to_vec();
            analytic.push(gb);
            let mut params = theta.clone();
            params.push(bias);
            let f = |p: &[f64]| pairs.loss(oracle_loss(spec), &p[..p.len() - 1], p[p.len() - 1]);
            worst[k] = worst[k].max(relative_error(&analytic, &central_difference(f, &params, 1e-5)));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let mut checks: Vec<Check> = names
        .iter()
        .zip(worst)
        .map(|(n, w)| check(format!("{n} relative error <= 1e-6"), w <= 1e-6, format!("{n} {w:.1e}")))
        .collect();
    checks.push(check("runtime < 10 s", secs < 10.0, format!("{secs:.2} s")));
    checks
}

fn normalization() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let (mut worst_mean, mut worst_std, mut worst_disp) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let n = rng.random_range(2..=80);
        let d = rng.random_range(1..=12);
        let offset: Vec<f64> = (0..d).map(|_| rng.random_range(-100.0..100.0)).collect();
        let scale: Vec<f64> = (0..d).map(|_| 10f64.powf(rng.random_range(-3.0..3.0))).collect();
        let mut draw = || Array2::from_shape_fn((n, d), |(_, j)| offset[j] + scale[j] * rng.sample::<f64, _>(StandardNormal));
        let set = ContrastActivationSet::new(draw(), draw(), None).unwrap();
        let (norm, _) = normalize(&set).unwrap();
        for view in [norm.phi_plus(), norm.phi_minus()] {
            for col in view.columns() {
                let mean = col.sum() / n as f64;
                let std = (col.mapv(|x| (x - mean).powi(2)).sum() / n as f64).sqrt();
                worst_mean = worst_mean.max(mean.abs());
                worst_std = worst_std.max((std - 1.0).abs());
            }
        }
        let disp = (&norm.phi_plus() - &norm.phi_minus()).sum_axis(Axis(0)) / n as f64;
        worst_disp = disp.iter().fold(worst_disp, |w, x| w.max(x.abs()));
    }
    vec![
        check("|mean| <= 1e-9", worst_mean <= 1e-9, format!("max |mean| {worst_mean:.1e}")),
        check("|std - 1| <= 1e-7", worst_std <= 1e-7, format!("max |std-1| {worst_std:.1e}")),
        check("mean displacement <= 1e-9", worst_disp <= 1e-9, format!("max {worst_disp:.1e}")),
    ]
}

fn equivalence() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let (mut cases, mut agree) = (0usize, 0usize);
    while cases < 10_000 {
        let d = rng.random_range(1..=8);
        let theta = gaussian_vec(&mut rng, d);
        let plus = gaussian_vec(&mut rng, d);
        let minus = gaussian_vec(&mut rng, d);
        let bias = rng.sample::<f64, _>(StandardNormal) * 3.0;
        let set = ContrastActivationSet::new(
            Array2::from_shape_vec((1, d), plus.clone()).unwrap(),
            Array2::from_shape_vec((1, d), minus.clone()).unwrap(),
            None,
        )
        .unwrap();
        let prober = Prober::unconstrained(Array1::from(theta.clone()), bias).unwrap();
        let Some(decision) = pair_decision(&prober, &set, 0).unwrap() else {
            continue;
        };
        cases += 1;
        let u: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| a - b).collect();
        if decision == (mdprobe_oracles::dot(&theta, &u) > 0.0) {
            agree += 1;
        }
    }
    vec![check("decision equals sign(theta . u)", agree == cases, format!("{agree}/{cases}"))]
}

fn degenerate_ccs() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(1..=30);
        let d = rng.random_range(1..=10);
        let set = ContrastActivationSet::new(to_nd(&gaussian(&mut rng, n, d)), to_nd(&gaussian(&mut rng, n, d)), None).unwrap();
        worst = worst.max((ccs_loss(&Prober::zeros(d), &set).unwrap() - 0.25).abs());
    }
    vec![check("L_CCS(0, 0) = 0.25 to 1e-12", worst <= 1e-12, format!("max deviation {worst:.1e}"))]
}

fn md_extremes() -> Vec<Check> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let (mut worst0, mut worst1) = (1.0f64, 1.0f64);
    for d in 2..=8 {
        let su: Vec<f64> = (0..d).map(|k| 4.0 * 0.6f64.powi(k as i32)).collect();
        let mut sv: Vec<f64> = (0..d).map(|k| 3.0 * 0.8f64.powi(k as i32)).collect();
        sv[d - 1] *= 0.1;
        let u = rotated_gaussian_rows(&mut rng, 200, &su);
        let v = rotated_gaussian_rows(&mut rng, 200, &sv);
        let raw = ContrastActivationSet::new(to_nd(&((&v + &u) / 2.0)), to_nd(&((&v - &u) / 2.0)), None).unwrap();
        let (set, _) = normalize(&raw).unwrap();
        let un = to_na((&set.phi_plus() - &set.phi_minus()).view());
        let vn = to_na((&set.phi_plus() + &set.phi_minus()).view());
        let (top_u, _) = extreme_eigenvector(&second_moment(&un, false), true);
        let (bottom_v, _) = extreme_eigenvector(&second_moment(&vn, false), false);
        let cfg = TrainConfig { seed: d as u64, ..Default::default() };
        let t0 = train_one(&LossSpec::Md { lambda: 0.0 }, &set, &cfg).unwrap();
        let t1 = train_one(&LossSpec::Md { lambda: 1.0 }, &set, &cfg).unwrap();
        worst0 = worst0.min(abs_cos(&slice(t0.prober.theta()), &top_u));
        worst1 = worst1.min(abs_cos(&slice(t1.prober.theta()), &bottom_v));
    }
    let secs = start.elapsed().as_secs_f64();
    vec![
        check("lambda=0 vs top eigenvector of u-moment, |cos| >= 0.99", worst0 >= 0.99, format!("min |cos| {worst0:.6}")),
        check("lambda=1 vs bottom eigenvector of v-moment, |cos| >= 0.99", worst1 >= 0.99, format!("min |cos| {worst1:.6}")),
        check("runtime < 30 s", secs < 30.0, format!("{secs:.2} s")),
    ]
}

fn synthetic_recovery() -> Vec<Check> {
    let syn = gen_synthetic(&SyntheticConfig::default()).unwrap();
    let prepared = prepare(&syn.set, 0.6, 1).unwrap();
    let stats = prepared.stats.as_ref().unwrap();
    let truth = Direction::new(stats.map_displacement_direction(syn.truth_direction.as_array().view()).unwrap()).unwrap();

    let train_cfg = TrainConfig::default();
    let search_cfg = GridSearchConfig {
        base_seed: 2,
        ..GridSearchConfig::for_objective(SearchObjective::TrainAccuracy)
    };
    let (lambda, _) = grid_search(&LossSpec::Md { lambda: 0.0 }, &prepared.train, None, &search_cfg, &train_cfg).unwrap();
    let best = train_best_of(&LossSpec::Md { lambda }, &prepared.train, &train_cfg.with_seed(3), 10).unwrap();
    let (acc, _) = accuracy(&best.prober, &prepared.test, OrientationMode::Auto).unwrap();
    let cos = best.prober.direction().unwrap().cosine(&truth).unwrap().abs();

    let random = random_baseline(prepared.train.d(), 10, 4).unwrap();
    let random_acc = random
        .iter()
        .map(|p| accuracy(p, &prepared.test, OrientationMode::Auto).unwrap().0)
        .sum::<f64>()
        / random.len() as f64;
    vec![
        check("MD test accuracy >= 0.95", acc >= 0.95, format!("lambda* {lambda:.4}, accuracy {acc:.4}")),
        check("|cos(theta, t)| >= 0.9", cos >= 0.9, format!("|cos| {cos:.4}")),
        check(
            "random baseline accuracy in [0.45, 0.55]",
            (0.45..=0.55).contains(&random_acc),
            format!("random {random_acc:.4}"),
        ),
    ]
}

/// Pairs whose MD optimum rotates smoothly with lambda; the reference is the
/// exact optimum at a planted lambda, so the cosine objective peaks there.
fn grid_search_oracle() -> Vec<Check> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let (n, planted) = (2000, 0.437);
    let u = rotated_gaussian_rows(&mut rng, n, &[3.0, 2.0, 1.2, 0.6]);
    let v = rotated_gaussian_rows(&mut rng, n, &[2.5, 1.5, 1.0, 0.4]);
    let set = ContrastActivationSet::new(to_nd(&((&v + &u) / 2.0)), to_nd(&((&v - &u) / 2.0)), None)
        .unwrap()
        .assume_normalized();
    let a = second_moment(&u, false);
    let b = second_moment(&v, false);
    // Minimizing (lambda-1) t'At + lambda t'Bt on the sphere = top eigenvector
    // of (1-lambda) A - lambda B.
    let optimum = |lambda: f64| extreme_eigenvector(&(&a * (1.0 - lambda) - &b * lambda), true).0;
    let reference = optimum(planted);

    let mut dense_best = (0.0, f64::NEG_INFINITY);
    for k in 0..=990 {
        let lambda = k as f64 * 0.001;
        let c = abs_cos(&optimum(lambda), &reference);
        if c > dense_best.1 {
            dense_best = (lambda, c);
        }
    }

    let cfg = GridSearchConfig {
        initial_interval: [0.0, 0.99],
        base_seed: 7,
        ..GridSearchConfig::for_objective(SearchObjective::CosineToCcs)
    };
    let reference = [Direction::new(Array1::from(reference)).unwrap()];
    let (found, _) = grid_search(&LossSpec::Md { lambda: 0.0 }, &set, Some(&reference), &cfg, &TrainConfig::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let err = (found - dense_best.0).abs();
    vec![
        check(
            "|lambda* - dense argmax| <= 0.02",
            err <= 0.02,
            format!("search {found:.4}, dense argmax {:.3}, error {err:.4}", dense_best.0),
        ),
        check("runtime < 5 min", secs < 300.0, format!("{secs:.2} s")),
    ]
}

fn pca_oracle() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut worst = 1.0f64;
    for _ in 0..50 {
        let d = rng.random_range(1..=5);
        let n = rng.random_range(10..=60);
        let mut scales = vec![rng.random_range(1.0..3.0)];
        for _ in 1..d {
            let last = *scales.last().unwrap();
            scales.push(last / rng.random_range(1.25..2.0));
        }
        let u = rotated_gaussian_rows(&mut rng, n, &scales);
        let minus = gaussian(&mut rng, n, d);
        let plus = &minus + &u;
        let set = ContrastActivationSet::new(to_nd(&plus), to_nd(&minus), None).unwrap();
        let (oracle, _) = extreme_eigenvector(&second_moment(&u, true), true);
        worst = worst.min(abs_cos(&slice(pca_direction(&set).unwrap().as_array()), &oracle));
    }
    vec![check("|cos| >= 0.999 on 50 instances", worst >= 0.999, format!("min |cos| {worst:.8}"))]
}

fn tail() -> Vec<Check> {
    let got = random_cosine_tail(1024, 0.63).unwrap();
    let quad = cosine_tail_by_quadrature(1024, 0.63);
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mc = monte_carlo_mean_abs_cosine(&mut rng, 1024, 20_000);
    vec![
        check("log10 P(d=1024, c=0.63) = -237 +/- 2", (got + 237.0).abs() <= 2.0, format!("{got:.3}")),
        check(
            "library tail agrees with quadrature to 1e-6",
            (got - quad).abs() <= 1e-6 * quad.abs(),
            format!("quadrature {quad:.3}"),
        ),
        check("Monte Carlo mean |cos| at d=1024 is 0.025 +/- 0.01", (mc - 0.025).abs() <= 0.01, format!("{mc:.5}")),
    ]
}

fn container_round_trip(scratch: &Path) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let mut shapes = vec![(2, 1), (2, 9), (17, 1)];
    while shapes.len() < 20 {
        shapes.push((rng.random_range(2..=50), rng.random_range(1..=20)));
    }
    let mut identical = 0;
    for (k, &(n, d)) in shapes.iter().enumerate() {
        let mut draw = || Array2::from_shape_fn((n, d), |_| f64::from(rng.sample::<f32, _>(StandardNormal) * 7.0));
        let labels = (k % 2 == 0).then(|| (0..n).map(|i| u8::from(i % 3 == 0)).collect());
        let mut set = ContrastActivationSet::new(draw(), draw(), labels).unwrap();
        set.insert_meta("model_id", format!("m{k}"));
        let a = scratch.join(format!("a{k}"));
        let b = scratch.join(format!("b{k}"));
        container::save(&set, &a).unwrap();
        let back = container::load(&a).unwrap();
        container::save(&back, &b).unwrap();
        let same_values = back.phi_plus() == set.phi_plus()
            && back.phi_minus() == set.phi_minus()
            && back.labels() == set.labels()
            && back.meta() == set.meta();
        let same_bytes = [container::MANIFEST_FILE, container::PHI_PLUS_FILE, container::PHI_MINUS_FILE]
            .iter()
            .all(|f| fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap());
        if same_values && same_bytes {
            identical += 1;
        }
    }
    vec![check(
        "save -> load -> save bit-identical",
        identical == shapes.len(),
        format!("{identical}/{} datasets (incl. n=2, d=1)", shapes.len()),
    )]
}

fn run_pipeline(config: &Path, out: &Path, jobs: usize) -> PathBuf {
    let code = mdprobe_cli::run([
        "mdprobe".to_string(),
        "--jobs".into(),
        jobs.to_string(),
        "--out".into(),
        out.display().to_string(),
        "pipeline".into(),
        "--config".into(),
        config.display().to_string(),
        "--compare-paper".into(),
    ]);
    assert_eq!(code, 0, "pipeline exited with {code}");
    fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_string_lossy().starts_with("pipeline-"))
        .expect("pipeline output directory")
}

/// Relative path -> bytes for every file except the run manifest, which
/// carries wall time and cache paths.
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().unwrap() != "manifest.json" {
                files.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn determinism(scratch: &Path) -> (Vec<Check>, PathBuf) {
    let config = scratch.join("pipeline.json");
    fs::write(
        &config,
        r#"{
  "seed": 11,
  "datasets": [
    {"id": "syn_a", "model_id": "toy", "synthetic": {"n": 300, "d": 24, "seed": 1}},
    {"id": "syn_b", "model_id": "toy", "synthetic": {"n": 300, "d": 24, "seed": 2, "nuisance_scale": 3.0}}
  ]
}
"#,
    )
    .unwrap();
    let serial = run_pipeline(&config, &scratch.join("jobs1"), 1);
    let parallel = run_pipeline(&config, &scratch.join("jobs4"), 4);
    // Same root again: the CCS reference now comes from the cache.
    let cached = run_pipeline(&config, &scratch.join("jobs4"), 4);
    let (s, p, c) = (snapshot(&serial), snapshot(&parallel), snapshot(&cached));
    let numeric = s.keys().filter(|k| k.extension().is_some_and(|e| e == "csv" || e == "json")).count();
    (
        vec![
            check("--jobs 1 vs --jobs 4 byte-identical", s == p, format!("{} files ({numeric} csv/json)", s.len())),
            check("rerun from cached reference byte-identical", s == c, format!("{} files", c.len())),
        ],
        serial,
    )
}

fn not_reproducible(pipeline_dir: &Path) -> Vec<Check> {
    let avg = |table: &[[f64; 8]; 5], loss: &str| {
        let c = published::LOSSES.iter().position(|l| *l == loss).unwrap();
        table[4][c]
    };
    let boolq: BTreeMap<_, _> = published::BOOLQ_CCS_ACCURACY.into_iter().collect();
    let table = fs::read_to_string(pipeline_dir.join("report").join("accuracy_table.csv")).unwrap();
    vec![
        check(
            "static references embedded",
            avg(&published::ACCURACY, "ccs") == 0.7105
                && avg(&published::ACCURACY, "md_acc") == 0.7557
                && avg(&published::COSINE_TO_CCS, "md_ccs") == 0.6336
                && boolq["uqa_encoder"] == 0.5225
                && boolq["uqa_decoder"] == 0.9775,
            "CCS 0.7105, MD-Acc 0.7557, MD-CCS |cos| 0.6336, BoolQ enc/dec 0.5225/0.9775",
        ),
        check(
            "--compare-paper emits them as a reference row only",
            table.lines().any(|l| l.starts_with("published,Average,0.7105,")),
            "synthetic runs are not compared against them",
        ),
    ]
}

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let mut results: Vec<(&str, Vec<Check>, f64)> = Vec::new();
    let mut timed = |name: &'static str, f: &mut dyn FnMut() -> Vec<Check>| {
        let start = Instant::now();
        let checks = f();
        results.push((name, checks, start.elapsed().as_secs_f64()));
    };
    timed("gradient correctness", &mut gradients);
    timed("normalization", &mut normalization);
    timed("pair decision equivalence", &mut equivalence);
    timed("degenerate CCS point", &mut degenerate_ccs);
    timed("MD extremes vs eigen-oracle", &mut md_extremes);
    timed("synthetic recovery", &mut synthetic_recovery);
    timed("grid search oracle", &mut grid_search_oracle);
    timed("PCA oracle", &mut pca_oracle);
    timed("tail probability", &mut tail);
    timed("container round-trip", &mut || container_round_trip(&scratch.path().join("containers")));
    let mut pipeline_dir = PathBuf::new();
    timed("determinism", &mut || {
        let (checks, dir) = determinism(scratch.path());
        pipeline_dir = dir;
        checks
    });
    timed("not reproducible at desk scale", &mut || not_reproducible(&pipeline_dir));

    let mut unexpected = Vec::new();
    let mut expected_red = 0;
    for (criterion, checks, secs) in &results {
        let pass = checks.iter().all(|c| c.pass);
        let summary: Vec<&str> = checks.iter().map(|c| c.detail.as_str()).collect();
        println!("{} {criterion}: {} ({secs:.1} s)", if pass { "PASS" } else { "FAIL" }, summary.join("; "));
        for c in checks {
            let known = EXPECTED_RED.iter().find(|(k, n, _)| k == criterion && *n == c.name);
            match (c.pass, known) {
                (false, Some((_, _, why))) => {
                    expected_red += 1;
                    println!("     known failure: {} ({why})", c.name);
                }
                (false, None) => {
                    println!("     failed: {}", c.name);
                    unexpected.push(format!("{criterion}: {}", c.name));
                }
                (true, Some(_)) => unexpected.push(format!("{criterion}: {} now passes; update EXPECTED_RED", c.name)),
                (true, None) => {}
            }
        }
    }
    let passed = results.iter().filter(|(_, c, _)| c.iter().all(|c| c.pass)).count();
    println!(
        "\n{passed}/{} criteria pass; {expected_red} known failing check(s); {} unexpected",
        results.len(),
        unexpected.len()
    );
    if !unexpected.is_empty() {
        for u in &unexpected {
            eprintln!("unexpected: {u}");
        }
        std::process::exit(1);
    }
}
