//! Acceptance suite: prints one PASS/FAIL line per criterion.
//!
//! Red criteria are reported, not raised, so `cargo test` stays usable while
//! a criterion is out of reach. Set `MATCHREP_ACCEPTANCE_STRICT=1` to exit
//! non-zero when any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use matchrep_core::allocsim::{build_stream, run_policy, Oracle, Policy, Rule, Scorer, SimConfig};
use matchrep_core::baselines::{fit_cluster_predictor, ClusterPredictorSpec, PredictorKind};
use matchrep_core::datamodel::{normalize_fit_transform, split, Dataset, DEFAULT_TRAIN_FRACTION};
use matchrep_core::matchrep::gradcheck::{
    check_autoencoder, check_batch_objective, check_dec, check_factual, check_rep,
};
use matchrep_core::matchrep::{
    dec_loss, rep_loss, soft_assign, target_distribution, train_joint, BatchData, DonorTypeMap,
    KlDirection, LabelSource, MatchEncoder, MatchRepModel, MultiHeadPredictor, TrainConfig, TrainState,
};
use matchrep_core::metrics::{adjusted_rand_index, evaluate};
use matchrep_core::numkit::{
    gmm_em_fit, kl_gaussian_diag, kmeans_fit, Activation, DiagGaussian, GradCheckReport, Matrix, RngStream,
};
use matchrep_core::synthgen::{sample_dataset, SyntheticConfig};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const GRAD_TOL: f64 = 1e-4;
const KL_TOL: f64 = 1e-2;
const MC_SAMPLES: usize = 1_000_000;
const BATCH: usize = 16;
/// Clusters smaller than this are left out of the held-out KL.
const HELD_OUT_MIN_COUNT: usize = 2;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn random(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = RngStream::new(1);
    let mut kl_err: f64 = 0.0;
    for pair in 0..20 {
        let dim = 1 + pair % 3;
        let draw = |rng: &mut RngStream| {
            let mean = (0..dim).map(|_| rng.normal()).collect();
            let var = (0..dim).map(|_| rng.uniform_range(0.5, 2.0)).collect();
            DiagGaussian::new(mean, var).unwrap()
        };
        let (p, q) = (draw(&mut rng), draw(&mut rng));
        let mut x = vec![0.0; dim];
        let mut acc = 0.0;
        for _ in 0..MC_SAMPLES {
            for (j, xj) in x.iter_mut().enumerate() {
                *xj = rng.gaussian(p.mean[j], p.var[j].sqrt());
            }
            acc += p.log_density(&x) - q.log_density(&x);
        }
        kl_err = kl_err.max((kl_gaussian_diag(&p, &q).unwrap() - acc / MC_SAMPLES as f64).abs());
    }

    let mut reports: Vec<(String, GradCheckReport)> = Vec::new();
    let cfg = TrainConfig {
        activation: Activation::Tanh,
        hidden: vec![6],
        embed_dim: 3,
        rep_dim: 4,
        min_cluster_count: 3,
        ..Default::default()
    };
    let root = RngStream::new(2);
    let donors = random(BATCH, 2, &mut rng);
    let recipients = random(BATCH, 2, &mut rng);
    let y: Vec<f64> = (0..BATCH).map(|_| rng.normal()).collect();
    let labels: Vec<usize> = (0..BATCH).map(|i| i % 3).collect();
    let mut map = DonorTypeMap::new(2, &cfg, &root);
    reports.push(("autoencoder".into(), check_autoencoder(&map, &donors, GRAD_TOL).unwrap()));
    map.centers = random(3, 3, &mut rng);
    let emb = random(BATCH, 3, &mut rng);
    for e in [-0.5, -1.0] {
        let p = target_distribution(&soft_assign(&emb, &map.centers, e).unwrap()).unwrap();
        reports.push((format!("dec({e})"), check_dec(&emb, &map.centers, &p, e, GRAD_TOL).unwrap()));
    }
    let z = random(BATCH, 4, &mut rng);
    for dir in [KlDirection::ConditionalToMarginal, KlDirection::MarginalToConditional] {
        reports.push((format!("rep({dir:?})"), check_rep(&z, &labels, 3, 3, dir, GRAD_TOL).unwrap()));
    }
    let heads = random(BATCH, 3, &mut rng);
    reports.push(("factual".into(), check_factual(&heads, &y, &labels, GRAD_TOL).unwrap()));
    let target = target_distribution(&map.soft_assign(&donors).unwrap()).unwrap();
    for (alpha, beta) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
        let cfg = TrainConfig { alpha, beta, ..cfg.clone() };
        let state = TrainState {
            donor_map: Some(map.clone()),
            encoder: MatchEncoder::new(2, &cfg, &root),
            predictor: MultiHeadPredictor::new(&cfg, &root),
        };
        let batch = BatchData {
            recipients: &recipients,
            outcomes: &y,
            labels: LabelSource::Joint { donors: &donors, target: &target },
        };
        reports.push((
            format!("combined({alpha},{beta})"),
            check_batch_objective(&state, &batch, &cfg, GRAD_TOL).unwrap(),
        ));
    }
    let failed: Vec<&str> = reports.iter().filter(|(_, r)| !r.passed()).map(|(n, _)| n.as_str()).collect();
    let worst = reports.iter().map(|(_, r)| r.max_relative_error()).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    verdict(
        kl_err < KL_TOL && failed.is_empty() && elapsed < Duration::from_secs(60),
        format!(
            "max |KL - MC| {kl_err:.2e}, {} gradient checks, worst relative error {worst:.2e}, failed {failed:?}, {:.1}s",
            reports.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let mut rng = RngStream::new(3);
    let (mut row_err, mut min_dec, mut eq_dec): (f64, f64, f64) = (0.0, f64::INFINITY, 0.0);
    let (mut km_up, mut em_down) = (0usize, 0usize);
    let cases = 200;
    for case in 0..cases {
        let n = 5 + rng.below(60);
        let k = 2 + rng.below(4);
        let spread = rng.uniform_range(0.05, 20.0);
        let x = random(n, 2, &mut rng).map(|v| v * spread);
        let c = random(k, 2, &mut rng).map(|v| v * spread);
        let t = soft_assign(&x, &c, if case % 2 == 0 { -0.5 } else { -1.0 }).unwrap();
        for row in t.row_iter() {
            row_err = row_err.max((row.iter().sum::<f64>() - 1.0).abs());
        }
        let p = target_distribution(&t).unwrap();
        min_dec = min_dec.min(dec_loss(&t, &p).unwrap());
        eq_dec = eq_dec.max(dec_loss(&t, &t).unwrap().abs());

        let blobs = Matrix::from_rows(
            &(0..n.max(3 * k))
                .map(|i| vec![(i % k) as f64 * 3.0 + rng.normal(), rng.normal()])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let km = kmeans_fit(&blobs, k, &mut rng).unwrap();
        km_up += km.objective_trace.windows(2).filter(|w| w[1] > w[0] * (1.0 + 1e-12)).count();
        let em = gmm_em_fit(&blobs, k, &mut rng).unwrap();
        em_down += em
            .log_likelihood_trace
            .windows(2)
            .filter(|w| w[1] < w[0] - 1e-8 * w[0].abs().max(1.0))
            .count();
    }
    let elapsed = start.elapsed();
    verdict(
        row_err <= 1e-9 && min_dec >= 0.0 && eq_dec <= 1e-12 && km_up == 0 && em_down == 0
            && elapsed < Duration::from_secs(60),
        format!(
            "{cases} cases: max |row sum - 1| {row_err:.1e}, min L_DEC {min_dec:.2e}, L_DEC(T,T) {eq_dec:.1e}, k-means increases {km_up}, EM decreases {em_down}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

struct SeedRun {
    norm: Dataset,
    model: MatchRepModel,
    ari: f64,
    kl: f64,
    kl_ablation: f64,
    aodt: f64,
    eps_f: f64,
    baseline_eps_f: Vec<(String, f64)>,
    train_time: Duration,
}

fn held_out_kl(model: &MatchRepModel, validation: &Dataset) -> f64 {
    let (r, o) = model.model_features(validation).unwrap();
    let (labels, _) = model.assign_scaled(&o).unwrap();
    let z = model.represent(&r).unwrap();
    rep_loss(&z, &labels, model.k(), HELD_OUT_MIN_COUNT, KlDirection::default()).unwrap().value
}

fn run_seed(seed: u64) -> SeedRun {
    let ds = sample_dataset(&SyntheticConfig { seed, ..SyntheticConfig::biased_preset() }).unwrap();
    let s = split(ds.len(), DEFAULT_TRAIN_FRACTION, seed).unwrap();
    let norm = normalize_fit_transform(&ds, &s).unwrap();
    let train = norm.subset(&s.train);
    let validation = norm.subset(&s.validation);
    let cfg = TrainConfig { seed, ..Default::default() };

    let start = Instant::now();
    let (model, _) = train_joint(&train, &cfg).unwrap();
    let train_time = start.elapsed();
    let (ablation, _) = train_joint(&train, &TrainConfig { beta: 0.0, ..cfg.clone() }).unwrap();

    let (_, o) = model.model_features(&train).unwrap();
    let (labels, _) = model.assign_scaled(&o).unwrap();
    let coarse: Vec<usize> = train.true_donor_types().unwrap().iter().map(|&k| usize::from(k > 0)).collect();
    let report = evaluate(&model, "matchrep", &train, &validation).unwrap();

    let baseline_eps_f = ClusterPredictorSpec::all(&cfg)
        .into_iter()
        .filter(|spec| spec.predictor == PredictorKind::MultiheadNn)
        .map(|spec| {
            let (b, _) = fit_cluster_predictor(&train, &spec).unwrap();
            (spec.name(), evaluate(&b, &spec.name(), &train, &validation).unwrap().eps_f)
        })
        .collect();

    SeedRun {
        ari: adjusted_rand_index(&coarse, &labels).unwrap(),
        kl: held_out_kl(&model, &validation),
        kl_ablation: held_out_kl(&ablation, &validation),
        aodt: report.aodt.unwrap(),
        eps_f: report.eps_f,
        baseline_eps_f,
        train_time,
        norm,
        model,
    }
}

fn criterion_3(runs: &[SeedRun]) -> Verdict {
    let ari: Vec<f64> = runs.iter().map(|r| r.ari).collect();
    let slowest = runs.iter().map(|r| r.train_time).max().unwrap();
    verdict(
        mean(&ari) >= 0.9 && slowest < Duration::from_secs(300),
        format!("mean ARI {:.3} per seed {} (need >= 0.9), slowest fit {:.1}s", mean(&ari), fmt(&ari), slowest.as_secs_f64()),
    )
}

fn criterion_4(runs: &[SeedRun]) -> Verdict {
    let kl: Vec<f64> = runs.iter().map(|r| r.kl).collect();
    let ab: Vec<f64> = runs.iter().map(|r| r.kl_ablation).collect();
    verdict(
        mean(&kl) <= 0.5 * mean(&ab),
        format!("held-out KL {:.4} vs beta=0 {:.4} (need ratio <= 0.5, got {:.3}); per seed {} vs {}",
            mean(&kl), mean(&ab), mean(&kl) / mean(&ab), fmt(&kl), fmt(&ab)),
    )
}

fn criterion_5(runs: &[SeedRun]) -> Verdict {
    let a: Vec<f64> = runs.iter().map(|r| r.aodt).collect();
    verdict(mean(&a) >= 0.9, format!("mean AoDT {:.3} per seed {} (need >= 0.9)", mean(&a), fmt(&a)))
}

fn criterion_6(run: &SeedRun) -> Verdict {
    let start = Instant::now();
    let model_scorer = Scorer::from_model("matchrep", &run.model, &run.norm).unwrap();
    let oracle_scorer = Scorer::oracle(&run.norm).unwrap();
    let oracle = Oracle::from_dataset(&run.norm).unwrap();
    let policies = [
        (Policy::Real, None),
        (Policy::Plain(Rule::Fcfs), None),
        (Policy::Plain(Rule::Bf), Some(&oracle_scorer)),
        (Policy::Guided(Rule::Uf), Some(&model_scorer)),
    ];
    let mut sums = [[0.0; 4]; 4];
    for seed in SEEDS {
        let cfg = SimConfig { seed, ..Default::default() };
        let stream = build_stream(&run.norm, cfg.window, seed).unwrap();
        for (i, (policy, scorer)) in policies.iter().enumerate() {
            let r = run_policy(&stream, *policy, *scorer, &oracle, &cfg).unwrap();
            let row = [
                r.avg_benefit.unwrap_or(f64::NAN),
                r.avg_survival.unwrap_or(f64::NAN),
                r.death_rate,
                r.flipped_ratio.unwrap_or(f64::NAN),
            ];
            for (s, v) in sums[i].iter_mut().zip(row) {
                *s += v / SEEDS.len() as f64;
            }
        }
    }
    let [real, fcfs, bf, mr] = sums;
    let parts = [
        (bf[0] > fcfs[0], format!("(a) BF benefit {:.1} vs FCFS {:.1}", bf[0], fcfs[0])),
        (mr[1] >= 1.05 * real[1], format!("(b) matching-rep survival {:.1} vs 1.05 x Real {:.1}", mr[1], 1.05 * real[1])),
        (mr[3] >= 0.3, format!("(c) flipped ratio {:.3} vs 0.3", mr[3])),
        (mr[2] <= real[2], format!("(d) death rate {:.3} vs Real {:.3}", mr[2], real[2])),
    ];
    let elapsed = start.elapsed();
    let detail: Vec<String> = parts
        .iter()
        .map(|(ok, d)| format!("{d} {}", if *ok { "ok" } else { "FAIL" }))
        .collect();
    verdict(
        parts.iter().all(|(ok, _)| *ok) && elapsed < Duration::from_secs(600),
        format!("{}; {:.1}s", detail.join("; "), elapsed.as_secs_f64()),
    )
}

fn criterion_7(runs: &[SeedRun]) -> Verdict {
    let ours: Vec<f64> = runs.iter().map(|r| r.eps_f).collect();
    let names: Vec<&String> = runs[0].baseline_eps_f.iter().map(|(n, _)| n).collect();
    let (best_name, best) = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), mean(&runs.iter().map(|r| r.baseline_eps_f[i].1).collect::<Vec<_>>())))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    verdict(
        mean(&ours) <= 1.05 * best,
        format!("matchrep eps_F {:.1} per seed {} vs best baseline {best_name} {best:.1} (need <= {:.1})",
            mean(&ours), fmt(&ours), 1.05 * best),
    )
}

fn run_cli(dir: &Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_matchrep"))
        .current_dir(dir)
        .args(args)
        .status()
        .unwrap();
    assert!(status.success(), "matchrep {args:?} failed");
}

fn files_under(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_8() -> Verdict {
    let runs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for dir in &runs {
        let d = dir.path();
        std::fs::write(
            d.join("train.json"),
            r#"{"train": {"pretrain_epochs": 5, "joint_epochs": 10}, "pair": {"epochs": 10}, "baselines": ["kmeans/nn", "reg-nn", "lasso"]}"#,
        )
        .unwrap();
        run_cli(d, &["gen", "--n", "800", "--seed", "11", "--out", "gen"]);
        run_cli(d, &["train", "--config", "train.json", "--seed", "11", "--data", "gen/dataset.csv", "--out", "train"]);
        run_cli(d, &[
            "simulate", "--seed", "11", "--data", "gen/dataset.csv", "--model", "train/matchrep.json",
            "--model", "train/kmeans-nn.json", "--out", "sim",
        ]);
    }
    let mut detail = Vec::new();
    let mut pass = true;
    for stage in ["gen", "train", "sim"] {
        let a = files_under(&runs[0].path().join(stage));
        let b = files_under(&runs[1].path().join(stage));
        let same = !a.is_empty() && a == b;
        pass &= same;
        detail.push(format!("{stage}: {} files {}", a.len(), if same { "identical" } else { "DIFFER" }));
    }
    verdict(pass, detail.join(", "))
}

fn report(n: usize, title: &str, v: &Verdict) {
    println!("criterion {n} [{title}]: {} : {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
}

fn main() {
    // `cargo test -- --list` and filtered runs should not start the suite.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    if args.iter().any(|a| !a.starts_with('-') && !"acceptance".contains(a.as_str())) {
        return;
    }
    let start = Instant::now();
    let mut verdicts: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut emit = |n: usize, title: &'static str, v: Verdict| {
        report(n, title, &v);
        verdicts.push((n, title, v));
    };
    emit(1, "numerical core", criterion_1());
    emit(2, "DEC invariants", criterion_2());
    let runs: Vec<SeedRun> = SEEDS.iter().map(|&s| run_seed(s)).collect();
    emit(3, "cluster recovery", criterion_3(&runs));
    emit(4, "match invariance", criterion_4(&runs));
    emit(5, "counterfactual accuracy", criterion_5(&runs));
    emit(6, "allocation policies", criterion_6(&runs[0]));
    emit(7, "baseline ordering", criterion_7(&runs));
    emit(8, "determinism", criterion_8());
    let passed = verdicts.iter().filter(|(_, _, v)| v.pass).count();
    println!("acceptance: {passed}/{} criteria pass in {:.0}s", verdicts.len(), start.elapsed().as_secs_f64());
    let strict = std::env::var("MATCHREP_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && passed < verdicts.len() {
        std::process::exit(1);
    }
}
