//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run a subset with `cargo test --test acceptance -- 3 8`.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sarcasm_gat::cli::RunConfig;
use sarcasm_gat::corpus::{generate_synthetic, Corpus, HistoryPost, SyntheticConfig, User};
use sarcasm_gat::embed::{train_user2vec, TweetSource, User2VecConfig};
use sarcasm_gat::gat::{stack_forward, GatStack, GatStackConfig, Mode};
use sarcasm_gat::graph::{build_graph, homophily, BuildOptions, EdgeIndex, EdgeType, GraphVariant};
use sarcasm_gat::model::{forward, predict, Batch, GraphContext, ModelConfig, ModelKind, ModelParams, Task};
use sarcasm_gat::tensor::{AdamState, Matrix, Parameters, Tape};
use sarcasm_gat::train::{run_suite, Inputs, RunReport, TrainConfig};

use common::{dense_stack, gradient_check, hops, random_graph, random_matrix, sharpen_attention, TinySetup};

const GRAD_REL_TOL: f64 = 1e-3;
const ATTENTION_SUM_TOL: f64 = 1e-6;
const ORACLE_TOL: f64 = 1e-10;
const EQUIVARIANCE_TOL: f64 = 1e-10;
const OVERFIT_ACCURACY: f64 = 0.95;
const FULL_MINUS_TEXT: f64 = 5.0;
const CUE_MARGIN: f64 = 5.0;
const ABLATION_BAND: (f64, f64) = (0.0, 6.0);
const PLUS_CUE_FLOOR: f64 = 93.0;
const HOMOPHILY_TARGET: f64 = 0.32;
const HOMOPHILY_RANGE: (f64, f64) = (0.27, 0.37);
const USER2VEC_GAP: f64 = 0.1;
const USER2VEC_LOSS_SLACK: f64 = 1.01;

const SUITE_CONFIG: &str = include_str!("../../../configs/synthetic_suite.json");
const DEMO_CONFIG: &str = include_str!("../../../configs/demo.json");

struct Line {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
    limit: Option<Duration>,
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

fn gat_config(d_in: usize, d_hidden: usize) -> GatStackConfig {
    GatStackConfig {
        n_layers: 3,
        heads: 4,
        d_in,
        d_hidden,
        dropout: 0.0,
        ..Default::default()
    }
}

fn random_stack(rng: &mut ChaCha8Rng, d_in: usize, d_hidden: usize) -> GatStack {
    let mut stack = GatStack::new(gat_config(d_in, d_hidden), rng).unwrap();
    sharpen_attention(&mut stack, rng, 2.0);
    stack
}

/// Criterion 1: every parameter of the full model on a ten-node graph.
fn gradients() -> (bool, String) {
    let setup = TinySetup::new(4, 7);
    let cfg = ModelConfig {
        kind: ModelKind::FullGat,
        gat: GatStackConfig {
            dropout: 0.4,
            ..gat_config(4, 3)
        },
        head_hidden: 5,
        ..Default::default()
    };
    let nodes = build_graph(&setup.corpus, GraphVariant::NoCue, &BuildOptions::default()).unwrap().num_nodes();
    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    for mode in [Mode::Eval, Mode::Train { seed: 5 }] {
        let (err, at, n) = gradient_check(&setup, cfg.clone(), GraphVariant::NoCue, mode, 3);
        checked += n;
        if err > worst.0 {
            worst = (err, at);
        }
    }
    (
        nodes <= 12 && worst.0 < GRAD_REL_TOL,
        format!("{nodes} nodes, {checked} entries, worst rel. err {:.2e} at {}", worst.0, worst.1),
    )
}

fn sums_by_dst(alpha: &Matrix, edges: &EdgeIndex) -> Vec<f64> {
    let mut s = vec![0.0; edges.num_nodes];
    for (e, &d) in edges.dst.iter().enumerate() {
        s[d] += alpha.get(e, 0);
    }
    s
}

/// Criterion 2.
fn normalization() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=40);
        let (edges, _) = random_graph(n, rng.random_range(0.0..0.5), &mut rng);
        let stack = random_stack(&mut rng, 5, 4);
        let x = random_matrix(n, 5, 1.0, &mut rng);
        let out = stack_forward(&stack, &x, &edges, Mode::Eval).unwrap();
        for heads in &out.attention {
            for alpha in heads {
                for s in sums_by_dst(alpha, &edges) {
                    worst = worst.max((s - 1.0).abs());
                }
            }
        }
    }
    (worst <= ATTENTION_SUM_TOL, format!("max |sum - 1| = {worst:.2e} over 100 graphs"))
}

/// Criterion 3.
fn oracle() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_h, mut worst_a) = (0.0f64, 0.0f64);
    let (mut nonzero, mut total) = (0usize, 0usize);
    for _ in 0..50 {
        let n = rng.random_range(1..=20);
        let (edges, _) = random_graph(n, rng.random_range(0.0..0.6), &mut rng);
        let stack = random_stack(&mut rng, 6, 5);
        let x = random_matrix(n, 6, 1.0, &mut rng);
        let fast = stack_forward(&stack, &x, &edges, Mode::Eval).unwrap();
        let (slow, dense_alpha) = dense_stack(&stack, &x, &edges);
        worst_h = worst_h.max(fast.output.max_abs_diff(&slow));
        nonzero += slow.as_slice().iter().filter(|v| **v != 0.0).count();
        total += slow.len();
        for (l, heads) in fast.attention.iter().enumerate() {
            for (k, alpha) in heads.iter().enumerate() {
                for (e, (&s, &d)) in edges.src.iter().zip(edges.dst.iter()).enumerate() {
                    worst_a = worst_a.max((alpha.get(e, 0) - dense_alpha[l][k].get(d, s)).abs());
                }
            }
        }
    }
    (
        worst_h <= ORACLE_TOL && worst_a <= ORACLE_TOL && nonzero > 0,
        format!(
            "max output diff {worst_h:.2e}, max attention diff {worst_a:.2e} over 50 graphs ({nonzero}/{total} outputs nonzero)"
        ),
    )
}

/// Criterion 4.
fn equivariance_and_locality() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut local_ok = true;
    let mut far_checks = 0;
    for _ in 0..30 {
        let n = rng.random_range(2..=25);
        let (edges, pairs) = random_graph(n, rng.random_range(0.05..0.3), &mut rng);
        let stack = random_stack(&mut rng, 4, 3);
        let x = random_matrix(n, 4, 1.0, &mut rng);
        let base = stack_forward(&stack, &x, &edges, Mode::Eval).unwrap().output;

        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let moved: Vec<(usize, usize)> = pairs.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let pedges = sarcasm_gat::gat::edge_index_from_pairs(n, &moved);
        let mut px = Matrix::zeros(n, 4);
        for v in 0..n {
            px.row_mut(perm[v]).copy_from_slice(x.row(v));
        }
        let pout = stack_forward(&stack, &px, &pedges, Mode::Eval).unwrap().output;
        for v in 0..n {
            for (a, b) in base.row(v).iter().zip(pout.row(perm[v])) {
                worst = worst.max((a - b).abs());
            }
        }

        let target = rng.random_range(0..n);
        let dist = hops(n, &pairs, target);
        let far: Vec<usize> = (0..n).filter(|&u| dist[u] > stack.layers.len()).collect();
        if far.is_empty() {
            continue;
        }
        let mut bumped = x.clone();
        for &u in &far {
            for v in bumped.row_mut(u) {
                *v += rng.random_range(-5.0..5.0);
            }
        }
        let out = stack_forward(&stack, &bumped, &edges, Mode::Eval).unwrap().output;
        far_checks += 1;
        local_ok &= out.row(target) == base.row(target);
    }
    (
        worst <= EQUIVARIANCE_TOL && local_ok && far_checks > 0,
        format!("max permutation diff {worst:.2e}; far-node perturbations exact on {far_checks} graphs: {local_ok}"),
    )
}

/// Criterion 5: default dimensions, learning rate 1e-4, dropout 0.4.
fn overfit() -> (bool, String) {
    let corpus = generate_synthetic(&SyntheticConfig {
        n_users: 20,
        n_conversations: 20,
        history_length: [50, 55],
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let inputs = Inputs::prepare(corpus, &TweetSource::Fallback, &User2VecConfig::default(), &BuildOptions::default()).unwrap();
    let graph = build_graph(&inputs.corpus, GraphVariant::NoCue, &BuildOptions::default()).unwrap();
    let rows = inputs.corpus.label_table();
    let ids: Vec<String> = rows.iter().map(|r| r.tweet_id.clone()).collect();
    let labels: Vec<usize> = rows.iter().map(|r| r.label.class_index()).collect();
    let train = TrainConfig::default();
    let mut model = ModelConfig::default();
    model.gat.dropout = train.dropout;
    let data = inputs.data(Some(&graph));
    let ctx = GraphContext::new(ModelKind::FullGat, &data).unwrap();
    let batch = Batch::new(ModelKind::FullGat, &data, &ids).unwrap();
    let mut params = ModelParams::new(model, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let mut adam = AdamState::new(train.learning_rate, params.named_params().into_iter().map(|(_, m)| m));
    let accuracy = |p: &ModelParams| {
        let probs = predict(p, &ctx, &batch).unwrap();
        let hits = (0..probs.rows())
            .filter(|&r| usize::from(probs.get(r, 1) > probs.get(r, 0)) == labels[r])
            .count();
        hits as f64 / labels.len() as f64
    };
    let mut reached = None;
    let mut acc = accuracy(&params);
    for epoch in 0..train.max_epochs {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, true);
        let out = forward(&mut tape, &bound, ModelKind::FullGat, &ctx, &batch, Mode::Train { seed: epoch as u64 }).unwrap();
        let l = tape.cross_entropy(out.logits, &labels).unwrap();
        let grads = tape.backward(l).unwrap();
        let g: Vec<Matrix> = bound.vars().iter().map(|&v| grads.get_or_zeros(v)).collect();
        adam.step(&mut params.params_mut(), &g).unwrap();
        acc = accuracy(&params);
        if acc >= OVERFIT_ACCURACY {
            reached = Some(epoch + 1);
            break;
        }
    }
    (
        ids.len() == 20 && reached.is_some(),
        format!(
            "{} tweets, {} parameters, train accuracy {acc:.2} after {} epochs",
            ids.len(),
            params.param_count(),
            reached.unwrap_or(train.max_epochs)
        ),
    )
}

fn suite_config() -> RunConfig {
    let doc: serde_json::Value = serde_json::from_str(SUITE_CONFIG).unwrap();
    let cfg: RunConfig = serde_json::from_value(doc).unwrap();
    cfg.validate().unwrap();
    cfg
}

fn run_config(cfg: &RunConfig) -> RunReport {
    let corpus = generate_synthetic(&cfg.synthetic).unwrap();
    let inputs = Inputs::prepare(corpus, &TweetSource::Fallback, &cfg.user2vec, &cfg.graph).unwrap();
    run_suite(
        &inputs,
        &cfg.suite_entries().unwrap(),
        &cfg.model,
        &cfg.train,
        &cfg.graph,
        serde_json::to_value(cfg).unwrap(),
    )
    .unwrap()
}

fn f1(report: &RunReport, label: &str) -> f64 {
    report.row(label).map(|r| 100.0 * r.f1.mean).unwrap_or(f64::NAN)
}

/// Criterion 6.
fn ordering(report: &RunReport) -> (bool, String) {
    let full = f1(report, "FullGat/NoCue");
    let user = f1(report, "UserOnlyGat");
    let u2v = f1(report, "TextPlusUser2Vec");
    let text = f1(report, "TextOnly");
    let cue = f1(report, "FullGat/PlusCue");
    let pass = full > user && user > u2v && u2v > text && full - text >= FULL_MINUS_TEXT && cue >= full + CUE_MARGIN;
    (
        pass,
        format!("F1 FullGat {full:.2} > UserOnlyGat {user:.2} > TextPlusUser2Vec {u2v:.2} > TextOnly {text:.2}; PlusCue {cue:.2}"),
    )
}

/// Criterion 7.
fn ablation(report: &RunReport) -> (bool, String) {
    let full = f1(report, "FullGat/NoCue");
    let drops: Vec<(String, f64)> = ["FullGat/NoElicit", "FullGat/NoOblivious"]
        .iter()
        .map(|l| (l.to_string(), full - f1(report, l)))
        .collect();
    let pass = drops.iter().all(|(_, d)| *d >= ABLATION_BAND.0 && *d <= ABLATION_BAND.1);
    let text: Vec<String> = drops.iter().map(|(l, d)| format!("{l} drop {d:.2}")).collect();
    (pass, text.join(", "))
}

/// Not a numbered criterion: authorship edges into tweets outweigh
/// tweet-tweet edges from elicit roots.
fn attention_direction(report: &RunReport) -> (bool, String) {
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for g in report.attention.iter().filter(|g| g.model == "FullGat/NoCue") {
        let key = if g.edge_type == EdgeType::Authorship && g.dst_role != "user" {
            "authorship"
        } else if g.edge_type == EdgeType::TweetTweet && g.src_role == "elicit" {
            "elicit"
        } else {
            continue;
        };
        let slot = sums.entry(key).or_default();
        slot.0 += g.mean_alpha * g.weights as f64;
        slot.1 += g.weights;
    }
    let mean = |k: &str| sums.get(k).map_or(f64::NAN, |(s, n)| s / *n as f64);
    let (a, e) = (mean("authorship"), mean("elicit"));
    (a > e, format!("mean attention authorship->tweet {a:.3}, elicit->tweet {e:.3}"))
}

/// Criterion 8.
fn calibration() -> (bool, String) {
    let cfg = SyntheticConfig {
        n_users: 1000,
        n_conversations: 2000,
        target_homophily: HOMOPHILY_TARGET,
        seed: 8,
        ..Default::default()
    };
    let corpus = generate_synthetic(&cfg).unwrap();
    let g = build_graph(&corpus, GraphVariant::UserOnly, &BuildOptions::default()).unwrap();
    let h = homophily(&g, &corpus.label_table()).unwrap();
    (
        (HOMOPHILY_RANGE.0..=HOMOPHILY_RANGE.1).contains(&h),
        format!("target {HOMOPHILY_TARGET}, measured {h:.3}"),
    )
}

fn pool_corpus(n_users: usize, posts: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = (0..n_users)
        .map(|i| {
            let pool = if i % 2 == 0 { "apool" } else { "bpool" };
            let history = (0..posts)
                .map(|p| HistoryPost {
                    text: (0..6)
                        .map(|_| format!("{pool}{}", rng.random_range(0..60)))
                        .collect::<Vec<_>>()
                        .join(" "),
                    timestamp: p as i64,
                })
                .collect();
            User {
                id: format!("u{i}"),
                history,
                interactions: vec![],
            }
        })
        .collect();
    Corpus::new(vec![], users).unwrap()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Criterion 9, plus the epoch-loss monotonicity invariant.
fn user2vec_separation() -> (bool, String) {
    let corpus = pool_corpus(200, 50, 11);
    let cfg = User2VecConfig {
        seed: 4,
        ..Default::default()
    };
    let out = train_user2vec(&corpus, &cfg).unwrap();
    let m = out.embeddings.values();
    let (mut within, mut nw, mut cross, mut nc) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..m.rows() {
        for j in i + 1..m.rows() {
            let c = cosine(m.row(i), m.row(j));
            if i % 2 == j % 2 {
                within += c;
                nw += 1;
            } else {
                cross += c;
                nc += 1;
            }
        }
    }
    let gap = within / nw as f64 - cross / nc as f64;
    let monotone = out.manifest.epoch_losses.windows(2).all(|w| w[1] <= w[0] * USER2VEC_LOSS_SLACK);
    (
        gap >= USER2VEC_GAP && monotone && cfg.epochs == 12 && cfg.learning_rate == 1e-4,
        format!("within - cross cosine {gap:.3} after {} epochs at lr {}; epoch losses non-increasing: {monotone}", cfg.epochs, cfg.learning_rate),
    )
}

/// Criterion 10: two CLI runs of a multi-seed suite.
fn reproducibility() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("demo.json");
    std::fs::write(&config, DEMO_CONFIG).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_sarcasm-gat"))
            .args(["ablate", "--config"])
            .arg(&config)
            .args(["--set", r#"suite=["FullGat/NoCue","TextPlusUser2Vec"]"#, "--set", "train.seeds=[1,2]"])
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out.join("report.json")).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    let report: RunReport = serde_json::from_slice(&a).unwrap();
    let seeds: usize = report.rows.iter().map(|r| r.seeds.len()).sum();
    (
        a == b && seeds == 4,
        format!("report.json {} bytes, identical: {}, {} rows x 2 seeds", a.len(), a == b, report.rows.len()),
    )
}

/// Criterion 11.
fn perception() -> (bool, String) {
    let mut cfg = suite_config();
    cfg.synthetic.intended_prob = 0.7;
    cfg.train.task = Task::Perception;
    cfg.train.seeds = (1..=5).collect();
    cfg.suite = vec!["FullGat/NoCue".into()];
    let report = run_config(&cfg);
    let c = &report.rows[0].confusion;
    let (p_as_i, i_as_p) = (c[1][0], c[0][1]);
    let intended_share = (c[0][0] + c[0][1]) as f64 / c.iter().flatten().sum::<usize>() as f64;
    (
        p_as_i > i_as_p,
        format!("intended share {intended_share:.2}; perceived->intended {p_as_i}, intended->perceived {i_as_p}"),
    )
}

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |id: usize| wanted.is_empty() || wanted.contains(&id);
    let mut lines = Vec::new();
    let mut push = |id, name, limit, ((pass, detail), elapsed): ((bool, String), Duration)| {
        let line = Line {
            id,
            name,
            pass,
            detail,
            elapsed,
            limit,
        };
        report_line(&line);
        lines.push(line);
    };

    if want(1) {
        push(1, "gradient check", secs(60), timed(gradients));
    }
    if want(2) {
        push(2, "attention normalization", secs(10), timed(normalization));
    }
    if want(3) {
        push(3, "dense oracle equivalence", secs(30), timed(oracle));
    }
    if want(4) {
        push(4, "permutation equivariance and locality", secs(30), timed(equivariance_and_locality));
    }
    if want(5) {
        push(5, "overfitting sanity", secs(120), timed(overfit));
    }
    if want(6) || want(7) {
        let (report, elapsed) = timed(|| run_config(&suite_config()));
        let summary: Vec<String> = report
            .rows
            .iter()
            .map(|r| format!("{} {:.2}±{:.2}", r.label, 100.0 * r.f1.mean, 100.0 * r.f1.std))
            .collect();
        eprintln!("suite F1: {}", summary.join(", "));
        push(6, "ordering on the calibrated suite", secs(1200), (ordering(&report), elapsed));
        push(7, "ablation drops", None, (ablation(&report), Duration::ZERO));
        push(0, "attention on authorship vs elicit edges", None, (attention_direction(&report), Duration::ZERO));
        let cue = f1(&report, "FullGat/PlusCue");
        let floor = (cue >= PLUS_CUE_FLOOR, format!("PlusCue F1 {cue:.2}, floor {PLUS_CUE_FLOOR}"));
        push(0, "cue leakage ceiling", None, (floor, Duration::ZERO));
    }
    if want(8) {
        push(8, "homophily calibration", secs(60), timed(calibration));
    }
    if want(9) {
        push(9, "user2vec separation", secs(300), timed(user2vec_separation));
    }
    if want(10) {
        push(10, "report reproducibility", None, timed(reproducibility));
    }
    if want(11) {
        push(11, "perception error mode", None, timed(perception));
    }

    let failed = lines.iter().filter(|l| !ok(l)).count();
    eprintln!("acceptance: {} passed, {failed} failed", lines.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn ok(line: &Line) -> bool {
    line.pass && line.limit.is_none_or(|l| line.elapsed <= l)
}

fn report_line(line: &Line) {
    let tag = if ok(line) { "PASS" } else { "FAIL" };
    let id = if line.id == 0 { "extra".to_string() } else { format!("criterion {:>2}", line.id) };
    let limit = line.limit.map(|l| format!(" (limit {}s)", l.as_secs())).unwrap_or_default();
    eprintln!(
        "{tag} {id}: {} - {} [{:.1}s{limit}]",
        line.name,
        line.detail,
        line.elapsed.as_secs_f64()
    );
}
