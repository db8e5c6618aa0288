//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs as a plain binary so the report is always printed. The process
//! fails if any criterion fails for a reason not listed in
//! `EXPECTED_FAILURES`.

use std::time::{Duration, Instant};

use cofirec::corpus::{synth_generate, write_interactions, write_items, SynthConfig};
use cofirec::eval::{build_tokenizer, ndcg_at_k, recall_at_k, run_generator_stage, variant_config, ExperimentConfig, MetricReport, PreparedData, Variant};
use cofirec::generator::{beam_search, rank_loss_with_grad, train_generator, GeneratorConfig, GeneratorModel, ModelScorer};
use cofirec::numerics::{finite_diff_check, Params, Tensor2};
use cofirec::theory::{e_hier, e_indep, psi, psi_is_monotone, simulate, verify_proposition, DecodeMode, TheoryConfig, TheoryGrid};
use cofirec::tokenizer::{collision_rate, quantize, tokenizer_loss, utilization, LevelSource, TokenizerConfig, TokenizerModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria known not to hold as literally stated, with the reason.
const EXPECTED_FAILURES: &[(usize, &str)] = &[(
    1,
    "the grid point p=0.2 with V=4 has p < 1/V, where the closed forms order the other way",
)];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(t: Duration, budget_s: u64) -> bool {
    t.as_secs_f64() < budget_s as f64
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let (mut reversed, mut mc_bad, mut points) = (Vec::new(), Vec::new(), 0);
    for p in [0.2, 0.5, 0.9] {
        for v in [4usize, 16, 256] {
            for k in [2usize, 4, 8] {
                points += 1;
                let (h, i) = (e_hier(p, k).unwrap(), e_indep(p, v, k).unwrap());
                if h >= i {
                    reversed.push(format!("(p={p},V={v},K={k}: {h:.4} vs {i:.4})"));
                }
                let cfg = TheoryConfig { p, v, k, trials: 100_000, seed: 17 };
                let hm = simulate(&cfg, DecodeMode::Hier, 4).unwrap();
                let im = simulate(&cfg, DecodeMode::Indep, 4).unwrap();
                if !hm.agrees_with(h, 4.0) || !im.agrees_with(i, 4.0) {
                    mc_bad.push(format!("(p={p},V={v},K={k})"));
                }
            }
        }
    }
    let t = start.elapsed();
    let detail = format!(
        "strict e_hier<e_indep at {}/{points} points; reversed at {}; MC within 4σ at {}/{points}; {:.1}s",
        points - reversed.len(),
        if reversed.is_empty() { "none".to_string() } else { reversed.join(" ") },
        points - mc_bad.len(),
        t.as_secs_f64()
    );
    outcome(reversed.is_empty() && mc_bad.is_empty() && within(t, 60), detail)
}

/// The part of criterion 1 inside its stated precondition p > 1/V.
fn criterion_1_in_domain() -> Outcome {
    let grid = TheoryGrid {
        p: vec![0.5, 0.9],
        trials: 100_000,
        ..TheoryGrid::default()
    };
    let r = verify_proposition(&grid).unwrap();
    let ok = r.rows.iter().all(|row| row.strict_ok && row.mc_agrees(4.0));
    outcome(ok, format!("{} points with p > 1/V all strict and within 4σ", r.rows.len()))
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    for (v, k) in [(2usize, 2usize), (2, 5), (4, 3), (16, 4), (256, 2)] {
        let p = 1.0 / v as f64;
        worst = worst.max((e_hier(p, k).unwrap() - e_indep(p, v, k).unwrap()).abs());
    }
    let (h, i) = (e_hier(0.5, 2).unwrap(), e_indep(0.5, 2, 2).unwrap());
    let ok = (h - 1.25).abs() < 1e-12 && (i - 1.25).abs() < 1e-12 && worst <= 1e-12;
    outcome(ok, format!("p=.5,V=2,K=2 → {h} / {i}; worst |Δ| at p=1/V {worst:.1e}"))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let ps: Vec<f64> = (0..20).map(|i| i as f64 * 0.05).collect();
    let k4: Vec<f64> = ps.iter().map(|&p| psi(p, 4).unwrap()).collect();
    let k1: Vec<f64> = ps.iter().map(|&p| psi(p, 1).unwrap()).collect();
    let t = start.elapsed();
    let ok = psi_is_monotone(&k4, 4) && psi_is_monotone(&k1, 1) && within(t, 1);
    outcome(ok, format!("ψ(·,4) from {:.4} to {:.4}, ψ(·,1) ≡ 1; {:.1e}s", k4[0], k4[19], t.as_secs_f64()))
}

/// Loss whose gradient equals the tokenizer's straight-through gradient
/// with assignments and stop-gradient inputs frozen at `base`.
fn tokenizer_surrogate(m: &TokenizerModel, base: &TokenizerModel, levels: &[Tensor2], assign: &[Vec<usize>]) -> f64 {
    let n = levels[0].rows() as f64;
    let sq = |mut a: Tensor2, b: &Tensor2| {
        a.add_scaled(b, -1.0);
        a.sq_norm() / n
    };
    let mut total = 0.0;
    for (k, x) in levels.iter().enumerate() {
        let h0 = base.encode(k, x).unwrap();
        let c0 = base.codebooks[k].gather_rows(&assign[k]);
        let c = m.codebooks[k].gather_rows(&assign[k]);
        let h = m.encode(k, x).unwrap();
        total += sq(m.decoder(k).apply(&c).unwrap(), x);
        total += sq(c, &h0);
        let mut st = h.clone();
        st.add_scaled(&c0, 1.0);
        st.add_scaled(&h0, -1.0);
        total += sq(base.decoder(k).apply(&st).unwrap(), x);
        total += m.mu * sq(h, &c0);
    }
    total
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut worst_tok = 0.0f64;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let cfg = TokenizerConfig {
            codebook_sizes: vec![3, 4, 5],
            code_dim: 3,
            hidden_dim: 4,
            ..TokenizerConfig::default()
        };
        let sources = [LevelSource::Semantic, LevelSource::Semantic, LevelSource::Collaborative];
        let mut m = TokenizerModel::new(&cfg, &sources, 5, Some(4), &mut rng).unwrap();
        for cb in &mut m.codebooks {
            *cb = Tensor2::randn(cb.rows(), cb.cols(), 1.0, &mut rng);
        }
        let rows = rng.gen_range(3..8);
        let levels = vec![
            Tensor2::randn(rows, 5, 1.0, &mut rng),
            Tensor2::randn(rows, 5, 1.0, &mut rng),
            Tensor2::randn(rows, 4, 1.0, &mut rng),
        ];
        let (_, grads, assign) = tokenizer_loss(&m, &levels).unwrap();
        let err = finite_diff_check(
            |p| {
                let mut q = m.clone();
                q.set_flat(p);
                tokenizer_surrogate(&q, &m, &levels, &assign)
            },
            &m.flat(),
            &grads.flat(),
            1e-6,
        );
        worst_tok = worst_tok.max(err);
    }
    let mut worst_gen = 0.0f64;
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let cfg = GeneratorConfig {
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            d_ff: 12,
            max_history: 3,
            init_std: 0.5,
            temperature: rng.gen_range(0.5..1.5),
            seed,
            ..GeneratorConfig::default()
        };
        let vocab = [3usize, 2, 4];
        let m = GeneratorModel::new(&cfg, &vocab).unwrap();
        let n_items = 3;
        let tokens: Vec<usize> = (0..n_items * 3).map(|i| rng.gen_range(0..vocab[i % 3])).collect();
        let loss_and_grad = |model: &GeneratorModel| {
            let (logits, cache) = model.forward(&tokens).unwrap();
            let mut dl = vec![Vec::new(); tokens.len()];
            let mut total = 0.0;
            for j in 1..n_items {
                let rows: Vec<usize> = (j * 3 - 1..j * 3 + 2).collect();
                let sel: Vec<Vec<f64>> = rows.iter().map(|&r| logits[r].clone()).collect();
                let (l, g) = rank_loss_with_grad(&sel, &tokens[j * 3..j * 3 + 3], model.temperature).unwrap();
                total += l;
                for (r, gr) in rows.into_iter().zip(g) {
                    dl[r] = gr;
                }
            }
            (total, cache, dl)
        };
        let (_, cache, dl) = loss_and_grad(&m);
        let grads = m.backward(&cache, &dl).unwrap().0;
        let err = finite_diff_check(
            |p| {
                let mut q = m.clone();
                q.set_flat(p);
                loss_and_grad(&q).0
            },
            &m.flat(),
            &grads.flat(),
            1e-6,
        );
        worst_gen = worst_gen.max(err);
    }
    let t = start.elapsed();
    let ok = worst_tok < 1e-4 && worst_gen < 1e-4 && within(t, 60);
    outcome(
        ok,
        format!("worst relative error tokenizer {worst_tok:.1e}, generator {worst_gen:.1e}; {:.1}s", t.as_secs_f64()),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let (n, d) = (rng.gen_range(1..40), rng.gen_range(1..9));
        let cb = Tensor2::randn(n, d, 1.0, &mut rng);
        let h: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let dists: Vec<f64> = (0..n).map(|r| cb.row(r).iter().zip(&h).map(|(a, b)| (a - b) * (a - b)).sum()).collect();
        let best = (0..n).fold(0, |b, r| if dists[r] < dists[b] { r } else { b });
        if quantize(&h, &cb).0 != best {
            mismatches += 1;
        }
    }
    // Duplicate rows: the lowest index wins, every time.
    let row = vec![0.5, -1.0];
    let cb = Tensor2::from_rows(&[vec![3.0, 3.0], row.clone(), row.clone(), row]).unwrap();
    let ties: Vec<usize> = (0..5).map(|_| quantize(&[0.4, -0.9], &cb).0).collect();
    let ok = mismatches == 0 && ties.iter().all(|&i| i == 1);
    outcome(ok, format!("{mismatches} mismatches in 10⁴ pairs; duplicate-row tie → index {}", ties[0]))
}

fn criterion_6() -> Outcome {
    let vocab = [2usize; 4];
    let mut worst = 0.0f64;
    let mut order_ok = true;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let cfg = GeneratorConfig {
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            d_ff: 8,
            max_history: 4,
            init_std: 0.8,
            seed,
            ..GeneratorConfig::default()
        };
        let m = GeneratorModel::new(&cfg, &vocab).unwrap();
        let hist: Vec<usize> = (0..rng.gen_range(1..=4) * 4).map(|_| rng.gen_range(0..2)).collect();
        let beam = beam_search(&ModelScorer::new(&m, &hist).unwrap(), 16).unwrap();
        let mut brute: Vec<(Vec<usize>, f64)> = (0..16usize)
            .map(|c| {
                let t: Vec<usize> = (0..4).map(|b| (c >> (3 - b)) & 1).collect();
                let lp = m.tuple_log_prob(&hist, &t).unwrap();
                (t, lp)
            })
            .collect();
        brute.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        order_ok &= beam.len() == 16 && beam.iter().zip(&brute).all(|(h, (t, _))| &h.tokens == t);
        for (h, (_, lp)) in beam.iter().zip(&brute) {
            worst = worst.max((h.log_prob - lp).abs());
        }
    }
    outcome(order_ok && worst <= 1e-10, format!("20 models, identical ordering: {order_ok}; worst |Δ log p| {worst:.1e}"))
}

fn criterion_7() -> Outcome {
    let ranked: Vec<String> = (1..=10).map(|i| format!("x{i}")).collect();
    let n2 = ndcg_at_k(&ranked, "x2", 5);
    let r6 = (recall_at_k(&ranked, "x6", 5), recall_at_k(&ranked, "x6", 10));
    // ranks 1, 3, 7 → R@5 = 2/3, N@10 = (1 + 1/2 + 1/3)/3
    let rep = MetricReport::from_rankings(
        [(ranked.as_slice(), "x1"), (ranked.as_slice(), "x3"), (ranked.as_slice(), "x7")],
        "",
        0,
    );
    let ok = (n2 - 1.0 / 3f64.log2()).abs() < 1e-12
        && (n2 - 0.6309).abs() < 1e-4
        && r6 == (0.0, 1.0)
        && (rep.recall_at_5 - 2.0 / 3.0).abs() < 1e-12
        && (rep.recall_at_10 - 1.0).abs() < 1e-12
        && (rep.ndcg_at_10 - (1.0 + 0.5 + 1.0 / 3.0) / 3.0).abs() < 1e-12;
    outcome(ok, format!("N@5(rank 2) = {n2:.4}; R@5/R@10 at rank 6 = {}/{}; 3-user averages exact", r6.0, r6.1))
}

fn synthetic_corpus_config() -> SynthConfig {
    SynthConfig {
        n_items: 2400,
        n_users: 4000,
        intent_drift_probability: 0.1,
        popularity_exponent: 0.5,
        seed: 1,
        ..SynthConfig::default()
    }
}

fn experiment_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.tokenizer.epochs = 100;
    c.generator.d_model = 32;
    c.generator.d_ff = 64;
    c.generator.epochs = 10;
    c.generator.optimizer.learning_rate = 3e-3;
    c
}

/// Criteria 8, 9 and 10 share one tokenizer per seed.
fn criteria_8_9_10() -> (Outcome, Outcome, Outcome) {
    let start = Instant::now();
    let corpus = synth_generate(&synthetic_corpus_config()).unwrap();
    let config = experiment_config();
    let data = PreparedData::new(&corpus, &config.eval).unwrap();
    let (mut wins, mut ndcg) = (0, Vec::new());
    let (mut collisions, mut monotone, mut utils) = (Vec::new(), 0, Vec::new());
    for seed in 1..=5u64 {
        let cfg = variant_config(&config, Variant::Full, seed);
        let tok = build_tokenizer(&data, &cfg.featurizer, &cfg.tokenizer).unwrap();
        collisions.push(collision_rate(&tok.index));
        let u = utilization(&tok.index);
        if u[..u.len() - 1].windows(2).all(|w| w[0] <= w[1]) {
            monotone += 1;
        }
        utils.push(u.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/"));
        let full = run_generator_stage(&data, &tok.index, &config, Variant::Full, seed).unwrap();
        let random = run_generator_stage(&data, &tok.index, &config, Variant::Random, seed).unwrap();
        let (f, r) = (full.evaluation.overall.ndcg_at_10, random.evaluation.overall.ndcg_at_10);
        if f >= r {
            wins += 1;
        }
        ndcg.push(format!("s{seed} {f:.4}/{r:.4}"));
    }
    let t = start.elapsed();
    let worst_collision = collisions.iter().cloned().fold(0.0, f64::max);
    (
        outcome(
            wins >= 4 && within(t, 1800),
            format!(
                "full ≥ random N@10 in {wins}/5 seeds ({}), {} items, {} users; {:.0}s",
                ndcg.join(", "),
                data.corpus.items.len(),
                data.corpus.logs.len(),
                t.as_secs_f64()
            ),
        ),
        outcome(
            worst_collision <= 0.01,
            format!(
                "collision rate per seed {}",
                collisions.iter().map(|c| format!("{c:.4}")).collect::<Vec<_>>().join(", ")
            ),
        ),
        outcome(monotone >= 4, format!("non-decreasing over levels 1..K−1 in {monotone}/5 seeds ({})", utils.join("; "))),
    )
}

fn criterion_11() -> Outcome {
    let synth = SynthConfig::default();
    let a = synth_generate(&synth).unwrap();
    let b = synth_generate(&synth).unwrap();
    let corpus_same = write_items(&a.items) == write_items(&b.items) && write_interactions(&a.logs) == write_interactions(&b.logs);

    let mut config = ExperimentConfig::default();
    config.tokenizer.codebook_sizes = vec![8, 16, 32, 32];
    config.tokenizer.epochs = 20;
    config.generator.d_model = 16;
    config.generator.d_ff = 16;
    config.generator.epochs = 2;
    config.generator.beam_width = 5;
    let data = PreparedData::new(&a, &config.eval).unwrap();
    let run = || {
        let tok = build_tokenizer(&data, &config.featurizer, &config.tokenizer).unwrap();
        let model = GeneratorModel::new(&config.generator, tok.index.vocab()).unwrap();
        let gen = train_generator(model, &data.training, &tok.index, &config.generator).unwrap();
        let out = run_generator_stage(&data, &tok.index, &config, Variant::Full, config.generator.seed).unwrap();
        (
            tok.cf.unwrap().to_text(),
            tok.trained.model.to_checkpoint().to_text(),
            tok.index.to_text(),
            gen.model.to_checkpoint().to_text(),
            format!("{:?}", out.recommendations),
        )
    };
    let (r1, r2) = (run(), run());
    let grid = TheoryGrid {
        trials: 5000,
        ..TheoryGrid::default()
    };
    let theory_same = verify_proposition(&grid).unwrap().to_csv() == verify_proposition(&grid).unwrap().to_csv();
    let ok = corpus_same && r1 == r2 && theory_same;
    outcome(
        ok,
        format!("corpus {corpus_same}, CF/tokenizer/tokens/generator/recommendations {}, theory {theory_same}", r1 == r2),
    )
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "expected-dissimilarity ordering over the full grid", criterion_1()),
        (1, "… restricted to p > 1/V", criterion_1_in_domain()),
        (2, "boundary equality at p = 1/V", criterion_2()),
        (3, "ψ monotonicity", criterion_3()),
        (4, "finite-difference gradients", criterion_4()),
        (5, "quantizer argmin and tie-break", criterion_5()),
        (6, "beam search equals enumeration", criterion_6()),
        (7, "metric values", criterion_7()),
    ];
    let (c8, c9, c10) = criteria_8_9_10();
    results.push((8, "full vs random token order", c8));
    results.push((9, "code collision rate", c9));
    results.push((10, "utilization trend", c10));
    results.push((11, "determinism", criterion_11()));

    let mut unexpected = 0;
    for (i, (id, name, o)) in results.iter().enumerate() {
        let known = EXPECTED_FAILURES.iter().find(|(c, _)| c == id).filter(|_| i == 0);
        let tag = match (o.pass, known) {
            (true, _) => "PASS",
            (false, Some(_)) => "FAIL (expected)",
            (false, None) => {
                unexpected += 1;
                "FAIL"
            }
        };
        println!("criterion {id:>2} [{tag}] {name}: {}", o.detail);
        if let (false, Some((_, why))) = (o.pass, known) {
            println!("             reason: {why}");
        }
    }
    println!("acceptance finished in {:.0}s, {unexpected} unexpected failure(s)", started.elapsed().as_secs_f64());
    if unexpected > 0 {
        std::process::exit(1);
    }
}
