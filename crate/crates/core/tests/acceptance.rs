//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 1-7 are exact and decide the exit status. Criteria 8-13 are
//! directional checks on the default synthetic dataset over seeds 0, 1, 2;
//! their lines are printed either way, and they only affect the exit status
//! when `CIDLAB_ACCEPTANCE_STRICT=1`. `CIDLAB_ACCEPTANCE_QUICK=1` skips them.

use std::collections::VecDeque;
use std::time::Instant;

use cidlab::analysis::{hard_frequency_histogram, shuffled_baseline_histogram, DifficultyMatrix};
use cidlab::contrastive::{
    apply_policy, band_count, info_nce_from_dots, info_nce_grad_query, info_nce_loss, Band,
    ClassRelation, Embedding, FilterMode, FilterPolicy, NegativeQueue, Replacement, SENTINEL_LABEL,
};
use cidlab::data::{gen_hierarchical_gaussian, SyntheticConfig};
use cidlab::encoder::{load_checkpoint, save_checkpoint, Checkpoint, EncoderConfig, EncoderParams};
use cidlab::experiments::{
    parse_policy, run_single, Emit, ExperimentConfig, RunResults, REPLACEMENT_RESERVE,
    SAME_CLASS_ROWS,
};
use cidlab::numerics::{dot, finite_difference_gradcheck, l2_normalize, RngStream};
use cidlab::trainer::{train, TrainArtifacts, TrainConfig};
use cidlab::Error;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn unit(rng: &mut RngStream, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
        if let Ok(u) = l2_normalize(&v) {
            return u;
        }
    }
}

// ---------------------------------------------------------------- exact suite

fn c1_info_nce_gradient() -> Outcome {
    let mut rng = RngStream::new(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let tau = rng.uniform_range(0.05, 1.0);
        let q: Vec<f64> = (0..16).map(|_| rng.standard_normal() * 0.3).collect();
        let pos = unit(&mut rng, 16);
        let negs: Vec<Vec<f64>> = (0..8).map(|_| unit(&mut rng, 16)).collect();
        let refs: Vec<&[f64]> = negs.iter().map(|n| &n[..]).collect();
        let g = info_nce_grad_query(&q, &pos, &refs, tau);
        let err = finite_difference_gradcheck(|x| info_nce_loss(x, &pos, &refs, tau), &g, &q, 1e-6)
            .unwrap();
        worst = worst.max(err);
    }
    outcome(
        worst < 1e-6,
        format!("max relative error {worst:.2e} over 100 instances (< 1e-6)"),
    )
}

fn c2_encoder_gradient() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut rng = RngStream::new(1000 + seed);
        let cfg = EncoderConfig {
            input_dim: 2 + rng.below(5),
            base_hidden_dims: (0..rng.below(3)).map(|_| 2 + rng.below(6)).collect(),
            repr_dim: 2 + rng.below(6),
            head_hidden_dim: 2 + rng.below(6),
            embed_dim: 2 + rng.below(5),
            momentum: 0.9,
        };
        let mut p = EncoderParams::init(&cfg, &mut rng).unwrap();
        for l in 0..p.layer_count() {
            for b in p.bias_mut(l).as_mut_slice() {
                *b = 0.1 * rng.standard_normal();
            }
        }
        let x: Vec<f64> = (0..cfg.input_dim).map(|_| rng.standard_normal()).collect();
        let w: Vec<f64> = (0..cfg.embed_dim).map(|_| rng.standard_normal()).collect();
        let analytic = p.backward(&x, &w).unwrap().flatten();
        let base = p.clone();
        let f = |t: &[f64]| {
            let mut q = base.clone();
            q.set_flat(t).unwrap();
            dot(&q.embed(&x).unwrap(), &w)
        };
        worst = worst.max(finite_difference_gradcheck(f, &analytic, &p.flatten(), 1e-6).unwrap());
    }
    outcome(
        worst < 1e-4,
        format!("max relative error {worst:.2e} over 20 configs (< 1e-4)"),
    )
}

/// Predicate selection written out directly: count-based ranks, the band
/// edges as documented, and replacements taken from the oldest reserve.
fn brute_selection(
    q: &Embedding,
    active: &[Embedding],
    reserve: &[Embedding],
    p: &FilterPolicy,
) -> Option<Vec<f64>> {
    let n = active.len();
    let dots: Vec<f64> = active
        .iter()
        .map(|e| dot(&q.vector, &e.vector).clamp(-1.0, 1.0))
        .collect();
    let rank: Vec<usize> = (0..n)
        .map(|j| {
            (0..n)
                .filter(|&i| {
                    dots[i] > dots[j] || (dots[i] == dots[j] && active[i].age < active[j].age)
                })
                .count()
        })
        .collect();
    let nf = n as f64;
    let in_band = |r: usize| {
        let r = r as f64;
        match p.band {
            Band::All => true,
            Band::HardestFrac(f) => r < (f * nf).round().max(1.0),
            Band::EasiestFrac(f) => r >= nf - (f * nf).round().max(1.0),
            Band::Range { lo, hi } => {
                r >= ((1.0 - hi) * nf).round() && r < ((1.0 - lo) * nf).round()
            }
        }
    };
    let mut kept = Vec::new();
    let mut removed = 0;
    for j in 0..n {
        let same =
            active[j].class_label == q.class_label && active[j].class_label != SENTINEL_LABEL;
        let rel = match p.class_relation {
            ClassRelation::Any => true,
            ClassRelation::Same => same,
            ClassRelation::Different => !same,
        };
        let member = in_band(rank[j]) && rel;
        if (p.mode == FilterMode::Keep) == member {
            kept.push(dot(&q.vector, &active[j].vector));
        } else {
            removed += 1;
        }
    }
    if p.replacement == Replacement::ReplaceWithOlder {
        if removed > reserve.len() {
            return None;
        }
        kept.extend(reserve[..removed].iter().map(|e| dot(&q.vector, &e.vector)));
    }
    Some(kept)
}

fn c3_filter_oracle() -> Outcome {
    let mut policies: Vec<(String, FilterPolicy)> = SAME_CLASS_ROWS
        .iter()
        .map(|(l, p)| (l.to_string(), parse_policy(p).unwrap()))
        .collect();
    for (lo, hi) in [
        (0, 90),
        (0, 95),
        (85, 90),
        (90, 95),
        (95, 100),
        (85, 100),
        (90, 100),
        (0, 100),
    ] {
        let band = Band::Range {
            lo: lo as f64 / 100.0,
            hi: hi as f64 / 100.0,
        };
        policies.push((format!("keep {lo}-{hi}"), FilterPolicy::keep(band)));
        policies.push((
            format!("drop {lo}-{hi}"),
            FilterPolicy::drop(band, ClassRelation::Any, Replacement::Omit),
        ));
    }
    let mut rng = RngStream::new(303);
    let dim = 8;
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let mut mismatches = Vec::new();
    for trial in 0..300 {
        let k = 1 + rng.below(64);
        let r = 64;
        let mut queue = NegativeQueue::new(k, r, dim);
        let total = k + r;
        let mut fill = Vec::new();
        for i in 0..total {
            // coarse vectors so equal dot products occur
            let v: Vec<f64> = (0..dim)
                .map(|_| (rng.standard_normal() * 2.0).round())
                .collect();
            let v = l2_normalize(&v).unwrap_or_else(|_| unit(&mut rng, dim));
            let label = if rng.uniform() < 0.1 {
                SENTINEL_LABEL
            } else {
                rng.below(4) as i64
            };
            fill.push(Embedding::new(v, i as i64, label).unwrap());
        }
        for chunk in fill.chunks(k) {
            queue.enqueue(chunk.to_vec()).unwrap();
        }
        let q = Embedding::new(unit(&mut rng, dim), -5, rng.below(4) as i64).unwrap();
        let pos = rng.uniform_range(-1.0, 1.0);
        let tau = rng.uniform_range(0.05, 1.0);
        for (name, p) in &policies {
            let ours = apply_policy(&q, queue.active(), queue.reserve(), p);
            let brute = brute_selection(&q, queue.active(), queue.reserve(), p);
            match (ours, brute) {
                (Ok(sel), Some(want)) => {
                    let act = queue.active();
                    let res = queue.reserve();
                    let got: Vec<f64> = sel
                        .retained
                        .iter()
                        .map(|&j| dot(&q.vector, &act[j].vector))
                        .chain(
                            sel.replacements
                                .iter()
                                .map(|&j| dot(&q.vector, &res[j].vector)),
                        )
                        .collect();
                    let d = (info_nce_from_dots(pos, &got, tau)
                        - info_nce_from_dots(pos, &want, tau))
                    .abs();
                    worst = worst.max(d);
                    if got.len() != want.len() || d > 1e-12 {
                        mismatches.push(format!("trial {trial} {name}"));
                    }
                }
                (Err(Error::ReserveExhausted { .. }), None) => {}
                _ => mismatches.push(format!("trial {trial} {name}: error disagreement")),
            }
            cases += 1;
        }
    }
    outcome(
        mismatches.is_empty() && worst <= 1e-12,
        format!(
            "{cases} cases over {} policies, max loss difference {worst:.1e} (<= 1e-12){}",
            policies.len(),
            mismatches
                .first()
                .map_or(String::new(), |m| format!("; first mismatch {m}"))
        ),
    )
}

fn c4_counting_identity() -> Outcome {
    let mut rng = RngStream::new(404);
    let mut bad = Vec::new();
    for (q, n) in [(200usize, 300usize), (57, 1000), (1000, 1000)] {
        let qs: Vec<Embedding> = (0..q)
            .map(|i| Embedding::new(unit(&mut rng, 6), i as i64, 0).unwrap())
            .collect();
        let ns: Vec<Embedding> = (0..n)
            .map(|i| Embedding::new(unit(&mut rng, 6), 100_000 + i as i64, 0).unwrap())
            .collect();
        let dm = DifficultyMatrix::from_embeddings(&qs, &ns).unwrap();
        for f in [0.01, 0.05, 0.2] {
            let want = band_count(f, n) as f64 / n as f64;
            let real = hard_frequency_histogram(&dm, f, 50).unwrap().mean;
            let shuf = shuffled_baseline_histogram(&dm, f, 50, &mut rng, 3)
                .unwrap()
                .mean;
            if real != want || shuf != want {
                bad.push(format!("Q={q} N={n} f={f}: {real} / {shuf} vs {want}"));
            }
        }
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            "exact for f in {0.01, 0.05, 0.2}, real and shuffled".into()
        } else {
            bad.join("; ")
        },
    )
}

fn c5_queue_invariants() -> Outcome {
    let mut rng = RngStream::new(505);
    let (k, r, dim) = (48usize, 16usize, 4usize);
    let mut queue = NegativeQueue::new(k, r, dim);
    let mut model: VecDeque<i64> = VecDeque::new();
    let mut next_id = 0i64;
    let mut problems = Vec::new();
    let mut drops = 0;
    for op in 0..10_000 {
        if queue.is_empty() || rng.uniform() < 0.5 {
            let b = 1 + rng.below(k);
            let batch: Vec<Embedding> = (0..b)
                .map(|_| {
                    next_id += 1;
                    Embedding::new(unit(&mut rng, dim), next_id, rng.below(3) as i64).unwrap()
                })
                .collect();
            for e in &batch {
                model.push_back(e.instance_id);
            }
            while model.len() > k + r {
                model.pop_front();
            }
            queue.enqueue(batch).unwrap();
        } else {
            drops += 1;
            let q = Embedding::new(unit(&mut rng, dim), -1, rng.below(3) as i64).unwrap();
            let frac = [0.05, 0.1, 0.25, 0.5][rng.below(4)];
            let rel = [
                ClassRelation::Any,
                ClassRelation::Same,
                ClassRelation::Different,
            ][rng.below(3)];
            let p = FilterPolicy::drop(Band::HardestFrac(frac), rel, Replacement::ReplaceWithOlder);
            let active = queue.active().len();
            let reserve = queue.reserve().len();
            match apply_policy(&q, queue.active(), queue.reserve(), &p) {
                Ok(sel) => {
                    if sel.retained.len() + sel.removed != active
                        || sel.replacements != (0..sel.removed).collect::<Vec<_>>()
                        || sel.len() != active
                    {
                        problems.push(format!("op {op}: replacement accounting"));
                    }
                }
                Err(Error::ReserveExhausted { needed, available }) => {
                    if available != reserve || needed <= reserve {
                        problems.push(format!("op {op}: bogus ReserveExhausted"));
                    }
                }
                Err(e) => problems.push(format!("op {op}: {e}")),
            }
        }
        let ids: Vec<i64> = queue.entries().iter().map(|e| e.instance_id).collect();
        if ids != model.iter().copied().collect::<Vec<_>>() {
            problems.push(format!("op {op}: FIFO order"));
        }
        if !queue.entries().windows(2).all(|w| w[0].age < w[1].age) {
            problems.push(format!("op {op}: ages not increasing"));
        }
        let n = queue.len();
        if queue.active().len() != n.min(k) || queue.reserve().len() != n.saturating_sub(k).min(r) {
            problems.push(format!("op {op}: region sizes"));
        }
        if problems.len() > 5 {
            break;
        }
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!("10000 operations ({drops} drop-with-replacement), FIFO/age/reserve consistent")
        } else {
            problems.join("; ")
        },
    )
}

fn default_data() -> cidlab::data::Dataset {
    gen_hierarchical_gaussian(&SyntheticConfig::default(), &mut RngStream::new(0))
        .unwrap()
        .0
}

fn c6_determinism() -> Outcome {
    let ds = default_data();
    let cfg = TrainConfig {
        epochs: 1,
        seed: 17,
        encoder: EncoderConfig::with_input_dim(ds.input_dim()),
        ..TrainConfig::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ta, tb) = (
        TrainArtifacts {
            dir: a.path().into(),
        },
        TrainArtifacts {
            dir: b.path().into(),
        },
    );
    let oa = train(&cfg, &ds, Some(&ta)).unwrap();
    train(&cfg, &ds, Some(&tb)).unwrap();
    let ba = std::fs::read(ta.final_checkpoint_path()).unwrap();
    let bb = std::fs::read(tb.final_checkpoint_path()).unwrap();
    outcome(
        ba == bb && oa.records.len() == 50,
        format!(
            "{} steps, checkpoints {} bytes, identical: {}",
            oa.records.len(),
            ba.len(),
            ba == bb
        ),
    )
}

fn c7_checkpoint() -> Outcome {
    let ds = default_data();
    let cfg = TrainConfig {
        epochs: 1,
        seed: 3,
        encoder: EncoderConfig::with_input_dim(ds.input_dim()),
        ..TrainConfig::default()
    };
    let out = train(&cfg, &ds, None).unwrap();
    let ck = out.state.checkpoint();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ckpt");
    save_checkpoint(&ck, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    let bits = |c: &Checkpoint| -> Vec<u64> {
        c.pair
            .query
            .flatten()
            .into_iter()
            .chain(c.pair.key.flatten())
            .chain(
                c.optimizer
                    .velocity
                    .iter()
                    .flat_map(|v| v.as_slice().to_vec()),
            )
            .map(f64::to_bits)
            .collect()
    };
    let exact = back == ck && bits(&back) == bits(&ck) && back.to_bytes() == ck.to_bytes();

    let bytes = std::fs::read(&path).unwrap();
    let mut flipped = bytes.clone();
    flipped[bytes.len() / 2] ^= 0x10;
    std::fs::write(&path, &flipped).unwrap();
    let corrupt = matches!(load_checkpoint(&path), Err(Error::CorruptChecksum(_)));
    std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
    let truncated = load_checkpoint(&path).is_err();
    let mut versioned = bytes.clone();
    versioned[4] = 2;
    std::fs::write(&path, &versioned).unwrap();
    let version = matches!(load_checkpoint(&path), Err(Error::VersionMismatch { .. }));
    outcome(
        exact && corrupt && truncated && version,
        format!("round-trip bit-exact: {exact}; flipped byte rejected: {corrupt}; truncated rejected: {truncated}; wrong version rejected: {version}"),
    )
}

// ----------------------------------------------------------- directional suite

const SEEDS: [u64; 3] = [0, 1, 2];

fn run(policy: &str, tau: f64, seed: u64, emit: Emit, reserve: Option<&str>) -> RunResults {
    let mut cfg = ExperimentConfig::default();
    cfg.set("policy", policy).unwrap();
    cfg.train.contrastive.temperature = tau;
    cfg.train.seed = seed;
    cfg.analysis.emit = emit;
    if let Some(r) = reserve {
        cfg.set("queue_reserve", r).unwrap();
    }
    let t = Instant::now();
    let out = run_single(&cfg, None).unwrap();
    eprintln!(
        "  [{policy} tau={tau} seed={seed}] top1 {:.4} ({:.1}s)",
        out.probe.top1,
        t.elapsed().as_secs_f64()
    );
    out.results
}

fn runs(policy: &str, tau: f64, emit: Emit, reserve: Option<&str>) -> Vec<RunResults> {
    SEEDS
        .iter()
        .map(|&s| run(policy, tau, s, emit, reserve))
        .collect()
}

fn col(rs: &[RunResults], k: &str) -> Vec<f64> {
    rs.iter().map(|r| r.get(k).unwrap()).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.4}"))
        .collect::<Vec<_>>()
        .join("/")
}

fn main() {
    let quick = std::env::var("CIDLAB_ACCEPTANCE_QUICK").is_ok_and(|v| v == "1");
    let strict = std::env::var("CIDLAB_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut exact_fail = 0;
    let mut directional_fail = 0;
    let mut report = |n: u32, name: &str, o: Outcome, exact: bool| {
        println!(
            "criterion {n:>2} {name}: {} ({})",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            if exact {
                exact_fail += 1;
            } else {
                directional_fail += 1;
            }
        }
    };
    report(
        1,
        "InfoNCE gradient vs finite differences",
        c1_info_nce_gradient(),
        true,
    );
    report(2, "encoder gradient check", c2_encoder_gradient(), true);
    report(3, "filter-oracle equivalence", c3_filter_oracle(), true);
    report(4, "counting identity", c4_counting_identity(), true);
    report(5, "queue invariants", c5_queue_invariants(), true);
    report(6, "training determinism", c6_determinism(), true);
    report(
        7,
        "checkpoint round-trip and corruption",
        c7_checkpoint(),
        true,
    );

    if quick {
        println!("criteria 8-13 skipped (CIDLAB_ACCEPTANCE_QUICK=1)");
    } else {
        let t = Instant::now();
        let base = runs("none", 0.2, Emit::ALL, None);
        let k95 = runs("keep range:0.95:1", 0.2, Emit::NONE, None);
        let k90 = runs("keep range:0.9:0.95", 0.2, Emit::NONE, None);
        let k85 = runs("keep range:0.85:0.9", 0.2, Emit::NONE, None);
        let e95 = runs("keep range:0:0.95", 0.2, Emit::NONE, None);
        let (b_top, k95_top, k90_top, k85_top, e95_top) = (
            col(&base, "probe_top1"),
            col(&k95, "probe_top1"),
            col(&k90, "probe_top1"),
            col(&k85, "probe_top1"),
            col(&e95, "probe_top1"),
        );
        let (mb, m95, m90, m85) = (mean(&b_top), mean(&k95_top), mean(&k90_top), mean(&k85_top));
        report(
            8,
            "hardest 5% sufficient, easier bands ordered",
            outcome(
                (mb - m95).abs() * 100.0 <= 3.0 && m90 < m95 && m85 < m90,
                format!(
                    "mean top-1: all {mb:.4}, 95-100 {m95:.4}, 90-95 {m90:.4}, 85-90 {m85:.4}; need |all-95| <= 3 points and 85-90 < 90-95 < 95-100"
                ),
            ),
            false,
        );
        let below = e95_top.iter().zip(&b_top).filter(|(e, b)| e < b).count();
        report(
            9,
            "easiest 95% below baseline",
            outcome(
                below == 3,
                format!(
                    "top-1 easiest 95% {} vs all {}; lower in {below}/3 seeds",
                    fmt(&e95_top),
                    fmt(&b_top)
                ),
            ),
            false,
        );
        let (hs, es, hl, el) = (
            col(&base, "hard_same_class"),
            col(&base, "easy_same_class"),
            col(&base, "hard_mean_lca"),
            col(&base, "easy_mean_lca"),
        );
        let ok10 = (0..3).filter(|&i| hs[i] > es[i] && hl[i] > el[i]).count();
        report(
            10,
            "hard band more same-class and semantically closer",
            outcome(
                ok10 == 3,
                format!(
                    "same-class hard {} vs easy {}; mean LCA hard {} vs easy {}; {ok10}/3 seeds",
                    fmt(&hs),
                    fmt(&es),
                    fmt(&hl),
                    fmt(&el)
                ),
            ),
            false,
        );
        let ratio = col(&base, "hard_freq_var_ratio");
        let ok11 = ratio.iter().filter(|&&r| r >= 1.2).count();
        report(
            11,
            "hard-frequency distribution wider than shuffled",
            outcome(
                ok11 == 3,
                format!("variance ratio {} (>= 1.2); {ok11}/3 seeds", fmt(&ratio)),
            ),
            false,
        );
        let pol = |label: &str| SAME_CLASS_ROWS.iter().find(|r| r.0 == label).unwrap().1;
        let b07 = runs(pol("baseline"), 0.07, Emit::NONE, Some(REPLACEMENT_RESERVE));
        let s07 = runs(
            pol("drop_same_class"),
            0.07,
            Emit::NONE,
            Some(REPLACEMENT_RESERVE),
        );
        let (mb07, ms07) = (
            mean(&col(&b07, "probe_top1")),
            mean(&col(&s07, "probe_top1")),
        );
        let ok12 = ms07 >= mb07;
        report(
            12,
            "dropping same-class negatives at tau 0.07",
            outcome(
                ok12,
                format!(
                    "mean top-1 drop-same {ms07:.4} vs baseline {mb07:.4}{}",
                    if ok12 {
                        ""
                    } else {
                        "; EXPECTED-DIRECTIONAL deviation: the synthetic data does not show the improvement"
                    }
                ),
            ),
            false,
        );
        let eq = col(&base, "curve_easiest_quartile_min");
        let ok13 = eq.iter().filter(|&&v| v < 0.0).count();
        report(
            13,
            "easiest quartile of the difficulty curve is negative",
            outcome(
                ok13 == 3,
                format!(
                    "min mean dot in easiest quartile {}; {ok13}/3 seeds",
                    fmt(&eq)
                ),
            ),
            false,
        );
        println!(
            "directional suite: {} of 6 passed in {:.0}s",
            6 - directional_fail,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: exact {}/7 passed{}",
        7 - exact_fail,
        if quick {
            String::new()
        } else {
            format!(", directional {}/6 passed", 6 - directional_fail)
        }
    );
    if exact_fail > 0 || (strict && directional_fail > 0) {
        std::process::exit(1);
    }
}
