//! Acceptance suite. Runs every criterion, prints one line each, and exits
//! nonzero if any fails.

mod common;

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use rand::Rng as _;
use sfdialog::checkpoint::Checkpoint;
use sfdialog::eval::{compute_metrics, evaluate, rank_of_gt};
use sfdialog::model::BatchObjective;
use sfdialog::nn::{grad_check, softmax_cross_entropy, GradCheckConfig, Mode};
use sfdialog::rng::rng_for;
use sfdialog::synthetic::{random_examples, toy_glove, Family};
use sfdialog::text::{detokenize, is_punctuation, tokenize, GloveTable, ImageFeatureStore, RawDataset};
use sfdialog::train::{train, TrainConfig, Trainer};
use sfdialog::unroll::{audit, replay_matches, unroll_many, DialogState, Players, PoolSpec, Transcript};
use sfdialog::visdialq::{build_qdataset, visdialq_examples, Provenance, QDataset};
use sfdialog::{Example, ModelConfig, ModelDims, SfModel, Task, Variant};

use common::{answer_examples, oracle_rank, synth, vocab_of};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn gradient_integrity() -> Outcome {
    let dims = ModelDims::compact(4, 8, 16, 8, 12);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for seed in 0..5u64 {
        let cfg = ModelConfig {
            task: Task::VisDial,
            variant: Variant::QIH,
            mlp_depth: 2,
            shared_embeddings: true,
            vocab_size: 50,
            dims,
        };
        let (batch, features) = ok(random_examples(&cfg, 3, 5, seed))?;
        let mut model = ok(SfModel::new(cfg, seed))?;
        let mut objective = BatchObjective { model: &mut model, batch: &batch, features: Some(&features) };
        let report = ok(grad_check(&mut objective, GradCheckConfig::default()))?;
        ensure!(
            report.passed(),
            "seed {seed}: {} [{}] analytic {:e} numeric {:e} rel {:e}",
            report.worst_param,
            report.worst_index,
            report.worst_analytic,
            report.worst_numeric,
            report.max_rel_error
        );
        worst = worst.max(report.max_rel_error);
        checked += report.checked;
    }
    Ok(format!("5 seeds, {checked} coordinates, max rel error {worst:.2e} < 1e-4"))
}

fn train_r_at_1(model: &SfModel, examples: &[Example], features: &ImageFeatureStore) -> Result<f64, String> {
    Ok(ok(evaluate(model, examples, Some(features)))?.report.r_at_1)
}

fn overfit_sanity() -> Outcome {
    let split = synth(Family::Memorize, 20, 8, 11, 1);
    let dims = ModelDims::compact(10, 16, 32, 16, 16);
    let vocab = vocab_of(&[&split.dataset]);
    let examples = answer_examples(&split.dataset, &vocab, &dims);
    ensure!(examples.len() == 200, "expected 200 rounds, got {}", examples.len());

    let mut tc = TrainConfig::new(Task::VisDial, Variant::QIH);
    tc.dims = dims;
    let model = ok(SfModel::new(tc.model_config(vocab.len()), 3))?;
    let mut trainer = ok(Trainer::new(model, tc.adam(), None))?;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut first_loss = None;
    let mut epoch = 0u64;
    while trainer.steps() < 200 {
        epoch += 1;
        order.sort_unstable();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng_for(5, &[epoch]));
        for chunk in order.chunks(32) {
            if trainer.steps() >= 200 || chunk.len() < 2 {
                break;
            }
            let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let loss = ok(trainer.step(&batch, Some(&split.features)))?;
            first_loss.get_or_insert(loss);
        }
        trainer.model.set_mode(Mode::Eval);
        if train_r_at_1(&trainer.model, &examples, &split.features)? == 100.0 {
            break;
        }
    }
    let first = first_loss.unwrap();
    let ln8 = 8f64.ln();
    ensure!((first - ln8).abs() <= 0.5, "first-step loss {first:.4} outside ln 8 ± 0.5");
    trainer.model.set_mode(Mode::Eval);
    let r1 = train_r_at_1(&trainer.model, &examples, &split.features)?;
    ensure!(r1 == 100.0, "training R@1 {r1:.2}% after {} steps", trainer.steps());
    Ok(format!("R@1 100% after {} steps, first loss {first:.4} (ln 8 = {ln8:.4})", trainer.steps()))
}

fn loss_fixture() -> Outcome {
    let (loss, grad) = ok(softmax_cross_entropy(&[0.37; 100], 42))?;
    let err = (loss - 100f64.ln()).abs();
    ensure!(err <= 1e-9, "uniform loss {loss} differs from ln 100 by {err:e}");
    let gsum: f64 = grad.iter().sum();
    ensure!(gsum.abs() <= 1e-12, "uniform gradient sums to {gsum:e}");
    let mut rng = rng_for(3, &[0]);
    let mut worst_sum = gsum.abs();
    let mut worst_shift = 0.0f64;
    for _ in 0..200 {
        let scores: Vec<f64> = (0..100).map(|_| rng.random_range(-5.0..5.0)).collect();
        let gt = rng.random_range(0..100);
        let (l, g) = ok(softmax_cross_entropy(&scores, gt))?;
        worst_sum = worst_sum.max(g.iter().sum::<f64>().abs());
        for shift in [-40.0, 2.5, 300.0] {
            let moved: Vec<f64> = scores.iter().map(|s| s + shift).collect();
            let (l2, _) = ok(softmax_cross_entropy(&moved, gt))?;
            worst_shift = worst_shift.max((l - l2).abs());
        }
    }
    ensure!(worst_sum <= 1e-12, "gradient sum {worst_sum:e}");
    ensure!(worst_shift <= 1e-10, "shift changed loss by {worst_shift:e}");
    Ok(format!(
        "|loss - ln 100| = {err:.1e}, max |Σ grad| = {worst_sum:.1e}, max shift drift = {worst_shift:.1e}"
    ))
}

fn metric_oracle() -> Outcome {
    let mut rng = rng_for(4, &[0]);
    let mut per_k: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut tied = 0;
    for i in 0..10_000 {
        let k = [2, 5, 100][i % 3];
        let gt = rng.random_range(0..k);
        let scores: Vec<f64> = match i % 7 {
            0 => vec![1.25; k],
            1 | 2 => (0..k).map(|_| rng.random_range(0..3) as f64).collect(),
            _ => (0..k).map(|_| rng.random::<f64>()).collect(),
        };
        let got = ok(rank_of_gt(&scores, gt))?;
        let want = oracle_rank(&scores, gt);
        ensure!(got == want, "K={k} gt={gt}: rank {got}, oracle {want} for {scores:?}");
        if i % 7 == 0 {
            ensure!(got == k, "all-tied K={k} gave rank {got}");
            tied += 1;
        }
        per_k.entry(k).or_default().push(want);
    }
    for (&k, ranks) in &per_k {
        let m = ok(compute_metrics(ranks, k))?;
        let n = ranks.len() as f64;
        let recall = |c: usize| 100.0 * ranks.iter().filter(|&&r| r <= c).count() as f64 / n;
        let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
        let mean = ranks.iter().sum::<usize>() as f64 / n;
        ensure!(
            m.mrr == mrr && m.r_at_1 == recall(1) && m.r_at_5 == recall(5) && m.r_at_10 == recall(10) && m.mean_rank == mean,
            "K={k}: metrics {m:?} differ from oracle"
        );
    }

    let mut ranks = Vec::with_capacity(10_000);
    for _ in 0..10_000 {
        let scores: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        ranks.push(ok(rank_of_gt(&scores, rng.random_range(0..100)))?);
    }
    let m = ok(compute_metrics(&ranks, 100))?;
    let h100: f64 = (1..=100).map(|i| 1.0 / i as f64).sum::<f64>() / 100.0;
    ensure!((m.mean_rank - 50.5).abs() <= 1.0, "random mean rank {:.3}", m.mean_rank);
    ensure!((m.mrr - h100).abs() <= 0.005, "random MRR {:.4} vs {h100:.4}", m.mrr);
    Ok(format!(
        "10^4 vectors match ({tied} all-tied); random scorer mean rank {:.2}, MRR {:.4} (H_100/100 = {h100:.4})",
        m.mean_rank, m.mrr
    ))
}

/// Reference GloVe key: three leading word slots, the mean of the rest, and
/// the mean of the known answer words.
fn oracle_key(q: &str, a: &str, glove: &GloveTable) -> Vec<f64> {
    let words = |s: &str| -> Vec<String> { tokenize(s).into_iter().filter(|w| !is_punctuation(w)).collect() };
    let d = glove.dim();
    let zero = vec![0.0; d];
    let vec_of = |w: &str| glove.get(w).map(<[f64]>::to_vec).unwrap_or_else(|| zero.clone());
    let qw = words(q);
    let mut key = Vec::with_capacity(5 * d);
    for i in 0..3 {
        key.extend(qw.get(i).map(|w| vec_of(w)).unwrap_or_else(|| zero.clone()));
    }
    let mut tail = zero.clone();
    if qw.len() > 3 {
        for w in &qw[3..] {
            for (t, x) in tail.iter_mut().zip(vec_of(w)) {
                *t += x;
            }
        }
        tail.iter_mut().for_each(|t| *t /= (qw.len() - 3) as f64);
    }
    key.extend(tail);
    let known: Vec<Vec<f64>> = words(a).iter().filter_map(|w| glove.get(w).map(<[f64]>::to_vec)).collect();
    let mut ans = zero.clone();
    for v in &known {
        for (t, x) in ans.iter_mut().zip(v) {
            *t += x;
        }
    }
    if !known.is_empty() {
        ans.iter_mut().for_each(|t| *t /= known.len() as f64);
    }
    key.extend(ans);
    key
}

fn visdialq_oracle() -> Outcome {
    let split = synth(Family::Memorize, 30, 8, 21, 1);
    let ds = &split.dataset;
    let glove = ok(toy_glove(ds.corpus(), 5, 9))?;
    ensure!(glove.dim() == 5, "glove dim {}", glove.dim());
    let canon = |i: usize| detokenize(&tokenize(&ds.data.questions[i]));
    let mut first_index: HashMap<String, usize> = HashMap::new();
    for i in 0..ds.data.questions.len() {
        first_index.entry(canon(i)).or_insert(i);
    }
    let question = |image: u64, round: usize| canon(ds.dialog(image).unwrap().dialog[round - 1].question);

    let mut counts: HashMap<String, usize> = HashMap::new();
    for d in &ds.data.dialogs {
        for r in &d.dialog {
            *counts.entry(canon(r.question)).or_default() += 1;
        }
    }
    let mut popular: Vec<(String, usize)> = counts.into_iter().collect();
    popular.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let popular: Vec<String> = popular.into_iter().take(30).map(|p| p.0).collect();

    let mut keys = Vec::new();
    for d in &ds.data.dialogs {
        for (t, r) in d.dialog.iter().enumerate() {
            let key = oracle_key(&ds.data.questions[r.question], &ds.data.answers[r.answer], &glove);
            keys.push((d.image_id, t + 1, key));
        }
    }

    let q = ok(build_qdataset(ds, &glove, 17))?;
    let again = ok(build_qdataset(ds, &glove, 17))?;
    ensure!(ok(q.to_json())? == ok(again.to_json())?, "reruns with the same seed differ");

    let mut rows = 0;
    for qd in &q.data.dialogs {
        ensure!(qd.rounds.len() == 9, "image {} has {} rounds", qd.image_id, qd.rounds.len());
        for r in &qd.rounds {
            rows += 1;
            let at = format!("image {} round {}", qd.image_id, r.round);
            let (_, _, my_key) = keys.iter().find(|(i, t, _)| *i == qd.image_id && *t == r.round).unwrap();
            let mut near: Vec<(f64, u64, usize)> = keys
                .iter()
                .filter(|(i, t, _)| *i != qd.image_id && *t != 10)
                .map(|(i, t, k)| (k.iter().zip(my_key).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(), *i, *t))
                .collect();
            near.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let target = question(qd.image_id, r.round + 1);

            let mut taken: Vec<String> = vec![target.clone()];
            let mut want_plausible = Vec::new();
            for &(_, i, t) in near.iter().take(50) {
                ensure!(i != qd.image_id && t < 10, "{at}: oracle neighbour broke an exclusion");
                let s = question(i, t + 1);
                if !taken.contains(&s) {
                    taken.push(s.clone());
                    want_plausible.push(s);
                }
            }
            let mut want_popular = Vec::new();
            for s in &popular {
                if taken.len() < 100 && !taken.contains(s) {
                    taken.push(s.clone());
                    want_popular.push(s.clone());
                }
            }

            ensure!(r.question_options.len() == 100, "{at}: {} candidates", r.question_options.len());
            let strings: Vec<String> = r.question_options.iter().map(|&i| canon(i)).collect();
            let unique: HashSet<&String> = strings.iter().collect();
            ensure!(unique.len() == 100, "{at}: duplicate candidates");
            for (&i, s) in r.question_options.iter().zip(&strings) {
                ensure!(first_index[s] == i, "{at}: candidate {i} is not the representative of {s:?}");
            }
            ensure!(strings[r.gt_index] == target, "{at}: ground truth {:?} != {target:?}", strings[r.gt_index]);
            let group = |p: Provenance| -> HashSet<String> {
                strings.iter().zip(&r.provenance).filter(|(_, &q)| q == p).map(|(s, _)| s.clone()).collect()
            };
            ensure!(group(Provenance::Correct) == HashSet::from([target.clone()]), "{at}: correct group");
            ensure!(
                group(Provenance::Plausible) == want_plausible.iter().cloned().collect(),
                "{at}: plausible group differs from brute force"
            );
            ensure!(
                group(Provenance::Popular) == want_popular.iter().cloned().collect(),
                "{at}: popular group differs from brute force"
            );
            let random = group(Provenance::Random);
            ensure!(
                random.len() == 100 - taken.len() && random.iter().all(|s| !taken.contains(s)),
                "{at}: random fill overlaps earlier sources"
            );
        }
    }
    ensure!(rows == 270, "{rows} rows");
    Ok(format!("{rows} rounds match the brute-force rules; 100 unique candidates each; reruns byte-identical"))
}

fn shape_fixtures() -> Outcome {
    let fused = |task, variant| ModelConfig::new(task, variant, 1000).fusion_input();
    let vd = fused(Task::VisDial, Variant::QIH);
    let vq = fused(Task::VisDialQ, Variant::QIH);
    let q = fused(Task::VisDial, Variant::Q);
    ensure!(vd == 6400, "VisDial QIH L_S = {vd}");
    ensure!(vq == 6272, "VisDial-Q QIH L_S = {vq}");
    ensure!(q == 1024, "Q-only L_S = {q}");
    let hidden = ModelConfig::new(Task::VisDial, Variant::QIH, 1000).mlp_hidden();
    ensure!(hidden == [3200, 1600], "hidden sizes {hidden:?}");
    for task in [Task::VisDial, Task::VisDialQ] {
        let d = ModelDims::for_task(task);
        ensure!(d.history_len() == (d.t - 1) * 128, "{task:?} history length {}", d.history_len());
    }
    Ok("L_S 6400 / 6272 / 1024, hidden 3200/1600, history 1152 (T=10) and 1024 (T=9)".into())
}

fn best_val_mrr(family: Family, variant: Variant) -> Result<f64, String> {
    let train_split = synth(family, 100, 8, 31, 1);
    let val_split = synth(family, 30, 8, 32, 1001);
    let dims = ModelDims::compact(10, 16, 32, 16, 16);
    let vocab = vocab_of(&[&train_split.dataset, &val_split.dataset]);
    let tr = answer_examples(&train_split.dataset, &vocab, &dims);
    let va = answer_examples(&val_split.dataset, &vocab, &dims);
    let mut features = train_split.features;
    for (id, v) in val_split.features.iter() {
        ok(features.insert(id, v.to_vec()))?;
    }
    let mut tc = TrainConfig::new(Task::VisDial, variant);
    tc.dims = dims;
    tc.max_epochs = 10;
    tc.patience = 10;
    tc.seed = 7;
    let out = ok(train(&tr, &va, Some(&features), vocab.len(), &tc, |_| {}))?;
    Ok(out.log.iter().filter_map(|e| e.validation.map(|v| v.mrr)).fold(f64::NEG_INFINITY, f64::max))
}

fn context_ordering() -> Outcome {
    let qih = best_val_mrr(Family::HistoryCue, Variant::QIH)?;
    let qi_h = best_val_mrr(Family::HistoryCue, Variant::QI)?;
    let qi = best_val_mrr(Family::ImageCue, Variant::QI)?;
    let q = best_val_mrr(Family::ImageCue, Variant::Q)?;
    let detail = format!("history family QIH {qih:.3} vs QI {qi_h:.3}; image family QI {qi:.3} vs Q {q:.3}");
    ensure!(qih - qi_h >= 0.1 && qi - q >= 0.1, "{detail}");
    Ok(detail)
}

fn toy_players(ds: &RawDataset, features: &ImageFeatureStore) -> Result<(Checkpoint, Checkpoint), String> {
    let vocab = vocab_of(&[ds]);
    let glove = ok(toy_glove(ds.corpus(), 5, 1))?;
    let qdata = ok(build_qdataset(ds, &glove, 2))?;

    let mut qc = TrainConfig::new(Task::VisDialQ, Variant::QIH);
    qc.dims = ModelDims::compact(9, 16, 32, 16, 16);
    qc.max_epochs = 2;
    let q_ex = ok(visdialq_examples(&qdata, &vocab, &qc.dims))?;
    let q_model = ok(train(&q_ex, &[], Some(features), vocab.len(), &qc, |_| {}))?.model;

    let mut ac = TrainConfig::new(Task::VisDial, Variant::QIH);
    ac.dims = ModelDims::compact(10, 16, 32, 16, 16);
    ac.max_epochs = 2;
    let a_ex = answer_examples(ds, &vocab, &ac.dims);
    let a_model = ok(train(&a_ex, &[], Some(features), vocab.len(), &ac, |_| {}))?.model;
    Ok((ok(Checkpoint::new(q_model, vocab.clone(), qc.seed))?, ok(Checkpoint::new(a_model, vocab, ac.seed))?))
}

fn independent_audit(t: &Transcript) -> Result<(), String> {
    let mut asked: HashSet<String> = HashSet::new();
    for r in &t.rounds {
        let at = format!("image {} round {}", t.image_id, r.round);
        ensure!(asked.insert(detokenize(&tokenize(&r.question))), "{at}: repeated question");
        let chosen = r.question_pool[r.chosen_question].score;
        let better = r.question_pool.iter().filter(|s| s.score > chosen).count();
        ensure!(better < 10, "{at}: chosen question has {better} better-scored questions");
        ensure!(r.question == r.question_pool[r.chosen_question].text, "{at}: question text");
        let best = r.answer_pool.iter().map(|s| s.score).fold(f64::NEG_INFINITY, f64::max);
        ensure!(r.answer_pool[r.chosen_answer].score == best, "{at}: answer is not the argmax");
        ensure!(r.answer == r.answer_pool[r.chosen_answer].text, "{at}: answer text");
    }
    Ok(())
}

fn unroller_audit() -> Outcome {
    let split = synth(Family::Memorize, 30, 8, 41, 1);
    let (questioner, answerer) = toy_players(&split.dataset, &split.features)?;
    let players = Players { questioner: &questioner, answerer: &answerer };
    let spec = PoolSpec { seed: 5, ..PoolSpec::default() };
    let starts: Vec<DialogState> = split
        .dataset
        .data
        .dialogs
        .iter()
        .take(20)
        .map(|d| DialogState::from_dataset(&split.dataset, d.image_id, 0))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let run = || unroll_many(&starts, 10, &players, &split.dataset, &split.features, &spec);
    let first = ok(run())?;
    let second = ok(run())?;
    ensure!(first.len() == 20, "{} transcripts", first.len());
    for t in &first {
        ensure!(t.rounds.len() == 10, "image {}: {} rounds", t.image_id, t.rounds.len());
        audit(t)?;
        independent_audit(t)?;
        ensure!(ok(replay_matches(t, &players, &split.features))?, "image {}: replay differs", t.image_id);
    }
    let bytes = |ts: &[Transcript]| serde_json::to_vec(ts).unwrap();
    ensure!(bytes(&first) == bytes(&second), "two runs produced different transcripts");
    Ok("20 transcripts × 10 rounds pass audit, rescoring replay and rerun byte equality".into())
}

fn persistence() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let split = synth(Family::Memorize, 12, 6, 51, 1);
    let vocab = vocab_of(&[&split.dataset]);
    let mut tc = TrainConfig::new(Task::VisDial, Variant::QIH);
    tc.dims = ModelDims::compact(10, 8, 16, 8, 16);
    tc.max_epochs = 1;
    let ex = answer_examples(&split.dataset, &vocab, &tc.dims);
    let model = ok(train(&ex, &[], Some(&split.features), vocab.len(), &tc, |_| {}))?.model;
    let before = ok(evaluate(&model, &ex, Some(&split.features)))?;
    let ckpt = ok(Checkpoint::new(model, vocab, tc.seed))?;
    let p1 = dir.path().join("a.ckpt");
    let p2 = dir.path().join("b.ckpt");
    ok(ckpt.save(&p1))?;
    let loaded = ok(Checkpoint::load(&p1))?;
    ok(loaded.save(&p2))?;
    let (b1, b2) = (ok(std::fs::read(&p1))?, ok(std::fs::read(&p2))?);
    ensure!(b1 == b2, "checkpoint bytes changed across save→load→save");
    let after = ok(evaluate(&loaded.model, &ex, Some(&split.features)))?;
    ensure!(before.report == after.report && before.ranks == after.ranks, "metrics changed after reload");

    let big = synth(Family::Memorize, 30, 6, 52, 1);
    let glove = ok(toy_glove(big.dataset.corpus(), 5, 1))?;
    let q = ok(build_qdataset(&big.dataset, &glove, 3))?;
    let qp = dir.path().join("q.json");
    ok(q.save(&qp))?;
    let q2 = ok(QDataset::load(&qp))?;
    ensure!(q == q2, "VisDial-Q dataset changed across save→load");
    let qp2 = dir.path().join("q2.json");
    ok(q2.save(&qp2))?;
    ensure!(ok(std::fs::read(&qp))? == ok(std::fs::read(&qp2))?, "VisDial-Q file bytes changed");
    Ok(format!("{} checkpoint bytes stable; metrics identical ({}); q dataset round trip exact", b1.len(), after.report))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("gradient integrity", gradient_integrity),
        ("overfit sanity", overfit_sanity),
        ("loss formula fixture", loss_fixture),
        ("metric oracle", metric_oracle),
        ("visdial-q builder oracle", visdialq_oracle),
        ("architecture shape fixtures", shape_fixtures),
        ("context ordering", context_ordering),
        ("unroller audit", unroller_audit),
        ("persistence", persistence),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail}) [{secs:.1}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why}) [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
