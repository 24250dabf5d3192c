//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on failure.

mod support;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use cade_core::diagnostics::{
    directional_distribution, perturb_record, Direction, PerturbationScheme,
};
use cade_core::engine::{
    argmax, decide, decide_batch, AblationFlags, CandidateSet, ContextTest, Divergence,
    EngineConfig, HyperParams, ImageStream, PerView, Pillar, QuestionRecord, Task, Truth, ViewKind,
};
use cade_core::io::{read_records, write_records};
use cade_core::metrics::{delta_acc, interval_accuracy, mae, per_view_accuracy, ToleranceTable};
use cade_core::regression::resolve_value;
use cade_core::synthgen::{generate, GeneratorSpec};
use cade_core::tuner::{random_search, SearchOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use support::oracle::{self, Knobs};

type Check = fn() -> Verdict;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- fixtures

fn random_logits(rng: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-6.0..6.0)).collect()
}

/// Mixed 2/3-option MCQ and 10-digit regression records with continuous logits.
fn random_records(seed: u64, count: usize) -> Vec<QuestionRecord> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let kind = rng.gen_range(0..3);
            let n = [2, 3, 10][kind];
            let logits = PerView {
                q: random_logits(&mut rng, n),
                ctx: random_logits(&mut rng, n),
                img: random_logits(&mut rng, n),
                full: random_logits(&mut rng, n),
            };
            let (task, candidates, truth, completions) = if n == 10 {
                let tail = rng.gen_range(0..100) as f64 / 10.0;
                let completions: BTreeMap<String, f64> = (0..10)
                    .map(|d| (d.to_string(), d as f64 * 10.0 + tail))
                    .collect();
                (
                    Task::Regression,
                    CandidateSet::digits(),
                    Truth::Value(rng.gen_range(0.0..100.0)),
                    Some(completions),
                )
            } else {
                let c = CandidateSet::letters(n).unwrap();
                let t = c.label(rng.gen_range(0..n)).to_string();
                (Task::Mcq, c, Truth::Option(t), None)
            };
            QuestionRecord {
                id: format!("x{i:05}"),
                pillar: Pillar::ALL[i % 3],
                task,
                indicator: ["women bmi", "water index", "women edu"][i % 3].into(),
                context_test: ContextTest::ALL[i % 5],
                candidates,
                logits,
                truth,
                view_values: None,
                completions,
                provenance: None,
            }
        })
        .collect()
}

fn random_setting(rng: &mut ChaCha20Rng) -> (HyperParams, EngineConfig, Knobs) {
    let hp = HyperParams::new(
        rng.gen_range(0.05..0.99),
        rng.gen_range(0.0..7.0),
        rng.gen_range(0.0..7.0),
        rng.gen_range(0.0..7.0),
    )
    .unwrap();
    let js = rng.gen_bool(0.5);
    let stream = rng.gen_range(0..3u8);
    let f: [bool; 4] = [
        rng.gen_bool(0.8),
        rng.gen_bool(0.8),
        rng.gen_bool(0.8),
        rng.gen_bool(0.8),
    ];
    let cfg = EngineConfig {
        divergence: if js { Divergence::Js } else { Divergence::Kl },
        image_stream: [
            ImageStream::ImgOnly,
            ImageStream::FullOnly,
            ImageStream::FullPlusImg,
        ][stream as usize],
        flags: AblationFlags {
            confidence_gate: f[0],
            context_penalty: f[1],
            adaptive_disagreement: f[2],
            prior_penalty: f[3],
        },
        ..EngineConfig::default()
    };
    let knobs = Knobs {
        tau: hp.tau,
        alpha: hp.alpha,
        lambda_kl: hp.lambda_kl,
        beta: hp.beta,
        js,
        stream,
        gate: f[0],
        context: f[1],
        adaptive: f[2],
        prior: f[3],
    };
    (hp, cfg, knobs)
}

fn worked_record() -> QuestionRecord {
    QuestionRecord {
        id: "worked".into(),
        pillar: Pillar::P1,
        task: Task::Mcq,
        indicator: "under 5 mortality rate".into(),
        context_test: ContextTest::T1,
        candidates: CandidateSet::letters(3).unwrap(),
        logits: PerView {
            q: vec![0.0, 0.0, 1.5],
            ctx: vec![0.0, 1.0, 0.5],
            img: vec![1.2, 0.2, 0.0],
            full: vec![1.0, 0.5, 0.0],
        },
        truth: Truth::Option("A".into()),
        view_values: None,
        completions: None,
        provenance: None,
    }
}

fn imbalance_spec(seed: u64) -> GeneratorSpec {
    let mut spec = GeneratorSpec::demo();
    spec.img_fidelity = 0.9;
    spec.ctx_fidelity = 0.4;
    spec.fusion_ctx_weight = 0.9;
    spec.tasks = vec![Task::Mcq];
    // 3 pillars x 5 context tests x 1334 = 20,010 records
    spec.n_records = 1334;
    spec.seed = seed;
    spec
}

fn mcq_accuracy(records: &[QuestionRecord], chosen: impl Iterator<Item = usize>) -> f64 {
    let hits = records
        .iter()
        .zip(chosen)
        .filter(|(r, c)| r.truth_index() == Some(*c))
        .count();
    hits as f64 / records.len() as f64
}

// ---------------------------------------------------------------- criteria

fn oracle_equivalence() -> Verdict {
    let start = Instant::now();
    let records = random_records(101, 10_000);
    let mut rng = ChaCha20Rng::seed_from_u64(102);
    let mut choice_mismatch = 0;
    let mut worst = 0.0f64;
    let mut kinds = [0usize; 3];
    for r in &records {
        let (hp, cfg, knobs) = random_setting(&mut rng);
        let d = decide(r, &hp, &cfg).unwrap();
        let l = &r.logits;
        let o = oracle::decide(&l.q, &l.ctx, &l.img, &l.full, &knobs);
        kinds[match r.candidates.len() {
            2 => 0,
            3 => 1,
            _ => 2,
        }] += 1;
        if d.chosen_index != o.chosen || d.gated != o.gated {
            choice_mismatch += 1;
        }
        if d.scores.len() != o.scores.len() {
            choice_mismatch += 1;
            continue;
        }
        for (a, b) in d.scores.iter().zip(&o.scores) {
            worst = worst.max((a - b).abs());
        }
        worst = worst
            .max((d.alpha_i - o.alpha_i).abs())
            .max((d.divergence_d - o.d).abs())
            .max((d.confidence_m - o.m).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        choice_mismatch == 0 && worst <= 1e-9 && secs <= 10.0,
        format!(
            "10000 records (2-opt {}, 3-opt {}, digits {}): {choice_mismatch} choice mismatches, max |score diff| {worst:.2e}, {secs:.2}s",
            kinds[0], kinds[1], kinds[2]
        ),
    )
}

fn worked_instance() -> Verdict {
    let r = worked_record();
    let hp = HyperParams::new(0.9, 0.7, 2.0, 1.0).unwrap();
    let d = decide(&r, &hp, &EngineConfig::default()).unwrap();
    let l = &r.logits;
    let knobs = Knobs {
        tau: 0.9,
        alpha: 0.7,
        lambda_kl: 2.0,
        beta: 1.0,
        js: false,
        stream: 2,
        gate: true,
        context: true,
        adaptive: true,
        prior: true,
    };
    let o = oracle::decide(&l.q, &l.ctx, &l.img, &l.full, &knobs);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-3;
    let pass = d.chosen == "A"
        && !d.gated
        && close(d.confidence_m, o.m)
        && close(d.divergence_d, o.d)
        && close(d.alpha_i, o.alpha_i)
        && close(d.confidence_m, 0.5065)
        && close(d.divergence_d, 0.3345)
        && close(d.alpha_i, 1.168);
    verdict(
        pass,
        format!(
            "m={:.4} D={:.4} alpha_i={:.4} chosen={} (oracle m={:.4} D={:.4} alpha_i={:.4})",
            d.confidence_m, d.divergence_d, d.alpha_i, d.chosen, o.m, o.d, o.alpha_i
        ),
    )
}

fn gate_degeneracy() -> Verdict {
    let records = random_records(301, 10_000);
    let hp = HyperParams::new(0.05, 1.5, 3.0, 1.0).unwrap();
    let low_tau = decide_batch(&records, &hp, &EngineConfig::default()).unwrap();
    let off = decide_batch(
        &records,
        &hp,
        &EngineConfig::with_flags(AblationFlags::none()),
    )
    .unwrap();
    let mut gate_miss = 0;
    let mut off_miss = 0;
    for ((r, a), b) in records.iter().zip(&low_tau).zip(&off) {
        let base = argmax(&r.logits.full);
        if !(a.gated && a.chosen_index == base) {
            gate_miss += 1;
        }
        if b.chosen_index != base {
            off_miss += 1;
        }
    }
    verdict(
        gate_miss == 0 && off_miss == 0,
        format!("tau=0.05: {gate_miss}/10000 differ from Full argmax; all flags off: {off_miss}/10000 differ"),
    )
}

fn flag_lattice() -> Verdict {
    let records = random_records(401, 10_000);
    let mut rng = ChaCha20Rng::seed_from_u64(402);
    let mut q_sensitive = 0;
    let mut alpha_off = 0;
    for r in &records {
        let (hp, mut cfg, _) = random_setting(&mut rng);
        cfg.flags.prior_penalty = false;
        let before = decide(r, &hp, &cfg).unwrap();
        let mut other = r.clone();
        other.logits.q = random_logits(&mut rng, r.candidates.len());
        let after = decide(&other, &hp, &cfg).unwrap();
        if before != after {
            q_sensitive += 1;
        }

        let hp0 = HyperParams {
            lambda_kl: 0.0,
            ..hp
        };
        let mut cfg = EngineConfig::default();
        cfg.flags.confidence_gate = rng.gen_bool(0.5);
        if decide(r, &hp0, &cfg).unwrap().alpha_i != hp0.alpha {
            alpha_off += 1;
        }
    }
    verdict(
        q_sensitive == 0 && alpha_off == 0,
        format!("prior off, Q re-randomized: {q_sensitive}/10000 changed; lambda_kl=0: {alpha_off}/10000 with alpha_i != alpha"),
    )
}

fn planted_bias_recovery() -> Verdict {
    let start = Instant::now();
    let validation = generate(&imbalance_spec(20_240_611)).unwrap();
    let test = generate(&imbalance_spec(20_240_612)).unwrap();
    let opts = SearchOptions::for_task(Task::Mcq, 7);
    let trace = random_search(&validation, &opts).unwrap();
    let best = trace.best.params;
    let original = mcq_accuracy(&test, test.iter().map(|r| argmax(&r.logits.full)));
    let debiased = decide_batch(&test, &best, &opts.cfg).unwrap();
    let cade = mcq_accuracy(&test, debiased.iter().map(|d| d.chosen_index));
    let secs = start.elapsed().as_secs_f64();
    let pass = (original - 0.4).abs() <= 0.05 && cade - original >= 0.10 && secs <= 300.0;
    verdict(
        pass,
        format!(
            "N={}: Original {original:.4}, CADE {cade:.4} (gain {:+.4}) with tau={:.3} alpha={:.3} lambda_kl={:.3} beta={:.3}, {secs:.1}s",
            test.len(),
            cade - original,
            best.tau,
            best.alpha,
            best.lambda_kl,
            best.beta
        ),
    )
}

fn diagnostics_fidelity() -> Verdict {
    let mut spec = GeneratorSpec::demo();
    spec.tasks = vec![Task::Mcq];
    spec.n_records = 2000; // 5 context tests -> 10,000 per pillar
    let records = generate(&spec).unwrap();
    let dist = directional_distribution(&records, ViewKind::Q, true).unwrap();
    let mut worst = 0.0f64;
    let mut counts_ok = true;
    for (pillar, prior) in &spec.q_prior {
        let f = &dist[pillar.as_str()];
        counts_ok &= f.count == 10_000;
        for (d, want) in Direction::ALL.iter().zip(prior) {
            worst = worst.max((f.get(*d) - want).abs());
        }
    }

    let imbalance = generate(&imbalance_spec(99)).unwrap();
    let delta = delta_acc(&imbalance).unwrap();
    let views = per_view_accuracy(&imbalance).unwrap();
    let max_delta = delta.values().fold(0.0f64, |m, v| m.max(v.abs()));
    let gap = views[&ViewKind::Img] - views[&ViewKind::Ctx];
    verdict(
        counts_ok && worst <= 0.02 && max_delta <= 0.06 && gap >= 0.4,
        format!(
            "max |Q-direction - q_prior| {worst:.4}; max |dAcc| {max_delta:.4}; IMG-CTX gap {gap:.4}"
        ),
    )
}

fn table_tolerance(indicator: &str) -> f64 {
    match indicator {
        "under 5 mortality rate" => 5.0,
        "women bmi" => 1.0,
        "asset index" | "sanitation index" | "water index" => 0.75,
        "women edu" => 1.5,
        other => panic!("unexpected indicator {other}"),
    }
}

fn metrics_correctness() -> Verdict {
    let mut spec = GeneratorSpec::demo();
    spec.tasks = vec![Task::Regression];
    spec.n_records = 67; // 3 x 5 x 67 = 1,005
    let records: Vec<QuestionRecord> = generate(&spec).unwrap().into_iter().take(1000).collect();
    let hp = HyperParams::new(0.6, 2.0, 1.0, 1.0).unwrap();
    let decisions = decide_batch(&records, &hp, &EngineConfig::default()).unwrap();
    let preds: Vec<f64> = records
        .iter()
        .zip(&decisions)
        .map(|(r, d)| resolve_value(r, &d.chosen).unwrap().value)
        .collect();
    let truths: Vec<f64> = records.iter().map(|r| r.truth_value().unwrap()).collect();
    let indicators: Vec<&str> = records.iter().map(|r| r.indicator.as_str()).collect();

    let table = ToleranceTable::default();
    let mut discrepancies = 0;
    for i in 0..records.len() {
        let brute = (preds[i] - truths[i]).abs() <= table_tolerance(indicators[i]);
        let lib = interval_accuracy(&preds[i..=i], &truths[i..=i], &indicators[i..=i], &table)
            .unwrap()
            == 1.0;
        if brute != lib {
            discrepancies += 1;
        }
    }
    let brute_rate = (0..records.len())
        .filter(|&i| (preds[i] - truths[i]).abs() <= table_tolerance(indicators[i]))
        .count() as f64
        / records.len() as f64;
    let lib_rate = interval_accuracy(&preds, &truths, &indicators, &table).unwrap();
    let direct: f64 = preds
        .iter()
        .zip(&truths)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / preds.len() as f64;
    let mae_diff = (mae(&preds, &truths).unwrap() - direct).abs();
    verdict(
        discrepancies == 0 && brute_rate == lib_rate && mae_diff <= 1e-12,
        format!(
            "{} records: {discrepancies} interval discrepancies (rate {lib_rate:.4}); |MAE - direct| {mae_diff:.1e}",
            records.len()
        ),
    )
}

fn tuner_protocol() -> Verdict {
    let mut spec = GeneratorSpec::demo();
    spec.tasks = vec![Task::Mcq];
    spec.n_records = 100;
    let validation = generate(&spec).unwrap();
    let opts = SearchOptions::for_task(Task::Mcq, 2024);
    let bytes = |opts: &SearchOptions| {
        let trace = random_search(&validation, opts).unwrap();
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf).unwrap();
        buf.extend_from_slice(trace.summary_json().as_bytes());
        (trace, buf)
    };
    let (trace, a) = bytes(&opts);
    let (_, b) = bytes(&opts);

    let inside = |x: f64, lo: f64, hi: f64| lo <= x && x <= hi;
    let outside = trace
        .trials
        .iter()
        .filter(|t| {
            let p = &t.params;
            !(inside(p.alpha, 0.5, 2.0)
                && inside(p.lambda_kl, 0.0, 5.0)
                && inside(p.beta, 0.0, 1.5)
                && inside(p.tau, 0.65, 0.99))
        })
        .count();
    let mut reg = SearchOptions::for_task(Task::Regression, 1);
    reg.samples = 10_000;
    let mut sampler = cade_core::tuner::ParamSampler::new(1);
    let reg_outside = (0..reg.samples)
        .map(|_| cade_core::tuner::sample_params(&reg.ranges, &mut sampler))
        .filter(|p| {
            !(inside(p.alpha, 0.0, 7.0)
                && inside(p.lambda_kl, 0.0, 7.0)
                && inside(p.beta, 0.0, 7.0)
                && inside(p.tau, 0.25, 0.99))
        })
        .count();
    let best_ok = trace
        .top_k
        .iter()
        .all(|f| trace.best.full_objective >= f.full_objective);
    verdict(
        a == b
            && outside == 0
            && reg_outside == 0
            && best_ok
            && trace.trials.len() == 10_000
            && trace.top_k.len() == 100,
        format!(
            "identical bytes: {} ({} bytes); out-of-range samples: mcq {outside}, regression {reg_outside}; best {:.4} >= all top-100: {best_ok}",
            a == b,
            a.len(),
            trace.best.full_objective
        ),
    )
}

fn perturbation_bookkeeping() -> Verdict {
    let records: Vec<QuestionRecord> = random_records(901, 3000)
        .into_iter()
        .filter(|r| r.task == Task::Mcq)
        .take(1000)
        .collect();
    let hp = HyperParams::new(0.7, 1.0, 2.0, 0.5).unwrap();
    let cfg = EngineConfig::default();
    let mut failures = 0;
    let mut token_changes = 0;
    for (i, r) in records.iter().enumerate() {
        let base_full = argmax(&r.logits.full);
        let base = decide(r, &hp, &cfg).unwrap().chosen_index;
        for scheme in [
            PerturbationScheme::ReverseOrder,
            PerturbationScheme::RandomOrder { seed: i as u64 },
        ] {
            let (p, original) = perturb_record(r, &scheme).unwrap();
            let full = argmax(&p.logits.full);
            let cade = decide(&p, &hp, &cfg).unwrap().chosen_index;
            if original[full] != base_full || original[cade] != base {
                failures += 1;
            }
        }
        for scheme in [
            PerturbationScheme::LowercaseToken,
            PerturbationScheme::NumericToken,
        ] {
            let (p, _) = perturb_record(r, &scheme).unwrap();
            if decide(&p, &hp, &cfg).unwrap().chosen_index != base {
                token_changes += 1;
            }
        }
    }
    verdict(
        records.len() == 1000 && failures == 0 && token_changes == 0,
        format!("{} records: {failures} inverse-permutation failures; {token_changes} token-scheme index changes", records.len()),
    )
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_cade"))
        .args(args)
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn io_round_trip() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = GeneratorSpec::demo();
    spec.n_records = 334; // 3 x 2 x 5 x 334 = 10,020
    let records: Vec<QuestionRecord> = generate(&spec).unwrap().into_iter().take(10_000).collect();
    let first = dir.path().join("first.jsonl");
    let second = dir.path().join("second.jsonl");
    write_records(&first, &records).unwrap();
    let back = read_records(&first).unwrap();
    write_records(&second, &back).unwrap();
    let again = read_records(&second).unwrap();
    let fields_equal = back == records && again == records;
    let bytes_equal = std::fs::read(&first).unwrap() == std::fs::read(&second).unwrap();

    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let mut cli_ok = run_cli(&[
        "generate",
        "--out",
        &p("gen.jsonl"),
        "--n-records",
        "40",
        "--seed",
        "5",
    ]);
    for run in ["a", "b"] {
        cli_ok &= run_cli(&[
            "debias",
            "--in",
            &p("gen.jsonl"),
            "--out",
            &p(&format!("{run}.dec.jsonl")),
            "--alpha",
            "1.2",
            "--lambda-kl",
            "2",
            "--beta",
            "0.8",
            "--tau",
            "0.8",
        ]);
        cli_ok &= run_cli(&[
            "evaluate",
            "--in",
            &p("gen.jsonl"),
            "--decisions",
            &p(&format!("{run}.dec.jsonl")),
            "--report",
            &p(&format!("{run}.report.json")),
            "--csv",
            &p(&format!("{run}.report.csv")),
        ]);
    }
    let same = |a: &str, b: &str| {
        let read = |n: &str| std::fs::read(dir.path().join(n)).ok();
        matches!((read(a), read(b)), (Some(x), Some(y)) if x == y && !x.is_empty())
    };
    let cli_identical = cli_ok
        && same("a.dec.jsonl", "b.dec.jsonl")
        && same("a.report.json", "b.report.json")
        && same("a.report.csv", "b.report.csv")
        && Path::new(&p("a.dec.jsonl.manifest.json")).exists();
    verdict(
        records.len() == 10_000 && fields_equal && bytes_equal && cli_identical,
        format!(
            "10000 records field-identical: {fields_equal}, byte-identical rewrite: {bytes_equal}; two CLI runs byte-identical: {cli_identical}"
        ),
    )
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("worked instance", worked_instance),
        ("gate degeneracy", gate_degeneracy),
        ("flag lattice", flag_lattice),
        ("planted-bias recovery", planted_bias_recovery),
        ("diagnostics fidelity", diagnostics_fidelity),
        ("metrics correctness", metrics_correctness),
        ("tuner protocol", tuner_protocol),
        ("perturbation bookkeeping", perturbation_bookkeeping),
        ("I/O round trip", io_round_trip),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let v = check();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "[{tag}] {:>2}. {name}: {} [{:.1}s]",
            i + 1,
            v.detail,
            t.elapsed().as_secs_f64()
        );
        failed += usize::from(!v.pass);
    }
    let total: Duration = start.elapsed();
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        criteria.len() - failed,
        total.as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
