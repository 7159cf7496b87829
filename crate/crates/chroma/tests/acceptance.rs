//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Needs the raw MNIST IDX files (see `scripts/fetch_data.sh`). Set
//! `CHROMA_FULL_SCALE=1` to also run the 50-epoch full-scale checks, which
//! take many hours on one core.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use chroma::idx::load_source;
use chroma::plan::{run_plan, ExperimentPlan, Outcome, Scale, FULL_EPOCHS};
use chroma_core::analysis::{confidence_report, mean_incorrect_confidence, EvalReport};
use chroma_core::datagen::{
    active_channels, build_dataset, chi_square, pad_to_32, BandLayout, ColorScheme, IdxFile, RawSplit, Source, Split,
    CLASSES, PLANE,
};
use chroma_core::layers::audit::audit_layers;
use chroma_core::layers::{CustomDropoutConfig, NormKind, EQUAL_GRAY_WEIGHTS};
use chroma_core::model::InputStage;
use chroma_core::train::evaluate;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const SEED: u64 = 0;
const GRAD_TOLERANCE: f64 = 1e-3;
const GRAD_SEEDS: u64 = 20;
const SIGNIFICANCE: f64 = 0.01;
const CONFIDENCE_TOLERANCE: f64 = 1e-9;
const REFERENCE_TOLERANCE: f64 = 0.03;
/// Full-scale reference accuracies: rows MM1..MM3, columns MD1..MD3.
const REFERENCE_MATRIX: [[f64; 3]; 3] = [[0.99, 0.40, 0.21], [0.98, 0.99, 0.97], [0.98, 0.99, 0.99]];

#[derive(Default)]
struct Tally {
    failed: usize,
}

impl Tally {
    fn check(&mut self, n: u32, pass: bool, detail: String) {
        println!("{} criterion {n}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.failed += usize::from(!pass);
    }

    fn skip(&self, n: u32, detail: &str) {
        println!("SKIP criterion {n}: {detail}");
    }
}

fn log(line: &str) {
    println!("    {line}");
}

fn acc(report: &EvalReport, model: &str, dataset: &str) -> f64 {
    report.accuracy(model, dataset).unwrap_or_else(|| panic!("no accuracy for {model} on {dataset}"))
}

fn gradients(t: &mut Tally) {
    let start = Instant::now();
    let audits = audit_layers(GRAD_SEEDS).expect("gradient audit runs");
    let secs = start.elapsed().as_secs_f64();
    let worst = audits.iter().map(|a| a.worst_error).fold(0.0, f64::max);
    let offenders: Vec<&str> = audits.iter().filter(|a| a.worst_error >= GRAD_TOLERANCE).map(|a| a.layer.name()).collect();
    for a in &audits {
        log(&format!("{:<24} {:.3e}", a.layer.name(), a.worst_error));
    }
    t.check(
        1,
        offenders.is_empty() && secs < 60.0,
        format!(
            "{} layers x {GRAD_SEEDS} seeds, worst relative error {worst:.3e} (< {GRAD_TOLERANCE:e}), {secs:.1}s (< 60s){}",
            audits.len(),
            if offenders.is_empty() { String::new() } else { format!(", failing: {offenders:?}") }
        ),
    );
}

fn dataset_invariants(t: &mut Tally, train: &RawSplit, test: &RawSplit) {
    let start = Instant::now();
    let mut preserved = true;
    let mut images = 0usize;
    let mut deterministic = true;
    let mut md2_table = vec![vec![0u64; 3]; CLASSES];
    for scheme in ColorScheme::ALL {
        for (raw, split) in [(train, Split::Train), (train, Split::Val), (test, Split::Test)] {
            let ds = build_dataset(Source::Mnist, raw, split, scheme, SEED, BandLayout::Rows).expect("build");
            let offset = split.range(raw.len()).expect("range").start;
            for i in 0..ds.len() {
                let padded = pad_to_32(raw.image(offset + i)).expect("28x28");
                let img = ds.image(i);
                for p in 0..PLANE {
                    let sum = img[p] as u16 + img[PLANE + p] as u16 + img[2 * PLANE + p] as u16;
                    preserved &= sum == padded[p] as u16;
                }
                if scheme == ColorScheme::RandomSingleChannel && split == Split::Train {
                    let on = active_channels(img);
                    if let Some(c) = on.iter().position(|&b| b) {
                        md2_table[ds.labels[i] as usize][c] += 1;
                    }
                }
            }
            images += ds.len();
            let again = build_dataset(Source::Mnist, raw, split, scheme, SEED, BandLayout::Rows).expect("build");
            deterministic &= again == ds;
        }
    }
    let (stat, dof) = chi_square(&md2_table).expect("table");
    let p = ChiSquared::new(dof as f64).expect("dof").sf(stat);
    let secs = start.elapsed().as_secs_f64();
    t.check(
        2,
        preserved && deterministic && p > SIGNIFICANCE && images == 3 * 70_000 && secs < 120.0,
        format!(
            "{images} images, intensity preserved {preserved}, MD2 channel x label chi2 {stat:.2} (dof {dof}) p {p:.3} (> {SIGNIFICANCE}), regeneration identical {deterministic}, {secs:.1}s (< 120s)"
        ),
    );
}

fn desk_plan() -> ExperimentPlan {
    ExperimentPlan { seed: SEED, scale: Scale::desk(), ..ExperimentPlan::default() }
}

fn run(plan: &ExperimentPlan, data: &Path, out: &Path) -> (Outcome, f64) {
    let start = Instant::now();
    let outcome = run_plan(plan, data, out, 1, &log).expect("experiment runs");
    (outcome, start.elapsed().as_secs_f64())
}

fn trend(t: &mut Tally, r: &EvalReport, secs: f64) {
    let (m1d1, m1d2, m1d3) = (acc(r, "MM1", "MD1"), acc(r, "MM1", "MD2"), acc(r, "MM1", "MD3"));
    let (m2d2, m3d3) = (acc(r, "MM2", "MD2"), acc(r, "MM3", "MD3"));
    let checks = [
        (m1d1 >= 0.95, format!("acc(MM1,MD1) {m1d1:.4} >= 0.95")),
        (m1d3 <= 0.60, format!("acc(MM1,MD3) {m1d3:.4} <= 0.60")),
        (m2d2 >= 0.95, format!("acc(MM2,MD2) {m2d2:.4} >= 0.95")),
        (m3d3 >= 0.90, format!("acc(MM3,MD3) {m3d3:.4} >= 0.90")),
        (m1d2 - m1d3 >= 0.05, format!("acc(MM1,MD2) - acc(MM1,MD3) {:.4} >= 0.05", m1d2 - m1d3)),
        (secs < 1800.0, format!("{secs:.0}s < 1800s")),
    ];
    print_matrix(r);
    let failing: Vec<&String> = checks.iter().filter(|(ok, _)| !ok).map(|(_, s)| s).collect();
    let all: Vec<&str> = checks.iter().map(|(_, s)| s.as_str()).collect();
    t.check(
        3,
        failing.is_empty(),
        format!("{}{}", all.join("; "), if failing.is_empty() { String::new() } else { format!(" | failing: {failing:?}") }),
    );
}

fn print_matrix(r: &EvalReport) {
    let mut rows: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for e in &r.matrix {
        rows.entry(&e.model).or_default().push(format!("{} {:.4}", e.dataset, e.accuracy));
    }
    for (m, cells) in rows {
        log(&format!("{m:<14} {}", cells.join("  ")));
    }
}

fn norm_ordering(t: &mut Tally, baseline: &EvalReport, variants: &EvalReport, secs: f64) {
    let bn = acc(baseline, "MM1", "MD3");
    let ln = acc(variants, "MM1-layer", "MD3");
    let inst = acc(variants, "MM1-instance", "MD3");
    print_matrix(variants);
    t.check(
        4,
        ln >= bn + 0.10 && inst >= bn && secs < 2700.0,
        format!(
            "MD3: LN {ln:.4} >= BN {bn:.4} + 0.10 ({}); IN {inst:.4} >= BN {bn:.4} ({}); {secs:.0}s < 2700s",
            ln >= bn + 0.10,
            inst >= bn
        ),
    );
}

fn shape_bias(t: &mut Tally, baseline: &EvalReport, gray: &EvalReport) {
    let (b1, b3) = (acc(baseline, "MM1", "MD1"), acc(baseline, "MM1", "MD3"));
    let g3 = acc(gray, "MM1-gray4", "MD3");
    let gap = b1 - b3;
    let closed = g3 - b3;
    print_matrix(gray);
    t.check(
        5,
        g3 >= 0.85 && closed >= 0.5 * gap,
        format!(
            "acc(gray4,MD3) {g3:.4} >= 0.85 ({}); MD3 gain {closed:.4} >= half the baseline gap {gap:.4}/2 = {:.4} ({})",
            g3 >= 0.85,
            0.5 * gap,
            closed >= 0.5 * gap
        ),
    );
}

fn confidence_fidelity(t: &mut Tally, outcome: &Outcome, data: &Path) {
    let raw = load_source(data, Source::Mnist, IdxFile::Test).expect("test IDX");
    let mut worst = 0.0f64;
    let mut pairs = 0;
    let mut matched = true;
    for (model_id, snap) in &outcome.snapshots {
        for scheme in ColorScheme::ALL {
            let ds = build_dataset(Source::Mnist, &raw, Split::Test, scheme, SEED, BandLayout::Rows).expect("build");
            let dataset_id = chroma_core::datagen::dataset_id(Source::Mnist, scheme);
            let eval = evaluate(snap, &ds).expect("evaluate");
            let entries: Vec<_> =
                outcome.report.confidence.iter().filter(|e| &e.model == model_id && e.dataset == dataset_id).collect();
            matched &= entries.iter().map(|e| (*e).clone()).collect::<Vec<_>>()
                == confidence_report(model_id, &dataset_id, &eval.predictions);
            let mut sums: BTreeMap<(u8, bool), (f64, usize)> = BTreeMap::new();
            for p in &eval.predictions {
                let s = sums.entry((p.label, p.correct())).or_default();
                s.0 += p.max_prob;
                s.1 += 1;
            }
            for e in entries {
                for (correct, reported) in [(true, e.correct), (false, e.incorrect)] {
                    match (sums.get(&(e.class, correct)), reported) {
                        (Some(&(s, n)), Some(v)) => worst = worst.max((s / n as f64 - v).abs()),
                        (None, None) => {}
                        _ => matched = false,
                    }
                }
            }
            pairs += 1;
        }
    }
    let md2 = mean_incorrect_confidence(&outcome.report.confidence, "MM1", "MD2").unwrap_or(f64::NAN);
    let md3 = mean_incorrect_confidence(&outcome.report.confidence, "MM1", "MD3").unwrap_or(f64::NAN);
    t.check(
        7,
        matched && worst <= CONFIDENCE_TOLERANCE,
        format!(
            "{pairs} (model, dataset) pairs, max |report - brute force| {worst:.2e} (<= {CONFIDENCE_TOLERANCE:e}), buckets match {matched}; desk MM1 incorrect mean confidence MD2 {md2:.4} MD3 {md3:.4} (full-scale threshold 0.90 checked only with CHROMA_FULL_SCALE=1)"
        ),
    );
}

fn full_scale(t: &mut Tally, data: &Path, out: &Path) {
    let plan = ExperimentPlan { seed: SEED, scale: Scale::Full { epochs: FULL_EPOCHS }, ..ExperimentPlan::default() };
    let (main, _) = run(&plan, data, &out.join("full-main"));
    let norms = ExperimentPlan {
        schemes: vec![ColorScheme::GreenOnly],
        norms: vec![Some(NormKind::Layer), Some(NormKind::Instance)],
        ..plan.clone()
    };
    let (variants, _) = run(&norms, data, &out.join("full-norms"));
    let r = &main.report;
    let mut worst = 0.0f64;
    for (i, m) in ["MM1", "MM2", "MM3"].iter().enumerate() {
        for (j, d) in ["MD1", "MD2", "MD3"].iter().enumerate() {
            worst = worst.max((acc(r, m, d) - REFERENCE_MATRIX[i][j]).abs());
        }
    }
    print_matrix(r);
    print_matrix(&variants.report);
    let v = &variants.report;
    let ordered = ["MD2", "MD3"]
        .iter()
        .all(|d| acc(v, "MM1-layer", d) > acc(v, "MM1-instance", d) && acc(v, "MM1-instance", d) > acc(r, "MM1", d));
    t.check(
        6,
        worst <= REFERENCE_TOLERANCE && ordered,
        format!("reference matrix max deviation {worst:.4} (<= {REFERENCE_TOLERANCE}); LN > IN > BN on MD2 and MD3 {ordered}"),
    );
    let c = &main.report.confidence;
    let md2 = mean_incorrect_confidence(c, "MM1", "MD2").unwrap_or(f64::NAN);
    let md3 = mean_incorrect_confidence(c, "MM1", "MD3").unwrap_or(f64::NAN);
    t.check(
        7,
        md2 > 0.90 && md3 > 0.90,
        format!("full-scale MM1 incorrect mean confidence MD2 {md2:.4} MD3 {md3:.4} (> 0.90)"),
    );
}

fn determinism(t: &mut Tally, data: &Path, out: &Path) {
    let run = |name: &str| {
        let dir = out.join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_chroma"))
            .args([
                "reproduce", "--train-subset", "500", "--val-subset", "200", "--test-subset", "500", "--epochs", "2",
                "--seed", "3", "--jobs", "1", "--out",
            ])
            .arg(&dir)
            .arg("--data-dir")
            .arg(data)
            .output()
            .expect("spawn chroma");
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read(dir.join("report.json")).expect("report written")
    };
    let (a, b) = (run("det-a"), run("det-b"));
    t.check(8, a == b, format!("two `reproduce` runs emit identical report.json ({} bytes): {}", a.len(), a == b));
}

fn main() -> ExitCode {
    let mut t = Tally::default();
    gradients(&mut t);

    let Some(data) = common::source_dir(Source::Mnist) else {
        for n in 2..=8 {
            t.check(n, false, String::from("MNIST IDX files missing; run scripts/fetch_data.sh"));
        }
        return ExitCode::FAILURE;
    };
    let train = load_source(&data, Source::Mnist, IdxFile::Train).expect("train IDX");
    let test = load_source(&data, Source::Mnist, IdxFile::Test).expect("test IDX");
    dataset_invariants(&mut t, &train, &test);
    drop((train, test));

    let work = tempfile::tempdir().expect("scratch dir");
    let (baseline, secs) = run(&desk_plan(), &data, &work.path().join("desk-main"));
    trend(&mut t, &baseline.report, secs);

    let (norms, norm_secs) = run(
        &ExperimentPlan {
            schemes: vec![ColorScheme::GreenOnly],
            norms: vec![Some(NormKind::Layer), Some(NormKind::Instance)],
            ..desk_plan()
        },
        &data,
        &work.path().join("desk-norms"),
    );
    // The batch-norm MD1 model is shared with criterion 3; count a third of its run.
    norm_ordering(&mut t, &baseline.report, &norms.report, norm_secs + secs / 3.0);

    let (gray, _) = run(
        &ExperimentPlan {
            schemes: vec![ColorScheme::GreenOnly],
            input_stage: InputStage::Gray4(CustomDropoutConfig { prob: 0.5, gray_weights: EQUAL_GRAY_WEIGHTS, per_sample: false }),
            ..desk_plan()
        },
        &data,
        &work.path().join("desk-gray"),
    );
    shape_bias(&mut t, &baseline.report, &gray.report);

    if std::env::var_os("CHROMA_FULL_SCALE").is_some_and(|v| v == "1") {
        full_scale(&mut t, &data, work.path());
    } else {
        t.skip(6, "full-scale 50-epoch reproduction is optional; set CHROMA_FULL_SCALE=1 to run it");
    }
    confidence_fidelity(&mut t, &baseline, &data);
    determinism(&mut t, &data, work.path());

    if t.failed == 0 {
        println!("acceptance: all gating criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criterion check(s) failed", t.failed);
        ExitCode::FAILURE
    }
}
