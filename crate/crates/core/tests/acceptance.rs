//! One line per acceptance criterion, then a single assertion over all of them.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::time::{Duration, Instant};

use cbdkit::harness::{run_audit, AuditConfig, AuditReport, CheckRecord, CheckStatus};

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn config(suites: &[&str], trials: usize) -> AuditConfig {
    AuditConfig {
        trials,
        d: 1,
        level: 4,
        n: 3,
        suites: suites.iter().map(|s| s.to_string()).collect(),
        ..AuditConfig::default()
    }
}

fn timed(cfg: &AuditConfig) -> (AuditReport, Duration) {
    let start = Instant::now();
    let report = run_audit(cfg).expect("audit runs");
    (report, start.elapsed())
}

fn record<'a>(report: &'a AuditReport, name: &str) -> &'a CheckRecord {
    report.checks.iter().find(|c| c.name == name).unwrap_or_else(|| panic!("check {name} missing from report"))
}

/// An exact check passes when every sample is within `tol` and the tolerance in force is `tol`.
fn exact_ok(rec: &CheckRecord, tol: f64, samples: usize, notes: &mut Vec<String>) -> bool {
    let ok = rec.status == CheckStatus::Exact && rec.passed && rec.tolerance == Some(tol) && rec.samples >= samples;
    notes.push(format!("{} worst {:.3e} (tol {:e}, n={})", rec.name, rec.value, tol, rec.samples));
    ok
}

fn ratio_ok(rec: &CheckRecord, notes: &mut Vec<String>) -> bool {
    let (hi, lo) = (rec.max_ratio.unwrap_or(f64::NAN), rec.min_ratio.unwrap_or(f64::NAN));
    notes.push(format!("{} in [{:.4e}, {:.4e}] argmax seed {}", rec.name, lo, hi, rec.argmax_seed));
    rec.status == CheckStatus::Ratio && rec.passed && hi.is_finite() && lo.is_finite() && lo > 0.0
}

fn finish(name: &'static str, ok: bool, elapsed: Duration, limit: Duration, mut notes: Vec<String>) -> Outcome {
    let in_time = elapsed < limit;
    notes.push(format!("{:.2} s (limit {} s)", elapsed.as_secs_f64(), limit.as_secs()));
    Outcome { name, pass: ok && in_time, detail: notes.join("; ") }
}

fn cancellation() -> Outcome {
    // 50 trials x 4 = 200 matrix draws, each exhaustive over θ ⊆ {1,2,3,4}
    let (rep, t) = timed(&config(&["cancellation"], 50));
    let mut notes = Vec::new();
    let ok = exact_ok(record(&rep, "cancellation"), 1e-10, 200, &mut notes);
    finish("cancellation identity", ok, t, Duration::from_secs(5), notes)
}

fn mean_insertion_and_expansion() -> Outcome {
    let (rep, t) = timed(&config(&["mean_insertion", "expansion"], 50));
    let mut notes = Vec::new();
    let mut ok = exact_ok(record(&rep, "mean_insertion"), 1e-10, 50, &mut notes);
    ok &= exact_ok(record(&rep, "expansion"), 1e-10, 50, &mut notes);
    ok &= exact_ok(record(&rep, "psi_factorization"), 1e-10, 50, &mut notes);
    finish("mean insertion and expansion", ok, t, Duration::from_secs(20), notes)
}

fn phi() -> Outcome {
    let (rep, t) = timed(&config(&["phi"], 50));
    let mut notes = Vec::new();
    let mut ok = true;
    for name in ["phi_inverse", "phi_top_right", "phi_binomial"] {
        ok &= exact_ok(record(&rep, name), 1e-9, 50, &mut notes);
    }
    finish("Φ inverse, top-right block, binomial blocks", ok, t, Duration::from_secs(10), notes)
}

fn certificates() -> Outcome {
    let (rep, t) = timed(&config(&["certificates"], 50));
    let mut notes = Vec::new();
    let mut ok = exact_ok(record(&rep, "certificate_verify"), 0.0, 50, &mut notes);
    ok &= exact_ok(record(&rep, "commutator_domination"), 1e-10, 50, &mut notes);
    ok &= exact_ok(record(&rep, "diagonal_preservation"), 0.0, 50, &mut notes);
    ok &= exact_ok(record(&rep, "builder_verify"), 0.0, 50, &mut notes);
    finish("constructive domination certificates", ok, t, Duration::from_secs(30), notes)
}

fn conjugation() -> Outcome {
    let (rep, t) = timed(&config(&["conjugation"], 50));
    let mut notes = Vec::new();
    let mut ok = exact_ok(record(&rep, "ap_conjugation_invariance"), 1e-8, 50, &mut notes);
    ok &= ratio_ok(record(&rep, "localized_reducing_ratio"), &mut notes);
    finish("A_p conjugation invariance and localized reducing band", ok, t, Duration::from_secs(60), notes)
}

fn lemma_a() -> Outcome {
    let (rep, t) = timed(&config(&["lemma_a"], 50));
    let mut notes = Vec::new();
    let ok = exact_ok(record(&rep, "lemma_a"), 1e-10, 50, &mut notes);
    finish("sparse form bound with explicit constant", ok, t, Duration::from_secs(60), notes)
}

fn sub_duality() -> Outcome {
    let (rep, t) = timed(&config(&["sub_duality"], 50));
    let mut notes = Vec::new();
    let mut ok = exact_ok(record(&rep, "sub1_duality"), 1e-10, 50, &mut notes);
    ok &= exact_ok(record(&rep, "sub2_duality"), 1e-10, 50, &mut notes);
    finish("BMO_1 / BMO*_2 duality equalities", ok, t, Duration::from_secs(60), notes)
}

fn ratio_audits() -> Outcome {
    let (rep, t) = timed(&config(&["ratio"], 50));
    let mut notes = Vec::new();
    let mut ok = true;
    for rec in &rep.checks {
        ok &= match rec.status {
            CheckStatus::Ratio => ratio_ok(rec, &mut notes),
            CheckStatus::Exact => {
                let tol = match rec.name.as_str() {
                    "ap_monotonicity" => 1e-10,
                    "orlicz_holder" => 1e-9,
                    other => panic!("unexpected hard check {other} in the ratio group"),
                };
                exact_ok(rec, tol, 50, &mut notes)
            }
        };
    }
    let expected = [
        "red_over_red_star",
        "red_star_over_red",
        "tilde_over_sub_products",
        "tilde_over_sub_products_exp1",
        "jn_j1_over_j",
        "jn_j2_over_j",
        "jn_tilde_over_j",
        "jn_tilde2_over_j",
        "bloom_ratio",
        "reverse_holder",
        "ap_monotonicity",
        "orlicz_holder",
    ];
    for name in expected {
        ok &= rep.checks.iter().any(|c| c.name == name);
    }
    finish("ratio audits", ok, t, Duration::from_secs(300), notes)
}

fn membership() -> Outcome {
    let (rep, t) = timed(&config(&["membership"], 50));
    let mut notes = Vec::new();
    let agree = record(&rep, "membership_agreement");
    let mut ok = exact_ok(agree, 0.0, 200, &mut notes) && agree.samples == 200;
    ok &= exact_ok(record(&rep, "membership_nesting"), 1e-8, 200, &mut notes);
    finish("convex-body membership triple agreement", ok, t, Duration::from_secs(60), notes)
}

#[test]
fn acceptance_criteria() {
    let outcomes = [
        cancellation(),
        mean_insertion_and_expansion(),
        phi(),
        certificates(),
        conjugation(),
        lemma_a(),
        sub_duality(),
        ratio_audits(),
        membership(),
    ];
    for o in &outcomes {
        println!("{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass).map(|o| o.name).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
