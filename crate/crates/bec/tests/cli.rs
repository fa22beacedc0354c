use std::path::PathBuf;
use std::process::Command;

use bec::Report;

fn fixture(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "fixtures", name].iter().collect();
    p.display().to_string()
}

fn bec(args: &[&str]) -> (i32, Report, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_bec"))
        .args(args)
        .env_remove("BEC_LOG")
        .output()
        .expect("spawn bec");
    let stdout = String::from_utf8(out.stdout).unwrap();
    let code = out.status.code().unwrap();
    let report = Report::parse_kv(&stdout).unwrap_or_else(|e| panic!("{e}: {stdout}"));
    (code, report, stdout)
}

fn num(r: &Report, key: &str) -> f64 {
    r.get(key).unwrap_or_else(|| panic!("missing {key}")).parse().unwrap()
}

#[test]
fn envelope_worked_example() {
    let f = fixture("ex51.blp");
    let (code, r, _) = bec(&["envelope", &f, "--point", "0,-1", "--direction", "1,1", "--regime", "wc", "--fd"]);
    assert_eq!(code, 0);
    assert!((num(&r, "v_gamma") + 1.0).abs() <= 1e-8);
    assert!((num(&r, "S_gamma") + 1.0).abs() <= 1e-8);
    assert!(num(&r, "derivative.estimate").abs() <= 1e-8);
    assert_eq!(r.get("derivative.regime"), Some("weakly-convex"));
    assert_eq!(r.get("fd.agrees"), Some("true"));
}

#[test]
fn envelope_toy_closed_form() {
    let (code, r, _) = bec(&["envelope", &fixture("toy.blp"), "--point", "0,1"]);
    assert_eq!(code, 0);
    assert!((num(&r, "v_gamma") - 1.0 / 3.0).abs() <= 1e-10);
    assert!((num(&r, "S_gamma") - 2.0 / 3.0).abs() <= 1e-10);
}

#[test]
fn auto_regime_records_refusals() {
    // The disc fixture is not affine and MFCQ holds at interior proximal
    // points, so the weakly convex regime applies directly.
    let (code, r, _) = bec(&["envelope", &fixture("disc.blp"), "--point", "0.3,0.9", "--direction", "1,-1", "--fd"]);
    assert_eq!(code, 0);
    assert_eq!(r.get("fd.agrees"), Some("true"));
    let (code, r, _) = bec(&[
        "envelope",
        &fixture("ex51.blp"),
        "--point",
        "0,-1",
        "--direction",
        "1,0",
        "--regime",
        "dini",
    ]);
    assert_eq!(code, 0);
    assert_eq!(r.get("derivative.regime"), Some("dini"));
}

#[test]
fn input_errors_exit_two() {
    let (code, r, _) = bec(&["envelope", "no-such-file.blp", "--point", "0,1"]);
    assert_eq!(code, 2);
    assert_eq!(r.get("status"), Some("error"));
    let (code, r, _) = bec(&["envelope", &fixture("toy.blp"), "--point", "0,1,2"]);
    assert_eq!(code, 2);
    assert!(r.get("error").unwrap().contains("expected n + m = 2"));
    let (code, _, _) = bec(&["envelope", &fixture("toy.blp"), "--point", "0,abc"]);
    assert_eq!(code, 2);
    let out = Command::new(env!("CARGO_BIN_EXE_bec")).args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn certify_wckkt_worked_example() {
    let (code, r, _) = bec(&[
        "certify",
        &fixture("ex51.blp"),
        "--point",
        "0,-1",
        "--direction",
        "1,1",
        "--system",
        "wckkt",
        "--cq",
        "mfcq,qn",
    ]);
    assert_eq!(code, 0);
    assert_eq!(r.get("mfcq.verdict"), Some("holds"));
    assert_eq!(r.get("quasi-normality-direction.verdict"), Some("certificate-modulo-sampling"));
    assert_eq!(r.get("critical_cone.member"), Some("true"));
    assert_eq!(num(&r, "certificate.alpha"), 1.0);
    assert_eq!(r.get("certificate.lambda_bar"), Some("0.0,2.0"));
    assert!(num(&r, "certificate.residual") <= 1e-8);
}

#[test]
fn certify_skkt_induces_s_stationarity() {
    let (code, r, _) = bec(&["certify", &fixture("ex51.blp"), "--point", "0,-1", "--system", "skkt"]);
    assert_eq!(code, 0);
    assert_eq!(r.get("stationarity.found"), Some("true"));
    assert_eq!(r.get("certificate.induced.s_stationary"), Some("true"));
}

#[test]
fn certify_infeasible_point_lists_violations() {
    let (code, r, _) = bec(&["certify", &fixture("ex51.blp"), "--point", "0.5,-1"]);
    assert_eq!(code, 2);
    assert_eq!(r.get("feasibility.violated"), Some("g2=0.5"));
    let (code, r, _) = bec(&["certify", &fixture("ex51.blp"), "--point", "0,-0.5"]);
    assert_eq!(code, 2);
    assert!(r.get("feasibility.violated").unwrap().starts_with("f-v_gamma="));
}

#[test]
fn certify_without_certificate_is_a_finding() {
    // Interior point of the toy where grad F = (2x, 1) cannot be balanced.
    let (code, r, _) = bec(&["certify", &fixture("toy.blp"), "--point", "0,0"]);
    assert_eq!(code, 1);
    assert_eq!(r.get("stationarity.found"), Some("false"));
    assert_eq!(r.get("status"), Some("finding"));
}

#[test]
fn cq_verb_reports_failure_as_finding() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("qn.blp");
    std::fs::write(
        &path,
        "[problem]\nn = 1\nm = 1\ngamma = 0.5\nrho_f = 0\nf_convexity = jointly-weakly-convex\n\
         g_convexity = jointly-quasiconvex\n[upper]\nobjective = \"-x1\"\nconstraints = \"x1^2\"\n\
         [lower]\nobjective = \"0.5*y1^2\"\nconstraints =\n",
    )
    .unwrap();
    let p = path.display().to_string();
    let (code, r, _) = bec(&["cq", &p, "--point", "0,0", "--direction", "2,0", "--check", "qn"]);
    assert_eq!(code, 1);
    assert_eq!(r.get("quasi-normality-direction.verdict"), Some("fails"));
    let (code, r, _) = bec(&["cq", &fixture("ex51.blp"), "--point", "0,-1", "--check", "mfcq,foscms"]);
    assert_eq!(code, 0);
    assert_eq!(r.get("foscms.skipped"), Some("needs --direction"));
}

#[test]
fn example1_passes_and_detects_corruption() {
    let (code, r, _) = bec(&["example1"]);
    assert_eq!(code, 0, "{}", r.to_text());
    assert_eq!(r.get("checks.passed"), Some("8"));
    let (code, r, _) = bec(&["example1", "--gamma", "0.49"]);
    assert_eq!(code, 0, "{}", r.to_text());
    let (code, r, _) = bec(&["example1", "--corrupt"]);
    assert_eq!(code, 1);
    assert_eq!(r.get("check.multipliers"), Some("FAIL"));
    assert_eq!(r.get("check.multipliers.expected"), Some("(0.0,3.0)"));
    assert_eq!(r.get("check.multipliers.observed"), Some("(0.0,2.0)"));
}

#[test]
fn validate_flags_wrong_modulus() {
    let (code, r, _) = bec(&["validate", &fixture("disc.blp")]);
    assert_eq!(code, 0);
    assert_eq!(r.get("valid"), Some("true"));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.blp");
    let text = std::fs::read_to_string(fixture("ex51.blp")).unwrap().replace("rho_f = 2", "rho_f = 1");
    std::fs::write(&path, text).unwrap();
    let (code, r, _) = bec(&["validate", &path.display().to_string()]);
    assert_eq!(code, 2);
    assert_eq!(r.get("rho_consistent"), Some("false"));
}

#[test]
fn reports_round_trip_and_are_deterministic() {
    let f = fixture("ex51.blp");
    let args = ["certify", &f, "--point", "0,-1", "--direction", "1,1", "--system", "wckkt", "--cq", "mfcq,qn,foscms"];
    let (_, r1, s1) = bec(&args);
    let (_, _, s2) = bec(&args);
    assert_eq!(s1, s2);
    assert_eq!(r1.to_kv(), s1);
    assert_eq!(r1.command, args.join(" "));
}

#[test]
fn saved_problem_file_has_same_digest() {
    let src = fixture("polytope.blp");
    let (_, original, _) = bec(&["envelope", &src, "--point", "0,0.2,0.3"]);
    let prob = bec::load_problem(&std::fs::read_to_string(&src).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("saved.blp");
    std::fs::write(&path, bec::save_problem(&prob)).unwrap();
    let (code, saved, _) = bec(&["envelope", &path.display().to_string(), "--point", "0,0.2,0.3"]);
    assert_eq!(code, 0);
    assert_eq!(saved.digest, original.digest);
    assert_eq!(saved.get("v_gamma"), original.get("v_gamma"));
}

#[test]
fn text_format_is_aligned() {
    let (code, out) = {
        let o = Command::new(env!("CARGO_BIN_EXE_bec"))
            .args(["envelope", &fixture("toy.blp"), "--point", "0,1", "--format", "text"])
            .output()
            .unwrap();
        (o.status.code().unwrap(), String::from_utf8(o.stdout).unwrap())
    };
    assert_eq!(code, 0);
    assert!(out.lines().any(|l| l.starts_with("v_gamma") && l.contains(" : 0.333")));
}
