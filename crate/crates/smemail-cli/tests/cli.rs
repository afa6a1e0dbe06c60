//! End-to-end tests against the built binary: every command runs in its own
//! process with isolated state under a temp directory, exactly as an
//! operator would drive it.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

const PW: &str = "correct horse battery staple";

fn smemail_pw(dir: &Path, pw: &str, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smemail"))
        .current_dir(dir)
        .env("SMEMAIL_PASSWORD", pw)
        .args(args)
        .output()
        .expect("binary runs")
}

fn smemail(dir: &Path, args: &[&str]) -> Output {
    smemail_pw(dir, PW, args)
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn assert_ok(out: &Output, what: &str) {
    assert_eq!(code(out), 0, "{what}: stdout={} stderr={}", stdout(out), stderr(out));
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// keygen both parties and send `msg` from alice to bob; returns the temp dir.
fn provisioned(msg: &str, extra: &[&str]) -> TempDir {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let args = |cmd: &[&str]| -> Vec<String> {
        extra.iter().chain(cmd).map(|s| s.to_string()).collect()
    };
    let run = |cmd: &[&str], what: &str| {
        let owned = args(cmd);
        let borrowed: Vec<&str> = owned.iter().map(String::as_str).collect();
        assert_ok(&smemail(d, &borrowed), what);
    };
    run(&["keygen", "alice@example.org"], "keygen alice");
    run(&["keygen", "bob@example.org"], "keygen bob");
    fs::write(d.join("msg.txt"), msg).unwrap();
    run(&["send", "alice@example.org", "bob@example.org", "msg.txt"], "send");
    tmp
}

#[test]
fn round_trip_prints_original_message() {
    let tmp = provisioned("meet at the docks at nine", &[]);
    let out = smemail(tmp.path(), &["recv", "bob@example.org"]);
    assert_ok(&out, "recv");
    assert!(
        stdout(&out).contains("from alice@example.org: meet at the docks at nine"),
        "stdout={}",
        stdout(&out)
    );
}

#[test]
fn duplicate_identity_is_exit_3() {
    let tmp = TempDir::new().unwrap();
    assert_ok(&smemail(tmp.path(), &["keygen", "alice@example.org"]), "first keygen");
    let out = smemail(tmp.path(), &["keygen", "alice@example.org"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("duplicate identity"), "stderr={}", stderr(&out));
}

#[test]
fn test_mode_curve_warns_on_stderr() {
    let tmp = TempDir::new().unwrap();
    let out = smemail(tmp.path(), &["keygen", "alice@example.org"]);
    assert_ok(&out, "keygen");
    assert!(stderr(&out).contains("test mode"), "stderr={}", stderr(&out));
}

#[test]
fn wrong_password_is_exit_4() {
    let tmp = provisioned("x", &[]);
    let out = smemail_pw(tmp.path(), "not the password", &["recv", "bob@example.org"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("wrong password"), "stderr={}", stderr(&out));
}

#[test]
fn missing_keystore_is_exit_6() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("m.txt"), "hi").unwrap();
    let out = smemail(tmp.path(), &["send", "ghost@example.org", "bob@example.org", "m.txt"]);
    assert_eq!(code(&out), 6);
    assert!(stderr(&out).contains("no keystore"), "stderr={}", stderr(&out));
}

#[test]
fn unknown_recipient_basic_fails_at_ocsp() {
    let tmp = TempDir::new().unwrap();
    assert_ok(&smemail(tmp.path(), &["keygen", "alice@example.org"]), "keygen");
    fs::write(tmp.path().join("m.txt"), "hi").unwrap();
    let out = smemail(tmp.path(), &["send", "alice@example.org", "ghost@example.org", "m.txt"]);
    assert_eq!(code(&out), 10);
    assert!(stderr(&out).contains("ocsp: ocsp-unknown"), "stderr={}", stderr(&out));
}

#[test]
fn unknown_recipient_delegated_is_exit_6() {
    let tmp = TempDir::new().unwrap();
    let t = &["--topology", "fig4"];
    assert_ok(&smemail(tmp.path(), &[t[0], t[1], "keygen", "alice@example.org"]), "keygen");
    fs::write(tmp.path().join("m.txt"), "hi").unwrap();
    let out =
        smemail(tmp.path(), &[t[0], t[1], "send", "alice@example.org", "ghost@example.org", "m.txt"]);
    assert_eq!(code(&out), 6);
    assert!(stderr(&out).contains("not in the directory"), "stderr={}", stderr(&out));
}

#[test]
fn revoked_sender_rejected_at_recv_with_exit_10() {
    let tmp = provisioned("pay the invoice", &[]);
    assert_ok(&smemail(tmp.path(), &["revoke", "alice@example.org"]), "revoke");
    let out = smemail(tmp.path(), &["recv", "bob@example.org"]);
    assert_eq!(code(&out), 10);
    assert!(
        stdout(&out).contains("rejected (ocsp: ocsp-revoked)"),
        "stdout={}",
        stdout(&out)
    );
}

#[test]
fn revoking_unknown_identity_is_exit_6() {
    let tmp = TempDir::new().unwrap();
    let out = smemail(tmp.path(), &["revoke", "nobody@example.org"]);
    assert_eq!(code(&out), 6);
}

#[test]
fn replay_across_processes_is_exit_15() {
    let tmp = provisioned("once only", &[]);
    let d = tmp.path();
    let out = smemail(d, &["recv", "bob@example.org", "--disclose", "out"]);
    assert_ok(&out, "first recv");

    // requeue the very same envelope octets and fetch again
    let boxes: Vec<_> = fs::read_dir(d.join("smemail/state/mail")).unwrap().collect();
    let box_dir = boxes.into_iter().next().unwrap().unwrap().path();
    fs::copy(d.join("out/envelope-001.eml"), box_dir.join("000001.eml")).unwrap();
    let out = smemail(d, &["recv", "bob@example.org"]);
    assert_eq!(code(&out), 15, "stderr={}", stderr(&out));
    assert!(stdout(&out).contains("rejected (replay)"), "stdout={}", stdout(&out));
}

#[test]
fn disclosed_envelope_verifies_and_tamper_flips_verdict() {
    let tmp = provisioned("the vote is rigged", &[]);
    let d = tmp.path();
    assert_ok(&smemail(d, &["recv", "bob@example.org", "--disclose", "out"]), "recv");

    let out = smemail(d, &["verify", "out/envelope-001.eml", "out/disclosed-001.tlv"]);
    assert_ok(&out, "verify");
    assert!(stdout(&out).contains("verification ok"));

    // flip one bit inside the disclosed message and watch the verdict turn
    let text = fs::read_to_string(d.join("out/disclosed-001.tlv")).unwrap();
    let mut raw = smemail_core::wire::tlv::from_base64_text(&text).unwrap();
    let n = raw.len();
    raw[n / 2] ^= 0x01;
    fs::write(d.join("out/mangled.tlv"), smemail_core::wire::tlv::to_base64_text(&raw)).unwrap();
    let out = smemail(d, &["verify", "out/envelope-001.eml", "out/mangled.tlv"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("verification failed"), "stdout={}", stdout(&out));
}

#[test]
fn verify_rejects_garbage_envelope_with_exit_13() {
    let tmp = provisioned("x", &[]);
    let d = tmp.path();
    assert_ok(&smemail(d, &["recv", "bob@example.org", "--disclose", "out"]), "recv");
    fs::write(d.join("junk.eml"), "not a mime entity at all\n").unwrap();
    let out = smemail(d, &["verify", "junk.eml", "out/disclosed-001.tlv"]);
    assert_eq!(code(&out), 13);
}

#[test]
fn delegated_fig4_round_trip_with_report_sidecar() {
    let tmp = provisioned("delegated hello", &["--topology", "fig4"]);
    let d = tmp.path();
    let boxes: Vec<_> = fs::read_dir(d.join("smemail/state/mail")).unwrap().collect();
    let box_dir = boxes.into_iter().next().unwrap().unwrap().path();
    assert!(box_dir.join("000001.report").exists(), "validation report sidecar missing");

    let out = smemail(d, &["--topology", "fig4", "recv", "bob@example.org"]);
    assert_ok(&out, "recv");
    assert!(stdout(&out).contains("from alice@example.org: delegated hello"));
}

#[test]
fn send_reads_message_from_stdin_dash() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_ok(&smemail(d, &["keygen", "alice@example.org"]), "keygen alice");
    assert_ok(&smemail(d, &["keygen", "bob@example.org"]), "keygen bob");
    let mut child = Command::new(env!("CARGO_BIN_EXE_smemail"))
        .current_dir(d)
        .env("SMEMAIL_PASSWORD", PW)
        .args(["send", "alice@example.org", "bob@example.org", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.as_mut().unwrap().write_all(b"piped in").unwrap();
    let out = child.wait_with_output().unwrap();
    assert_ok(&out, "send from stdin");
    let out = smemail(d, &["recv", "bob@example.org"]);
    assert!(stdout(&out).contains("from alice@example.org: piped in"));
}

#[test]
fn recv_with_no_mail_is_exit_0_and_empty_stdout() {
    let tmp = TempDir::new().unwrap();
    assert_ok(&smemail(tmp.path(), &["keygen", "alice@example.org"]), "keygen");
    let out = smemail(tmp.path(), &["recv", "alice@example.org"]);
    assert_ok(&out, "recv");
    assert_eq!(stdout(&out), "");
    assert!(stderr(&out).contains("no mail"), "stderr={}", stderr(&out));
}

#[test]
fn bundled_scenarios_all_green_via_cli() {
    let tmp = TempDir::new().unwrap();
    let mut ran = 0;
    for entry in fs::read_dir(scenarios_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "scn") {
            continue;
        }
        let out = smemail(tmp.path(), &["simulate", path.to_str().unwrap()]);
        assert_ok(&out, &format!("simulate {}", path.display()));
        assert!(
            stdout(&out).contains("steps passed"),
            "no summary for {}: {}",
            path.display(),
            stdout(&out)
        );
        ran += 1;
    }
    assert!(ran >= 12, "expected the bundled scenario corpus, found {ran}");
}

#[test]
fn same_script_same_seed_gives_identical_transcripts() {
    let tmp = TempDir::new().unwrap();
    let script = scenarios_dir().join("happy-basic.scn");
    let s = script.to_str().unwrap();
    assert_ok(&smemail(tmp.path(), &["simulate", s, "--transcript-out", "a.t"]), "run 1");
    assert_ok(&smemail(tmp.path(), &["simulate", s, "--transcript-out", "b.t"]), "run 2");
    let a = fs::read(tmp.path().join("a.t")).unwrap();
    let b = fs::read(tmp.path().join("b.t")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b, "transcripts differ across identical runs");

    assert_ok(
        &smemail(tmp.path(), &["--seed", "424242", "simulate", s, "--transcript-out", "c.t"]),
        "run 3",
    );
    let c = fs::read(tmp.path().join("c.t")).unwrap();
    assert_ne!(a, c, "seed override should reshuffle the run");
}

#[test]
fn simulate_reports_script_errors_with_line_numbers() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.scn"), "name x\nstep nobody frobnicate => done\n").unwrap();
    let out = smemail(tmp.path(), &["simulate", "bad.scn"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 2"), "stderr={}", stderr(&out));
}

#[test]
fn failing_expectation_is_exit_1() {
    let tmp = TempDir::new().unwrap();
    let script = "name wrong\nseed 5\nactors alice bob\n\
                  step alice send bob \"hi\" => error ocsp-revoked\n";
    fs::write(tmp.path().join("wrong.scn"), script).unwrap();
    let out = smemail(tmp.path(), &["simulate", "wrong.scn"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("FAIL"), "stdout={}", stdout(&out));
}

#[test]
fn json_outputs_parse_cleanly() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let out = smemail(d, &["--json", "keygen", "alice@example.org"]);
    assert_ok(&out, "keygen --json");
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["identity"], "alice@example.org");
    assert!(v["fingerprint"].as_str().unwrap().len() == 16);

    assert_ok(&smemail(d, &["keygen", "bob@example.org"]), "keygen bob");
    fs::write(d.join("m.txt"), "json trip").unwrap();
    assert_ok(&smemail(d, &["send", "alice@example.org", "bob@example.org", "m.txt"]), "send");
    let out = smemail(d, &["--json", "recv", "bob@example.org"]);
    assert_ok(&out, "recv --json");
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v[0]["status"], "accepted");
    assert_eq!(v[0]["message"], "json trip");

    let script = scenarios_dir().join("replay.scn");
    let out = smemail(d, &["--json", "simulate", script.to_str().unwrap()]);
    assert_ok(&out, "simulate --json");
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["passed"], true);
}

#[test]
fn weak_custom_curve_is_exit_5() {
    let tmp = TempDir::new().unwrap();
    // t17's curve but with composite order claimed
    fs::write(tmp.path().join("weak.params"), "q=17\na=2\nb=2\ngx=5\ngy=1\nn=18\n").unwrap();
    let out = smemail(tmp.path(), &["--curve", "weak.params", "keygen", "alice@example.org"]);
    assert_eq!(code(&out), 5);
    assert!(stderr(&out).contains("weak parameters"), "stderr={}", stderr(&out));
}

#[test]
fn custom_curve_file_round_trips() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(d.join("toy.params"), "q=17\na=2\nb=2\ngx=5\ngy=1\nn=19\n").unwrap();
    let c = &["--curve", "toy.params"];
    assert_ok(&smemail(d, &[c[0], c[1], "keygen", "alice@example.org"]), "keygen alice");
    assert_ok(&smemail(d, &[c[0], c[1], "keygen", "bob@example.org"]), "keygen bob");
    fs::write(d.join("m.txt"), "custom curve").unwrap();
    assert_ok(&smemail(d, &[c[0], c[1], "send", "alice@example.org", "bob@example.org", "m.txt"]), "send");
    let out = smemail(d, &[c[0], c[1], "recv", "bob@example.org"]);
    assert_ok(&out, "recv");
    assert!(stdout(&out).contains("custom curve"));
}

#[test]
fn config_file_sets_topology_and_rejects_unknown_keys() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(d.join("smemail.conf"), "topology = delegated-fig4\nfreshness_window = 600\n").unwrap();
    let c = &["--config", "smemail.conf"];
    assert_ok(&smemail(d, &[c[0], c[1], "keygen", "alice@example.org"]), "keygen alice");
    assert_ok(&smemail(d, &[c[0], c[1], "keygen", "bob@example.org"]), "keygen bob");
    fs::write(d.join("m.txt"), "via config").unwrap();
    let out = smemail(d, &[c[0], c[1], "send", "alice@example.org", "bob@example.org", "m.txt"]);
    assert_ok(&out, "send");
    assert!(stderr(&out).contains("dv-submit"), "config topology ignored: {}", stderr(&out));

    fs::write(d.join("bad.conf"), "colour = mauve\n").unwrap();
    let out = smemail(d, &["--config", "bad.conf", "keygen", "x@example.org"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("unknown config key"), "stderr={}", stderr(&out));
}

#[test]
fn usage_errors_are_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = smemail(tmp.path(), &[]);
    assert_eq!(code(&out), 2);
    let out = smemail(tmp.path(), &["frobnicate"]);
    assert_eq!(code(&out), 2);
    let out = smemail(tmp.path(), &["keygen", "not an address"]);
    assert_eq!(code(&out), 2);
}

/// The grep-able guarantee: with every artifact a full strict-curve session
/// leaves on disk plus everything the commands printed, no private scalar
/// appears anywhere outside the password-sealed keystores and the fixture
/// service key files themselves.
#[test]
fn no_private_scalar_in_any_output_or_artifact() {
    use smemail_core::curve::p256;
    use smemail_core::pki::{keystore_from_bytes, keystore_open};
    use smemail_core::suite::default_suite;
    use smemail_core::wire::tlv::{self, from_base64_text, tag};

    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let c = &["--curve", "p256", "--topology", "fig4"];
    let mut printed = Vec::new();
    let mut run = |args: &[&str]| {
        let out = smemail(d, &[c, args].concat().as_slice());
        assert_ok(&out, &format!("{args:?}"));
        printed.extend_from_slice(&out.stdout);
        printed.extend_from_slice(&out.stderr);
    };
    run(&["keygen", "alice@example.org"]);
    run(&["keygen", "bob@example.org"]);
    fs::write(d.join("m.txt"), "strict-curve secret traffic").unwrap();
    run(&["send", "alice@example.org", "bob@example.org", "m.txt"]);
    run(&["recv", "bob@example.org", "--disclose", "out"]);

    let params = p256();
    let suite = default_suite();

    // gather every private scalar this world contains
    let mut secrets: Vec<Vec<u8>> = Vec::new();
    let keys_dir = d.join("smemail/keys");
    for entry in fs::read_dir(&keys_dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "keystore") {
            let bytes = from_base64_text(&fs::read_to_string(&path).unwrap()).unwrap();
            let (ks, _) = keystore_from_bytes(&bytes, &params).unwrap();
            let sk = keystore_open(&ks, PW.as_bytes(), &params, suite).unwrap();
            secrets.push(params.encode_scalar(&sk));
        }
    }
    for name in ["ca.key", "ocsp.key", "dv.key"] {
        let text = fs::read_to_string(d.join("smemail/state").join(name)).unwrap();
        let bytes = from_base64_text(&text).unwrap();
        let mut r = tlv::Reader::new(&bytes);
        r.expect_u8(tag::VERSION).unwrap();
        r.expect_u8(tag::CURVE_ID).unwrap();
        r.expect(tag::IDENTITY).unwrap();
        let (sk, _) = r.expect(tag::SCALAR).unwrap();
        secrets.push(sk.to_vec());
    }
    assert_eq!(secrets.len(), 5);

    // every text form a leak could take
    let mut needles: Vec<Vec<u8>> = Vec::new();
    for raw in &secrets {
        needles.push(raw.clone());
        needles.push(hex::encode(raw).into_bytes());
        needles.push(hex::encode_upper(raw).into_bytes());
        needles.push(
            num_bigint::BigUint::from_bytes_be(raw).to_string().into_bytes(),
        );
    }

    fn walk(dir: &Path, out: &mut Vec<PathBuf>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, out);
            } else {
                out.push(p);
            }
        }
    }
    let mut files = Vec::new();
    walk(d, &mut files);
    assert!(files.len() >= 10, "expected a populated world, found {files:?}");

    let contains = |hay: &[u8], needle: &[u8]| hay.windows(needle.len()).any(|w| w == needle);
    for path in &files {
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        // the sealed keystores and the fixture service keys hold scalars by
        // design; everything else must be clean, including after base64
        let exempt = name.ends_with(".keystore")
            || matches!(name.as_str(), "ca.key" | "ocsp.key" | "dv.key");
        if exempt {
            continue;
        }
        let raw = fs::read(path).unwrap();
        let mut views = vec![raw.clone()];
        if let Ok(text) = std::str::from_utf8(&raw) {
            if let Ok(decoded) = from_base64_text(text) {
                views.push(decoded);
            }
        }
        for view in &views {
            for needle in &needles {
                assert!(
                    !contains(view, needle),
                    "private scalar material found in {}",
                    path.display()
                );
            }
        }
    }
    for needle in &needles {
        assert!(!contains(&printed, needle), "private scalar material printed to a stream");
    }
}
