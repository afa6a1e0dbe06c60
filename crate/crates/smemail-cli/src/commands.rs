//! One function per subcommand. Data goes to stdout, diagnostics and
//! protocol transcripts to stderr; every refusal maps to its own exit code.

use std::fs;
use std::io::Read;
use std::path::Path;

use anyhow::Result;
use serde_json::json;

use smemail_core::flow::{self, ClientState, RejectReason, SendError, Transcript};
use smemail_core::pki::{self, Identity, KeyPair, PkiError};
use smemail_core::signcrypt::{public_verify, receiver_key_agree};
use smemail_core::sim;
use smemail_core::wire::envelope::decode_envelope;
use smemail_core::wire::messages::{decode_disclosed, encode_disclosed, Disclosed};
use smemail_core::wire::mime::MimeEntity;
use smemail_core::wire::tlv::{from_base64_text, to_base64_text};

use crate::config::Config;
use crate::state::{self, World};
use crate::{exit_code, fail};

fn parse_identity(s: &str) -> Result<Identity> {
    Identity::parse(s).map_err(|e| fail(exit_code::USAGE, format!("bad identity {s:?}: {e}")))
}

/// Password from `SMEMAIL_PASSWORD` or an interactive prompt — never from
/// the command line, where it would land in shell history.
fn obtain_password(confirm: bool) -> Result<Vec<u8>> {
    let pw = match std::env::var("SMEMAIL_PASSWORD") {
        Ok(pw) => pw,
        Err(_) => {
            let pw = rpassword::prompt_password("password: ").map_err(|_| {
                fail(
                    exit_code::PASSWORD,
                    "no password: set SMEMAIL_PASSWORD or run interactively",
                )
            })?;
            if confirm {
                let again = rpassword::prompt_password("confirm: ")
                    .map_err(|_| fail(exit_code::PASSWORD, "prompt failed"))?;
                if pw != again {
                    return Err(fail(exit_code::PASSWORD, "passwords do not match"));
                }
            }
            pw
        }
    };
    if pw.is_empty() {
        return Err(fail(exit_code::PASSWORD, "empty password"));
    }
    Ok(pw.into_bytes())
}

/// Unseals the identity's keystore into a ready client.
fn unlock_client(world: &World, id: &Identity) -> Result<ClientState> {
    let ks = world.read_keystore(id)?;
    let password = obtain_password(false)?;
    let sk = pki::keystore_open(&ks, &password, &world.params, world.suite).map_err(|e| match e {
        PkiError::WrongPassword => fail(exit_code::PASSWORD, format!("wrong password for {id}")),
        other => fail(exit_code::INTERNAL, other.to_string()),
    })?;
    let pk = world.params.mul_g(sk.value());
    let mut client = ClientState::new(id.clone(), KeyPair { sk, pk }, world.roots.clone());
    client.freshness_window = world.cfg.freshness_window;
    Ok(client)
}

pub fn keygen(cfg: Config, seed: Option<u64>, identity: &str, json: bool) -> Result<()> {
    let id = parse_identity(identity)?;
    let mut world = state::open(cfg, seed)?;
    if world.test_mode {
        eprintln!(
            "warning: curve {:?} runs in test mode; its keys resist nobody",
            world.params.name
        );
    }
    if world.keystore_path(&id).exists() {
        return Err(fail(
            exit_code::DUPLICATE,
            format!("duplicate identity: keystore for {id} already exists"),
        ));
    }
    if world.bus.directory.records().any(|r| r.identity == id) {
        return Err(fail(
            exit_code::DUPLICATE,
            format!("duplicate identity: {id} is already registered"),
        ));
    }
    let password = obtain_password(true)?;

    let kp = pki::generate_keypair(&world.params, &mut world.rng);
    let nonce = world.ca.fresh_nonce(&mut world.rng);
    let pop = pki::proof_of_possession(&nonce, &kp, &world.params, world.suite, &mut world.rng);
    let cert = world
        .ca
        .issue(
            &id,
            &kp.pk,
            &pop,
            &nonce,
            world.now - 3_600,
            world.now + 30 * 86_400,
            &world.params,
            world.suite,
            &mut world.rng,
        )
        .map_err(|e| fail(exit_code::INTERNAL, format!("enrollment failed: {e}")))?;
    world
        .bus
        .directory
        .put(id.clone(), kp.pk.clone(), cert.clone(), &world.params)
        .map_err(|e| fail(exit_code::DUPLICATE, e.to_string()))?;

    let ks = pki::keystore_seal(&id, &kp.sk, &password, &world.params, world.suite, &mut world.rng);
    let ks_path = world.write_keystore(&ks)?;
    let cert_path = world.write_cert(&cert)?;
    let fp: String = world.suite.digest(&world.params.encode_point(&kp.pk))[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    world.save()?;

    if json {
        println!(
            "{}",
            json!({
                "identity": id.as_str(),
                "fingerprint": fp,
                "serial": cert.serial,
                "keystore": ks_path,
                "certificate": cert_path,
            })
        );
    } else {
        println!("enrolled {id}");
        println!("fingerprint: {fp}");
        println!("serial: {}", cert.serial);
        println!("keystore: {}", ks_path.display());
        println!("certificate: {}", cert_path.display());
    }
    Ok(())
}

fn read_message(path: &Path) -> Result<Vec<u8>> {
    if path == Path::new("-") {
        let mut buf = Vec::new();
        std::io::stdin()
            .read_to_end(&mut buf)
            .map_err(|e| fail(exit_code::USAGE, format!("reading stdin: {e}")))?;
        Ok(buf)
    } else {
        fs::read(path).map_err(|e| fail(exit_code::USAGE, format!("cannot read {}: {e}", path.display())))
    }
}

fn send_failure(e: SendError) -> anyhow::Error {
    match e {
        SendError::Ocsp(f) => fail(exit_code::STAGE_OCSP, format!("ocsp: {}", f.label())),
        SendError::RecipientUnknown => {
            fail(exit_code::UNKNOWN_IDENTITY, "recipient not in the directory")
        }
        SendError::BadDirectoryKey => {
            fail(exit_code::BAD_DIRECTORY_KEY, "directory returned an invalid key")
        }
        SendError::DvRejected(v) => {
            fail(exit_code::DV_REJECTED, format!("validation server rejected: {}", v.label()))
        }
        SendError::DvReportInvalid => {
            fail(exit_code::STAGE_DV_SIGNATURE, "validation report did not verify")
        }
        SendError::Signcrypt(e) => fail(exit_code::INTERNAL, e.to_string()),
        SendError::Encode(e) => fail(exit_code::INTERNAL, e.to_string()),
    }
}

pub fn send(
    cfg: Config,
    seed: Option<u64>,
    from: &str,
    to: &str,
    message_file: &Path,
    json: bool,
) -> Result<()> {
    let from_id = parse_identity(from)?;
    let to_id = parse_identity(to)?;
    let message = read_message(message_file)?;
    let mut world = state::open(cfg, seed)?;
    let mut client = unlock_client(&world, &from_id)?;
    let mut transcript = Transcript::new();

    let result = flow::compose_and_send(
        &mut client,
        &mut world.bus,
        &to_id,
        &message,
        world.cfg.topology,
        world.now,
        &mut world.rng,
        &mut transcript,
    );
    eprint!("{}", transcript.render());
    result.map_err(send_failure)?;

    // The in-memory queue drains into the recipient's spool directory so a
    // later `recv` process can pick the item up.
    let items = world.bus.mail.fetch(&to_id);
    let mut paths = Vec::with_capacity(items.len());
    for item in &items {
        paths.push(world.append_box(&to_id, item)?);
    }
    world.save()?;

    if json {
        let listed: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
        println!("{}", json!({"queued": listed}));
    } else {
        for p in &paths {
            println!("{}", p.display());
        }
    }
    Ok(())
}

fn stage_code(r: &RejectReason) -> u8 {
    match r {
        RejectReason::Ocsp(_) => exit_code::STAGE_OCSP,
        RejectReason::DvSignature => exit_code::STAGE_DV_SIGNATURE,
        RejectReason::DigestMismatch => exit_code::STAGE_DIGEST_MISMATCH,
        RejectReason::EnvelopeInvalid(_) => exit_code::STAGE_ENVELOPE_INVALID,
        RejectReason::SignatureInvalid => exit_code::STAGE_SIGNATURE_INVALID,
        RejectReason::Replay => exit_code::STAGE_REPLAY,
    }
}

fn reject_text(r: &RejectReason) -> String {
    match r {
        RejectReason::Ocsp(f) => format!("ocsp: {}", f.label()),
        other => other.stage().to_string(),
    }
}

pub fn recv(
    cfg: Config,
    seed: Option<u64>,
    identity: &str,
    disclose: Option<&Path>,
    json: bool,
) -> Result<()> {
    let id = parse_identity(identity)?;
    let mut world = state::open(cfg, seed)?;
    let mut client = unlock_client(&world, &id)?;
    client.seen_r = world.load_seen(&id)?;

    let spooled = world.load_box(&id)?;
    for (item, _) in &spooled {
        world.bus.mail.enqueue(id.clone(), item.clone());
    }
    let mut transcript = Transcript::new();
    let deliveries = flow::fetch_and_open(
        &mut client,
        &mut world.bus,
        world.cfg.topology,
        world.now,
        &mut world.rng,
        &mut transcript,
    );
    eprint!("{}", transcript.render());
    world.clear_box(&id)?;
    world.save_seen(&id, &client.seen_r)?;
    world.save()?;

    if let Some(dir) = disclose {
        fs::create_dir_all(dir)
            .map_err(|e| fail(exit_code::USAGE, format!("cannot create {}: {e}", dir.display())))?;
        for (idx, (delivery, (item, raw))) in deliveries.iter().zip(&spooled).enumerate() {
            let Ok(message) = &delivery.outcome else { continue };
            let env = decode_envelope(&item.entity, &world.params)
                .map_err(|e| fail(exit_code::INTERNAL, e.to_string()))?;
            let pk_a = client
                .known_keys
                .get(&delivery.from)
                .map(|k| k.pk.clone())
                .ok_or_else(|| fail(exit_code::INTERNAL, "accepted item without a sender key"))?;
            let session = receiver_key_agree(
                &client.keys.sk,
                &env.r_point,
                &pk_a,
                &env.sender,
                &env.recipient,
                &world.params,
                world.suite,
            )
            .map_err(|e| fail(exit_code::INTERNAL, e.to_string()))?;
            let bundle = Disclosed { message: message.clone(), key: session.key };
            let n = idx + 1;
            fs::write(dir.join(format!("envelope-{n:03}.eml")), raw)?;
            fs::write(
                dir.join(format!("disclosed-{n:03}.tlv")),
                to_base64_text(&encode_disclosed(&bundle).map_err(|e| {
                    fail(exit_code::INTERNAL, e.to_string())
                })?),
            )?;
            eprintln!(
                "disclosed message {n} for third-party verification in {}",
                dir.display()
            );
        }
    }

    if json {
        let rows: Vec<serde_json::Value> = deliveries
            .iter()
            .map(|d| match &d.outcome {
                Ok(m) => json!({
                    "from": d.from.as_str(),
                    "status": "accepted",
                    "message": String::from_utf8_lossy(m),
                }),
                Err(r) => json!({
                    "from": d.from.as_str(),
                    "status": "rejected",
                    "stage": r.stage(),
                    "detail": reject_text(r),
                }),
            })
            .collect();
        println!("{}", json!(rows));
    } else {
        for d in &deliveries {
            match &d.outcome {
                Ok(m) => println!("from {}: {}", d.from, String::from_utf8_lossy(m)),
                Err(r) => println!("from {}: rejected ({})", d.from, reject_text(r)),
            }
        }
    }
    if deliveries.is_empty() {
        eprintln!("no mail for {id}");
    }

    if let Some(first) = deliveries.iter().find_map(|d| d.outcome.as_ref().err()) {
        return Err(fail(stage_code(first), format!("rejected: {}", reject_text(first))));
    }
    Ok(())
}

pub fn verify(cfg: Config, envelope_file: &Path, disclosed_file: &Path, json: bool) -> Result<()> {
    // Read-only: resolves parameters and the directory without touching the
    // clock or minting service keys.
    let (params, _) = cfg.resolve_curve()?;
    let suite = cfg.resolve_suite()?;
    let invalid = |m: String| fail(exit_code::STAGE_ENVELOPE_INVALID, m);

    let entity_text = fs::read_to_string(envelope_file)
        .map_err(|e| fail(exit_code::USAGE, format!("cannot read {}: {e}", envelope_file.display())))?;
    let entity = MimeEntity::parse(&entity_text)
        .map_err(|e| invalid(format!("{}: {e}", envelope_file.display())))?;
    let env = decode_envelope(&entity, &params)
        .map_err(|e| invalid(format!("{}: {e}", envelope_file.display())))?;

    let disclosed_text = fs::read_to_string(disclosed_file)
        .map_err(|e| fail(exit_code::USAGE, format!("cannot read {}: {e}", disclosed_file.display())))?;
    let disclosed = from_base64_text(&disclosed_text)
        .and_then(|bytes| decode_disclosed(&bytes))
        .map_err(|e| invalid(format!("{}: {e}", disclosed_file.display())))?;

    let directory = state::load_directory(&cfg, &params)?;
    let pk_a = directory
        .records()
        .find(|r| r.identity == env.sender)
        .map(|r| r.pk.clone())
        .ok_or_else(|| {
            fail(exit_code::UNKNOWN_IDENTITY, format!("sender {} not in the directory", env.sender))
        })?;

    let ok = public_verify(&env, &disclosed.message, &disclosed.key, &pk_a, &params, suite);
    if json {
        println!("{}", json!({"sender": env.sender.as_str(), "verified": ok}));
    } else if ok {
        println!("verification ok");
    } else {
        println!("verification failed");
    }
    if ok {
        Ok(())
    } else {
        Err(fail(exit_code::FAILED, "verification failed"))
    }
}

pub fn revoke(cfg: Config, seed: Option<u64>, identity: &str, json: bool) -> Result<()> {
    let id = parse_identity(identity)?;
    let mut world = state::open(cfg, seed)?;
    world
        .bus
        .revoke(&id, world.now)
        .map_err(|e| fail(exit_code::UNKNOWN_IDENTITY, e.to_string()))?;
    world.save()?;
    if json {
        println!("{}", json!({"revoked": id.as_str(), "at": world.now}));
    } else {
        println!("revoked {id} at {}", world.now);
    }
    Ok(())
}

pub fn simulate(
    script: &Path,
    seed: Option<u64>,
    transcript_out: Option<&Path>,
    json: bool,
) -> Result<()> {
    let text = fs::read_to_string(script)
        .map_err(|e| fail(exit_code::USAGE, format!("cannot read {}: {e}", script.display())))?;
    let outcome = sim::run_scenario(&text, seed)
        .map_err(|e| fail(exit_code::USAGE, format!("{}: {e}", script.display())))?;

    let path = transcript_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| format!("{}.transcript", outcome.name).into());
    fs::write(&path, to_base64_text(&outcome.transcript.to_bytes()))
        .map_err(|e| fail(exit_code::USAGE, format!("cannot write {}: {e}", path.display())))?;
    eprintln!("transcript: {}", path.display());

    let total = outcome.verdicts.len();
    let passed = outcome.verdicts.iter().filter(|v| v.passed).count();
    if json {
        let steps: Vec<serde_json::Value> = outcome
            .verdicts
            .iter()
            .map(|v| {
                json!({
                    "line": v.line,
                    "step": v.raw,
                    "passed": v.passed,
                    "detail": v.detail,
                })
            })
            .collect();
        println!(
            "{}",
            json!({
                "scenario": outcome.name,
                "passed": outcome.passed,
                "steps": steps,
                "transcript": path.display().to_string(),
            })
        );
    } else {
        for v in &outcome.verdicts {
            let status = if v.passed { "ok" } else { "FAIL" };
            println!("line {}: {} -- {status}: {}", v.line, v.raw, v.detail);
        }
        println!("scenario {}: {passed}/{total} steps passed", outcome.name);
    }
    if outcome.passed {
        Ok(())
    } else {
        Err(fail(exit_code::FAILED, format!("{} step(s) failed", total - passed)))
    }
}
