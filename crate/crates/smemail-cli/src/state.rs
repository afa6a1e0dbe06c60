//! The on-disk world: fixture service keys, the directory, mail spools,
//! keystores, and a virtual clock.
//!
//! Layout under `directory_dir`:
//! `clock`, `ca.key`, `ocsp.key`, `dv.key`, `directory`, `dv.log`, and
//! `mail/<slug>/NNNNNN.eml` (+ `.report` sidecar in delegated mode).
//! Under `keystore_dir`: `<slug>.keystore`, `<slug>.cert`, `<slug>.seen`.
//!
//! Time is virtual: the clock starts at a fixed epoch and advances thirty
//! seconds per state-touching command, which keeps freshness windows and
//! certificate lifetimes reproducible.

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use smemail_core::curve::DomainParams;
use smemail_core::flow::{ServiceBus, TrustedRoots};
use smemail_core::pki::{self, CertificateAuthority, EncryptedKeystore, Identity, KeyPair};
use smemail_core::services::{
    record_from_bytes, record_to_bytes, Directory, DvServer, MailItem, MailServer, OcspServer,
};
use smemail_core::suite::{suite_by_name, Suite};
use smemail_core::wire::messages::{decode_dv_response, encode_dv_response};
use smemail_core::wire::mime::MimeEntity;
use smemail_core::wire::tlv::{self, from_base64_text, tag, to_base64_text};

use crate::config::Config;
use crate::{exit_code, fail};

pub const EPOCH: u64 = 1_700_000_000;
pub const TICK: u64 = 30;

pub struct World {
    pub cfg: Config,
    pub params: DomainParams,
    pub suite: &'static Suite,
    /// True when the curve runs under test-mode validation.
    pub test_mode: bool,
    pub now: u64,
    pub bus: ServiceBus,
    pub ca: CertificateAuthority,
    pub roots: TrustedRoots,
    pub rng: ChaCha20Rng,
}

/// Filesystem-safe name for an identity: printable chars kept, the rest
/// replaced, plus a short digest suffix so sanitization cannot collide.
pub fn slug(id: &Identity) -> String {
    let safe: String = id
        .as_str()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "@._+-".contains(c) { c } else { '_' })
        .collect();
    let suite = suite_by_name("sha256-aes128").expect("default suite is registered");
    let d = suite.digest(id.as_bytes());
    format!("{safe}-{:02x}{:02x}{:02x}{:02x}", d[0], d[1], d[2], d[3])
}

fn read_text(path: &PathBuf) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_text(path: &PathBuf, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Service key file: version, curve id, identity, secret scalar, and (for
/// the CA) the next certificate serial. These are unattended fixture
/// services, so the scalars live unwrapped inside the state directory.
fn service_key_to_text(
    id: &Identity,
    keys: &KeyPair,
    serial: Option<u64>,
    params: &DomainParams,
) -> String {
    let mut w = tlv::Writer::new();
    w.u8_record(tag::VERSION, 1)
        .u8_record(tag::CURVE_ID, params.id)
        .record(tag::IDENTITY, id.as_bytes())
        .record(tag::SCALAR, &params.encode_scalar(&keys.sk));
    if let Some(s) = serial {
        w.u64_record(tag::SERIAL, s);
    }
    to_base64_text(&w.into_bytes())
}

fn service_key_from_text(
    text: &str,
    params: &DomainParams,
    path: &PathBuf,
) -> Result<(Identity, KeyPair, Option<u64>)> {
    let corrupt =
        |m: String| fail(exit_code::INTERNAL, format!("{}: {m}", path.display()));
    let bytes = from_base64_text(text).map_err(|e| corrupt(e.to_string()))?;
    let mut r = tlv::Reader::new(&bytes);
    let inner = (|| -> Result<_, tlv::DecodeError> {
        let _ = r.expect_u8(tag::VERSION)?;
        let curve_id = r.expect_u8(tag::CURVE_ID)?;
        let (id_raw, _) = r.expect(tag::IDENTITY)?;
        let (sk_raw, _) = r.expect(tag::SCALAR)?;
        let serial = match r.peek_tag() {
            Some(t) if t == tag::SERIAL => Some(r.expect_u64(tag::SERIAL)?),
            _ => None,
        };
        r.finish()?;
        Ok((curve_id, id_raw.to_vec(), sk_raw.to_vec(), serial))
    })()
    .map_err(|e| corrupt(e.to_string()))?;
    let (curve_id, id_raw, sk_raw, serial) = inner;
    if curve_id != params.id {
        return Err(fail(
            exit_code::USAGE,
            format!(
                "{}: state was initialized for curve id {curve_id:#04x}, config says {:#04x}; \
                 use a fresh directory_dir to switch curves",
                path.display(),
                params.id
            ),
        ));
    }
    let id = std::str::from_utf8(&id_raw)
        .ok()
        .and_then(|s| Identity::parse(s).ok())
        .ok_or_else(|| corrupt("bad identity".into()))?;
    let sk = params.decode_scalar(&sk_raw).map_err(|e| corrupt(e.to_string()))?;
    let pk = params.mul_g(sk.value());
    Ok((id, KeyPair { sk, pk }, serial))
}

/// Reads the directory file if present; an absent file is an empty directory.
pub fn load_directory(cfg: &Config, params: &DomainParams) -> Result<Directory> {
    let mut directory = Directory::new();
    let path = cfg.directory_dir.join("directory");
    if !path.exists() {
        return Ok(directory);
    }
    let corrupt = |m: String| fail(exit_code::INTERNAL, format!("{}: {m}", path.display()));
    let bytes = from_base64_text(&read_text(&path)?).map_err(|e| corrupt(e.to_string()))?;
    let mut r = tlv::Reader::new(&bytes);
    r.expect_u8(tag::VERSION).map_err(|e| corrupt(e.to_string()))?;
    while !r.at_end() {
        let (rec_bytes, _) = r.expect(tag::CIPHERTEXT).map_err(|e| corrupt(e.to_string()))?;
        let rec = record_from_bytes(rec_bytes, params).map_err(|e| corrupt(e.to_string()))?;
        directory.restore(rec).map_err(|e| corrupt(e.to_string()))?;
    }
    Ok(directory)
}

pub fn open(cfg: Config, seed: Option<u64>) -> Result<World> {
    let (params, test_mode) = cfg.resolve_curve()?;
    let suite = cfg.resolve_suite()?;
    fs::create_dir_all(&cfg.directory_dir)
        .with_context(|| format!("creating {}", cfg.directory_dir.display()))?;
    fs::create_dir_all(cfg.directory_dir.join("mail"))?;
    fs::create_dir_all(&cfg.keystore_dir)
        .with_context(|| format!("creating {}", cfg.keystore_dir.display()))?;

    let mut rng = match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::seed_from_u64(rand::rngs::OsRng.next_u64()),
    };

    let clock_path = cfg.directory_dir.join("clock");
    let now = if clock_path.exists() {
        let text = read_text(&clock_path)?;
        text.trim().parse::<u64>().map_err(|_| {
            fail(exit_code::INTERNAL, format!("{}: corrupt clock", clock_path.display()))
        })? + TICK
    } else {
        EPOCH + TICK
    };

    let mut load_service = |name: &str, with_serial: bool| -> Result<(KeyPair, Option<u64>)> {
        let path = cfg.directory_dir.join(format!("{name}.key"));
        if path.exists() {
            let (_, keys, serial) = service_key_from_text(&read_text(&path)?, &params, &path)?;
            Ok((keys, serial))
        } else {
            let keys = pki::generate_keypair(&params, &mut rng);
            let id = Identity::parse(&format!("{name}@local")).unwrap();
            let serial = with_serial.then_some(1);
            write_text(&path, &service_key_to_text(&id, &keys, serial, &params))?;
            Ok((keys, serial))
        }
    };
    let (ca_keys, ca_serial) = load_service("ca", true)?;
    let (ocsp_keys, _) = load_service("ocsp", false)?;
    let (dv_keys, _) = load_service("dv", false)?;

    let ca = CertificateAuthority::resume(
        Identity::parse("ca@local").unwrap(),
        ca_keys,
        ca_serial.unwrap_or(1),
    );
    let roots = TrustedRoots {
        ca_pk: ca.keys.pk.clone(),
        ocsp_pk: ocsp_keys.pk.clone(),
        dv_pk: dv_keys.pk.clone(),
    };

    let directory = load_directory(&cfg, &params)?;

    let ocsp = OcspServer {
        id: Identity::parse("ocsp@local").unwrap(),
        keys: ocsp_keys,
        ca_pk: roots.ca_pk.clone(),
    };
    let dv = DvServer::new(
        Identity::parse("dv@local").unwrap(),
        dv_keys,
        roots.ocsp_pk.clone(),
        roots.ca_pk.clone(),
    );
    let server_seed = rng.next_u64();
    let bus = ServiceBus::assemble(
        params.clone(),
        suite,
        directory,
        ocsp,
        dv,
        MailServer::new(),
        server_seed,
    );

    Ok(World { cfg, params, suite, test_mode, now, bus, ca, roots, rng })
}

impl World {
    /// Persists everything a command may have changed: clock, CA serial,
    /// directory, and any validation-server log lines from this process.
    pub fn save(&self) -> Result<()> {
        write_text(&self.cfg.directory_dir.join("clock"), &format!("{}\n", self.now))?;
        write_text(
            &self.cfg.directory_dir.join("ca.key"),
            &service_key_to_text(&self.ca.id, &self.ca.keys, Some(self.ca.next_serial()), &self.params),
        )?;

        let mut w = tlv::Writer::new();
        w.u8_record(tag::VERSION, 1);
        for rec in self.bus.directory.records() {
            w.record(tag::CIPHERTEXT, &record_to_bytes(rec, &self.params, self.suite));
        }
        write_text(&self.cfg.directory_dir.join("directory"), &to_base64_text(w.as_bytes()))?;

        if !self.bus.dv.log.is_empty() {
            use std::io::Write;
            let path = self.cfg.directory_dir.join("dv.log");
            let mut f = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .with_context(|| format!("opening {}", path.display()))?;
            for line in &self.bus.dv.log {
                writeln!(f, "{line}")?;
            }
        }
        Ok(())
    }

    // ---- per-identity files ------------------------------------------------

    pub fn keystore_path(&self, id: &Identity) -> PathBuf {
        self.cfg.keystore_dir.join(format!("{}.keystore", slug(id)))
    }

    pub fn cert_path(&self, id: &Identity) -> PathBuf {
        self.cfg.keystore_dir.join(format!("{}.cert", slug(id)))
    }

    fn seen_path(&self, id: &Identity) -> PathBuf {
        self.cfg.keystore_dir.join(format!("{}.seen", slug(id)))
    }

    pub fn write_keystore(&self, ks: &EncryptedKeystore) -> Result<PathBuf> {
        let path = self.keystore_path(&ks.identity);
        write_text(&path, &to_base64_text(&pki::keystore_to_bytes(ks, &self.params, self.suite)))?;
        Ok(path)
    }

    pub fn read_keystore(&self, id: &Identity) -> Result<EncryptedKeystore> {
        let path = self.keystore_path(id);
        if !path.exists() {
            return Err(fail(
                exit_code::UNKNOWN_IDENTITY,
                format!("no keystore for {id}; run `smemail keygen {id}` first"),
            ));
        }
        let bytes = from_base64_text(&read_text(&path)?)
            .map_err(|e| fail(exit_code::INTERNAL, format!("{}: {e}", path.display())))?;
        let (ks, suite_id) = pki::keystore_from_bytes(&bytes, &self.params)
            .map_err(|e| fail(exit_code::INTERNAL, format!("{}: {e}", path.display())))?;
        if suite_id != self.suite.id {
            return Err(fail(
                exit_code::USAGE,
                format!("{}: keystore was sealed under a different suite", path.display()),
            ));
        }
        Ok(ks)
    }

    pub fn write_cert(&self, cert: &pki::Certificate) -> Result<PathBuf> {
        let path = self.cert_path(&cert.subject);
        write_text(&path, &to_base64_text(&pki::cert_to_bytes(cert, &self.params, self.suite)))?;
        Ok(path)
    }

    pub fn load_seen(&self, id: &Identity) -> Result<BTreeSet<Vec<u8>>> {
        let path = self.seen_path(id);
        let mut out = BTreeSet::new();
        if !path.exists() {
            return Ok(out);
        }
        let corrupt = |m: String| fail(exit_code::INTERNAL, format!("{}: {m}", path.display()));
        let bytes = from_base64_text(&read_text(&path)?).map_err(|e| corrupt(e.to_string()))?;
        let mut r = tlv::Reader::new(&bytes);
        while !r.at_end() {
            let (v, _) = r.expect(tag::POINT).map_err(|e| corrupt(e.to_string()))?;
            out.insert(v.to_vec());
        }
        Ok(out)
    }

    pub fn save_seen(&self, id: &Identity, seen: &BTreeSet<Vec<u8>>) -> Result<()> {
        let mut w = tlv::Writer::new();
        for enc in seen {
            w.record(tag::POINT, enc);
        }
        write_text(&self.seen_path(id), &to_base64_text(w.as_bytes()))
    }

    // ---- mail spool ---------------------------------------------------------

    pub fn box_dir(&self, id: &Identity) -> PathBuf {
        self.cfg.directory_dir.join("mail").join(slug(id))
    }

    fn spool_files(&self, id: &Identity) -> Result<Vec<PathBuf>> {
        let dir = self.box_dir(id);
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let entries = fs::read_dir(&dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<Vec<PathBuf>>>()?;
        let mut files: Vec<PathBuf> = entries
            .into_iter()
            .filter(|p| p.extension().is_some_and(|x| x == "eml"))
            .collect();
        files.sort();
        Ok(files)
    }

    /// Loads the identity's queued mail in arrival order, returning each
    /// item together with its raw entity octets.
    pub fn load_box(&self, id: &Identity) -> Result<Vec<(MailItem, Vec<u8>)>> {
        let mut out = Vec::new();
        for path in self.spool_files(id)? {
            let corrupt =
                |m: String| fail(exit_code::INTERNAL, format!("{}: {m}", path.display()));
            let raw = fs::read(&path)?;
            let text = std::str::from_utf8(&raw).map_err(|_| corrupt("not UTF-8".into()))?;
            let entity = MimeEntity::parse(text).map_err(|e| corrupt(e.to_string()))?;
            let report_path = path.with_extension("report");
            let report = if report_path.exists() {
                let bytes = from_base64_text(&read_text(&report_path)?)
                    .map_err(|e| corrupt(e.to_string()))?;
                Some(decode_dv_response(&bytes, &self.params).map_err(|e| corrupt(e.to_string()))?)
            } else {
                None
            };
            out.push((MailItem { entity, report }, raw));
        }
        Ok(out)
    }

    /// Appends one item to the identity's spool; returns the entity path.
    pub fn append_box(&self, id: &Identity, item: &MailItem) -> Result<PathBuf> {
        let dir = self.box_dir(id);
        fs::create_dir_all(&dir)?;
        let next = self
            .spool_files(id)?
            .iter()
            .filter_map(|p| p.file_stem()?.to_str()?.parse::<u64>().ok())
            .max()
            .map_or(1, |n| n + 1);
        let path = dir.join(format!("{next:06}.eml"));
        fs::write(&path, item.entity.render_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
        if let Some(report) = &item.report {
            write_text(
                &path.with_extension("report"),
                &to_base64_text(&encode_dv_response(report, &self.params)),
            )?;
        }
        Ok(path)
    }

    pub fn clear_box(&self, id: &Identity) -> Result<()> {
        for path in self.spool_files(id)? {
            let report = path.with_extension("report");
            if report.exists() {
                fs::remove_file(&report)?;
            }
            fs::remove_file(&path)?;
        }
        Ok(())
    }
}
