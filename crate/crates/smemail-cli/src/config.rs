//! Line-oriented `key=value` configuration plus curve resolution.
//!
//! The `curve` value is either a registered name or a path to a parameter
//! file (same `key=value` shape: `q`, `a`, `b`, `gx`, `gy`, `n`, decimal or
//! `0x`-prefixed). Loaded parameters are validated in the mode implied by
//! their size — anything past desk scale must survive the strict checks.

use std::path::{Path, PathBuf};

use anyhow::Result;
use num_bigint::BigUint;
use smemail_core::curve::{curve_by_name, custom_params, DomainParams, ValidationMode};
use smemail_core::flow::Topology;
use smemail_core::suite::{suite_by_name, Suite};

use crate::{exit_code, fail};

/// Group sizes up to this many bits run under test-mode validation.
pub const TEST_MODE_BITS: u64 = 40;

#[derive(Debug, Clone)]
pub struct Config {
    pub curve: String,
    pub suite: String,
    pub keystore_dir: PathBuf,
    pub directory_dir: PathBuf,
    pub freshness_window: u64,
    pub topology: Topology,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            curve: "t17".into(),
            suite: "sha256-aes128".into(),
            keystore_dir: PathBuf::from("smemail/keys"),
            directory_dir: PathBuf::from("smemail/state"),
            freshness_window: 300,
            topology: Topology::Basic,
        }
    }
}

pub fn load(
    path: Option<&Path>,
    curve_flag: Option<String>,
    topology_flag: Option<String>,
) -> Result<Config> {
    let mut cfg = Config::default();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|e| {
            fail(exit_code::USAGE, format!("cannot read config {}: {e}", path.display()))
        })?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                fail(
                    exit_code::USAGE,
                    format!("{}:{}: expected key=value", path.display(), idx + 1),
                )
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "curve" => cfg.curve = value.into(),
                "suite" => cfg.suite = value.into(),
                "keystore_dir" => cfg.keystore_dir = value.into(),
                "directory_dir" => cfg.directory_dir = value.into(),
                "freshness_window" => {
                    cfg.freshness_window = value.parse().map_err(|_| {
                        fail(
                            exit_code::USAGE,
                            format!("{}:{}: freshness_window must be seconds", path.display(), idx + 1),
                        )
                    })?
                }
                "topology" => {
                    cfg.topology = Topology::parse(value).ok_or_else(|| {
                        fail(
                            exit_code::USAGE,
                            format!("{}:{}: unknown topology {value:?}", path.display(), idx + 1),
                        )
                    })?
                }
                other => {
                    return Err(fail(
                        exit_code::USAGE,
                        format!("{}:{}: unknown config key {other:?}", path.display(), idx + 1),
                    ))
                }
            }
        }
    }
    if let Some(c) = curve_flag {
        cfg.curve = c;
    }
    if let Some(t) = topology_flag {
        cfg.topology = Topology::parse(&t)
            .ok_or_else(|| fail(exit_code::USAGE, format!("unknown topology {t:?}")))?;
    }
    Ok(cfg)
}

pub fn implied_mode(params: &DomainParams) -> ValidationMode {
    if params.order_bits() <= TEST_MODE_BITS {
        ValidationMode::Test
    } else {
        ValidationMode::Strict
    }
}

impl Config {
    /// Resolves and validates the configured curve. Returns the parameters
    /// and whether they run in test mode.
    pub fn resolve_curve(&self) -> Result<(DomainParams, bool)> {
        let params = match curve_by_name(&self.curve) {
            Some(p) => p,
            None => params_from_file(Path::new(&self.curve))?,
        };
        let mode = implied_mode(&params);
        params.ensure_valid(mode).map_err(|e| {
            fail(exit_code::WEAK_PARAMS, format!("weak parameters: {e}"))
        })?;
        Ok((params, mode == ValidationMode::Test))
    }

    pub fn resolve_suite(&self) -> Result<&'static Suite> {
        suite_by_name(&self.suite)
            .ok_or_else(|| fail(exit_code::USAGE, format!("unknown suite {:?}", self.suite)))
    }
}

fn params_from_file(path: &Path) -> Result<DomainParams> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        fail(
            exit_code::USAGE,
            format!("curve is neither a known name nor a readable file ({}): {e}", path.display()),
        )
    })?;
    let mut fields: [Option<BigUint>; 6] = Default::default();
    const NAMES: [&str; 6] = ["q", "a", "b", "gx", "gy", "n"];
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |m: String| fail(exit_code::USAGE, format!("{}:{}: {m}", path.display(), idx + 1));
        let (key, value) =
            line.split_once('=').ok_or_else(|| bad("expected key=value".into()))?;
        let (key, value) = (key.trim(), value.trim());
        let slot = NAMES
            .iter()
            .position(|n| *n == key)
            .ok_or_else(|| bad(format!("unknown parameter {key:?}")))?;
        let parsed = match value.strip_prefix("0x") {
            Some(hexstr) => BigUint::parse_bytes(hexstr.as_bytes(), 16),
            None => BigUint::parse_bytes(value.as_bytes(), 10),
        }
        .ok_or_else(|| bad(format!("cannot parse integer {value:?}")))?;
        fields[slot] = Some(parsed);
    }
    let mut taken = fields.into_iter();
    let mut next = |name: &str| {
        taken.next().flatten().ok_or_else(|| {
            fail(exit_code::USAGE, format!("{}: missing parameter {name}", path.display()))
        })
    };
    Ok(custom_params(next("q")?, next("a")?, next("b")?, next("gx")?, next("gy")?, next("n")?))
}
