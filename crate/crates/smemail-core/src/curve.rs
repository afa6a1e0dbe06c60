//! Prime-field and short-Weierstrass curve arithmetic.
//!
//! Everything works on arbitrary-precision integers so one code path serves
//! both the desk-scale test curve (q = 17, n = 19) and production-size
//! parameters. Group operations use affine coordinates with extended-gcd
//! modular inversion; nothing here attempts to be constant-time — the threat
//! model of this toolkit is protocol-level, not side-channel.
//!
//! Two curves ship built in:
//!
//! * `t17` — y² = x³ + 2x + 2 over F_17, G = (5, 1), n = 19. Small enough to
//!   enumerate the whole group, which is what the oracle tests do.
//! * `p256` — the standard 256-bit prime curve, used where real security
//!   margins are wanted.

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;
use std::fmt;
use thiserror::Error;

use crate::opcount;

/// Identifier octets for the built-in curves (the `curve_id` TLV record).
pub const CURVE_ID_P256: u8 = 0x01;
pub const CURVE_ID_T17: u8 = 0x02;
/// Id for operator-supplied parameter files. Not in the wire registry:
/// custom curves interoperate only between parties sharing the same file.
pub const CURVE_ID_CUSTOM: u8 = 0x7F;

/// How many `n | q^i - 1` embedding-degree rounds each validation mode runs.
///
/// Strict mode uses the conventional MOV bound. Test mode cannot: for any
/// curve small enough for exhaustive oracles, ord(q mod n) divides n - 1 and
/// so is itself tiny — a 20-round loop rejects every desk-scale curve,
/// including t17 (17^9 ≡ 1 mod 19). Test mode therefore keeps only the
/// supersingular/low-degree guard the full loop subsumes.
pub const EMBEDDING_ROUNDS_STRICT: u32 = 20;
pub const EMBEDDING_ROUNDS_TEST: u32 = 6;

/// An element of F_q in canonical (fully reduced) form.
///
/// Constructors that go through [`DomainParams`] reduce; [`FieldElement::from_raw`]
/// deliberately does not, so validation tests can build non-canonical values.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct FieldElement(BigUint);

impl FieldElement {
    /// Wraps a value without reducing it. Callers outside tests should prefer
    /// [`DomainParams::fe`].
    pub fn from_raw(v: BigUint) -> Self {
        FieldElement(v)
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

/// A scalar, normally held reduced mod n. [`Scalar::from_raw`] skips the
/// reduction for tests probing range checks.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct Scalar(BigUint);

impl Scalar {
    pub fn from_raw(v: BigUint) -> Self {
        Scalar(v)
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

/// A point on the curve: the identity, or an affine coordinate pair.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum CurvePoint {
    Infinity,
    Affine { x: FieldElement, y: FieldElement },
}

impl CurvePoint {
    pub fn affine(x: FieldElement, y: FieldElement) -> Self {
        CurvePoint::Affine { x, y }
    }

    pub fn is_infinity(&self) -> bool {
        matches!(self, CurvePoint::Infinity)
    }

    /// Affine coordinates, or `None` for the identity.
    pub fn coords(&self) -> Option<(&FieldElement, &FieldElement)> {
        match self {
            CurvePoint::Infinity => None,
            CurvePoint::Affine { x, y } => Some((x, y)),
        }
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum CurveError {
    #[error("inverse of zero")]
    ZeroInverse,
    #[error("element not invertible (composite modulus)")]
    NotInvertible,
    #[error("point is not on the curve")]
    OffCurve,
    #[error("bad point encoding marker {0:#04x}")]
    BadMarker(u8),
    #[error("wrong encoding length: expected {expected}, found {found}")]
    WrongLength { expected: usize, found: usize },
    #[error("coordinate not below the field prime")]
    CoordinateOutOfRange,
    #[error("scalar not below the group order")]
    ScalarOutOfRange,
    #[error("invalid domain parameters: {}", format_violations(.0))]
    InvalidParams(Vec<ParamViolation>),
}

fn format_violations(v: &[ParamViolation]) -> String {
    v.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("; ")
}

/// One failed domain-parameter check. `validate` reports every violation it
/// finds, not just the first.
#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ParamViolation {
    #[error("field prime q is not prime")]
    FieldNotPrime,
    #[error("singular curve: 4a^3 + 27b^2 = 0 (mod q)")]
    Singular,
    #[error("generator is not on the curve")]
    GeneratorOffCurve,
    #[error("order n is not prime")]
    OrderNotPrime,
    #[error("nG != O")]
    GeneratorOrderMismatch,
    #[error("n = q (anomalous curve)")]
    OrderEqualsFieldPrime,
    #[error("n <= 4*sqrt(q): order too small for the field")]
    OrderBelowHasseBound,
    #[error("small embedding degree: n | q^{0} - 1")]
    SmallEmbeddingDegree(u32),
    #[error("n <= 2^160: below the strict security floor")]
    OrderBelowStrictMinimum,
}

/// Validation rigor. `Strict` enforces everything including the 2^160 order
/// floor and the full embedding loop; `Test` admits desk-scale curves while
/// keeping every structural check.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ValidationMode {
    Strict,
    Test,
}

/// Domain parameters E(F_q): y² = x³ + ax + b, generator g of prime order n.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomainParams {
    pub id: u8,
    pub name: String,
    pub q: BigUint,
    pub a: FieldElement,
    pub b: FieldElement,
    pub g: CurvePoint,
    pub n: BigUint,
}

impl DomainParams {
    // ---- field arithmetic -------------------------------------------------

    /// Reduces an arbitrary integer into F_q.
    pub fn fe(&self, v: impl Into<BigUint>) -> FieldElement {
        FieldElement(v.into() % &self.q)
    }

    pub fn fe_add(&self, lhs: &FieldElement, rhs: &FieldElement) -> FieldElement {
        FieldElement((&lhs.0 + &rhs.0) % &self.q)
    }

    pub fn fe_sub(&self, lhs: &FieldElement, rhs: &FieldElement) -> FieldElement {
        FieldElement(((&lhs.0 + &self.q) - (&rhs.0 % &self.q)) % &self.q)
    }

    pub fn fe_mul(&self, lhs: &FieldElement, rhs: &FieldElement) -> FieldElement {
        FieldElement((&lhs.0 * &rhs.0) % &self.q)
    }

    /// Modular inverse in F_q. Zero has none; with a composite modulus (seen
    /// only while validating broken parameters) non-units have none either.
    pub fn fe_inv(&self, x: &FieldElement) -> Result<FieldElement, CurveError> {
        if x.0.is_zero() {
            return Err(CurveError::ZeroInverse);
        }
        mod_inv(&x.0, &self.q).map(FieldElement).ok_or(CurveError::NotInvertible)
    }

    // ---- group law --------------------------------------------------------

    pub fn is_on_curve(&self, p: &CurvePoint) -> bool {
        match p.coords() {
            None => true,
            Some((x, y)) => {
                let lhs = self.fe_mul(y, y);
                let x2 = self.fe_mul(x, x);
                let x3 = self.fe_mul(&x2, x);
                let rhs = self.fe_add(&self.fe_add(&x3, &self.fe_mul(&self.a, x)), &self.b);
                lhs == rhs
            }
        }
    }

    /// Point addition. Both inputs must be on the curve (or infinity).
    pub fn point_add(&self, p: &CurvePoint, q: &CurvePoint) -> Result<CurvePoint, CurveError> {
        if !self.is_on_curve(p) || !self.is_on_curve(q) {
            return Err(CurveError::OffCurve);
        }
        self.add_raw(p, q)
    }

    pub fn point_neg(&self, p: &CurvePoint) -> CurvePoint {
        match p.coords() {
            None => CurvePoint::Infinity,
            Some((x, y)) => {
                let ny = if y.is_zero() { self.fe(0u32) } else { FieldElement(&self.q - &y.0) };
                CurvePoint::affine(x.clone(), ny)
            }
        }
    }

    /// The group law with no on-curve precondition; used internally and by
    /// validation, where the parameters themselves are under test.
    fn add_raw(&self, p: &CurvePoint, q: &CurvePoint) -> Result<CurvePoint, CurveError> {
        let ((x1, y1), (x2, y2)) = match (p.coords(), q.coords()) {
            (None, _) => return Ok(q.clone()),
            (_, None) => return Ok(p.clone()),
            (Some(p), Some(q)) => (p, q),
        };
        let lambda = if x1 == x2 {
            if (&y1.0 + &y2.0) % &self.q == BigUint::zero() {
                return Ok(CurvePoint::Infinity);
            }
            // tangent: (3x² + a) / 2y
            let num = self.fe_add(
                &self.fe_mul(&self.fe(3u32), &self.fe_mul(x1, x1)),
                &self.a,
            );
            let den = self.fe_mul(&self.fe(2u32), y1);
            self.fe_mul(&num, &self.fe_inv(&den)?)
        } else {
            // chord: (y2 - y1) / (x2 - x1)
            let num = self.fe_sub(y2, y1);
            let den = self.fe_sub(x2, x1);
            self.fe_mul(&num, &self.fe_inv(&den)?)
        };
        let x3 = self.fe_sub(&self.fe_sub(&self.fe_mul(&lambda, &lambda), x1), x2);
        let y3 = self.fe_sub(&self.fe_mul(&lambda, &self.fe_sub(x1, &x3)), y1);
        Ok(CurvePoint::affine(x3, y3))
    }

    /// Double-and-add scalar multiplication. `p` must be on the curve.
    pub fn scalar_mul(&self, k: &BigUint, p: &CurvePoint) -> Result<CurvePoint, CurveError> {
        if !self.is_on_curve(p) {
            return Err(CurveError::OffCurve);
        }
        self.scalar_mul_raw(k, p)
    }

    fn scalar_mul_raw(&self, k: &BigUint, p: &CurvePoint) -> Result<CurvePoint, CurveError> {
        opcount::record_scalar_mul();
        let mut acc = CurvePoint::Infinity;
        for i in (0..k.bits()).rev() {
            acc = self.add_raw(&acc, &acc)?;
            if k.bit(i) {
                acc = self.add_raw(&acc, p)?;
            }
        }
        Ok(acc)
    }

    /// kG for the fixed generator. Parameters must have passed validation;
    /// on garbage parameters this can panic, which is a contract violation,
    /// not a runtime condition.
    pub fn mul_g(&self, k: &BigUint) -> CurvePoint {
        self.scalar_mul_raw(k, &self.g)
            .expect("domain parameters were not validated")
    }

    // ---- scalars ----------------------------------------------------------

    /// Bit length of n — the `f` that drives the key-agreement truncation.
    pub fn order_bits(&self) -> u64 {
        self.n.bits()
    }

    pub fn scalar_from(&self, v: impl Into<BigUint>) -> Scalar {
        Scalar(v.into() % &self.n)
    }

    pub fn sc_add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 + &b.0) % &self.n)
    }

    pub fn sc_sub(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar(((&a.0 + &self.n) - (&b.0 % &self.n)) % &self.n)
    }

    pub fn sc_mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 * &b.0) % &self.n)
    }

    /// Uniform scalar in [1, n-1] by rejection sampling: draw `bits(n)` random
    /// bits, reject zero and anything ≥ n. No modular reduction, so no bias.
    pub fn random_scalar(&self, rng: &mut dyn RngCore) -> Scalar {
        let width = self.scalar_width();
        let excess = (width as u64) * 8 - self.n.bits();
        loop {
            let mut buf = vec![0u8; width];
            rng.fill_bytes(&mut buf);
            buf[0] &= 0xFFu8 >> excess;
            let v = BigUint::from_bytes_be(&buf);
            if !v.is_zero() && v < self.n {
                return Scalar(v);
            }
        }
    }

    // ---- codecs -----------------------------------------------------------

    /// Octet width of one field coordinate.
    pub fn coord_width(&self) -> usize {
        ((self.q.bits() + 7) / 8) as usize
    }

    /// Octet width of an encoded scalar.
    pub fn scalar_width(&self) -> usize {
        ((self.n.bits() + 7) / 8) as usize
    }

    /// Fixed-width big-endian encoding of a field element.
    pub fn encode_field(&self, fe: &FieldElement) -> Vec<u8> {
        pad_be(&fe.0, self.coord_width())
    }

    /// Uncompressed point encoding: `0x04 ‖ x ‖ y`, or the single octet
    /// `0x00` for the identity.
    pub fn encode_point(&self, p: &CurvePoint) -> Vec<u8> {
        match p.coords() {
            None => vec![0x00],
            Some((x, y)) => {
                let mut out = Vec::with_capacity(1 + 2 * self.coord_width());
                out.push(0x04);
                out.extend_from_slice(&self.encode_field(x));
                out.extend_from_slice(&self.encode_field(y));
                out
            }
        }
    }

    /// Strict inverse of [`encode_point`]: checks marker, length, coordinate
    /// range, and curve membership before admitting the point.
    pub fn decode_point(&self, octets: &[u8]) -> Result<CurvePoint, CurveError> {
        let w = self.coord_width();
        match octets.first() {
            None => Err(CurveError::WrongLength { expected: 1, found: 0 }),
            Some(0x00) => {
                if octets.len() == 1 {
                    Ok(CurvePoint::Infinity)
                } else {
                    Err(CurveError::WrongLength { expected: 1, found: octets.len() })
                }
            }
            Some(0x04) => {
                if octets.len() != 1 + 2 * w {
                    return Err(CurveError::WrongLength { expected: 1 + 2 * w, found: octets.len() });
                }
                let x = BigUint::from_bytes_be(&octets[1..1 + w]);
                let y = BigUint::from_bytes_be(&octets[1 + w..]);
                if x >= self.q || y >= self.q {
                    return Err(CurveError::CoordinateOutOfRange);
                }
                let p = CurvePoint::affine(FieldElement(x), FieldElement(y));
                if !self.is_on_curve(&p) {
                    return Err(CurveError::OffCurve);
                }
                Ok(p)
            }
            Some(&m) => Err(CurveError::BadMarker(m)),
        }
    }

    pub fn encode_scalar(&self, s: &Scalar) -> Vec<u8> {
        pad_be(&s.0, self.scalar_width())
    }

    pub fn decode_scalar(&self, octets: &[u8]) -> Result<Scalar, CurveError> {
        let w = self.scalar_width();
        if octets.len() != w {
            return Err(CurveError::WrongLength { expected: w, found: octets.len() });
        }
        let v = BigUint::from_bytes_be(octets);
        if v >= self.n {
            return Err(CurveError::ScalarOutOfRange);
        }
        Ok(Scalar(v))
    }

    // ---- validation -------------------------------------------------------

    /// Runs every domain-parameter check for `mode` and returns the complete
    /// violation list (empty means the parameters are acceptable).
    pub fn validate(&self, mode: ValidationMode) -> Vec<ParamViolation> {
        let mut out = Vec::new();
        if !is_probable_prime(&self.q) {
            out.push(ParamViolation::FieldNotPrime);
        }
        // 4a³ + 27b² ≠ 0 (mod q)
        let a3 = self.fe_mul(&self.fe_mul(&self.a, &self.a), &self.a);
        let b2 = self.fe_mul(&self.b, &self.b);
        let disc = self.fe_add(
            &self.fe_mul(&self.fe(4u32), &a3),
            &self.fe_mul(&self.fe(27u32), &b2),
        );
        if disc.is_zero() {
            out.push(ParamViolation::Singular);
        }
        if !self.is_on_curve(&self.g) || self.g.is_infinity() {
            out.push(ParamViolation::GeneratorOffCurve);
        }
        if !is_probable_prime(&self.n) {
            out.push(ParamViolation::OrderNotPrime);
        }
        // nG = O, tolerating arithmetic breakdown on corrupt parameters: if
        // the computation cannot even run, the order certainly isn't verified.
        match self.scalar_mul_raw(&self.n, &self.g) {
            Ok(CurvePoint::Infinity) => {}
            _ => out.push(ParamViolation::GeneratorOrderMismatch),
        }
        if self.n == self.q {
            out.push(ParamViolation::OrderEqualsFieldPrime);
        }
        // n > 4√q, in integer form n² > 16q.
        if &self.n * &self.n <= &self.q * 16u32 {
            out.push(ParamViolation::OrderBelowHasseBound);
        }
        let rounds = match mode {
            ValidationMode::Strict => EMBEDDING_ROUNDS_STRICT,
            ValidationMode::Test => EMBEDDING_ROUNDS_TEST,
        };
        if self.n > BigUint::one() {
            let mut acc = &self.q % &self.n;
            for i in 1..=rounds {
                if acc.is_one() {
                    out.push(ParamViolation::SmallEmbeddingDegree(i));
                    break;
                }
                acc = acc * &self.q % &self.n;
            }
        }
        if mode == ValidationMode::Strict && self.n <= BigUint::one() << 160 {
            out.push(ParamViolation::OrderBelowStrictMinimum);
        }
        out
    }

    pub fn ensure_valid(&self, mode: ValidationMode) -> Result<(), CurveError> {
        let v = self.validate(mode);
        if v.is_empty() {
            Ok(())
        } else {
            Err(CurveError::InvalidParams(v))
        }
    }

    /// The validation mode the parameter size implies: strict once the order
    /// clears the 2^160 floor, test otherwise.
    pub fn implied_mode(&self) -> ValidationMode {
        if self.n > BigUint::one() << 160 {
            ValidationMode::Strict
        } else {
            ValidationMode::Test
        }
    }
}

impl fmt::Display for CurvePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.coords() {
            None => write!(f, "O"),
            Some((x, y)) => write!(f, "({}, {})", x.0, y.0),
        }
    }
}

fn pad_be(v: &BigUint, width: usize) -> Vec<u8> {
    let raw = v.to_bytes_be();
    assert!(raw.len() <= width, "value wider than its fixed encoding");
    let mut out = vec![0u8; width - raw.len()];
    out.extend_from_slice(&raw);
    out
}

/// Extended-gcd modular inverse; `None` when no inverse exists.
fn mod_inv(x: &BigUint, m: &BigUint) -> Option<BigUint> {
    let e = BigInt::from(x.clone()).extended_gcd(&BigInt::from(m.clone()));
    if !e.gcd.is_one() {
        return None;
    }
    let m_int = BigInt::from(m.clone());
    let mut r = e.x % &m_int;
    if r.sign() == Sign::Minus {
        r += &m_int;
    }
    Some(r.to_biguint().expect("reduced representative is non-negative"))
}

/// Deterministic Miller–Rabin over a fixed base set (the first 40 primes).
/// Plenty for parameter validation, which is not an adversarial interface.
pub fn is_probable_prime(n: &BigUint) -> bool {
    const SMALL_PRIMES: [u32; 40] = [
        2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83,
        89, 97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173,
    ];
    if *n < BigUint::from(2u32) {
        return false;
    }
    for &p in &SMALL_PRIMES {
        let p = BigUint::from(p);
        if *n == p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    let one = BigUint::one();
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    'bases: for &a in &SMALL_PRIMES {
        let mut x = BigUint::from(a).modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = &x * &x % n;
            if x == n_minus_1 {
                continue 'bases;
            }
        }
        return false;
    }
    true
}

// ---- built-in curves ------------------------------------------------------

/// The desk-scale test curve: y² = x³ + 2x + 2 over F_17, G = (5, 1), n = 19.
/// The group is the full 19-point curve, so every statement about it can be
/// checked by enumeration.
pub fn t17() -> DomainParams {
    DomainParams {
        id: CURVE_ID_T17,
        name: "t17".into(),
        q: BigUint::from(17u32),
        a: FieldElement(BigUint::from(2u32)),
        b: FieldElement(BigUint::from(2u32)),
        g: CurvePoint::affine(
            FieldElement(BigUint::from(5u32)),
            FieldElement(BigUint::from(1u32)),
        ),
        n: BigUint::from(19u32),
    }
}

/// The standard 256-bit prime curve (a = -3 form).
pub fn p256() -> DomainParams {
    let hex = |s: &str| BigUint::parse_bytes(s.as_bytes(), 16).expect("valid hex constant");
    let q = hex("FFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFF");
    DomainParams {
        id: CURVE_ID_P256,
        name: "p256".into(),
        a: FieldElement(&q - 3u32),
        b: FieldElement(hex(
            "5AC635D8AA3A93E7B3EBBD55769886BC651D06B0CC53B0F63BCE3C3E27D2604B",
        )),
        g: CurvePoint::affine(
            FieldElement(hex(
                "6B17D1F2E12C4247F8BCE6E563A440F277037D812DEB33A0F4A13945D898C296",
            )),
            FieldElement(hex(
                "4FE342E2FE1A7F9B8EE7EB4A7C0F9E162BCE33576B315ECECBB6406837BF51F5",
            )),
        ),
        n: hex("FFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551"),
        q,
    }
}

/// Builds parameters from raw integers, as loaded from an operator-supplied
/// file. Coordinates are reduced into the field; nothing is validated here —
/// callers run [`DomainParams::ensure_valid`] in the mode implied by the
/// group size.
pub fn custom_params(
    q: BigUint,
    a: BigUint,
    b: BigUint,
    gx: BigUint,
    gy: BigUint,
    n: BigUint,
) -> DomainParams {
    DomainParams {
        id: CURVE_ID_CUSTOM,
        name: "custom".into(),
        a: FieldElement(a % &q),
        b: FieldElement(b % &q),
        g: CurvePoint::affine(FieldElement(gx % &q), FieldElement(gy % &q)),
        n,
        q,
    }
}

pub fn curve_by_name(name: &str) -> Option<DomainParams> {
    match name {
        "t17" => Some(t17()),
        "p256" => Some(p256()),
        _ => None,
    }
}

pub fn curve_by_id(id: u8) -> Option<DomainParams> {
    match id {
        CURVE_ID_T17 => Some(t17()),
        CURVE_ID_P256 => Some(p256()),
        _ => None,
    }
}
