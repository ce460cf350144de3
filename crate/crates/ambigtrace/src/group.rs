//! Prime-order multiplicative group arithmetic.
//!
//! Both backends are Schnorr groups: the order-`p` subgroup of quadratic
//! residues inside `Z_P*` for a safe prime `P = 2p + 1` with generator 2.
//! The `toy` backend (`P = 23`, `p = 11`) is small enough to enumerate every
//! element and every exponent pair, which is what the exhaustive
//! verification harness in [`crate::stats`] relies on. The `large` backend
//! is the 2048-bit MODP safe prime from RFC 3526 with its full
//! `(P-1)/2`-order subgroup.
//!
//! Elements are only ever created through group operations or through
//! [`Group::decode`], which checks subgroup membership, so a
//! [`GroupElement`] in hand is always a member.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// RFC 3526 group 14: the 2048-bit MODP safe prime.
const MODP_2048_HEX: &str = "\
FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74\
020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437\
4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED\
EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05\
98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB\
9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B\
E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718\
3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF";

/// Exhaustive sweeps and element enumeration refuse orders above this.
const ENUMERATION_CAP: u64 = 1 << 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GroupError {
    #[error("encoded element has {got} bytes, expected {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("residue is outside the ambient modulus range")]
    OutOfRange,
    #[error("value is not a member of the order-p subgroup")]
    NotMember,
    #[error("scalar is not below the group order")]
    ScalarOutOfRange,
    #[error("group order too large for exhaustive enumeration")]
    TooLargeToEnumerate,
    #[error("unknown group name: {0}")]
    UnknownName(String),
}

/// Which backend a configuration refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupName {
    Toy,
    Large,
}

impl FromStr for GroupName {
    type Err = GroupError;

    fn from_str(s: &str) -> Result<Self, GroupError> {
        match s {
            "toy" => Ok(GroupName::Toy),
            "large" => Ok(GroupName::Large),
            other => Err(GroupError::UnknownName(other.to_string())),
        }
    }
}

impl fmt::Display for GroupName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupName::Toy => write!(f, "toy"),
            GroupName::Large => write!(f, "large"),
        }
    }
}

/// Parameter block for one Schnorr group instantiation.
#[derive(Debug, Clone)]
pub struct GroupDescription {
    name: GroupName,
    /// The prime modulus `P` the subgroup lives in.
    ambient_modulus: BigUint,
    /// The prime subgroup order `p`.
    order_p: BigUint,
    /// Generator of the order-`p` subgroup.
    generator: BigUint,
    /// Bytes per serialized element: ceil(bits(P) / 8).
    element_width: usize,
    /// Bytes per serialized scalar: ceil(bits(p) / 8).
    scalar_width: usize,
}

impl GroupDescription {
    fn new(name: GroupName, ambient_modulus: BigUint, order_p: BigUint, generator: BigUint) -> Self {
        let element_width = ambient_modulus.bits().div_ceil(8) as usize;
        let scalar_width = order_p.bits().div_ceil(8) as usize;
        let desc = GroupDescription {
            name,
            ambient_modulus,
            order_p,
            generator,
            element_width,
            scalar_width,
        };
        // Generator must be a nontrivial member of the order-p subgroup:
        // g != 1 and g^p = 1 pins its order to exactly p (p prime).
        assert!(!desc.generator.is_one() && !desc.generator.is_zero());
        assert!(desc
            .generator
            .modpow(&desc.order_p, &desc.ambient_modulus)
            .is_one());
        desc
    }

    fn toy() -> &'static GroupDescription {
        static TOY: OnceLock<GroupDescription> = OnceLock::new();
        TOY.get_or_init(|| {
            GroupDescription::new(
                GroupName::Toy,
                BigUint::from(23u32),
                BigUint::from(11u32),
                BigUint::from(2u32),
            )
        })
    }

    fn large() -> &'static GroupDescription {
        static LARGE: OnceLock<GroupDescription> = OnceLock::new();
        LARGE.get_or_init(|| {
            let p = BigUint::parse_bytes(MODP_2048_HEX.as_bytes(), 16)
                .expect("modulus constant parses");
            let order = (&p - 1u32) / 2u32;
            GroupDescription::new(GroupName::Large, p, order, BigUint::from(2u32))
        })
    }

    pub fn name(&self) -> GroupName {
        self.name
    }

    pub fn order(&self) -> &BigUint {
        &self.order_p
    }

    pub fn ambient_modulus(&self) -> &BigUint {
        &self.ambient_modulus
    }

    pub fn element_width(&self) -> usize {
        self.element_width
    }

    pub fn scalar_width(&self) -> usize {
        self.scalar_width
    }
}

/// A member of the order-`p` subgroup.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupElement(BigUint);

impl GroupElement {
    pub fn value(&self) -> &BigUint {
        &self.0
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement({})", self.0)
    }
}

/// An exponent in `[0, p-1]`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Scalar(BigUint);

impl Scalar {
    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({})", self.0)
    }
}

/// Sampling range for [`Group::random_scalar`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarRange {
    /// Uniform over `[0, p-1]`.
    Full,
    /// Uniform over `[1, p-1]`.
    NonZero,
}

/// Operational handle around a [`GroupDescription`], instrumented with a
/// counter of `pow` invocations so tests can pin the exact exponentiation
/// cost of higher-level operations.
pub struct Group {
    desc: &'static GroupDescription,
    pow_count: AtomicU64,
}

impl Group {
    pub fn toy() -> Group {
        Group {
            desc: GroupDescription::toy(),
            pow_count: AtomicU64::new(0),
        }
    }

    pub fn large() -> Group {
        Group {
            desc: GroupDescription::large(),
            pow_count: AtomicU64::new(0),
        }
    }

    pub fn by_name(name: GroupName) -> Group {
        match name {
            GroupName::Toy => Group::toy(),
            GroupName::Large => Group::large(),
        }
    }

    pub fn description(&self) -> &GroupDescription {
        self.desc
    }

    pub fn name(&self) -> GroupName {
        self.desc.name
    }

    pub fn order(&self) -> &BigUint {
        &self.desc.order_p
    }

    /// The group order as a `u64`, when it fits under the enumeration cap.
    pub fn small_order(&self) -> Option<u64> {
        u64::try_from(&self.desc.order_p)
            .ok()
            .filter(|&p| p <= ENUMERATION_CAP)
    }

    pub fn element_width(&self) -> usize {
        self.desc.element_width
    }

    pub fn scalar_width(&self) -> usize {
        self.desc.scalar_width
    }

    /// Neutral element `e`.
    pub fn identity(&self) -> GroupElement {
        GroupElement(BigUint::one())
    }

    pub fn generator(&self) -> GroupElement {
        GroupElement(self.desc.generator.clone())
    }

    pub fn is_identity(&self, a: &GroupElement) -> bool {
        a.0.is_one()
    }

    /// Group product.
    pub fn mul(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        GroupElement((&a.0 * &b.0) % &self.desc.ambient_modulus)
    }

    /// `base^e` by square-and-multiply. Every call bumps the pow counter.
    pub fn pow(&self, base: &GroupElement, e: &Scalar) -> GroupElement {
        self.pow_count.fetch_add(1, Ordering::Relaxed);
        GroupElement(base.0.modpow(&e.0, &self.desc.ambient_modulus))
    }

    /// Number of `pow` invocations since construction or the last reset.
    pub fn pow_count(&self) -> u64 {
        self.pow_count.load(Ordering::Relaxed)
    }

    pub fn reset_pow_count(&self) {
        self.pow_count.store(0, Ordering::Relaxed);
    }

    /// Reduce an integer into `[0, p-1]`.
    pub fn scalar(&self, value: u64) -> Scalar {
        Scalar(BigUint::from(value) % &self.desc.order_p)
    }

    pub fn scalar_from_biguint(&self, value: BigUint) -> Scalar {
        Scalar(value % &self.desc.order_p)
    }

    /// Uniform scalar by rejection sampling from the rng.
    pub fn random_scalar<R: RngCore + ?Sized>(&self, range: ScalarRange, rng: &mut R) -> Scalar {
        let width = self.desc.scalar_width;
        let bits = self.desc.order_p.bits();
        let excess = (width as u64) * 8 - bits;
        let mask = 0xffu8 >> excess;
        let mut buf = vec![0u8; width];
        loop {
            rng.fill_bytes(&mut buf);
            buf[0] &= mask;
            let v = BigUint::from_bytes_be(&buf);
            if v >= self.desc.order_p {
                continue;
            }
            if range == ScalarRange::NonZero && v.is_zero() {
                continue;
            }
            return Scalar(v);
        }
    }

    /// Fixed-width big-endian encoding of an element.
    pub fn encode(&self, elem: &GroupElement) -> Vec<u8> {
        to_fixed_width_be(&elem.0, self.desc.element_width)
    }

    /// Decode and validate an element. Rejects wrong lengths, residues
    /// outside `[0, P)`, and values that are not in the order-p subgroup
    /// (`v = 0` or `v^p != 1`). Arbitrary wire bytes therefore can never
    /// yield a non-member element.
    pub fn decode(&self, bytes: &[u8]) -> Result<GroupElement, GroupError> {
        if bytes.len() != self.desc.element_width {
            return Err(GroupError::WrongLength {
                expected: self.desc.element_width,
                got: bytes.len(),
            });
        }
        let v = BigUint::from_bytes_be(bytes);
        if v >= self.desc.ambient_modulus {
            return Err(GroupError::OutOfRange);
        }
        if v.is_zero() || !v.modpow(&self.desc.order_p, &self.desc.ambient_modulus).is_one() {
            return Err(GroupError::NotMember);
        }
        Ok(GroupElement(v))
    }

    /// Fixed-width big-endian encoding of a scalar.
    pub fn encode_scalar(&self, s: &Scalar) -> Vec<u8> {
        to_fixed_width_be(&s.0, self.desc.scalar_width)
    }

    pub fn decode_scalar(&self, bytes: &[u8]) -> Result<Scalar, GroupError> {
        if bytes.len() != self.desc.scalar_width {
            return Err(GroupError::WrongLength {
                expected: self.desc.scalar_width,
                got: bytes.len(),
            });
        }
        let v = BigUint::from_bytes_be(bytes);
        if v >= self.desc.order_p {
            return Err(GroupError::ScalarOutOfRange);
        }
        Ok(Scalar(v))
    }

    /// All `p` subgroup members, as `g^0 .. g^(p-1)`. Only for backends
    /// small enough to enumerate.
    pub fn elements(&self) -> Result<Vec<GroupElement>, GroupError> {
        let p = self.small_order().ok_or(GroupError::TooLargeToEnumerate)?;
        let mut out = Vec::with_capacity(p as usize);
        let mut cur = self.identity();
        let g = self.generator();
        for _ in 0..p {
            out.push(cur.clone());
            cur = self.mul(&cur, &g);
        }
        Ok(out)
    }
}

impl fmt::Debug for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Group({})", self.desc.name)
    }
}

fn to_fixed_width_be(v: &BigUint, width: usize) -> Vec<u8> {
    let raw = v.to_bytes_be();
    debug_assert!(raw.len() <= width);
    let mut out = vec![0u8; width];
    out[width - raw.len()..].copy_from_slice(&raw);
    out
}
