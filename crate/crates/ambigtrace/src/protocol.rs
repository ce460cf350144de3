//! Core token algebra: key generation, token creation, server-side
//! rerandomization, and the owner's risk predicate.
//!
//! A broadcast token under secret `s` and blinding `a` is the pair
//! `(g^a, g^(s*a))`. The server rerandomizes a reported token `(x, y)` for
//! a user with public key `pk = g^s` as
//!
//! ```text
//! shuff((x, y), b, c, pk) = (x^b * g^c, y^b * pk^c)
//! ```
//!
//! with fresh uniform `b, c` per output. A token of the honest form
//! `(x, x^s)` maps to another pair of that same form — uniformly random
//! among them — while every other pair maps to a uniform element of
//! `G x G`, so malformed tokens buy an adversary nothing but noise. The
//! rerandomization costs exactly four exponentiations; the recipient's
//! risk check costs one per batch entry.

use rand::RngCore;
use thiserror::Error;

use crate::group::{Group, GroupElement, Scalar, ScalarRange};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("token blinding exponent must be nonzero")]
    ZeroAlpha,
    #[error("malformed key file: {0}")]
    BadKeyFile(String),
    #[error(transparent)]
    Group(#[from] crate::group::GroupError),
}

/// User key material: secret exponent `s` and public key `g^s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub secret: Scalar,
    pub public: GroupElement,
}

/// A broadcast token `(x, y)`. Honest tokens satisfy `x != e` and
/// `y = x^s`, but nothing stops a malicious device from emitting any pair,
/// so the type imposes no intrinsic invariant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BroadcastToken {
    pub x: GroupElement,
    pub y: GroupElement,
}

/// A rerandomized token `(z, w)` as delivered to one user.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RerandToken {
    pub z: GroupElement,
    pub w: GroupElement,
}

/// Sample a keypair. The secret is uniform over the full `[0, p-1]` range;
/// `s = 0` (public key = identity) is legal.
pub fn keygen<R: RngCore + ?Sized>(group: &Group, rng: &mut R) -> KeyPair {
    let secret = group.random_scalar(ScalarRange::Full, rng);
    let public = group.pow(&group.generator(), &secret);
    KeyPair { secret, public }
}

/// Build the broadcast token `(g^alpha, g^(s*alpha))`. The blinding
/// exponent must be drawn from `[1, p-1]`; zero is rejected.
pub fn make_token(
    group: &Group,
    secret: &Scalar,
    alpha: &Scalar,
) -> Result<BroadcastToken, ProtocolError> {
    if alpha.is_zero() {
        return Err(ProtocolError::ZeroAlpha);
    }
    let x = group.pow(&group.generator(), alpha);
    let y = group.pow(&x, secret);
    Ok(BroadcastToken { x, y })
}

/// Server-side filter on reported tokens: accept iff the first component
/// is not the identity. Pairs with `x = e` would rerandomize to
/// `(g^c, pk^c)` and pass every user's risk check; everything else is
/// handled by the rerandomization itself, so this is the only check.
pub fn validate_token(group: &Group, t: &BroadcastToken) -> bool {
    !group.is_identity(&t.x)
}

/// Rerandomize `t` for the user with public key `pk`:
/// `(x^beta * g^gamma, y^beta * pk^gamma)`. Exactly four `pow` calls.
pub fn shuff(
    group: &Group,
    t: &BroadcastToken,
    beta: &Scalar,
    gamma: &Scalar,
    pk: &GroupElement,
) -> RerandToken {
    let z = group.mul(&group.pow(&t.x, beta), &group.pow(&group.generator(), gamma));
    let w = group.mul(&group.pow(&t.y, beta), &group.pow(pk, gamma));
    RerandToken { z, w }
}

/// The owner's infection test: does `w = z^s` hold? Exactly one `pow`.
pub fn risk_check(group: &Group, secret: &Scalar, t: &RerandToken) -> bool {
    group.pow(&t.z, secret) == t.w
}

/// Test oracle: is `t` of the honest form `(x, x^secret)` with `x != e`,
/// i.e. could it have been produced by `make_token` under this secret?
pub fn is_honest_form(group: &Group, t: &BroadcastToken, secret: &Scalar) -> bool {
    !group.is_identity(&t.x) && group.pow(&t.x, secret) == t.y
}

/// Wire encoding of a broadcast token: `encode(x) || encode(y)`.
pub fn encode_token(group: &Group, t: &BroadcastToken) -> Vec<u8> {
    let mut out = group.encode(&t.x);
    out.extend_from_slice(&group.encode(&t.y));
    out
}

/// Inverse of `encode_token`; enforces width and subgroup membership of
/// both components (the identity is a member and is accepted here — the
/// ingestion filter, not the codec, drops it).
pub fn decode_token(group: &Group, bytes: &[u8]) -> Result<BroadcastToken, ProtocolError> {
    let w = group.element_width();
    if bytes.len() != 2 * w {
        return Err(crate::group::GroupError::WrongLength {
            expected: 2 * w,
            got: bytes.len(),
        }
        .into());
    }
    Ok(BroadcastToken {
        x: group.decode(&bytes[..w])?,
        y: group.decode(&bytes[w..])?,
    })
}

/// Wire encoding of a rerandomized token: `encode(z) || encode(w)`.
pub fn encode_rerand(group: &Group, t: &RerandToken) -> Vec<u8> {
    let mut out = group.encode(&t.z);
    out.extend_from_slice(&group.encode(&t.w));
    out
}

/// Inverse of `encode_rerand`, with the same membership enforcement.
pub fn decode_rerand(group: &Group, bytes: &[u8]) -> Result<RerandToken, ProtocolError> {
    let w = group.element_width();
    if bytes.len() != 2 * w {
        return Err(crate::group::GroupError::WrongLength {
            expected: 2 * w,
            got: bytes.len(),
        }
        .into());
    }
    Ok(RerandToken {
        z: group.decode(&bytes[..w])?,
        w: group.decode(&bytes[w..])?,
    })
}

/// Key file format: two lowercase hex lines, the secret scalar then the
/// public element, both fixed-width.
pub fn encode_key_file(group: &Group, keys: &KeyPair) -> String {
    format!(
        "{}\n{}\n",
        hex::encode(group.encode_scalar(&keys.secret)),
        hex::encode(group.encode(&keys.public))
    )
}

/// Parse and fully validate a key file: widths, ranges, membership, and
/// the defining relation `public = g^secret`.
pub fn decode_key_file(group: &Group, text: &str) -> Result<KeyPair, ProtocolError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let bad = |m: &str| ProtocolError::BadKeyFile(m.to_string());
    let secret_hex = lines.next().ok_or_else(|| bad("missing secret line"))?;
    let public_hex = lines.next().ok_or_else(|| bad("missing public line"))?;
    if lines.next().is_some() {
        return Err(bad("trailing content"));
    }
    let secret_bytes = hex::decode(secret_hex.trim()).map_err(|e| bad(&e.to_string()))?;
    let public_bytes = hex::decode(public_hex.trim()).map_err(|e| bad(&e.to_string()))?;
    let secret = group.decode_scalar(&secret_bytes)?;
    let public = group.decode(&public_bytes)?;
    if group.pow(&group.generator(), &secret) != public {
        return Err(bad("public key does not match the secret"));
    }
    Ok(KeyPair { secret, public })
}
