//! Malicious-user strategies and the linkage attack they would run.
//!
//! The attacker model: a user who registers one key like everyone else but
//! deviates in the tokens it broadcasts, then tries to work out from its
//! own personalized batch which of its sent tokens reached an infected
//! person. Rerandomization is supposed to make every strategy here no
//! better than chance; the simulator measures exactly that.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{Group, GroupElement, Scalar, ScalarRange};
use crate::protocol::{keygen, make_token, BroadcastToken, RerandToken};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AdversaryError {
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
}

/// How the adversary mints the tokens it broadcasts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Every token under a fresh secret key; only the first key is registered.
    FreshKeyPerToken,
    /// Tokens (e, e): the universal-match shape that server validation drops.
    IdentityToken,
    /// Uniform pairs with x != e and y unconstrained.
    ArbitraryPair,
    /// Pairs (x, y), (x^2, y^2) under a fresh key per pair.
    CorrelatedSquare,
    /// Protocol-honest tokens under the registered key.
    HonestBaseline,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::FreshKeyPerToken,
        StrategyKind::IdentityToken,
        StrategyKind::ArbitraryPair,
        StrategyKind::CorrelatedSquare,
        StrategyKind::HonestBaseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::FreshKeyPerToken => "fresh_key_per_token",
            StrategyKind::IdentityToken => "identity_token",
            StrategyKind::ArbitraryPair => "arbitrary_pair",
            StrategyKind::CorrelatedSquare => "correlated_square",
            StrategyKind::HonestBaseline => "honest_baseline",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = AdversaryError;

    fn from_str(s: &str) -> Result<StrategyKind, AdversaryError> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| AdversaryError::UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryStrategy {
    pub kind: StrategyKind,
    /// Number of tokens the adversary may broadcast; at least 1.
    pub token_budget: usize,
}

/// Everything the adversary knows: its own keys (index 0 is the registered
/// one), what it sent, which key minted each sent token, and the batch the
/// server handed back for its registered id.
#[derive(Debug, Clone)]
pub struct AdversaryView {
    pub secrets: Vec<Scalar>,
    pub registered_public: GroupElement,
    pub sent_tokens: Vec<BroadcastToken>,
    /// sent_tokens[i] was minted under secrets[token_secret[i]];
    /// None for shapes not minted under any key.
    pub token_secret: Vec<Option<usize>>,
    pub batch: Vec<RerandToken>,
}

/// Mint the strategy's tokens. Returns the adversary's view (batch empty)
/// and the token list to broadcast, in emission order.
pub fn emit_tokens<R: RngCore + ?Sized>(
    group: &Group,
    strategy: &AdversaryStrategy,
    rng: &mut R,
) -> (AdversaryView, Vec<BroadcastToken>) {
    assert!(strategy.token_budget >= 1, "token budget must be positive");
    let registered = keygen(group, rng);
    let mut secrets = vec![registered.secret.clone()];
    let budget = strategy.token_budget;
    let mut sent: Vec<BroadcastToken> = Vec::with_capacity(budget);
    let mut token_secret: Vec<Option<usize>> = Vec::with_capacity(budget);

    match strategy.kind {
        StrategyKind::FreshKeyPerToken => {
            for i in 0..budget {
                let si = if i == 0 {
                    0
                } else {
                    secrets.push(group.random_scalar(ScalarRange::Full, rng));
                    secrets.len() - 1
                };
                let alpha = group.random_scalar(ScalarRange::NonZero, rng);
                let t = make_token(group, &secrets[si], &alpha)
                    .expect("nonzero exponent by construction");
                sent.push(t);
                token_secret.push(Some(si));
            }
        }
        StrategyKind::IdentityToken => {
            for _ in 0..budget {
                sent.push(BroadcastToken {
                    x: group.identity(),
                    y: group.identity(),
                });
                token_secret.push(None);
            }
        }
        StrategyKind::ArbitraryPair => {
            for _ in 0..budget {
                let a = group.random_scalar(ScalarRange::NonZero, rng);
                let b = group.random_scalar(ScalarRange::Full, rng);
                sent.push(BroadcastToken {
                    x: group.pow(&group.generator(), &a),
                    y: group.pow(&group.generator(), &b),
                });
                token_secret.push(None);
            }
        }
        StrategyKind::CorrelatedSquare => {
            while sent.len() < budget {
                let s = group.random_scalar(ScalarRange::Full, rng);
                secrets.push(s.clone());
                let si = secrets.len() - 1;
                let alpha = group.random_scalar(ScalarRange::NonZero, rng);
                let base = make_token(group, &s, &alpha)
                    .expect("nonzero exponent by construction");
                sent.push(base.clone());
                token_secret.push(Some(si));
                if sent.len() < budget {
                    sent.push(BroadcastToken {
                        x: group.mul(&base.x, &base.x),
                        y: group.mul(&base.y, &base.y),
                    });
                    token_secret.push(Some(si));
                }
            }
        }
        StrategyKind::HonestBaseline => {
            for _ in 0..budget {
                let alpha = group.random_scalar(ScalarRange::NonZero, rng);
                let t = make_token(group, &secrets[0], &alpha)
                    .expect("nonzero exponent by construction");
                sent.push(t);
                token_secret.push(Some(0));
            }
        }
    }

    let view = AdversaryView {
        secrets,
        registered_public: registered.public,
        sent_tokens: sent.clone(),
        token_secret,
        batch: Vec::new(),
    };
    (view, sent)
}

/// The best feasible guess at which sent token reached an infected user:
/// scan batch entries in order and known secrets in index order, test
/// w = z^s, and answer with the first sent token minted under a hitting
/// secret value. None when no hit implicates a token.
pub fn linkage_attack(group: &Group, view: &AdversaryView) -> Option<usize> {
    for entry in &view.batch {
        for s in &view.secrets {
            if group.pow(&entry.z, s) != entry.w {
                continue;
            }
            let implicated = view
                .token_secret
                .iter()
                .position(|ts| ts.is_some_and(|si| view.secrets[si] == *s));
            if let Some(idx) = implicated {
                return Some(idx);
            }
        }
    }
    None
}
