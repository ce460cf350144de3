//! Server state machine: key registry, infected-token ingestion, and the
//! end-of-day personalized rerandomization batches.
//!
//! The server holds one public key per user, collects the tokens reported
//! by infected users during the day (validating each on arrival), and at
//! day close produces, for every registered user, a freshly rerandomized
//! and freshly permuted copy of the whole pool. Everyone receives a list
//! of the same length regardless of whether anything in it is theirs.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::RngCore;
use thiserror::Error;

use crate::group::{Group, GroupElement, ScalarRange};
use crate::protocol::{shuff, validate_token, BroadcastToken, RerandToken};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ServerError {
    #[error("user {0} already registered a key")]
    DuplicateUser(u64),
    #[error("report of {got} tokens exceeds the per-report cap of {cap}")]
    ReportTooLarge { got: usize, cap: usize },
}

/// One public key per user id.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    users: BTreeMap<u64, GroupElement>,
}

impl Registry {
    pub fn new() -> Registry {
        Registry::default()
    }

    /// Add a key. A user id can be bound at most once; nothing constrains
    /// two users from registering the same key.
    pub fn insert(&mut self, user_id: u64, pk: GroupElement) -> Result<(), ServerError> {
        if self.users.contains_key(&user_id) {
            return Err(ServerError::DuplicateUser(user_id));
        }
        self.users.insert(user_id, pk);
        Ok(())
    }

    pub fn get(&self, user_id: u64) -> Option<&GroupElement> {
        self.users.get(&user_id)
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Users in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, &GroupElement)> {
        self.users.iter().map(|(&id, pk)| (id, pk))
    }
}

/// The validated tokens reported so far for one day.
#[derive(Debug, Clone)]
pub struct InfectedPool {
    pub day: u32,
    pub tokens: Vec<BroadcastToken>,
}

/// Per-user rerandomized token lists for one closed day.
#[derive(Debug, Clone)]
pub struct PersonalizedBatch {
    pub day: u32,
    pub per_user: BTreeMap<u64, Vec<RerandToken>>,
}

impl PersonalizedBatch {
    pub fn list_for(&self, user_id: u64) -> Option<&[RerandToken]> {
        self.per_user.get(&user_id).map(|v| v.as_slice())
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Hard cap on a single report; longer reports are rejected outright.
    pub max_report_tokens: usize,
    /// Cap on the daily pool; ingestion silently stops accepting beyond it.
    pub max_pool_tokens: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            max_report_tokens: 4096,
            max_pool_tokens: 1 << 20,
        }
    }
}

/// Exclusive-access server state. All mutation goes through `&mut self`;
/// closed batches come out as shared snapshots.
pub struct Server {
    group: Arc<Group>,
    config: ServerConfig,
    registry: Registry,
    pool: InfectedPool,
    closed: BTreeMap<u32, Arc<PersonalizedBatch>>,
}

impl Server {
    pub fn new(group: Arc<Group>, config: ServerConfig) -> Server {
        Server {
            group,
            config,
            registry: Registry::new(),
            pool: InfectedPool {
                day: 0,
                tokens: Vec::new(),
            },
            closed: BTreeMap::new(),
        }
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn group_arc(&self) -> Arc<Group> {
        Arc::clone(&self.group)
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn current_day(&self) -> u32 {
        self.pool.day
    }

    pub fn pool_tokens(&self) -> &[BroadcastToken] {
        &self.pool.tokens
    }

    pub fn register(&mut self, user_id: u64, pk: GroupElement) -> Result<(), ServerError> {
        self.registry.insert(user_id, pk)
    }

    /// Append the valid tokens of one report to the day's pool, preserving
    /// report order, and return how many were accepted. Tokens whose first
    /// component is the identity are discarded; duplicates are kept (they
    /// carry contact-count information and are rerandomized independently).
    pub fn ingest_report(&mut self, tokens: &[BroadcastToken]) -> Result<usize, ServerError> {
        if tokens.len() > self.config.max_report_tokens {
            return Err(ServerError::ReportTooLarge {
                got: tokens.len(),
                cap: self.config.max_report_tokens,
            });
        }
        let mut accepted = 0;
        for t in tokens {
            if self.pool.tokens.len() >= self.config.max_pool_tokens {
                break;
            }
            if validate_token(&self.group, t) {
                self.pool.tokens.push(t.clone());
                accepted += 1;
            }
        }
        Ok(accepted)
    }

    /// Rerandomize the current pool once per registered user. Each
    /// (user, token) pair gets its own fresh `(beta, gamma)` — drawn beta
    /// first, in ascending user order and pool order — and each user's
    /// finished list is independently permuted. The pool is untouched.
    pub fn build_batch<R: RngCore + ?Sized>(&self, rng: &mut R) -> PersonalizedBatch {
        let mut per_user = BTreeMap::new();
        for (user_id, pk) in self.registry.iter() {
            let mut list: Vec<RerandToken> = self
                .pool
                .tokens
                .iter()
                .map(|t| {
                    let beta = self.group.random_scalar(ScalarRange::Full, rng);
                    let gamma = self.group.random_scalar(ScalarRange::Full, rng);
                    shuff(&self.group, t, &beta, &gamma, pk)
                })
                .collect();
            list.shuffle(rng);
            per_user.insert(user_id, list);
        }
        PersonalizedBatch {
            day: self.pool.day,
            per_user,
        }
    }

    /// Close the day: build the batch for the current pool, archive it,
    /// reset the pool, and advance the day counter.
    pub fn end_of_day<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> Arc<PersonalizedBatch> {
        let batch = Arc::new(self.build_batch(rng));
        self.closed.insert(batch.day, Arc::clone(&batch));
        self.pool.day += 1;
        self.pool.tokens.clear();
        batch
    }

    pub fn closed_batch(&self, day: u32) -> Option<Arc<PersonalizedBatch>> {
        self.closed.get(&day).cloned()
    }

    pub fn latest_closed_batch(&self) -> Option<Arc<PersonalizedBatch>> {
        self.closed.values().next_back().cloned()
    }
}
