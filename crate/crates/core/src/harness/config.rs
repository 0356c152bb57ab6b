use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::RatioDenominatorMode;
use crate::model::UserId;
use crate::routing::RoutingSchemeKind;
use crate::security::{SchemeKind, DEFAULT_CERT_LIFETIME_DAYS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("duplicate user id {0}")]
    DuplicateUser(UserId),
    #[error("follow edge ({0}, {1}) names an unknown user")]
    UnknownUser(UserId, UserId),
    #[error("user {0} cannot follow themselves")]
    SelfFollow(UserId),
    #[error("follow edge ({0}, {1}) listed twice")]
    DuplicateEdge(UserId, UserId),
    #[error("tick_seconds must be positive")]
    ZeroTick,
    #[error("cert_lifetime_days must be positive")]
    ZeroLifetime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSpec {
    pub user_id: UserId,
    #[serde(default)]
    pub scheme: RoutingSchemeKind,
}

fn one() -> u64 {
    1
}

fn default_lifetime() -> u64 {
    DEFAULT_CERT_LIFETIME_DAYS
}

/// Social graph and run parameters. The contact trace is a separate file so
/// one configuration can be replayed against many traces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub users: Vec<UserSpec>,
    /// `(follower, followee)` pairs in force from time 0.
    #[serde(default)]
    pub follow_edges: Vec<(UserId, UserId)>,
    pub seed: u64,
    #[serde(default = "one")]
    pub tick_seconds: u64,
    #[serde(default = "default_lifetime")]
    pub cert_lifetime_days: u64,
    #[serde(default)]
    pub ratio_denominator_mode: RatioDenominatorMode,
    #[serde(default)]
    pub signature_scheme: SchemeKind,
}

impl RunConfig {
    pub fn new(users: impl IntoIterator<Item = UserSpec>, seed: u64) -> Self {
        Self {
            users: users.into_iter().collect(),
            follow_edges: Vec::new(),
            seed,
            tick_seconds: 1,
            cert_lifetime_days: DEFAULT_CERT_LIFETIME_DAYS,
            ratio_denominator_mode: RatioDenominatorMode::default(),
            signature_scheme: SchemeKind::default(),
        }
    }

    /// Same scheme for every user.
    pub fn uniform(ids: impl IntoIterator<Item = UserId>, scheme: RoutingSchemeKind, seed: u64) -> Self {
        Self::new(
            ids.into_iter().map(|user_id| UserSpec { user_id, scheme }),
            seed,
        )
    }

    pub fn with_scheme(mut self, scheme: RoutingSchemeKind) -> Self {
        for user in &mut self.users {
            user.scheme = scheme;
        }
        self
    }

    pub fn with_follows(mut self, edges: impl IntoIterator<Item = (UserId, UserId)>) -> Self {
        self.follow_edges.extend(edges);
        self
    }

    pub fn user_ids(&self) -> BTreeSet<UserId> {
        self.users.iter().map(|u| u.user_id).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.tick_seconds == 0 {
            return Err(ConfigError::ZeroTick);
        }
        if self.cert_lifetime_days == 0 {
            return Err(ConfigError::ZeroLifetime);
        }
        let mut ids = BTreeSet::new();
        for user in &self.users {
            if !ids.insert(user.user_id) {
                return Err(ConfigError::DuplicateUser(user.user_id));
            }
        }
        let mut edges = BTreeSet::new();
        for &(follower, followee) in &self.follow_edges {
            if !ids.contains(&follower) || !ids.contains(&followee) {
                return Err(ConfigError::UnknownUser(follower, followee));
            }
            if follower == followee {
                return Err(ConfigError::SelfFollow(follower));
            }
            if !edges.insert((follower, followee)) {
                return Err(ConfigError::DuplicateEdge(follower, followee));
            }
        }
        Ok(())
    }
}
