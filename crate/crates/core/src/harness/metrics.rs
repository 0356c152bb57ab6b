//! Delay CDFs and per-subscription delivery ratios.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{MessageId, Subscription, Timestamp, UserId};

pub const SECONDS_PER_HOUR: u64 = 3600;
/// Delay checkpoints reported alongside the CDFs, in hours.
pub const DELAY_CHECKPOINT_HOURS: [u64; 2] = [24, 94];
/// Delivery-ratio thresholds summarized across subscriptions.
pub const RATIO_THRESHOLDS: [f64; 2] = [0.70, 0.80];

/// A message verified and stored at a node other than its author.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub message: MessageId,
    pub receiver: UserId,
    pub created_at: Timestamp,
    pub delivered_at: Timestamp,
    pub hops: u32,
}

impl DeliveryRecord {
    pub fn delay(&self) -> u64 {
        self.delivered_at - self.created_at
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Publication {
    pub id: MessageId,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopFilter {
    All,
    OneHop,
}

impl HopFilter {
    pub fn admits(self, record: &DeliveryRecord) -> bool {
        match self {
            HopFilter::All => true,
            HopFilter::OneHop => record.hops == 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    /// Seconds.
    pub delay: u64,
    pub fraction: f64,
}

/// Empirical CDF of delivery delay, one point per distinct delay.
pub fn compute_delay_cdf(deliveries: &[DeliveryRecord], filter: HopFilter) -> Vec<CdfPoint> {
    let mut delays: Vec<u64> = deliveries
        .iter()
        .filter(|r| filter.admits(r))
        .map(DeliveryRecord::delay)
        .collect();
    delays.sort_unstable();
    let n = delays.len() as f64;
    let mut points: Vec<CdfPoint> = Vec::new();
    for (i, delay) in delays.iter().enumerate() {
        let fraction = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.delay == *delay => last.fraction = fraction,
            _ => points.push(CdfPoint {
                delay: *delay,
                fraction,
            }),
        }
    }
    points
}

/// Fraction of deliveries with delay at most `delay`.
pub fn cdf_at(cdf: &[CdfPoint], delay: u64) -> f64 {
    match cdf.partition_point(|p| p.delay <= delay) {
        0 => 0.0,
        i => cdf[i - 1].fraction,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioDenominatorMode {
    /// Only messages published while the subscription was live count.
    #[default]
    ExcludePreFollow,
    /// Every message the followee ever published counts.
    IncludeAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdShare {
    pub threshold: f64,
    /// Share of eligible subscriptions whose ratio strictly exceeds the threshold.
    pub all: f64,
    pub one_hop: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RatioSummary {
    pub eligible_subscriptions: usize,
    pub thresholds: Vec<ThresholdShare>,
}

impl RatioSummary {
    pub fn share(&self, threshold: f64) -> Option<&ThresholdShare> {
        self.thresholds.iter().find(|t| t.threshold == threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeliveryRatios {
    pub all: BTreeMap<(UserId, UserId), f64>,
    pub one_hop: BTreeMap<(UserId, UserId), f64>,
    pub summary: RatioSummary,
}

/// Per-subscription delivery ratio: of the followee's eligible messages,
/// the fraction that reached the follower. Pairs with nothing eligible are
/// left out entirely.
pub fn compute_delivery_ratios(
    deliveries: &[DeliveryRecord],
    subscriptions: &[Subscription],
    publications: &[Publication],
    mode: RatioDenominatorMode,
) -> DeliveryRatios {
    let mut periods: BTreeMap<(UserId, UserId), Vec<&Subscription>> = BTreeMap::new();
    for sub in subscriptions {
        periods
            .entry((sub.follower, sub.followee))
            .or_default()
            .push(sub);
    }
    let mut by_author: BTreeMap<UserId, Vec<&Publication>> = BTreeMap::new();
    for publication in publications {
        by_author
            .entry(publication.id.author)
            .or_default()
            .push(publication);
    }
    let received: BTreeMap<(UserId, MessageId), u32> = deliveries
        .iter()
        .map(|r| ((r.receiver, r.message), r.hops))
        .collect();

    let mut ratios = DeliveryRatios::default();
    for ((follower, followee), subs) in &periods {
        let eligible: Vec<&Publication> = by_author
            .get(followee)
            .into_iter()
            .flatten()
            .filter(|p| match mode {
                RatioDenominatorMode::IncludeAll => true,
                RatioDenominatorMode::ExcludePreFollow => {
                    subs.iter().any(|s| s.covers(p.created_at))
                }
            })
            .copied()
            .collect();
        if eligible.is_empty() {
            continue;
        }
        let mut all = 0usize;
        let mut one_hop = 0usize;
        for p in &eligible {
            if let Some(hops) = received.get(&(*follower, p.id)) {
                all += 1;
                if *hops == 1 {
                    one_hop += 1;
                }
            }
        }
        let n = eligible.len() as f64;
        ratios.all.insert((*follower, *followee), all as f64 / n);
        ratios
            .one_hop
            .insert((*follower, *followee), one_hop as f64 / n);
    }

    let eligible = ratios.all.len();
    ratios.summary = RatioSummary {
        eligible_subscriptions: eligible,
        thresholds: RATIO_THRESHOLDS
            .iter()
            .map(|&threshold| ThresholdShare {
                threshold,
                all: share_above(ratios.all.values(), threshold, eligible),
                one_hop: share_above(ratios.one_hop.values(), threshold, eligible),
            })
            .collect(),
    };
    ratios
}

fn share_above<'a>(values: impl Iterator<Item = &'a f64>, threshold: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    values.filter(|v| **v > threshold).count() as f64 / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Totals {
    /// Publish events.
    pub unique_messages: usize,
    /// Accepted non-author receipts (one per message and receiver).
    pub disseminated_copies: usize,
    /// Message frames that crossed a link, duplicates and rejects included.
    pub transferred_copies: usize,
    pub dropped_copies: usize,
    pub subscriptions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayCheckpoint {
    pub hours: u64,
    pub all: f64,
    pub one_hop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubscriptionRatio {
    pub follower: UserId,
    pub followee: UserId,
    pub all: f64,
    pub one_hop: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub deliveries: Vec<DeliveryRecord>,
    pub delay_cdf_all: Vec<CdfPoint>,
    pub delay_cdf_1hop: Vec<CdfPoint>,
    pub delivery_ratio_per_subscription: Vec<SubscriptionRatio>,
    pub ratio_summary: RatioSummary,
    pub delay_checkpoints: Vec<DelayCheckpoint>,
    pub one_hop_fraction: f64,
    pub totals: Totals,
    /// Revoked users at the CA when the run ended, ascending.
    pub crl: Vec<UserId>,
}

/// Raw material gathered by a run.
#[derive(Debug, Clone, Default)]
pub struct RunTallies {
    pub deliveries: Vec<DeliveryRecord>,
    pub subscriptions: Vec<Subscription>,
    pub publications: Vec<Publication>,
    pub transferred_copies: usize,
    pub dropped_copies: usize,
    pub crl: Vec<UserId>,
}

impl MetricsReport {
    pub fn compute(tallies: RunTallies, mode: RatioDenominatorMode) -> Self {
        let RunTallies {
            mut deliveries,
            subscriptions,
            publications,
            transferred_copies,
            dropped_copies,
            crl,
        } = tallies;
        deliveries.sort_by_key(|r| (r.delivered_at, r.message, r.receiver));
        let delay_cdf_all = compute_delay_cdf(&deliveries, HopFilter::All);
        let delay_cdf_1hop = compute_delay_cdf(&deliveries, HopFilter::OneHop);
        let ratios = compute_delivery_ratios(&deliveries, &subscriptions, &publications, mode);
        let delivery_ratio_per_subscription = ratios
            .all
            .iter()
            .map(|((follower, followee), all)| SubscriptionRatio {
                follower: *follower,
                followee: *followee,
                all: *all,
                one_hop: ratios.one_hop[&(*follower, *followee)],
            })
            .collect();
        let delay_checkpoints = DELAY_CHECKPOINT_HOURS
            .iter()
            .map(|&hours| DelayCheckpoint {
                hours,
                all: cdf_at(&delay_cdf_all, hours * SECONDS_PER_HOUR),
                one_hop: cdf_at(&delay_cdf_1hop, hours * SECONDS_PER_HOUR),
            })
            .collect();
        let one_hop_fraction = if deliveries.is_empty() {
            0.0
        } else {
            deliveries.iter().filter(|r| r.hops == 1).count() as f64 / deliveries.len() as f64
        };
        let distinct: BTreeSet<(MessageId, UserId)> =
            deliveries.iter().map(|r| (r.message, r.receiver)).collect();
        debug_assert_eq!(distinct.len(), deliveries.len());
        Self {
            totals: Totals {
                unique_messages: publications.len(),
                disseminated_copies: deliveries.len(),
                transferred_copies,
                dropped_copies,
                subscriptions: subscriptions.len(),
            },
            deliveries,
            delay_cdf_all,
            delay_cdf_1hop,
            delivery_ratio_per_subscription,
            ratio_summary: ratios.summary,
            delay_checkpoints,
            one_hop_fraction,
            crl,
        }
    }

    pub fn checkpoint(&self, hours: u64) -> Option<&DelayCheckpoint> {
        self.delay_checkpoints.iter().find(|c| c.hours == hours)
    }
}
