use std::collections::BTreeMap;

use sos_dtn::adhoc::pair_key;
use sos_dtn::exec::Execution;
use sos_dtn::harness::trace::{contacts, TraceEventKind};
use sos_dtn::harness::{sweep, LogEvent, LogLevel, RunOutput, Simulation};
use sos_dtn::routing::RoutingSchemeKind;
use sos_dtn::tracegen::{generate, GeneratedScenario, TraceGenParams};

fn scenario(seed: u64, scheme: RoutingSchemeKind, tick_seconds: u64) -> GeneratedScenario {
    let params = TraceGenParams {
        n_nodes: 7,
        duration: 3 * 86_400,
        mean_contacts_per_pair_per_day: 1.5,
        contact_duration: (5, 300),
        bandwidth: 700,
        publish_rate: 8.0,
        scheme,
        ..TraceGenParams::gainesville_like()
    };
    let mut s = generate(&params, seed).unwrap();
    s.config.tick_seconds = tick_seconds;
    s
}

fn verbose_run(s: &GeneratedScenario) -> RunOutput {
    Simulation::new(&s.config)
        .log_level(LogLevel::Verbose)
        .run(&s.trace)
        .unwrap()
}

fn cases() -> Vec<(u64, RoutingSchemeKind, u64)> {
    let mut cases = Vec::new();
    for seed in 0..6 {
        for scheme in [RoutingSchemeKind::Epidemic, RoutingSchemeKind::InterestBased] {
            cases.push((seed, scheme, 1 + seed % 3));
        }
    }
    cases
}

#[test]
fn deliveries_happen_only_inside_contacts() {
    for (seed, scheme, tick) in cases() {
        let s = scenario(seed, scheme, tick);
        let out = verbose_run(&s);
        let end = s.trace.last().unwrap().at;
        let windows = contacts(&s.trace, end);
        for record in out.log.records() {
            let (from, to) = match record.event {
                LogEvent::Delivered { from, to, .. }
                | LogEvent::Duplicate { from, to, .. }
                | LogEvent::Dropped { from, to, .. } => (from, to),
                _ => continue,
            };
            let pair = pair_key(from, to);
            // Contacts are quantized to tick starts.
            let inside = windows.iter().any(|c| {
                c.pair() == pair && c.start / tick * tick <= record.t && record.t < c.end.div_ceil(tick) * tick
            });
            assert!(inside, "seed {seed}: transfer at {} outside any {pair:?} contact", record.t);
        }
    }
}

#[test]
fn bytes_per_tick_never_exceed_budget() {
    for (seed, scheme, tick) in cases() {
        let s = scenario(seed, scheme, tick);
        let bandwidth: BTreeMap<_, u64> = s
            .trace
            .iter()
            .filter_map(|e| match e.kind {
                TraceEventKind::ContactUp { a, b, bandwidth } => Some((pair_key(a, b), bandwidth)),
                _ => None,
            })
            .collect();
        let out = verbose_run(&s);
        let mut frames_seen = 0;
        for record in out.log.records() {
            if let LogEvent::LinkUsage { a, b, data_bytes } = record.event {
                frames_seen += 1;
                assert!(data_bytes <= bandwidth[&(a, b)] * tick, "seed {seed}: {data_bytes} bytes in one tick");
            }
        }
        assert!(frames_seen > 0);
    }
}

#[test]
fn report_is_sound() {
    for (seed, scheme, tick) in cases() {
        let s = scenario(seed, scheme, tick);
        let out = verbose_run(&s);
        let r = &out.report;
        assert_eq!(out.protocol_errors, 0);

        let publishes = s
            .trace
            .iter()
            .filter(|e| matches!(e.kind, TraceEventKind::Publish { .. }))
            .count();
        assert_eq!(r.totals.unique_messages, publishes);
        let accepted = out
            .log
            .records()
            .iter()
            .filter(|rec| matches!(rec.event, LogEvent::Delivered { .. }))
            .count();
        assert_eq!(r.totals.disseminated_copies, accepted);
        assert!(r.totals.transferred_copies >= accepted);

        for d in &r.deliveries {
            assert!(d.hops >= 1 && d.delivered_at >= d.created_at);
            assert_ne!(d.receiver, d.message.author);
            let node = out.nodes.get(&d.receiver).unwrap();
            assert_eq!(node.routing.store()[&d.message].hop_count, d.hops);
        }
        let multi = r.deliveries.iter().filter(|d| d.hops >= 2).count() as f64 / r.deliveries.len() as f64;
        assert!((r.one_hop_fraction + multi - 1.0).abs() < 1e-12);

        for cdf in [&r.delay_cdf_all, &r.delay_cdf_1hop] {
            assert!(cdf.windows(2).all(|w| w[0].delay < w[1].delay && w[0].fraction <= w[1].fraction));
            assert_eq!(cdf.last().unwrap().fraction, 1.0);
        }
        assert!(r.delivery_ratio_per_subscription.iter().all(|x| (0.0..=1.0).contains(&x.all)
            && x.one_hop <= x.all));
    }
}

#[test]
fn interest_based_nodes_store_only_followed_authors() {
    for seed in 0..4 {
        let s = scenario(seed, RoutingSchemeKind::InterestBased, 1);
        let out = verbose_run(&s);
        for node in out.nodes.iter() {
            for id in node.routing.store().keys() {
                assert!(
                    id.author == node.id() || node.routing.following().contains(&id.author),
                    "{} holds {id} without following its author",
                    node.id()
                );
            }
        }
    }
}

#[test]
fn sweeps_are_identical_in_parallel_and_sequentially() {
    let s = scenario(11, RoutingSchemeKind::Epidemic, 1);
    let seeds = [1, 2, 3, 4];
    let digests = |execution| -> Vec<String> {
        sweep(&s.config, &s.trace, &seeds, execution)
            .into_iter()
            .map(|(_, out)| out.unwrap().digest())
            .collect()
    };
    assert_eq!(digests(Execution::Parallel), digests(Execution::Sequential));
}
