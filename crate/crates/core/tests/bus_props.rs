use std::collections::HashMap;
use std::thread;
use std::time::Duration;

use proptest::prelude::*;

use navstack::bus::{Bus, BusError, BusMode};

proptest! {
    #[test]
    fn per_publisher_order_is_publication_order(order in prop::collection::vec(0usize..4, 1..200)) {
        let bus: Bus<(usize, u64)> = Bus::new(BusMode::Lockstep);
        let sub = bus.subscribe("/t", 1024).unwrap();
        let mut pubs: Vec<_> = (0..4).map(|_| bus.advertise("/t").unwrap()).collect();
        let mut counts = [0u64; 4];
        for (k, &p) in order.iter().enumerate() {
            pubs[p].publish(k as f64, (p, counts[p])).unwrap();
            counts[p] += 1;
        }
        let got = sub.drain();
        prop_assert_eq!(got.len(), order.len());
        let mut next: HashMap<usize, u64> = HashMap::new();
        let mut last_seq: HashMap<u64, u64> = HashMap::new();
        for e in got {
            let (p, n) = e.payload;
            let want = next.entry(p).or_insert(0);
            prop_assert_eq!(n, *want);
            *want += 1;
            if let Some(prev) = last_seq.insert(e.publisher, e.seq) {
                prop_assert!(e.seq > prev);
            }
        }
    }

    #[test]
    fn remap_chains_resolve_to_the_end(len in 1usize..8) {
        let bus: Bus<u8> = Bus::new(BusMode::Lockstep);
        let names: Vec<String> = (0..=len).map(|k| format!("/n{k}")).collect();
        for w in names.windows(2) {
            bus.remap(&w[0], &w[1]).unwrap();
        }
        for n in &names {
            let r = bus.resolve(n).unwrap();
            prop_assert_eq!(r.as_str(), names[len].as_str());
        }
        let sub = bus.subscribe(&names[len], 2).unwrap();
        let mut p = bus.advertise(&names[0]).unwrap();
        p.publish(0.0, 9).unwrap();
        prop_assert_eq!(sub.try_recv().map(|e| e.payload), Some(9));
    }
}

#[test]
fn late_subscriber_sees_no_history() {
    let bus: Bus<u8> = Bus::new(BusMode::Threaded);
    let mut p = bus.advertise("/x").unwrap();
    p.publish(0.0, 1).unwrap();
    let sub = bus.subscribe("/x", 8).unwrap();
    assert!(sub.try_recv().is_none());
    p.publish(1.0, 2).unwrap();
    assert_eq!(sub.drain().iter().map(|e| e.payload).collect::<Vec<_>>(), vec![2]);
}

#[test]
fn concurrent_callers_get_their_own_responses() {
    let bus: Bus<u8> = Bus::new(BusMode::Threaded);
    bus.register_service("/echo", |x: u64| {
        thread::sleep(Duration::from_millis(2));
        x * 3
    })
    .unwrap();
    thread::scope(|s| {
        for caller in 0..8u64 {
            let bus = bus.clone();
            s.spawn(move || {
                for k in 0..20 {
                    let req = caller * 1000 + k;
                    let r: u64 = bus.call_service("/echo", req, Duration::from_secs(5)).unwrap();
                    assert_eq!(r, req * 3);
                }
            });
        }
    });
}

#[test]
fn remap_cycle_is_rejected() {
    let bus: Bus<u8> = Bus::new(BusMode::Lockstep);
    bus.remap("/a", "/b").unwrap();
    assert!(matches!(bus.remap("/b", "/a"), Err(BusError::RemapCycle(_))));
    let r = bus.resolve("/a").unwrap();
    assert_eq!(r.as_str(), "/b");
}
