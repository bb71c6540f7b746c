//! Partially synchronous point-to-point network over logical ticks.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::scenario::Schedule;

#[derive(Clone, Debug)]
pub(crate) struct Envelope<A, M> {
    pub from: A,
    pub to: A,
    pub msg: M,
}

/// Messages sent before GST take `[1, pre_gst_max]` ticks but arrive no
/// later than `GST + delta`; later messages take `[1, delta]`. Messages a
/// node sends to itself arrive on the next tick. Messages due on the same
/// tick are delivered in a seeded random order.
#[derive(Debug)]
pub(crate) struct Net<A, M> {
    schedule: Schedule,
    queue: BTreeMap<u64, Vec<Envelope<A, M>>>,
    len: usize,
}

impl<A: PartialEq, M> Net<A, M> {
    pub fn new(schedule: Schedule) -> Self {
        Net {
            schedule,
            queue: BTreeMap::new(),
            len: 0,
        }
    }

    pub fn delay(&self, rng: &mut ChaCha8Rng, now: u64) -> u64 {
        let s = &self.schedule;
        if now < s.gst {
            let d = rng.gen_range(1..=s.pre_gst_max);
            d.min(s.gst + s.delta - now)
        } else {
            rng.gen_range(1..=s.delta)
        }
    }

    pub fn send(&mut self, rng: &mut ChaCha8Rng, now: u64, from: A, to: A, msg: M) {
        let d = if from == to { 1 } else { self.delay(rng, now) };
        self.queue
            .entry(now + d)
            .or_default()
            .push(Envelope { from, to, msg });
        self.len += 1;
    }

    pub fn deliver(&mut self, rng: &mut ChaCha8Rng, now: u64) -> Vec<Envelope<A, M>> {
        let mut out = Vec::new();
        while let Some(entry) = self.queue.first_entry() {
            if *entry.key() > now {
                break;
            }
            out.extend(entry.remove());
        }
        self.len -= out.len();
        out.shuffle(rng);
        out
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn delays_respect_the_schedule() {
        let sched = Schedule {
            gst: 50,
            pre_gst_max: 40,
            delta: 3,
            ..Schedule::default()
        };
        let net: Net<u8, ()> = Net::new(sched);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for now in 0..200 {
            let d = net.delay(&mut rng, now);
            assert!(d >= 1);
            assert!(now + d <= now.max(50) + 3, "sent {now} delay {d}");
        }
    }

    #[test]
    fn delivers_everything_once() {
        let mut net = Net::new(Schedule::default());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..50u32 {
            net.send(&mut rng, 0, 0u8, 1u8, i);
        }
        net.send(&mut rng, 0, 1u8, 1u8, 99);
        let mut got = Vec::new();
        for now in 1..=200 {
            got.extend(net.deliver(&mut rng, now).into_iter().map(|e| e.msg));
        }
        assert!(net.is_empty());
        got.sort();
        assert_eq!(got.len(), 51);
        assert_eq!(got.last(), Some(&99));
    }
}
