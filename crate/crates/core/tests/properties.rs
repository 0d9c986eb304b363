use std::collections::BTreeSet;

use proptest::prelude::*;
use sizeset::harness::{Op, OpResult, SetModel};
use sizeset::{Options, Reclamation, StructureKind, ThreadId};

const T0: ThreadId = ThreadId::new(0);

fn arb_ops(range: i64) -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(
        prop_oneof![
            3 => (0..range).prop_map(Op::Insert),
            2 => (0..range).prop_map(Op::Delete),
            2 => (0..range).prop_map(Op::Contains),
            1 => Just(Op::Size),
        ],
        0..300,
    )
}

fn arb_structure() -> impl Strategy<Value = StructureKind> {
    prop::sample::select(StructureKind::ALL.to_vec())
}

proptest! {
    #[test]
    fn every_structure_behaves_like_a_sequential_set(
        kind in arb_structure(),
        ops in arb_ops(40),
        leak in any::<bool>(),
        expected in 1usize..64,
    ) {
        let reclamation = if leak { Reclamation::Leak } else { Reclamation::Defer };
        let opts = Options::new(1).reclamation(reclamation).expected_elements(expected);
        let set = kind.build(opts).unwrap();
        let mut model = SetModel::default();
        for op in ops {
            let got = sizeset::harness::execute(&*set, T0, op);
            prop_assert_eq!(got, model.apply(op), "{} on {}", op, kind);
        }
        prop_assert_eq!(set.size(T0), model.len() as i64);
    }

    #[test]
    fn concurrent_updates_leave_size_equal_to_contents(
        kind in prop::sample::select(vec![StructureKind::List, StructureKind::Hash]),
        seed in any::<u64>(),
    ) {
        // Each thread works on its own residue class, so the final contents
        // are predictable from per-thread sequential replays.
        let threads = 3usize;
        let set = kind.build(Options::new(threads + 1).expected_elements(16)).unwrap();
        let streams: Vec<Vec<Op>> = (0..threads)
            .map(|t| {
                sizeset::harness::op_stream(seed, t, sizeset::harness::OpMix::BALANCED, 10)
                    .take(300)
                    .map(|op| match op {
                        Op::Insert(k) => Op::Insert(k * 3 + t as i64),
                        Op::Delete(k) => Op::Delete(k * 3 + t as i64),
                        _ => Op::Size,
                    })
                    .collect()
            })
            .collect();
        let set_ref = &*set;
        let sizes: Vec<Vec<i64>> = std::thread::scope(|s| {
            let hs: Vec<_> = streams
                .iter()
                .map(|ops| {
                    s.spawn(move || {
                        let reg = set_ref.register().unwrap();
                        let mut sizes = Vec::new();
                        for &op in ops {
                            if let OpResult::Size(n) = sizeset::harness::execute(set_ref, reg.id(), op) {
                                sizes.push(n);
                            }
                        }
                        sizes
                    })
                })
                .collect();
            hs.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let mut expected = BTreeSet::new();
        for ops in &streams {
            let mut own = SetModel::default();
            for &op in ops {
                own.apply(op);
            }
            for k in 0..30 {
                if own.contains(k) {
                    expected.insert(k);
                }
            }
        }
        let reg = set.register().unwrap();
        prop_assert_eq!(set.size(reg.id()), expected.len() as i64);
        for k in 0..30 {
            prop_assert_eq!(set.contains(reg.id(), k), expected.contains(&k));
        }
        prop_assert!(sizes.iter().flatten().all(|&n| (0..=30).contains(&n)));
    }
}
