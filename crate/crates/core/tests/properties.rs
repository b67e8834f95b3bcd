//! Randomized invariants across the library surface.

use proptest::prelude::*;

use cardmed::classifier::{classify_pair, CompatibilityCase};
use cardmed::descriptor::{self, ConstraintEntry, Descriptor, FlowEntry, ServiceEntry};
use cardmed::fdsolve::{basic_mediation, probable_mediation, Problem};
use cardmed::harness::{mock_invoke, MockServiceSpec};
use cardmed::mediator::{merge, partition_batches, rm_dup, select, Element};
use cardmed::model::{
    CardinalityConstraint, DataFlow, DedupStrategy, Extent, Interval, MergeStrategy,
    SelectStrategy, ServiceSpec, StrategyPolicy,
};
use cardmed::planner::{plan_flow, runtime_feasibility, Grade, PlannerConfig};

fn extent(limit: u64) -> impl Strategy<Value = Extent> {
    prop_oneof![
        4 => (0..=limit).prop_map(Extent::Finite),
        1 => Just(Extent::Unbounded),
    ]
}

fn interval(limit: u64) -> impl Strategy<Value = Interval> {
    (0..=limit, extent(limit)).prop_filter_map("nonempty interval", |(lo, hi)| {
        let hi = match hi {
            Extent::Finite(h) => Extent::Finite(h.max(lo)),
            Extent::Unbounded => Extent::Unbounded,
        };
        Interval::new(lo, hi).ok()
    })
}

fn elements() -> impl Strategy<Value = Vec<Element>> {
    prop::collection::vec(0..12u32, 0..50).prop_map(|ids| {
        ids.into_iter()
            .enumerate()
            .map(|(pos, id)| Element::new(format!("k{id}"), "svc", 0, pos as u64))
            .collect()
    })
}

fn keys(list: &[Element]) -> Vec<&str> {
    list.iter().map(|e| e.key.as_str()).collect()
}

/// The six case predicates written out directly; sender [i, j], receiver
/// [m, n].
fn case_oracle(sender: Interval, receiver: Interval) -> Vec<CompatibilityCase> {
    let (i, j) = (sender.lo(), sender.hi());
    let (m, n) = (receiver.lo(), receiver.hi());
    let j_lt_m = match j {
        Extent::Finite(j) => j < m,
        Extent::Unbounded => false,
    };
    let j_le_n = match (j, n) {
        (_, Extent::Unbounded) => true,
        (Extent::Unbounded, Extent::Finite(_)) => false,
        (Extent::Finite(j), Extent::Finite(n)) => j <= n,
    };
    let i_gt_n = match n {
        Extent::Finite(n) => i > n,
        Extent::Unbounded => false,
    };
    let m_le_i = m <= i;
    let mut hits = Vec::new();
    if j_lt_m {
        hits.push(CompatibilityCase::GuaranteedLack);
    }
    if !m_le_i && !j_lt_m && j_le_n {
        hits.push(CompatibilityCase::PotentialLack);
    }
    if m_le_i && j_le_n {
        hits.push(CompatibilityCase::Compatible);
    }
    if m_le_i && !i_gt_n && !j_le_n {
        hits.push(CompatibilityCase::PotentialOverabundance);
    }
    if i_gt_n {
        hits.push(CompatibilityCase::GuaranteedOverabundance);
    }
    if !m_le_i && !j_lt_m && !j_le_n {
        hits.push(CompatibilityCase::PotentialLackAndOverabundance);
    }
    hits
}

fn brute_solutions(a: u64, b: u64, x: u64, y: u64, mmax: u64, nmax: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    for m in 1..=mmax {
        for n in 1..=nmax {
            if (x as u128) * (n as u128) <= (a as u128) * (m as u128)
                && (b as u128) * (m as u128) <= (y as u128) * (n as u128)
            {
                out.push((m, n));
            }
        }
    }
    out
}

fn mediation_problem(a: u64, b: u64, x: u64, y: u64, mmax: u64, nmax: u64) -> Problem {
    let mut p = Problem::new();
    let m = p.add_var("m", 1, mmax).unwrap();
    let n = p.add_var("n", 1, nmax).unwrap();
    p.add_le(x, n, a, m);
    p.add_le(b, m, y, n);
    p
}

proptest! {
    #[test]
    fn interval_subset_is_a_partial_order(
        a in interval(14), b in interval(14), c in interval(14)
    ) {
        prop_assert!(a.is_subset_of(&a));
        if a.is_subset_of(&b) && b.is_subset_of(&a) {
            prop_assert_eq!(a, b);
        }
        if a.is_subset_of(&b) && b.is_subset_of(&c) {
            prop_assert!(a.is_subset_of(&c));
        }
    }

    #[test]
    fn scaling_preserves_subset(a in interval(14), b in interval(14), k in 1..6u64) {
        if a.is_subset_of(&b) {
            prop_assert!(a.scale(k).unwrap().is_subset_of(&b.scale(k).unwrap()));
        }
    }

    #[test]
    fn subset_implies_intersection(a in interval(14), b in interval(14)) {
        if a.is_subset_of(&b) {
            prop_assert!(a.intersects(&b));
        }
        prop_assert_eq!(a.intersects(&b), b.intersects(&a));
    }

    #[test]
    fn exactly_one_case_holds(sender in interval(14), receiver in interval(14)) {
        let hits = case_oracle(sender, receiver);
        prop_assert_eq!(hits.len(), 1, "{} vs {}: {:?}", sender, receiver, hits);
        prop_assert_eq!(hits[0], classify_pair(sender, receiver));
    }

    #[test]
    fn solver_matches_enumeration(
        a in 1..15u64, bspan in 0..8u64,
        x in 1..15u64, yspan in 0..8u64,
        mmax in 1..7u64, nmax in 1..7u64,
    ) {
        let (b, y) = (a + bspan, x + yspan);
        let solved: Vec<(u64, u64)> = mediation_problem(a, b, x, y, mmax, nmax)
            .solutions()
            .map(|s| (s.values()[0], s.values()[1]))
            .collect();
        prop_assert_eq!(solved, brute_solutions(a, b, x, y, mmax, nmax));
    }

    #[test]
    fn propagation_never_loses_solutions(
        a in 1..15u64, bspan in 0..8u64,
        x in 1..15u64, yspan in 0..8u64,
        mmax in 1..8u64, nmax in 1..8u64,
    ) {
        let (b, y) = (a + bspan, x + yspan);
        let brute = brute_solutions(a, b, x, y, mmax, nmax);
        match mediation_problem(a, b, x, y, mmax, nmax).propagate() {
            Err(_) => prop_assert!(brute.is_empty()),
            Ok(domains) => {
                for (m, n) in brute {
                    prop_assert!(domains[0].lo <= m && m <= domains[0].hi);
                    prop_assert!(domains[1].lo <= n && n <= domains[1].hi);
                }
            }
        }
    }

    #[test]
    fn weaker_condition_admits_every_strict_solution(
        a in 1..12u64, bspan in 0..6u64,
        x in 1..12u64, yspan in 0..6u64,
        mmax in 1..8u64, nmax in 1..8u64,
    ) {
        let (b, y) = (a + bspan, x + yspan);
        let strict = basic_mediation(a, b, x, y, mmax, nmax).unwrap();
        let weak = probable_mediation(a, b, x, y, mmax, nmax).unwrap();
        if let Some(strict_pair) = strict {
            let weak_pair = weak.expect("weaker condition cannot be less satisfiable");
            prop_assert!(weak_pair <= strict_pair);
        }
    }

    #[test]
    fn certain_grade_satisfies_the_subset_condition(
        a in 1..10u64, bspan in 0..5u64,
        x in 1..8u64, yspan in 0..5u64,
        sender_cap in 1..12u64, receiver_cap in 1..20u64,
        sel in any::<bool>(),
    ) {
        let (b, y) = (a + bspan, x + yspan);
        let sender = ServiceSpec::with_constraints(
            "s",
            CardinalityConstraint::bounded(0, 0),
            CardinalityConstraint::bounded(a, b),
            Extent::Finite(sender_cap),
            false,
        );
        let receiver = ServiceSpec::with_constraints(
            "r",
            CardinalityConstraint::bounded(x, y),
            CardinalityConstraint::bounded(0, 0),
            Extent::Finite(receiver_cap),
            false,
        );
        let flow = DataFlow {
            sender: "s".into(),
            receiver: "r".into(),
            dup: true,
            sel,
            ord: false,
            policies: StrategyPolicy::default(),
        };
        let plan = plan_flow(&flow, &sender, &receiver, &PlannerConfig::default()).unwrap();
        match plan.grade {
            Grade::Certain { m, n } => {
                if sel {
                    // Selection keeps any surplus; certainty needs only the
                    // receiver's minimum covered by the guaranteed emission.
                    prop_assert!(n * x <= m * a, "n*x={} m*a={}", n * x, m * a);
                    prop_assert_eq!(n, 1);
                } else {
                    prop_assert!(n * x <= m * a && m * b <= n * y);
                }
                prop_assert!(m <= sender_cap && n <= receiver_cap);
            }
            Grade::Probable { m, n } => {
                prop_assert!(!sel);
                prop_assert!(n * x <= m * b && m * a <= n * y);
            }
            Grade::RuntimeOnly | Grade::Infeasible { .. } => {}
        }
    }

    #[test]
    fn runtime_feasibility_matches_scan(
        count in 0..60u64,
        x in 0..10u64, yspan in 0..8u64,
        unbounded in any::<bool>(),
        sel in any::<bool>(),
        nmax in 0..12u64,
    ) {
        let window = if unbounded {
            Interval::at_least(x)
        } else {
            Interval::bounded(x, x + yspan).unwrap()
        };
        let expected = if sel {
            (1..=nmax).rev().find(|&n| n * x <= count)
        } else {
            (1..=nmax).find(|&n| {
                n * x <= count && window.hi().times(n).admits(count)
            })
        };
        prop_assert_eq!(runtime_feasibility(count, window, sel, nmax), expected);
    }

    #[test]
    fn dedup_is_idempotent_and_unique(list in elements(), last in any::<bool>()) {
        let strategy = if last { DedupStrategy::RemoveFirst } else { DedupStrategy::RemoveLast };
        let once = rm_dup(&list, strategy);
        let mut seen = std::collections::BTreeSet::new();
        for e in &once {
            prop_assert!(seen.insert(&e.key), "key {} survives twice", e.key);
        }
        let set_before: std::collections::BTreeSet<&str> = keys(&list).into_iter().collect();
        prop_assert_eq!(seen.len(), set_before.len());
        prop_assert_eq!(rm_dup(&once, strategy), once);
    }

    #[test]
    fn merge_preserves_the_multiset(
        first in elements(), second in elements(), pick in 0..3usize,
    ) {
        let strategy = match pick {
            0 => MergeStrategy::ConcatAb,
            1 => MergeStrategy::ConcatBa,
            _ => MergeStrategy::InterleavePairs,
        };
        let merged = merge(&first, &second, &strategy).unwrap();
        let mut expected: Vec<&Element> = first.iter().chain(&second).collect();
        expected.sort_by(|l, r| l.key.cmp(&r.key).then(l.origin.position.cmp(&r.origin.position)));
        let mut got: Vec<&Element> = merged.iter().collect();
        got.sort_by(|l, r| l.key.cmp(&r.key).then(l.origin.position.cmp(&r.origin.position)));
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn positional_selection_is_an_ordered_subsequence(
        list in elements(), frac in 0..=100usize, last in any::<bool>(),
    ) {
        let k = list.len() * frac / 100;
        let strategy = if last { SelectStrategy::Last } else { SelectStrategy::First };
        let picked = select(&list, &strategy, k).unwrap();
        prop_assert_eq!(picked.len(), k);
        let mut cursor = 0;
        for e in &picked {
            let found = list[cursor..].iter().position(|c| c == e);
            prop_assert!(found.is_some(), "selection reordered elements");
            cursor += found.unwrap() + 1;
        }
    }

    #[test]
    fn partition_conserves_elements_within_window(
        x in 1..8u64, yspan in 0..6u64,
        sizes in prop::collection::vec(0..6u64, 1..7),
    ) {
        let y = x + yspan;
        let window = Interval::bounded(x, y).unwrap();
        let n = sizes.len() as u64;
        let total: u64 = sizes.iter().map(|s| x + s.min(&yspan).min(&5)).sum();
        // Totals built from per-batch sizes inside the window always satisfy
        // the precondition n*x <= total <= n*y.
        let elements: Vec<Element> = (0..total)
            .map(|p| Element::new(format!("e{p}"), "svc", 0, p))
            .collect();
        let batches = partition_batches(elements.clone(), n, window, "dst").unwrap();
        prop_assert_eq!(batches.len() as u64, n);
        let mut rejoined = Vec::new();
        for batch in &batches {
            let len = batch.elements.len() as u64;
            prop_assert!(x <= len && len <= y, "batch of {len} outside [{x},{y}]");
            rejoined.extend(batch.elements.iter().cloned());
        }
        prop_assert_eq!(rejoined, elements);
    }

    #[test]
    fn mock_emissions_are_deterministic_and_in_range(
        seed in any::<u64>(), a in 0..9u64, span in 0..7u64,
        rate_pct in 0..=100u32, ordinal in 0..5u64,
    ) {
        let (b, rate) = (a + span, f64::from(rate_pct) / 100.0);
        let spec = MockServiceSpec::new(
            ServiceSpec::with_constraints(
                "svc",
                CardinalityConstraint::bounded(0, 0),
                CardinalityConstraint::bounded(a, b),
                Extent::Finite(ordinal + 1),
                false,
            ),
            seed,
            rate,
        )
        .unwrap();
        let emitted = mock_invoke(&spec, ordinal).unwrap();
        prop_assert_eq!(&emitted, &mock_invoke(&spec, ordinal).unwrap());
        let count = emitted.len() as u64;
        prop_assert!(a <= count && count <= b);
        if rate == 0.0 {
            for (pos, e) in emitted.iter().enumerate() {
                prop_assert_eq!(&e.key, &format!("svc:{ordinal}:{pos}"));
            }
        }
    }

    #[test]
    fn descriptors_round_trip(
        mins in prop::collection::vec((0..9u64, 0..6u64), 2..4),
        caps in prop::collection::vec(1..30u64, 2..4),
        dup in any::<bool>(), sel in any::<bool>(), ord in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let count = mins.len().min(caps.len());
        let services: Vec<ServiceEntry> = (0..count)
            .map(|i| ServiceEntry {
                id: format!("svc{i}"),
                input: ConstraintEntry { min: mins[i].0, max: Extent::Finite(mins[i].0 + mins[i].1) },
                output: ConstraintEntry { min: mins[i].0 + 1, max: Extent::Finite(mins[i].0 + 1 + mins[i].1) },
                inv_max: Extent::Finite(caps[i]),
                provider: false,
            })
            .collect();
        let flows = vec![FlowEntry {
            sender: "svc0".into(),
            receiver: "svc1".into(),
            dup, sel, ord,
            policies: StrategyPolicy::default(),
        }];
        let d = Descriptor {
            version: descriptor::DESCRIPTOR_VERSION,
            services,
            flows,
            simulation: Some(descriptor::SimulationSection {
                seed,
                runs: 1,
                duplicate_rates: Default::default(),
            }),
        };
        let reparsed = descriptor::parse(&d.to_json()).unwrap();
        prop_assert_eq!(&d, &reparsed);
        prop_assert_eq!(d.to_json(), reparsed.to_json());
    }
}
