//! Instance-level mediation: apply selection, merging, and deduplication to
//! emitted elements, then partition them into receiver-sized batches.
//!
//! [`execute_flow`] drives one data flow end to end: it pulls sender
//! emissions per the plan, accumulates them under the flow's merge policy,
//! deduplicates when the receiver is duplicate-intolerant, consults
//! [`runtime_feasibility`] for a delivery window, and escalates one extra
//! sender invocation at a time when counts miss every window. Every step is
//! recorded in a [`MediationTrace`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::CompatibilityCase;
use crate::model::{DedupStrategy, Extent, Interval, MergeStrategy, SelectStrategy};
use crate::planner::{runtime_feasibility, FlowPlan, Grade};

/// One data instance. Key equality defines "duplicate"; the payload is
/// opaque and the origin records which invocation produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Element {
    pub key: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub payload: Vec<u8>,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub service: String,
    pub invocation: u64,
    pub position: u64,
}

impl Element {
    pub fn new(key: impl Into<String>, service: impl Into<String>, invocation: u64, position: u64) -> Self {
        Element {
            key: key.into(),
            payload: Vec::new(),
            origin: Origin {
                service: service.into(),
                invocation,
                position,
            },
        }
    }
}

/// An ordered group of elements sized for one receiver call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub destination: String,
    pub elements: Vec<Element>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MediationError {
    #[error("selection needs {wanted} elements but only {available} are present")]
    SelectionShortfall { wanted: usize, available: usize },
    #[error("explicit selection names index {index} outside a result of {len} elements")]
    SelectionOutOfRange { index: usize, len: usize },
    #[error("selection stride must be at least 1")]
    ZeroStride,
    #[error("merge permutation is not a permutation of 0..{expected}")]
    MergePolicy { expected: usize },
    #[error("{count} elements cannot form {n} batches of {window} each")]
    Partition { count: usize, n: u64, window: Interval },
    #[error("policy `{policy}` would reorder elements, but the flow requires order conservation")]
    OrderViolation { policy: String },
    #[error("flow was planned infeasible: {reason}")]
    PlanInfeasible { reason: String },
    #[error("service `{service}` has no invocations left")]
    BudgetExhausted { service: String },
    #[error("element source failed: {detail}")]
    Source { detail: String },
}

/// Why a mediation attempt gave up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// After deduplication, fewer unique elements than the receiver's
    /// minimum, with no sender budget left.
    InsufficientUnique,
    /// No batch count places the accumulated total inside the receiver's
    /// window, with no sender budget left.
    NoFeasibleWindow,
    /// An explicit selection list cannot be honored against the runtime
    /// element count.
    SelectionMismatch,
}

/// One step of a mediation, in execution order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Invoke { service: String, ordinal: u64 },
    Emit { count: u64 },
    Merge { strategy: MergeStrategy },
    Dedup { removed: u64 },
    Select { kept: Vec<u64> },
    Deliver { batch_sizes: Vec<u64> },
    Escalate { extra_ordinal: u64 },
    Fail {
        kind: FailureKind,
        case: CompatibilityCase,
        emitted: u64,
        unique: u64,
    },
}

/// Ordered record of every mediation step of one flow execution.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediationTrace {
    pub events: Vec<TraceEvent>,
}

impl MediationTrace {
    pub fn push(&mut self, event: TraceEvent) {
        self.events.push(event);
    }

    /// One JSON object per line, in event order, with a trailing newline.
    pub fn to_json_lines(&self) -> serde_json::Result<String> {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(event)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Pick `k` elements according to `strategy`.
///
/// `First`, `Last`, and `Stride` preserve relative input order; `Explicit`
/// returns exactly the listed indices in listed order (and must list
/// exactly `k` of them).
pub fn select(
    list: &[Element],
    strategy: &SelectStrategy,
    k: usize,
) -> Result<Vec<Element>, MediationError> {
    Ok(select_indices(list.len(), strategy, k)?
        .into_iter()
        .map(|i| list[i].clone())
        .collect())
}

/// Index-level selection; what [`select`] keeps and the trace records.
fn select_indices(
    len: usize,
    strategy: &SelectStrategy,
    k: usize,
) -> Result<Vec<usize>, MediationError> {
    match strategy {
        SelectStrategy::First => {
            if k > len {
                return Err(MediationError::SelectionShortfall { wanted: k, available: len });
            }
            Ok((0..k).collect())
        }
        SelectStrategy::Last => {
            if k > len {
                return Err(MediationError::SelectionShortfall { wanted: k, available: len });
            }
            Ok((len - k..len).collect())
        }
        SelectStrategy::Stride(step) => {
            if *step == 0 {
                return Err(MediationError::ZeroStride);
            }
            let strided: Vec<usize> = (0..len).step_by(*step).collect();
            if k > strided.len() {
                return Err(MediationError::SelectionShortfall {
                    wanted: k,
                    available: strided.len(),
                });
            }
            Ok(strided[..k].to_vec())
        }
        SelectStrategy::Explicit(indices) => {
            for &index in indices {
                if index >= len {
                    return Err(MediationError::SelectionOutOfRange { index, len });
                }
            }
            if indices.len() != k {
                return Err(MediationError::SelectionShortfall {
                    wanted: k,
                    available: indices.len(),
                });
            }
            Ok(indices.clone())
        }
    }
}

/// Combine two successive result lists. The output is always a permutation
/// of the concatenation, so element multisets are preserved.
pub fn merge(
    first: &[Element],
    second: &[Element],
    strategy: &MergeStrategy,
) -> Result<Vec<Element>, MediationError> {
    match strategy {
        MergeStrategy::ConcatAb => Ok(first.iter().chain(second).cloned().collect()),
        MergeStrategy::ConcatBa => Ok(second.iter().chain(first).cloned().collect()),
        MergeStrategy::InterleavePairs => {
            let mut out = Vec::with_capacity(first.len() + second.len());
            let (mut a, mut b) = (first.iter(), second.iter());
            loop {
                let took_a = a.by_ref().take(2).cloned().collect::<Vec<_>>();
                let took_b = b.by_ref().take(2).cloned().collect::<Vec<_>>();
                if took_a.is_empty() && took_b.is_empty() {
                    return Ok(out);
                }
                out.extend(took_a);
                out.extend(took_b);
            }
        }
        MergeStrategy::Explicit(permutation) => {
            let concat: Vec<Element> = first.iter().chain(second).cloned().collect();
            let expected = concat.len();
            if permutation.len() != expected {
                return Err(MediationError::MergePolicy { expected });
            }
            let mut seen = vec![false; expected];
            for &index in permutation {
                if index >= expected || seen[index] {
                    return Err(MediationError::MergePolicy { expected });
                }
                seen[index] = true;
            }
            Ok(permutation.iter().map(|&i| concat[i].clone()).collect())
        }
    }
}

/// Remove duplicate keys. `RemoveFirst` removes earlier occurrences, so the
/// last occurrence of each key survives; `RemoveLast` keeps the first.
/// Survivor order follows the input.
pub fn rm_dup(list: &[Element], strategy: DedupStrategy) -> Vec<Element> {
    use std::collections::HashSet;
    match strategy {
        DedupStrategy::RemoveLast => {
            let mut seen = HashSet::new();
            list.iter()
                .filter(|e| seen.insert(e.key.clone()))
                .cloned()
                .collect()
        }
        DedupStrategy::RemoveFirst => {
            let mut seen = HashSet::new();
            let mut kept: Vec<Element> = list
                .iter()
                .rev()
                .filter(|e| seen.insert(e.key.clone()))
                .cloned()
                .collect();
            kept.reverse();
            kept
        }
    }
}

/// Split `elements` into exactly `n` consecutive batches whose sizes lie in
/// `window`. Requires `n*x <= len <= n*y`.
///
/// Sizes are `len div n`, with the first `len mod n` batches one larger.
/// Under the precondition both sizes fit the window: `base = floor(len/n)`
/// is at least `x` (since `len >= n*x`) and at most `y`; when a remainder
/// exists, `n*base < len <= n*y` gives `base < y`, so `base + 1 <= y`. The
/// greedy fallback some partitioning schemes need is therefore unreachable.
pub fn partition_batches(
    elements: Vec<Element>,
    n: u64,
    window: Interval,
    destination: &str,
) -> Result<Vec<Batch>, MediationError> {
    let len = elements.len();
    let fits = n >= 1
        && (n as u128) * (window.lo() as u128) <= len as u128
        && match window.hi() {
            Extent::Finite(y) => len as u128 <= (n as u128) * (y as u128),
            Extent::Unbounded => true,
        };
    if !fits {
        return Err(MediationError::Partition { count: len, n, window });
    }
    let n_usize = usize::try_from(n).expect("n bounded by len which is a usize");
    let base = len / n_usize;
    let remainder = len % n_usize;
    let mut batches = Vec::with_capacity(n_usize);
    let mut rest = elements;
    for index in 0..n_usize {
        let size = base + usize::from(index < remainder);
        let tail = rest.split_off(size);
        batches.push(Batch {
            destination: destination.to_string(),
            elements: rest,
        });
        rest = tail;
    }
    debug_assert!(rest.is_empty());
    debug_assert!(batches
        .iter()
        .all(|b| window.contains(b.len() as u64)));
    Ok(batches)
}

/// A sender the mediator can invoke: either a live adapter or the
/// simulation harness.
pub trait ElementSource {
    fn service_id(&self) -> &str;

    /// Perform (or replay) the next invocation and return its elements.
    fn invoke(&mut self) -> Result<Vec<Element>, MediationError>;

    /// Invocations still available to this flow.
    fn remaining(&self) -> Extent;
}

/// Receiver-side limits the mediator must respect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceiverCaps {
    pub service_id: String,
    /// Elements accepted per call, the receiver input constraint [x, y].
    pub accepts: Interval,
    /// Invocations still available to the receiver.
    pub budget: Extent,
}

/// How one flow execution ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum FlowOutcome {
    Delivered { batches: Vec<Batch> },
    Failed {
        kind: FailureKind,
        case: CompatibilityCase,
        emitted: u64,
        unique: u64,
    },
}

impl FlowOutcome {
    pub fn is_delivered(&self) -> bool {
        matches!(self, FlowOutcome::Delivered { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowExecution {
    pub outcome: FlowOutcome,
    pub trace: MediationTrace,
}

/// Execute one planned flow against a sender source.
///
/// Pulls the planned number of sender invocations (fewer if the budget runs
/// short), accumulating elements under the merge policy; order-conserving
/// flows force plain concatenation unless an explicit permutation was
/// declared, and any declared policy that would reorder is rejected. After
/// each round the accumulated count is checked for a feasible delivery
/// window; on failure the mediator escalates one extra invocation at a time
/// until the sender budget is exhausted.
pub fn execute_flow(
    plan: &FlowPlan,
    source: &mut dyn ElementSource,
    caps: &ReceiverCaps,
) -> Result<FlowExecution, MediationError> {
    let flow = &plan.flow;
    if let Grade::Infeasible { reason } = &plan.grade {
        return Err(MediationError::PlanInfeasible { reason: reason.clone() });
    }
    let merge_strategy = effective_merge_strategy(flow.ord, &flow.policies.merge)?;
    if flow.ord && flow.sel {
        if let SelectStrategy::Explicit(indices) = &flow.policies.select {
            if indices.windows(2).any(|w| w[0] >= w[1]) {
                return Err(MediationError::OrderViolation {
                    policy: "select: explicit (indices not ascending)".to_string(),
                });
            }
        }
    }

    let planned_m = plan.grade.counts().map_or(1, |(m, _)| m);
    let mut round = Round {
        pool: Vec::new(),
        invoked: 0,
        emitted: 0,
        trace: MediationTrace::default(),
    };

    while round.invoked < planned_m && source.remaining() != Extent::Finite(0) {
        round.pull(source, &merge_strategy)?;
    }

    loop {
        let working = if flow.dup {
            round.pool.clone()
        } else {
            let deduped = rm_dup(&round.pool, flow.policies.dedup);
            round.trace.push(TraceEvent::Dedup {
                removed: (round.pool.len() - deduped.len()) as u64,
            });
            deduped
        };
        let unique = working.len() as u64;

        if let Some(delivery) = try_deliver(flow, caps, working, &mut round.trace)? {
            return Ok(FlowExecution {
                outcome: FlowOutcome::Delivered { batches: delivery },
                trace: round.trace,
            });
        }

        if source.remaining() == Extent::Finite(0) {
            let kind = if !flow.dup && unique < caps.accepts.lo() {
                FailureKind::InsufficientUnique
            } else if flow.sel && matches!(flow.policies.select, SelectStrategy::Explicit(_)) {
                FailureKind::SelectionMismatch
            } else {
                FailureKind::NoFeasibleWindow
            };
            round.trace.push(TraceEvent::Fail {
                kind,
                case: plan.case,
                emitted: round.emitted,
                unique,
            });
            return Ok(FlowExecution {
                outcome: FlowOutcome::Failed {
                    kind,
                    case: plan.case,
                    emitted: round.emitted,
                    unique,
                },
                trace: round.trace,
            });
        }
        round.trace.push(TraceEvent::Escalate {
            extra_ordinal: round.invoked,
        });
        round.pull(source, &merge_strategy)?;
    }
}

/// Accumulation state of one flow execution.
struct Round {
    pool: Vec<Element>,
    invoked: u64,
    emitted: u64,
    trace: MediationTrace,
}

impl Round {
    /// Invoke the sender once and fold the emission into the pool.
    fn pull(
        &mut self,
        source: &mut dyn ElementSource,
        merge_strategy: &MergeStrategy,
    ) -> Result<(), MediationError> {
        let batch = source.invoke()?;
        self.trace.push(TraceEvent::Invoke {
            service: source.service_id().to_string(),
            ordinal: self.invoked,
        });
        self.trace.push(TraceEvent::Emit { count: batch.len() as u64 });
        self.emitted += batch.len() as u64;
        self.invoked += 1;
        if self.invoked == 1 {
            self.pool = batch;
        } else {
            self.trace.push(TraceEvent::Merge { strategy: merge_strategy.clone() });
            self.pool = merge(&self.pool, &batch, merge_strategy)?;
        }
        Ok(())
    }
}

/// Attempt one delivery of `working`; `Ok(None)` means no feasible window
/// yet (caller may escalate).
fn try_deliver(
    flow: &crate::model::DataFlow,
    caps: &ReceiverCaps,
    working: Vec<Element>,
    trace: &mut MediationTrace,
) -> Result<Option<Vec<Batch>>, MediationError> {
    let count = working.len() as u64;
    let window = caps.accepts;
    let scan_max = match caps.budget {
        Extent::Finite(b) if flow.sel => b,
        budget => budget.capped(count.max(1)),
    };

    if !flow.sel {
        let Some(n) = runtime_feasibility(count, window, false, scan_max) else {
            return Ok(None);
        };
        let batches = partition_batches(working, n, window, &caps.service_id)?;
        trace.push(TraceEvent::Deliver {
            batch_sizes: batches.iter().map(|b| b.len() as u64).collect(),
        });
        return Ok(Some(batches));
    }

    // Selection allowed: an explicit list fixes the delivered count; the
    // positional strategies deliver as much as fits.
    let (n, keep) = if let SelectStrategy::Explicit(indices) = &flow.policies.select {
        if indices.iter().any(|&i| i as u64 >= count) {
            return Ok(None);
        }
        let declared = indices.len() as u64;
        match runtime_feasibility(declared, window, false, scan_max) {
            Some(n) => (n, declared),
            None => return Ok(None),
        }
    } else {
        let Some(n) = runtime_feasibility(count, window, true, scan_max) else {
            return Ok(None);
        };
        let keep = match window.hi() {
            Extent::Finite(y) => count.min(n.saturating_mul(y)),
            Extent::Unbounded => count,
        };
        (n, keep)
    };

    let working = if keep < count || matches!(flow.policies.select, SelectStrategy::Explicit(_)) {
        let kept_indices = select_indices(working.len(), &flow.policies.select, keep as usize)?;
        trace.push(TraceEvent::Select {
            kept: kept_indices.iter().map(|&i| i as u64).collect(),
        });
        kept_indices.into_iter().map(|i| working[i].clone()).collect()
    } else {
        working
    };

    let batches = partition_batches(working, n, window, &caps.service_id)?;
    trace.push(TraceEvent::Deliver {
        batch_sizes: batches.iter().map(|b| b.len() as u64).collect(),
    });
    Ok(Some(batches))
}

/// Order-conserving flows concatenate in emission order; a declared
/// explicit permutation is honored only if it does not reorder (which for a
/// permutation means identity).
fn effective_merge_strategy(
    ord: bool,
    declared: &MergeStrategy,
) -> Result<MergeStrategy, MediationError> {
    if !ord {
        return Ok(declared.clone());
    }
    match declared {
        MergeStrategy::Explicit(perm) => {
            if perm.windows(2).any(|w| w[0] >= w[1]) {
                Err(MediationError::OrderViolation {
                    policy: "merge: explicit (permutation reorders)".to_string(),
                })
            } else {
                Ok(declared.clone())
            }
        }
        _ => Ok(MergeStrategy::ConcatAb),
    }
}
