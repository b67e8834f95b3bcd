//! Deterministic simulation of sender/receiver services.
//!
//! Services are mocked by a seeded generator: invocation `k` of a service
//! emits a count drawn uniformly from its output constraint, with keys
//! either fresh or recycled from earlier emissions per a duplicate rate.
//! Every emission is a pure function of (seed, invocation ordinal), so a
//! whole simulation replays byte-identically from its seed.
//!
//! The generator is pinned: ChaCha8 seeded with `seed_from_u64`, one stream
//! per invocation ordinal, with per-service seeds derived from the master
//! seed by splitmix64. Reports record the generator name so golden traces
//! stay portable.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::mediator::{
    execute_flow, Element, ElementSource, FlowOutcome, MediationError, MediationTrace,
    ReceiverCaps,
};
use crate::model::{Composition, Extent, ModelError, ServiceSpec};
use crate::planner::CompositionPlan;

/// Emission width used when a sender's output maximum is unbounded: counts
/// are drawn from [a, a + spread].
pub const UNBOUNDED_EMIT_SPREAD: u64 = 8;

/// Name of the pinned generator recorded in every report.
pub const GENERATOR: &str = "chacha8";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("composition contains a cycle through services {0:?}")]
    Cycle(Vec<String>),
    #[error("duplicate rate {rate} for service `{service}` is outside [0, 1]")]
    BadDuplicateRate { service: String, rate: f64 },
    #[error("data provider `{service}` must provide new data on each invocation, not duplicates")]
    ProviderDuplicates { service: String },
    #[error("invocation {ordinal} of `{service}` exceeds its budget of {budget}")]
    BudgetExceeded {
        service: String,
        ordinal: u64,
        budget: Extent,
    },
    #[error("plan does not cover composition: {detail}")]
    PlanMismatch { detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mediation(#[from] MediationError),
}

/// A simulated service: the real spec plus generator parameters.
#[derive(Debug, Clone)]
pub struct MockServiceSpec {
    pub service: ServiceSpec,
    pub seed: u64,
    /// Probability that an emitted element reuses a previously emitted key.
    pub duplicate_rate: f64,
    /// Fresh keys on every invocation, regardless of the rate.
    pub provider_mode: bool,
}

impl MockServiceSpec {
    pub fn new(service: ServiceSpec, seed: u64, duplicate_rate: f64) -> Result<Self, HarnessError> {
        if !(0.0..=1.0).contains(&duplicate_rate) {
            return Err(HarnessError::BadDuplicateRate {
                service: service.id.clone(),
                rate: duplicate_rate,
            });
        }
        let provider_mode = service.is_provider;
        if provider_mode && duplicate_rate != 0.0 {
            return Err(HarnessError::ProviderDuplicates { service: service.id });
        }
        Ok(MockServiceSpec {
            service,
            seed,
            duplicate_rate,
            provider_mode,
        })
    }
}

/// Elements emitted by invocation `ordinal`, 0-based.
///
/// Pure in (spec, ordinal): the emission history is rebuilt from invocation
/// 0 so recycled keys always refer to keys that were actually emitted
/// earlier. Each invocation draws from its own ChaCha8 stream, so its count
/// and key choices depend only on the seed and its ordinal.
pub fn mock_invoke(spec: &MockServiceSpec, ordinal: u64) -> Result<Vec<Element>, HarnessError> {
    if !spec.service.inv_max.admits(ordinal.saturating_add(1)) {
        return Err(HarnessError::BudgetExceeded {
            service: spec.service.id.clone(),
            ordinal,
            budget: spec.service.inv_max,
        });
    }
    let out = spec.service.output_interval()?;
    let lo = out.lo();
    let hi = match out.hi() {
        Extent::Finite(h) => h,
        Extent::Unbounded => lo + UNBOUNDED_EMIT_SPREAD,
    };

    // With no recycling the pool is never consulted and each invocation
    // draws only from its own stream, so earlier invocations need not be
    // rebuilt. Output is byte-identical to the general path.
    let first = if spec.provider_mode || spec.duplicate_rate == 0.0 {
        ordinal
    } else {
        0
    };
    let mut emitted_keys: Vec<String> = Vec::new();
    let mut result = Vec::new();
    for inv in first..=ordinal {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(inv);
        let count = rng.gen_range(lo..=hi);
        let mut elements = Vec::with_capacity(count as usize);
        for pos in 0..count {
            let recycle = !spec.provider_mode
                && !emitted_keys.is_empty()
                && spec.duplicate_rate > 0.0
                && rng.gen_bool(spec.duplicate_rate);
            let key = if recycle {
                emitted_keys[rng.gen_range(0..emitted_keys.len())].clone()
            } else {
                format!("{}:{inv}:{pos}", spec.service.id)
            };
            emitted_keys.push(key.clone());
            elements.push(Element::new(key, &spec.service.id, inv, pos));
        }
        if inv == ordinal {
            result = elements;
        }
    }
    Ok(result)
}

/// Shared invocation accounting across the flows of one simulation.
///
/// A service's invocations are shared: batches delivered to it and results
/// pulled from it refer to the same underlying calls, so pulling ordinal k
/// after k+1 deliveries replays an already-performed invocation instead of
/// spending budget.
#[derive(Debug, Clone, Default)]
pub struct InvocationLedger {
    performed: BTreeMap<String, u64>,
}

impl InvocationLedger {
    pub fn performed(&self, service: &str) -> u64 {
        self.performed.get(service).copied().unwrap_or(0)
    }

    fn raise_to(&mut self, service: &str, count: u64) {
        let entry = self.performed.entry(service.to_string()).or_insert(0);
        *entry = (*entry).max(count);
    }
}

/// [`ElementSource`] adapter over a mock service and the shared ledger.
pub struct MockSource<'a> {
    spec: &'a MockServiceSpec,
    ledger: &'a mut InvocationLedger,
    cursor: u64,
}

impl<'a> MockSource<'a> {
    pub fn new(spec: &'a MockServiceSpec, ledger: &'a mut InvocationLedger) -> Self {
        MockSource {
            spec,
            ledger,
            cursor: 0,
        }
    }
}

impl ElementSource for MockSource<'_> {
    fn service_id(&self) -> &str {
        &self.spec.service.id
    }

    fn invoke(&mut self) -> Result<Vec<Element>, MediationError> {
        let ordinal = self.cursor;
        let elements = mock_invoke(self.spec, ordinal).map_err(|e| match e {
            HarnessError::BudgetExceeded { service, .. } => {
                MediationError::BudgetExhausted { service }
            }
            other => MediationError::Source {
                detail: other.to_string(),
            },
        })?;
        self.cursor += 1;
        self.ledger.raise_to(&self.spec.service.id, self.cursor);
        Ok(elements)
    }

    fn remaining(&self) -> Extent {
        match self.spec.service.inv_max {
            Extent::Unbounded => Extent::Unbounded,
            Extent::Finite(max) => Extent::Finite(max.saturating_sub(self.cursor)),
        }
    }
}

/// Simulation parameters: master seed plus optional per-service duplicate
/// rates (default 0).
#[derive(Debug, Clone, Default)]
pub struct SimulationConfig {
    pub seed: u64,
    pub duplicate_rates: BTreeMap<String, f64>,
}

/// Outcome of one flow in a simulation, in composition declaration order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowResult {
    pub label: String,
    pub outcome: FlowOutcome,
    pub trace: MediationTrace,
}

/// Full record of one simulation run. Serializes byte-stably: map keys are
/// sorted and all randomness is derived from the recorded seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub generator: String,
    pub flow_results: Vec<FlowResult>,
    /// Flows not executed because an earlier flow failed.
    pub skipped: Vec<String>,
    /// Invocations actually performed, per service.
    pub invocations: BTreeMap<String, u64>,
    pub all_succeeded: bool,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the service at `index` in id-sorted order.
fn service_seed(master: u64, index: usize) -> u64 {
    splitmix64(splitmix64(master).wrapping_add(index as u64))
}

/// Services in an order where every flow's sender precedes its receiver;
/// ties resolve lexicographically. Errors on cyclic compositions.
fn topological_order(c: &Composition) -> Result<Vec<String>, HarnessError> {
    use std::collections::BTreeSet;

    let mut indegree: BTreeMap<&str, usize> =
        c.services.iter().map(|s| (s.id.as_str(), 0)).collect();
    let mut edges: BTreeSet<(&str, &str)> = BTreeSet::new();
    for flow in &c.flows {
        if edges.insert((flow.sender.as_str(), flow.receiver.as_str())) {
            *indegree.get_mut(flow.receiver.as_str()).expect("validated") += 1;
        }
    }
    let mut ready: BTreeSet<&str> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(id, _)| *id)
        .collect();
    let mut order = Vec::with_capacity(c.services.len());
    while let Some(&next) = ready.iter().next() {
        ready.remove(next);
        order.push(next.to_string());
        for (from, to) in &edges {
            if *from == next {
                let d = indegree.get_mut(to).expect("validated");
                *d -= 1;
                if *d == 0 {
                    ready.insert(to);
                }
            }
        }
    }
    if order.len() < c.services.len() {
        let stuck: Vec<String> = indegree
            .iter()
            .filter(|(_, d)| **d > 0)
            .map(|(id, _)| id.to_string())
            .collect();
        return Err(HarnessError::Cycle(stuck));
    }
    Ok(order)
}

/// Execute every flow of a planned composition against mocked services.
///
/// Flows run in topological order (sender before receiver along every
/// edge), sharing one invocation ledger; execution halts at the first
/// failed flow, and the remaining flows are reported as skipped. The result
/// is deterministic in (composition, plan, config).
pub fn run_simulation(
    c: &Composition,
    plan: &CompositionPlan,
    config: &SimulationConfig,
) -> Result<SimulationReport, HarnessError> {
    if plan.flow_plans.len() != c.flows.len() {
        return Err(HarnessError::PlanMismatch {
            detail: format!(
                "plan covers {} flows, composition has {}",
                plan.flow_plans.len(),
                c.flows.len()
            ),
        });
    }

    let mut sorted_ids: Vec<&str> = c.services.iter().map(|s| s.id.as_str()).collect();
    sorted_ids.sort_unstable();
    let mut mocks: BTreeMap<String, MockServiceSpec> = BTreeMap::new();
    for (index, id) in sorted_ids.iter().enumerate() {
        let service = c.service(id).expect("id from composition").clone();
        let rate = config.duplicate_rates.get(*id).copied().unwrap_or(0.0);
        mocks.insert(
            id.to_string(),
            MockServiceSpec::new(service, service_seed(config.seed, index), rate)?,
        );
    }

    let order = topological_order(c)?;
    let rank: BTreeMap<&str, usize> = order
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut flow_indices: Vec<usize> = (0..c.flows.len()).collect();
    flow_indices.sort_by_key(|&i| (rank[c.flows[i].sender.as_str()], i));

    let mut ledger = InvocationLedger::default();
    let mut results: Vec<(usize, FlowResult)> = Vec::new();
    let mut skipped: Vec<String> = Vec::new();
    let mut halted = false;

    for &index in &flow_indices {
        let flow = &c.flows[index];
        if halted {
            skipped.push(flow.label());
            continue;
        }
        let flow_plan = &plan.flow_plans[index];
        if flow_plan.flow.sender != flow.sender || flow_plan.flow.receiver != flow.receiver {
            return Err(HarnessError::PlanMismatch {
                detail: format!("plan entry {index} does not match flow {}", flow.label()),
            });
        }
        let receiver = c.service(&flow.receiver).expect("validated");
        let caps = ReceiverCaps {
            service_id: receiver.id.clone(),
            accepts: receiver.input_interval()?,
            budget: receiver.inv_max,
        };
        let sender_mock = &mocks[&flow.sender];
        let execution = {
            let mut source = MockSource::new(sender_mock, &mut ledger);
            execute_flow(flow_plan, &mut source, &caps)?
        };
        if let FlowOutcome::Delivered { batches } = &execution.outcome {
            ledger.raise_to(&flow.receiver, batches.len() as u64);
        } else {
            halted = true;
        }
        results.push((
            index,
            FlowResult {
                label: flow.label(),
                outcome: execution.outcome,
                trace: execution.trace,
            },
        ));
    }

    results.sort_by_key(|(index, _)| *index);
    let all_succeeded =
        !halted && results.iter().all(|(_, r)| r.outcome.is_delivered());
    let invocations = c
        .services
        .iter()
        .map(|s| (s.id.clone(), ledger.performed(&s.id)))
        .collect();

    Ok(SimulationReport {
        seed: config.seed,
        generator: GENERATOR.to_string(),
        flow_results: results.into_iter().map(|(_, r)| r).collect(),
        skipped,
        invocations,
        all_succeeded,
    })
}
