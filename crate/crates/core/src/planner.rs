//! Static invocation planning.
//!
//! A data flow whose receiver tolerates duplicates can be planned ahead of
//! time: choose invocation counts (m, n) so that m sender calls produce a
//! count the receiver can absorb in n calls. The subset condition
//! `m*[a,b] ⊆ n*[x,y]` makes mediation certain to succeed; the weaker
//! intersection condition makes it merely possible. Duplicate-intolerant
//! flows depend on the number of unique elements, which only exists at
//! runtime, so they are graded [`Grade::RuntimeOnly`] and handled by
//! [`runtime_feasibility`].
//!
//! Whole compositions share invocation counts between flows: one variable
//! per service, all flow conditions posted against the same variables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{classify_pair, CompatibilityCase};
use crate::fdsolve::{Domain, Problem, SolveError, VarId};
use crate::model::{
    Composition, DataFlow, Extent, Interval, ModelError, ServiceSpec, ValidationReport,
};

/// Default cap on invocation-count search when budgets are unbounded.
pub const DEFAULT_SEARCH_CEILING: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Upper bound substituted for unbounded (or larger) invocation budgets
    /// before search. Results that sit exactly at the ceiling are flagged.
    pub search_ceiling: u64,
    /// Minimize the total invocation count; `false` returns the first
    /// solution in lexicographic service-id order instead.
    pub optimize: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            search_ceiling: DEFAULT_SEARCH_CEILING,
            optimize: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("composition failed validation:\n{0}")]
    InvalidComposition(ValidationReport),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("no invocation counts satisfy the composition; implicated flows: {}", implicated.join(", "))]
    Infeasible { implicated: Vec<String> },
}

/// Outcome of planning one flow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "grade", rename_all = "snake_case")]
pub enum Grade {
    /// Subset condition holds: mediation cannot fail on counts.
    Certain { m: u64, n: u64 },
    /// Only the intersection condition holds: runtime counts may fall
    /// outside every receiver window.
    Probable { m: u64, n: u64 },
    /// Duplicate-intolerant flow: feasibility depends on the unique count
    /// f(i), which exists only at runtime.
    RuntimeOnly,
    /// No invocation counts within the budgets satisfy even the
    /// intersection condition.
    Infeasible { reason: String },
}

impl Grade {
    pub fn is_certain(&self) -> bool {
        matches!(self, Grade::Certain { .. })
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Grade::Infeasible { .. })
    }

    /// Planned invocation counts, when the grade carries any.
    pub fn counts(&self) -> Option<(u64, u64)> {
        match self {
            Grade::Certain { m, n } | Grade::Probable { m, n } => Some((*m, *n)),
            _ => None,
        }
    }
}

impl std::fmt::Display for Grade {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Grade::Certain { m, n } => write!(f, "certain (m={m}, n={n})"),
            Grade::Probable { m, n } => write!(f, "probable (m={m}, n={n})"),
            Grade::RuntimeOnly => write!(f, "runtime-only"),
            Grade::Infeasible { reason } => write!(f, "infeasible: {reason}"),
        }
    }
}

/// Plan for a single flow: its compatibility case, grade, and whether the
/// search ran into the ceiling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowPlan {
    pub flow: DataFlow,
    pub case: CompatibilityCase,
    pub grade: Grade,
    /// True when a capped budget bound was reached; raising
    /// [`PlannerConfig::search_ceiling`] may change the outcome.
    pub at_ceiling: bool,
}

/// Plan for a whole composition: one invocation count per service plus the
/// per-flow grades under those shared counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionPlan {
    pub invocations: BTreeMap<String, u64>,
    pub flow_plans: Vec<FlowPlan>,
    pub total_invocations: u64,
    pub search_ceiling: u64,
    /// Services whose assigned count equals a ceiling-capped budget bound.
    pub ceiling_hits: Vec<String>,
}

impl CompositionPlan {
    pub fn worst_grade(&self) -> Option<&Grade> {
        self.flow_plans.iter().map(|p| &p.grade).max_by_key(|g| match g {
            Grade::Certain { .. } => 0,
            Grade::Probable { .. } => 1,
            Grade::RuntimeOnly => 2,
            Grade::Infeasible { .. } => 3,
        })
    }
}

/// Effective search bound for a budget: `(bound, was_capped)`.
fn cap_budget(inv_max: Extent, ceiling: u64) -> (u64, bool) {
    match inv_max {
        Extent::Unbounded => (ceiling, true),
        Extent::Finite(v) if v > ceiling => (ceiling, true),
        Extent::Finite(v) => (v, false),
    }
}

/// The two static conditions a dup-tolerant sel-intolerant flow can be
/// planned under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Condition {
    Subset,
    Intersection,
}

/// Post one flow's condition as product inequalities over the (m, n)
/// variables. `unit` is a [1,1] variable used to encode constraints with a
/// constant side, including the always-false constraint for statically
/// impossible cases.
fn post_flow_condition(
    problem: &mut Problem,
    unit: VarId,
    (m, n): (VarId, VarId),
    out: Interval,
    inp: Interval,
    sel: bool,
    condition: Condition,
) {
    let (a, b) = (out.lo(), out.hi());
    let (x, y) = (inp.lo(), inp.hi());

    if sel {
        // Selection absorbs any surplus; only minimum supply matters:
        // m*a >= x, with the receiver invoked once per round.
        problem.add_le(x, unit, a, m);
        return;
    }
    match condition {
        Condition::Subset => {
            // n*x <= m*a and m*b <= n*y.
            problem.add_le(x, n, a, m);
            match (b, y) {
                (Extent::Finite(b), Extent::Finite(y)) => problem.add_le(b, m, y, n),
                (Extent::Unbounded, Extent::Finite(_)) => post_false(problem, unit),
                // An unbounded receiver maximum absorbs any upper end.
                (_, Extent::Unbounded) => {}
            }
        }
        Condition::Intersection => {
            // n*x <= m*b and m*a <= n*y.
            if let Extent::Finite(b) = b {
                problem.add_le(x, n, b, m);
            }
            if let Extent::Finite(y) = y {
                problem.add_le(a, m, y, n);
            }
        }
    }
}

/// A constraint no assignment satisfies: 2*unit <= 1*unit with unit = 1.
fn post_false(problem: &mut Problem, unit: VarId) {
    problem.add_le(2, unit, 1, unit);
}

/// Exact check of the subset condition m*[a,b] ⊆ n*[x,y] at fixed counts.
fn subset_holds(out: Interval, inp: Interval, m: u64, n: u64) -> bool {
    let lower = (n as u128) * (inp.lo() as u128) <= (m as u128) * (out.lo() as u128);
    let upper = match (out.hi(), inp.hi()) {
        (Extent::Finite(b), Extent::Finite(y)) => {
            (m as u128) * (b as u128) <= (n as u128) * (y as u128)
        }
        (_, Extent::Unbounded) => true,
        (Extent::Unbounded, Extent::Finite(_)) => false,
    };
    lower && upper
}

/// Plan one flow in isolation.
///
/// Dispatch on (dup, sel): dup-tolerant sel-intolerant flows try the subset
/// condition, then the intersection; dup-tolerant sel-tolerant flows need
/// only the smallest m with m*a >= x and one receiver call per round;
/// dup-intolerant flows cannot be decided statically.
pub fn plan_flow(
    flow: &DataFlow,
    sender: &ServiceSpec,
    receiver: &ServiceSpec,
    cfg: &PlannerConfig,
) -> Result<FlowPlan, PlanError> {
    let out = sender.output_interval()?;
    let inp = receiver.input_interval()?;
    let case = classify_pair(out, inp);

    if !flow.dup {
        return Ok(FlowPlan {
            flow: flow.clone(),
            case,
            grade: Grade::RuntimeOnly,
            at_ceiling: false,
        });
    }

    let (mmax, m_capped) = cap_budget(sender.inv_max, cfg.search_ceiling);
    let (nmax, n_capped) = cap_budget(receiver.inv_max, cfg.search_ceiling);

    let solve_under = |condition: Condition| -> Result<Option<(u64, u64)>, PlanError> {
        let mut problem = Problem::new();
        let m = problem.add_var("m", 1, mmax)?;
        let n = problem.add_var("n", 1, if flow.sel { 1 } else { nmax })?;
        let unit = problem.add_var("1", 1, 1)?;
        post_flow_condition(&mut problem, unit, (m, n), out, inp, flow.sel, condition);
        Ok(problem
            .first_solution()
            .map(|s| (s.values()[0], s.values()[1])))
    };

    let (grade, counts) = if let Some((m, n)) = solve_under(Condition::Subset)? {
        (Grade::Certain { m, n }, Some((m, n)))
    } else if flow.sel {
        // The minimum-supply condition has no weaker fallback.
        (
            Grade::Infeasible {
                reason: format!(
                    "no m <= {mmax} has m*{} >= {}; sender cannot cover the receiver minimum",
                    out.lo(),
                    inp.lo()
                ),
            },
            None,
        )
    } else if let Some((m, n)) = solve_under(Condition::Intersection)? {
        (Grade::Probable { m, n }, Some((m, n)))
    } else {
        (
            Grade::Infeasible {
                reason: format!(
                    "no (m, n) with m <= {mmax}, n <= {nmax} makes m*{out} meet n*{inp}"
                ),
            },
            None,
        )
    };

    let at_ceiling = match counts {
        Some((m, n)) => (m_capped && m == mmax) || (n_capped && n == nmax),
        None => m_capped || n_capped,
    };

    Ok(FlowPlan {
        flow: flow.clone(),
        case,
        grade,
        at_ceiling,
    })
}

/// Flow endpoints resolved to variable indices and intervals.
struct FlowSite {
    sender_var: usize,
    receiver_var: usize,
    out: Interval,
    inp: Interval,
    dup: bool,
    sel: bool,
}

/// Plan a whole composition.
///
/// One variable per service, domain [1, capped budget]; every dup-tolerant
/// flow posts its condition against the shared variables. Planning first
/// demands the subset condition for all such flows; if that is jointly
/// infeasible it falls back to the intersection condition, upgrading
/// individual flows back to [`Grade::Certain`] where the subset holds under
/// the assigned counts. A flow graded certain in the joint plan is also
/// certain in isolation, but sharing can downgrade or forbid combinations
/// that would work alone.
pub fn plan_composition(c: &Composition, cfg: &PlannerConfig) -> Result<CompositionPlan, PlanError> {
    let report = c.validate();
    if !report.is_empty() {
        return Err(PlanError::InvalidComposition(report));
    }

    let mut ids: Vec<&str> = c.services.iter().map(|s| s.id.as_str()).collect();
    ids.sort_unstable();
    let var_of = |id: &str| ids.binary_search(&id).expect("validated endpoint");

    let mut caps = Vec::with_capacity(ids.len());
    for id in &ids {
        let svc = c.service(id).expect("validated id");
        caps.push(cap_budget(svc.inv_max, cfg.search_ceiling));
    }

    let mut sites = Vec::with_capacity(c.flows.len());
    for flow in &c.flows {
        let sender = c.service(&flow.sender).expect("validated endpoint");
        let receiver = c.service(&flow.receiver).expect("validated endpoint");
        sites.push(FlowSite {
            sender_var: var_of(&flow.sender),
            receiver_var: var_of(&flow.receiver),
            out: sender.output_interval()?,
            inp: receiver.input_interval()?,
            dup: flow.dup,
            sel: flow.sel,
        });
    }

    // `skip` omits one flow's constraints, for infeasibility diagnosis.
    let build = |condition: Condition, skip: Option<usize>| -> Result<Problem, PlanError> {
        let mut problem = Problem::new();
        let mut vars = Vec::with_capacity(ids.len());
        for (id, (bound, _)) in ids.iter().zip(&caps) {
            vars.push(problem.add_var(*id, 1, *bound)?);
        }
        let unit = problem.add_var("1", 1, 1)?;
        for (idx, site) in sites.iter().enumerate() {
            if !site.dup || skip == Some(idx) {
                continue;
            }
            post_flow_condition(
                &mut problem,
                unit,
                (vars[site.sender_var], vars[site.receiver_var]),
                site.out,
                site.inp,
                site.sel,
                condition,
            );
        }
        Ok(problem)
    };

    let solve = |problem: &Problem| -> Option<Vec<u64>> {
        let n_services = ids.len();
        if cfg.optimize {
            search_min_sum(problem, n_services)
        } else {
            problem.first_solution().map(|s| s.values().to_vec())
        }
    };

    let (values, condition) = match solve(&build(Condition::Subset, None)?) {
        Some(values) => (values, Condition::Subset),
        None => match solve(&build(Condition::Intersection, None)?) {
            Some(values) => (values, Condition::Intersection),
            None => {
                // Leave-one-out diagnosis: a flow is implicated when
                // removing its constraints restores feasibility.
                let mut implicated = Vec::new();
                for (idx, flow) in c.flows.iter().enumerate() {
                    if !sites[idx].dup {
                        continue;
                    }
                    if build(Condition::Intersection, Some(idx))?
                        .first_solution()
                        .is_some()
                    {
                        implicated.push(flow.label());
                    }
                }
                if implicated.is_empty() {
                    implicated = c
                        .flows
                        .iter()
                        .enumerate()
                        .filter(|(idx, _)| sites[*idx].dup)
                        .map(|(_, f)| f.label())
                        .collect();
                }
                return Err(PlanError::Infeasible { implicated });
            }
        },
    };

    let invocations: BTreeMap<String, u64> = ids
        .iter()
        .zip(&values)
        .map(|(id, v)| (id.to_string(), *v))
        .collect();
    let total_invocations = values[..ids.len()].iter().sum();
    let ceiling_hits: Vec<String> = ids
        .iter()
        .zip(&values)
        .zip(&caps)
        .filter(|((_, v), (bound, capped))| *capped && *v == bound)
        .map(|((id, _), _)| id.to_string())
        .collect();

    let mut flow_plans = Vec::with_capacity(c.flows.len());
    for (flow, site) in c.flows.iter().zip(&sites) {
        let case = classify_pair(site.out, site.inp);
        let m = values[site.sender_var];
        let n = values[site.receiver_var];
        let grade = if !site.dup {
            Grade::RuntimeOnly
        } else if site.sel {
            Grade::Certain { m, n: 1 }
        } else if condition == Condition::Subset || subset_holds(site.out, site.inp, m, n) {
            Grade::Certain { m, n }
        } else {
            Grade::Probable { m, n }
        };
        let at_ceiling = [site.sender_var, site.receiver_var]
            .iter()
            .any(|&v| caps[v].1 && values[v] == caps[v].0);
        flow_plans.push(FlowPlan {
            flow: flow.clone(),
            case,
            grade,
            at_ceiling,
        });
    }

    Ok(CompositionPlan {
        invocations,
        flow_plans,
        total_invocations,
        search_ceiling: cfg.search_ceiling,
        ceiling_hits,
    })
}

/// Depth-first branch and bound minimizing the sum of the first
/// `counted` variables, ties broken lexicographically (the ascending
/// search visits the lexicographically least optimum first).
fn search_min_sum(problem: &Problem, counted: usize) -> Option<Vec<u64>> {
    let root = problem.propagate().ok()?;
    let mut best: Option<(u128, Vec<u64>)> = None;
    descend(problem, root, 0, counted, &mut best);
    best.map(|(_, values)| values)
}

fn descend(
    problem: &Problem,
    domains: Vec<Domain>,
    depth: usize,
    counted: usize,
    best: &mut Option<(u128, Vec<u64>)>,
) {
    let bound: u128 = domains[..counted].iter().map(|d| d.lo as u128).sum();
    if let Some((incumbent, _)) = best {
        if bound >= *incumbent {
            return;
        }
    }
    if depth == domains.len() {
        *best = Some((bound, domains.iter().map(|d| d.lo).collect()));
        return;
    }
    let Domain { lo, hi } = domains[depth];
    for value in lo..=hi {
        let mut child = domains.clone();
        child[depth] = Domain { lo: value, hi: value };
        if problem.propagate_into(&mut child).is_ok() {
            descend(problem, child, depth + 1, counted, best);
        }
        if value == u64::MAX {
            break;
        }
    }
}

/// Decide deliverability of `unique_count` elements to a receiver accepting
/// `[x, y]` per call, within `nmax` calls.
///
/// Without selection every element must be delivered: the smallest n with
/// `n*x <= unique_count <= n*y`. With selection surplus may be dropped, so
/// the largest n with `n*x <= unique_count` maximizes delivery; absent when
/// even one call cannot be filled.
pub fn runtime_feasibility(
    unique_count: u64,
    receiver: Interval,
    sel: bool,
    nmax: u64,
) -> Option<u64> {
    if nmax == 0 {
        return None;
    }
    let x = receiver.lo();
    if sel {
        if x == 0 {
            return Some(nmax);
        }
        if unique_count < x {
            return None;
        }
        Some((unique_count / x).min(nmax))
    } else {
        (1..=nmax).find(|&n| {
            let lo = (n as u128) * (x as u128);
            let hi_ok = match receiver.hi() {
                Extent::Finite(y) => (unique_count as u128) <= (n as u128) * (y as u128),
                Extent::Unbounded => true,
            };
            lo <= unique_count as u128 && hi_ok
        })
    }
}
