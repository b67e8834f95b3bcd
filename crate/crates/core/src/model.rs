//! Core data types: cardinality constraints, constrained schemas, services,
//! data flows, compositions, and interval arithmetic on cardinalities.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Property name under which a relationship's cardinality constraint is stored.
pub const CARDINALITY_PROPERTY: &str = "cardinality";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("interval minimum {min} exceeds maximum {max}")]
    InvertedInterval { min: u64, max: Extent },
    #[error("scaling by zero invocations produces no interval")]
    ZeroScale,
    #[error("schema must declare at least one element type")]
    EmptySchema,
    #[error("relationship `{name}` references an element type outside the schema")]
    DanglingRelationship { name: String },
    #[error("active constraint index {index} does not name a relationship")]
    BadActiveConstraint { index: usize },
    #[error("schema `{schema}` of service `{service}` carries no cardinality constraint")]
    MissingConstraint { service: String, schema: &'static str },
}

/// An upper limit that is either a finite count or unbounded.
///
/// Kept as an explicit sentinel rather than a large integer so comparisons and
/// scaling stay total. Derived `Ord` places `Unbounded` above every finite
/// value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Extent {
    Finite(u64),
    Unbounded,
}

impl Extent {
    pub fn is_unbounded(&self) -> bool {
        matches!(self, Extent::Unbounded)
    }

    /// Finite value, if any.
    pub fn finite(&self) -> Option<u64> {
        match self {
            Extent::Finite(v) => Some(*v),
            Extent::Unbounded => None,
        }
    }

    /// Multiply by a factor; unbounded absorbs, finite saturates.
    pub fn times(&self, factor: u64) -> Extent {
        match self {
            Extent::Finite(v) => Extent::Finite(v.saturating_mul(factor)),
            Extent::Unbounded => Extent::Unbounded,
        }
    }

    /// True iff `value <= self`.
    pub fn admits(&self, value: u64) -> bool {
        match self {
            Extent::Finite(v) => value <= *v,
            Extent::Unbounded => true,
        }
    }

    /// Clamp to `cap` when unbounded or larger than it.
    pub fn capped(&self, cap: u64) -> u64 {
        match self {
            Extent::Finite(v) => (*v).min(cap),
            Extent::Unbounded => cap,
        }
    }
}

impl From<u64> for Extent {
    fn from(v: u64) -> Self {
        Extent::Finite(v)
    }
}

impl fmt::Display for Extent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extent::Finite(v) => write!(f, "{v}"),
            Extent::Unbounded => write!(f, "unbounded"),
        }
    }
}

impl Serialize for Extent {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Extent::Finite(v) => serializer.serialize_u64(*v),
            Extent::Unbounded => serializer.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for Extent {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ExtentVisitor;

        impl serde::de::Visitor<'_> for ExtentVisitor {
            type Value = Extent;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a non-negative integer or the string \"unbounded\"")
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<Extent, E> {
                Ok(Extent::Finite(v))
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<Extent, E> {
                u64::try_from(v)
                    .map(Extent::Finite)
                    .map_err(|_| E::custom("cardinality bounds cannot be negative"))
            }

            fn visit_str<E: serde::de::Error>(self, s: &str) -> Result<Extent, E> {
                if s == "unbounded" {
                    Ok(Extent::Unbounded)
                } else {
                    Err(E::custom(format!(
                        "expected \"unbounded\" or an integer, got \"{s}\""
                    )))
                }
            }
        }

        deserializer.deserialize_any(ExtentVisitor)
    }
}

/// A closed integer interval `[lo, hi]` of instance counts.
///
/// The upper end may be unbounded. Construction rejects `lo > hi`, so every
/// `Interval` value is nonempty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Interval {
    min: u64,
    max: Extent,
}

impl Interval {
    pub fn new(min: u64, max: Extent) -> Result<Self, ModelError> {
        if let Extent::Finite(hi) = max {
            if min > hi {
                return Err(ModelError::InvertedInterval { min, max });
            }
        }
        Ok(Interval { min, max })
    }

    pub fn bounded(min: u64, max: u64) -> Result<Self, ModelError> {
        Interval::new(min, Extent::Finite(max))
    }

    /// Degenerate interval `[k, k]`.
    pub fn exact(k: u64) -> Self {
        Interval {
            min: k,
            max: Extent::Finite(k),
        }
    }

    /// Half-open upward: `[lo, unbounded]`.
    pub fn at_least(lo: u64) -> Self {
        Interval {
            min: lo,
            max: Extent::Unbounded,
        }
    }

    pub fn lo(&self) -> u64 {
        self.min
    }

    pub fn hi(&self) -> Extent {
        self.max
    }

    /// Counts obtainable from `m` invocations: `m * [a, b] = [m*a, m*b]`.
    ///
    /// Zero invocations produce no interval at all, so `m = 0` is rejected.
    pub fn scale(&self, m: u64) -> Result<Interval, ModelError> {
        if m == 0 {
            return Err(ModelError::ZeroScale);
        }
        Ok(Interval {
            min: self.min.saturating_mul(m),
            max: self.max.times(m),
        })
    }

    /// True iff every count admitted by `self` is admitted by `other`.
    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.min <= self.min && self.max <= other.max
    }

    /// True iff some count is admitted by both intervals.
    pub fn intersects(&self, other: &Interval) -> bool {
        other.max.admits(self.min) && self.max.admits(other.min)
    }

    pub fn contains(&self, count: u64) -> bool {
        self.min <= count && self.max.admits(count)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.min, self.max)
    }
}

/// An integer interval constraint on how many instances a schema relationship
/// may carry (`minOccurs`/`maxOccurs`).
///
/// Unlike [`Interval`] this is a declared property and may be inverted as
/// written; [`Composition::validate`] reports such constraints instead of
/// refusing to represent them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardinalityConstraint {
    pub min: u64,
    pub max: Extent,
}

impl CardinalityConstraint {
    pub fn new(min: u64, max: Extent) -> Self {
        CardinalityConstraint { min, max }
    }

    pub fn bounded(min: u64, max: u64) -> Self {
        CardinalityConstraint {
            min,
            max: Extent::Finite(max),
        }
    }

    /// The constraint as an arithmetic interval; errors when inverted.
    pub fn interval(&self) -> Result<Interval, ModelError> {
        Interval::new(self.min, self.max)
    }
}

impl fmt::Display for CardinalityConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.min, self.max)
    }
}

/// Index of an element type within a schema.
pub type ElementTypeId = usize;
/// Index of a relationship within a schema.
pub type RelationshipId = usize;

/// A directed edge between two element types.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relationship {
    pub name: String,
    pub source: ElementTypeId,
    pub target: ElementTypeId,
}

/// What a property is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PropertyOwner {
    Element(ElementTypeId),
    Relationship(RelationshipId),
}

/// Property values cover numbers, strings, user-defined labels, cardinality
/// constraints, and null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PropertyValue {
    Number(f64),
    Text(String),
    Label(String),
    Cardinality(CardinalityConstraint),
    Null,
}

/// A labeled directed graph of element types whose property sets carry
/// cardinality constraints.
///
/// The graph is fully general, but mediation only ever reads the designated
/// `active` relationship's constraint: messages are limited to one
/// `minOccurs`/`maxOccurs` pair per schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedSchema {
    element_types: Vec<String>,
    relationships: Vec<Relationship>,
    properties: BTreeMap<String, BTreeMap<PropertyOwner, PropertyValue>>,
    active: RelationshipId,
}

impl ConstrainedSchema {
    /// Build a schema, checking structural well-formedness (nonempty element
    /// set, relationship endpoints in range, active index valid). Whether the
    /// active relationship actually carries a cardinality constraint is a
    /// soft condition reported by [`Composition::validate`].
    pub fn new(
        element_types: Vec<String>,
        relationships: Vec<Relationship>,
        properties: BTreeMap<String, BTreeMap<PropertyOwner, PropertyValue>>,
        active: RelationshipId,
    ) -> Result<Self, ModelError> {
        if element_types.is_empty() {
            return Err(ModelError::EmptySchema);
        }
        for rel in &relationships {
            if rel.source >= element_types.len() || rel.target >= element_types.len() {
                return Err(ModelError::DanglingRelationship {
                    name: rel.name.clone(),
                });
            }
        }
        if active >= relationships.len() {
            return Err(ModelError::BadActiveConstraint { index: active });
        }
        Ok(ConstrainedSchema {
            element_types,
            relationships,
            properties,
            active,
        })
    }

    /// The minimal schema for a single-part message: a container element, an
    /// item element, and one relationship between them carrying `constraint`.
    pub fn single_pair(constraint: CardinalityConstraint) -> Self {
        let mut by_owner = BTreeMap::new();
        by_owner.insert(
            PropertyOwner::Relationship(0),
            PropertyValue::Cardinality(constraint),
        );
        let mut properties = BTreeMap::new();
        properties.insert(CARDINALITY_PROPERTY.to_string(), by_owner);
        ConstrainedSchema {
            element_types: vec!["message".to_string(), "item".to_string()],
            relationships: vec![Relationship {
                name: "items".to_string(),
                source: 0,
                target: 1,
            }],
            properties,
            active: 0,
        }
    }

    pub fn element_types(&self) -> &[String] {
        &self.element_types
    }

    pub fn relationships(&self) -> &[Relationship] {
        &self.relationships
    }

    pub fn property(&self, name: &str, owner: PropertyOwner) -> Option<&PropertyValue> {
        self.properties.get(name)?.get(&owner)
    }

    /// The cardinality constraint on the active relationship, if declared.
    pub fn active_constraint(&self) -> Option<CardinalityConstraint> {
        match self.property(
            CARDINALITY_PROPERTY,
            PropertyOwner::Relationship(self.active),
        ) {
            Some(PropertyValue::Cardinality(k)) => Some(*k),
            _ => None,
        }
    }

    /// The active constraint as a checked interval.
    pub fn active_interval(&self) -> Result<Option<Interval>, ModelError> {
        self.active_constraint().map(|k| k.interval()).transpose()
    }
}

/// A service with its constrained input/output schemas and invocation budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub id: String,
    pub input_schema: ConstrainedSchema,
    pub output_schema: ConstrainedSchema,
    /// Maximum number of invocations allowed in the composition.
    pub inv_max: Extent,
    /// Data providers are indefinitely invocable and return fresh data on
    /// every invocation.
    pub is_provider: bool,
}

impl ServiceSpec {
    /// Service with single-pair schemas built from the two constraints.
    pub fn with_constraints(
        id: impl Into<String>,
        input: CardinalityConstraint,
        output: CardinalityConstraint,
        inv_max: Extent,
        is_provider: bool,
    ) -> Self {
        ServiceSpec {
            id: id.into(),
            input_schema: ConstrainedSchema::single_pair(input),
            output_schema: ConstrainedSchema::single_pair(output),
            inv_max,
            is_provider,
        }
    }

    /// Output constraint as an interval; errors carry the service id.
    pub fn output_interval(&self) -> Result<Interval, ModelError> {
        match self.output_schema.active_interval()? {
            Some(iv) => Ok(iv),
            None => Err(ModelError::MissingConstraint {
                service: self.id.clone(),
                schema: "output",
            }),
        }
    }

    /// Input constraint as an interval; errors carry the service id.
    pub fn input_interval(&self) -> Result<Interval, ModelError> {
        match self.input_schema.active_interval()? {
            Some(iv) => Ok(iv),
            None => Err(ModelError::MissingConstraint {
                service: self.id.clone(),
                schema: "input",
            }),
        }
    }
}

/// How elements are picked when selection trims a result set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectStrategy {
    /// Keep the first k elements.
    #[default]
    First,
    /// Keep every s-th element (stride 2 keeps indices 0, 2, 4, ...).
    Stride(usize),
    /// Keep the last k elements.
    Last,
    /// Keep exactly the listed indices, in listed order.
    Explicit(Vec<usize>),
}

/// How two successive result lists are combined.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeStrategy {
    /// Second call's elements appended after the first's.
    #[default]
    ConcatAb,
    /// Alternate pairs from each list; remainders keep source order.
    InterleavePairs,
    /// First call's elements appended after the second's.
    ConcatBa,
    /// Apply the given permutation to the plain concatenation.
    Explicit(Vec<usize>),
}

/// Which occurrence survives duplicate removal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DedupStrategy {
    /// Remove earlier occurrences first; the last occurrence of a key survives.
    #[default]
    RemoveFirst,
    /// Remove later occurrences first; the first occurrence of a key survives.
    RemoveLast,
}

/// Declared mediation policies of a data flow.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyPolicy {
    pub select: SelectStrategy,
    pub merge: MergeStrategy,
    pub dedup: DedupStrategy,
}

/// A directed sender-to-receiver edge in a composition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataFlow {
    pub sender: String,
    pub receiver: String,
    /// Receiver tolerates duplicate elements.
    pub dup: bool,
    /// Selecting a subset of the transmitted elements is allowed.
    pub sel: bool,
    /// Element order must be conserved end to end.
    pub ord: bool,
    pub policies: StrategyPolicy,
}

impl DataFlow {
    pub fn label(&self) -> String {
        format!("{}->{}", self.sender, self.receiver)
    }
}

/// A set of services plus the data flows connecting them. Flows incident to
/// the same service share that service's invocation budget.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Composition {
    pub services: Vec<ServiceSpec>,
    pub flows: Vec<DataFlow>,
}

impl Composition {
    pub fn service(&self, id: &str) -> Option<&ServiceSpec> {
        self.services.iter().find(|s| s.id == id)
    }

    /// Check every structural invariant; the report lists all violations.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();

        let mut seen = BTreeSet::new();
        for svc in &self.services {
            if !seen.insert(svc.id.as_str()) {
                report.push(
                    ViolationCode::DuplicateServiceId,
                    format!("service `{}`", svc.id),
                    "service id declared more than once".to_string(),
                );
            }
            if svc.is_provider && !svc.inv_max.is_unbounded() {
                report.push(
                    ViolationCode::ProviderBounded,
                    format!("service `{}`", svc.id),
                    format!(
                        "data providers are indefinitely invocable, but inv_max is {}",
                        svc.inv_max
                    ),
                );
            }
            if svc.inv_max == Extent::Finite(0) {
                report.push(
                    ViolationCode::ZeroInvocationLimit,
                    format!("service `{}`", svc.id),
                    "a bounded invocation limit must be at least 1".to_string(),
                );
            }
            for (side, schema) in [("input", &svc.input_schema), ("output", &svc.output_schema)] {
                let locus = format!("service `{}` {side} schema", svc.id);
                match schema.active_constraint() {
                    None => report.push(
                        ViolationCode::MissingActiveConstraint,
                        locus,
                        "active relationship carries no cardinality constraint".to_string(),
                    ),
                    Some(k) => {
                        if k.interval().is_err() {
                            report.push(
                                ViolationCode::InvertedInterval,
                                locus,
                                format!("constraint {k} has min > max"),
                            );
                        }
                    }
                }
            }
        }

        for (idx, flow) in self.flows.iter().enumerate() {
            let locus = format!("flow #{idx} ({})", flow.label());
            if flow.sender == flow.receiver {
                report.push(
                    ViolationCode::SelfLoop,
                    locus.clone(),
                    "a data flow cannot connect a service to itself".to_string(),
                );
            }
            for endpoint in [&flow.sender, &flow.receiver] {
                if self.service(endpoint).is_none() {
                    report.push(
                        ViolationCode::DanglingEndpoint,
                        locus.clone(),
                        format!("no service with id `{endpoint}`"),
                    );
                }
            }
            if let SelectStrategy::Explicit(indices) = &flow.policies.select {
                let mut uniq = BTreeSet::new();
                if !indices.iter().all(|i| uniq.insert(*i)) {
                    report.push(
                        ViolationCode::DuplicateExplicitIndex,
                        locus.clone(),
                        "explicit selection lists an index twice".to_string(),
                    );
                }
            }
        }

        report
    }
}

/// Machine-readable classification of a composition invariant violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationCode {
    DuplicateServiceId,
    DanglingEndpoint,
    SelfLoop,
    InvertedInterval,
    ProviderBounded,
    ZeroInvocationLimit,
    MissingActiveConstraint,
    DuplicateExplicitIndex,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub locus: String,
    pub message: String,
}

/// Accumulated validation outcome; empty iff the composition is well-formed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn push(&mut self, code: ViolationCode, locus: String, message: String) {
        self.violations.push(Violation {
            code,
            locus,
            message,
        });
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "composition is well-formed");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{:?} at {}: {}", v.code, v.locus, v.message)?;
        }
        Ok(())
    }
}
