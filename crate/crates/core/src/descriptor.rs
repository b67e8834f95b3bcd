//! JSON composition descriptors.
//!
//! A descriptor is the on-disk form of a [`Composition`] plus optional
//! simulation parameters. Parsing is strict: unknown fields are rejected,
//! the version tag must match, and the reconstructed composition must pass
//! [`Composition::validate`]. `parse` and `to_json` round-trip: parsing the
//! serialized form of a parsed descriptor yields an equal value.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    CardinalityConstraint, Composition, DataFlow, Extent, ModelError, ServiceSpec,
    StrategyPolicy, ValidationReport,
};

/// Version this build reads and writes.
pub const DESCRIPTOR_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum DescriptorError {
    /// Malformed JSON or a field of the wrong shape; the message carries
    /// the line and column.
    #[error("descriptor parse failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("descriptor version {found} is not supported; this build reads version {DESCRIPTOR_VERSION}")]
    Version { found: u64 },
    #[error("descriptor describes an invalid composition:\n{0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A cardinality pair as written in descriptors. `max` accepts a number or
/// the string `"unbounded"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintEntry {
    pub min: u64,
    pub max: Extent,
}

impl From<ConstraintEntry> for CardinalityConstraint {
    fn from(e: ConstraintEntry) -> Self {
        CardinalityConstraint::new(e.min, e.max)
    }
}

impl From<CardinalityConstraint> for ConstraintEntry {
    fn from(k: CardinalityConstraint) -> Self {
        ConstraintEntry {
            min: k.min,
            max: k.max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceEntry {
    pub id: String,
    pub input: ConstraintEntry,
    pub output: ConstraintEntry,
    pub inv_max: Extent,
    #[serde(default, skip_serializing_if = "is_false")]
    pub provider: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowEntry {
    pub sender: String,
    pub receiver: String,
    #[serde(default)]
    pub dup: bool,
    #[serde(default)]
    pub sel: bool,
    #[serde(default)]
    pub ord: bool,
    #[serde(default, skip_serializing_if = "policy_is_default")]
    pub policies: StrategyPolicy,
}

/// Optional simulation parameters carried alongside the composition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub runs: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub duplicate_rates: BTreeMap<String, f64>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            seed: 0,
            runs: 1,
            duplicate_rates: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Descriptor {
    pub version: u64,
    pub services: Vec<ServiceEntry>,
    pub flows: Vec<FlowEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

fn policy_is_default(p: &StrategyPolicy) -> bool {
    *p == StrategyPolicy::default()
}

fn one() -> u64 {
    1
}

/// Parse and fully validate a descriptor.
///
/// Errors carry the JSON locus for syntax and shape problems, and the full
/// violation report for structurally invalid compositions.
pub fn parse(text: &str) -> Result<Descriptor, DescriptorError> {
    let descriptor: Descriptor = serde_json::from_str(text)?;
    if descriptor.version != DESCRIPTOR_VERSION {
        return Err(DescriptorError::Version {
            found: descriptor.version,
        });
    }
    let report = descriptor.to_composition().validate();
    if !report.is_empty() {
        return Err(DescriptorError::Invalid(report));
    }
    Ok(descriptor)
}

impl Descriptor {
    /// The described composition. Always structurally representable; run
    /// [`Composition::validate`] (as [`parse`] does) to check invariants.
    pub fn to_composition(&self) -> Composition {
        Composition {
            services: self
                .services
                .iter()
                .map(|s| {
                    ServiceSpec::with_constraints(
                        s.id.clone(),
                        s.input.into(),
                        s.output.into(),
                        s.inv_max,
                        s.provider,
                    )
                })
                .collect(),
            flows: self
                .flows
                .iter()
                .map(|f| DataFlow {
                    sender: f.sender.clone(),
                    receiver: f.receiver.clone(),
                    dup: f.dup,
                    sel: f.sel,
                    ord: f.ord,
                    policies: f.policies.clone(),
                })
                .collect(),
        }
    }

    /// Descriptor form of an in-memory composition. Errors when a service
    /// schema lacks an active cardinality constraint.
    pub fn from_composition(
        c: &Composition,
        simulation: Option<SimulationSection>,
    ) -> Result<Self, ModelError> {
        let mut services = Vec::with_capacity(c.services.len());
        for svc in &c.services {
            let input = svc
                .input_schema
                .active_constraint()
                .ok_or(ModelError::MissingConstraint {
                    service: svc.id.clone(),
                    schema: "input",
                })?;
            let output = svc
                .output_schema
                .active_constraint()
                .ok_or(ModelError::MissingConstraint {
                    service: svc.id.clone(),
                    schema: "output",
                })?;
            services.push(ServiceEntry {
                id: svc.id.clone(),
                input: input.into(),
                output: output.into(),
                inv_max: svc.inv_max,
                provider: svc.is_provider,
            });
        }
        Ok(Descriptor {
            version: DESCRIPTOR_VERSION,
            services,
            flows: c
                .flows
                .iter()
                .map(|f| FlowEntry {
                    sender: f.sender.clone(),
                    receiver: f.receiver.clone(),
                    dup: f.dup,
                    sel: f.sel,
                    ord: f.ord,
                    policies: f.policies.clone(),
                })
                .collect(),
            simulation,
        })
    }

    /// Pretty-printed JSON with a trailing newline. Deterministic: maps are
    /// sorted and field order is fixed.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("descriptor serializes");
        text.push('\n');
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SelectStrategy;

    const EDITOR_PRINTER: &str = r#"{
      "version": 1,
      "services": [
        {"id": "editor", "input": {"min": 0, "max": 0}, "output": {"min": 7, "max": 7}, "inv_max": 1},
        {"id": "printer", "input": {"min": 1, "max": 1}, "output": {"min": 0, "max": 0}, "inv_max": "unbounded"}
      ],
      "flows": [
        {"sender": "editor", "receiver": "printer", "dup": true, "ord": true}
      ],
      "simulation": {"seed": 42}
    }"#;

    #[test]
    fn parses_editor_printer() {
        let d = parse(EDITOR_PRINTER).unwrap();
        assert_eq!(d.version, 1);
        let c = d.to_composition();
        let editor = c.service("editor").unwrap();
        assert_eq!(editor.output_interval().unwrap().lo(), 7);
        assert_eq!(editor.inv_max, Extent::Finite(1));
        let printer = c.service("printer").unwrap();
        assert_eq!(printer.inv_max, Extent::Unbounded);
        assert!(c.flows[0].dup && !c.flows[0].sel && c.flows[0].ord);
        assert_eq!(d.simulation.unwrap().runs, 1);
    }

    #[test]
    fn round_trips() {
        let d = parse(EDITOR_PRINTER).unwrap();
        let again = parse(&d.to_json()).unwrap();
        assert_eq!(d, again);
        assert_eq!(d.to_json(), again.to_json());
    }

    #[test]
    fn from_composition_matches_parse() {
        let d = parse(EDITOR_PRINTER).unwrap();
        let rebuilt =
            Descriptor::from_composition(&d.to_composition(), d.simulation.clone()).unwrap();
        assert_eq!(d, rebuilt);
    }

    #[test]
    fn unknown_field_is_located() {
        let text = r#"{
          "version": 1,
          "services": [
            {"id": "a", "input": {"min": 0, "max": 0}, "output": {"min": 1, "max": 1},
             "inv_max": 1, "colour": "red"}
          ],
          "flows": []
        }"#;
        let err = parse(text).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
        assert!(err.contains("line 5"), "{err}");
    }

    #[test]
    fn wrong_version_rejected() {
        let text = EDITOR_PRINTER.replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(
            parse(&text),
            Err(DescriptorError::Version { found: 2 })
        ));
    }

    #[test]
    fn inverted_constraint_reported() {
        let text = r#"{
          "version": 1,
          "services": [
            {"id": "a", "input": {"min": 0, "max": 0}, "output": {"min": 5, "max": 2}, "inv_max": 1}
          ],
          "flows": []
        }"#;
        let err = parse(text).unwrap_err();
        let DescriptorError::Invalid(report) = err else {
            panic!("expected a validation report, got {err}");
        };
        assert!(report.has(crate::model::ViolationCode::InvertedInterval));
    }

    #[test]
    fn dangling_flow_reported() {
        let text = r#"{
          "version": 1,
          "services": [
            {"id": "a", "input": {"min": 0, "max": 0}, "output": {"min": 1, "max": 1}, "inv_max": 1}
          ],
          "flows": [{"sender": "a", "receiver": "ghost"}]
        }"#;
        assert!(matches!(parse(text), Err(DescriptorError::Invalid(_))));
    }

    #[test]
    fn syntax_error_carries_locus() {
        let err = parse("{\n  \"version\": 1,\n}").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn explicit_policies_parse() {
        let text = r#"{
          "version": 1,
          "services": [
            {"id": "a", "input": {"min": 0, "max": 0}, "output": {"min": 3, "max": 3}, "inv_max": 2},
            {"id": "b", "input": {"min": 2, "max": 2}, "output": {"min": 0, "max": 0}, "inv_max": 2}
          ],
          "flows": [
            {"sender": "a", "receiver": "b", "dup": true, "sel": true,
             "policies": {"select": {"explicit": [0, 2]}}}
          ]
        }"#;
        let d = parse(text).unwrap();
        assert_eq!(
            d.flows[0].policies.select,
            SelectStrategy::Explicit(vec![0, 2])
        );
    }

    #[test]
    fn unbounded_max_in_constraint() {
        let text = r#"{
          "version": 1,
          "services": [
            {"id": "a", "input": {"min": 0, "max": 0}, "output": {"min": 2, "max": "unbounded"}, "inv_max": 3}
          ],
          "flows": []
        }"#;
        let d = parse(text).unwrap();
        assert_eq!(d.services[0].output.max, Extent::Unbounded);
    }
}
