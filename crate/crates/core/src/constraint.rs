//! The nine constraint variants and compilation of the global ones into
//! metric parameters.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cover::{LengthRange, MetricParams};
use crate::error::{Error, Result};
use crate::model::{FeatureId, FeatureSchema, TacticId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Front,
    Back,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Constraint {
    IndexRange {
        lo: usize,
        hi: usize,
    },
    LengthRange {
        min: usize,
        #[serde(default)]
        max: Option<usize>,
    },
    FeatureImportance {
        feature: FeatureId,
        value: f64,
    },
    SplitByFeature {
        tactics: Vec<TacticId>,
        feature: FeatureId,
    },
    SpecifyFeature {
        tactics: Vec<TacticId>,
        features: Vec<FeatureId>,
    },
    MergeTactics {
        tactics: Vec<TacticId>,
    },
    ExpandTactic {
        tactic: TacticId,
        direction: Direction,
        hits: usize,
    },
    TrimTactic {
        tactic: TacticId,
        direction: Direction,
        hits: usize,
    },
    DeleteTactic {
        tactics: Vec<TacticId>,
    },
}

impl Constraint {
    pub const VARIANTS: [&'static str; 9] = [
        "IndexRange",
        "LengthRange",
        "FeatureImportance",
        "SplitByFeature",
        "SpecifyFeature",
        "MergeTactics",
        "ExpandTactic",
        "TrimTactic",
        "DeleteTactic",
    ];

    pub fn variant(&self) -> &'static str {
        match self {
            Constraint::IndexRange { .. } => "IndexRange",
            Constraint::LengthRange { .. } => "LengthRange",
            Constraint::FeatureImportance { .. } => "FeatureImportance",
            Constraint::SplitByFeature { .. } => "SplitByFeature",
            Constraint::SpecifyFeature { .. } => "SpecifyFeature",
            Constraint::MergeTactics { .. } => "MergeTactics",
            Constraint::ExpandTactic { .. } => "ExpandTactic",
            Constraint::TrimTactic { .. } => "TrimTactic",
            Constraint::DeleteTactic { .. } => "DeleteTactic",
        }
    }

    pub fn is_global(&self) -> bool {
        matches!(
            self,
            Constraint::IndexRange { .. } | Constraint::LengthRange { .. } | Constraint::FeatureImportance { .. }
        )
    }

    /// Tactic ids a local constraint adjusts, in the order given.
    pub fn tactics(&self) -> Vec<TacticId> {
        match self {
            Constraint::SplitByFeature { tactics, .. }
            | Constraint::SpecifyFeature { tactics, .. }
            | Constraint::MergeTactics { tactics }
            | Constraint::DeleteTactic { tactics } => tactics.clone(),
            Constraint::ExpandTactic { tactic, .. } | Constraint::TrimTactic { tactic, .. } => vec![*tactic],
            _ => Vec::new(),
        }
    }

    /// Checks parameters that do not depend on session state.
    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(format!("{}: {m}", self.variant())));
        let check_feature = |f: FeatureId| {
            if f >= schema.k() {
                Err(Error::InvalidParams(format!("{}: unknown feature {f}", self.variant())))
            } else {
                Ok(())
            }
        };
        match self {
            Constraint::IndexRange { lo, hi } => {
                if *lo == 0 || lo > hi {
                    return bad(format!("invalid range {lo}..{hi}"));
                }
            }
            Constraint::LengthRange { min, max } => {
                if *min == 0 || max.is_some_and(|m| m < *min) {
                    return bad(format!("invalid range {min}..{max:?}"));
                }
            }
            Constraint::FeatureImportance { feature, value } => {
                check_feature(*feature)?;
                if !value.is_finite() {
                    return bad("importance must be finite".into());
                }
            }
            Constraint::SplitByFeature { feature, .. } => check_feature(*feature)?,
            Constraint::SpecifyFeature { features, .. } => {
                if features.is_empty() {
                    return bad("no features given".into());
                }
                features.iter().try_for_each(|&f| check_feature(f))?;
            }
            Constraint::ExpandTactic { hits, .. } | Constraint::TrimTactic { hits, .. } => {
                if *hits == 0 {
                    return bad("hits must be at least 1".into());
                }
            }
            Constraint::MergeTactics { tactics } => {
                let mut ids = tactics.clone();
                ids.sort_unstable();
                ids.dedup();
                if ids.len() < 2 {
                    return bad("needs at least two distinct tactics".into());
                }
            }
            Constraint::DeleteTactic { .. } => {}
        }
        if !self.is_global() && self.tactics().is_empty() {
            return bad("no tactics given".into());
        }
        Ok(())
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::IndexRange { lo, hi } => write!(f, "IndexRange({lo},{hi})"),
            Constraint::LengthRange { min, max: Some(max) } => write!(f, "LengthRange({min},{max})"),
            Constraint::LengthRange { min, max: None } => write!(f, "LengthRange({min},inf)"),
            Constraint::FeatureImportance { feature, value } => write!(f, "FeatureImportance({feature},{value})"),
            Constraint::SplitByFeature { tactics, feature } => write!(f, "SplitByFeature({tactics:?},{feature})"),
            Constraint::SpecifyFeature { tactics, features } => write!(f, "SpecifyFeature({tactics:?},{features:?})"),
            Constraint::MergeTactics { tactics } => write!(f, "MergeTactics({tactics:?})"),
            Constraint::ExpandTactic { tactic, direction, hits } => {
                write!(f, "ExpandTactic({tactic},{direction:?},{hits})")
            }
            Constraint::TrimTactic { tactic, direction, hits } => write!(f, "TrimTactic({tactic},{direction:?},{hits})"),
            Constraint::DeleteTactic { tactics } => write!(f, "DeleteTactic({tactics:?})"),
        }
    }
}

/// Compiles a batch of global constraints on top of default parameters.
pub fn compile_global(cs: &[Constraint]) -> Result<MetricParams> {
    compile_onto(&MetricParams::default(), cs)
}

/// Compiles a batch of global constraints on top of `base`. Later
/// constraints on the same knob override earlier ones; two ranges on the
/// same knob within one batch that cannot both hold are rejected.
pub fn compile_onto(base: &MetricParams, cs: &[Constraint]) -> Result<MetricParams> {
    let mut p = base.clone();
    let mut last_index: Option<&Constraint> = None;
    let mut last_length: Option<&Constraint> = None;
    for c in cs {
        match c {
            Constraint::IndexRange { lo, hi } => {
                if let Some(prev @ Constraint::IndexRange { lo: plo, hi: phi }) = last_index {
                    if hi < plo || lo > phi {
                        return Err(conflict(prev, c));
                    }
                }
                last_index = Some(c);
                p.index_range = Some((*lo, *hi));
            }
            Constraint::LengthRange { min, max } => {
                if let Some(prev @ Constraint::LengthRange { min: pmin, max: pmax }) = last_length {
                    let disjoint = max.is_some_and(|m| m < *pmin) || pmax.is_some_and(|m| m < *min);
                    if disjoint {
                        return Err(conflict(prev, c));
                    }
                }
                last_length = Some(c);
                p.length_range = Some(LengthRange { min: *min, max: *max });
            }
            Constraint::FeatureImportance { feature, value } => {
                if !value.is_finite() {
                    return Err(Error::InvalidParams(format!("{c}: importance must be finite")));
                }
                p.importance.insert(*feature, value.clamp(-1.0, 1.0));
            }
            _ => return Err(Error::InvalidParams(format!("{c} is not a global constraint"))),
        }
    }
    p.validate()?;
    Ok(p)
}

fn conflict(a: &Constraint, b: &Constraint) -> Error {
    Error::ConflictingConstraints {
        first: a.to_string(),
        second: b.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_range_compiles() {
        let p = compile_global(&[Constraint::IndexRange { lo: 1, hi: 4 }]).unwrap();
        assert_eq!(p.index_range, Some((1, 4)));
        assert_eq!(p.length_range, None);
        assert!(p.importance.is_empty());
        assert_eq!((p.alpha, p.beta), (1.0, 1.0));
    }

    #[test]
    fn empty_batch_is_default() {
        assert_eq!(compile_global(&[]).unwrap(), MetricParams::default());
    }

    #[test]
    fn later_importance_overrides_and_clamps() {
        let p = compile_global(&[
            Constraint::FeatureImportance { feature: 1, value: 0.5 },
            Constraint::FeatureImportance { feature: 1, value: -0.2 },
        ])
        .unwrap();
        assert_eq!(p.importance[&1], -0.2);
        let p = compile_global(&[Constraint::FeatureImportance { feature: 0, value: 3.0 }]).unwrap();
        assert_eq!(p.importance[&0], 1.0);
    }

    #[test]
    fn disjoint_ranges_in_one_batch_conflict() {
        let err = compile_global(&[Constraint::IndexRange { lo: 1, hi: 2 }, Constraint::IndexRange { lo: 5, hi: 6 }])
            .unwrap_err()
            .to_string();
        assert!(err.contains("IndexRange(1,2)") && err.contains("IndexRange(5,6)"), "{err}");
        let err = compile_global(&[
            Constraint::LengthRange { min: 4, max: None },
            Constraint::LengthRange { min: 1, max: Some(2) },
        ]);
        assert!(matches!(err, Err(Error::ConflictingConstraints { .. })));
        let p = compile_global(&[Constraint::IndexRange { lo: 1, hi: 4 }, Constraint::IndexRange { lo: 2, hi: 6 }])
            .unwrap();
        assert_eq!(p.index_range, Some((2, 6)));
    }

    #[test]
    fn local_constraints_do_not_compile() {
        assert!(compile_global(&[Constraint::DeleteTactic { tactics: vec![1] }]).is_err());
    }

    #[test]
    fn serialization_is_tagged() {
        let c = Constraint::ExpandTactic {
            tactic: 3,
            direction: Direction::Back,
            hits: 1,
        };
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(text, r#"{"type":"ExpandTactic","tactic":3,"direction":"back","hits":1}"#);
        assert_eq!(serde_json::from_str::<Constraint>(&text).unwrap(), c);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        let schema = FeatureSchema::synthetic(2, 3);
        assert!(Constraint::IndexRange { lo: 0, hi: 3 }.validate(&schema).is_err());
        assert!(Constraint::TrimTactic { tactic: 1, direction: Direction::Front, hits: 0 }.validate(&schema).is_err());
        assert!(Constraint::SplitByFeature { tactics: vec![1], feature: 2 }.validate(&schema).is_err());
        assert!(Constraint::MergeTactics { tactics: vec![1, 1] }.validate(&schema).is_err());
        assert!(Constraint::MergeTactics { tactics: vec![1, 2] }.validate(&schema).is_ok());
    }
}
