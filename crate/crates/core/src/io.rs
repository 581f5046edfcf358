//! Versioned JSON file formats: datasets, tactic sets (also used for basis
//! files) and the synthetic ground-truth sidecar. Values are written by name.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cover::MetricParams;
use crate::error::{Error, Result};
use crate::model::{
    Dataset, FeatureSchema, HitEvent, Pattern, PatternEvent, Rally, RallyId, Tactic, TacticId, Usage,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRally {
    pub id: RallyId,
    pub server: Option<u8>,
    pub winner: Option<u8>,
    pub events: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub version: u32,
    pub schema: FeatureSchema,
    pub focal_player: u8,
    pub rallies: Vec<RawRally>,
}

impl DatasetFile {
    pub fn from_dataset(d: &Dataset) -> Self {
        DatasetFile {
            version: FORMAT_VERSION,
            schema: d.schema.clone(),
            focal_player: d.focal_player,
            rallies: d
                .rallies
                .iter()
                .map(|r| RawRally {
                    id: r.id,
                    server: Some(r.server),
                    winner: Some(r.winner),
                    events: r
                        .events
                        .iter()
                        .map(|e| {
                            e.values
                                .iter()
                                .enumerate()
                                .map(|(f, &v)| d.schema.value_name(f, v).to_string())
                                .collect()
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Resolves names and checks every dataset invariant.
pub fn validate_dataset(raw: &DatasetFile) -> Result<Dataset> {
    if raw.version != FORMAT_VERSION {
        return Err(Error::FormatVersion(raw.version));
    }
    raw.schema.validate()?;
    let k = raw.schema.k();
    let mut rallies = Vec::with_capacity(raw.rallies.len());
    for r in &raw.rallies {
        let server = r.server.ok_or_else(|| Error::validation(Some(r.id), "server", "missing"))?;
        let winner = r.winner.ok_or_else(|| Error::validation(Some(r.id), "winner", "missing"))?;
        let mut events = Vec::with_capacity(r.events.len());
        for (i, e) in r.events.iter().enumerate() {
            if e.len() != k {
                return Err(Error::validation(
                    Some(r.id),
                    format!("events[{i}]"),
                    format!("expected {k} values, found {}", e.len()),
                ));
            }
            let values = e
                .iter()
                .enumerate()
                .map(|(f, name)| {
                    raw.schema.value_id(f, name).ok_or_else(|| {
                        Error::validation(
                            Some(r.id),
                            format!("events[{i}].{}", raw.schema.features[f].name),
                            format!("unknown value '{name}'"),
                        )
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            events.push(HitEvent::new(values));
        }
        rallies.push(Rally {
            id: r.id,
            events,
            server,
            winner,
        });
    }
    Dataset::new(raw.schema.clone(), rallies, raw.focal_player)
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    validate_dataset(&serde_json::from_str(text)?)
}

pub fn dataset_to_string(d: &Dataset) -> Result<String> {
    Ok(serde_json::to_string_pretty(&DatasetFile::from_dataset(d))?)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_dataset(&fs::read_to_string(path)?)
}

pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, dataset_to_string(d)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTactic {
    pub id: TacticId,
    #[serde(default)]
    pub pinned: bool,
    pub events: Vec<Vec<Option<String>>>,
}

impl RawTactic {
    pub fn from_tactic(t: &Tactic, schema: &FeatureSchema) -> Self {
        RawTactic {
            id: t.id,
            pinned: t.pinned,
            events: t
                .events()
                .iter()
                .map(|e| {
                    e.slots
                        .iter()
                        .enumerate()
                        .map(|(f, s)| s.map(|v| schema.value_name(f, v).to_string()))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn resolve(&self, schema: &FeatureSchema) -> Result<Tactic> {
        let k = schema.k();
        let mut events = Vec::with_capacity(self.events.len());
        for e in &self.events {
            if e.len() != k {
                return Err(Error::validation(None, format!("tactic {}", self.id), "ragged event"));
            }
            let slots = e
                .iter()
                .enumerate()
                .map(|(f, s)| match s {
                    None => Ok(None),
                    Some(name) => schema.value_id(f, name).map(Some).ok_or_else(|| {
                        Error::validation(None, format!("tactic {}", self.id), format!("unknown value '{name}'"))
                    }),
                })
                .collect::<Result<Vec<_>>>()?;
            events.push(PatternEvent { slots });
        }
        Ok(Tactic {
            id: self.id,
            pattern: Pattern::new(events)?,
            pinned: self.pinned,
        })
    }
}

/// Tactic-set file. Also the basis-set format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacticFile {
    pub version: u32,
    pub schema: FeatureSchema,
    pub tactics: Vec<RawTactic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<MetricParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description_length: Option<f64>,
}

impl TacticFile {
    pub fn new(schema: &FeatureSchema, tactics: &[Tactic]) -> Self {
        TacticFile {
            version: FORMAT_VERSION,
            schema: schema.clone(),
            tactics: tactics.iter().map(|t| RawTactic::from_tactic(t, schema)).collect(),
            params: None,
            score: None,
            description_length: None,
        }
    }

    /// Resolves the tactics against `schema`, which must equal the file's.
    pub fn resolve(&self, schema: &FeatureSchema) -> Result<Vec<Tactic>> {
        if self.version != FORMAT_VERSION {
            return Err(Error::FormatVersion(self.version));
        }
        if &self.schema != schema {
            return Err(Error::validation(None, "schema", "tactic file schema differs from dataset schema"));
        }
        self.tactics.iter().map(|t| t.resolve(schema)).collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub tactic_id: TacticId,
    pub usages: Vec<Usage>,
}

/// Planted tactics and where they were embedded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub version: u32,
    pub schema: FeatureSchema,
    pub tactics: Vec<RawTactic>,
    pub embeddings: Vec<Embedding>,
}

impl GroundTruthFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
      "version": 1,
      "schema": {"features": [
        {"name": "technique", "values": ["drive", "lob", "smash"]},
        {"name": "position", "values": ["front", "back"]}
      ]},
      "focal_player": 0,
      "rallies": [
        {"id": 1, "server": 0, "winner": 0, "events": [["drive", "front"], ["lob", "back"]]},
        {"id": 2, "server": 1, "winner": 0, "events": [["smash", "back"]]}
      ]
    }"#;

    #[test]
    fn well_formed_file_loads() {
        let d = parse_dataset(SAMPLE).unwrap();
        assert_eq!(d.rallies.len(), 2);
        assert_eq!(d.rallies[0].events[1].values, vec![1, 1]);
    }

    #[test]
    fn unknown_value_cites_rally() {
        let text = SAMPLE.replace("\"smash\", \"back\"", "\"smash\", \"middle\"");
        let err = parse_dataset(&text).unwrap_err().to_string();
        assert!(err.contains("rally 2") && err.contains("middle"), "{err}");
    }

    #[test]
    fn empty_rally_and_missing_winner_rejected() {
        let text = SAMPLE.replace(r#""events": [["smash", "back"]]"#, r#""events": []"#);
        assert!(parse_dataset(&text).unwrap_err().to_string().contains("empty rally"));
        let text = SAMPLE.replace(r#""id": 2, "server": 1, "winner": 0,"#, r#""id": 2, "server": 1,"#);
        let err = parse_dataset(&text).unwrap_err().to_string();
        assert!(err.contains("winner") && err.contains("rally 2"), "{err}");
    }

    #[test]
    fn load_save_load_is_identity() {
        let d = parse_dataset(SAMPLE).unwrap();
        let text = dataset_to_string(&d).unwrap();
        let again = parse_dataset(&text).unwrap();
        assert_eq!(d, again);
        assert_eq!(text, dataset_to_string(&again).unwrap());
    }

    #[test]
    fn tactic_file_round_trip() {
        let d = parse_dataset(SAMPLE).unwrap();
        let t = Tactic {
            id: 9,
            pattern: Pattern::new(vec![
                PatternEvent { slots: vec![Some(0), None] },
                PatternEvent { slots: vec![None, Some(1)] },
            ])
            .unwrap(),
            pinned: true,
        };
        let file = TacticFile::new(&d.schema, std::slice::from_ref(&t));
        let text = serde_json::to_string(&file).unwrap();
        let back: TacticFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.resolve(&d.schema).unwrap(), vec![t]);
    }
}
