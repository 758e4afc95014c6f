use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bench::{Benchmark, QuestionInstance, QuestionPair};
use crate::causal::{EventTriple, Role};
use crate::io;
use crate::templates::TemplateSet;

use super::SkewError;

/// Replace the whole phrase `from` with `to`, optionally only in the listed triples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplacementRule {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triple_ids: Option<Vec<String>>,
}

impl ReplacementRule {
    fn applies(&self, triple: &EventTriple, phrase: &str) -> bool {
        self.from == phrase
            && self
                .triple_ids
                .as_ref()
                .is_none_or(|ids| ids.contains(&triple.id))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReplacementMap {
    pub rules: Vec<ReplacementRule>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MapFile {
    Object(BTreeMap<String, String>),
    Rules(Vec<ReplacementRule>),
}

impl ReplacementMap {
    /// Parses either `{"from": "to", ...}` or `[{"from", "to", "triple_ids"?}, ...]`.
    pub fn from_json(text: &str) -> Result<Self, SkewError> {
        let file: MapFile =
            serde_json::from_str(text).map_err(|e| SkewError::Map(e.to_string()))?;
        let rules = match file {
            MapFile::Object(m) => m
                .into_iter()
                .map(|(from, to)| ReplacementRule {
                    from,
                    to,
                    triple_ids: None,
                })
                .collect(),
            MapFile::Rules(r) => r,
        };
        Ok(Self { rules })
    }

    pub fn hash(&self) -> String {
        io::json_hash(&self.rules)
    }
}

fn rewrite(triple: &EventTriple, map: &ReplacementMap) -> Result<Option<EventTriple>, SkewError> {
    let mut out = triple.clone();
    let mut changed = false;
    for (role, phrase) in triple.phrases() {
        let mut hits = map.rules.iter().filter(|r| r.applies(triple, phrase));
        let Some(rule) = hits.next() else { continue };
        if hits.any(|r| r.to != rule.to) {
            return Err(SkewError::Collision {
                triple_id: triple.id.clone(),
                phrase: phrase.to_string(),
                reason: "conflicting rules".into(),
            });
        }
        let slot = match role {
            Role::X => &mut out.x,
            Role::Y => &mut out.y,
            Role::Z => &mut out.z,
        };
        *slot = rule.to.clone();
        changed = true;
    }
    if !changed {
        return Ok(None);
    }
    out.validate().map_err(|e| SkewError::Collision {
        triple_id: triple.id.clone(),
        phrase: String::new(),
        reason: e.to_string(),
    })?;
    Ok(Some(out))
}

/// Applies the map to every triple (all roles replaced at once), then
/// re-renders the affected questions and reasoning. Labels are recomputed
/// from the causal model and therefore never change.
pub fn apply_replacements(
    bench: &Benchmark,
    map: &ReplacementMap,
    templates: &TemplateSet,
) -> Result<Benchmark, SkewError> {
    let mut pairs = Vec::with_capacity(bench.pairs.len());
    for pair in &bench.pairs {
        let Some(triple) = rewrite(&pair.q1.triple, map)? else {
            pairs.push(pair.clone());
            continue;
        };
        let redo = |q: &QuestionInstance| {
            QuestionInstance::render(
                templates,
                &q.pair_id,
                &triple,
                q.structure(),
                q.template_family,
                q.query_kind,
            )
        };
        let (q1, q2) = (
            redo(&pair.q1).map_err(crate::bench::BenchError::from)?,
            redo(&pair.q2).map_err(crate::bench::BenchError::from)?,
        );
        debug_assert_eq!((q1.label, q2.label), (pair.q1.label, pair.q2.label));
        pairs.push(QuestionPair::new(q1, q2)?);
    }
    let mut provenance = bench.provenance.clone();
    provenance.replacement_rounds.push(map.hash());
    Ok(Benchmark {
        dataset_kind: bench.dataset_kind,
        pairs,
        provenance,
    })
}
