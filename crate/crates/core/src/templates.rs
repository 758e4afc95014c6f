//! Question and reasoning templates, loaded from TOML.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::causal::{CausalError, DatasetKind, EventTriple, QueryKind, StructureSpec};

const DEFAULT_TEMPLATES: &str = include_str!("../templates/default.toml");

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("no {section} template for {key}")]
    Missing { section: &'static str, key: String },
    #[error("template {key}: {reason}")]
    Invalid { key: String, reason: String },
    #[error("parse template file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("read template file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateFamily {
    /// Interrogative phrasing.
    Default,
    /// Declarative statement judged correct or incorrect.
    Alternative,
}

impl TemplateFamily {
    pub const ALL: [TemplateFamily; 2] = [Self::Default, Self::Alternative];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Default => "default",
            Self::Alternative => "alternative",
        }
    }
}

impl fmt::Display for TemplateFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateFamily {
    type Err = CausalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "default" => Ok(Self::Default),
            "alternative" => Ok(Self::Alternative),
            _ => Err(CausalError::Unknown {
                what: "template family",
                value: s.to_string(),
            }),
        }
    }
}

type Table = BTreeMap<String, BTreeMap<String, BTreeMap<String, String>>>;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct TemplateFile {
    #[serde(default)]
    question: Table,
    #[serde(default)]
    reasoning: Table,
}

/// Template set keyed by `(dataset, family, query)` for questions and
/// `(dataset, polarity, query)` for reasoning sentences.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    file: TemplateFile,
}

impl TemplateSet {
    /// The templates shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_toml(DEFAULT_TEMPLATES).expect("bundled templates are valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, TemplateError> {
        let file: TemplateFile = toml::from_str(text)?;
        let set = Self { file };
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let text = std::fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    fn validate(&self) -> Result<(), TemplateError> {
        for (section, table) in [("question", &self.file.question), ("reasoning", &self.file.reasoning)] {
            for (d, by_mid) in table {
                for (m, by_q) in by_mid {
                    for (q, text) in by_q {
                        let key = format!("{section}.{d}.{m}.{q}");
                        check_placeholders(text).map_err(|reason| TemplateError::Invalid {
                            key: key.clone(),
                            reason,
                        })?;
                        if section == "reasoning" && !text.trim_end().ends_with("therefore") {
                            return Err(TemplateError::Invalid {
                                key,
                                reason: "reasoning must end with \"therefore\"".into(),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn lookup<'a>(
        table: &'a Table,
        section: &'static str,
        d: &str,
        mid: &str,
        q: QueryKind,
    ) -> Result<&'a str, TemplateError> {
        table
            .get(d)
            .and_then(|m| m.get(mid))
            .and_then(|m| m.get(q.as_str()))
            .map(String::as_str)
            .ok_or_else(|| TemplateError::Missing {
                section,
                key: format!("{d}.{mid}.{q}"),
            })
    }

    pub fn question_template(
        &self,
        dataset_kind: DatasetKind,
        family: TemplateFamily,
        query_kind: QueryKind,
    ) -> Result<&str, TemplateError> {
        Self::lookup(
            &self.file.question,
            "question",
            dataset_kind.as_str(),
            family.as_str(),
            query_kind,
        )
    }

    pub fn reasoning_template(
        &self,
        structure: StructureSpec,
        query_kind: QueryKind,
    ) -> Result<&str, TemplateError> {
        Self::lookup(
            &self.file.reasoning,
            "reasoning",
            structure.dataset_kind.as_str(),
            structure.polarity.as_str(),
            query_kind,
        )
    }

    /// Renders the question text. Polarity does not affect the wording.
    pub fn render_question(
        &self,
        triple: &EventTriple,
        dataset_kind: DatasetKind,
        family: TemplateFamily,
        query_kind: QueryKind,
    ) -> Result<String, TemplateError> {
        Ok(fill(self.question_template(dataset_kind, family, query_kind)?, triple))
    }

    pub fn render_reasoning(
        &self,
        structure: StructureSpec,
        query_kind: QueryKind,
        triple: &EventTriple,
    ) -> Result<String, TemplateError> {
        Ok(fill(self.reasoning_template(structure, query_kind)?, triple))
    }

    /// Stable content hash, recorded in provenance.
    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_vec(&self.file).expect("template set serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

fn check_placeholders(text: &str) -> Result<(), String> {
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or("unterminated placeholder")?;
        let name = &after[..close];
        if !matches!(name, "X" | "Y" | "Z") {
            return Err(format!("unknown placeholder {{{name}}}"));
        }
        rest = &after[close + 1..];
    }
    Ok(())
}

/// Single-pass substitution of `{X}`, `{Y}`, `{Z}`; inserted phrases are never rescanned.
pub fn fill(template: &str, triple: &EventTriple) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let phrase = if tail.starts_with("{X}") {
            Some(&triple.x)
        } else if tail.starts_with("{Y}") {
            Some(&triple.y)
        } else if tail.starts_with("{Z}") {
            Some(&triple.z)
        } else {
            None
        };
        match phrase {
            Some(p) => {
                out.push_str(p);
                rest = &tail[3..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::{edges_for, query_for, Polarity, Role};

    fn monsoon() -> EventTriple {
        EventTriple::new("t0", "Umbrella sales", "Traffic jams", "Monsoon season").unwrap()
    }

    #[test]
    fn confounder_default_questions() {
        let t = TemplateSet::builtin();
        let tr = monsoon();
        assert_eq!(
            t.render_question(&tr, DatasetKind::Confounder, TemplateFamily::Default, QueryKind::Q1)
                .unwrap(),
            "Will the increase of Umbrella sales cause Traffic jams during Monsoon season?"
        );
        assert_eq!(
            t.render_question(&tr, DatasetKind::Confounder, TemplateFamily::Default, QueryKind::Q2)
                .unwrap(),
            "Will Monsoon season cause the increase of Umbrella sales and Traffic jams?"
        );
    }

    #[test]
    fn confounder_base_exemplar() {
        let t = TemplateSet::builtin();
        let s = StructureSpec::new(DatasetKind::Confounder, Polarity::Base);
        assert_eq!(
            t.render_reasoning(s, QueryKind::Q1, &monsoon()).unwrap(),
            "No directed causal path from Umbrella sales to Traffic jams AND adjusting for \
             Monsoon season closes the backdoor between Umbrella sales and Traffic jams, therefore"
        );
    }

    #[test]
    fn all_reasoning_mentions_every_phrase_and_ends_therefore() {
        let t = TemplateSet::builtin();
        let tr = monsoon();
        for s in StructureSpec::all() {
            for q in QueryKind::ALL {
                let text = t.render_reasoning(s, q, &tr).unwrap();
                for (_, p) in tr.phrases() {
                    assert!(text.contains(p), "{s} {q}: {text}");
                }
                assert!(!text.contains('{'));
                assert!(text.ends_with("therefore"));
                assert_eq!(text, t.render_reasoning(s, q, &tr).unwrap());
            }
        }
    }

    /// Each asserted edge is stated as present or absent, consistent with the graph.
    #[test]
    fn reasoning_edge_facts_match_graph() {
        let t = TemplateSet::builtin();
        let tr = EventTriple::new("t", "AAA", "BBB", "CCC").unwrap();
        let name = |r: Role| tr.phrase(r).to_string();
        for s in StructureSpec::all() {
            let graph = edges_for(s);
            for q in QueryKind::ALL {
                let text = t.render_reasoning(s, q, &tr).unwrap();
                let lower = text.to_lowercase();
                for e in query_for(s.dataset_kind, q).asserted.iter() {
                    let present = format!("{} directly causes {}", name(e.from), name(e.to));
                    let absent_a =
                        format!("no directed causal path from {} to {}", name(e.from), name(e.to));
                    let absent_b =
                        format!("no direct causal path from {} to {}", name(e.from), name(e.to));
                    let says_absent = lower.contains(&absent_a.to_lowercase())
                        || lower.contains(&absent_b.to_lowercase());
                    if graph.contains(e) {
                        assert!(text.contains(&present), "{s} {q} should assert {e}: {text}");
                        assert!(!says_absent);
                    } else {
                        assert!(says_absent, "{s} {q} should deny {e}: {text}");
                        assert!(!text.contains(&present));
                    }
                }
            }
        }
    }

    #[test]
    fn fill_does_not_rescan_inserted_text() {
        let tr = EventTriple::new("t", "{Y}", "b", "c").unwrap();
        assert_eq!(fill("{X} and {Y}", &tr), "{Y} and b");
    }

    #[test]
    fn missing_key_and_bad_placeholder() {
        let t = TemplateSet::from_toml("[question.chain.default]\nQ1 = \"{X}?\"\n").unwrap();
        let err = t
            .render_question(&monsoon(), DatasetKind::Chain, TemplateFamily::Default, QueryKind::Q2)
            .unwrap_err();
        assert!(matches!(err, TemplateError::Missing { .. }));
        assert!(TemplateSet::from_toml("[question.chain.default]\nQ1 = \"{W}?\"\n").is_err());
        assert!(TemplateSet::from_toml("[reasoning.chain.base]\nQ1 = \"{X} so\"\n").is_err());
    }
}
