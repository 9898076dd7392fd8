//! Prompt templates with `{instructions}`, `{query}` and `{refs}` placeholders.

use serde::{Deserialize, Serialize};

use crate::error::{CoftError, Result};

pub const DEFAULT_TEMPLATE: &str = "{instructions}\n\nReferences:\n{refs}\n\nQuestion: {query}\nAnswer:";
pub const DEFAULT_REF_SEPARATOR: &str = "\n\n";

const PLACEHOLDERS: [&str; 3] = ["instructions", "query", "refs"];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Part {
    Literal(String),
    Slot(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TemplateSource", into = "TemplateSource")]
pub struct PromptTemplate {
    source: String,
    separator: String,
    parts: Vec<Part>,
}

#[derive(Serialize, Deserialize)]
struct TemplateSource {
    template: String,
    #[serde(default = "default_separator")]
    separator: String,
}

fn default_separator() -> String {
    DEFAULT_REF_SEPARATOR.to_string()
}

impl TryFrom<TemplateSource> for PromptTemplate {
    type Error = CoftError;

    fn try_from(src: TemplateSource) -> Result<Self> {
        PromptTemplate::parse(&src.template, &src.separator)
    }
}

impl From<PromptTemplate> for TemplateSource {
    fn from(t: PromptTemplate) -> Self {
        TemplateSource {
            template: t.source,
            separator: t.separator,
        }
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::parse(DEFAULT_TEMPLATE, DEFAULT_REF_SEPARATOR).expect("default template is valid")
    }
}

impl PromptTemplate {
    /// Parses `template`. Every `{name}` with a lowercase/underscore name is a
    /// placeholder; unknown or repeated names and a missing `{refs}` are errors.
    pub fn parse(template: &str, separator: &str) -> Result<Self> {
        let mut parts = Vec::new();
        let mut literal = String::new();
        let mut rest = template;
        while let Some(open) = rest.find('{') {
            let after = &rest[open + 1..];
            let name_len = after
                .find(|c: char| !(c.is_ascii_lowercase() || c == '_'))
                .unwrap_or(after.len());
            if name_len > 0 && after[name_len..].starts_with('}') {
                let name = &after[..name_len];
                let slot = PLACEHOLDERS
                    .iter()
                    .find(|p| **p == name)
                    .ok_or_else(|| CoftError::InvalidTemplate(format!("unresolved placeholder {{{name}}}")))?;
                if parts.contains(&Part::Slot(slot)) {
                    return Err(CoftError::InvalidTemplate(format!(
                        "placeholder {{{name}}} appears twice"
                    )));
                }
                literal.push_str(&rest[..open]);
                if !literal.is_empty() {
                    parts.push(Part::Literal(std::mem::take(&mut literal)));
                }
                parts.push(Part::Slot(slot));
                rest = &after[name_len + 1..];
            } else {
                literal.push_str(&rest[..=open]);
                rest = after;
            }
        }
        literal.push_str(rest);
        if !literal.is_empty() {
            parts.push(Part::Literal(literal));
        }
        if !parts.contains(&Part::Slot("refs")) {
            return Err(CoftError::InvalidTemplate("missing {refs} placeholder".into()));
        }
        Ok(PromptTemplate {
            source: template.to_string(),
            separator: separator.to_string(),
            parts,
        })
    }

    pub fn load(path: impl AsRef<std::path::Path>, separator: &str) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CoftError::Config(format!("cannot read template {}: {e}", path.display())))?;
        Self::parse(&text, separator)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn separator(&self) -> &str {
        &self.separator
    }

    /// Substitutes placeholders in one pass, so substituted text is never
    /// re-scanned. Empty instructions drop the placeholder together with the
    /// line break (or blank line) that follows it.
    pub fn render(&self, instructions: Option<&str>, query: &str, refs: &[String]) -> String {
        let instructions = instructions.unwrap_or_default();
        let mut out = String::new();
        let mut trim_next = false;
        for part in &self.parts {
            match part {
                Part::Literal(text) => {
                    let text = if trim_next {
                        text.strip_prefix("\n\n")
                            .or_else(|| text.strip_prefix('\n'))
                            .unwrap_or(text)
                    } else {
                        text
                    };
                    out.push_str(text);
                    trim_next = false;
                }
                Part::Slot("instructions") if instructions.is_empty() => trim_next = true,
                Part::Slot("instructions") => out.push_str(instructions),
                Part::Slot("query") => out.push_str(query),
                Part::Slot(_) => out.push_str(&refs.join(&self.separator)),
            }
        }
        out
    }
}
