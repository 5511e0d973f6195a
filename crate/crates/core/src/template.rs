//! Versioned prompt templates with `{slot}` placeholders.
//!
//! Rendering is a single pass: slot values are inserted verbatim and never
//! rescanned, so narratives or schemas containing braces are safe.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {template} has no value for slot {{{slot}}}")]
    MissingSlot { template: &'static str, slot: String },
}

/// A prompt template shipped as a text asset.
#[derive(Debug, Clone, Copy)]
pub struct Template {
    pub name: &'static str,
    pub version: u32,
    pub text: &'static str,
}

fn is_slot_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

impl Template {
    pub const fn new(name: &'static str, version: u32, text: &'static str) -> Self {
        Self { name, version, text }
    }

    /// Slot names in order of first appearance.
    pub fn slots(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut rest = self.text;
        while let Some(open) = rest.find('{') {
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) if close > 0 && after[..close].chars().all(is_slot_char) => {
                    let name = &after[..close];
                    if !out.contains(&name) {
                        out.push(name);
                    }
                    rest = &after[close + 1..];
                }
                _ => rest = after,
            }
        }
        out
    }

    /// Fills every slot. Braces that do not enclose a slot name are copied
    /// through unchanged.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.text.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>());
        let mut rest = self.text;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) if close > 0 && after[..close].chars().all(is_slot_char) => {
                    let name = &after[..close];
                    let value = values
                        .iter()
                        .find(|(k, _)| *k == name)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| TemplateError::MissingSlot {
                            template: self.name,
                            slot: name.to_string(),
                        })?;
                    out.push_str(value);
                    rest = &after[close + 1..];
                }
                _ => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: Template = Template::new("t", 1, "Hi {name}, {name}! {x}{ not a slot }");

    #[test]
    fn renders_single_pass() {
        let out = T.render(&[("name", "{x}"), ("x", "X")]).unwrap();
        assert_eq!(out, "Hi {x}, {x}! X{ not a slot }");
        assert_eq!(T.slots(), vec!["name", "x"]);
    }

    #[test]
    fn missing_slot() {
        assert_eq!(
            T.render(&[("name", "a")]),
            Err(TemplateError::MissingSlot { template: "t", slot: "x".into() })
        );
    }
}
