//! `{{slot}}` prompt templates and the built-in template texts.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template slot {0:?} has no value")]
    MissingSlot(String),
    #[error("unterminated slot at byte {0}")]
    Unterminated(usize),
}

/// Fills every `{{name}}` placeholder. Single braces pass through untouched,
/// so JSON examples can sit inside a template.
pub fn render(template: &str, slots: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    let mut offset = 0;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or(TemplateError::Unterminated(offset + start))?;
        let name = after[..end].trim();
        let value = slots.get(name).ok_or_else(|| TemplateError::MissingSlot(name.to_string()))?;
        out.push_str(value);
        let consumed = start + 2 + end + 2;
        offset += consumed;
        rest = &rest[consumed..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Slot names used by a template, in order of first appearance.
pub fn slots(template: &str) -> Vec<String> {
    let mut names = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else { break };
        let name = after[..end].trim().to_string();
        if !names.contains(&name) {
            names.push(name);
        }
        rest = &after[end + 2..];
    }
    names
}

pub const ITEM_SC: &str = include_str!("../data/templates/item_sc.txt");
pub const ITEM_TC: &str = include_str!("../data/templates/item_tc.txt");
pub const ITEM_SOC: &str = include_str!("../data/templates/item_soc.txt");
pub const PROFILE_SC: &str = include_str!("../data/templates/profile_sc.txt");
pub const PROFILE_TC: &str = include_str!("../data/templates/profile_tc.txt");
pub const PROFILE_SOC: &str = include_str!("../data/templates/profile_soc.txt");
pub const ACTION_SC: &str = include_str!("../data/templates/action_sc.txt");
pub const ACTION_TC: &str = include_str!("../data/templates/action_tc.txt");
pub const ACTION_SOC: &str = include_str!("../data/templates/action_soc.txt");
pub const REFLECT: &str = include_str!("../data/templates/reflect.txt");
pub const ACTIVATE: &str = include_str!("../data/templates/activate.txt");
pub const SEED_ITEMS: &str = include_str!("../data/templates/seed_items.txt");
