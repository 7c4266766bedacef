//! Prompt templates with `{name}` placeholders.

use std::collections::BTreeMap;

pub const ARCHITECT: &str = include_str!("../data/prompts/architect.md");
pub const ARCHITECT_REVISE: &str = include_str!("../data/prompts/architect_revise.md");
pub const ARCHITECT_RETRY: &str = include_str!("../data/prompts/architect_retry.md");
pub const SPECIALIST: &str = include_str!("../data/prompts/specialist.md");
pub const CONSOLIDATOR: &str = include_str!("../data/prompts/consolidator.md");
pub const MERGE: &str = include_str!("../data/prompts/merge.md");
pub const IMAGE: &str = include_str!("../data/prompts/image.md");
pub const REPORTER: &str = include_str!("../data/prompts/reporter.md");

/// Substitutes `{key}` for each binding. Unknown placeholders and literal
/// braces are left as they are.
pub fn render(template: &str, bindings: &[(&str, &str)]) -> String {
    let map: BTreeMap<&str, &str> = bindings.iter().copied().collect();
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if map.contains_key(&after[..close]) => {
                out.push_str(map[&after[..close]]);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out.trim_end().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitutes_known_keys_only() {
        let s = render("a {x} {\"y\": 1} {z}", &[("x", "1"), ("z", "{x}")]);
        assert_eq!(s, "a 1 {\"y\": 1} {x}");
    }

    #[test]
    fn architect_template_has_slots() {
        for slot in ["{system_prompt}", "{catalog}", "{heuristics}"] {
            assert!(ARCHITECT.contains(slot));
        }
    }
}
