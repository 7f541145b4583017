//! Prompt templates shipped under `prompts/`.
//!
//! Templates are part of every request fingerprint, so editing one
//! invalidates the cassettes recorded against it.

/// Bumped whenever a template changes meaning.
pub const VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub name: &'static str,
    pub text: &'static str,
}

macro_rules! template {
    ($id:ident, $path:literal) => {
        pub const $id: Template = Template {
            name: $path,
            text: include_str!(concat!("../prompts/", $path)),
        };
    };
}

template!(DEMONSTRATE_SYSTEM, "demonstrate/system.txt");
template!(DEMONSTRATE_SOP, "demonstrate/sop.txt");
template!(DEMONSTRATE_STEP_MATCH, "demonstrate/step_match.txt");
template!(DEMONSTRATE_CORRECTNESS, "demonstrate/correctness.txt");
template!(EXECUTE_SYSTEM, "execute/system.txt");
template!(EXECUTE_NEXT_ACTION, "execute/next_action.txt");
template!(EXECUTE_DECOMPOSE, "execute/decompose.txt");
template!(GROUND_SOM, "ground/som.txt");
template!(GROUND_DIRECT, "ground/direct.txt");
template!(VALIDATE_ACTUATION, "validate/actuation.txt");
template!(VALIDATE_CONSTRAINT, "validate/constraint.txt");
template!(VALIDATE_COMPLETION, "validate/completion.txt");
template!(VALIDATE_TRAJECTORY, "validate/trajectory.txt");

pub const ALL: [Template; 13] = [
    DEMONSTRATE_SYSTEM,
    DEMONSTRATE_SOP,
    DEMONSTRATE_STEP_MATCH,
    DEMONSTRATE_CORRECTNESS,
    EXECUTE_SYSTEM,
    EXECUTE_NEXT_ACTION,
    EXECUTE_DECOMPOSE,
    GROUND_SOM,
    GROUND_DIRECT,
    VALIDATE_ACTUATION,
    VALIDATE_CONSTRAINT,
    VALIDATE_COMPLETION,
    VALIDATE_TRAJECTORY,
];

impl Template {
    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut rest = self.text;
        while let Some(start) = rest.find("{{") {
            let Some(len) = rest[start + 2..].find("}}") else {
                break;
            };
            let name = &rest[start + 2..start + 2 + len];
            if !out.contains(&name) {
                out.push(name);
            }
            rest = &rest[start + 2 + len + 2..];
        }
        out
    }

    /// Substitutes `{{name}}` placeholders. Every placeholder must be supplied.
    pub fn fill(&self, vars: &[(&str, &str)]) -> String {
        let mut out = self.text.to_string();
        for name in self.placeholders() {
            let value = vars
                .iter()
                .find(|(k, _)| *k == name)
                .unwrap_or_else(|| panic!("template {} needs {{{{{name}}}}}", self.name))
                .1;
            out = out.replace(&format!("{{{{{name}}}}}"), value);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fills_every_placeholder() {
        for t in ALL {
            let vars: Vec<(&str, &str)> = t.placeholders().into_iter().map(|p| (p, "X")).collect();
            let filled = t.fill(&vars);
            assert!(!filled.contains("{{"), "{}", t.name);
        }
    }

    #[test]
    fn placeholders_found() {
        assert_eq!(GROUND_SOM.placeholders(), ["legend", "intent"]);
        assert!(DEMONSTRATE_SYSTEM.placeholders().is_empty());
    }

    #[test]
    #[should_panic(expected = "needs")]
    fn missing_variable_panics() {
        GROUND_SOM.fill(&[("legend", "")]);
    }
}
