use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

const BUILTIN: &[(&str, &str)] = &[
    ("elicit", include_str!("../../resources/templates/elicit.txt")),
    ("filter_noise", include_str!("../../resources/templates/filter_noise.txt")),
    ("summarize", include_str!("../../resources/templates/summarize.txt")),
    ("consistency_check", include_str!("../../resources/templates/consistency_check.txt")),
    ("revise", include_str!("../../resources/templates/revise.txt")),
    ("extract", include_str!("../../resources/templates/extract.txt")),
    ("select_system", include_str!("../../resources/templates/select_system.txt")),
    ("select_workload", include_str!("../../resources/templates/select_workload.txt")),
    ("select_query", include_str!("../../resources/templates/select_query.txt")),
    ("select_dependencies", include_str!("../../resources/templates/select_dependencies.txt")),
    ("rank_importance", include_str!("../../resources/templates/rank_importance.txt")),
];

/// Prompt templates with `{placeholder}` slots.
#[derive(Debug, Clone)]
pub struct Prompts {
    templates: BTreeMap<String, String>,
}

impl Default for Prompts {
    fn default() -> Self {
        Prompts {
            templates: BUILTIN
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

impl Prompts {
    /// Builtin templates, with any `<name>.txt` found in `dir` taking precedence.
    pub fn with_overrides(dir: &Path) -> Result<Self> {
        let mut prompts = Prompts::default();
        for (name, _) in BUILTIN {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                prompts.templates.insert(name.to_string(), text);
            }
        }
        Ok(prompts)
    }

    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> String {
        let mut text = self
            .templates
            .get(name)
            .unwrap_or_else(|| panic!("no template named {name}"))
            .clone();
        for (key, value) in vars {
            text = text.replace(&format!("{{{key}}}"), value);
        }
        text
    }
}
