//! Example models shipped with the crate.

use levy_passage::ModelSpec;

use crate::CliResult;

const MODELS: [(&str, &str); 4] = [
    ("bm", include_str!("../../../models/bm.json")),
    ("perturbed_gamma", include_str!("../../../models/perturbed_gamma.json")),
    ("pure_gamma", include_str!("../../../models/pure_gamma.json")),
    ("ph", include_str!("../../../models/ph.json")),
];

pub fn models() -> CliResult<Vec<(String, ModelSpec)>> {
    MODELS
        .iter()
        .map(|(name, text)| Ok((name.to_string(), ModelSpec::from_json(text)?)))
        .collect()
}
