//! Shipped problem definitions: a delayed SIRV epidemic model, the
//! delayed extended SIDARTHE-V structure with externally supplied
//! coefficients, and a delay-free linear-quadratic test problem.

pub mod lq;
pub mod sidarthe_v;
pub mod sirv;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("missing model coefficients: {}", .0.join(", "))]
    MissingCoefficients(Vec<String>),
    #[error("unknown model coefficients: {}", .0.join(", "))]
    UnknownCoefficients(Vec<String>),
    #[error("coefficient {0} is not a finite number")]
    NotANumber(String),
}

/// Pulls a flat map of named finite numbers out of a JSON object,
/// reporting every missing required key and every unknown key at once.
pub(crate) fn extract_coefficients(
    value: &serde_json::Value,
    required: &[&str],
    optional: &[&str],
) -> Result<std::collections::HashMap<String, f64>, ModelError> {
    let obj = match value.as_object() {
        Some(o) => o,
        None => {
            return Err(ModelError::InvalidParams(
                "parameters must be a JSON object".into(),
            ))
        }
    };

    let missing: Vec<String> = required
        .iter()
        .filter(|k| !obj.contains_key(**k))
        .map(|k| k.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(ModelError::MissingCoefficients(missing));
    }

    let unknown: Vec<String> = obj
        .keys()
        .filter(|k| !required.contains(&k.as_str()) && !optional.contains(&k.as_str()))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(ModelError::UnknownCoefficients(unknown));
    }

    // Optional keys may hold structured values; the caller decodes them.
    let mut out = std::collections::HashMap::new();
    for (k, v) in obj {
        if optional.contains(&k.as_str()) {
            continue;
        }
        let num = v.as_f64().filter(|x| x.is_finite());
        match num {
            Some(x) => {
                out.insert(k.clone(), x);
            }
            None => return Err(ModelError::NotANumber(k.clone())),
        }
    }
    Ok(out)
}
