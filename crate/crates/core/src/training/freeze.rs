use std::collections::BTreeSet;

use super::config::FreezePolicy;
use crate::model::Params;

fn is_msa_only_trainable(name: &str) -> bool {
    let msa = name.starts_with("blocks.") && name.split('.').nth(2) == Some("msa");
    msa || name.starts_with("heads.") || name.starts_with("class_tokens.")
}

/// Names of the parameters that receive updates under `policy`.
pub fn apply_freeze_policy(params: &Params, policy: FreezePolicy) -> BTreeSet<String> {
    params
        .names()
        .filter(|n| match policy {
            FreezePolicy::AllTrainable => true,
            FreezePolicy::MsaOnly => is_msa_only_trainable(n),
        })
        .map(str::to_string)
        .collect()
}
