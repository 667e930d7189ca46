use std::collections::{BTreeMap, BTreeSet};

use super::manifest::ManifestRecord;
use crate::error::{Error, Result};

/// Partitions records so that no driver appears on both sides.
pub fn split_by_driver(
    records: &[ManifestRecord],
    driver_of: &BTreeMap<String, String>,
    train_ids: &BTreeSet<String>,
    test_ids: &BTreeSet<String>,
) -> Result<(Vec<ManifestRecord>, Vec<ManifestRecord>)> {
    if let Some(shared) = train_ids.intersection(test_ids).next() {
        return Err(Error::Config(format!("driver {shared} is in both train and test sets")));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for r in records {
        let driver = driver_of
            .get(&r.sample_id)
            .ok_or_else(|| Error::Data(format!("sample {} has no driver id", r.sample_id)))?;
        if train_ids.contains(driver) {
            train.push(r.clone());
        } else if test_ids.contains(driver) {
            test.push(r.clone());
        } else {
            return Err(Error::Data(format!(
                "driver {driver} of sample {} is in neither split",
                r.sample_id
            )));
        }
    }
    log::info!("split by driver: {} train / {} test samples", train.len(), test.len());
    Ok((train, test))
}
