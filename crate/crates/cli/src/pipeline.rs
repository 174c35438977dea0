//! Loading, splitting and normalizing an experiment's data.

use anyhow::{bail, Context, Result};
use rbnn::data::{load_csv, preprocess, split, NormalizationStats, Normalize};
use rbnn::Dataset;

use crate::config::ExperimentConfig;

/// Train and test sets shared by every model of one experiment.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub test: Dataset,
    /// FNV-1a digest of the train and test source row indices.
    pub split_checksum: String,
}

/// Cleans the data, splits it with the experiment seed and, for z-scoring,
/// fits the statistics on the training rows only.
pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let raw = load_csv(&cfg.data_path)?;
    let mut schema = cfg.schema()?;
    let normalize = schema.normalize;
    schema.normalize = Normalize::None;
    let data = preprocess(&raw, &schema, None).with_context(|| format!("preprocessing {}", cfg.data_path.display()))?;
    if cfg.topology.first() != Some(&data.num_features()) {
        bail!(
            "invalid config field `topology`: input width {:?} does not match {} feature columns",
            cfg.topology.first(),
            data.num_features()
        );
    }
    if cfg.topology.last() != Some(&data.num_classes()) && !(cfg.topology.last() == Some(&1) && data.num_classes() == 2)
    {
        bail!(
            "invalid config field `topology`: output width {:?} does not fit {} classes",
            cfg.topology.last(),
            data.num_classes()
        );
    }
    let (mut train, mut test) = split(&data, cfg.test_fraction, cfg.seed)?;
    if normalize == Normalize::ZScore {
        let stats = NormalizationStats::fit(&train.x);
        train = train.normalized_with(&stats)?;
        test = test.normalized_with(&stats)?;
    }
    let split_checksum = split_checksum(&train.row_ids, &test.row_ids);
    Ok(PreparedData {
        train,
        test,
        split_checksum,
    })
}

/// FNV-1a over both index lists, with a separator between them.
pub fn split_checksum(train: &[usize], test: &[usize]) -> String {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0100_0000_01b3;
    let mut h = OFFSET;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(PRIME);
        }
    };
    for &i in train {
        feed(&(i as u64).to_le_bytes());
    }
    feed(&u64::MAX.to_le_bytes());
    for &i in test {
        feed(&(i as u64).to_le_bytes());
    }
    format!("{h:016x}")
}
