//! Data ingestion, validity filtering, label canonicalisation, shard
//! splitting and seeded synthetic corpora.

mod labels;
mod records;
mod shards;
mod synthetic;

pub use labels::{normalize_label, LabelDictionary};
pub use records::{
    filter_valid, load_records, read_valid_records, write_raw_records, write_valid_records,
    DropStats, RawRecord, RecordFormat, ValidRecord,
};
pub use shards::{split_shards, ShardPlan};
pub use synthetic::{generate_synthetic, synthetic_word, SyntheticSpec};
