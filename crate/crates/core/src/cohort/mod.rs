//! Patient and admission records, derived clinical features, 30-day labels
//! and model-ready sequences.

mod charlson;
mod events;
mod features;
mod records;
mod sequences;

pub use charlson::{compute_cci, CharlsonWeightTable};
pub use events::{count_window_events, label_readmissions, LOOKBACK_DAYS, READMISSION_WINDOW_DAYS};
pub use features::{
    admission_facts, facts_at, AdmissionFacts, AgeBucket, AgeMode, Feature, FeatureDescriptor, FeatureKind, FeatureOptions,
    FeatureRegistry, REGISTRY_VERSION,
};
pub use records::{compute_los, read_jsonl, write_jsonl, AdmissionRecord, PatientHistory, Season, Sex, MIN_AGE};
pub use sequences::{
    build_index_rows, build_sequences, dump_sequences, IndexRow, LabeledSequence, SequenceConfig, DEFAULT_MAX_SEQ_LEN,
};
