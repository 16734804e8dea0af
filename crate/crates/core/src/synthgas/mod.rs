//! Synthetic paired CO2/CH4 plume frames with pixel masks and pH-derived
//! health labels.

mod augment;
mod dataset;
mod label;
mod render;

pub use augment::{apply_augment, augment, AugmentParams, MAX_ROTATION_DEG};
pub use dataset::{
    build_dataset, plan_dataset, render_planned, split_counts, Dataset, DatasetManifest, ManifestRow, PhCounts,
    PlannedSample, Sample, Split, MANIFEST_FILE, MANIFEST_HEADER, MIN_COUNT_PER_PH, SESSION_LENGTH, SPLIT_FRACTIONS,
};
pub use label::{map_ph_to_class, HealthLabel, PH_MAX, PH_MIN};
pub use render::{
    acidity, ch4_absence_probability, gas_fraction, synth_pair, synth_pair_in_session, tube_rect, GasFramePair,
    Session, BACKGROUND, GAS, TUBE, TUBE_INTENSITY,
};
