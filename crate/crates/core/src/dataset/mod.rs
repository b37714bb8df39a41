//! Label vocabulary, manifests, feature stores and corpus sources.

mod irmas;
mod labels;
mod manifest;
mod store;
mod synth;

pub use irmas::{ingest_irmas, IrmasIngest};
pub use labels::{Genre, Instrument, LabelVector, CODES, NUM_CLASSES};
pub use manifest::{
    load_manifest, load_tracks, resolve, verify_manifest, write_jsonl, write_manifest, ClipRecord, Split,
    TrackLine, TrackRecord, VerifyReport,
};
pub use store::{read_store, write_store, FeatureStore, STORE_MAGIC, STORE_VERSION};
pub use synth::{draw_params, midi_to_hz, synth_clip, synth_corpus, synth_one, synth_test_track, synth_test_tracks, SynthTruth, SYNTH_RATE, SYNTH_SECONDS};
