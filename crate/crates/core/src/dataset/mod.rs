//! Procedural text–trajectory corpus.

mod corpus;
mod describe;
mod primitive;
mod tagger;

pub use corpus::{
    generate_dataset, generate_item, generate_labeled, item_seed, load_jsonl, read_jsonl, sample_primitive,
    save_jsonl, write_jsonl, DatasetConfig, LabeledPair, TextTrajPair,
};
pub use describe::{
    clause_kind, describe_primitive, render_description, split_clauses, tag_clause, tag_text, templates,
    vocabulary, words, MotionTag, CONNECTIVES,
};
pub use primitive::{
    allocate_frames, chain_onto, compose_primitives, gen_primitive, Direction, MotionKind, MotionPrimitive,
    SpeedClass, SUBJECT_DISTANCE,
};
pub use tagger::tag_trajectory;
