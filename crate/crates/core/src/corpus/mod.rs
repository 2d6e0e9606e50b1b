//! Annotated corpora and the seven pre-training task constructors.

mod document;
pub mod generators;
mod instance;
pub mod pairs;
mod permutation;
mod tasks;
pub mod vocab;

pub use document::{load_corpus, tokenize, write_corpus, CorpusTag, Document, Sentence, SpanTag, Token};
pub use generators::{
    instance_rng, make_capitalization, make_discourse_relation, make_ir_relevance, make_knowledge_masking,
    make_sentence_distance, make_sentence_reordering, make_token_document_relation, GeneratorConfig, Overflow,
};
pub use instance::{
    decode_instances, encode_instances, read_instances, write_instances, InstanceFormat, TaskInstance, INSTANCE_MAGIC,
    INSTANCE_VERSION,
};
pub use pairs::{load_discourse_pairs, load_ir_pairs, DiscourseRecord, IrRecord, RelationVocab};
pub use permutation::{decode_permutation, encode_permutation, factorial, inverse_permutation, ReorderingLabelSpace};
pub use tasks::{applicable_tasks, LossLevel, TaskKind, TaskSpec};
pub use vocab::Vocab;
