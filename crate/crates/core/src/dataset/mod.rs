//! Annotation and embedding ingestion plus dataset splitting.

mod annotations;
mod embeddings;
mod split;

pub use annotations::{
    load_annotations, normalize_name, parse_annotations, AnnotationStore, Category, CategoryId,
    CategoryKind, CategoryTable, ImageId, ImageRecord, InstanceAnnotation,
};
pub use embeddings::{load_embeddings, parse_embeddings, EmbeddingStore};
pub use split::{make_split, DatasetSplit, SplitPart, DEFAULT_RATIOS};
