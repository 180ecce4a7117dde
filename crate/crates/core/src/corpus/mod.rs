//! Text preprocessing, bag-of-words encoding, corpus file formats, dataset
//! assembly and the synthetic comparable-corpus generator.

mod dataset;
pub mod io;
mod synthetic;
mod text;

pub use dataset::{
    assemble_dataset, load_dataset, read_manifest, save_dataset, Modality, TupleDataset,
    ViewData, ViewSource, ViewSpec, ALIGNMENT, MANIFEST,
};
pub use io::{load_embeddings, save_embeddings};
pub use synthetic::{gen_synthetic, image_name, language_name, GroundTruth, SyntheticConfig};
pub use text::{build_vocabulary, to_bow, tokenize, BowVector, Vocabulary};
