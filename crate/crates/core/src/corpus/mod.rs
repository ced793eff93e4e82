//! Datasets and their transformations: vocabularies, token streams, image
//! sets, node sharding, rehearsal mixing and pixel permutation.

mod image;
mod shard;
pub mod synth_image;
pub mod synth_text;
mod text;
mod vocab;

pub use image::{mix_rehearsal_images, permute_pixels, ImageDataset};
pub use shard::{read_manifest, shard, shard_indices, write_manifest, Shard};
pub use text::{mix_rehearsal, Provenance, RawText, TextCorpus};
pub use vocab::{build_vocab, Vocabulary, EOS, EOS_ID, UNK, UNK_ID};
