pub mod assignment;
pub mod bbox;
pub mod color;
mod components;
pub mod crf;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod neural;
pub mod overlay;
pub mod pipeline;
pub mod slic;
pub mod superpixel;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/boxes.md")]
    mod boxes {}
    #[doc = include_str!("../../../book/src/superpixels.md")]
    mod superpixels {}
    #[doc = include_str!("../../../book/src/assignment.md")]
    mod assignment {}
    #[doc = include_str!("../../../book/src/crf.md")]
    mod crf {}
    #[doc = include_str!("../../../book/src/embeddings.md")]
    mod embeddings {}
    #[doc = include_str!("../../../book/src/pipelines.md")]
    mod pipelines {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
