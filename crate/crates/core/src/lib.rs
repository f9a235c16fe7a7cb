//! Corpus-to-taxonomy clustering of scientific abstracts.
//!
//! Documents are represented as IDF-weighted term-frequency vectors and
//! clustered with a finite mixture of densities of the form
//! `exp(-lambda * d(y, xi))`, where `d` is the cosine distance. The shared
//! precision `lambda` is calibrated from a target rate of documents allocated
//! to their nearest centroid. A semi-supervised variant projects the documents
//! of one time epoch onto the clustering of the next, which yields migration
//! fractions between topics and an evolution graph.
//!
//! The pipeline is split into modules that mirror its stages:
//!
//! * [`ingest`]: BibTeX / RIS / plain-text parsing into epoch-tagged documents.
//! * [`textprep`]: tokenization, stopwords, Porter stemming and the sparse
//!   document-term matrix with IDF weighting.
//! * [`featsel`]: normalized-entropy term selection.
//! * [`geometry`]: cosine distance, spherical means and spherical k-means.
//! * [`mixture`]: the mixture model, lambda calibration, EM and model selection.
//! * [`dynamics`]: vocabulary matching, semi-supervised projection, migration
//!   matrices and the evolution graph.
//! * [`report`]: cohesion, top terms, representative documents and MDS layout.
//! * [`testkit`]: planted-topic corpus generator and the adjusted Rand index.
//! * [`cli`]: configuration-driven orchestration behind the `cosmix` binary.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod featsel;
pub mod geometry;
pub mod ingest;
pub mod mixture;
pub mod pipeline;
pub mod report;
pub mod testkit;
pub mod textprep;

pub use error::{Error, Result};
