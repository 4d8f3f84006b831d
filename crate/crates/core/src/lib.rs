//! Ranking engine for visual word sense disambiguation.
//!
//! Given a short phrase containing an ambiguous word and ten candidate
//! images, the engine ranks the images by how well they depict the intended
//! sense. All embeddings are supplied as data files; the engine itself does
//! no neural inference.
//!
//! The flow is: expand the context with lexicon names ([`lexicon`]), score
//! candidates by penalty-adjusted cosine ([`scorer`]), score them again
//! against images of retrieved articles ([`wikindex`]), build per-candidate
//! features ([`features`]) and rank with a gradient-boosted model
//! ([`gbrank`]). [`pipeline`] chains the stages and [`eval`] measures them.

pub mod error;
pub mod eval;
pub mod features;
pub mod gbrank;
pub mod io;
pub mod lexicon;
pub mod pipeline;
pub mod rank;
pub mod scorer;
pub mod store;
pub mod synthetic;
pub mod text;
pub mod wikindex;

pub use error::{Error, Result};
pub use eval::{AblationConfig, AblationReport, Metrics, Ranking, Thresholds};
pub use features::{FeatureMatrix, FeatureVector, FEATURE_COUNT};
pub use gbrank::{QueryGroup, RankModel, TrainConfig};
pub use lexicon::{Lexicon, MatchPolicy, Sense};
pub use pipeline::{Expansion, PipelineInputs, PipelineRun, WikiMode};
pub use scorer::{PenaltyTable, SampleScores, ScoreRow};
pub use store::{Dataset, EmbeddingFormat, EmbeddingStore, Sample};
pub use wikindex::{Article, ArticleIndex, RetrievalScores};
