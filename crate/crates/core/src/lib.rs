//! Interaction decompositions of embeddings over factored sets, and the
//! correspondence between vanishing interaction pairings of softmax models
//! and conditional independence of the distributions they define.
//!
//! A table `w: Z₁ × … × Z_k → V` splits uniquely as `w = Σ_I w_I`, one
//! component per subset of factors ([`interaction::decompose`]). For a
//! model `P(y | x) ∝ exp⟨u(x), v(y)⟩`, the pairings `⟨u_I, v_J⟩` decide
//! which conditional independences hold ([`independence`]).

pub mod embedding;
pub mod error;
pub mod factored;
pub mod geometry;
pub mod independence;
pub mod interaction;
pub mod io;
pub mod linalg;
pub mod random;
pub mod softmax;
pub mod synth;

pub use embedding::{EmbeddingTable, ScalarTable};
pub use error::{Error, Result};
pub use factored::{FactoredShape, IndexSubset, SidePartition, VariablePartition};
pub use interaction::{decompose, pi_average, q_project, InteractionDecomposition};
pub use softmax::{evaluate, ConditionalTable, SoftmaxModel};
