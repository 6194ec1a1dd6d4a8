//! Fixed-architecture differentiable blocks with explicit forward/backward
//! contracts, plus the Adam optimizer and a finite-difference gradient
//! checker. Everything runs in double precision.

pub mod dense;
pub mod gcn;
pub mod gradcheck;
pub mod gru;
pub mod mlp;
pub mod ops;
pub mod param;

pub use dense::{Dense, DenseCache};
pub use gcn::{normalized_adjacency, reversed, GcnCache, GcnLayer};
pub use gradcheck::{check_gradients, CheckReport, FD_STEP};
pub use gru::{Embedding, GruCell, GruDecoder, GruEncoder, TokenId};
pub use mlp::{Mlp, MlpCache};
pub use ops::{cross_entropy, relu, sigmoid, softmax, softmax_ce_grad, PROB_FLOOR};
pub use param::{Adam, Param, Parameterized};
