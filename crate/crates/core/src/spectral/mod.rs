//! Spectra of latent geometry graphs and the eigengap regularizer.

mod batch;
mod eigh;
mod loss;

pub use batch::{casper_batch_loss, draw_subgraphs, BatchCasper, CasperConfig, SubgraphSample};
pub use eigh::{eigh, SpectralDecomposition};
pub use loss::{
    casper_grad_on_topology, casper_loss, casper_loss_and_grad, casper_loss_on_topology,
    CasperGradient, DEGENERACY_TOL,
};
