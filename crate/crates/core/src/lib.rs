//! Surface-defect detection with a segmentation network and a decision
//! network stacked on it, implemented from the tensor level up.
//!
//! See `book/` for a guided tour; every listing there runs as a doc-test.

pub mod dataio;
pub mod eval;
pub mod network;
pub mod tensor;
pub mod train;

// The guide's chapters are compiled as doc-tests so its listings cannot
// drift from the code.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tensors.md")]
    mod tensors {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/acceptance.md")]
    mod acceptance {}
}
