pub mod cheb;
pub mod cli;
pub mod error;
pub mod floquet;
pub mod limitperiodic;
pub mod potential;
pub mod propagator;
pub mod thinspec;

pub use error::{Error, Result};

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod guide {
    #[doc = include_str!("../../../book/src/periodic.md")]
    pub mod periodic {}
    #[doc = include_str!("../../../book/src/bands.md")]
    pub mod bands {}
    #[doc = include_str!("../../../book/src/thin.md")]
    pub mod thin {}
    #[doc = include_str!("../../../book/src/limitperiodic.md")]
    pub mod limitperiodic {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
