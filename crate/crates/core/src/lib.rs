//! Closed-form, preference-controllable representation correction for
//! merged models.
//!
//! A merged model's features `Z_mtl` drift away from each expert's features
//! `Z_ind`. This crate fits one regularized linear corrector per task
//! offline, then for any preference `p` over tasks assembles the corrector
//! that minimizes the `p`-weighted sum of the per-task losses with a single
//! linear solve.
//!
//! ```
//! use repcorr::{assemble_pareto, precompute_components, Config, Preference};
//! use repcorr::synthetic::random_tasks;
//!
//! let tasks = random_tasks(3, 8, 40, 7);
//! let set = precompute_components(&tasks, Config::new(0.1)?)?;
//! let w = assemble_pareto(&set, &Preference::new(vec![0.5, 0.25, 0.25])?)?;
//! assert_eq!(w.dim(), 8);
//! # Ok::<(), repcorr::Error>(())
//! ```

pub mod bundle;
pub mod corrector;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod procrustes;
pub mod synthetic;
pub mod types;

pub use bundle::{Bundle, TaskData};
pub use corrector::{
    apply_correction, assemble_naive, assemble_pareto, precompute_components, precompute_components_sequential,
    relative_beta, single_task_corrector, ComponentSet, TaskComponents,
};
pub use error::{Error, Result};
pub use metrics::{hypervolume, hypervolume_mc, normalized_accuracy, simplex_grid, uniformity, Front, FrontPoint};
pub use procrustes::orthogonal_procrustes;
pub use types::{Config, Preference, RepMatrix, SquareMap};

pub use faer;

// The guide's snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/correction.md")]
    mod correction {}
    #[doc = include_str!("../../../book/src/preferences.md")]
    mod preferences {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/files.md")]
    mod files {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
