//! Fourier side of the average: the exact multiplier on torus grids, the
//! surface measure transform, the arithmetic main term and its pieces, and
//! the kernel of the Weyl-sum multiplier `s`.

mod bump;
mod grid;
mod kernel;
mod pieces;
mod surface;

pub use bump::Bump;
pub use grid::{GridSummary, Layout, MultiplierGrid, TorusGrid};
pub use kernel::{kernel_of_s, kernel_of_s_oracle, lowpass_decay, lowpass_profile, KernelScale, LowpassFit, SKernel};
pub use pieces::{
    exact_multiplier, exact_multiplier_at, Decomposition, FactorizationReport, MultiplierContext, Piece, TailBound,
};
pub use surface::{Estimate, SurfaceMeasure, SurfaceMethod};
