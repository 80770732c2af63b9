//! Comparison methods: group lasso over intensity-depth atom pairs and total
//! variation inpainting of a masked depth map.

mod gl;
mod tv;

pub use gl::{gl_objective, solve_gl, spectral_norm, GlOptions, GlResult};
pub use tv::{nearest_fill, total_variation, tv_inpaint, TvOptions};
