//! Curvature-variable hyperbolic embeddings for temporal knowledge
//! graphs: geometry kernels, a small reverse-mode autodiff engine, the
//! recurrent model, training, and filtered-ranking evaluation.

pub mod autodiff;
pub mod curvature;
pub mod evaluation;
pub mod geometry;
pub mod graphdata;
pub mod hyperops;
pub mod model;
pub mod synth;
pub mod training;
