//! Delaunay mesh generation on the unit sphere for coastal ocean domains.

pub mod fixtures;
pub mod geomodel;
pub mod hilbert;
pub mod io;
pub mod kernel;
pub mod onedim;
pub mod parkernel;
pub mod pipeline;
pub mod predicates;
pub mod refine;
pub mod sampling;
pub mod sizefield;
