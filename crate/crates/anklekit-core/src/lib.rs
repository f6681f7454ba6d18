//! Desk-scale design toolkit for a gait-driven electro-hydraulic ankle actuator.
//!
//! The crate is organized around the stages of the workflow:
//!
//! * [`gait`] — gait profile ingestion, phase segmentation and the mapping from
//!   ankle angle/moment to cylinder position/force.
//! * [`hydraulics`] — lumped-parameter circuit components (cylinder chambers,
//!   gas-charged accumulators, orifice valves, fixed-displacement pump), an RK4
//!   time stepper over one gait cycle and an energy audit of the result.
//! * [`spline`] — B-spline basis and curve evaluation used by the router.
//! * [`routing`] — internal channel routes between port pairs, a surrogate
//!   pressure-loss model, clearance checks and tube export.
//! * [`lattice`] — implicit solids: periodic minimal-surface sheets with a
//!   spatially varying period field, booleans, grid sampling and marching cubes.
//! * [`topo`] — density-based 2-D topology optimization of bracket cross
//!   sections.
//! * [`mesh`] — indexed triangle meshes and binary STL output.
//!
//! With the default `parallel` feature the bulk kernels (grid sampling,
//! surface extraction, distance fields) fan out with rayon; disabling the
//! feature yields identical results on a single thread.

pub mod exec;
pub mod gait;
pub mod hydraulics;
pub mod lattice;
pub mod mesh;
pub mod routing;
pub mod spline;
pub mod topo;

pub use nalgebra::{Point3, Vector3};
