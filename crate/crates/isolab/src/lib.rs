//! Group-invariant kernel-sum loss landscapes and their critical-point symmetry.
//!
//! The library builds loss functions of the form `L = Σ κ(site_i, site_j)`
//! over three kinds of geometry:
//!
//! * real-valued functions on the finite projective space `P^n(F_q)`, acted
//!   on by `PGL(n+1, F_q)` ([`projgeom`]),
//! * scalar configurations on small graphs (octahedron, perfect matchings),
//!   acted on by the graph automorphism group,
//! * planar particle systems, acted on by the symmetric group.
//!
//! Critical points are located by multi-start gradient descent and damped
//! Newton iteration ([`optimize`]), classified through the Hessian spectrum,
//! and analyzed for their vertex isotropy group `I_V` and edge isotropy
//! group `I_E` ([`isotropy`]). The [`harness`] module orchestrates full
//! experiments from JSON configs and renders catalog reports.

pub mod isotropy;
pub mod kernels;
pub mod linalg;
pub mod losses;
pub mod optimize;
pub mod projgeom;
pub mod rng;
pub mod symgroup;
