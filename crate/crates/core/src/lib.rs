// Tolerance checks are written `!(x <= tol)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Stencil and matrix code reads best with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod affine;
pub mod cli_io;
pub mod construct;
pub mod error;
pub mod grid;
pub mod inverse;
pub mod numeric;
pub mod potential;
pub mod seeds;
pub mod verify;
