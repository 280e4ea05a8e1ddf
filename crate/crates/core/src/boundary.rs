//! Time-dependent boundary data: Dirichlet values `g` for `u` and
//! tangential edge-moment data `G_i` for the rows of `P`.

#[allow(unused_imports)] // shadowed by inherent methods whenever std is linked
use num_traits::Float;

use crate::mesh::Mesh;
use crate::spaces::{H1VectorSpace, TangentialTraceData};
use crate::Vec3;

/// Scalar time factor multiplying a spatial field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeProfile {
    Constant,
    Sine { omega: f64 },
}

impl TimeProfile {
    /// `d^order/dt^order` of the factor at `t`.
    pub fn derivative(&self, t: f64, order: usize) -> f64 {
        match *self {
            TimeProfile::Constant => {
                if order == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            TimeProfile::Sine { omega } => {
                let w = omega.powi(order as i32);
                match order % 4 {
                    0 => w * (omega * t).sin(),
                    1 => w * (omega * t).cos(),
                    2 => -w * (omega * t).sin(),
                    _ => -w * (omega * t).cos(),
                }
            }
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self, TimeProfile::Constant)
    }

    pub fn value(&self, t: f64) -> f64 {
        self.derivative(t, 0)
    }
}

pub trait BoundaryData {
    /// `∂ₜ^order g(x, t)` at a boundary point.
    fn displacement(&self, x: &Vec3, t: f64, order: usize) -> Vec3;

    /// `∂ₜ^order G_i(t)` as boundary-edge moments, one entry per row.
    fn tangential(&self, mesh: &Mesh, t: f64, order: usize) -> [TangentialTraceData; 3];

    fn is_homogeneous(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Homogeneous;

impl BoundaryData for Homogeneous {
    fn displacement(&self, _x: &Vec3, _t: f64, _order: usize) -> Vec3 {
        Vec3::zeros()
    }

    fn tangential(&self, mesh: &Mesh, _t: f64, _order: usize) -> [TangentialTraceData; 3] {
        core::array::from_fn(|_| TangentialTraceData::zeros(mesh))
    }

    fn is_homogeneous(&self) -> bool {
        true
    }
}

/// `g(·, t)` (or a time derivative) at every boundary node, as a full
/// coefficient vector with zero interior entries.
pub fn sample_dirichlet(space: &H1VectorSpace, data: &dyn BoundaryData, t: f64, order: usize) -> alloc::vec::Vec<f64> {
    let mut out = alloc::vec![0.0; space.num_dofs()];
    let scalar = space.scalar();
    for node in scalar.boundary_nodes() {
        let v = data.displacement(&scalar.nodes()[node], t, order);
        for c in 0..3 {
            out[H1VectorSpace::dof(node, c)] = v[c];
        }
    }
    out
}
