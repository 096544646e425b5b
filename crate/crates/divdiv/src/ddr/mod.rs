//! The discrete div-div complex of degree `k >= 3` on polygonal meshes.
//!
//! Two discrete spaces are attached to a mesh:
//!
//! * the *kinematic* space `V`, a discrete counterpart of vector fields,
//!   whose degrees of freedom on an element are, per vertex, the value and
//!   the full gradient of the field; per edge, the componentwise moments of
//!   degree `k - 4`; and, on the element, the componentwise moments of
//!   degree `k - 2`;
//! * the *tensor* space `S`, a discrete counterpart of symmetric tensor
//!   fields, whose degrees of freedom are, per vertex, the tensor value;
//!   per edge, the normal-normal trace moments of degree `k - 3` and the
//!   div-div closure moments of degree `k - 2`; and, on the element, the
//!   coefficients on the Hessian subspace of degree `k - 4` and on its
//!   complement of degree `k - 1`.
//!
//! [`ElementOps`] holds every local matrix of the construction (traces,
//! potential reconstructions, the discrete sym-curl and div-div operators,
//! the discrete products and the component norms); [`Complex`] assembles
//! them over a mesh. Local degrees of freedom are ordered vertices first
//! (following the element's vertex loop), then edges, then the element
//! blocks; all function-valued blocks are stored in the orthonormal bases
//! of [`crate::poly::basis`], so component norms are diagonal.

mod element;
mod global;

pub use element::ElementOps;
pub(crate) use element::frobenius_weights;
#[cfg(test)]
pub(crate) use element::stack_resize;
pub use global::Complex;

use crate::poly::{dim_p, dim_p_edge};

/// Scalar dofs per vertex of the kinematic space: two value components and
/// four gradient entries `(v_1, v_2, G_11, G_12, G_21, G_22)`.
pub const V_VERTEX_BLOCK: usize = 6;

/// Scalar dofs per vertex of the tensor space: `(s_11, s_12, s_22)`.
pub const S_VERTEX_BLOCK: usize = 3;

/// Edge block of the kinematic space.
pub fn v_edge_block(k: usize) -> usize {
    2 * dim_p_edge(k as i32 - 4)
}

/// Element block of the kinematic space.
pub fn v_element_block(k: usize) -> usize {
    2 * dim_p(k as i32 - 2)
}

/// Edge block of the tensor space (normal-normal trace, then closure).
pub fn s_edge_block(k: usize) -> usize {
    dim_p_edge(k as i32 - 3) + dim_p_edge(k as i32 - 2)
}

/// Hessian-subspace element block of the tensor space.
pub fn s_holy_block(k: usize) -> usize {
    if k >= 4 {
        dim_p(k as i32 - 2) - 3
    } else {
        0
    }
}

/// Complement element block of the tensor space.
pub fn s_choly_block(k: usize) -> usize {
    2 * dim_p(k as i32 - 2)
}

/// Local kinematic dimension of an element with `n` vertices.
pub fn v_local_dim(k: usize, n: usize) -> usize {
    n * V_VERTEX_BLOCK + n * v_edge_block(k) + v_element_block(k)
}

/// Local tensor dimension of an element with `n` vertices.
pub fn s_local_dim(k: usize, n: usize) -> usize {
    n * S_VERTEX_BLOCK + n * s_edge_block(k) + s_holy_block(k) + s_choly_block(k)
}
