//! Six-node quadratic triangle on the reference element.
//!
//! Local nodes 0, 1, 2 are the vertices (0,0), (1,0), (0,1); nodes 3, 4, 5 sit
//! on the edges 0–1, 1–2 and 2–0. This matches the VTK quadratic triangle.

pub fn shape(xi: f64, eta: f64) -> [f64; 6] {
    let l0 = 1.0 - xi - eta;
    let l1 = xi;
    let l2 = eta;
    [l0 * (2.0 * l0 - 1.0), l1 * (2.0 * l1 - 1.0), l2 * (2.0 * l2 - 1.0), 4.0 * l0 * l1, 4.0 * l1 * l2, 4.0 * l2 * l0]
}

/// Reference gradients `[∂/∂ξ, ∂/∂η]` of the six shape functions.
pub fn shape_gradients(xi: f64, eta: f64) -> [[f64; 2]; 6] {
    let l0 = 1.0 - xi - eta;
    let l1 = xi;
    let l2 = eta;
    let d0 = 4.0 * l0 - 1.0;
    [
        [-d0, -d0],
        [4.0 * l1 - 1.0, 0.0],
        [0.0, 4.0 * l2 - 1.0],
        [4.0 * (l0 - l1), -4.0 * l1],
        [4.0 * l2, 4.0 * l1],
        [-4.0 * l2, 4.0 * (l0 - l2)],
    ]
}

/// Jacobian `∂x/∂ξ` of the isoparametric map at a reference point, stored
/// row-major as `[[∂x/∂ξ, ∂x/∂η], [∂y/∂ξ, ∂y/∂η]]`.
pub fn jacobian(nodes: &[[f64; 2]; 6], xi: f64, eta: f64) -> [[f64; 2]; 2] {
    let g = shape_gradients(xi, eta);
    let mut j = [[0.0; 2]; 2];
    for (p, gp) in nodes.iter().zip(&g) {
        j[0][0] += p[0] * gp[0];
        j[0][1] += p[0] * gp[1];
        j[1][0] += p[1] * gp[0];
        j[1][1] += p[1] * gp[1];
    }
    j
}

pub fn map_point(nodes: &[[f64; 2]; 6], xi: f64, eta: f64) -> [f64; 2] {
    let n = shape(xi, eta);
    let mut x = [0.0; 2];
    for (p, np) in nodes.iter().zip(&n) {
        x[0] += p[0] * np;
        x[1] += p[1] * np;
    }
    x
}

pub fn det(j: &[[f64; 2]; 2]) -> f64 {
    j[0][0] * j[1][1] - j[0][1] * j[1][0]
}

/// Physical gradients `J⁻ᵀ ∇_ξ N` of the shape functions.
pub fn physical_gradients(j: &[[f64; 2]; 2], reference: &[[f64; 2]; 6]) -> [[f64; 2]; 6] {
    let d = det(j);
    // J⁻ᵀ = (1/d) [[j11, -j10], [-j01, j00]]
    let mut out = [[0.0; 2]; 6];
    for (o, g) in out.iter_mut().zip(reference) {
        o[0] = (j[1][1] * g[0] - j[1][0] * g[1]) / d;
        o[1] = (-j[0][1] * g[0] + j[0][0] * g[1]) / d;
    }
    out
}
