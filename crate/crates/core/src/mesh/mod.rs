//! Quadratic triangulations of the unit disk fitted to a subdomain `Ω`.

pub mod element;
mod generate;
mod omega;

use serde::{Deserialize, Serialize};

pub use generate::build_disk_mesh;
pub use omega::OmegaSpec;

use crate::quadrature::QuadratureRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    InsideOmega,
    OutsideOmega,
}

/// Curved three-node edge on the unit circle, oriented counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    /// Start vertex, end vertex, midside node.
    pub nodes: [usize; 3],
    /// Polar angles of the start and end vertex; `theta[1] > theta[0]`.
    pub theta: [f64; 2],
    pub element: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint {
    pub point: [f64; 2],
    /// Reference weight times the Jacobian determinant.
    pub weight: f64,
    pub jacobian: f64,
}

/// Conforming six-node triangulation. Vertices come first in the node array,
/// followed by the midside nodes. Midside nodes on `∂D` and `∂Ω` lie on the
/// respective circles; all other elements are straight.
#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<[f64; 2]>,
    num_vertices: usize,
    triangles: Vec<[usize; 6]>,
    tags: Vec<Region>,
    curved: Vec<bool>,
    boundary_edges: Vec<BoundaryEdge>,
    h_max: f64,
    omega: OmegaSpec,
    locator: Locator,
}

impl Mesh {
    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn triangles(&self) -> &[[usize; 6]] {
        &self.triangles
    }

    pub fn num_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn tags(&self) -> &[Region] {
        &self.tags
    }

    pub fn tag(&self, element: usize) -> Region {
        self.tags[element]
    }

    pub fn is_curved(&self, element: usize) -> bool {
        self.curved[element]
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn omega(&self) -> &OmegaSpec {
        &self.omega
    }

    pub fn element_nodes(&self, element: usize) -> [[f64; 2]; 6] {
        self.triangles[element].map(|i| self.nodes[i])
    }

    pub fn centroid(&self, element: usize) -> [f64; 2] {
        element::map_point(&self.element_nodes(element), 1.0 / 3.0, 1.0 / 3.0)
    }

    /// Mapped quadrature points, weights and Jacobian determinants.
    pub fn physical_quad_points(&self, element: usize, rule: &QuadratureRule) -> Vec<QuadPoint> {
        let nodes = self.element_nodes(element);
        (0..rule.len())
            .map(|q| {
                let [xi, eta] = rule.reference_point(q);
                let jac = element::det(&element::jacobian(&nodes, xi, eta));
                QuadPoint { point: element::map_point(&nodes, xi, eta), weight: rule.weights[q] * jac, jacobian: jac }
            })
            .collect()
    }

    /// Element containing `x` and the reference coordinates of `x` in it.
    pub fn locate(&self, x: [f64; 2]) -> Option<(usize, [f64; 2])> {
        const TOL: f64 = 1e-10;
        for &e in self.locator.candidates(x) {
            let nodes = self.element_nodes(e);
            if let Some(r) = invert_map(&nodes, x) {
                if r[0] >= -TOL && r[1] >= -TOL && r[0] + r[1] <= 1.0 + TOL {
                    return Some((e, r));
                }
            }
        }
        None
    }
}

/// Newton inversion of the isoparametric map, started from the affine guess.
fn invert_map(nodes: &[[f64; 2]; 6], x: [f64; 2]) -> Option<[f64; 2]> {
    let j0 = element::jacobian(nodes, 1.0 / 3.0, 1.0 / 3.0);
    let mut r = [1.0 / 3.0, 1.0 / 3.0];
    let mut j = j0;
    for _ in 0..30 {
        let p = element::map_point(nodes, r[0], r[1]);
        let res = [x[0] - p[0], x[1] - p[1]];
        let d = element::det(&j);
        if d.abs() < 1e-300 {
            return None;
        }
        let dx = (j[1][1] * res[0] - j[0][1] * res[1]) / d;
        let dy = (-j[1][0] * res[0] + j[0][0] * res[1]) / d;
        r = [r[0] + dx, r[1] + dy];
        if dx.abs() + dy.abs() < 1e-15 {
            break;
        }
        if r[0].abs() > 10.0 || r[1].abs() > 10.0 {
            return None;
        }
        j = element::jacobian(nodes, r[0], r[1]);
    }
    Some(r)
}

/// Uniform bucket grid over element bounding boxes on `[-1, 1]²`.
#[derive(Debug, Clone)]
struct Locator {
    cells: usize,
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    fn new(nodes: &[[f64; 2]], triangles: &[[usize; 6]]) -> Self {
        let cells = ((triangles.len() as f64).sqrt() as usize).clamp(1, 256);
        let mut buckets = vec![Vec::new(); cells * cells];
        let cell_of = |v: f64| (((v + 1.0) * 0.5 * cells as f64).floor().max(0.0) as usize).min(cells - 1);
        for (e, t) in triangles.iter().enumerate() {
            let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
            for &n in t {
                for d in 0..2 {
                    lo[d] = lo[d].min(nodes[n][d]);
                    hi[d] = hi[d].max(nodes[n][d]);
                }
            }
            for cx in cell_of(lo[0] - 1e-9)..=cell_of(hi[0] + 1e-9) {
                for cy in cell_of(lo[1] - 1e-9)..=cell_of(hi[1] + 1e-9) {
                    buckets[cy * cells + cx].push(e);
                }
            }
        }
        Self { cells, buckets }
    }

    fn candidates(&self, x: [f64; 2]) -> &[usize] {
        if !(x[0].abs() <= 1.0 && x[1].abs() <= 1.0) {
            return &[];
        }
        let c = |v: f64| (((v + 1.0) * 0.5 * self.cells as f64).floor() as usize).min(self.cells - 1);
        &self.buckets[c(x[1]) * self.cells + c(x[0])]
    }
}
