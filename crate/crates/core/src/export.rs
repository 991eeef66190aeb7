//! Legacy VTK and raster CSV output for fields on the disk mesh.

use std::fmt::Write;

use crate::fem::FeSpace;
use crate::mesh::Mesh;

/// VTK cell type of the six-node quadratic triangle.
const VTK_QUADRATIC_TRIANGLE: u8 = 22;

/// Weighted element means of a field sampled at the quadrature points.
pub fn element_means(space: &FeSpace, values: &[f64]) -> Vec<f64> {
    (0..space.mesh().num_elements())
        .map(|e| {
            let r = space.element_quad(e);
            let w = &space.weights()[r.clone()];
            let s: f64 = w.iter().zip(&values[r]).map(|(w, v)| w * v).sum();
            s / w.iter().sum::<f64>()
        })
        .collect()
}

/// ASCII unstructured grid with one scalar cell field per entry of `fields`.
pub fn vtk_cells(mesh: &Mesh, title: &str, fields: &[(&str, &[f64])]) -> String {
    let mut s = String::new();
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    writeln!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(s, "POINTS {} double", mesh.num_nodes()).unwrap();
    for p in mesh.nodes() {
        writeln!(s, "{:.17e} {:.17e} 0", p[0], p[1]).unwrap();
    }
    let ne = mesh.num_elements();
    writeln!(s, "CELLS {} {}", ne, 7 * ne).unwrap();
    for t in mesh.triangles() {
        writeln!(s, "6 {} {} {} {} {} {}", t[0], t[1], t[2], t[3], t[4], t[5]).unwrap();
    }
    writeln!(s, "CELL_TYPES {ne}").unwrap();
    for _ in 0..ne {
        writeln!(s, "{VTK_QUADRATIC_TRIANGLE}").unwrap();
    }
    writeln!(s, "CELL_DATA {ne}").unwrap();
    for (name, values) in fields {
        assert_eq!(values.len(), ne, "cell field {name} has the wrong length");
        writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
        for v in *values {
            writeln!(s, "{v:.17e}").unwrap();
        }
    }
    s
}

/// `size × size` samples of `f` on the square `[-1, 1]²` as `x,y,value`
/// rows; `f` returns `None` outside the disk, written as `NaN`.
pub fn raster_csv<F: Fn([f64; 2]) -> Option<f64>>(size: usize, f: F) -> String {
    let mut s = String::from("x,y,value\n");
    for j in 0..size {
        let y = -1.0 + 2.0 * j as f64 / (size - 1) as f64;
        for i in 0..size {
            let x = -1.0 + 2.0 * i as f64 / (size - 1) as f64;
            let v = if x * x + y * y < 1.0 { f([x, y]) } else { None };
            match v {
                Some(v) => writeln!(s, "{x:.6},{y:.6},{v:.12e}").unwrap(),
                None => writeln!(s, "{x:.6},{y:.6},NaN").unwrap(),
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_disk_mesh, OmegaSpec};
    use std::sync::Arc;

    #[test]
    fn vtk_layout() {
        let mesh = build_disk_mesh(&OmegaSpec::concentric(0.5), 0.5, &[0.0, 2.0], None).unwrap();
        let space = FeSpace::new(Arc::new(mesh)).unwrap();
        let means = element_means(&space, &space.sample(|x| 2.0 + x[0]));
        let ones = vec![1.0; means.len()];
        let text = vtk_cells(space.mesh(), "test", &[("sigma", &means), ("one", &ones)]);
        let lines: Vec<&str> = text.lines().collect();
        let ne = space.mesh().num_elements();
        let nn = space.mesh().num_nodes();
        assert_eq!(lines[4], format!("POINTS {nn} double"));
        assert_eq!(lines[5 + nn], format!("CELLS {ne} {}", 7 * ne));
        assert_eq!(lines[6 + nn + ne], format!("CELL_TYPES {ne}"));
        assert_eq!(lines.len(), 5 + nn + 1 + ne + 1 + ne + 1 + 2 * (2 + ne));
        assert!(text.contains("SCALARS one double 1"));
    }

    #[test]
    fn element_means_reproduce_affine_centroids() {
        let mesh = build_disk_mesh(&OmegaSpec::concentric(0.5), 0.3, &[0.0, 2.0], None).unwrap();
        let space = FeSpace::new(Arc::new(mesh)).unwrap();
        let means = element_means(&space, &space.sample(|x| 3.0 * x[0] - x[1]));
        for (e, m) in means.iter().enumerate() {
            if space.mesh().is_curved(e) {
                continue;
            }
            let c = space.mesh().centroid(e);
            assert!((m - (3.0 * c[0] - c[1])).abs() < 1e-12);
        }
    }

    #[test]
    fn raster_marks_exterior() {
        let csv = raster_csv(3, |_| Some(1.0));
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(rows.len(), 9);
        assert!(rows[0].ends_with("NaN"));
        assert!(rows[4].ends_with("1.000000000000e0"));
    }
}
