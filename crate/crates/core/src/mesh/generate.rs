//! Structured polar-ring generator.
//!
//! Nodes sit on concentric rings of a pre-image disk. Consecutive rings are
//! stitched by a zipper sweep in angle, the innermost ring is fanned to the
//! centre. Offset disks are meshed in a Möbius frame in which `Ω` is concentric
//! and pushed forward afterwards.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use super::{element, BoundaryEdge, Locator, Mesh, OmegaSpec, Region};
use crate::error::{Error, Result};
use crate::potentials::angular_distance;
use crate::quadrature;

const SAME_ANGLE: f64 = 1e-12;
const RADIUS_TOL: f64 = 1e-12;
/// Largest angular step on any ring.
const MAX_ANGULAR_STEP: f64 = PI / 3.0;

/// Builds a boundary-fitted P2 mesh of the unit disk.
///
/// Boundary vertices are placed at every electrode angle and, when
/// `cem_widths` is given, at both endpoints of each electrode arc. A single
/// width applies to all electrodes.
pub fn build_disk_mesh(
    omega: &OmegaSpec,
    target_h: f64,
    electrode_angles: &[f64],
    cem_widths: Option<&[f64]>,
) -> Result<Mesh> {
    if !(target_h > 0.0 && target_h.is_finite()) {
        return Err(Error::InvalidMeshParameters(format!("target_h must be positive, got {target_h}")));
    }
    omega.validate()?;
    let clearance = omega.clearance();
    if clearance < target_h {
        return Err(Error::OmegaTooCloseToBoundary { clearance, required: target_h });
    }
    check_electrodes(electrode_angles, cem_widths)?;

    let frame = Frame::for_omega(omega);
    let h = target_h * frame.contraction();

    let mut required: Vec<f64> = electrode_angles.iter().map(|t| t.rem_euclid(TAU)).collect();
    if let Some(w) = cem_widths {
        for (i, t) in electrode_angles.iter().enumerate() {
            let half = 0.5 * if w.len() == 1 { w[0] } else { w[i] };
            required.push((t - half).rem_euclid(TAU));
            required.push((t + half).rem_euclid(TAU));
        }
    }
    let boundary_required: Vec<(f64, Option<f64>)> =
        required.iter().map(|&phi| (frame.pre_angle(phi), Some(phi))).collect();

    let (required_radii, sector_angles) = match *omega {
        OmegaSpec::ConcentricDisk { radius } => (vec![radius], vec![]),
        OmegaSpec::OffsetDisk { .. } => (vec![frame.omega_radius()], vec![]),
        OmegaSpec::AnnulusSector { r_in, r_out, angle_span, center_angle } => {
            let edges = if angle_span < TAU - SAME_ANGLE {
                vec![
                    (center_angle - 0.5 * angle_span).rem_euclid(TAU),
                    (center_angle + 0.5 * angle_span).rem_euclid(TAU),
                ]
            } else {
                vec![]
            };
            (vec![r_in, r_out], edges)
        }
    };
    let radii = ring_radii(&required_radii, h);
    let last = radii.len() - 1;

    let mut verts: Vec<Vertex> = vec![Vertex { ring: 0, pre: [0.0, 0.0], boundary_angle: None }];
    let mut rings: Vec<Vec<(f64, usize)>> = vec![vec![(0.0, 0)]];
    for (ri, &r) in radii.iter().enumerate().skip(1) {
        let mut req: Vec<(f64, Option<f64>)> = sector_angles.iter().map(|&t| (t, None)).collect();
        if ri == last {
            req.extend_from_slice(&boundary_required);
        }
        let angles = ring_angles(r, h, req);
        let ring = angles
            .into_iter()
            .map(|(t, phys)| {
                let id = verts.len();
                let boundary_angle = (ri == last).then(|| phys.unwrap_or_else(|| frame.phys_angle(t)));
                verts.push(Vertex { ring: ri, pre: [r * t.cos(), r * t.sin()], boundary_angle });
                (t, id)
            })
            .collect();
        rings.push(ring);
    }

    let mut tris: Vec<[usize; 3]> = Vec::new();
    let inner_ring: Vec<usize> = rings[1].iter().map(|v| v.1).collect();
    for j in 0..inner_ring.len() {
        tris.push([0, inner_ring[j], inner_ring[(j + 1) % inner_ring.len()]]);
    }
    for w in rings[1..].windows(2) {
        zipper(&w[0], &w[1], &mut tris);
    }
    for t in &mut tris {
        if signed_area(verts[t[0]].pre, verts[t[1]].pre, verts[t[2]].pre) < 0.0 {
            t.swap(1, 2);
        }
    }

    let omega_rings: Vec<usize> = required_radii
        .iter()
        .map(|&r| radii.iter().position(|&q| (q - r).abs() < RADIUS_TOL).expect("required radius is a ring"))
        .collect();

    let mut nodes: Vec<[f64; 2]> = verts.iter().map(|v| frame.vertex_position(v, &omega_rings)).collect();
    let num_vertices = nodes.len();

    let mut midside: HashMap<(usize, usize), usize> = HashMap::new();
    let mut boundary_owner: HashMap<(usize, usize), usize> = HashMap::new();
    let mut triangles = Vec::with_capacity(tris.len());
    let mut curved = Vec::with_capacity(tris.len());
    for (e, t) in tris.iter().enumerate() {
        let mut full = [t[0], t[1], t[2], 0, 0, 0];
        let mut is_curved = false;
        for (k, (a, b)) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])].into_iter().enumerate() {
            let key = (a.min(b), a.max(b));
            let (m, c) = match midside.get(&key) {
                Some(&m) => (m, edge_arc(&verts, &nodes, a, b, omega, &radii, &omega_rings).is_some()),
                None => {
                    let arc = edge_arc(&verts, &nodes, a, b, omega, &radii, &omega_rings);
                    let p = match arc {
                        Some(p) => p,
                        None => [0.5 * (nodes[a][0] + nodes[b][0]), 0.5 * (nodes[a][1] + nodes[b][1])],
                    };
                    nodes.push(p);
                    midside.insert(key, nodes.len() - 1);
                    (nodes.len() - 1, arc.is_some())
                }
            };
            full[3 + k] = m;
            is_curved |= c;
            if verts[a].ring == last && verts[b].ring == last {
                boundary_owner.insert(key, e);
            }
        }
        triangles.push(full);
        curved.push(is_curved);
    }

    let tags = tris.iter().map(|t| region(t, &verts, omega, &radii)).collect();

    let outer: Vec<usize> = rings[last].iter().map(|v| v.1).collect();
    let boundary_edges = (0..outer.len())
        .map(|j| {
            let (a, b) = (outer[j], outer[(j + 1) % outer.len()]);
            let key = (a.min(b), a.max(b));
            let t0 = verts[a].boundary_angle.expect("boundary vertex");
            let t1 = verts[b].boundary_angle.expect("boundary vertex");
            let span = (t1 - t0).rem_euclid(TAU);
            BoundaryEdge { nodes: [a, b, midside[&key]], theta: [t0, t0 + span], element: boundary_owner[&key] }
        })
        .collect();

    let h_max = triangles
        .iter()
        .map(|t| {
            let d = |i: usize, j: usize| (nodes[t[i]][0] - nodes[t[j]][0]).hypot(nodes[t[i]][1] - nodes[t[j]][1]);
            d(0, 1).max(d(1, 2)).max(d(2, 0))
        })
        .fold(0.0, f64::max);

    let rule = quadrature::triangle(quadrature::DEFAULT_DEGREE)?;
    for (e, t) in triangles.iter().enumerate() {
        let en = t.map(|i| nodes[i]);
        for q in 0..rule.len() {
            let [xi, eta] = rule.reference_point(q);
            let jac = element::det(&element::jacobian(&en, xi, eta));
            if !(jac > 0.0) {
                return Err(Error::DegenerateElement { element: e, jacobian: jac });
            }
        }
    }

    let locator = Locator::new(&nodes, &triangles);
    Ok(Mesh { nodes, num_vertices, triangles, tags, curved, boundary_edges, h_max, omega: *omega, locator })
}

fn check_electrodes(angles: &[f64], widths: Option<&[f64]>) -> Result<()> {
    if angles.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidElectrodes("electrode angles must be finite".into()));
    }
    for i in 0..angles.len() {
        for j in 0..i {
            if angular_distance(angles[i], angles[j]) < SAME_ANGLE {
                return Err(Error::InvalidElectrodes(format!("electrodes {j} and {i} coincide")));
            }
        }
    }
    let Some(w) = widths else { return Ok(()) };
    if !(w.len() == 1 || w.len() == angles.len()) {
        return Err(Error::InvalidCemElectrodes(format!("expected 1 or {} widths, got {}", angles.len(), w.len())));
    }
    let width = |i: usize| if w.len() == 1 { w[0] } else { w[i] };
    for i in 0..angles.len() {
        if !(width(i) > 0.0 && width(i) < PI) {
            return Err(Error::InvalidCemElectrodes(format!("width {} out of range", width(i))));
        }
        for j in 0..i {
            if angular_distance(angles[i], angles[j]) <= 0.5 * (width(i) + width(j)) + SAME_ANGLE {
                return Err(Error::InvalidCemElectrodes(format!("arcs {j} and {i} overlap")));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct Vertex {
    ring: usize,
    pre: [f64; 2],
    /// Physical polar angle of vertices on the unit circle.
    boundary_angle: Option<f64>,
}

/// Map from the meshing frame to the physical disk.
#[derive(Debug, Clone, Copy)]
enum Frame {
    Identity,
    /// `Ψ(w) = e^{iβ} (w + a) / (1 + a w)` with real `a ∈ [0, 1)`, sending the
    /// circle of radius `r` about the origin onto `∂Ω`.
    Mobius {
        a: f64,
        beta: f64,
        r: f64,
        center: [f64; 2],
        radius: f64,
    },
}

impl Frame {
    fn for_omega(omega: &OmegaSpec) -> Self {
        let OmegaSpec::OffsetDisk { center, radius } = *omega else {
            return Frame::Identity;
        };
        let d = center[0].hypot(center[1]);
        let beta = center[1].atan2(center[0]);
        let (p, q) = (d + radius, d - radius);
        let s = p + q;
        let a = if s.abs() < 1e-15 {
            0.0
        } else {
            let b = 1.0 + p * q;
            // stable root of s a² − 2b a + s = 0 in (−1, 1)
            s / (b + (b * b - s * s).sqrt())
        };
        let r = (p - a) / (1.0 - a * p);
        Frame::Mobius { a, beta, r, center, radius }
    }

    /// Lower bound of `|Ψ'|` on the disk.
    fn contraction(&self) -> f64 {
        match *self {
            Frame::Identity => 1.0,
            Frame::Mobius { a, .. } => (1.0 - a) / (1.0 + a),
        }
    }

    fn omega_radius(&self) -> f64 {
        match *self {
            Frame::Identity => unreachable!("identity frame has no Omega ring"),
            Frame::Mobius { r, .. } => r,
        }
    }

    fn map(&self, w: [f64; 2]) -> [f64; 2] {
        match *self {
            Frame::Identity => w,
            Frame::Mobius { a, beta, .. } => {
                let (nr, ni) = (w[0] + a, w[1]);
                let (dr, di) = (1.0 + a * w[0], a * w[1]);
                let den = dr * dr + di * di;
                let (zr, zi) = ((nr * dr + ni * di) / den, (ni * dr - nr * di) / den);
                let (c, s) = (beta.cos(), beta.sin());
                [c * zr - s * zi, s * zr + c * zi]
            }
        }
    }

    fn phys_angle(&self, pre: f64) -> f64 {
        match self {
            Frame::Identity => pre,
            Frame::Mobius { .. } => {
                let z = self.map([pre.cos(), pre.sin()]);
                z[1].atan2(z[0]).rem_euclid(TAU)
            }
        }
    }

    fn pre_angle(&self, phys: f64) -> f64 {
        match *self {
            Frame::Identity => phys,
            Frame::Mobius { a, beta, .. } => {
                let t = phys - beta;
                let (zr, zi) = (t.cos(), t.sin());
                // w = (z − a) / (1 − a z)
                let (nr, ni) = (zr - a, zi);
                let (dr, di) = (1.0 - a * zr, -a * zi);
                let wr = nr * dr + ni * di;
                let wi = ni * dr - nr * di;
                wi.atan2(wr).rem_euclid(TAU)
            }
        }
    }

    fn vertex_position(&self, v: &Vertex, omega_rings: &[usize]) -> [f64; 2] {
        if let Some(phi) = v.boundary_angle {
            return [phi.cos(), phi.sin()];
        }
        let z = self.map(v.pre);
        match *self {
            Frame::Mobius { center, radius, .. } if omega_rings.contains(&v.ring) => {
                let (dx, dy) = (z[0] - center[0], z[1] - center[1]);
                let n = dx.hypot(dy);
                [center[0] + radius * dx / n, center[1] + radius * dy / n]
            }
            _ => z,
        }
    }
}

/// Ring radii from 0 to 1 through every required radius, with gaps at most `h`.
fn ring_radii(required: &[f64], h: f64) -> Vec<f64> {
    let mut stops: Vec<f64> = required.to_vec();
    stops.push(1.0);
    stops.sort_by(f64::total_cmp);
    let mut radii = vec![0.0];
    let mut prev = 0.0;
    for s in stops {
        let n = ((s - prev) / h).ceil().max(1.0) as usize;
        for k in 1..n {
            radii.push(prev + (s - prev) * k as f64 / n as f64);
        }
        radii.push(s);
        prev = s;
    }
    radii
}

/// Sorted ring angles in `[0, 2π)` containing every required angle. The
/// physical boundary angle, if any, is carried along.
fn ring_angles(r: f64, h: f64, mut required: Vec<(f64, Option<f64>)>) -> Vec<(f64, Option<f64>)> {
    if required.is_empty() {
        let n = (TAU * r / h).ceil().max(6.0) as usize;
        let n = n.div_ceil(4) * 4;
        return (0..n).map(|k| (TAU * k as f64 / n as f64, None)).collect();
    }
    required.sort_by(|a, b| a.0.total_cmp(&b.0));
    required.dedup_by(|b, a| (b.0 - a.0).abs() < SAME_ANGLE);
    if required.len() > 1 && required[0].0 + TAU - required.last().unwrap().0 < SAME_ANGLE {
        required.pop();
    }
    let mut out = Vec::new();
    for (k, &(t, phys)) in required.iter().enumerate() {
        out.push((t, phys));
        let next = if k + 1 < required.len() { required[k + 1].0 } else { required[0].0 + TAU };
        let gap = next - t;
        let n = (gap * r / h).ceil().max((gap / MAX_ANGULAR_STEP).ceil()).max(1.0) as usize;
        for s in 1..n {
            out.push(((t + gap * s as f64 / n as f64).rem_euclid(TAU), None));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Triangulates the band between two rings. Ties advance the inner ring, so
/// nodes at equal angles are joined by an edge.
fn zipper(inner: &[(f64, usize)], outer: &[(f64, usize)], tris: &mut Vec<[usize; 3]>) {
    let (na, nb) = (inner.len(), outer.len());
    let angle = |ring: &[(f64, usize)], k: usize| {
        let n = ring.len();
        ring[k % n].0 + TAU * (k / n) as f64
    };
    let (mut i, mut j) = (0, 0);
    while i < na || j < nb {
        let advance_inner = j == nb || (i < na && angle(inner, i + 1) <= angle(outer, j + 1));
        if advance_inner {
            tris.push([inner[i % na].1, inner[(i + 1) % na].1, outer[j % nb].1]);
            i += 1;
        } else {
            tris.push([inner[i % na].1, outer[(j + 1) % nb].1, outer[j % nb].1]);
            j += 1;
        }
    }
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn wrap(t: f64) -> f64 {
    let t = t.rem_euclid(TAU);
    if t > PI {
        t - TAU
    } else {
        t
    }
}

/// Midside position of a curved edge, or `None` for a straight one.
fn edge_arc(
    verts: &[Vertex],
    nodes: &[[f64; 2]],
    a: usize,
    b: usize,
    omega: &OmegaSpec,
    radii: &[f64],
    omega_rings: &[usize],
) -> Option<[f64; 2]> {
    let (va, vb) = (&verts[a], &verts[b]);
    if va.ring != vb.ring {
        return None;
    }
    if let (Some(ta), Some(tb)) = (va.boundary_angle, vb.boundary_angle) {
        let t = ta + 0.5 * wrap(tb - ta);
        return Some([t.cos(), t.sin()]);
    }
    if !omega_rings.contains(&va.ring) {
        return None;
    }
    let (center, radius) = match *omega {
        OmegaSpec::ConcentricDisk { radius } => ([0.0, 0.0], radius),
        OmegaSpec::OffsetDisk { center, radius } => (center, radius),
        OmegaSpec::AnnulusSector { angle_span, center_angle, .. } => {
            let r = radii[va.ring];
            if angle_span < TAU - SAME_ANGLE {
                let mid = [0.5 * (va.pre[0] + vb.pre[0]), 0.5 * (va.pre[1] + vb.pre[1])];
                if angular_distance(mid[1].atan2(mid[0]), center_angle) > 0.5 * angle_span {
                    return None;
                }
            }
            ([0.0, 0.0], r)
        }
    };
    let (pa, pb) = (nodes[a], nodes[b]);
    let ta = (pa[1] - center[1]).atan2(pa[0] - center[0]);
    let tb = (pb[1] - center[1]).atan2(pb[0] - center[0]);
    let t = ta + 0.5 * wrap(tb - ta);
    Some([center[0] + radius * t.cos(), center[1] + radius * t.sin()])
}

fn region(t: &[usize; 3], verts: &[Vertex], omega: &OmegaSpec, radii: &[f64]) -> Region {
    let rs = t.map(|i| radii[verts[i].ring]);
    let rmax = rs.iter().copied().fold(0.0, f64::max);
    let rmin = rs.iter().copied().fold(f64::MAX, f64::min);
    let inside = match *omega {
        OmegaSpec::ConcentricDisk { radius } => rmax <= radius + RADIUS_TOL,
        OmegaSpec::OffsetDisk { .. } => {
            let Frame::Mobius { r, .. } = Frame::for_omega(omega) else { unreachable!() };
            rmax <= r + RADIUS_TOL
        }
        OmegaSpec::AnnulusSector { r_in, r_out, angle_span, center_angle } => {
            let radial = rmin >= r_in - RADIUS_TOL && rmax <= r_out + RADIUS_TOL;
            let c = t.iter().fold([0.0, 0.0], |s, &i| [s[0] + verts[i].pre[0], s[1] + verts[i].pre[1]]);
            radial
                && (angle_span >= TAU - SAME_ANGLE
                    || angular_distance(c[1].atan2(c[0]), center_angle) < 0.5 * angle_span)
        }
    };
    if inside {
        Region::InsideOmega
    } else {
        Region::OutsideOmega
    }
}
