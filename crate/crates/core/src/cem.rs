//! Complete electrode model forward solver.
//!
//! The unknowns are the interior potential `u` and the electrode voltages
//! `U`, coupled through
//!
//! ```text
//! ∫ σ∇u·∇v + Σ_l z_l⁻¹ ∫_{E_l} (u − U_l)(v − V_l) = Σ_l I_l V_l.
//! ```
//!
//! The block operator is singular with kernel `(1, …, 1)`; solutions are
//! normalized to `Σ_l U_l = 0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{self, pcg_singular, CgOptions, CsrMatrix, FeSpace};
use crate::potentials::angular_distance;

pub const DEFAULT_WIDTH: f64 = PI / 32.0;
pub const DEFAULT_IMPEDANCE: f64 = 0.01;
/// Gauss points per curved boundary edge.
const EDGE_POINTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemElectrodes {
    pub centers: Vec<f64>,
    /// Arc lengths.
    pub widths: Vec<f64>,
    pub impedances: Vec<f64>,
}

impl CemElectrodes {
    pub fn uniform(centers: &[f64], width: f64, impedance: f64) -> Result<Self> {
        let e = Self {
            centers: centers.to_vec(),
            widths: vec![width; centers.len()],
            impedances: vec![impedance; centers.len()],
        };
        e.validate()?;
        Ok(e)
    }

    pub fn count(&self) -> usize {
        self.centers.len()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.centers.len();
        let bad = |m: String| Err(Error::InvalidCemElectrodes(m));
        if l < 2 {
            return bad("at least two electrodes are required".into());
        }
        if self.widths.len() != l || self.impedances.len() != l {
            return bad("centers, widths and impedances must have equal length".into());
        }
        for i in 0..l {
            if !(self.widths[i] > 0.0 && self.widths[i] < PI) {
                return bad(format!("width of electrode {i} must lie in (0, π)"));
            }
            if !(self.impedances[i] > 0.0 && self.impedances[i].is_finite()) {
                return bad(format!("contact impedance of electrode {i} must be positive"));
            }
            for j in 0..i {
                let gap = angular_distance(self.centers[i], self.centers[j]);
                if gap <= 0.5 * (self.widths[i] + self.widths[j]) {
                    return bad(format!("electrodes {j} and {i} overlap"));
                }
            }
        }
        Ok(())
    }

    /// With every width multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { widths: self.widths.iter().map(|w| w * factor).collect(), ..self.clone() }
    }
}

/// The `L − 1` trigonometric current patterns for electrodes at `angles`:
/// `cos(mθ_l)` for `j = 2m − 1` and `sin(mθ_l)` for `j = 2m`, each shifted to
/// zero mean.
pub fn trig_current_basis(angles: &[f64]) -> Vec<Vec<f64>> {
    let l = angles.len();
    (1..l)
        .map(|j| {
            let m = ((j + 1) / 2) as f64;
            let mut v: Vec<f64> =
                angles.iter().map(|t| if j % 2 == 1 { (m * t).cos() } else { (m * t).sin() }).collect();
            let mean = v.iter().sum::<f64>() / l as f64;
            v.iter_mut().for_each(|x| *x -= mean);
            v
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CemSolution {
    /// P2 coefficients of the interior potential.
    pub potential: Vec<f64>,
    /// Electrode voltages, `Σ U_l = 0`.
    pub voltages: Vec<f64>,
    pub iterations: usize,
}

struct ElectrodeQuad {
    /// `(nodes, shape traces, weight)` per boundary Gauss point.
    points: Vec<([usize; 3], [f64; 3], f64)>,
    length: f64,
}

/// Electrode geometry resolved against a mesh, reusable across conductivities.
pub struct CemSystem<'a> {
    space: &'a FeSpace,
    electrodes: CemElectrodes,
    quad: Vec<ElectrodeQuad>,
    pattern: CsrMatrix,
}

impl<'a> CemSystem<'a> {
    /// Fails with `ArcsNotResolved` unless every arc is a union of whole
    /// boundary edges.
    pub fn new(space: &'a FeSpace, electrodes: &CemElectrodes) -> Result<Self> {
        electrodes.validate()?;
        let mesh = space.mesh();
        let edges = mesh.boundary_edges();
        let bq = fem::boundary_quadrature(mesh, EDGE_POINTS);
        let mut quad = Vec::with_capacity(electrodes.count());
        for l in 0..electrodes.count() {
            let (c, w) = (electrodes.centers[l], electrodes.widths[l]);
            let member: Vec<bool> =
                edges.iter().map(|e| angular_distance(0.5 * (e.theta[0] + e.theta[1]), c) < 0.5 * w).collect();
            let covered: f64 =
                edges.iter().zip(&member).filter(|(_, m)| **m).map(|(e, _)| e.theta[1] - e.theta[0]).sum();
            if (covered - w).abs() > 1e-9 * w.max(1.0) {
                return Err(Error::ArcsNotResolved { electrode: l });
            }
            let points: Vec<_> = bq.iter().filter(|p| member[p.edge]).map(|p| (p.nodes, p.shape, p.weight)).collect();
            let length = points.iter().map(|p| p.2).sum();
            quad.push(ElectrodeQuad { points, length });
        }
        let n = space.num_dofs();
        // pseudo-elements make the pattern hold electrode–node couplings
        let mut elements = mesh.triangles().to_vec();
        for (l, eq) in quad.iter().enumerate() {
            for (nodes, _, _) in eq.points.iter().step_by(EDGE_POINTS) {
                elements.push([nodes[0], nodes[1], nodes[2], n + l, n + l, n + l]);
            }
        }
        let (pattern, _) = CsrMatrix::from_elements(n + electrodes.count(), &elements);
        Ok(Self { space, electrodes: electrodes.clone(), quad, pattern })
    }

    pub fn electrodes(&self) -> &CemElectrodes {
        &self.electrodes
    }

    /// Assembles the block operator for `σ` sampled at the quadrature points.
    pub fn assemble(&self, sigma: &[f64]) -> Result<CemOperator<'_>> {
        let a = fem::assemble_stiffness(self.space, sigma)?;
        let mut m = self.pattern.clone();
        let n = self.space.num_dofs();
        let add = |m: &mut CsrMatrix, i: usize, j: usize, v: f64| {
            let k = m.slot(i, j).expect("pattern covers coupling");
            m.values_mut()[k] += v;
        };
        for i in 0..n {
            for (j, v) in a.row(i) {
                add(&mut m, i, j, v);
            }
        }
        for (l, eq) in self.quad.iter().enumerate() {
            let zi = 1.0 / self.electrodes.impedances[l];
            for (nodes, shape, w) in &eq.points {
                for a in 0..3 {
                    add(&mut m, nodes[a], n + l, -zi * w * shape[a]);
                    add(&mut m, n + l, nodes[a], -zi * w * shape[a]);
                    for b in 0..3 {
                        add(&mut m, nodes[a], nodes[b], zi * w * shape[a] * shape[b]);
                    }
                }
            }
            add(&mut m, n + l, n + l, zi * eq.length);
        }
        Ok(CemOperator { system: self, matrix: m })
    }

    /// Net current `z_l⁻¹ ∫_{E_l} (U_l − u)` through each electrode.
    pub fn net_currents(&self, sol: &CemSolution) -> Vec<f64> {
        self.quad
            .iter()
            .enumerate()
            .map(|(l, eq)| {
                let s: f64 = eq
                    .points
                    .iter()
                    .map(|(nodes, shape, w)| {
                        let u: f64 = (0..3).map(|a| shape[a] * sol.potential[nodes[a]]).sum();
                        w * (sol.voltages[l] - u)
                    })
                    .sum();
                s / self.electrodes.impedances[l]
            })
            .collect()
    }
}

pub struct CemOperator<'a> {
    system: &'a CemSystem<'a>,
    matrix: CsrMatrix,
}

impl CemOperator<'_> {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn solve(&self, current: &[f64], opts: CgOptions) -> Result<CemSolution> {
        let l = self.system.electrodes.count();
        if current.len() != l {
            return Err(Error::DimensionMismatch { expected: l, got: current.len() });
        }
        let sum: f64 = current.iter().sum();
        let scale: f64 = current.iter().map(|v| v.abs()).sum();
        if sum.abs() > 1e-12 * scale.max(1.0) {
            return Err(Error::NotMeanFree(sum));
        }
        let n = self.system.space.num_dofs();
        let mut b = vec![0.0; n + l];
        let mean = sum / l as f64;
        for (k, i) in current.iter().enumerate() {
            b[n + k] = i - mean;
        }
        let mut x = vec![0.0; n + l];
        let stats = pcg_singular(&self.matrix, &b, &mut x, opts)?;
        let shift = x[n..].iter().sum::<f64>() / l as f64;
        x.iter_mut().for_each(|v| *v -= shift);
        let voltages = x.split_off(n);
        Ok(CemSolution { potential: x, voltages, iterations: stats.iterations })
    }
}

/// Solves the CEM for `σ` at the quadrature points and one current pattern.
pub fn solve_cem(space: &FeSpace, sigma: &[f64], electrodes: &CemElectrodes, current: &[f64]) -> Result<CemSolution> {
    CemSystem::new(space, electrodes)?.assemble(sigma)?.solve(current, CgOptions::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemComparison {
    /// `|𝓤^ε − 𝓤⁰| / |𝓤⁰|` over the stacked voltages.
    pub e_cem: f64,
    /// The same ratio for each current pattern separately.
    pub per_current: Vec<f64>,
    pub currents: Vec<Vec<f64>>,
    pub voltages_perturbed: Vec<Vec<f64>>,
    pub voltages_reference: Vec<Vec<f64>>,
}

impl CemComparison {
    pub fn voltages_csv(&self) -> String {
        let l = self.currents.first().map_or(0, Vec::len);
        let mut s = String::from("pattern,electrode,current,voltage_perturbed,voltage_reference\n");
        for j in 0..self.currents.len() {
            for k in 0..l {
                s.push_str(&format!(
                    "{},{},{:e},{:e},{:e}\n",
                    j + 1,
                    k,
                    self.currents[j][k],
                    self.voltages_perturbed[j][k],
                    self.voltages_reference[j][k]
                ));
            }
        }
        s
    }
}

/// Compares CEM voltages of `σ^ε` against the unit conductivity for every
/// current pattern in `currents`.
pub fn e_cem(
    space: &FeSpace,
    sigma_eps: &[f64],
    electrodes: &CemElectrodes,
    currents: &[Vec<f64>],
) -> Result<CemComparison> {
    let system = CemSystem::new(space, electrodes)?;
    let unit = vec![1.0; space.num_quad()];
    let ops = [system.assemble(sigma_eps)?, system.assemble(&unit)?];
    let opts = CgOptions::default();
    let sols = crate::par::map_range(2 * currents.len(), |k| ops[k % 2].solve(&currents[k / 2], opts));
    let mut pert = Vec::with_capacity(currents.len());
    let mut refr = Vec::with_capacity(currents.len());
    for (k, s) in sols.into_iter().enumerate() {
        let v = s?.voltages;
        if k % 2 == 0 {
            pert.push(v);
        } else {
            refr.push(v);
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let per_current = pert
        .iter()
        .zip(&refr)
        .map(|(p, r)| {
            let d: f64 = p.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum();
            let n: f64 = r.iter().map(|b| b * b).sum();
            num += d;
            den += n;
            (d / n).sqrt()
        })
        .collect();
    Ok(CemComparison {
        e_cem: (num / den).sqrt(),
        per_current,
        currents: currents.to_vec(),
        voltages_perturbed: pert,
        voltages_reference: refr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_disk_mesh, OmegaSpec};
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn setup(h: f64, angles: &[f64], width: f64) -> (FeSpace, CemElectrodes) {
        let mesh = build_disk_mesh(&OmegaSpec::concentric(0.5), h, angles, Some(&[width])).unwrap();
        (FeSpace::new(Arc::new(mesh)).unwrap(), CemElectrodes::uniform(angles, width, DEFAULT_IMPEDANCE).unwrap())
    }

    fn four() -> Vec<f64> {
        [1.0f64, 91.0, 181.0, 271.0].iter().map(|d| d.to_radians()).collect()
    }

    fn random_current(rng: &mut ChaCha8Rng, l: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..l).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = v.iter().sum::<f64>() / l as f64;
        v.iter_mut().for_each(|x| *x -= m);
        v
    }

    #[test]
    fn trig_basis_shapes() {
        let b = trig_current_basis(&four());
        assert_eq!(b.len(), 3);
        let raw: f64 = four().iter().map(|t| t.cos()).sum();
        assert!(raw.abs() < 1e-15);
        let b2 = trig_current_basis(&[0.3, 2.0]);
        assert_eq!(b2.len(), 1);
        assert!((b2[0][0] + b2[0][1]).abs() < 1e-15 && b2[0][0] != 0.0);
        for l in [5usize, 8, 12, 16] {
            let angles: Vec<f64> = (0..l).map(|j| (1.0 + 360.0 * j as f64 / l as f64).to_radians()).collect();
            let b = trig_current_basis(&angles);
            assert!(b.iter().all(|v| v.iter().sum::<f64>().abs() < 1e-14));
            let m = DMatrix::from_fn(l, l - 1, |i, j| b[j][i]);
            let sv = m.singular_values();
            assert!(sv.min() > 1e-8 * sv.max(), "rank deficient for L = {l}");
        }
    }

    #[test]
    fn zero_current_gives_zero() {
        let (space, el) = setup(0.15, &four(), DEFAULT_WIDTH);
        let s = solve_cem(&space, &vec![1.0; space.num_quad()], &el, &[0.0; 4]).unwrap();
        assert!(s.potential.iter().chain(&s.voltages).all(|v| *v == 0.0));
    }

    #[test]
    fn conservation_grounding_and_symmetry() {
        let (space, el) = setup(0.05, &four(), DEFAULT_WIDTH);
        let sys = CemSystem::new(&space, &el).unwrap();
        let op = sys.assemble(&vec![1.0; space.num_quad()]).unwrap();
        assert!(op.matrix().asymmetry() < 1e-12 * op.matrix().max_abs());
        let i = [1.0, 0.0, -1.0, 0.0];
        let s = op.solve(&i, CgOptions::default()).unwrap();
        assert!(s.voltages.iter().sum::<f64>().abs() < 1e-14);
        let net = sys.net_currents(&s);
        for k in 0..4 {
            assert!((net[k] - i[k]).abs() < 1e-8, "{net:?}");
        }
        // point symmetry of the setup; the mesh itself is only symmetric up to discretization
        let tol = 1e-6 * s.voltages[0].abs();
        assert!(s.voltages[1].abs() < tol && s.voltages[3].abs() < tol, "{:?}", s.voltages);
        assert!(s.voltages[0] > 0.0);
    }

    #[test]
    fn reciprocity_and_gauge() {
        let (space, el) = setup(0.1, &four(), DEFAULT_WIDTH);
        let sys = CemSystem::new(&space, &el).unwrap();
        let sigma = space.sample(|x| 1.0 + 0.5 * x[0] * x[1] + 0.3 * x[1]);
        let op = sys.assemble(&sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..3 {
            let (i, j) = (random_current(&mut rng, 4), random_current(&mut rng, 4));
            let ui = op.solve(&i, CgOptions::default()).unwrap().voltages;
            let uj = op.solve(&j, CgOptions::default()).unwrap().voltages;
            let a: f64 = ui.iter().zip(&j).map(|(u, c)| u * c).sum();
            let b: f64 = uj.iter().zip(&i).map(|(u, c)| u * c).sum();
            assert!((a - b).abs() < 1e-10 * a.abs().max(b.abs()), "{a} {b}");
        }
    }

    #[test]
    fn unit_comparison_is_exactly_zero() {
        let (space, el) = setup(0.15, &four(), DEFAULT_WIDTH);
        let c = e_cem(&space, &vec![1.0; space.num_quad()], &el, &trig_current_basis(&four())).unwrap();
        assert_eq!(c.e_cem, 0.0);
        assert!(c.per_current.iter().all(|v| *v == 0.0));
        assert_eq!(c.voltages_csv().lines().count(), 1 + 3 * 4);
    }

    #[test]
    fn detects_visible_inclusion() {
        let (space, el) = setup(0.1, &four(), DEFAULT_WIDTH);
        let sigma = space.sample(|x| if x[0].hypot(x[1]) < 0.4 { 2.0 } else { 1.0 });
        let c = e_cem(&space, &sigma, &el, &trig_current_basis(&four())).unwrap();
        assert!(c.e_cem > 1e-2, "{}", c.e_cem);
    }

    #[test]
    fn unresolved_arcs_are_rejected() {
        let mesh = build_disk_mesh(&OmegaSpec::concentric(0.5), 0.15, &four(), None).unwrap();
        let space = FeSpace::new(Arc::new(mesh)).unwrap();
        let el = CemElectrodes::uniform(&four(), 0.1234, 0.01).unwrap();
        assert!(matches!(CemSystem::new(&space, &el), Err(Error::ArcsNotResolved { .. })));
        assert!(CemElectrodes::uniform(&[0.0, 0.05], 0.1, 0.01).is_err());
        assert!(CemElectrodes::uniform(&[0.0, 1.0], 0.1, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn trig_basis_is_mean_free(angles in proptest::collection::vec(0.0..6.28f64, 2..20)) {
            for v in trig_current_basis(&angles) {
                prop_assert!(v.iter().sum::<f64>().abs() < 1e-13);
            }
        }
    }
}
