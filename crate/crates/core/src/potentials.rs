//! Closed-form reference potentials on the unit disk.
//!
//! For unit conductivity, the Neumann problem with boundary current
//! `δ_n − δ_0` between point electrodes `x_n` and `x_0` on the unit circle has
//! the solution `u_n(x) = −(1/π)(ln|x − x_n| − ln|x − x_0|)`, which has zero
//! mean over the disk. The products of their gradients, `ψ_k = ∇u_i·∇u_j`,
//! span the space that the dual perturbation basis is built from.

pub mod conformal;

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Distance below which a point counts as sitting on an electrode.
pub const ELECTRODE_EPS: f64 = 1e-14;

const ANGLE_EPS: f64 = 1e-12;

/// Point electrodes `x_0, …, x_N` on the unit circle. Electrode 0 is the
/// common return electrode of every reference potential.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeConfig {
    angles: Vec<f64>,
    positions: Vec<[f64; 2]>,
}

impl ElectrodeConfig {
    /// Electrodes at the given polar angles (radians).
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        let positions = angles.iter().map(|t| [t.cos(), t.sin()]).collect();
        Self::from_parts(angles, positions)
    }

    /// Electrodes at explicit positions; angles are recomputed from them.
    pub fn from_positions(positions: Vec<[f64; 2]>) -> Result<Self> {
        let angles = positions.iter().map(|p| p[1].atan2(p[0])).collect();
        Self::from_parts(angles, positions)
    }

    fn from_parts(angles: Vec<f64>, positions: Vec<[f64; 2]>) -> Result<Self> {
        if angles.len() < 2 {
            return Err(Error::InvalidElectrodes(format!("need at least 2 electrodes, got {}", angles.len())));
        }
        if let Some(t) = angles.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidElectrodes(format!("non-finite angle {t}")));
        }
        for i in 0..angles.len() {
            for j in 0..i {
                if angular_distance(angles[i], angles[j]) < ANGLE_EPS {
                    return Err(Error::InvalidElectrodes(format!("electrodes {j} and {i} coincide")));
                }
            }
        }
        Ok(Self { angles, positions })
    }

    /// `count` electrodes at `θ_j = offset + j/count · 360°`.
    pub fn equispaced(count: usize, offset_deg: f64) -> Result<Self> {
        let angles = (0..count).map(|j| (offset_deg + j as f64 * 360.0 / count as f64).to_radians()).collect();
        Self::new(angles)
    }

    pub fn from_degrees(angles_deg: &[f64]) -> Result<Self> {
        Self::new(angles_deg.iter().map(|d| d.to_radians()).collect())
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn position(&self, electrode: usize) -> [f64; 2] {
        self.positions[electrode]
    }

    /// Number of electrodes, `N + 1`.
    pub fn count(&self) -> usize {
        self.angles.len()
    }

    /// Number of reference potentials, `N`.
    pub fn potential_count(&self) -> usize {
        self.angles.len() - 1
    }

    pub fn pairs(&self) -> PairIndex {
        PairIndex::new(self.potential_count())
    }

    /// The same configuration rotated by `phi` radians.
    pub fn rotated(&self, phi: f64) -> Self {
        let angles: Vec<f64> = self.angles.iter().map(|t| t + phi).collect();
        let positions = angles.iter().map(|t| [t.cos(), t.sin()]).collect();
        Self { angles, positions }
    }
}

/// Smallest angular separation of two angles, in `[0, π]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Enumeration of the `K = N(N+1)/2` index pairs `(i, j)`, `1 ≤ i ≤ j ≤ N`,
/// row by row: k = 0 ↔ (1,1), 1 ↔ (1,2), 2 ↔ (2,2), 3 ↔ (1,3), …
///
/// `k` is zero-based; `i` and `j` are electrode numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairIndex {
    n: usize,
}

impl PairIndex {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `(i, j)` with `i ≤ j` for pair number `k`.
    pub fn pair(&self, k: usize) -> (usize, usize) {
        assert!(k < self.len(), "pair index {k} out of range");
        let mut j = 1;
        while j * (j + 1) / 2 <= k {
            j += 1;
        }
        (k - j * (j - 1) / 2 + 1, j)
    }

    /// Pair number of `(i, j)`; the order of the arguments does not matter.
    pub fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        assert!(i >= 1 && j <= self.n, "pair ({i}, {j}) out of range");
        j * (j - 1) / 2 + i - 1
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..=self.n).flat_map(|j| (1..=j).map(move |i| (i, j)))
    }
}

/// Source of the reference potentials `u_n`, `n = 1..=N`, and their gradients.
pub trait ReferencePotentials: Send + Sync {
    fn electrodes(&self) -> &ElectrodeConfig;

    fn value(&self, n: usize, x: [f64; 2]) -> Result<f64>;

    fn gradient(&self, n: usize, x: [f64; 2]) -> Result<[f64; 2]>;

    /// `ψ_k = ∇u_i · ∇u_j` for `(i, j)` = pair `k`.
    fn psi(&self, k: usize, x: [f64; 2]) -> Result<f64> {
        let (i, j) = self.electrodes().pairs().pair(k);
        let gi = self.gradient(i, x)?;
        let gj = self.gradient(j, x)?;
        Ok(gi[0] * gj[0] + gi[1] * gj[1])
    }
}

/// The closed-form potentials of the unit disk.
#[derive(Debug, Clone)]
pub struct DiskPotentials {
    cfg: ElectrodeConfig,
}

impl DiskPotentials {
    pub fn new(cfg: ElectrodeConfig) -> Self {
        Self { cfg }
    }
}

impl ReferencePotentials for DiskPotentials {
    fn electrodes(&self) -> &ElectrodeConfig {
        &self.cfg
    }

    fn value(&self, n: usize, x: [f64; 2]) -> Result<f64> {
        u0_value(n, x, &self.cfg)
    }

    fn gradient(&self, n: usize, x: [f64; 2]) -> Result<[f64; 2]> {
        u0_gradient(n, x, &self.cfg)
    }
}

fn offsets(n: usize, x: [f64; 2], cfg: &ElectrodeConfig) -> Result<([f64; 2], [f64; 2])> {
    assert!(n >= 1 && n <= cfg.potential_count(), "potential index {n} out of range 1..={}", cfg.potential_count());
    let xn = cfg.position(n);
    let x0 = cfg.position(0);
    let dn = [x[0] - xn[0], x[1] - xn[1]];
    let d0 = [x[0] - x0[0], x[1] - x0[1]];
    if dn[0].hypot(dn[1]) < ELECTRODE_EPS {
        return Err(Error::EvalAtElectrode { electrode: n, point: x });
    }
    if d0[0].hypot(d0[1]) < ELECTRODE_EPS {
        return Err(Error::EvalAtElectrode { electrode: 0, point: x });
    }
    Ok((dn, d0))
}

/// `u_n(x) = −(1/π)(ln|x − x_n| − ln|x − x_0|)`.
pub fn u0_value(n: usize, x: [f64; 2], cfg: &ElectrodeConfig) -> Result<f64> {
    let (dn, d0) = offsets(n, x, cfg)?;
    let rn2 = dn[0] * dn[0] + dn[1] * dn[1];
    let r02 = d0[0] * d0[0] + d0[1] * d0[1];
    Ok(-0.5 / PI * (rn2 / r02).ln())
}

/// `∇u_n(x) = −(1/π)((x − x_n)/|x − x_n|² − (x − x_0)/|x − x_0|²)`.
pub fn u0_gradient(n: usize, x: [f64; 2], cfg: &ElectrodeConfig) -> Result<[f64; 2]> {
    let (dn, d0) = offsets(n, x, cfg)?;
    let rn2 = dn[0] * dn[0] + dn[1] * dn[1];
    let r02 = d0[0] * d0[0] + d0[1] * d0[1];
    Ok([-(dn[0] / rn2 - d0[0] / r02) / PI, -(dn[1] / rn2 - d0[1] / r02) / PI])
}

pub fn psi_value(k: usize, x: [f64; 2], cfg: &ElectrodeConfig) -> Result<f64> {
    DiskPotentials::new(cfg.clone()).psi(k, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn four_electrodes() -> ElectrodeConfig {
        ElectrodeConfig::from_degrees(&[1.0, 91.0, 181.0, 271.0]).unwrap()
    }

    fn random_interior(rng: &mut ChaCha8Rng, rmax: f64) -> [f64; 2] {
        let r = rmax * rng.gen::<f64>().sqrt();
        let t = rng.gen::<f64>() * 2.0 * PI;
        [r * t.cos(), r * t.sin()]
    }

    #[test]
    fn origin_is_equidistant() {
        let cfg = four_electrodes();
        for n in 1..=3 {
            assert_eq!(u0_value(n, [0.0, 0.0], &cfg).unwrap(), 0.0);
        }
    }

    #[test]
    fn vertical_axis_is_equipotential_for_opposite_pair() {
        let cfg = ElectrodeConfig::new(vec![0.0, PI]).unwrap();
        assert!(u0_value(1, [0.0, 0.3], &cfg).unwrap().abs() < 1e-15);
    }

    #[test]
    fn gradient_at_origin() {
        let cfg = ElectrodeConfig::new(vec![0.0, PI / 2.0]).unwrap();
        let g = u0_gradient(1, [0.0, 0.0], &cfg).unwrap();
        assert!((g[0] + 1.0 / PI).abs() < 1e-15, "{g:?}");
        assert!((g[1] - 1.0 / PI).abs() < 1e-15, "{g:?}");
    }

    #[test]
    fn gradient_matches_central_differences() {
        let cfg = four_electrodes();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-5;
        for _ in 0..20 {
            let x = random_interior(&mut rng, 0.9);
            for n in 1..=3 {
                let g = u0_gradient(n, x, &cfg).unwrap();
                let fx = (u0_value(n, [x[0] + h, x[1]], &cfg).unwrap() - u0_value(n, [x[0] - h, x[1]], &cfg).unwrap())
                    / (2.0 * h);
                let fy = (u0_value(n, [x[0], x[1] + h], &cfg).unwrap() - u0_value(n, [x[0], x[1] - h], &cfg).unwrap())
                    / (2.0 * h);
                assert!((g[0] - fx).abs() < 1e-7 && (g[1] - fy).abs() < 1e-7, "{x:?}");
            }
        }
    }

    #[test]
    fn potentials_are_harmonic() {
        let cfg = four_electrodes();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-4;
        for _ in 0..20 {
            let x = random_interior(&mut rng, 0.8);
            let g = |p: [f64; 2]| u0_gradient(2, p, &cfg).unwrap();
            // divergence of the analytic gradient by central differences
            let lap = (g([x[0] + h, x[1]])[0] - g([x[0] - h, x[1]])[0] + g([x[0], x[1] + h])[1]
                - g([x[0], x[1] - h])[1])
                / (2.0 * h);
            assert!(lap.abs() < 1e-6, "{lap}");
        }
    }

    #[test]
    fn swapping_electrodes_negates() {
        let cfg = ElectrodeConfig::from_degrees(&[10.0, 100.0]).unwrap();
        let swapped = ElectrodeConfig::from_degrees(&[100.0, 10.0]).unwrap();
        let x = [0.2, -0.4];
        assert!((u0_value(1, x, &cfg).unwrap() + u0_value(1, x, &swapped).unwrap()).abs() < 1e-15);
        let g = u0_gradient(1, x, &cfg).unwrap();
        let gs = u0_gradient(1, x, &swapped).unwrap();
        assert!((g[0] + gs[0]).abs() < 1e-15 && (g[1] + gs[1]).abs() < 1e-15);
    }

    #[test]
    fn evaluation_at_electrode_fails() {
        let cfg = four_electrodes();
        let x1 = cfg.position(1);
        assert!(matches!(u0_value(1, x1, &cfg), Err(Error::EvalAtElectrode { electrode: 1, .. })));
        let x0 = cfg.position(0);
        assert!(matches!(u0_gradient(2, x0, &cfg), Err(Error::EvalAtElectrode { electrode: 0, .. })));
    }

    #[test]
    fn duplicate_electrodes_rejected() {
        assert!(ElectrodeConfig::from_degrees(&[10.0, 370.0]).is_err());
        assert!(ElectrodeConfig::from_degrees(&[10.0]).is_err());
    }

    #[test]
    fn psi_family() {
        let cfg = four_electrodes();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = random_interior(&mut rng, 0.9);
            let p1 = psi_value(0, x, &cfg).unwrap();
            let p2 = psi_value(1, x, &cfg).unwrap();
            let p3 = psi_value(2, x, &cfg).unwrap();
            assert!(p1 >= 0.0);
            assert!(p2 * p2 <= p1 * p3 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn psi_vanishes_where_gradients_are_orthogonal() {
        // N = 2: bisect along a segment on which ψ_2 changes sign.
        let cfg = ElectrodeConfig::from_degrees(&[0.0, 120.0, 240.0]).unwrap();
        let f = |t: f64| psi_value(1, [t, 0.3], &cfg).unwrap();
        let (mut a, mut b) = (-0.9, 0.9);
        assert!(f(a) * f(b) < 0.0, "no sign change: {} {}", f(a), f(b));
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(a) * f(m) <= 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        let g1 = u0_gradient(1, [a, 0.3], &cfg).unwrap();
        let g2 = u0_gradient(2, [a, 0.3], &cfg).unwrap();
        assert!((g1[0] * g2[0] + g1[1] * g2[1]).abs() < 1e-12);
    }

    #[test]
    fn pair_index_ordering() {
        let p = PairIndex::new(4);
        assert_eq!(p.len(), 10);
        assert_eq!(p.pair(0), (1, 1));
        assert_eq!(p.pair(1), (1, 2));
        assert_eq!(p.pair(2), (2, 2));
        assert_eq!(p.pair(3), (1, 3));
        assert_eq!(p.index(2, 1), 1);
        let listed: Vec<_> = p.iter().collect();
        assert_eq!(listed.len(), 10);
        for (k, &(i, j)) in listed.iter().enumerate() {
            assert_eq!(p.pair(k), (i, j));
        }
    }

    proptest::proptest! {
        #[test]
        fn pair_index_bijection(n in 1usize..=16) {
            let p = PairIndex::new(n);
            for j in 1..=n {
                for i in 1..=j {
                    proptest::prop_assert_eq!(p.pair(p.index(i, j)), (i, j));
                }
            }
        }

        #[test]
        fn rotation_equivariance(phi in 0.0f64..6.28, r in 0.0f64..0.95, t in 0.0f64..6.28) {
            let cfg = four_electrodes();
            let rot = cfg.rotated(phi);
            let x = [r * t.cos(), r * t.sin()];
            let xr = [r * (t + phi).cos(), r * (t + phi).sin()];
            for n in 1..=3 {
                let a = u0_value(n, x, &cfg).unwrap();
                let b = u0_value(n, xr, &rot).unwrap();
                proptest::prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
            }
        }
    }
}
