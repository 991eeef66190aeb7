//! Transport of the disk potentials through a conformal map.
//!
//! If `Φ` maps the physical domain conformally onto the unit disk, the
//! reference potentials of the physical domain are `û_n ∘ Φ`, where `û_n` are
//! the disk potentials for electrodes at `Φ(x_n)`. Gradients follow from the
//! chain rule with the complex derivative `Φ'`.

use nalgebra::Complex;

use super::{DiskPotentials, ElectrodeConfig, ReferencePotentials};
use crate::error::{Error, Result};

type C64 = Complex<f64>;

const MIN_DERIVATIVE: f64 = 1e-12;

pub trait ConformalMap: Send + Sync {
    fn map(&self, z: C64) -> C64;
    fn derivative(&self, z: C64) -> C64;
}

/// Disk automorphism `Φ(z) = e^{iφ} (z − a) / (1 − ā z)`, `|a| < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mobius {
    a: C64,
    rotation: C64,
}

impl Mobius {
    pub fn new(a: [f64; 2], phi: f64) -> Result<Self> {
        let a = C64::new(a[0], a[1]);
        if !(a.norm() < 1.0) {
            return Err(Error::MapDegenerate { point: [a.re, a.im], derivative: 0.0 });
        }
        Ok(Self { a, rotation: C64::new(phi.cos(), phi.sin()) })
    }

    pub fn identity() -> Self {
        Self { a: C64::new(0.0, 0.0), rotation: C64::new(1.0, 0.0) }
    }

    pub fn rotation(phi: f64) -> Self {
        Self { a: C64::new(0.0, 0.0), rotation: C64::new(phi.cos(), phi.sin()) }
    }

    pub fn inverse_map(&self, w: C64) -> C64 {
        let v = w / self.rotation;
        (v + self.a) / (C64::new(1.0, 0.0) + self.a.conj() * v)
    }
}

impl ConformalMap for Mobius {
    fn map(&self, z: C64) -> C64 {
        self.rotation * (z - self.a) / (C64::new(1.0, 0.0) - self.a.conj() * z)
    }

    fn derivative(&self, z: C64) -> C64 {
        let d = C64::new(1.0, 0.0) - self.a.conj() * z;
        self.rotation * (1.0 - self.a.norm_sqr()) / (d * d)
    }
}

/// Reference potentials `û_n ∘ Φ` on the physical domain.
pub struct TransportedPotentials<M> {
    map: M,
    physical: ElectrodeConfig,
    image: DiskPotentials,
}

impl<M: ConformalMap> TransportedPotentials<M> {
    pub fn map(&self) -> &M {
        &self.map
    }

    pub fn image_electrodes(&self) -> &ElectrodeConfig {
        self.image.electrodes()
    }
}

/// Builds evaluators for `û_n ∘ Φ` given electrodes on the physical boundary.
///
/// `Φ'` is sampled at the electrodes and on a polar grid of the unit disk;
/// a vanishing derivative there is reported as [`Error::MapDegenerate`].
pub fn transport_potentials<M: ConformalMap>(map: M, cfg: &ElectrodeConfig) -> Result<TransportedPotentials<M>> {
    let mut samples: Vec<[f64; 2]> = cfg.positions().to_vec();
    for i in 0..8 {
        let r = i as f64 / 8.0;
        for j in 0..16 {
            let t = j as f64 * std::f64::consts::PI / 8.0;
            samples.push([r * t.cos(), r * t.sin()]);
        }
    }
    for p in samples {
        let d = map.derivative(C64::new(p[0], p[1])).norm();
        if !(d >= MIN_DERIVATIVE) {
            return Err(Error::MapDegenerate { point: p, derivative: d });
        }
    }
    let images = cfg
        .positions()
        .iter()
        .map(|p| {
            let w = map.map(C64::new(p[0], p[1]));
            [w.re, w.im]
        })
        .collect();
    let image = DiskPotentials::new(ElectrodeConfig::from_positions(images)?);
    Ok(TransportedPotentials { map, physical: cfg.clone(), image })
}

impl<M: ConformalMap> ReferencePotentials for TransportedPotentials<M> {
    fn electrodes(&self) -> &ElectrodeConfig {
        &self.physical
    }

    fn value(&self, n: usize, x: [f64; 2]) -> Result<f64> {
        let w = self.map.map(C64::new(x[0], x[1]));
        self.image.value(n, [w.re, w.im])
    }

    fn gradient(&self, n: usize, x: [f64; 2]) -> Result<[f64; 2]> {
        let z = C64::new(x[0], x[1]);
        let w = self.map.map(z);
        let g = self.image.gradient(n, [w.re, w.im])?;
        // Φ = U + iV with Φ' = p + iq: ∇(û∘Φ) = Jᵀ ∇û, J = [[p, -q], [q, p]].
        let d = self.map.derivative(z);
        Ok([d.re * g[0] + d.im * g[1], -d.im * g[0] + d.re * g[1]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{u0_gradient, u0_value};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> ElectrodeConfig {
        ElectrodeConfig::from_degrees(&[1.0, 91.0, 181.0, 271.0]).unwrap()
    }

    fn points(n: usize, seed: u64) -> Vec<[f64; 2]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let r = 0.85 * rng.gen::<f64>().sqrt();
                let t = rng.gen::<f64>() * std::f64::consts::TAU;
                [r * t.cos(), r * t.sin()]
            })
            .collect()
    }

    #[test]
    fn identity_map_is_exact() {
        let c = cfg();
        let t = transport_potentials(Mobius::identity(), &c).unwrap();
        for x in points(30, 1) {
            for n in 1..=3 {
                assert_eq!(t.value(n, x).unwrap(), u0_value(n, x, &c).unwrap());
                assert_eq!(t.gradient(n, x).unwrap(), u0_gradient(n, x, &c).unwrap());
            }
        }
        let zero_a = Mobius::new([0.0, 0.0], 0.0).unwrap();
        let t = transport_potentials(zero_a, &c).unwrap();
        for x in points(10, 2) {
            assert_eq!(t.gradient(1, x).unwrap(), u0_gradient(1, x, &c).unwrap());
        }
    }

    #[test]
    fn transported_potentials_are_harmonic() {
        let c = cfg();
        let t = transport_potentials(Mobius::new([0.3, 0.0], 0.0).unwrap(), &c).unwrap();
        let h = 1e-4;
        for x in points(50, 3) {
            for n in 1..=3 {
                let g = |p: [f64; 2]| t.gradient(n, p).unwrap();
                let lap = (g([x[0] + h, x[1]])[0] - g([x[0] - h, x[1]])[0] + g([x[0], x[1] + h])[1]
                    - g([x[0], x[1] - h])[1])
                    / (2.0 * h);
                assert!(lap.abs() < 1e-5, "{lap} at {x:?}");
            }
        }
    }

    #[test]
    fn transported_gradient_matches_differences() {
        let c = cfg();
        let t = transport_potentials(Mobius::new([0.2, -0.35], 0.7).unwrap(), &c).unwrap();
        let h = 1e-6;
        for x in points(20, 4) {
            let g = t.gradient(2, x).unwrap();
            let fx = (t.value(2, [x[0] + h, x[1]]).unwrap() - t.value(2, [x[0] - h, x[1]]).unwrap()) / (2.0 * h);
            let fy = (t.value(2, [x[0], x[1] + h]).unwrap() - t.value(2, [x[0], x[1] - h]).unwrap()) / (2.0 * h);
            assert!((g[0] - fx).abs() < 1e-6 && (g[1] - fy).abs() < 1e-6);
        }
    }

    #[test]
    fn disk_automorphism_preserves_the_potentials_up_to_a_constant() {
        // Both sides are harmonic with identical point-source Neumann data.
        let c = cfg();
        let t = transport_potentials(Mobius::new([0.3, 0.1], 0.4).unwrap(), &c).unwrap();
        for x in points(20, 5) {
            let a = t.gradient(1, x).unwrap();
            let b = u0_gradient(1, x, &c).unwrap();
            assert!((a[0] - b[0]).abs() < 1e-11 && (a[1] - b[1]).abs() < 1e-11);
        }
    }

    #[test]
    fn inverse_map_roundtrip() {
        let m = Mobius::new([0.4, 0.2], 1.1).unwrap();
        for p in points(10, 6) {
            let z = C64::new(p[0], p[1]);
            assert!((m.inverse_map(m.map(z)) - z).norm() < 1e-14);
        }
    }

    struct Collapse;

    impl ConformalMap for Collapse {
        fn map(&self, z: C64) -> C64 {
            z * z * 0.5
        }
        fn derivative(&self, z: C64) -> C64 {
            z
        }
    }

    #[test]
    fn vanishing_derivative_is_rejected() {
        assert!(matches!(transport_potentials(Collapse, &cfg()), Err(Error::MapDegenerate { .. })));
        assert!(Mobius::new([1.0, 0.0], 0.0).is_err());
    }
}
