//! Network topology and block-fading channel realizations.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, Error, Result};
use crate::linalg::CVec;
use crate::scalar::Real;

/// Large-scale path loss in dB at `distance` meters: `-35.3 - 37.6 log10(d)`.
pub fn path_loss_db<T: Real>(distance: T) -> Result<T> {
    if !(distance > T::zero()) || !distance.is_finite() {
        return Err(domain(format!("distance must be positive, got {distance}")));
    }
    Ok(T::lit(-35.3) - T::lit(37.6) * distance.log10())
}

/// Power ratio in dB to linear scale.
pub fn db_to_linear<T: Real>(db: T) -> T {
    T::lit(10.0).powf(db / T::lit(10.0))
}

/// Power in dBm to watts.
pub fn dbm_to_watts<T: Real>(dbm: T) -> T {
    db_to_linear(dbm) * T::lit(1e-3)
}

/// Devices placed in an annulus around the server.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology<T> {
    distances: Vec<T>,
    inner_radius: T,
    outer_radius: T,
}

impl<T: Real> Topology<T> {
    pub fn new(distances: Vec<T>, inner_radius: T, outer_radius: T) -> Result<Self> {
        if distances.is_empty() {
            return Err(domain("topology needs at least one device"));
        }
        if !(inner_radius > T::zero()) || !(inner_radius <= outer_radius) {
            return Err(domain(format!(
                "invalid annulus [{inner_radius}, {outer_radius}]"
            )));
        }
        if let Some(d) = distances
            .iter()
            .find(|&&d| !(d >= inner_radius && d <= outer_radius))
        {
            return Err(domain(format!(
                "distance {d} outside [{inner_radius}, {outer_radius}]"
            )));
        }
        Ok(Self {
            distances,
            inner_radius,
            outer_radius,
        })
    }

    /// `device_count` positions uniform by area over the annulus.
    pub fn sample<R: Rng + ?Sized>(
        device_count: usize,
        inner_radius: T,
        outer_radius: T,
        rng: &mut R,
    ) -> Result<Self> {
        let r0 = inner_radius.to_f64().unwrap_or(f64::NAN);
        let r1 = outer_radius.to_f64().unwrap_or(f64::NAN);
        let distances = (0..device_count)
            .map(|_| {
                let u: f64 = rng.random();
                let d = (r0 * r0 + u * (r1 * r1 - r0 * r0)).sqrt();
                T::lit(d).max(inner_radius).min(outer_radius)
            })
            .collect();
        Self::new(distances, inner_radius, outer_radius)
    }

    pub fn device_count(&self) -> usize {
        self.distances.len()
    }

    pub fn distances(&self) -> &[T] {
        &self.distances
    }

    pub fn inner_radius(&self) -> T {
        self.inner_radius
    }

    pub fn outer_radius(&self) -> T {
        self.outer_radius
    }

    /// Linear path-loss power gain of every device.
    pub fn path_gains(&self) -> Vec<T> {
        self.distances
            .iter()
            .map(|&d| db_to_linear(path_loss_db(d).expect("validated distance")))
            .collect()
    }
}

/// Channel vectors `h_k` of all devices for one communication block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization<T> {
    vectors: Vec<CVec<T>>,
    pub round_index: usize,
}

impl<T: Real> ChannelRealization<T> {
    pub fn new(vectors: Vec<CVec<T>>, round_index: usize) -> Result<Self> {
        let n = vectors.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(domain("channel realization needs at least one device and antenna"));
        }
        for v in &vectors {
            if v.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    actual: v.len(),
                });
            }
            if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Data("non-finite channel coefficient".into()));
            }
        }
        Ok(Self {
            vectors,
            round_index,
        })
    }

    pub fn device_count(&self) -> usize {
        self.vectors.len()
    }

    pub fn antenna_count(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn channel(&self, k: usize) -> &[Complex<T>] {
        &self.vectors[k]
    }

    pub fn vectors(&self) -> &[CVec<T>] {
        &self.vectors
    }
}

/// Standard circularly-symmetric complex Gaussian vector `CN(0, I)`.
pub fn standard_complex_gaussian<T: Real, R: Rng + ?Sized>(len: usize, rng: &mut R) -> CVec<T> {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    (0..len)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex::new(T::lit(re * scale), T::lit(im * scale))
        })
        .collect()
}

/// Rayleigh block fading: `h_k = sqrt(beta_k) * CN(0, I)`.
pub fn draw_channels<T: Real>(
    topology: &Topology<T>,
    antenna_count: usize,
    seed: u64,
) -> Result<ChannelRealization<T>> {
    if antenna_count == 0 {
        return Err(domain("antenna count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors = topology
        .path_gains()
        .into_iter()
        .map(|gain| {
            let amp = gain.sqrt();
            standard_complex_gaussian::<T, _>(antenna_count, &mut rng)
                .into_iter()
                .map(|z| z * amp)
                .collect()
        })
        .collect();
    ChannelRealization::new(vectors, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cnorm_sqr;

    #[test]
    fn path_loss_reference_points() {
        assert!((path_loss_db(1.0f64).unwrap() + 35.3).abs() < 1e-12);
        assert!((path_loss_db(100.0f64).unwrap() + 110.5).abs() < 1e-12);
        assert!((path_loss_db(10.0f64).unwrap() + 72.9).abs() < 1e-12);
        assert!(path_loss_db(0.0f64).is_err());
        assert!(path_loss_db(-3.0f64).is_err());
    }

    #[test]
    fn unit_conversions() {
        assert!((dbm_to_watts(0.0f64) - 1e-3).abs() < 1e-18);
        assert!((db_to_linear(30.0f64) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn topology_rejects_out_of_annulus() {
        assert!(Topology::new(vec![10.0], 50.0, 250.0).is_err());
        assert!(Topology::new(Vec::<f64>::new(), 50.0, 250.0).is_err());
        assert!(Topology::new(vec![50.0, 250.0], 50.0, 250.0).is_ok());
    }

    #[test]
    fn sampled_topology_stays_in_annulus() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = Topology::<f64>::sample(500, 50.0, 250.0, &mut rng).unwrap();
        assert!(t.distances().iter().all(|&d| (50.0..=250.0).contains(&d)));
        // uniform by area: median radius sqrt((50^2 + 250^2)/2) ~ 180 m
        let mut d = t.distances().to_vec();
        d.sort_by(f64::total_cmp);
        assert!((d[250] - 180.3).abs() < 12.0, "median {}", d[250]);
    }

    #[test]
    fn same_seed_same_channels() {
        let t = Topology::new(vec![60.0, 120.0, 240.0], 50.0, 250.0).unwrap();
        let a = draw_channels(&t, 4, 99).unwrap();
        let b = draw_channels(&t, 4, 99).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, draw_channels(&t, 4, 100).unwrap());
    }

    #[test]
    fn unit_distance_second_moment_matches_path_gain() {
        let t = Topology::new(vec![1.0], 1.0, 1.0).unwrap();
        let n = 4;
        let draws = 20_000;
        let mut acc = 0.0;
        for s in 0..draws {
            acc += cnorm_sqr(draw_channels(&t, n, s).unwrap().channel(0));
        }
        let expected = n as f64 * db_to_linear(-35.3);
        let rel = (acc / draws as f64 - expected).abs() / expected;
        assert!(rel < 0.03, "relative error {rel}");
    }

    #[test]
    fn f32_channels_are_finite() {
        let t = Topology::new(vec![250.0f32], 50.0, 250.0).unwrap();
        let h = draw_channels(&t, 4, 1).unwrap();
        assert!(h.channel(0).iter().all(|z| z.re.is_finite() && z.norm_sqr() > 0.0));
    }
}
