//! Synthetic Rydberg-array scenes: physical gains, pilots, magnitude-only
//! measurements and sparse ±δ outlier corruption.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;

use crate::error::{param, Error, Result};
use crate::rng::{self, Component, Stream};
use crate::scalar::{abs2, cplx, deg_to_rad, lit, modulus, unit_phasor, Complex, Real};

/// Constants entering the Rabi-frequency gain.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalConstants<T> {
    /// Reduced Planck constant, J·s.
    pub hbar: T,
    /// Elementary charge, C.
    pub elementary_charge: T,
    /// Bohr radius, m.
    pub bohr_radius: T,
    /// Transition dipole moment, C·m.
    pub dipole_moment: [T; 3],
}

/// Dipole moment of the Cs 52D5/2 → 53P3/2 transition in units of q·a0.
pub const CS_DIPOLE_QA0: f64 = 1785.9;

impl<T: Real> Default for PhysicalConstants<T> {
    fn default() -> Self {
        let hbar = lit(1.0546e-34);
        let q: T = lit(1.602e-19);
        let a0: T = lit(5.292e-11);
        Self {
            hbar,
            elementary_charge: q,
            bohr_radius: a0,
            dipole_moment: [T::zero(), lit::<T>(CS_DIPOLE_QA0) * q * a0, T::zero()],
        }
    }
}

impl<T: Real> PhysicalConstants<T> {
    /// `μ_eg^T ε / ħ` for a real polarization direction.
    pub fn coupling(&self, polarization: &[T; 3]) -> T {
        let dot = self
            .dipole_moment
            .iter()
            .zip(polarization)
            .fold(T::zero(), |acc, (&m, &e)| acc + m * e);
        dot / self.hbar
    }
}

/// Ground-truth physical scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene<T> {
    pub num_sensors: usize,
    pub num_snapshots: usize,
    pub doas_deg: Vec<T>,
    /// Per-user transmit power `P_k`, W.
    pub user_power: T,
    /// `P_b / P_k`.
    pub lo_power_ratio: T,
    /// Per-user path loss `ρ_k`.
    pub path_loss: Vec<T>,
    /// Variance of the circular complex Gaussian shot noise.
    pub noise_var: T,
    /// Fixed polarization directions; drawn from `seed` when absent.
    pub polarization: Option<Polarization<T>>,
    pub seed: u64,
}

/// Polarization directions of the users and of the LO reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Polarization<T> {
    pub users: Vec<[T; 3]>,
    pub lo: [T; 3],
}

impl<T: Real> Polarization<T> {
    /// One i.i.d. N(0, 1/3) direction per user, then one for the LO.
    pub fn draw(num_users: usize, rng: &mut Stream) -> Self {
        let users = (0..num_users).map(|_| draw_polarization(rng)).collect();
        Self {
            users,
            lo: draw_polarization(rng),
        }
    }
}

impl<T: Real> Scene<T> {
    /// Scene with unit path loss, the usual LO ratio of 10 and the given seed.
    pub fn new(
        num_sensors: usize,
        num_snapshots: usize,
        doas_deg: Vec<T>,
        user_power: T,
        noise_var: T,
        seed: u64,
    ) -> Self {
        let path_loss = vec![T::one(); doas_deg.len()];
        Self {
            num_sensors,
            num_snapshots,
            doas_deg,
            user_power,
            lo_power_ratio: lit(10.0),
            path_loss,
            noise_var,
            polarization: None,
            seed,
        }
    }

    /// The scene's polarization directions. They belong to the scene, so every
    /// trial of a Monte-Carlo run sees the same draw.
    pub fn polarization(&self) -> Polarization<T> {
        self.polarization.clone().unwrap_or_else(|| {
            let mut rng = rng::substream(self.seed, Component::Polarization, 0);
            Polarization::draw(self.num_users(), &mut rng)
        })
    }

    /// Per-user gains `α_k` and the LO bias `b` implied by the polarization draw.
    pub fn gains_and_bias(
        &self,
        constants: &PhysicalConstants<T>,
    ) -> (Vec<Complex<T>>, Complex<T>) {
        let pol = self.polarization();
        let gains = self
            .path_loss
            .iter()
            .zip(&pol.users)
            .map(|(&rho, e)| compute_gain(self.user_power, rho, e, constants))
            .collect();
        (gains, compute_bias(self.bias_power(), &pol.lo, constants))
    }

    pub fn num_users(&self) -> usize {
        self.doas_deg.len()
    }

    pub fn bias_power(&self) -> T {
        self.lo_power_ratio * self.user_power
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_users();
        if k == 0 || self.num_sensors == 0 || self.num_snapshots == 0 {
            return Err(Error::Dimension(format!(
                "users, sensors and snapshots must be positive (K={k}, M={}, P={})",
                self.num_sensors, self.num_snapshots
            )));
        }
        if k >= self.num_sensors {
            return Err(Error::Dimension(format!(
                "need fewer users than sensors for a noise subspace (K={k}, M={})",
                self.num_sensors
            )));
        }
        if self.path_loss.len() != k {
            return Err(Error::Dimension(format!(
                "path_loss has {} entries for {k} users",
                self.path_loss.len()
            )));
        }
        let ninety = lit::<T>(90.0);
        for (i, &d) in self.doas_deg.iter().enumerate() {
            if !(d > -ninety && d < ninety) {
                return Err(param(
                    "doas_deg",
                    format!("{} is outside (-90, 90)", crate::scalar::to_f64(d)),
                ));
            }
            if self.doas_deg[..i].contains(&d) {
                return Err(param("doas_deg", "directions of arrival must be distinct"));
            }
        }
        if !(self.user_power > T::zero()) {
            return Err(param("user_power", "must be positive"));
        }
        if !(self.lo_power_ratio >= T::zero()) {
            return Err(param("lo_power_ratio", "must be nonnegative"));
        }
        if self.path_loss.iter().any(|&r| !(r > T::zero())) {
            return Err(param("path_loss", "must be positive"));
        }
        if !(self.noise_var >= T::zero()) {
            return Err(param("noise_var", "must be nonnegative"));
        }
        if let Some(pol) = &self.polarization {
            if pol.users.len() != k {
                return Err(Error::Dimension(format!(
                    "{} user polarizations for {k} users",
                    pol.users.len()
                )));
            }
        }
        Ok(())
    }
}

/// Sparse corruption request: `round(η·M·P)` entries perturbed by ±δ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierSpec<T> {
    pub fraction: T,
    pub magnitude: T,
}

impl<T: Real> OutlierSpec<T> {
    pub fn new(fraction: T, magnitude: T) -> Self {
        Self {
            fraction,
            magnitude,
        }
    }

    pub fn none() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fraction >= T::zero() && self.fraction <= T::one()) {
            return Err(param("eta", "outlier fraction must lie in [0, 1]"));
        }
        if !(self.magnitude >= T::zero()) {
            return Err(param("delta", "outlier magnitude must be nonnegative"));
        }
        Ok(())
    }

    /// Number of corrupted entries in an `entries`-element matrix, rounding half up.
    pub fn count(&self, entries: usize) -> usize {
        let n = crate::scalar::to_f64(self.fraction) * entries as f64;
        ((n + 0.5).floor() as usize).min(entries)
    }
}

/// One synthesized measurement realization.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet<T: Real> {
    /// Pilot matrix `S`, K×P.
    pub pilots: DMatrix<Complex<T>>,
    /// Known LO bias, identical for every sensor.
    pub bias: Complex<T>,
    /// Array manifold `A`, M×K; row `m` is the true channel `h_m`.
    pub manifold: DMatrix<Complex<T>>,
    /// Clean magnitudes `Z`, M×P.
    pub clean: DMatrix<T>,
    /// Observed magnitudes `Z̃`, M×P.
    pub corrupted: DMatrix<T>,
    /// Corrupted (sensor, snapshot) positions, sorted.
    pub outlier_support: Vec<(usize, usize)>,
    /// Per-user complex gains `α_k`.
    pub gains: Vec<Complex<T>>,
}

impl<T: Real> MeasurementSet<T> {
    /// True channel of sensor `m`.
    pub fn channel(&self, m: usize) -> DVector<Complex<T>> {
        self.manifold.row(m).transpose()
    }

    /// Replaces the corrupted matrix with a fresh ±δ corruption of `clean`.
    pub fn corrupt(&mut self, spec: &OutlierSpec<T>, rng: &mut Stream) -> Result<()> {
        let (z, support) = inject_outliers(&self.clean, spec, rng)?;
        self.corrupted = z;
        self.outlier_support = support;
        Ok(())
    }
}

/// Physical ULA response `alpha · exp(-jπ m sin θ)`, half-wavelength spacing.
pub fn steering_vector<T: Real>(
    theta_deg: T,
    num_sensors: usize,
    alpha: Complex<T>,
) -> DVector<Complex<T>> {
    let phase = -T::pi() * deg_to_rad(theta_deg).sin();
    DVector::from_iterator(
        num_sensors,
        (0..num_sensors).map(|m| alpha * unit_phasor(phase * lit(m as f64))),
    )
}

/// User gain `α = μ_eg^T ε √P_k ρ_k / ħ`.
pub fn compute_gain<T: Real>(
    user_power: T,
    path_loss: T,
    polarization: &[T; 3],
    constants: &PhysicalConstants<T>,
) -> Complex<T> {
    cplx(
        constants.coupling(polarization) * user_power.sqrt() * path_loss,
        T::zero(),
    )
}

/// LO bias `b = μ_eg^T ε_LO √P_b / ħ`.
pub fn compute_bias<T: Real>(
    bias_power: T,
    lo_polarization: &[T; 3],
    constants: &PhysicalConstants<T>,
) -> Complex<T> {
    cplx(
        constants.coupling(lo_polarization) * bias_power.sqrt(),
        T::zero(),
    )
}

/// Polarization direction with i.i.d. N(0, 1/3) components.
pub fn draw_polarization<T: Real>(rng: &mut Stream) -> [T; 3] {
    let s = (1.0f64 / 3.0).sqrt();
    [
        rng::gaussian(rng, s),
        rng::gaussian(rng, s),
        rng::gaussian(rng, s),
    ]
}

/// `|s_p^H h_m + b + n_{m,p}|` for every sensor `m` (row of `manifold`) and snapshot `p`.
pub fn magnitudes<T: Real>(
    manifold: &DMatrix<Complex<T>>,
    pilots: &DMatrix<Complex<T>>,
    bias: Complex<T>,
    noise: Option<&DMatrix<Complex<T>>>,
) -> DMatrix<T> {
    let (m, k) = manifold.shape();
    let p = pilots.ncols();
    assert_eq!(
        pilots.nrows(),
        k,
        "pilot rows must equal the number of users"
    );
    DMatrix::from_fn(m, p, |i, j| {
        let mut y = bias;
        for u in 0..k {
            y += pilots[(u, j)].conj() * manifold[(i, u)];
        }
        if let Some(n) = noise {
            y += n[(i, j)];
        }
        modulus(y)
    })
}

/// Draws pilots and noise for `trial` and returns clean magnitudes with an
/// empty outlier support. Gains and bias come from the scene's polarization.
pub fn synthesize_measurements<T: Real>(
    scene: &Scene<T>,
    constants: &PhysicalConstants<T>,
    trial: u64,
) -> Result<MeasurementSet<T>> {
    scene.validate()?;
    let (m, k, p) = (scene.num_sensors, scene.num_users(), scene.num_snapshots);

    let (gains, bias) = scene.gains_and_bias(constants);

    let mut manifold = DMatrix::zeros(m, k);
    for (u, (&theta, &alpha)) in scene.doas_deg.iter().zip(&gains).enumerate() {
        manifold.set_column(u, &steering_vector(theta, m, alpha));
    }

    let mut pilot_rng = rng::substream(scene.seed, Component::Pilots, trial);
    let pilots = DMatrix::from_fn(k, p, |_, _| rng::complex_gaussian(&mut pilot_rng, 1.0));

    let noise_var = crate::scalar::to_f64(scene.noise_var);
    let noise = (noise_var > 0.0).then(|| {
        let mut noise_rng = rng::substream(scene.seed, Component::Noise, trial);
        DMatrix::from_fn(m, p, |_, _| {
            rng::complex_gaussian(&mut noise_rng, noise_var)
        })
    });

    let clean = magnitudes(&manifold, &pilots, bias, noise.as_ref());
    Ok(MeasurementSet {
        pilots,
        bias,
        manifold,
        corrupted: clean.clone(),
        clean,
        outlier_support: Vec::new(),
        gains,
    })
}

/// Corrupted matrix and the sorted `(row, column)` positions that were perturbed.
pub type Corruption<T> = (DMatrix<T>, Vec<(usize, usize)>);

/// Perturbs `round(η·M·P)` distinct entries of `clean` by an independent fair ±δ.
///
/// No clamping: corrupted entries can go negative.
pub fn inject_outliers<T: Real>(
    clean: &DMatrix<T>,
    spec: &OutlierSpec<T>,
    rng: &mut Stream,
) -> Result<Corruption<T>> {
    spec.validate()?;
    let rows = clean.nrows();
    let total = clean.len();
    let count = spec.count(total);
    let mut out = clean.clone();
    let mut support = Vec::with_capacity(count);
    if count == 0 {
        return Ok((out, support));
    }
    let picks = index::sample(rng, total, count);
    for flat in picks.iter() {
        let sign = if rng.random_bool(0.5) {
            T::one()
        } else {
            -T::one()
        };
        // column-major flat index
        let (i, j) = (flat % rows, flat / rows);
        out[(i, j)] += sign * spec.magnitude;
        support.push((i, j));
    }
    support.sort_unstable();
    Ok((out, support))
}

/// How the sweep SNR is tied to the noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SnrConvention {
    /// Mean received power of the scene's users, `mean_k |α_k|² / σ²`.
    #[default]
    ReceivedPower,
    /// Received power averaged over polarization draws: `P_k (μ₂/ħ)² E[ε₂²] / σ²` with `E[ε₂²] = 1/3`.
    NominalPower,
    /// `P_k μ₂ / (3ħ σ²)` taken term by term.
    Literal,
    /// Plain transmit-power ratio `P_k / σ²`.
    PowerRatio,
}

impl SnrConvention {
    pub const ALL: [Self; 4] = [
        Self::ReceivedPower,
        Self::NominalPower,
        Self::Literal,
        Self::PowerRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::ReceivedPower => "received-power",
            Self::NominalPower => "nominal-power",
            Self::Literal => "literal",
            Self::PowerRatio => "power-ratio",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    /// Signal term whose ratio to σ² defines the SNR.
    fn signal<T: Real>(self, scene: &Scene<T>, constants: &PhysicalConstants<T>) -> T {
        let three = lit::<T>(3.0);
        let p = scene.user_power;
        match self {
            Self::ReceivedPower => {
                let (gains, _) = scene.gains_and_bias(constants);
                let total = gains.iter().fold(T::zero(), |acc, g| acc + abs2(*g));
                total / lit(gains.len() as f64)
            }
            Self::NominalPower => {
                let g = constants.dipole_moment[1] / constants.hbar;
                p * g * g / three
            }
            Self::Literal => p * constants.dipole_moment[1] / (three * constants.hbar),
            Self::PowerRatio => p,
        }
    }
}

/// SNR of `scene` in dB.
pub fn snr_db<T: Real>(
    scene: &Scene<T>,
    constants: &PhysicalConstants<T>,
    convention: SnrConvention,
) -> Result<T> {
    if scene.noise_var <= T::zero() {
        return Err(Error::InfiniteSnr);
    }
    let ratio = convention.signal(scene, constants) / scene.noise_var;
    Ok(lit::<T>(10.0) * ratio.log10())
}

/// Noise variance that puts `scene` at `snr_db`; the scene's own noise level is ignored.
pub fn noise_var_for_snr<T: Real>(
    snr_db: T,
    scene: &Scene<T>,
    constants: &PhysicalConstants<T>,
    convention: SnrConvention,
) -> T {
    convention.signal(scene, constants) / lit::<T>(10.0).powf(snr_db / lit(10.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn constants_match_configured_values() {
        let k = PhysicalConstants::<f64>::default();
        assert!((k.hbar - 1.0546e-34).abs() < 1e-38);
        assert_eq!(k.elementary_charge, 1.602e-19);
        assert_eq!(k.bohr_radius, 5.292e-11);
        assert_eq!(k.dipole_moment[0], 0.0);
        assert_eq!(k.dipole_moment[2], 0.0);
        assert_relative_eq!(
            k.dipole_moment[1],
            1785.9 * 1.602e-19 * 5.292e-11,
            max_relative = 1e-15
        );
    }

    #[test]
    fn steering_vector_examples() {
        let v = steering_vector(0.0, 4, c(1.0, 0.0));
        for z in v.iter() {
            assert!((z - c(1.0, 0.0)).norm() < 1e-15);
        }
        let v = steering_vector(90.0, 2, c(1.0, 0.0));
        assert!((v[1] - c(-1.0, 0.0)).norm() < 1e-15);
        let v = steering_vector(30.0, 3, c(2.0, 0.0));
        let expected = [c(2.0, 0.0), c(0.0, -2.0), c(-2.0, 0.0)];
        for (z, e) in v.iter().zip(expected) {
            assert!((z - e).norm() < 1e-14, "{z} vs {e}");
        }
    }

    #[test]
    fn gain_examples() {
        let k = PhysicalConstants::<f64>::default();
        // 1785.9 * 1.602e-19 * 5.292e-11 / 1.0546e-34, hand-evaluated
        let g = compute_gain(1.0, 1.0, &[0.0, 1.0, 0.0], &k);
        assert_relative_eq!(g.re, 1.435_660_387_4e8, max_relative = 1e-9);
        assert_eq!(g.im, 0.0);
        assert_eq!(compute_gain(0.0, 1.0, &[0.0, 1.0, 0.0], &k).re, 0.0);
        assert_eq!(compute_gain(1.0, 1.0, &[1.0, 0.0, 0.0], &k).re, 0.0);
    }

    #[test]
    fn bias_examples() {
        let k = PhysicalConstants::<f64>::default();
        let ten = compute_bias(10.0, &[0.0, 1.0, 0.0], &k);
        assert_relative_eq!(
            ten.re,
            10f64.sqrt() * 1.435_660_387_4e8,
            max_relative = 1e-9
        );
        assert_eq!(compute_bias(1.0, &[0.0, 0.0, 1.0], &k).re, 0.0);
        let one = compute_bias(1.0, &[0.0, 1.0, 0.0], &k);
        let four = compute_bias(4.0, &[0.0, 1.0, 0.0], &k);
        assert_eq!(four.re, 2.0 * one.re);
    }

    #[test]
    fn polarization_moments() {
        let mut rng = rng::substream(11, Component::Polarization, 0);
        let n = 1_000_000;
        let mut sum = [0.0f64; 3];
        let mut sq = [0.0f64; 3];
        for _ in 0..n {
            let e: [f64; 3] = draw_polarization(&mut rng);
            for i in 0..3 {
                sum[i] += e[i];
                sq[i] += e[i] * e[i];
            }
        }
        for i in 0..3 {
            let mean = sum[i] / n as f64;
            let var = sq[i] / n as f64 - mean * mean;
            assert!(mean.abs() < 0.005, "mean {mean}");
            assert!((var - 1.0 / 3.0).abs() < 0.01, "var {var}");
        }
        let a: [f64; 3] = draw_polarization(&mut rng::substream(5, Component::Polarization, 2));
        let b: [f64; 3] = draw_polarization(&mut rng::substream(5, Component::Polarization, 2));
        assert_eq!(a, b);
    }

    fn scene(noise_var: f64, seed: u64) -> Scene<f64> {
        Scene::new(8, 40, vec![40.0, -60.0], 1e-18, noise_var, seed)
    }

    #[test]
    fn constant_pilot_noiseless_single_user() {
        let alpha = c(0.3, -0.1);
        let a = DMatrix::from_column_slice(5, 1, steering_vector(0.0, 5, alpha).as_slice());
        let s = DMatrix::from_element(1, 7, c(1.0, 0.0));
        let z = magnitudes(&a, &s, c(0.0, 0.0), None);
        for v in z.iter() {
            assert_relative_eq!(*v, alpha.norm(), max_relative = 1e-14);
        }
    }

    #[test]
    fn noiseless_magnitudes_match_brute_force() {
        let ms = synthesize_measurements(&scene(0.0, 3), &PhysicalConstants::default(), 0).unwrap();
        let (m, p) = ms.clean.shape();
        for i in 0..m {
            for j in 0..p {
                // a_m^T s_p^* + b, written out without the library helper
                let mut y = ms.bias;
                for u in 0..2 {
                    let theta = [40.0f64, -60.0][u].to_radians();
                    let a = ms.gains[u]
                        * Complex::from_polar(1.0, -std::f64::consts::PI * i as f64 * theta.sin());
                    y += ms.pilots[(u, j)].conj() * a;
                }
                assert_relative_eq!(ms.clean[(i, j)], y.norm(), max_relative = 1e-12);
            }
        }
        assert_eq!(ms.clean, ms.corrupted);
        assert!(ms.outlier_support.is_empty());
    }

    #[test]
    fn magnitudes_nonnegative_for_random_scenes() {
        for seed in 0..100 {
            let ms =
                synthesize_measurements(&scene(1e-3, seed), &PhysicalConstants::default(), seed)
                    .unwrap();
            assert!(ms.clean.iter().all(|&z| z >= 0.0));
        }
    }

    #[test]
    fn synthesis_rejects_bad_dimensions() {
        let mut s = scene(0.0, 0);
        s.num_sensors = 2;
        assert!(matches!(
            synthesize_measurements(&s, &PhysicalConstants::default(), 0),
            Err(Error::Dimension(_))
        ));
        let mut s = scene(0.0, 0);
        s.num_snapshots = 0;
        assert!(synthesize_measurements(&s, &PhysicalConstants::default(), 0).is_err());
        let mut s = scene(0.0, 0);
        s.doas_deg = vec![10.0, 10.0];
        assert!(synthesize_measurements(&s, &PhysicalConstants::default(), 0).is_err());
    }

    #[test]
    fn outlier_examples() {
        let clean = DMatrix::from_fn(32, 100, |i, j| 0.1 + (i * 100 + j) as f64 * 1e-3);
        let mut rng = rng::substream(1, Component::Outliers, 0);

        let (z, s) = inject_outliers(&clean, &OutlierSpec::new(0.0, 3.0), &mut rng).unwrap();
        assert_eq!(z, clean);
        assert!(s.is_empty());

        let (z, s) = inject_outliers(&clean, &OutlierSpec::new(1.0, 0.0), &mut rng).unwrap();
        assert_eq!(z, clean);
        assert_eq!(s.len(), 3200);

        let delta = 3.0;
        let (z, s) = inject_outliers(&clean, &OutlierSpec::new(0.2, delta), &mut rng).unwrap();
        assert_eq!(s.len(), 640);
        let total: f64 = (&z - &clean).iter().map(|d| d.abs()).sum();
        assert_relative_eq!(total, 640.0 * delta, max_relative = 1e-12);
        for i in 0..32 {
            for j in 0..100 {
                let d = z[(i, j)] - clean[(i, j)];
                if s.binary_search(&(i, j)).is_ok() {
                    assert_relative_eq!(d.abs(), delta, max_relative = 1e-12);
                } else {
                    assert_eq!(d, 0.0);
                }
            }
        }
        assert!(inject_outliers(&clean, &OutlierSpec::new(1.5, 1.0), &mut rng).is_err());
    }

    #[test]
    fn outlier_count_rounds_half_up() {
        assert_eq!(OutlierSpec::new(0.5f64, 1.0).count(3), 2);
        assert_eq!(OutlierSpec::new(0.29f64, 1.0).count(100), 29);
        assert_eq!(OutlierSpec::new(0.7f64, 1.0).count(100), 70);
    }

    #[test]
    fn snr_round_trip_and_log_law() {
        let k = PhysicalConstants::<f64>::default();
        for conv in SnrConvention::ALL {
            let s = scene(10f64.powf(-19.1), 0);
            let db = snr_db(&s, &k, conv).unwrap();
            let back = noise_var_for_snr(db, &s, &k, conv);
            assert_relative_eq!(back, s.noise_var, max_relative = 1e-12);

            let mut doubled = s.clone();
            doubled.user_power *= 2.0;
            let db2 = snr_db(&doubled, &k, conv).unwrap();
            assert!((db2 - db - 3.0103).abs() < 1e-4, "{conv:?}");
            assert_eq!(SnrConvention::parse(conv.name()), Some(conv));
        }
        assert_eq!(
            snr_db(&scene(0.0, 0), &k, SnrConvention::default()),
            Err(Error::InfiniteSnr)
        );
    }

    #[test]
    fn snr_operating_points() {
        let k = PhysicalConstants::<f64>::default();
        let mut s = scene(10f64.powf(-19.1), 0);
        // P_k / σ² = 10^1.1
        assert!((snr_db(&s, &k, SnrConvention::PowerRatio).unwrap() - 11.0).abs() < 1e-9);
        // hand-evaluated from the constants above
        assert!((snr_db(&s, &k, SnrConvention::Literal).unwrap() - 87.7993).abs() < 1e-3);
        assert!((snr_db(&s, &k, SnrConvention::NominalPower).unwrap() - 169.3698).abs() < 1e-3);
        // realized and nominal agree when every ε₂² equals its expectation
        let e = (1.0f64 / 3.0).sqrt();
        s.polarization = Some(Polarization {
            users: vec![[0.0, e, 0.0], [0.3, -e, 0.1]],
            lo: [0.0, 1.0, 0.0],
        });
        let realized = snr_db(&s, &k, SnrConvention::ReceivedPower).unwrap();
        assert!((realized - 169.3698).abs() < 1e-3);
    }

    #[test]
    fn polarization_is_fixed_across_trials() {
        let s = scene(1e-4, 21);
        let k = PhysicalConstants::default();
        let a = synthesize_measurements(&s, &k, 0).unwrap();
        let b = synthesize_measurements(&s, &k, 5).unwrap();
        assert_eq!(a.gains, b.gains);
        assert_eq!(a.bias, b.bias);
        assert_ne!(a.pilots, b.pilots);
        let mut other = s.clone();
        other.seed = 22;
        assert_ne!(
            synthesize_measurements(&other, &k, 0).unwrap().gains,
            a.gains
        );
    }

    #[test]
    fn polarization_override() {
        let mut s = scene(0.0, 3);
        s.polarization = Some(Polarization {
            users: vec![[0.0, 1.0, 0.0], [0.0, -0.5, 0.0]],
            lo: [1.0, 0.0, 0.0],
        });
        let k = PhysicalConstants::default();
        let ms = synthesize_measurements(&s, &k, 0).unwrap();
        assert_eq!(ms.bias, c(0.0, 0.0));
        assert_relative_eq!(ms.gains[1].re, -0.5 * ms.gains[0].re, max_relative = 1e-14);
        s.polarization.as_mut().unwrap().users.pop();
        assert!(s.validate().is_err());
    }

    #[test]
    fn generic_over_f32() {
        let s: Scene<f32> = Scene::new(6, 20, vec![10.0, -20.0], 1e-18, 0.0, 1);
        let ms = synthesize_measurements(&s, &PhysicalConstants::default(), 0).unwrap();
        assert!(ms.clean.iter().all(|&z| z >= 0.0 && z.is_finite()));
    }
}
