//! MUSIC direction-of-arrival search over a recovered channel matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{param, Error, Result};
use crate::linalg::hermitian_eigen;
use crate::ops::OpCounts;
use crate::scalar::{abs2, cplx, deg_to_rad, lit, unit_phasor, Complex, Real};

/// Uniform grid on [-90°, 90°], endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularGrid<T> {
    points: Vec<T>,
}

impl<T: Real> AngularGrid<T> {
    pub fn new(num_points: usize) -> Result<Self> {
        if num_points < 2 {
            return Err(param("grid_points", "need at least 2 grid points"));
        }
        let lo = lit::<T>(-90.0);
        let step = lit::<T>(180.0) / lit((num_points - 1) as f64);
        let mut points: Vec<T> = (0..num_points).map(|i| lo + step * lit(i as f64)).collect();
        points[num_points - 1] = lit(90.0);
        Ok(Self { points })
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn step(&self) -> T {
        lit::<T>(180.0) / lit((self.points.len() - 1) as f64)
    }

    /// Index of the grid point closest to `theta_deg`.
    pub fn nearest(&self, theta_deg: T) -> usize {
        let mut best = 0;
        for (i, &g) in self.points.iter().enumerate() {
            if (g - theta_deg).abs() < (self.points[best] - theta_deg).abs() {
                best = i;
            }
        }
        best
    }
}

/// Probe steering vector `(1/√M)·exp(+jπ m sin θ)`.
pub fn probe_vector<T: Real>(theta_deg: T, num_sensors: usize) -> DVector<Complex<T>> {
    let phase = T::pi() * deg_to_rad(theta_deg).sin();
    let norm = T::one() / lit::<T>(num_sensors as f64).sqrt();
    DVector::from_iterator(
        num_sensors,
        (0..num_sensors).map(|m| unit_phasor(phase * lit(m as f64)).scale(norm)),
    )
}

/// `R = Ĥ Ĥ^H / P`.
pub fn sample_covariance<T: Real>(
    h_hat: &DMatrix<Complex<T>>,
    num_snapshots: usize,
) -> DMatrix<Complex<T>> {
    let scale = T::one() / lit(num_snapshots as f64);
    (h_hat * h_hat.adjoint()).map(|z| z.scale(scale))
}

#[derive(Debug, Clone)]
pub struct NoiseSubspace<T: Real> {
    /// M×(M−K) orthonormal basis.
    pub basis: DMatrix<Complex<T>>,
    /// All eigenvalues of the covariance, descending.
    pub eigenvalues: Vec<T>,
    /// Eigenvalues K and K+1 are within 1e-10 relative of each other.
    pub ill_separated: bool,
}

pub fn noise_subspace<T: Real>(
    covariance: &DMatrix<Complex<T>>,
    num_sources: usize,
) -> Result<NoiseSubspace<T>> {
    let m = covariance.nrows();
    if num_sources == 0 || num_sources >= m {
        return Err(Error::Dimension(format!(
            "noise subspace needs 0 < K < M (K={num_sources}, M={m})"
        )));
    }
    let eig = hermitian_eigen(covariance)?;
    let basis = eig
        .eigenvectors
        .columns(num_sources, m - num_sources)
        .into_owned();
    let (a, b) = (
        eig.eigenvalues[num_sources - 1],
        eig.eigenvalues[num_sources],
    );
    let scale = a.abs().max(b.abs());
    let ill_separated = scale == T::zero() || (a - b).abs() < lit::<T>(1e-10) * scale;
    Ok(NoiseSubspace {
        basis,
        eigenvalues: eig.eigenvalues,
        ill_separated,
    })
}

/// Denominator floor of the pseudo-spectrum.
pub const SPECTRUM_FLOOR: f64 = 1e-18;

/// `P(θ) = 1 / (a^H(θ) U_N U_N^H a(θ))` on every grid point.
pub fn music_spectrum<T: Real>(noise_basis: &DMatrix<Complex<T>>, grid: &AngularGrid<T>) -> Vec<T> {
    music_spectrum_counted(noise_basis, grid, &mut OpCounts::default())
}

fn music_spectrum_counted<T: Real>(
    noise_basis: &DMatrix<Complex<T>>,
    grid: &AngularGrid<T>,
    ops: &mut OpCounts,
) -> Vec<T> {
    let (m, d) = noise_basis.shape();
    let floor = lit::<T>(SPECTRUM_FLOOR);
    ops.music += (grid.len() * m * d) as u64;
    grid.points()
        .iter()
        .map(|&theta| {
            let a = probe_vector(theta, m);
            let mut denom = T::zero();
            for c in 0..d {
                let mut proj = cplx(T::zero(), T::zero());
                for r in 0..m {
                    proj += noise_basis[(r, c)].conj() * a[r];
                }
                denom += abs2(proj);
            }
            T::one() / denom.max(floor)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Peaks<T> {
    pub indices: Vec<usize>,
    pub doas_deg: Vec<T>,
    /// Fewer than K local maxima existed; the rest were filled by global value.
    pub fallback_used: bool,
}

/// The `K` largest local maxima of `spectrum`.
///
/// A plateau of equal values counts once, at its leftmost index; endpoints
/// qualify against their single neighbour. Ties in value go to the lower index.
pub fn pick_peaks<T: Real>(spectrum: &[T], grid: &AngularGrid<T>, num_sources: usize) -> Peaks<T> {
    assert_eq!(
        spectrum.len(),
        grid.len(),
        "spectrum length must match the grid"
    );
    let n = spectrum.len();
    let mut maxima = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && spectrum[j + 1] == spectrum[i] {
            j += 1;
        }
        let left_ok = i == 0 || spectrum[i - 1] < spectrum[i];
        let right_ok = j == n - 1 || spectrum[j + 1] < spectrum[i];
        if left_ok && right_ok {
            maxima.push(i);
        }
        i = j + 1;
    }
    let by_value = |a: &usize, b: &usize| {
        spectrum[*b]
            .partial_cmp(&spectrum[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    };
    maxima.sort_by(by_value);
    maxima.truncate(num_sources);
    let fallback_used = maxima.len() < num_sources;
    if fallback_used {
        let mut rest: Vec<usize> = (0..n).filter(|i| !maxima.contains(i)).collect();
        rest.sort_by(by_value);
        maxima.extend(rest.into_iter().take(num_sources - maxima.len()));
    }
    Peaks {
        doas_deg: maxima.iter().map(|&i| grid.points()[i]).collect(),
        indices: maxima,
        fallback_used,
    }
}

#[derive(Debug, Clone)]
pub struct MusicResult<T: Real> {
    pub spectrum: Vec<T>,
    pub eigenvalues: Vec<T>,
    pub doa_estimates_deg: Vec<T>,
    pub peak_indices: Vec<usize>,
    pub ill_separated: bool,
    pub fallback_used: bool,
}

/// Covariance, noise subspace, pseudo-spectrum and peak picking in one pass.
pub fn music<T: Real>(
    data: &DMatrix<Complex<T>>,
    num_snapshots: usize,
    num_sources: usize,
    grid: &AngularGrid<T>,
) -> Result<MusicResult<T>> {
    music_counted(
        data,
        num_snapshots,
        num_sources,
        grid,
        &mut OpCounts::default(),
    )
}

pub(crate) fn music_counted<T: Real>(
    data: &DMatrix<Complex<T>>,
    num_snapshots: usize,
    num_sources: usize,
    grid: &AngularGrid<T>,
    ops: &mut OpCounts,
) -> Result<MusicResult<T>> {
    let (m, k) = data.shape();
    let r = sample_covariance(data, num_snapshots);
    let sub = noise_subspace(&r, num_sources)?;
    ops.music += (m * m * k + m * m * m) as u64;
    let spectrum = music_spectrum_counted(&sub.basis, grid, ops);
    let peaks = pick_peaks(&spectrum, grid, num_sources);
    Ok(MusicResult {
        spectrum,
        eigenvalues: sub.eigenvalues,
        doa_estimates_deg: peaks.doas_deg,
        peak_indices: peaks.indices,
        ill_separated: sub.ill_separated,
        fallback_used: peaks.fallback_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Component};
    use proptest::prelude::*;

    type C = Complex<f64>;

    fn c(re: f64, im: f64) -> C {
        Complex::new(re, im)
    }

    fn manifold(doas: &[f64], m: usize) -> DMatrix<C> {
        let mut a = DMatrix::zeros(m, doas.len());
        for (k, &d) in doas.iter().enumerate() {
            a.set_column(k, &probe_vector(d, m));
        }
        a
    }

    #[test]
    fn grid_layout() {
        let g = AngularGrid::<f64>::new(2000).unwrap();
        assert_eq!(g.points()[0], -90.0);
        assert_eq!(g.points()[1999], 90.0);
        assert!(g.points().windows(2).all(|w| w[1] > w[0]));
        assert!((g.step() - 180.0 / 1999.0).abs() < 1e-15);
        assert!(AngularGrid::<f64>::new(1).is_err());
    }

    #[test]
    fn covariance_examples() {
        let z = sample_covariance(&DMatrix::<C>::zeros(3, 2), 10);
        assert_eq!(z, DMatrix::zeros(3, 3));
        let h = DMatrix::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 1.0)]);
        let r = sample_covariance(&h, 1);
        let expected =
            DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(1.0, 0.0)]);
        assert_eq!(r, expected);
        let mut rr = rng::substream(2, Component::Noise, 0);
        let h = DMatrix::from_fn(6, 2, |_, _| rng::complex_gaussian::<f64>(&mut rr, 1.0));
        let r = sample_covariance(&h, 7);
        let tr: f64 = (0..6).map(|i| r[(i, i)].re).sum();
        assert!((tr - h.norm_squared() / 7.0).abs() < 1e-12 * tr);
        assert!((&r - r.adjoint()).norm() <= 1e-12 * r.norm());
    }

    #[test]
    fn diagonal_noise_subspace() {
        let r = DMatrix::from_diagonal(&DVector::from_vec(vec![
            c(3.0, 0.0),
            c(2.0, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
        ]));
        let sub = noise_subspace(&r, 2).unwrap();
        for col in 0..2 {
            let v = sub.basis.column(col);
            assert!(v[0].norm() < 1e-14 && v[1].norm() < 1e-14);
        }
        assert!(!sub.ill_separated);
        assert!(noise_subspace(&r, 4).is_err());
        // a basis orthogonal to every probe hits the floor-capped maximum
        let basis = DMatrix::<C>::zeros(4, 1);
        let s = music_spectrum(&basis, &AngularGrid::new(3).unwrap());
        assert!(s.iter().all(|&v| v == 1.0 / SPECTRUM_FLOOR));
    }

    #[test]
    fn ill_separated_flag() {
        let r = DMatrix::from_diagonal(&DVector::from_vec(vec![
            c(1.0, 0.0),
            c(1.0, 0.0),
            c(1.0, 0.0),
        ]));
        assert!(noise_subspace(&r, 1).unwrap().ill_separated);
    }

    #[test]
    fn noiseless_manifold_is_orthogonal_to_noise_subspace() {
        let doas = [40.0, -60.0, 12.5];
        let a = manifold(&doas, 16);
        let sub = noise_subspace(&sample_covariance(&a, 1), 3).unwrap();
        for &d in &doas {
            assert!((sub.basis.adjoint() * probe_vector(d, 16)).norm() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn signal_and_noise_subspaces_are_orthogonal(seed in 0u64..500) {
            let mut rr = rng::substream(seed, Component::Noise, 1);
            let h = DMatrix::from_fn(8, 3, |_, _| rng::complex_gaussian::<f64>(&mut rr, 1.0));
            let r = sample_covariance(&h, 3);
            let sub = noise_subspace(&r, 3).unwrap();
            let eig = hermitian_eigen(&r).unwrap();
            let us = eig.eigenvectors.columns(0, 3);
            prop_assert!((us.adjoint() * &sub.basis).norm() < 1e-10);
            let gram = sub.basis.adjoint() * &sub.basis;
            prop_assert!((gram - DMatrix::identity(5, 5)).norm() < 1e-10);
        }

        #[test]
        fn spectrum_invariant_under_unitary_mixing(seed in 0u64..200) {
            let mut rr = rng::substream(seed, Component::Noise, 2);
            let h = DMatrix::from_fn(6, 2, |_, _| rng::complex_gaussian::<f64>(&mut rr, 1.0));
            let un = noise_subspace(&sample_covariance(&h, 1), 2).unwrap().basis;
            let g = DMatrix::from_fn(4, 4, |_, _| rng::complex_gaussian::<f64>(&mut rr, 1.0));
            let q = g.qr().q();
            let grid = AngularGrid::new(181).unwrap();
            let a = music_spectrum(&un, &grid);
            let b = music_spectrum(&(&un * q), &grid);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0));
            }
        }

        #[test]
        fn covariance_scaling_preserves_peaks(scale in 0.001f64..1000.0, seed in 0u64..100) {
            let mut rr = rng::substream(seed, Component::Noise, 3);
            let noise = DMatrix::from_fn(8, 2, |_, _| rng::complex_gaussian::<f64>(&mut rr, 1e-4));
            let h = manifold(&[40.0, -60.0], 8) + noise;
            let grid = AngularGrid::new(721).unwrap();
            let base = music(&h, 1, 2, &grid).unwrap();
            let scaled = music(&h.map(|z| z * scale.sqrt()), 1, 2, &grid).unwrap();
            prop_assert_eq!(base.peak_indices, scaled.peak_indices);
        }
    }

    #[test]
    fn peak_picking_rules() {
        let grid = AngularGrid::<f64>::new(2000).unwrap();
        let mut s = vec![1.0; 2000];
        let (i40, im60) = (grid.nearest(40.0), grid.nearest(-60.0));
        s[i40] = 50.0;
        s[im60] = 80.0;
        let p = pick_peaks(&s, &grid, 2);
        assert_eq!(p.indices, vec![im60, i40]);
        assert!(!p.fallback_used);

        let mono: Vec<f64> = (0..2000).map(|i| i as f64).collect();
        let p = pick_peaks(&mono, &grid, 1);
        assert_eq!(p.doas_deg, vec![90.0]);

        let g = AngularGrid::<f64>::new(7).unwrap();
        let plateau = [0.0, 1.0, 3.0, 3.0, 3.0, 1.0, 0.0];
        assert_eq!(pick_peaks(&plateau, &g, 1).indices, vec![2]);

        // one maximum only, second slot from the global fallback
        let p = pick_peaks(&plateau, &g, 2);
        assert!(p.fallback_used);
        assert_eq!(p.indices, vec![2, 3]);
    }

    #[test]
    fn single_source_noiseless_peak_is_nearest_grid_point() {
        let grid = AngularGrid::<f64>::new(2000).unwrap();
        let h = manifold(&[23.4], 10);
        let res = music(&h, 50, 1, &grid).unwrap();
        let best = res
            .spectrum
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(best, grid.nearest(23.4));
        assert_eq!(res.peak_indices, vec![best]);
        assert!(res.spectrum.iter().all(|&v| v > 0.0));
    }
}
