//! Channel recovery from magnitude-only, possibly corrupted, measurements.
//!
//! Each sensor is solved independently: a spectral initialisation on the
//! bias-expanded pilots, then alternating minimisation between a phase update
//! (borrow the phase of the current model `S^H h + b`) and an amplitude update.
//! The amplitude update is either a single least-squares solve (the ℓ₂
//! baseline) or an IRLS loop approximating the ℓ₁ fit, with weights
//! `1 / (|residual| + ε)` that push outliers out of the normal equations.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{param, Error, Result};
use crate::linalg::{hermitian_eigen, Cholesky};
use crate::ops::OpCounts;
use crate::scalar::{abs2, cplx, lit, modulus, norm2, to_f64, Complex, Real};

/// Penalty applied to the measurement residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Penalty {
    /// Quadratic residual, one unweighted least-squares solve per outer iteration.
    L2,
    /// Absolute residual approximated by iteratively reweighted least squares.
    L1Irls,
}

/// Weights used to build the spectral-initialisation covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitWeighting {
    /// `|z̃_p|`
    #[default]
    Magnitude,
    /// `z̃_p²`
    SquaredMagnitude,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalConfig<T> {
    pub penalty: Penalty,
    /// Outer alternating-minimisation budget `N`.
    pub outer_iters: usize,
    /// IRLS budget `T` per outer iteration. Ignored for [`Penalty::L2`].
    pub inner_iters: usize,
    /// IRLS weight smoothing, also the guard in the relative-change denominator.
    pub epsilon: T,
    /// Relative-change break for the IRLS loop; `None` always runs `T` iterations.
    pub inner_tol: Option<T>,
    /// Relative-change break on the rotated target between outer iterations; zero runs all `N`.
    pub outer_tol: T,
    pub init_weighting: InitWeighting,
}

impl<T: Real> RetrievalConfig<T> {
    pub fn robust() -> Self {
        Self {
            penalty: Penalty::L1Irls,
            outer_iters: 100,
            inner_iters: 20,
            epsilon: lit(1e-8),
            inner_tol: Some(lit(1e-8)),
            outer_tol: lit(1e-9),
            init_weighting: InitWeighting::Magnitude,
        }
    }

    pub fn baseline() -> Self {
        Self {
            penalty: Penalty::L2,
            ..Self::robust()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer_iters == 0 {
            return Err(param("outer_iters", "must be at least 1"));
        }
        if self.inner_iters == 0 {
            return Err(param("inner_iters", "must be at least 1"));
        }
        if !(self.epsilon > T::zero()) {
            return Err(param("epsilon", "must be positive"));
        }
        if let Some(tol) = self.inner_tol {
            if !(tol > T::zero()) {
                return Err(param("inner_tol", "must be positive"));
            }
        }
        if !(self.outer_tol >= T::zero()) {
            return Err(param("outer_tol", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Diagnostics for one sensor row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensorDiagnostics {
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub final_residual_l1: f64,
    pub degenerate_init: bool,
    pub ridge_retries: usize,
    /// The solver failed; the row holds the spectral initialisation.
    pub failed: bool,
}

/// Recovered channel matrix with per-sensor diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate<T: Real> {
    /// M×K, row `m` is `ĥ_m`.
    pub h_hat: DMatrix<Complex<T>>,
    pub diagnostics: Vec<SensorDiagnostics>,
}

impl<T: Real> ChannelEstimate<T> {
    pub fn per_sensor_outer_iters(&self) -> Vec<usize> {
        self.diagnostics.iter().map(|d| d.outer_iters).collect()
    }

    pub fn per_sensor_final_residual_l1(&self) -> Vec<f64> {
        self.diagnostics
            .iter()
            .map(|d| d.final_residual_l1)
            .collect()
    }

    pub fn failed_sensors(&self) -> usize {
        self.diagnostics.iter().filter(|d| d.failed).count()
    }

    /// `[ĥ_1, …, ĥ_M]^H`: the M×K data matrix whose columns follow the
    /// `exp(+jπ m sin θ)` probe convention used by the MUSIC search.
    pub fn music_matrix(&self) -> DMatrix<Complex<T>> {
        self.h_hat.map(|z| z.conj())
    }
}

/// Spectral initialisation output.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralInit<T: Real> {
    pub h: DVector<Complex<T>>,
    /// The trailing entry of the principal eigenvector vanished, so `h` is
    /// the unnormalised `r̄·v` truncation.
    pub degenerate: bool,
}

fn check_shapes<T: Real>(pilots: &DMatrix<Complex<T>>, len: usize) -> Result<()> {
    if pilots.ncols() != len {
        return Err(Error::Dimension(format!(
            "pilot matrix has {} snapshots but the measurement row has {len}",
            pilots.ncols()
        )));
    }
    Ok(())
}

/// `R̄ = Σ_p z̄_p s̄_p s̄_p^H` with `s̄_p = [s_p; b*]`.
pub fn init_covariance<T: Real>(
    pilots: &DMatrix<Complex<T>>,
    bias: Complex<T>,
    z: &[T],
    weighting: InitWeighting,
) -> Result<DMatrix<Complex<T>>> {
    check_shapes(pilots, z.len())?;
    let k = pilots.nrows();
    let n = k + 1;
    let mut r = DMatrix::<Complex<T>>::zeros(n, n);
    let mut sbar = vec![Complex::new(T::zero(), T::zero()); n];
    for (p, &zp) in z.iter().enumerate() {
        let w = match weighting {
            InitWeighting::Magnitude => zp.abs(),
            InitWeighting::SquaredMagnitude => zp * zp,
        };
        for i in 0..k {
            sbar[i] = pilots[(i, p)];
        }
        sbar[k] = bias.conj();
        for j in 0..n {
            let c = sbar[j].conj().scale(w);
            for i in 0..n {
                r[(i, j)] += sbar[i] * c;
            }
        }
    }
    Ok(r)
}

pub fn spectral_init<T: Real>(
    pilots: &DMatrix<Complex<T>>,
    bias: Complex<T>,
    z: &[T],
    weighting: InitWeighting,
) -> Result<SpectralInit<T>> {
    spectral_init_counted(pilots, bias, z, weighting, &mut OpCounts::default())
}

fn spectral_init_counted<T: Real>(
    pilots: &DMatrix<Complex<T>>,
    bias: Complex<T>,
    z: &[T],
    weighting: InitWeighting,
    ops: &mut OpCounts,
) -> Result<SpectralInit<T>> {
    let k = pilots.nrows();
    let p = z.len();
    if p < k + 1 {
        return Err(Error::Dimension(format!(
            "spectral initialisation needs P ≥ K+1 (P={p}, K={k})"
        )));
    }
    let r = init_covariance(pilots, bias, z, weighting)?;
    let eig = hermitian_eigen(&r)?;
    let v = eig.eigenvectors.column(0).into_owned();
    let n = (k + 1) as u64;
    ops.init += p as u64 * n * n + n * n * n;

    // r̄ = |v^H (S̄ |z̃|)| / ‖S̄^H v‖²
    let mut numer = Complex::new(T::zero(), T::zero());
    let mut denom = T::zero();
    for (col, &zp) in z.iter().enumerate() {
        let mut proj = bias * v[k];
        for i in 0..k {
            proj += pilots[(i, col)].conj() * v[i];
        }
        // proj = s̄_p^H v
        denom += abs2(proj);
        numer += proj.conj().scale(zp.abs());
    }
    ops.init += 2 * p as u64 * n;
    let rbar = if denom > T::zero() {
        modulus(numer) / denom
    } else {
        T::zero()
    };

    let tail = v[k];
    if modulus(tail) < lit(1e-12) {
        let h = DVector::from_iterator(k, (0..k).map(|i| v[i].scale(rbar)));
        return Ok(SpectralInit {
            h,
            degenerate: true,
        });
    }
    let h = DVector::from_iterator(k, (0..k).map(|i| v[i] / tail));
    Ok(SpectralInit {
        h,
        degenerate: false,
    })
}

/// `S^H h + b` per snapshot.
pub fn model_signal<T: Real>(
    h: &DVector<Complex<T>>,
    pilots: &DMatrix<Complex<T>>,
    bias: Complex<T>,
) -> Vec<Complex<T>> {
    let k = pilots.nrows();
    (0..pilots.ncols())
        .map(|p| {
            let mut y = bias;
            for i in 0..k {
                y += pilots[(i, p)].conj() * h[i];
            }
            y
        })
        .collect()
}

/// `z̃ ⊙ exp(j∠(S^H h + b))`; a zero model sample gets phase 0.
pub fn phase_update<T: Real>(
    h: &DVector<Complex<T>>,
    pilots: &DMatrix<Complex<T>>,
    bias: Complex<T>,
    z: &[T],
) -> Vec<Complex<T>> {
    model_signal(h, pilots, bias)
        .into_iter()
        .zip(z)
        .map(|(y, &zp)| {
            let r = modulus(y);
            if r > T::zero() {
                y.scale(zp / r)
            } else {
                cplx(zp, T::zero())
            }
        })
        .collect()
}

/// `w_p = 1 / (|ϱ_p| + ε)`.
pub fn irls_weights<T: Real>(residual: &[Complex<T>], epsilon: T) -> Vec<T> {
    residual
        .iter()
        .map(|&r| T::one() / (modulus(r) + epsilon))
        .collect()
}

/// `target − S^H h`.
fn residual<T: Real>(
    pilots: &DMatrix<Complex<T>>,
    h: &DVector<Complex<T>>,
    target: &[Complex<T>],
) -> Vec<Complex<T>> {
    let k = pilots.nrows();
    target
        .iter()
        .enumerate()
        .map(|(p, &t)| {
            let mut y = t;
            for i in 0..k {
                y -= pilots[(i, p)].conj() * h[i];
            }
            y
        })
        .collect()
}

fn weighted_sq<T: Real>(weights: &[T], residual: &[Complex<T>]) -> T {
    weights
        .iter()
        .zip(residual)
        .fold(T::zero(), |acc, (&w, &r)| acc + w * abs2(r))
}

/// Condition estimate above which the normal matrix counts as singular.
pub const MAX_CONDITION: f64 = 1e12;
/// Ridge added to the normal matrix diagonal, relative to `trace / K`.
pub const RIDGE_SCALE: f64 = 1e-10;

fn normal_equations<T: Real>(
    pilots: &DMatrix<Complex<T>>,
    weights: &[T],
    target: &[Complex<T>],
) -> (DMatrix<Complex<T>>, DVector<Complex<T>>) {
    let k = pilots.nrows();
    let mut gram = DMatrix::<Complex<T>>::zeros(k, k);
    let mut rhs = DVector::<Complex<T>>::zeros(k);
    for (p, (&w, &t)) in weights.iter().zip(target).enumerate() {
        let col = pilots.column(p);
        for j in 0..k {
            let c = col[j].conj().scale(w);
            for i in 0..=j {
                gram[(i, j)] += col[i] * c;
            }
        }
        for i in 0..k {
            rhs[i] += col[i] * t.scale(w);
        }
    }
    for j in 0..k {
        for i in j + 1..k {
            gram[(i, j)] = gram[(j, i)].conj();
        }
    }
    (gram, rhs)
}

fn wls_tally(p: usize, k: usize) -> u64 {
    let (p, k) = (p as u64, k as u64);
    p * k * (k + 1) / 2 + p * k + k * k * k
}

/// `(S W S^H)^{-1} S W t`, the minimiser of `Σ_p w_p |t_p − s_p^H h|²`.
pub fn wls_solve<T: Real>(
    pilots: &DMatrix<Complex<T>>,
    weights: &[T],
    target: &[Complex<T>],
) -> Result<DVector<Complex<T>>> {
    check_shapes(pilots, weights.len())?;
    check_shapes(pilots, target.len())?;
    let (gram, rhs) = normal_equations(pilots, weights, target);
    solve_checked(&gram, &rhs)
}

fn solve_checked<T: Real>(
    gram: &DMatrix<Complex<T>>,
    rhs: &DVector<Complex<T>>,
) -> Result<DVector<Complex<T>>> {
    match Cholesky::new(gram) {
        Some(ch) if ch.condition_estimate() <= MAX_CONDITION => Ok(ch.solve(rhs)),
        Some(ch) => Err(Error::SingularNormalMatrix {
            condition: ch.condition_estimate(),
        }),
        None => Err(Error::SingularNormalMatrix {
            condition: f64::INFINITY,
        }),
    }
}

/// [`wls_solve`] with one ridge retry on a singular normal matrix. The flag
/// reports whether the ridge was needed.
pub fn wls_solve_regularized<T: Real>(
    pilots: &DMatrix<Complex<T>>,
    weights: &[T],
    target: &[Complex<T>],
) -> Result<(DVector<Complex<T>>, bool)> {
    check_shapes(pilots, weights.len())?;
    check_shapes(pilots, target.len())?;
    let (mut gram, rhs) = normal_equations(pilots, weights, target);
    match solve_checked(&gram, &rhs) {
        Ok(h) => Ok((h, false)),
        Err(_) => {
            let k = gram.nrows();
            let trace = (0..k).fold(T::zero(), |acc, i| acc + gram[(i, i)].re);
            let ridge = lit::<T>(RIDGE_SCALE) * trace / lit(k as f64);
            for i in 0..k {
                gram[(i, i)].re += ridge;
            }
            solve_checked(&gram, &rhs).map(|h| (h, true))
        }
    }
}

/// One IRLS inner step with its weighted objective before and after the solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsStep<T> {
    pub weighted_before: T,
    pub weighted_after: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeUpdate<T: Real> {
    pub h: DVector<Complex<T>>,
    pub inner_iters: usize,
    pub ridge_retries: usize,
}

fn relative_change<T: Real>(new: &DVector<Complex<T>>, old: &DVector<Complex<T>>, epsilon: T) -> T {
    norm2((new - old).as_slice()) / (norm2(old.as_slice()) + epsilon)
}

/// Amplitude update for a fixed rotated target (`z̃^n − b`).
///
/// [`Penalty::L2`] is a single unit-weight solve. [`Penalty::L1Irls`] starts
/// from unit weights and alternates solve / reweight for up to `T` rounds.
/// With `trace`, every solve records its weighted objective at the previous
/// and the new iterate under the weights it used.
pub fn amplitude_update<T: Real>(
    pilots: &DMatrix<Complex<T>>,
    target: &[Complex<T>],
    h_start: &DVector<Complex<T>>,
    config: &RetrievalConfig<T>,
    trace: Option<&mut Vec<IrlsStep<T>>>,
) -> Result<AmplitudeUpdate<T>> {
    amplitude_update_counted(
        pilots,
        target,
        h_start,
        config,
        trace,
        &mut OpCounts::default(),
    )
}

fn amplitude_update_counted<T: Real>(
    pilots: &DMatrix<Complex<T>>,
    target: &[Complex<T>],
    h_start: &DVector<Complex<T>>,
    config: &RetrievalConfig<T>,
    mut trace: Option<&mut Vec<IrlsStep<T>>>,
    ops: &mut OpCounts,
) -> Result<AmplitudeUpdate<T>> {
    let (k, p) = pilots.shape();
    let rounds = match config.penalty {
        Penalty::L2 => 1,
        Penalty::L1Irls => config.inner_iters,
    };
    let mut weights = vec![T::one(); p];
    let mut h = h_start.clone();
    let mut ridge_retries = 0;
    let mut iters = 0;
    for t in 1..=rounds {
        let before = trace
            .as_ref()
            .map(|_| weighted_sq(&weights, &residual(pilots, &h, target)));
        let (next, ridged) = wls_solve_regularized(pilots, &weights, target)?;
        ops.irls += wls_tally(p, k);
        ridge_retries += ridged as usize;
        iters = t;
        let converged = config
            .inner_tol
            .is_some_and(|tol| relative_change(&next, &h, config.epsilon) < tol);
        h = next;
        let last = converged || t == rounds;
        if last && trace.is_none() {
            break;
        }
        let rho = residual(pilots, &h, target);
        if let (Some(tr), Some(before)) = (trace.as_deref_mut(), before) {
            tr.push(IrlsStep {
                weighted_before: before,
                weighted_after: weighted_sq(&weights, &rho),
            });
        }
        if last {
            break;
        }
        ops.irls += (p * k) as u64;
        weights = irls_weights(&rho, config.epsilon);
    }
    Ok(AmplitudeUpdate {
        h,
        inner_iters: iters,
        ridge_retries,
    })
}

/// `‖z̃ − |S^H h + b|‖₁`.
pub fn residual_l1<T: Real>(
    h: &DVector<Complex<T>>,
    pilots: &DMatrix<Complex<T>>,
    bias: Complex<T>,
    z: &[T],
) -> T {
    model_signal(h, pilots, bias)
        .into_iter()
        .zip(z)
        .fold(T::zero(), |acc, (y, &zp)| acc + (zp - modulus(y)).abs())
}

/// Recovers one sensor's channel from its measurement row.
pub fn recover_channel<T: Real>(
    z: &[T],
    pilots: &DMatrix<Complex<T>>,
    bias: Complex<T>,
    config: &RetrievalConfig<T>,
) -> Result<(DVector<Complex<T>>, SensorDiagnostics)> {
    recover_channel_counted(z, pilots, bias, config, &mut OpCounts::default())
}

pub(crate) fn recover_channel_counted<T: Real>(
    z: &[T],
    pilots: &DMatrix<Complex<T>>,
    bias: Complex<T>,
    config: &RetrievalConfig<T>,
    ops: &mut OpCounts,
) -> Result<(DVector<Complex<T>>, SensorDiagnostics)> {
    config.validate()?;
    check_shapes(pilots, z.len())?;
    let init = spectral_init_counted(pilots, bias, z, config.init_weighting, ops)?;
    let (h, diag) = alternate(z, pilots, bias, config, init.h, ops)?;
    Ok((
        h,
        SensorDiagnostics {
            degenerate_init: init.degenerate,
            ..diag
        },
    ))
}

fn alternate<T: Real>(
    z: &[T],
    pilots: &DMatrix<Complex<T>>,
    bias: Complex<T>,
    config: &RetrievalConfig<T>,
    mut h: DVector<Complex<T>>,
    ops: &mut OpCounts,
) -> Result<(DVector<Complex<T>>, SensorDiagnostics)> {
    let (k, p) = pilots.shape();
    let mut diag = SensorDiagnostics::default();
    let mut previous: Option<Vec<Complex<T>>> = None;
    for _ in 0..config.outer_iters {
        let rotated = phase_update(&h, pilots, bias, z);
        ops.phase += (p * k) as u64;
        if let Some(prev) = &previous {
            if config.outer_tol > T::zero() {
                let diff = rotated
                    .iter()
                    .zip(prev)
                    .fold(T::zero(), |acc, (a, b)| acc + abs2(*a - *b));
                if diff.sqrt() / (norm2(prev) + config.epsilon) < config.outer_tol {
                    break;
                }
            }
        }
        let target: Vec<Complex<T>> = rotated.iter().map(|&y| y - bias).collect();
        let update = amplitude_update_counted(pilots, &target, &h, config, None, ops)?;
        h = update.h;
        diag.outer_iters += 1;
        diag.inner_iters += update.inner_iters;
        diag.ridge_retries += update.ridge_retries;
        previous = Some(rotated);
    }
    diag.final_residual_l1 = to_f64(residual_l1(&h, pilots, bias, z));
    Ok((h, diag))
}

/// Runs [`recover_channel`] on every row of `z`, rows in parallel.
pub fn recover_channel_matrix<T: Real>(
    z: &DMatrix<T>,
    pilots: &DMatrix<Complex<T>>,
    bias: Complex<T>,
    config: &RetrievalConfig<T>,
) -> Result<ChannelEstimate<T>> {
    recover_channel_matrix_counted(z, pilots, bias, config, true).map(|(e, _)| e)
}

/// Sequential variant of [`recover_channel_matrix`].
pub fn recover_channel_matrix_serial<T: Real>(
    z: &DMatrix<T>,
    pilots: &DMatrix<Complex<T>>,
    bias: Complex<T>,
    config: &RetrievalConfig<T>,
) -> Result<ChannelEstimate<T>> {
    recover_channel_matrix_counted(z, pilots, bias, config, false).map(|(e, _)| e)
}

type RowOutcome<T> = (DVector<Complex<T>>, SensorDiagnostics, OpCounts);

pub(crate) fn recover_channel_matrix_counted<T: Real>(
    z: &DMatrix<T>,
    pilots: &DMatrix<Complex<T>>,
    bias: Complex<T>,
    config: &RetrievalConfig<T>,
    parallel: bool,
) -> Result<(ChannelEstimate<T>, OpCounts)> {
    config.validate()?;
    check_shapes(pilots, z.ncols())?;
    let (m, k) = (z.nrows(), pilots.nrows());
    let solve_row = |row: usize| -> Result<RowOutcome<T>> {
        let zr: Vec<T> = z.row(row).iter().copied().collect();
        let mut ops = OpCounts::default();
        // init failures (shape, eigen) are fatal; solver failures degrade the row
        let init = spectral_init_counted(pilots, bias, &zr, config.init_weighting, &mut ops)?;
        match alternate(&zr, pilots, bias, config, init.h.clone(), &mut ops) {
            Ok((h, diag)) => Ok((
                h,
                SensorDiagnostics {
                    degenerate_init: init.degenerate,
                    ..diag
                },
                ops,
            )),
            Err(_) => {
                let diag = SensorDiagnostics {
                    degenerate_init: init.degenerate,
                    failed: true,
                    final_residual_l1: to_f64(residual_l1(&init.h, pilots, bias, &zr)),
                    ..SensorDiagnostics::default()
                };
                Ok((init.h, diag, ops))
            }
        }
    };
    let rows: Vec<RowOutcome<T>> = if parallel {
        (0..m)
            .into_par_iter()
            .map(solve_row)
            .collect::<Result<_>>()?
    } else {
        (0..m).map(solve_row).collect::<Result<_>>()?
    };
    let mut h_hat = DMatrix::zeros(m, k);
    let mut diagnostics = Vec::with_capacity(m);
    let mut ops = OpCounts::default();
    for (i, (h, d, o)) in rows.into_iter().enumerate() {
        h_hat.set_row(i, &h.transpose());
        diagnostics.push(d);
        ops += o;
    }
    Ok((ChannelEstimate { h_hat, diagnostics }, ops))
}
