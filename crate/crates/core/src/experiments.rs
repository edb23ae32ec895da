//! Monte-Carlo comparison of the ℓ₂ (QMUSIC) and ℓ₁-IRLS (ROBQMUSIC)
//! estimators on paired measurement realizations.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use itertools::Itertools;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::doa::{self, AngularGrid};
use crate::error::Result;
use crate::model::{self, OutlierSpec, PhysicalConstants, Scene, SnrConvention};
use crate::ops::OpCounts;
use crate::retrieval::{self, Penalty, RetrievalConfig};
use crate::rng::{self, Component};
use crate::scalar::{lit, to_f64, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    QMusic,
    RobQMusic,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::QMusic => "QMUSIC",
            Self::RobQMusic => "ROBQMUSIC",
        }
    }

    pub fn penalty(self) -> Penalty {
        match self {
            Self::QMusic => Penalty::L2,
            Self::RobQMusic => Penalty::L1Irls,
        }
    }
}

/// An algorithm label with the retrieval settings it runs with.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimator<T> {
    pub algorithm: Algorithm,
    pub config: RetrievalConfig<T>,
}

impl<T: Real> Estimator<T> {
    pub fn qmusic() -> Self {
        Self {
            algorithm: Algorithm::QMusic,
            config: RetrievalConfig::baseline(),
        }
    }

    pub fn robqmusic() -> Self {
        Self {
            algorithm: Algorithm::RobQMusic,
            config: RetrievalConfig::robust(),
        }
    }

    /// Both estimators sharing `template`'s budgets and tolerances.
    pub fn pair(template: &RetrievalConfig<T>) -> Vec<Self> {
        [Algorithm::QMusic, Algorithm::RobQMusic]
            .into_iter()
            .map(|algorithm| Self {
                algorithm,
                config: RetrievalConfig {
                    penalty: algorithm.penalty(),
                    ..template.clone()
                },
            })
            .collect()
    }
}

/// Everything one Monte-Carlo trial needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment<T: Real> {
    pub scene: Scene<T>,
    pub constants: PhysicalConstants<T>,
    pub outliers: OutlierSpec<T>,
    pub estimators: Vec<Estimator<T>>,
    pub grid: AngularGrid<T>,
}

impl<T: Real> Experiment<T> {
    pub fn new(scene: Scene<T>, outliers: OutlierSpec<T>, grid_points: usize) -> Result<Self> {
        Ok(Self {
            scene,
            constants: PhysicalConstants::default(),
            outliers,
            estimators: Estimator::pair(&RetrievalConfig::robust()),
            grid: AngularGrid::new(grid_points)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.outliers.validate()?;
        self.estimators.iter().try_for_each(|e| e.config.validate())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome<T> {
    pub trial_index: u64,
    pub algorithm: Algorithm,
    pub doa_estimates_deg: Vec<T>,
    pub failed_sensors: usize,
    pub degenerate_inits: usize,
    pub ridge_retries: usize,
    /// Fewer than K spectral peaks were found.
    pub peak_fallback: bool,
    /// The estimator could not produce a spectrum; estimates sit at the grid's lower edge.
    pub error: Option<String>,
}

impl<T> TrialOutcome<T> {
    /// The estimator failed on at least one sensor or outright.
    pub fn degraded(&self) -> bool {
        self.error.is_some() || self.failed_sensors > 0
    }
}

/// Both estimators' outcomes on one shared realization.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord<T> {
    pub trial_index: u64,
    /// Digest of the corrupted measurement matrix every estimator consumed.
    pub input_digest: u64,
    pub outcomes: Vec<TrialOutcome<T>>,
}

pub fn digest_matrix<T: Real>(z: &DMatrix<T>) -> u64 {
    let mut h = DefaultHasher::new();
    h.write_usize(z.nrows());
    h.write_usize(z.ncols());
    for &x in z.iter() {
        h.write_u64(to_f64(x).to_bits());
    }
    h.finish()
}

fn estimate<T: Real>(
    exp: &Experiment<T>,
    ms: &model::MeasurementSet<T>,
    estimator: &Estimator<T>,
    trial: u64,
) -> TrialOutcome<T> {
    let k = exp.scene.num_users();
    let run = || -> Result<(retrieval::ChannelEstimate<T>, doa::MusicResult<T>)> {
        let est = retrieval::recover_channel_matrix(
            &ms.corrupted,
            &ms.pilots,
            ms.bias,
            &estimator.config,
        )?;
        let res = doa::music(&est.music_matrix(), exp.scene.num_snapshots, k, &exp.grid)?;
        Ok((est, res))
    };
    match run() {
        Ok((est, res)) => TrialOutcome {
            trial_index: trial,
            algorithm: estimator.algorithm,
            doa_estimates_deg: res.doa_estimates_deg,
            failed_sensors: est.failed_sensors(),
            degenerate_inits: est.diagnostics.iter().filter(|d| d.degenerate_init).count(),
            ridge_retries: est.diagnostics.iter().map(|d| d.ridge_retries).sum(),
            peak_fallback: res.fallback_used,
            error: None,
        },
        Err(e) => TrialOutcome {
            trial_index: trial,
            algorithm: estimator.algorithm,
            doa_estimates_deg: vec![exp.grid.points()[0]; k],
            failed_sensors: exp.scene.num_sensors,
            degenerate_inits: 0,
            ridge_retries: 0,
            peak_fallback: false,
            error: Some(e.to_string()),
        },
    }
}

/// Synthesizes and corrupts one realization, then runs every estimator on it.
pub fn run_trial<T: Real>(exp: &Experiment<T>, trial: u64) -> Result<TrialRecord<T>> {
    exp.validate()?;
    let mut ms = model::synthesize_measurements(&exp.scene, &exp.constants, trial)?;
    let mut outlier_rng = rng::substream(exp.scene.seed, Component::Outliers, trial);
    ms.corrupt(&exp.outliers, &mut outlier_rng)?;
    let outcomes = exp
        .estimators
        .iter()
        .map(|e| estimate(exp, &ms, e, trial))
        .collect();
    Ok(TrialRecord {
        trial_index: trial,
        input_digest: digest_matrix(&ms.corrupted),
        outcomes,
    })
}

/// `num_trials` independent trials, ordered by trial index whatever the scheduling.
pub fn monte_carlo<T: Real>(exp: &Experiment<T>, num_trials: usize) -> Result<Vec<TrialRecord<T>>> {
    exp.validate()?;
    (0..num_trials as u64)
        .into_par_iter()
        .map(|t| run_trial(exp, t))
        .collect()
}

/// Squared error of one trial under the best assignment of estimates to true DoAs.
fn matched_sq_error<T: Real>(estimate: &[T], truth: &[T]) -> T {
    assert_eq!(
        estimate.len(),
        truth.len(),
        "estimate and truth lengths differ"
    );
    let k = truth.len();
    let total_abs = |perm: &[usize]| {
        perm.iter().enumerate().fold(T::zero(), |acc, (i, &j)| {
            acc + (estimate[j] - truth[i]).abs()
        })
    };
    let best = (0..k)
        .permutations(k)
        .min_by(|a, b| {
            total_abs(a)
                .partial_cmp(&total_abs(b))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or_default();
    best.iter().enumerate().fold(T::zero(), |acc, (i, &j)| {
        let d = estimate[j] - truth[i];
        acc + d * d
    })
}

/// Root-mean-square DoA error in degrees over all trials and sources. Each
/// trial's estimates are matched to the true DoAs by minimum total absolute error.
pub fn rmse<T: Real>(estimates: &[Vec<T>], truth: &[T]) -> T {
    if estimates.is_empty() || truth.is_empty() {
        return T::zero();
    }
    let sum = estimates
        .iter()
        .fold(T::zero(), |acc, e| acc + matched_sq_error(e, truth));
    (sum / lit((estimates.len() * truth.len()) as f64)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    EtaPercent,
    SnrDb,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            Self::EtaPercent => "eta_pct",
            Self::SnrDb => "snr_db",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmRmse<T> {
    pub algorithm: Algorithm,
    pub rmse_deg: T,
    /// Trials in which the estimator degraded on at least one sensor.
    pub degraded_trials: usize,
    /// Trials in which the estimator produced no spectrum at all.
    pub failed_trials: usize,
}

/// One sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult<T: Real> {
    pub variable: SweepVariable,
    pub value: T,
    pub rmse: Vec<AlgorithmRmse<T>>,
    pub num_trials: usize,
    pub master_seed: u64,
    pub scene: Scene<T>,
}

impl<T: Real> SweepResult<T> {
    pub fn rmse_of(&self, algorithm: Algorithm) -> Option<T> {
        self.rmse
            .iter()
            .find(|r| r.algorithm == algorithm)
            .map(|r| r.rmse_deg)
    }
}

fn aggregate<T: Real>(
    exp: &Experiment<T>,
    records: &[TrialRecord<T>],
    variable: SweepVariable,
    value: T,
) -> SweepResult<T> {
    let rmse = exp
        .estimators
        .iter()
        .enumerate()
        .map(|(i, est)| {
            let estimates: Vec<Vec<T>> = records
                .iter()
                .map(|r| r.outcomes[i].doa_estimates_deg.clone())
                .collect();
            AlgorithmRmse {
                algorithm: est.algorithm,
                rmse_deg: rmse(&estimates, &exp.scene.doas_deg),
                degraded_trials: records.iter().filter(|r| r.outcomes[i].degraded()).count(),
                failed_trials: records
                    .iter()
                    .filter(|r| r.outcomes[i].error.is_some())
                    .count(),
            }
        })
        .collect();
    SweepResult {
        variable,
        value,
        rmse,
        num_trials: records.len(),
        master_seed: exp.scene.seed,
        scene: exp.scene.clone(),
    }
}

/// RMSE per estimator for each outlier fraction (given as a fraction in [0, 1],
/// reported in percent).
pub fn sweep_corruption<T: Real>(
    base: &Experiment<T>,
    fractions: &[T],
    delta: T,
    num_trials: usize,
) -> Result<Vec<SweepResult<T>>> {
    fractions
        .iter()
        .map(|&eta| {
            let exp = Experiment {
                outliers: OutlierSpec::new(eta, delta),
                ..base.clone()
            };
            let records = monte_carlo(&exp, num_trials)?;
            Ok(aggregate(
                &exp,
                &records,
                SweepVariable::EtaPercent,
                eta * lit(100.0),
            ))
        })
        .collect()
}

/// RMSE per estimator for each SNR point, at a fixed corruption level.
pub fn sweep_snr<T: Real>(
    base: &Experiment<T>,
    snrs_db: &[T],
    outliers: OutlierSpec<T>,
    num_trials: usize,
    convention: SnrConvention,
) -> Result<Vec<SweepResult<T>>> {
    snrs_db
        .iter()
        .map(|&snr| {
            let mut exp = Experiment {
                outliers,
                ..base.clone()
            };
            exp.scene.noise_var =
                model::noise_var_for_snr(snr, &exp.scene, &exp.constants, convention);
            let records = monte_carlo(&exp, num_trials)?;
            Ok(aggregate(&exp, &records, SweepVariable::SnrDb, snr))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumCurve<T> {
    pub algorithm: Algorithm,
    /// Pseudo-spectrum in dB relative to its maximum.
    pub pq_db: Vec<T>,
    pub doa_estimates_deg: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSnapshot<T> {
    pub theta_deg: Vec<T>,
    pub curves: Vec<SpectrumCurve<T>>,
    pub input_digest: u64,
}

/// Pseudo-spectra of every estimator on one realization.
pub fn spectrum_snapshot<T: Real>(exp: &Experiment<T>, trial: u64) -> Result<SpectrumSnapshot<T>> {
    exp.validate()?;
    let mut ms = model::synthesize_measurements(&exp.scene, &exp.constants, trial)?;
    let mut outlier_rng = rng::substream(exp.scene.seed, Component::Outliers, trial);
    ms.corrupt(&exp.outliers, &mut outlier_rng)?;
    let k = exp.scene.num_users();
    let curves = exp
        .estimators
        .iter()
        .map(|est| {
            let ch =
                retrieval::recover_channel_matrix(&ms.corrupted, &ms.pilots, ms.bias, &est.config)?;
            let res = doa::music(&ch.music_matrix(), exp.scene.num_snapshots, k, &exp.grid)?;
            let peak = res
                .spectrum
                .iter()
                .copied()
                .fold(T::zero(), |a, b| a.max(b));
            let ten = lit::<T>(10.0);
            Ok(SpectrumCurve {
                algorithm: est.algorithm,
                pq_db: res
                    .spectrum
                    .iter()
                    .map(|&v| ten * (v / peak).log10())
                    .collect(),
                doa_estimates_deg: res.doa_estimates_deg,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SpectrumSnapshot {
        theta_deg: exp.grid.points().to_vec(),
        curves,
        input_digest: digest_matrix(&ms.corrupted),
    })
}

/// Multiply-accumulate counts for one end-to-end run of `config` on trial 0.
pub fn op_count_report<T: Real>(
    exp: &Experiment<T>,
    config: &RetrievalConfig<T>,
) -> Result<OpCounts> {
    exp.validate()?;
    config.validate()?;
    let mut ms = model::synthesize_measurements(&exp.scene, &exp.constants, 0)?;
    let mut outlier_rng = rng::substream(exp.scene.seed, Component::Outliers, 0);
    ms.corrupt(&exp.outliers, &mut outlier_rng)?;
    let (est, mut ops) = retrieval::recover_channel_matrix_counted(
        &ms.corrupted,
        &ms.pilots,
        ms.bias,
        config,
        true,
    )?;
    doa::music_counted(
        &est.music_matrix(),
        exp.scene.num_snapshots,
        exp.scene.num_users(),
        &exp.grid,
        &mut ops,
    )?;
    Ok(ops)
}

/// Stage count ratios under a doubling of `T` and of the grid size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingReport {
    pub base: OpCounts,
    pub doubled_inner: OpCounts,
    pub doubled_grid: OpCounts,
    pub irls_ratio: f64,
    pub music_ratio: f64,
}

impl ScalingReport {
    pub fn is_linear(&self, tolerance: f64) -> bool {
        (self.irls_ratio - 2.0).abs() <= 2.0 * tolerance
            && (self.music_ratio - 2.0).abs() <= 2.0 * tolerance
    }
}

/// Runs [`op_count_report`] with every early break disabled, then again with
/// `T` doubled and with the grid doubled.
pub fn complexity_scaling<T: Real>(
    exp: &Experiment<T>,
    config: &RetrievalConfig<T>,
) -> Result<ScalingReport> {
    let fixed = RetrievalConfig {
        inner_tol: None,
        outer_tol: T::zero(),
        ..config.clone()
    };
    let base = op_count_report(exp, &fixed)?;
    let doubled_inner = op_count_report(
        exp,
        &RetrievalConfig {
            inner_iters: 2 * fixed.inner_iters,
            ..fixed.clone()
        },
    )?;
    let wide = Experiment {
        grid: AngularGrid::new(2 * exp.grid.len())?,
        ..exp.clone()
    };
    let doubled_grid = op_count_report(&wide, &fixed)?;
    Ok(ScalingReport {
        base,
        doubled_inner,
        doubled_grid,
        irls_ratio: doubled_inner.irls as f64 / base.irls as f64,
        music_ratio: doubled_grid.music as f64 / base.music as f64,
    })
}

/// Reference experiment setups.
pub mod presets {
    use super::*;

    pub const TRUE_DOAS_DEG: [f64; 2] = [40.0, -60.0];
    pub const USER_POWER: f64 = 1e-18;
    pub const GRID_POINTS: usize = 2000;

    /// `σ² = 10^-19.1`, the fixed noise level of the spectrum and corruption experiments.
    pub fn fixed_noise_var() -> f64 {
        10f64.powf(-19.1)
    }

    #[derive(Debug, Clone, PartialEq)]
    pub struct Preset {
        pub scene: Scene<f64>,
        /// Outlier fractions in [0, 1].
        pub fractions: Vec<f64>,
        pub delta: f64,
        pub trials_paper: usize,
        pub trials_desk: usize,
        pub snrs_db: Vec<f64>,
    }

    fn scene(m: usize, p: usize, noise_var: f64, seed: u64) -> Scene<f64> {
        Scene::new(m, p, TRUE_DOAS_DEG.to_vec(), USER_POWER, noise_var, seed)
    }

    /// Single-realization spectra at η ∈ {0, 20}%.
    pub fn spectrum(seed: u64) -> Preset {
        Preset {
            scene: scene(32, 100, fixed_noise_var(), seed),
            fractions: vec![0.0, 0.2],
            delta: 3.0,
            trials_paper: 1,
            trials_desk: 1,
            snrs_db: Vec::new(),
        }
    }

    /// RMSE versus outlier fraction η ∈ {0, 10, …, 90}%.
    pub fn corruption_sweep(seed: u64) -> Preset {
        Preset {
            scene: scene(32, 500, fixed_noise_var(), seed),
            fractions: (0..10).map(|i| i as f64 / 10.0).collect(),
            delta: 10.0,
            trials_paper: 100,
            trials_desk: 20,
            snrs_db: Vec::new(),
        }
    }

    /// RMSE versus SNR 0–20 dB in 4 dB steps, at η ∈ {0, 25}%.
    pub fn snr_sweep(seed: u64) -> Preset {
        Preset {
            scene: scene(8, 200, fixed_noise_var(), seed),
            fractions: vec![0.0, 0.25],
            delta: 39.0,
            trials_paper: 500,
            trials_desk: 50,
            snrs_db: (0..6).map(|i| 4.0 * i as f64).collect(),
        }
    }
}
