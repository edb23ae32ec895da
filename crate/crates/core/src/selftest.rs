//! Fast invariant checks behind `rydoa selftest`.

use nalgebra::DMatrix;

use crate::doa::{self, AngularGrid};
use crate::experiments::{self, Experiment};
use crate::model::{self, OutlierSpec, PhysicalConstants, Scene};
use crate::retrieval::{self, RetrievalConfig};
use crate::rng::{self, Component};
use crate::scalar::Complex;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, run: impl FnOnce() -> crate::Result<(bool, String)>) -> Check {
    match run() {
        Ok((passed, detail)) => Check {
            name,
            passed,
            detail,
        },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn small_scene(noise_var: f64, seed: u64) -> Scene<f64> {
    Scene::new(8, 60, vec![40.0, -60.0], 1e-18, noise_var, seed)
}

fn corrupted(
    scene: &Scene<f64>,
    eta: f64,
    trial: u64,
) -> crate::Result<model::MeasurementSet<f64>> {
    let mut ms = model::synthesize_measurements(scene, &PhysicalConstants::default(), trial)?;
    let typical = ms.clean.iter().sum::<f64>() / ms.clean.len() as f64;
    let mut r = rng::substream(scene.seed, Component::Outliers, trial);
    ms.corrupt(&OutlierSpec::new(eta, 5.0 * typical), &mut r)?;
    Ok(ms)
}

fn subspace_oracle() -> crate::Result<(bool, String)> {
    let doas = [40.0, -60.0, 5.0];
    let m = 8;
    let a = DMatrix::from_fn(m, 3, |i, j| doa::probe_vector(doas[j], m)[i]);
    let r = &a * a.adjoint();
    let noise = doa::noise_subspace(&r, 3)?;
    let worst = doas
        .iter()
        .map(|&t| (noise.basis.adjoint() * doa::probe_vector(t, m)).norm())
        .fold(0.0, f64::max);
    Ok((worst < 1e-8, format!("max |U_N^H a| = {worst:.2e}")))
}

fn baseline_parity() -> crate::Result<(bool, String)> {
    let scene = small_scene(1e-4, 11);
    let one = RetrievalConfig {
        inner_iters: 1,
        ..RetrievalConfig::robust()
    };
    let mut worst = 0.0f64;
    for trial in 0..5 {
        let ms = corrupted(&scene, 0.1, trial)?;
        let l1 = retrieval::recover_channel_matrix(&ms.corrupted, &ms.pilots, ms.bias, &one)?;
        let l2 = retrieval::recover_channel_matrix(
            &ms.corrupted,
            &ms.pilots,
            ms.bias,
            &RetrievalConfig::baseline(),
        )?;
        worst = worst.max((&l1.h_hat - &l2.h_hat).norm() / l2.h_hat.norm());
    }
    Ok((worst <= 1e-10, format!("max relative gap {worst:.2e}")))
}

fn majorization() -> crate::Result<(bool, String)> {
    let scene = small_scene(0.0, 12);
    let cfg = RetrievalConfig::robust();
    let mut steps = 0;
    let mut violations = 0;
    for trial in 0..3 {
        let ms = corrupted(&scene, 0.2, trial)?;
        for m in 0..scene.num_sensors {
            let z: Vec<f64> = ms.corrupted.row(m).iter().copied().collect();
            let h0 = retrieval::spectral_init(&ms.pilots, ms.bias, &z, cfg.init_weighting)?.h;
            let target: Vec<Complex<f64>> = retrieval::phase_update(&h0, &ms.pilots, ms.bias, &z)
                .iter()
                .map(|y| y - ms.bias)
                .collect();
            let mut trace = Vec::new();
            retrieval::amplitude_update(&ms.pilots, &target, &h0, &cfg, Some(&mut trace))?;
            steps += trace.len();
            violations += trace
                .iter()
                .filter(|s| s.weighted_after > s.weighted_before * (1.0 + 1e-12))
                .count();
        }
    }
    Ok((
        violations == 0,
        format!("{violations} violations in {steps} steps"),
    ))
}

fn noiseless_end_to_end() -> crate::Result<(bool, String)> {
    let exp = Experiment::new(small_scene(0.0, 13), OutlierSpec::none(), 400)?;
    let record = experiments::run_trial(&exp, 0)?;
    let step = exp.grid.step();
    let ok = record.outcomes.iter().all(|o| {
        exp.scene
            .doas_deg
            .iter()
            .all(|t| o.doa_estimates_deg.iter().any(|e| (e - t).abs() <= step))
    });
    let est: Vec<_> = record
        .outcomes
        .iter()
        .map(|o| o.doa_estimates_deg.clone())
        .collect();
    Ok((ok, format!("estimates {est:?}, grid step {step:.3}")))
}

fn determinism() -> crate::Result<(bool, String)> {
    let exp = Experiment::new(small_scene(1e-3, 14), OutlierSpec::new(0.1, 0.5), 200)?;
    let a = experiments::run_trial(&exp, 3)?;
    let b = experiments::run_trial(&exp, 3)?;
    let paired = a.outcomes.len() == exp.estimators.len();
    Ok((
        a == b && paired,
        format!("input digest {:016x}", a.input_digest),
    ))
}

fn rmse_assignment() -> crate::Result<(bool, String)> {
    let truth = [40.0, -60.0];
    let a = experiments::rmse(&[vec![40.3, -59.1]], &truth);
    let b = experiments::rmse(&[vec![-59.1, 40.3]], &truth);
    Ok((a == b, format!("rmse {a:.4}")))
}

fn op_scaling() -> crate::Result<(bool, String)> {
    let exp = Experiment::new(small_scene(0.0, 15), OutlierSpec::none(), 200)?;
    let cfg = RetrievalConfig {
        outer_iters: 5,
        ..RetrievalConfig::robust()
    };
    let report = experiments::complexity_scaling(&exp, &cfg)?;
    Ok((
        report.is_linear(0.1),
        format!(
            "IRLS x{:.3}, MUSIC x{:.3}",
            report.irls_ratio, report.music_ratio
        ),
    ))
}

fn grid_edges() -> crate::Result<(bool, String)> {
    let grid = AngularGrid::<f64>::new(2000)?;
    let p = grid.points();
    Ok((
        p[0] == -90.0 && p[p.len() - 1] == 90.0,
        format!("step {:.5}", grid.step()),
    ))
}

pub fn run_all() -> Vec<Check> {
    vec![
        check("subspace-oracle", subspace_oracle),
        check("t1-parity", baseline_parity),
        check("irls-majorization", majorization),
        check("noiseless-end-to-end", noiseless_end_to_end),
        check("trial-determinism", determinism),
        check("rmse-assignment", rmse_assignment),
        check("op-count-scaling", op_scaling),
        check("grid-edges", grid_edges),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
