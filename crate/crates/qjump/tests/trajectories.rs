use qjump::fock::{superposition_ket, Basis};
use qjump::{DensityMatrix, StateVector};
use qjump::heterodyne::{
    heterodyne_ensemble, projective_readout, run_heterodyne_trajectory, sample_charges, ChargeOptions, ChargeSource,
};
use qjump::mcwf::{run_trajectory_mixed, MixedOptions, TrajectoryConfig};
use qjump::models::{Dynamics, ModelParams};
use qjump::stats::{ks_test, mean_se, normal_cdf};
use qjump::steady::{ground_density, integrate_master_equation, steady_state, SteadyOptions};
use qjump::Complex64;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Largest `|ρ_mn|` with `m < lo` and `n ≥ hi`: coherence between the two
/// photon-number bands, skipping the gap where the components overlap.
fn cross_block_max(rho: &DensityMatrix, lo: usize, hi: usize) -> f64 {
    let d = rho.basis().dim();
    let mut m = 0.0f64;
    for i in 0..lo.min(d) {
        for j in hi..d {
            m = m.max(rho.get(i, j).norm());
        }
    }
    m
}

/// Conditional state of a decaying two-component superposition after one
/// click at `click`, at the later snapshot whose `⟨n⟩` is nearest `target`.
fn localized_coherence(n_bar: f64, eta: f64, click: f64, target: f64) -> (DensityMatrix, f64) {
    let l = 60;
    let psi = superposition_ket(c(1.7, -5.15), c(-2.25, -0.2), l).unwrap();
    let p = ModelParams::empty_cavity(0.0, 0.0).with_thermal(n_bar, eta);
    let times: Vec<f64> = (1..=150).map(|k| 0.001 * k as f64).collect();
    let cfg = TrajectoryConfig::new(l, 0.0005, 0.15, 3).with_snapshots(times);
    let opts = MixedOptions { prescribed_clicks: Some(vec![click]), ..MixedOptions::default() };
    let rec = run_trajectory_mixed(&p, &cfg, &psi.to_density(), &opts).unwrap();
    let best = rec
        .snapshots
        .iter()
        .filter(|s| s.t > click)
        .map(|s| s.density())
        .min_by(|a, b| (a.mean_photon_number() - target).abs().total_cmp(&(b.mean_photon_number() - target).abs()))
        .unwrap();
    let coherence = cross_block_max(&best, 9, 18);
    (best, coherence)
}

#[test]
fn detector_inefficiency_and_thermal_noise_erase_coherence() {
    let (r1, pure) = localized_coherence(0.0, 1.0, 0.01, 14.8);
    let (r2, half) = localized_coherence(0.0, 0.5, 0.01, 14.8);
    let (r3, thermal) = localized_coherence(1.0, 0.5, 0.01, 14.8);
    for r in [&r1, &r2, &r3] {
        assert!((r.mean_photon_number() - 14.8).abs() < 0.5);
    }
    assert!(half > 0.2 * pure && half < pure, "{half} vs {pure}");
    assert!(thermal < 0.05 * pure, "{thermal} vs {pure}");
}

#[test]
fn coherent_components_forget_click_times() {
    // A click rescales each coherent component by its amplitude, so for a
    // zero-temperature bath only the number of clicks matters.
    let (early, _) = localized_coherence(0.0, 0.5, 0.005, 14.8);
    let (late, _) = localized_coherence(0.0, 0.5, 0.02, 14.8);
    assert!(early.distance(&late).unwrap() < 1e-6);
}

#[test]
fn projective_readout_frequencies() {
    let meters = [c(3.0, 0.0), c(-3.0, 0.0)];
    let opts = ChargeOptions::default();
    for w in [0.5f64, 0.8] {
        let coeff = [c(w.sqrt(), 0.0), c((1.0 - w).sqrt(), 0.0)];
        let first = (0..2000)
            .filter(|&i| projective_readout(&coeff, &meters, 500 + i, &opts).unwrap().branch == Some(0))
            .count() as f64
            / 2000.0;
        assert!((first - w).abs() < 0.03, "w = {w}: {first}");
    }
    let bad = [c(0.9, 0.0), c(0.9, 0.0)];
    assert!(projective_readout(&bad, &meters, 1, &opts).unwrap_err().is_validation());
}

#[test]
fn coherent_charge_is_gaussian_around_alpha() {
    let alpha = c(1.0, 2.0);
    let psi = qjump::fock::coherent_ket(alpha, 30).unwrap();
    let recs = sample_charges(&ChargeSource::Ket(psi), 3000, 44, &ChargeOptions::default(), 0).unwrap();
    let xs: Vec<f64> = recs.iter().map(|r| r.q_conj().re).collect();
    let ys: Vec<f64> = recs.iter().map(|r| r.q_conj().im).collect();
    // Q function of |α⟩: independent Gaussians of variance 1/2 in each quadrature.
    let sd = 0.5f64.sqrt();
    let (mx, sx) = mean_se(&xs);
    let (my, sy) = mean_se(&ys);
    assert!((mx - 1.0).abs() < 4.0 * sx && (my - 2.0).abs() < 4.0 * sy, "{mx} {my}");
    assert!(ks_test(&xs, |x| normal_cdf(x, 1.0, sd)).1 > 0.01);
    assert!(ks_test(&ys, |y| normal_cdf(y, 2.0, sd)).1 > 0.01);
}

fn heterodyne_vs_master_equation(n_traj: usize) {
    let p = ModelParams::jaynes_cummings(25.0, 5.3, -8.0);
    let l = 20;
    let ens = heterodyne_ensemble(&p, l, 0.001, n_traj, &[10.0], 7, None, 0).unwrap();
    let dynamics = Dynamics::new(&p, l).unwrap();
    let me = integrate_master_equation(&dynamics, &ground_density(&p, l), 0.001, &[10.0]).unwrap();
    let n_me = qjump::fock::partial_trace_atom(&me[0]).mean_photon_number();
    let z: f64 = (ens.n_mean[0] - n_me) / ens.n_se[0];
    println!("heterodyne {:.3} ± {:.3}, ME {n_me:.3}", ens.n_mean[0], ens.n_se[0]);
    assert!(z.abs() < 3.0, "z = {z}");
}

#[test]
fn heterodyne_ensemble_matches_master_equation() {
    heterodyne_vs_master_equation(300);
}

#[test]
#[ignore = "2000 trajectories; several minutes on one core"]
fn heterodyne_ensemble_matches_master_equation_full() {
    heterodyne_vs_master_equation(2000);
}

#[test]
fn heterodyne_record_switches_between_bands() {
    let p = ModelParams::jaynes_cummings(50.0, 13.5, -8.0);
    let cfg = TrajectoryConfig::new(60, 0.0005, 800.0, 2).with_sampling(200);
    let rec = run_heterodyne_trajectory(&p, &cfg).unwrap();
    let n: Vec<f64> = rec.samples.iter().map(|s| s.n_cond).collect();
    let dim = n.iter().filter(|&&x| x < 2.0).count();
    let bright = n.iter().filter(|&&x| x > 14.0).count();
    assert!(dim > 0 && bright > 0, "dim {dim}, bright {bright} of {}", n.len());
    assert!(rec.noise.is_consistent());
}

#[test]
fn single_precision_smoke() {
    let p = ModelParams::<f32>::jaynes_cummings(25.0, 5.3, -8.0);
    let r32 = steady_state(&p, 15, SteadyOptions { tol: 1e-4, ..SteadyOptions::default() }).unwrap();
    let r64 = steady_state(&ModelParams::jaynes_cummings(25.0, 5.3, -8.0), 15, SteadyOptions::default()).unwrap();
    assert!((r32.photon_number as f64 - r64.photon_number).abs() < 1e-2 * r64.photon_number);
    let rec = qjump::mcwf::run_trajectory_pure(&p, &TrajectoryConfig::new(15, 0.002f32, 2.0, 1)).unwrap();
    assert!(rec.samples.iter().all(|s| s.n.is_finite()));
    let psi = StateVector::vacuum(Basis::Fock { l_max: 5 });
    assert_eq!(psi.norm_sqr(), 1.0);
}
