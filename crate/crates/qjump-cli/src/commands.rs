//! Subcommand implementations. Each returns the JSON summary line.

use num_complex::Complex64;
use qjump::analytics::{
    build_jump_overlay, initial_superposition_photon, null_record_photon_approx, null_record_photon_exact,
    SuperpositionSpec,
};
use qjump::fock::{coherent_ket, partial_trace_atom, q_function, superposition_ket, wigner_function, AtomLevel, Basis};
use qjump::heterodyne::{
    charge_fit, dwell_times, projective_readout, run_heterodyne_trajectory_from, sample_charges, charge_samples_csv,
    ChargeOptions, ChargeSource,
};
use qjump::mcwf::{
    classify_jumps, parse_record_samples, run_trajectory_mixed, run_trajectory_pure_from, JumpCounts, MixedOptions,
    TrajectoryConfig,
};
use qjump::models::ModelKind;
use qjump::rng::derive_seed;
use qjump::semiclassical::{
    localization_bound, localization_intersection, mbe_integrate, neoclassical_roots, trajectory_csv,
    SemiclassicalState,
};
use qjump::steady::{kerr_wigner_grid, steady_state, SteadyMethod, SteadyOptions};
use qjump::{Error, GridSpec, Result, StateVector};
use serde_json::{json, Value};

use crate::config::{Initial, RunConfig};
use crate::io::Writer;

fn io_err(e: std::io::Error) -> Error {
    Error::Io(e)
}

fn trajectory_seed(cfg: &RunConfig, i: usize) -> u64 {
    if cfg.n_traj == 1 {
        cfg.seed
    } else {
        derive_seed(cfg.seed, i as u64)
    }
}

fn grid(cfg: &RunConfig) -> Result<GridSpec> {
    GridSpec::square(cfg.grid_half_width, cfg.grid_points)
}

/// Cavity state requested by `initial`, in `basis` (atom in its ground state
/// when present).
fn initial_state(cfg: &RunConfig, basis: Basis) -> Result<StateVector> {
    let l = basis.l_max();
    let cav = match cfg.initial {
        Initial::Vacuum => StateVector::vacuum(Basis::Fock { l_max: l }),
        Initial::Coherent => coherent_ket(cfg.alpha1().expect("validated"), l)?,
        Initial::Superposition => superposition_ket(cfg.alpha1().expect("validated"), cfg.alpha2().expect("validated"), l)?,
        Initial::Meters => return Err(Error::Validation("initial = meters applies to the charge command only".into())),
    };
    if basis.has_atom() {
        cav.with_atom(AtomLevel::Lower)
    } else {
        Ok(cav)
    }
}

fn counts_json(k: &JumpCounts) -> Value {
    json!({"events": k.total(), "upward": k.upward, "downward": k.downward, "upward_fraction": k.upward_fraction()})
}

pub fn mcwf(cfg: &RunConfig, w: &mut Writer) -> Result<Value> {
    let p = cfg.params()?;
    let basis = p.basis(cfg.l_max);
    let init = initial_state(cfg, basis)?;
    let mut counts = JumpCounts::default();
    let mut final_n = Vec::new();
    let mut warnings = Vec::new();
    let spec = grid(cfg)?;
    for i in 0..cfg.n_traj {
        let seed = trajectory_seed(cfg, i);
        let tc = TrajectoryConfig::new(cfg.l_max, cfg.dt(), cfg.t_final, seed)
            .with_sampling(cfg.sample_every)
            .with_snapshots(cfg.snapshot_times.clone());
        let rec = if p.n_bar == 0.0 && p.eta == 1.0 {
            run_trajectory_pure_from(&p, &tc, &init, |_| {})?
        } else {
            run_trajectory_mixed(&p, &tc, &init.to_density(), &MixedOptions::default())?
        };
        counts.merge(&classify_jumps(&rec));
        final_n.push(rec.samples.last().map_or(f64::NAN, |s| s.n));
        warnings.extend(rec.warnings.iter().cloned());
        w.write(seed, "", "jsonl", &rec.to_jsonl()?).map_err(io_err)?;
        if cfg.formats.iter().any(|f| f == "csv") {
            for (k, snap) in rec.snapshots.iter().enumerate() {
                let q = q_function(&snap.cavity_density(), spec);
                w.write(seed, &format!("q{k}"), "csv", &q.to_csv()).map_err(io_err)?;
            }
        }
    }
    let mean_n = final_n.iter().sum::<f64>() / final_n.len() as f64;
    Ok(json!({
        "command": "mcwf",
        "trajectories": cfg.n_traj,
        "jumps": counts_json(&counts),
        "mean_final_n": mean_n,
        "warnings": warnings.len(),
        "files": w.files(),
    }))
}

pub fn heterodyne(cfg: &RunConfig, w: &mut Writer) -> Result<Value> {
    let p = cfg.params()?;
    let basis = p.basis(cfg.l_max);
    let init = initial_state(cfg, basis)?;
    let mut consistent = true;
    let mut dim = 0usize;
    let mut bright = 0usize;
    let n_scale = (p.g / (2.0 * p.kappa)).powi(2);
    for i in 0..cfg.n_traj {
        let seed = trajectory_seed(cfg, i);
        let tc = TrajectoryConfig::new(cfg.l_max, cfg.dt(), cfg.t_final, seed).with_sampling(cfg.sample_every);
        let rec = run_heterodyne_trajectory_from(&p, &tc, &init, |_| {})?;
        consistent &= rec.noise.steps < 100_000 || rec.noise.is_consistent();
        let d = dwell_times(&rec.sample_pairs(), 1.0, 0.5 * n_scale.max(2.0));
        dim += d.dim.len();
        bright += d.bright.len();
        w.write(seed, "", "jsonl", &rec.to_jsonl()?).map_err(io_err)?;
    }
    Ok(json!({
        "command": "heterodyne",
        "trajectories": cfg.n_traj,
        "noise_consistent": consistent,
        "dim_stays": dim,
        "bright_stays": bright,
        "files": w.files(),
    }))
}

pub fn charge(cfg: &RunConfig, w: &mut Writer) -> Result<Value> {
    let opts = ChargeOptions { nu_steps: cfg.nu_steps, ..Default::default() };
    if cfg.initial == Initial::Meters {
        let (a1, a2) = (cfg.alpha1().expect("validated"), cfg.alpha2().expect("validated"));
        let c = [Complex64::new(cfg.meter_weight.sqrt(), 0.0), Complex64::new((1.0 - cfg.meter_weight).sqrt(), 0.0)];
        let recs: Vec<_> = (0..cfg.n_traj)
            .map(|i| projective_readout(&c, &[a1, a2], derive_seed(cfg.seed, i as u64), &opts))
            .collect::<Result<_>>()?;
        let first = recs.iter().filter(|r| r.branch == Some(0)).count();
        w.write(cfg.seed, "", "csv", &charge_samples_csv(&recs)).map_err(io_err)?;
        return Ok(json!({
            "command": "charge",
            "samples": recs.len(),
            "branch0_fraction": first as f64 / recs.len() as f64,
            "files": w.files(),
        }));
    }
    let init = initial_state(cfg, Basis::Fock { l_max: cfg.l_max })?;
    let recs = sample_charges(&ChargeSource::Ket(init.clone()), cfg.n_traj, cfg.seed, &opts, cfg.workers)?;
    w.write(cfg.seed, "", "csv", &charge_samples_csv(&recs)).map_err(io_err)?;
    let q: Vec<Complex64> = recs.iter().map(|r| r.q_conj()).collect();
    let fit = charge_fit(&init, &q)?;
    Ok(json!({
        "command": "charge",
        "samples": recs.len(),
        "chi2": fit.fit.chi2,
        "dof": fit.fit.dof,
        "p_value": fit.fit.p_value,
        "mean_q_conj": [fit.mean_q_conj.0, fit.mean_q_conj.1],
        "files": w.files(),
    }))
}

fn steady_opts(cfg: &RunConfig) -> SteadyOptions {
    SteadyOptions { method: SteadyMethod::Direct, tol: cfg.tol }
}

pub fn steady(cfg: &RunConfig, w: &mut Writer) -> Result<Value> {
    let p = cfg.params()?;
    let r = steady_state(&p, cfg.l_max, steady_opts(cfg))?;
    if cfg.formats.iter().any(|f| f == "csv") {
        let rc = partial_trace_atom(&r.rho);
        let spec = grid(cfg)?;
        w.write(cfg.seed, "q", "csv", &q_function(&rc, spec).to_csv()).map_err(io_err)?;
        w.write(cfg.seed, "wigner", "csv", &wigner_function(&rc, spec).to_csv()).map_err(io_err)?;
    }
    Ok(json!({
        "command": "steady",
        "n_ss": r.photon_number,
        "g2": r.g2,
        "residual": r.residual,
        "min_eigenvalue": r.min_eigenvalue,
        "files": w.files(),
    }))
}

pub fn kerr(cfg: &RunConfig, w: &mut Writer) -> Result<Value> {
    let p = cfg.params()?;
    if p.kind != ModelKind::Kerr || p.chi == 0.0 {
        return Err(Error::Validation("the kerr command needs model = kerr".into()));
    }
    let r = steady_state(&p, cfg.l_max, steady_opts(cfg))?;
    let spec = grid(cfg)?;
    let numeric = wigner_function(&r.rho, spec);
    let analytic = kerr_wigner_grid(&p, spec)?;
    let err = numeric.max_abs_diff(&analytic);
    w.write(cfg.seed, "wigner-numeric", "csv", &numeric.to_csv()).map_err(io_err)?;
    w.write(cfg.seed, "wigner-analytic", "csv", &analytic.to_csv()).map_err(io_err)?;
    Ok(json!({
        "command": "kerr",
        "n_ss": r.photon_number,
        "g2": r.g2,
        "max_abs_error": err,
        "files": w.files(),
    }))
}

pub fn semiclassical(cfg: &RunConfig, w: &mut Writer) -> Result<Value> {
    let p = cfg.params()?;
    let roots = neoclassical_roots(&p)?;
    w.write(cfg.seed, "roots", "csv", &roots.to_csv()).map_err(io_err)?;
    let mut drift = Value::Null;
    if cfg.t_final > 0.0 {
        let traj = mbe_integrate(SemiclassicalState::ground(Complex64::new(0.0, 0.0)), &p, cfg.t_final, cfg.dt())?;
        let d = traj.iter().map(|(_, s)| (s.bloch_length() - 1.0).abs()).fold(0.0, f64::max);
        drift = json!(d);
        w.write(cfg.seed, "mbe", "csv", &trajectory_csv(&traj)).map_err(io_err)?;
    }
    let labelled: Vec<Value> = roots
        .roots
        .iter()
        .enumerate()
        .map(|(i, r)| json!({"label": roots.label(i), "amp_scaled_sq": r.amp_scaled_sq, "amp_unscaled": r.amp_unscaled}))
        .collect();
    Ok(json!({
        "command": "semiclassical",
        "n_scale": roots.n_scale,
        "roots": labelled,
        "bloch_drift": drift,
        "files": w.files(),
    }))
}

pub fn analytics(cfg: &RunConfig, w: &mut Writer) -> Result<Value> {
    let (Some(a1), Some(a2)) = (cfg.alpha1(), cfg.alpha2()) else {
        return Err(Error::Validation("analytics needs alpha1 and alpha2".into()));
    };
    let s = SuperpositionSpec::new(a1, a2)?;
    let bound = localization_bound(a1, a2)?;
    let dt_end = localization_intersection(a1, a2)?;
    let n0 = initial_superposition_photon(&s);
    let t_end = if cfg.is_set("t_final") { cfg.t_final } else { 0.3 };
    let dt = cfg.dt.unwrap_or(1e-3);
    let steps = (t_end / dt).round() as usize;
    let mut csv = String::from("t,n_exact,n_approx\n");
    for k in 0..=steps {
        let t = k as f64 * dt;
        csv.push_str(&format!(
            "{t:.9e},{:.9e},{:.9e}\n",
            null_record_photon_exact(&s, t),
            null_record_photon_approx(&s, t)
        ));
    }
    w.write(cfg.seed, "null-record", "csv", &csv).map_err(io_err)?;
    let mut overlay = Value::Null;
    if let Some(path) = &cfg.record {
        let text = std::fs::read_to_string(path).map_err(io_err)?;
        let samples = parse_record_samples(&text)?;
        let window = (
            cfg.window_start.unwrap_or(f64::NEG_INFINITY),
            cfg.window_stop.unwrap_or(f64::INFINITY),
        );
        let o = build_jump_overlay(&samples, &s, window)?;
        w.write(cfg.seed, "overlay", "csv", &o.to_csv()).map_err(io_err)?;
        overlay = json!({"t_mid": o.t_mid, "n_mid": o.n_mid, "deviation": o.deviation});
    }
    Ok(json!({
        "command": "analytics",
        "n_initial": n0,
        "bound": bound,
        "intersection": dt_end,
        "overlay": overlay,
        "files": w.files(),
    }))
}

/// One line of the benchmark table.
pub struct BenchRow {
    pub name: &'static str,
    pub reference: f64,
    /// Absolute tolerance against the reference value.
    pub tol: f64,
    pub ours: f64,
}

impl BenchRow {
    pub fn agrees(&self) -> bool {
        (self.ours - self.reference).abs() <= self.tol
    }
}

pub const EXPECTED_TABLE: &str = include_str!("../bench/expected.tsv");

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Recomputes every tabulated benchmark.
pub fn bench_rows() -> Result<Vec<BenchRow>> {
    use qjump::models::ModelParams;
    let mut rows = Vec::new();
    let mut row = |name, reference: f64, tol, ours| rows.push(BenchRow { name, reference, tol, ours });
    let opts = SteadyOptions::default();

    let r = steady_state(&ModelParams::jaynes_cummings(25.0, 5.3, -8.0), 25, opts)?;
    row("steady_low_n", 2.46, 0.02 * 2.46, r.photon_number);
    row("steady_low_g2", 1.75, 0.03 * 1.75, r.g2);
    let r = steady_state(&ModelParams::jaynes_cummings(60.0, 13.5, -8.0), 70, opts)?;
    row("steady_high_n", 14.65, 0.02 * 14.65, r.photon_number);
    row("steady_high_g2", 1.89, 0.03 * 1.89, r.g2);

    let r = qjump::steady::multiphoton_reference(&ModelParams::jaynes_cummings(50.0, 5.3, 36.10))?;
    row("multiphoton_a_n", 0.56, 0.05 * 0.56, r.photon_number);
    row("multiphoton_a_g2", 0.85, 0.05 * 0.85, r.g2);
    let r = qjump::steady::multiphoton_reference(&ModelParams::jaynes_cummings(50.0, 5.3, 29.35))?;
    row("multiphoton_b_n", 0.39, 0.05 * 0.39, r.photon_number);
    row("multiphoton_b_g2", 2.31, 0.05 * 2.31, r.g2);

    row("bound_high_pair", 0.051, 0.002, localization_bound(c(1.7, -5.15), c(-2.25, -0.2))?);
    row("bound_semiclassical", 0.053, 0.002, localization_bound(c(5.30, 0.0), c(2.08, 0.0))?);
    row("bound_ramp_2kdt", 0.146, 0.002, 2.0 * localization_bound(c(1.9, -3.95), c(1.4, -0.8))?);
    row("intersection_high_pair", 0.0743, 0.0005, localization_intersection(c(1.7, -5.15), c(-2.25, -0.2))?);
    row("intersection_magnitudes", 0.073, 0.001, localization_intersection(c(1.8, -5.45), c(1.8, 0.0))?);

    let roots = neoclassical_roots(&ModelParams::jaynes_cummings(60.0, 13.5, -8.0))?;
    let k = roots.roots.len();
    if k < 2 {
        return Err(Error::Numerical(format!("expected three neoclassical roots, found {k}")));
    }
    row("root_middle", 2.08, 0.01 * 2.08, roots.roots[k - 2].amp_unscaled);
    row("root_upper", 5.30, 0.01 * 5.30, roots.roots[k - 1].amp_unscaled);

    let r = steady_state(&ModelParams::kerr(2.0, 16.5, 20.0), 40, opts)?;
    row("kerr_n", 8.11, 0.02 * 8.11, r.photon_number);
    row("kerr_g2", 1.42, 0.03 * 1.42, r.g2);
    Ok(rows)
}

pub fn format_table(rows: &[BenchRow]) -> String {
    let mut s = String::from("name\treference\ttol\tours\n");
    for r in rows {
        s.push_str(&format!("{}\t{}\t{:.4}\t{:.4}\n", r.name, r.reference, r.tol, r.ours));
    }
    s
}

/// Regenerates the table, writes it, and compares with the checked-in copy.
/// Returns the summary and whether everything matched.
pub fn bench(w: &mut Writer, seed: u64) -> Result<(Value, bool)> {
    let rows = bench_rows()?;
    let table = format_table(&rows);
    w.write(seed, "table", "tsv", &table).map_err(io_err)?;
    let diff: Vec<String> = EXPECTED_TABLE
        .lines()
        .zip(table.lines())
        .filter(|(a, b)| a != b)
        .map(|(a, b)| format!("expected `{a}` got `{b}`"))
        .chain((EXPECTED_TABLE.lines().count() != table.lines().count()).then(|| "row count differs".to_string()))
        .collect();
    let off_reference: Vec<&str> = rows.iter().filter(|r| !r.agrees()).map(|r| r.name).collect();
    let ok = diff.is_empty() && off_reference.is_empty();
    Ok((
        json!({
            "command": "bench",
            "rows": rows.len(),
            "diff": diff,
            "outside_tolerance": off_reference,
            "ok": ok,
            "files": w.files(),
        }),
        ok,
    ))
}
