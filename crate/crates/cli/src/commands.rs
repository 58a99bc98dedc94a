//! Subcommand implementations. Each writes JSON reports and CSV tables into
//! the output directory plus a manifest.

use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use gabor_fio::acceptance::{self, Outcome};
use gabor_fio::analysis::{
    decay_report, distance_equivalence, fit_line, mod_norm, operator_norm_experiment, raw_decay_constants,
    schur_sums, weighted_kernel_quotient, NormRatioReport,
};
use gabor_fio::fio::{gabor_matrix_direct, gabor_matrix_via_symbol_stft, GaborMatrix, Symbol};
use gabor_fio::gabor::{stft, WindowKind};
use gabor_fio::grid::{standard_gaussian, SampledFunction};
use gabor_fio::io::{
    create, write_function, write_json, write_matrix, write_profile, write_ratio_table, write_series, Series,
};
use gabor_fio::metaplectic::{free_particle_multiplier, phase_aligned_distance, schrodinger_demo, HamiltonianQuadratic};
use gabor_fio::phase::{canonical_map_quadratic, CanonicalMap, NewtonMap, PhaseSpec, QuadraticPhaseRecord};
use gabor_fio::Result;
use serde::Serialize;
use serde_json::json;

use crate::config::Experiment;
use crate::report::{Envelope, Manifest, Meta, ARTIFACT_VERSION};
use crate::{Command, Failure};

struct Run<'a> {
    exp: &'a Experiment,
    command: &'static str,
    manifest: Manifest,
}

impl<'a> Run<'a> {
    fn json<T: Serialize>(&mut self, name: &str, report: T) -> Result<()> {
        let path = self.exp.output(name);
        create(&path)?;
        let env = Envelope {
            meta: Meta { command: self.command, config_hash: &self.exp.hash, version: ARTIFACT_VERSION },
            report,
        };
        write_json(&path, &env)?;
        self.manifest.record(&path);
        Ok(())
    }

    fn file(&mut self, name: &str, write: impl FnOnce(File) -> Result<()>) -> Result<()> {
        let path = self.exp.output(name);
        write(create(&path)?)?;
        self.manifest.record(&path);
        Ok(())
    }
}

pub fn run(command: Command, exp: &Experiment) -> std::result::Result<(), Failure> {
    let mut run = Run { exp, command: command.name(), manifest: Manifest::new(command.name(), &exp.hash) };
    let verdict = match command {
        Command::Stft => stft_cmd(&mut run),
        Command::Frame => frame_cmd(&mut run),
        Command::GaborMatrix => gabor_matrix_cmd(&mut run),
        Command::Decay => decay_cmd(&mut run),
        Command::Schur => schur_cmd(&mut run),
        Command::Modnorm => modnorm_cmd(&mut run),
        Command::ChirpDemo => demo_cmd(&mut run, false),
        Command::MultiplierDemo => demo_cmd(&mut run, true),
        Command::Schrodinger => schrodinger_cmd(&mut run),
        Command::Selftest { only } => return selftest_cmd(run, &only),
    };
    verdict?;
    run.manifest.finish(&exp.config.output_dir)?;
    Ok(())
}

fn coords_header(d: usize, extra: &[&'static str]) -> Vec<&'static str> {
    let mut cols: Vec<&'static str> = if d == 1 { vec!["x", "eta"] } else { vec!["x1", "x2", "eta1", "eta2"] };
    cols.extend_from_slice(extra);
    cols
}

fn stft_cmd(run: &mut Run) -> Result<()> {
    let exp = run.exp;
    let d = exp.grid.d();
    let f = exp.input()?;
    let v = stft(&f, &exp.window()?)?;
    let mut s = Series::new("stft-magnitude", &coords_header(d, &["abs"]));
    let mut peak: f64 = 0.0;
    for t in 0..v.time_count() {
        let x = v.time_coord(t);
        for k in 0..v.freq_count() {
            let e = v.freq_coord(k);
            let a = v.at(t, k).norm();
            peak = peak.max(a);
            let mut row: Vec<f64> = x[..d].to_vec();
            row.extend_from_slice(&e[..d]);
            row.push(a);
            s.push(row);
        }
    }
    run.file("stft.csv", |w| write_series(w, &s))?;
    run.json(
        "stft.json",
        json!({
            "input_norm": f.norm_l2(),
            "window_norm": exp.window()?.norm_l2(),
            "stft_norm": v.norm_l2(),
            "peak": peak,
        }),
    )
}

fn frame_cmd(run: &mut Run) -> Result<()> {
    let sys = run.exp.system()?;
    let (lower, upper) = sys.bounds();
    for (name, kind) in [("window.csv", WindowKind::Original), ("dual.csv", WindowKind::Dual), ("tight.csv", WindowKind::Tight)] {
        let g = sys.window(kind).clone();
        run.file(name, |w| write_function(w, &g))?;
    }
    let lat = sys.lattice();
    run.json(
        "frame.json",
        json!({
            "alpha": lat.alpha(),
            "beta": lat.beta(),
            "lattice_points": lat.len(),
            "lower_bound": lower,
            "upper_bound": upper,
            "condition": upper / lower,
            "dual_norm": sys.window(WindowKind::Dual).norm_l2(),
            "tight_norm": sys.window(WindowKind::Tight).norm_l2(),
        }),
    )
}

fn direct_matrix(exp: &Experiment) -> Result<GaborMatrix> {
    gabor_matrix_direct(exp.phase.as_ref(), &exp.symbol, &exp.system()?, exp.config.window.kind, exp.config.epsilon)
}

fn gabor_matrix_cmd(run: &mut Run) -> Result<()> {
    let exp = run.exp;
    let sys = exp.system()?;
    let direct = direct_matrix(exp)?;
    let sampled = exp.symbol.sample(&exp.grid)?;
    let via = gabor_matrix_via_symbol_stft(exp.phase.as_ref(), &sampled, &sys, exp.config.window.kind, exp.config.epsilon)?;
    run.file("matrix_direct.csv", |w| write_matrix(w, &direct))?;
    run.file("matrix_symbol_stft.csv", |w| write_matrix(w, &via))?;
    let diff = direct.max_difference(&via)?;
    run.json(
        "gabor_matrix.json",
        json!({
            "phase": exp.phase.name(),
            "symbol": exp.symbol.name(),
            "lattice_points": direct.lattice().len(),
            "epsilon": direct.epsilon(),
            "nnz_direct": direct.nnz(),
            "nnz_symbol_stft": via.nnz(),
            "max_modulus": direct.max_modulus(),
            "max_difference": diff,
            "relative_difference": diff / direct.max_modulus(),
            "grid_periodic_phase": exp.phase.grid_periodic(),
        }),
    )
}

fn canonical(exp: &Experiment) -> Result<Box<dyn CanonicalMap>> {
    Ok(match exp.phase.as_quadratic() {
        Some(q) => Box::new(canonical_map_quadratic(q)?),
        None => Box::new(NewtonMap::new(Arc::clone(&exp.phase))),
    })
}

fn decay_cmd(run: &mut Run) -> Result<()> {
    let exp = run.exp;
    let m = direct_matrix(exp)?;
    let chi = canonical(exp)?;
    let orders = &exp.config.decay.orders;
    let rep = decay_report(&m, chi.as_ref(), orders)?;
    let raw = raw_decay_constants(&m, exp.phase.as_ref(), orders);
    let equiv = distance_equivalence(&m, chi.as_ref())?;
    run.file("decay_profile.csv", |w| write_profile(w, &rep.phase, "graph", rep.slope, &rep.profile))?;
    run.file("decay_profile_transposed.csv", |w| {
        write_profile(w, &rep.phase, "inverse-graph", rep.transposed_slope, &rep.transposed_profile)
    })?;
    let mut records = Series::new("decay-records", &["r", "r_transposed", "abs_entry"]);
    for r in &rep.records {
        records.push(vec![r.r, r.r_transposed, r.modulus]);
    }
    run.file("decay_records.csv", |w| write_series(w, &records))?;
    run.json("decay_report.json", json!({ "decay": rep, "raw_constants": raw, "distance_equivalence": equiv }))
}

fn schur_cmd(run: &mut Run) -> Result<()> {
    let exp = run.exp;
    let m = direct_matrix(exp)?;
    let chi = canonical(exp)?;
    let mut weights = vec![0.0, 1.0, 2.0];
    if !weights.contains(&exp.norm.s) {
        weights.push(exp.norm.s);
    }
    let mut rows = Vec::new();
    for s in weights {
        rows.push(json!({
            "sums": schur_sums(&m, s, chi.as_ref())?,
            "weighted_kernel_quotient": weighted_kernel_quotient(&m, chi.as_ref(), s)?,
            "moderateness_constant": 2f64.powf(s / 2.0),
        }));
    }
    run.json("schur.json", json!({ "phase": exp.phase.name(), "lattice_points": m.lattice().len(), "weights": rows }))
}

/// (λ+1)^{d(1/p−1/2)} / (λ^{d/(2q)} (λ²+λ)^{(d/2)(1/p−1/q)}) with d = 1.
fn gaussian_norm_asymptotic(lambda: f64, p: f64, q: f64) -> f64 {
    (lambda + 1.0).powf(1.0 / p - 0.5) / (lambda.powf(0.5 / q) * (lambda * lambda + lambda).powf(0.5 * (1.0 / p - 1.0 / q)))
}

fn modnorm_cmd(run: &mut Run) -> Result<()> {
    let exp = run.exp;
    let family = exp.family();
    let window = standard_gaussian(family.grid);
    let spec = exp.norm;
    let mut s = Series::new("modulation-norms", &["lambda", "norm", "asymptotic"]);
    for &lam in &family.lambdas {
        let f: SampledFunction = family.member(lam)?;
        let norm = mod_norm(&f, &spec, &window, family.sampling)?;
        s.push(vec![lam, norm, gaussian_norm_asymptotic(lam, spec.p, spec.q)]);
    }
    let fit = |col: usize| fit_line(&s.rows.iter().map(|r| (r[0].ln(), r[col].ln())).collect::<Vec<_>>()).0;
    let (measured, predicted) = (fit(1), fit(2));
    run.file("modnorm.csv", |w| write_series(w, &s))?;
    run.json(
        "modnorm.json",
        json!({ "spec": spec, "lambdas": family.lambdas, "slope": measured, "asymptotic_slope": predicted }),
    )
}

fn demo_cmd(run: &mut Run, multiplier: bool) -> Result<()> {
    let exp = run.exp;
    let spec = match (&exp.config.phase, multiplier) {
        (PhaseSpec::Multiplier { c }, true) => PhaseSpec::Multiplier { c: *c },
        (_, true) => PhaseSpec::Multiplier { c: 1.0 },
        (PhaseSpec::Chirp { a }, false) => PhaseSpec::Chirp { a: *a },
        (_, false) => PhaseSpec::Chirp { a: 1.0 },
    };
    let phase = spec.quadratic(1).expect("catalog phase is quadratic");
    let norm = exp.norm;
    let r: NormRatioReport = operator_norm_experiment(&phase, &Symbol::One, &norm, &exp.family())?;
    let expected = if multiplier { 0.0 } else { 0.5 * (1.0 / norm.p - 1.0 / norm.q) };
    let name = if multiplier { "multiplier_demo" } else { "chirp_demo" };
    run.file(&format!("{name}.csv"), |w| write_ratio_table(w, &r))?;
    run.json(&format!("{name}.json"), json!({ "ratios": r, "expected_slope": expected }))
}

fn schrodinger_cmd(run: &mut Run) -> Result<()> {
    let exp = run.exp;
    let d = exp.grid.d();
    let u0 = exp.input()?;
    let h = &exp.hamiltonian;
    let free = *h == HamiltonianQuadratic::free_particle(d);
    let cols: Vec<&str> = if d == 1 { vec!["t", "x", "abs"] } else { vec!["t", "x1", "x2", "abs"] };
    let mut profile = Series::new("schrodinger", &cols);
    let mut steps = Vec::new();
    for &t in &exp.config.schrodinger.times {
        let step = schrodinger_demo(h, t, &u0)?;
        for (j, v) in step.u.values().iter().enumerate() {
            let x = exp.grid.time_point(j);
            let mut row = vec![t];
            row.extend_from_slice(&x[..d]);
            row.push(v.norm());
            profile.push(row);
        }
        let exact = if free { Some(phase_aligned_distance(&step.u, &free_particle_multiplier(t, &u0)?)?) } else { None };
        steps.push(json!({
            "t": t,
            "norm_ratio": step.u.norm_l2() / u0.norm_l2(),
            "amplitude": step.amplitude,
            "phase": QuadraticPhaseRecord::from(&step.phase),
            "distance_to_exact_multiplier": exact,
        }));
    }
    run.file("schrodinger.csv", |w| write_series(w, &profile))?;
    run.json(
        "schrodinger.json",
        json!({
            "hamiltonian": h.matrix().iter().copied().collect::<Vec<f64>>(),
            "convention": "Weyl symbol 2π z·H'z; e^{itH} is the quadratic FIO generated by the flow S(−t) = exp(−2tΩH')",
            "steps": steps,
        }),
    )
}

#[derive(Serialize)]
struct CriterionSummary<'a> {
    id: u8,
    title: &'a str,
    passed: bool,
    checks: Vec<&'a acceptance::Check>,
    error: &'a Option<String>,
}

fn selftest_cmd(mut run: Run, only: &[u8]) -> std::result::Result<(), Failure> {
    let ids: Vec<u8> = if only.is_empty() { (1..=9).collect() } else { only.to_vec() };
    if let Some(bad) = ids.iter().find(|i| !(1..=9).contains(*i)) {
        return Err(Failure { code: 2, kind: "config".into(), message: format!("no criterion {bad}") });
    }
    let outcomes: Vec<Outcome> = std::thread::scope(|s| {
        let handles: Vec<_> = ids.iter().map(|&id| s.spawn(move || acceptance::run(id))).collect();
        handles.into_iter().map(|h| h.join().expect("criterion panicked")).collect()
    });
    for o in &outcomes {
        println!("{}", o.line());
        run.manifest.timings.push((format!("criterion {}", o.id), o.seconds));
    }
    // wall-clock checks go to the manifest so the report is reproducible
    let summary: Vec<CriterionSummary> = outcomes
        .iter()
        .map(|o| CriterionSummary {
            id: o.id,
            title: &o.title,
            passed: o.passed,
            checks: o.checks.iter().filter(|c| !c.label.starts_with("runtime")).collect(),
            error: &o.error,
        })
        .collect();
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    run.json("selftest.json", json!({ "criteria": summary, "failed": failed }))?;
    let dir = run.exp.config.output_dir.clone();
    run.manifest.finish(Path::new(&dir))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: 3,
            kind: "acceptance-failure".into(),
            message: format!("criteria {failed:?} failed"),
        })
    }
}
