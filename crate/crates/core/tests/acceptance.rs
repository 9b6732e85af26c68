//! End-to-end acceptance battery. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use whsid_core::presets;
use whsid_core::{
    detect, ep_oracle_case1, random_phase_multisine, simulate, unit_power_trapezoid,
    variance_profile, CampaignPlan, CampaignRecord, DesignOptions, DetectionReport,
    DetectorConfig, EnvelopeTarget, ExcitedGrid, ExperimentRecord, NoiseLocation, NoiseModel,
    NoiseSeeds, Scalar, SignalNode, Signature, StaticNonlinearity, TransferFunction, Verdict,
    WhSystem,
};

const DESK_N: usize = 4096;
const DESK_M: usize = 20;
const DESK_P: usize = 20;
const DESK_SEEDS: u64 = 10;
/// Common excitation level of the detection battery. At unit level the
/// saturation bound is rarely reached and its signature drowns in noise.
const DESK_A0: f64 = 2.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(results: &mut Vec<bool>, id: usize, title: &str, outcome: Outcome, elapsed: Duration) {
    println!(
        "[{}] criterion {id:>2}: {title} ({}; {:.2} s)",
        if outcome.pass { "PASS" } else { "FAIL" },
        outcome.detail,
        elapsed.as_secs_f64()
    );
    results.push(outcome.pass);
}

// Independent direct-form I difference equation used as a filter oracle.
fn difference_equation(num: &[f64], den: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for t in 0..x.len() {
        let mut acc = 0.0;
        for (k, &b) in num.iter().enumerate() {
            if t >= k {
                acc += b * x[t - k];
            }
        }
        for (k, &a) in den.iter().enumerate().skip(1) {
            if t >= k {
                acc -= a * y[t - k];
            }
        }
        y[t] = acc / den[0];
    }
    y
}

fn rel_linf(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Denominator with poles drawn inside radius 0.9: one real pole or a
/// complex pair, then a second-order factor or not.
fn random_stable_den(rng: &mut ChaCha8Rng) -> Vec<f64> {
    if rng.random_bool(0.5) {
        let r: f64 = rng.random_range(0.1..0.9);
        let th: f64 = rng.random_range(0.0..std::f64::consts::PI);
        vec![1.0, -2.0 * r * th.cos(), r * r]
    } else {
        let p: f64 = rng.random_range(-0.9..0.9);
        vec![1.0, -p]
    }
}

fn random_num(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let len = rng.random_range(1..=3);
    let mut b: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    if b.iter().all(|v| v.abs() < 0.1) {
        b[0] = 1.0;
    }
    b
}

fn criterion_ep_oracle() -> Outcome {
    const N: usize = 1024;
    const P: usize = 2;
    let mut rng = ChaCha8Rng::seed_from_u64(0xE9);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let r = TransferFunction::new(random_num(&mut rng), random_stable_den(&mut rng)).unwrap();
        let s = TransferFunction::new(random_num(&mut rng), random_stable_den(&mut rng)).unwrap();
        let degree = rng.random_range(1..=3);
        let coeffs: Vec<f64> = (0..=degree).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = StaticNonlinearity::polynomial(coeffs.clone()).unwrap();
        let process = NoiseModel::with_gain(
            TransferFunction::new(vec![1.0], vec![1.0, -0.5]).unwrap(),
            0.3,
            SignalNode::X,
        );
        let quiet = NoiseModel::silent(SignalNode::Output);
        let noisy = WhSystem::new(
            r.clone(),
            s.clone(),
            f.clone(),
            NoiseLocation::Before,
            process.clone(),
            quiet.clone(),
        );
        let clean = WhSystem::new(
            r.clone(),
            s.clone(),
            f,
            NoiseLocation::None,
            process.clone(),
            quiet,
        );
        let u = random_phase_multisine(&ExcitedGrid::full(N).unwrap(), 1.0, case).unwrap();
        let seeds = NoiseSeeds::derive(case, 0);
        let y = simulate(&noisy, u.samples(), P, seeds).unwrap();
        let y0 = simulate(&clean, u.samples(), P, seeds).unwrap();
        let diff: Vec<f64> = y
            .iter()
            .flatten()
            .zip(y0.iter().flatten())
            .map(|(a, b)| a - b)
            .collect();

        let total = N * (P + 1);
        let full_u = u.repeated(P + 1);
        let e_x = process.realize(total, seeds.process);
        let ep = ep_oracle_case1(&r, &s, &coeffs, &full_u, &e_x).unwrap();
        worst = worst.max(rel_linf(&diff, &ep[N..]));
    }
    Outcome {
        pass: worst <= 1e-9,
        detail: format!("worst relative Linf {worst:.3e} over 50 systems, tol 1e-9"),
    }
}

fn criterion_toy_bla() -> Outcome {
    const LEN: usize = 1_000_000;
    let (sigma_u, sigma_e) = (1.0, 0.5);
    let sys = WhSystem::new(
        TransferFunction::identity(),
        TransferFunction::identity(),
        StaticNonlinearity::polynomial(vec![0.0, 0.0, 0.0, 1.0]).unwrap(),
        NoiseLocation::Before,
        NoiseModel::silent(SignalNode::X),
        NoiseModel::silent(SignalNode::Output),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(0xB1A);
    let u: Vec<f64> = (0..LEN).map(|_| sigma_u * f64::standard_normal(&mut rng)).collect();
    let e: Vec<f64> = (0..LEN).map(|_| sigma_e * f64::standard_normal(&mut rng)).collect();
    let y = sys.respond(&u, Some(&e), None).unwrap().output;

    // Ordinary least squares with intercept and a heteroskedasticity-robust
    // (HC0) standard error.
    let n = LEN as f64;
    let mu = u.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = u.iter().map(|v| (v - mu).powi(2)).sum();
    let sxy: f64 = u.iter().zip(&y).map(|(a, b)| (a - mu) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mu;
    let meat: f64 = u
        .iter()
        .zip(&y)
        .map(|(a, b)| {
            let res = b - icpt - slope * a;
            (a - mu).powi(2) * res * res
        })
        .sum();
    let se = meat.sqrt() / sxx;
    let expected = 3.0 * (sigma_u * sigma_u + sigma_e * sigma_e);
    let z = (slope - expected) / se;
    Outcome {
        pass: z.abs() <= 3.0,
        detail: format!("slope {slope:.5}, expected {expected}, SE {se:.2e}, |z| {:.2} <= 3", z.abs()),
    }
}

fn criterion_case2_identity() -> Outcome {
    const N: usize = 1024;
    const P: usize = 3;
    let u = random_phase_multisine(&ExcitedGrid::full(N).unwrap(), 1.0, 11).unwrap();
    let mut worst = 0.0f64;
    for f in [
        presets::reference_polynomial::<f64>(),
        presets::reference_saturation(),
        presets::reference_dead_zone(),
    ] {
        let process = NoiseModel::with_gain(presets::process_noise_filter(), 0.05, SignalNode::Nonlinearity);
        let measurement =
            NoiseModel::with_gain(presets::measurement_noise_filter(), 0.01, SignalNode::Output);
        let noisy = WhSystem::new(
            presets::reference_r(),
            presets::reference_s(),
            f.clone(),
            NoiseLocation::After,
            process.clone(),
            measurement.clone(),
        );
        let mut clean = noisy.clone();
        clean.process.set_gain(0.0);
        let seeds = NoiseSeeds::derive(21, 0);
        let y = simulate(&noisy, u.samples(), P, seeds).unwrap();
        let y0 = simulate(&clean, u.samples(), P, seeds).unwrap();
        let diff: Vec<f64> = y
            .iter()
            .flatten()
            .zip(y0.iter().flatten())
            .map(|(a, b)| a - b)
            .collect();
        let e_x = process.realize(N * (P + 1), seeds.process);
        let se = difference_equation(&presets::S_NUM, &presets::S_DEN, &e_x);
        worst = worst.max(rel_linf(&diff, &se[N..]));
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("worst relative Linf {worst:.3e}, tol 1e-10"),
    }
}

fn criterion_design() -> Outcome {
    let n = 4096;
    let grid = ExcitedGrid::full(n).unwrap();
    let target = unit_power_trapezoid::<f64>(n).unwrap().scaled_to_power(grid.power(1.0));
    let opts = DesignOptions::default();
    let run = || whsid_core::design_nonstationary_multisine(&target, &grid, 1.0, 42, &opts).unwrap();
    let a = run();
    let b = run();
    let err = a.envelope_error();

    let plan = f64::plan_dft(n);
    let spec = plan.forward_real(a.signal.samples());
    let on_grid = grid.bins();
    let mut spectral = 0.0f64;
    for (k, bin) in spec.iter().enumerate() {
        let mirrored = if k == 0 { 0 } else { n - k };
        let excited = on_grid.binary_search(&k).is_ok() || on_grid.binary_search(&mirrored).is_ok();
        let want = if excited { 1.0 } else { 0.0 };
        spectral = spectral.max((bin.norm() - want).abs());
    }
    let identical = a
        .signal
        .samples()
        .iter()
        .zip(b.signal.samples())
        .all(|(x, y)| x.to_bits() == y.to_bits());
    Outcome {
        pass: err < 0.1 && a.iterations <= 100 && spectral <= 1e-9 && identical,
        detail: format!(
            "envelope error {err:.4} < 0.1 after {} iterations, spectrum deviation {spectral:.2e} <= 1e-9, byte-identical rerun {identical}",
            a.iterations
        ),
    }
}

fn criterion_calibration() -> Outcome {
    let (m, p, n) = (20, 100, 2048);
    let mut rng = ChaCha8Rng::seed_from_u64(0xCA1);
    let experiments = (0..m)
        .map(|_| ExperimentRecord {
            input: vec![0.0; n],
            periods: (0..p)
                .map(|_| (0..n).map(|_| f64::standard_normal(&mut rng)).collect())
                .collect(),
            seed: None,
        })
        .collect();
    let record = CampaignRecord::new(n, p, 1.0, experiments).unwrap();
    let profile = variance_profile(&record).unwrap();
    let mean = profile.mean();
    Outcome {
        pass: profile.dof == 1980 && (0.94..=1.06).contains(&mean),
        detail: format!("{} dof, time mean {mean:.4} in [0.94, 1.06]", profile.dof),
    }
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum Shape {
    Trapezoid,
    Flat,
}

fn desk_plan(shape: Shape, seed: u64) -> CampaignPlan<f64> {
    let grid = ExcitedGrid::full(DESK_N).unwrap();
    let power = grid.power(DESK_A0);
    let target = match shape {
        Shape::Trapezoid => unit_power_trapezoid(DESK_N).unwrap().scaled_to_power(power),
        Shape::Flat => EnvelopeTarget::flat(DESK_N, power.sqrt()).unwrap(),
    };
    CampaignPlan {
        target,
        grid,
        amplitude: DESK_A0,
        experiments: DESK_M,
        periods: DESK_P,
        base_seed: seed,
        sampling_rate_hz: presets::SAMPLING_RATE_HZ,
        design: DesignOptions::default(),
    }
}

struct DeskRun {
    nonlinearity: &'static str,
    location: NoiseLocation,
    shape: Shape,
    report: DetectionReport<f64>,
    finite: bool,
}

fn nonlinearities() -> [(&'static str, StaticNonlinearity<f64>); 3] {
    [
        ("polynomial", presets::reference_polynomial()),
        ("saturation", presets::reference_saturation()),
        ("dead-zone", presets::reference_dead_zone()),
    ]
}

fn desk_run(name: &'static str, f: &StaticNonlinearity<f64>, location: NoiseLocation, shape: Shape, seed: u64) -> DeskRun {
    let sys = presets::reference_system(f.clone(), location);
    let plan = desk_plan(shape, seed);
    let envelope = plan.target.clone();
    let record = whsid_core::run_campaign(&sys, plan).expect("valid campaign");
    let (profile, report) = detect(&record, &envelope, &DetectorConfig::default()).unwrap();
    let finite = profile.sigma2.iter().all(|v| v.is_finite())
        && report.ratio.is_finite()
        && report.rho.is_none_or(f64::is_finite)
        && record
            .experiments()
            .iter()
            .all(|e| e.input.iter().chain(e.periods.iter().flatten()).all(|v| v.is_finite()));
    DeskRun {
        nonlinearity: name,
        location,
        shape,
        report,
        finite,
    }
}

fn count<'a>(runs: &'a [DeskRun], name: &str, location: NoiseLocation, shape: Shape) -> impl Iterator<Item = &'a DeskRun> + 'a {
    let name = name.to_string();
    runs.iter()
        .filter(move |r| r.nonlinearity == name && r.location == location && r.shape == shape)
}

fn main() -> ExitCode {
    let mut results = Vec::new();

    let t = Instant::now();
    let o = criterion_ep_oracle();
    let el = t.elapsed();
    let o = Outcome {
        pass: o.pass && el < Duration::from_secs(10),
        detail: format!("{}, limit 10 s", o.detail),
    };
    report(&mut results, 1, "case I disturbance matches binomial oracle", o, el);

    let t = Instant::now();
    let o = criterion_toy_bla();
    let el = t.elapsed();
    let o = Outcome {
        pass: o.pass && el < Duration::from_secs(5),
        detail: format!("{}, limit 5 s", o.detail),
    };
    report(&mut results, 2, "toy cubic best linear approximation", o, el);

    let t = Instant::now();
    let o = criterion_case2_identity();
    report(&mut results, 3, "case II disturbance equals S e_x", o, t.elapsed());

    let t = Instant::now();
    let o = criterion_design();
    let el = t.elapsed();
    let o = Outcome {
        pass: o.pass && el < Duration::from_secs(5),
        detail: format!("{}, limit 5 s", o.detail),
    };
    report(&mut results, 4, "trapezoid multisine design", o, el);

    // Desk-scale battery shared by criteria 5, 6, 7, 9 and 10.
    let t = Instant::now();
    let mut runs = Vec::new();
    for seed in 1..=DESK_SEEDS {
        for (name, f) in nonlinearities() {
            for loc in [NoiseLocation::Before, NoiseLocation::After, NoiseLocation::None] {
                runs.push(desk_run(name, &f, loc, Shape::Trapezoid, seed));
            }
        }
    }
    let battery = t.elapsed();

    let mut pass5 = battery < Duration::from_secs(120);
    let mut detail5 = Vec::new();
    for (name, _) in nonlinearities() {
        let before = count(&runs, name, NoiseLocation::Before, Shape::Trapezoid)
            .filter(|r| {
                r.report.verdict == Verdict::Before
                    && (r.report.ratio >= 2.0 || r.report.rho.is_some_and(|v| v.abs() >= 0.5))
            })
            .count();
        let after = count(&runs, name, NoiseLocation::After, Shape::Trapezoid)
            .filter(|r| r.report.verdict == Verdict::AfterOrAbsent && r.report.ratio < 1.5)
            .count();
        let none = count(&runs, name, NoiseLocation::None, Shape::Trapezoid)
            .filter(|r| r.report.verdict == Verdict::AfterOrAbsent && r.report.ratio < 1.5)
            .count();
        pass5 &= before >= 9 && after >= 9 && none >= 9;
        detail5.push(format!("{name}: before {before}/10, after {after}/10, none {none}/10"));
    }
    report(
        &mut results,
        5,
        "desk-scale noise location (>= 9/10 each)",
        Outcome {
            pass: pass5,
            detail: format!("{}; battery limit 120 s", detail5.join("; ")),
        },
        battery,
    );

    let t = Instant::now();
    let mut pass6 = true;
    let mut detail6 = Vec::new();
    for (name, expected) in [
        ("polynomial", Signature::SmoothLike),
        ("saturation", Signature::SaturationLike),
        ("dead-zone", Signature::DeadZoneLike),
    ] {
        let hits = count(&runs, name, NoiseLocation::Before, Shape::Trapezoid)
            .filter(|r| r.report.signature == expected)
            .count();
        pass6 &= hits >= 8;
        detail6.push(format!("{name} -> {expected:?} {hits}/10"));
    }
    report(
        &mut results,
        6,
        "signature classification (>= 8/10 each)",
        Outcome {
            pass: pass6,
            detail: detail6.join("; "),
        },
        t.elapsed(),
    );

    let t = Instant::now();
    let mut pass7 = true;
    let mut detail7 = Vec::new();
    for (name, f) in nonlinearities() {
        let flat: Vec<DeskRun> = (1..=DESK_SEEDS)
            .map(|seed| desk_run(name, &f, NoiseLocation::Before, Shape::Flat, seed))
            .collect();
        let hits = flat
            .iter()
            .filter(|r| r.report.verdict == Verdict::AfterOrAbsent)
            .count();
        pass7 &= hits >= 9;
        detail7.push(format!("{name} {hits}/10"));
        runs.extend(flat);
    }
    report(
        &mut results,
        7,
        "flat-envelope negative control (>= 9/10 AfterOrAbsent)",
        Outcome {
            pass: pass7,
            detail: detail7.join("; "),
        },
        t.elapsed(),
    );

    let t = Instant::now();
    let o = criterion_calibration();
    report(&mut results, 8, "variance estimator calibration", o, t.elapsed());

    let finite = runs.iter().filter(|r| r.finite).count();
    report(
        &mut results,
        9,
        "finite campaigns from stable configurations",
        Outcome {
            pass: finite == runs.len(),
            detail: format!("{finite}/{} campaigns finite", runs.len()),
        },
        Duration::ZERO,
    );

    let mut ordered = 0;
    let mut pairs = 0;
    let mut gap = f64::INFINITY;
    for seed in 0..DESK_SEEDS as usize {
        for k in 0..3 {
            let base = seed * 9 + k * 3;
            let after = &runs[base + 1].report;
            let none = &runs[base + 2].report;
            pairs += 1;
            if none.mean_sigma2 < after.mean_sigma2 {
                ordered += 1;
            }
            gap = gap.min(after.mean_sigma2 / none.mean_sigma2);
        }
    }
    report(
        &mut results,
        10,
        "no-noise variance below case II",
        Outcome {
            pass: ordered == pairs,
            detail: format!("{ordered}/{pairs} pairs ordered, smallest ratio {gap:.3}"),
        },
        Duration::ZERO,
    );

    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
