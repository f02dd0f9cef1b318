//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Pass a substring to run only the matching criteria, e.g.
//! `cargo test -p apohf-validation --test acceptance -- replay`.
//! `--list` prints the criterion names.

use std::time::{Duration, Instant};

use apohf_core::baselines::linear_fit;
use apohf_core::domain::{Arm, ArmDomain};
use apohf_core::env::{synthetic, synthetic_contextual, SyntheticKind};
use apohf_core::harness::{
    replay_selections, CellSpec, EnvironmentSpec, PolicyKind, PolicySpec, SuiteOutcome, SuiteSpec,
    TrialDomain, TrialResult,
};
use apohf_core::history::{History, PreferenceRecord};
use apohf_core::net::{preference_loss, ScoreNet, DEFAULT_WIDTHS};
use apohf_core::oracle::{sample_preference, BtlOracle, OracleConfig, Provenance, UtilityTable};
use apohf_core::uncertainty::{UncertaintyMode, UncertaintyState};
use apohf_service::{Session, SessionConfig, SessionDomain, Side, SnapshotStore};
use apohf_validation::{gap, mean_se};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRIALS: usize = 10;
const HORIZON: u64 = 150;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(r: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = r.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn finals(outcome: &SuiteOutcome, label: &str) -> Vec<f64> {
    completed(outcome, label)
        .iter()
        .map(|t| t.final_score())
        .collect()
}

fn completed<'a>(outcome: &'a SuiteOutcome, label: &str) -> Vec<&'a TrialResult> {
    let trials = outcome
        .cell_trials(label)
        .unwrap_or_else(|| panic!("no cell {label:?}"));
    trials.iter().flatten().collect()
}

// ---------------------------------------------------------------- components

fn gradient_fidelity() -> Verdict {
    const STEP: f64 = 1e-5;
    let (mut checked, mut attempt, mut worst) = (0, 0u64, 0f64);
    while checked < 100 {
        attempt += 1;
        let d = if checked % 2 == 0 { 3 } else { 10 };
        let mut net = ScoreNet::init(d, attempt).unwrap();
        let mut r = rng(attempt ^ 0x9e37);
        for (_, bias) in net.layer_ranges() {
            for b in &mut net.theta_mut()[bias] {
                *b = 0.1 * gaussian(&mut r);
            }
        }
        let x: Vec<f64> = (0..d).map(|_| gaussian(&mut r)).collect();
        if near_kink(net.theta(), d, &x) {
            continue;
        }
        let g = net.param_gradient(&x).unwrap();
        let mut probe = net.clone();
        for (k, &gk) in g.iter().enumerate() {
            let orig = probe.theta()[k];
            probe.theta_mut()[k] = orig + STEP;
            let up = probe.forward(&x).unwrap();
            probe.theta_mut()[k] = orig - STEP;
            let down = probe.forward(&x).unwrap();
            probe.theta_mut()[k] = orig;
            let fd = (up - down) / (2.0 * STEP);
            let scale = gk.abs().max(fd.abs());
            worst = worst.max(if scale < 1e-6 {
                (gk - fd).abs()
            } else {
                (gk - fd).abs() / scale
            });
        }
        checked += 1;
    }
    verdict(
        worst < 1e-4,
        format!("max relative error {worst:.2e} over {checked} nets (d = 3 and 10)"),
    )
}

/// True if any hidden pre-activation lies within 1e-3 of a rectifier kink,
/// where central differences are not meaningful.
fn near_kink(theta: &[f64], d: usize, x: &[f64]) -> bool {
    let mut sizes = vec![d];
    sizes.extend_from_slice(&DEFAULT_WIDTHS);
    let mut a = DVector::from_column_slice(x);
    let mut offset = 0;
    for l in 0..sizes.len() - 1 {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let w = DMatrix::from_row_slice(n_out, n_in, &theta[offset..offset + n_out * n_in]);
        offset += n_out * n_in;
        let z = w * &a + DVector::from_column_slice(&theta[offset..offset + n_out]);
        offset += n_out;
        if z.iter().any(|v| v.abs() < 1e-3) {
            return true;
        }
        a = z.map(|v| v.max(0.0));
    }
    false
}

fn matrix_update_fidelity() -> Verdict {
    let (p, count, lambda) = (500, 300, 0.1);
    let mut r = rng(2024);
    let mut state = UncertaintyState::new(UncertaintyMode::Full, p, lambda).unwrap();
    let mut v = DMatrix::<f64>::identity(p, p) * lambda;
    for _ in 0..count {
        let phi: Vec<f64> = (0..p).map(|_| gaussian(&mut r)).collect();
        state.absorb(&phi).unwrap();
        let col = DVector::from_column_slice(&phi);
        v += &col * col.transpose();
    }
    let UncertaintyState::Full { v_inv, .. } = &state else {
        unreachable!()
    };
    let incremental = DMatrix::from_fn(p, p, |i, j| v_inv[[i, j]]);
    let direct = v.try_inverse().expect("positive definite");
    let err = (incremental - &direct).norm() / direct.norm();
    verdict(
        err < 1e-6,
        format!("relative Frobenius error {err:.2e} after {count} updates at p = {p}"),
    )
}

fn btl_calibration() -> Verdict {
    let n = 100_000u32;
    let raw = OracleConfig {
        normalize: false,
        ..OracleConfig::default()
    };
    let mut parts = Vec::new();
    let mut pass = true;
    for (gap, p) in [(0.0, 0.5), (3f64.ln(), 0.75)] {
        let table = UtilityTable::new(vec![gap, 0.0], Provenance::File).unwrap();
        let mut r = rng(31337);
        let wins: u32 = (0..n)
            .map(|_| u32::from(sample_preference(&table, &raw, 0, 1, &mut r).unwrap()))
            .sum();
        let f = f64::from(wins) / f64::from(n);
        let z = (f - p) / (p * (1.0 - p) / f64::from(n)).sqrt();
        pass &= z.abs() <= 3.0;
        parts.push(format!("gap {gap:.4}: {f:.4} vs {p} ({z:+.2} sigma)"));
    }
    verdict(pass, parts.join("; "))
}

fn loss_sanity() -> Verdict {
    let mut r = rng(5);
    let arms = (0..16)
        .map(|i| Arm {
            id: format!("a{i}"),
            text: String::new(),
            embedding: (0..5).map(|_| gaussian(&mut r)).collect(),
        })
        .collect();
    let domain = ArmDomain::new(arms).unwrap();
    let mut history = History::new();
    for t in 1..=64 {
        let a = r.random_range(0..16);
        let b = (a + r.random_range(1..16)) % 16;
        history
            .append(PreferenceRecord::new(t, a, b, r.random_range(0..2)))
            .unwrap();
    }
    let net = ScoreNet::zeros(5, &DEFAULT_WIDTHS).unwrap();
    let loss = preference_loss(&net, &history, &domain, 0.0).unwrap();
    let err = (loss - 64.0 * std::f64::consts::LN_2).abs();
    verdict(
        err < 1e-9,
        format!("loss {loss:.12} vs 64 ln 2, |error| {err:.1e}"),
    )
}

fn linear_recovery() -> Verdict {
    let d = 5;
    let lambda = PolicySpec::of(PolicyKind::Linear).lambda;
    let mut cosines = Vec::new();
    for seed in 0..10u64 {
        let mut r = rng(7000 + seed);
        let arms = (0..100)
            .map(|i| Arm {
                id: format!("a{i}"),
                text: String::new(),
                embedding: (0..d).map(|_| gaussian(&mut r)).collect(),
            })
            .collect();
        let domain = ArmDomain::new(arms).unwrap();
        let theta: Vec<f64> = (0..d).map(|_| gaussian(&mut r)).collect();
        let mut history = History::new();
        for t in 1..=200 {
            let a = r.random_range(0..100);
            let b = (a + r.random_range(1..100)) % 100;
            let z: f64 = (0..d)
                .map(|k| (domain.embedding(a)[k] - domain.embedding(b)[k]) * theta[k])
                .sum();
            let y = u8::from(r.random::<f64>() < 1.0 / (1.0 + (-z).exp()));
            history.append(PreferenceRecord::new(t, a, b, y)).unwrap();
        }
        let fit = linear_fit(&history, &domain, d, lambda).unwrap();
        let est = fit.theta.as_slice().unwrap();
        let dot: f64 = est.iter().zip(&theta).map(|(a, b)| a * b).sum();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        cosines.push(dot / (norm(est) * norm(&theta)));
    }
    let good = cosines.iter().filter(|&&c| c > 0.9).count();
    let worst = cosines.iter().copied().fold(f64::INFINITY, f64::min);
    verdict(
        good >= 9,
        format!("cosine > 0.9 in {good}/10 seeds (lowest {worst:.3}, lambda {lambda})"),
    )
}

// ----------------------------------------------------------------- sweeps

fn cell(kind: PolicyKind, nu: f64, s: f64) -> CellSpec {
    CellSpec::new(PolicySpec::of(kind).with_nu(nu), s)
}

fn linear_env() -> EnvironmentSpec {
    EnvironmentSpec::Synthetic {
        kind: SyntheticKind::Linear,
        arms: 200,
        dim: 10,
    }
}

fn run_suite(spec: SuiteSpec) -> (SuiteOutcome, Duration) {
    let start = Instant::now();
    let outcome = spec.run().expect("suite configuration is valid");
    for c in &outcome.results.cells {
        for f in &c.failures {
            eprintln!("  {} trial {} failed: {}", c.label, f.trial, f.error);
        }
    }
    (outcome, start.elapsed())
}

/// APOHF (ν = 1 and 0), APOHF with random pairs, and Random Search, sharing
/// environments and oracle draws trial by trial.
fn main_suite() -> (SuiteOutcome, Duration) {
    let mut spec = SuiteSpec::new(linear_env());
    spec.horizon = HORIZON;
    spec.trials = TRIALS;
    for c in [
        cell(PolicyKind::Apohf, 1.0, 1.0),
        cell(PolicyKind::Apohf, 0.0, 1.0),
        cell(PolicyKind::ApohfRandomPairs, 1.0, 1.0),
        cell(PolicyKind::Random, 1.0, 1.0),
    ] {
        spec = spec.with_cell(c);
    }
    run_suite(spec)
}

const APOHF: &str = "apohf nu=1 s=1";
const APOHF_GREEDY: &str = "apohf nu=0 s=1";
const APOHF_RANDOM_PAIRS: &str = "apohf-random-pairs s=1";
const RANDOM: &str = "random s=1";

fn convergence(main: &(SuiteOutcome, Duration)) -> Verdict {
    let (outcome, elapsed) = main;
    let apohf = finals(outcome, APOHF);
    let random = finals(outcome, RANDOM);
    let (diff, se) = gap(&apohf, &random);
    let near_max = completed(outcome, APOHF)
        .iter()
        .filter(|t| t.final_score() >= 0.9 * t.domain_max)
        .count();
    let budget = Duration::from_secs(20 * 60);
    let pass = apohf.len() == TRIALS
        && random.len() == TRIALS
        && diff >= se
        && near_max >= 7
        && *elapsed < budget;
    verdict(
        pass,
        format!(
            "APOHF {:.2} vs Random {:.2}: gap {diff:.2} vs pooled SE {se:.2}; >= 90% of max in {near_max}/{TRIALS} trials; suite {:.0}s",
            mean_se(&apohf).0,
            mean_se(&random).0,
            elapsed.as_secs_f64()
        ),
    )
}

fn exploration_ablation(main: &(SuiteOutcome, Duration)) -> Verdict {
    let (outcome, elapsed) = main;
    let (with, _) = mean_se(&finals(outcome, APOHF));
    let (without, _) = mean_se(&finals(outcome, APOHF_GREEDY));
    let pass = with >= without && *elapsed < Duration::from_secs(40 * 60);
    verdict(
        pass,
        format!("mean final score nu=1 {with:.2} vs nu=0 {without:.2}"),
    )
}

fn random_pair_ablation(main: &(SuiteOutcome, Duration)) -> Verdict {
    let (outcome, _) = main;
    let apohf = finals(outcome, APOHF);
    let ablated = finals(outcome, APOHF_RANDOM_PAIRS);
    let (diff, se) = gap(&apohf, &ablated);
    verdict(
        diff >= se,
        format!(
            "APOHF {:.2} vs random pairs {:.2}: gap {diff:.2} vs pooled SE {se:.2}",
            mean_se(&apohf).0,
            mean_se(&ablated).0
        ),
    )
}

fn noise_ablation(main: &(SuiteOutcome, Duration)) -> Verdict {
    let start = Instant::now();
    let scales = [0.5, 1.0, 4.0, 16.0];
    let mut spec = SuiteSpec::new(linear_env());
    spec.horizon = HORIZON;
    spec.trials = TRIALS;
    for &s in scales.iter().filter(|&&s| s != 1.0) {
        spec = spec
            .with_cell(cell(PolicyKind::Apohf, 1.0, s))
            .with_cell(cell(PolicyKind::Random, 1.0, s));
    }
    let (extra, _) = run_suite(spec);
    // s = 1 comes from the main suite: same seeds, so the same environments.
    let advantages: Vec<(f64, f64)> = scales
        .iter()
        .map(|&s| {
            let source = if s == 1.0 { &main.0 } else { &extra };
            let a = finals(source, &format!("apohf nu=1 s={s}"));
            let r = finals(source, &format!("random s={s}"));
            assert_eq!(
                (a.len(), r.len()),
                (TRIALS, TRIALS),
                "failed trials at s = {s}"
            );
            gap(&a, &r)
        })
        .collect();
    let mut pass = start.elapsed() + main.1 < Duration::from_secs(3600);
    for w in advantages.windows(2) {
        let tolerance = (w[0].1.powi(2) + w[1].1.powi(2)).sqrt();
        pass &= w[1].0 <= w[0].0 + tolerance;
    }
    let listed: Vec<String> = scales
        .iter()
        .zip(&advantages)
        .map(|(s, (adv, se))| format!("s={s}: {adv:.2}±{se:.2}"))
        .collect();
    verdict(pass, format!("advantage over Random {}", listed.join(", ")))
}

fn contextual_protocol() -> Verdict {
    let (contexts, candidates) = (5, 20);
    let mut spec = SuiteSpec::new(EnvironmentSpec::SyntheticContextual {
        contexts,
        candidates,
        context_dim: 5,
        response_dim: 5,
    });
    spec.horizon = 100;
    spec.trials = TRIALS;
    spec = spec
        .with_cell(cell(PolicyKind::Apohf, 1.0, 1.0))
        .with_cell(cell(PolicyKind::Random, 1.0, 1.0));
    let (outcome, elapsed) = run_suite(spec.clone());

    let mut violations = Vec::new();
    for (c, label) in [APOHF, RANDOM].into_iter().enumerate() {
        for (trial, result) in outcome.trials[c].iter().enumerate() {
            let Some(result) = result else { continue };
            // Rebuild the trial's environment and rescore its reports independently.
            let config = spec.run_config(&spec.cells[c], trial);
            let (domain, utility) =
                synthetic_contextual(contexts, candidates, 5, 5, config.seed).unwrap();
            let oracle = BtlOracle::contextual(utility, config.oracle.clone()).unwrap();
            let mut violate =
                |what: String| violations.push(format!("{label} trial {trial}: {what}"));
            for it in &result.iterations {
                let k = ((it.t - 1) % contexts as u64) as usize;
                if it.context_id.as_deref() != Some(domain.rounds()[k].context_id.as_str()) {
                    violate(format!(
                        "t={} visited {:?}, expected context {k}",
                        it.t, it.context_id
                    ));
                }
                if it.first >= candidates
                    || it.second >= candidates
                    || it.context_best_ids.len() != contexts
                {
                    violate(format!("t={} indices out of range", it.t));
                    continue;
                }
                let prefix = result.history.prefix(
                    result
                        .history
                        .records()
                        .iter()
                        .take_while(|r| r.iteration <= it.t)
                        .count(),
                );
                let mut total = 0.0;
                for (j, id) in it.context_best_ids.iter().enumerate() {
                    let round = &domain.rounds()[j];
                    let Some(arm) = round.arms.index_of(id) else {
                        violate(format!(
                            "t={} reports unknown arm {id} for context {j}",
                            it.t
                        ));
                        continue;
                    };
                    let queried = prefix.queried_arms(Some(&round.context_id));
                    if !queried.is_empty() && !queried.contains(&arm) {
                        violate(format!(
                            "t={} reports unqueried arm {id} for context {j}",
                            it.t
                        ));
                    }
                    total += oracle.true_score(j, arm).unwrap();
                }
                let expected = total / contexts as f64;
                if (expected - it.true_score).abs() > 1e-9 * expected.abs().max(1.0) {
                    violate(format!(
                        "t={} metric {} but reports score {expected}",
                        it.t, it.true_score
                    ));
                }
            }
            for record in result.history.records() {
                let k = ((record.iteration - 1) % contexts as u64) as usize;
                if record.context_id.as_deref() != Some(domain.rounds()[k].context_id.as_str()) {
                    violate(format!(
                        "record {} has context {:?}",
                        record.iteration, record.context_id
                    ));
                }
            }
        }
    }
    let apohf = finals(&outcome, APOHF);
    let random = finals(&outcome, RANDOM);
    let (diff, se) = gap(&apohf, &random);
    let pass =
        violations.is_empty() && apohf.len() == TRIALS && random.len() == TRIALS && diff >= se;
    let mut detail = format!(
        "round robin {}; APOHF {:.2} vs Random {:.2} at T=100: gap {diff:.2} vs pooled SE {se:.2}; {:.0}s",
        if violations.is_empty() { "conforms".to_owned() } else { format!("{} violations, first: {}", violations.len(), violations[0]) },
        mean_se(&apohf).0,
        mean_se(&random).0,
        elapsed.as_secs_f64()
    );
    if violations.len() > 1 {
        detail.push_str(&format!(" (+{} more)", violations.len() - 1));
    }
    verdict(pass, detail)
}

// ------------------------------------------------------------ determinism

fn determinism_and_replay() -> Verdict {
    let mut problems = Vec::new();

    // Identical sweeps, different thread counts: byte-identical files.
    let (domain, utility) = synthetic(SyntheticKind::Quadratic, 40, 4, 99).unwrap();
    let build = |threads| {
        let mut spec = SuiteSpec::new(EnvironmentSpec::Fixed {
            domain: domain.clone(),
            utility: utility.clone(),
        });
        spec.horizon = 15;
        spec.trials = 2;
        spec.seed = 3;
        spec.train.epochs = 120;
        spec.threads = Some(threads);
        spec.grid(
            &[
                PolicySpec::of(PolicyKind::Apohf),
                PolicySpec::of(PolicyKind::Linear),
                PolicySpec::of(PolicyKind::Doublets),
            ],
            &[1.0],
            &[1.0],
        )
    };
    let dir = tempfile::tempdir().unwrap();
    let a = build(1).run().unwrap();
    let b = build(3).run().unwrap();
    let (ja, ca) = a.write_to(&dir.path().join("a")).unwrap();
    let (jb, cb) = b.write_to(&dir.path().join("b")).unwrap();
    if std::fs::read(ja).unwrap() != std::fs::read(jb).unwrap()
        || std::fs::read(ca).unwrap() != std::fs::read(cb).unwrap()
    {
        problems.push("results files differ between identical runs".to_owned());
    }

    // Every logged pair is re-derived by a fresh policy from its prefix.
    let spec = build(1);
    let mut replayed = 0;
    for (cell, trials) in spec.cells.iter().zip(&a.trials) {
        for (i, trial) in trials.iter().enumerate() {
            let Some(trial) = trial else { continue };
            let config = spec.run_config(cell, i);
            let mut policy = cell
                .policy
                .build(domain.dim(), &config.train, config.seed)
                .unwrap();
            let mismatches =
                replay_selections(policy.as_mut(), TrialDomain::Fixed(&domain), &trial.history)
                    .unwrap();
            if !mismatches.is_empty() {
                problems.push(format!(
                    "{} trial {i}: {} pairs do not replay",
                    cell.label,
                    mismatches.len()
                ));
            }
            replayed += trial.history.len();
        }
    }

    // Persisted sessions restore to the same pending pair and best.
    let store = SnapshotStore::open(dir.path().join("sessions")).unwrap();
    let (rounds, _) = synthetic_contextual(3, 6, 2, 3, 8).unwrap();
    let domains = [
        SessionDomain::Fixed {
            arms: domain.clone(),
        },
        SessionDomain::Fixed {
            arms: synthetic(SyntheticKind::Linear, 25, 6, 4).unwrap().0,
        },
        SessionDomain::Contextual { rounds },
    ];
    let mut sessions = 0;
    for (k, session_domain) in domains.into_iter().enumerate() {
        for mode in [UncertaintyMode::Full, UncertaintyMode::Diagonal] {
            let config = SessionConfig {
                seed: k as u64,
                epochs: 120,
                uncertainty: Some(mode),
                ..SessionConfig::default()
            };
            let id = format!("s{k}-{mode:?}");
            let mut live = Session::create(id.clone(), session_domain.clone(), config, 0).unwrap();
            for step in 0..=7u64 {
                store.save(&live.snapshot()).unwrap();
                let restored = Session::restore(store.load(&id).unwrap().unwrap());
                match restored {
                    Ok(r) if r.pending() == live.pending() && r.best() == live.best() => {}
                    Ok(_) => problems.push(format!(
                        "{id} after {step} verdicts: restored state differs"
                    )),
                    Err(e) => problems.push(format!("{id} after {step} verdicts: {e}")),
                }
                let side = if (step * 7 + k as u64).is_multiple_of(3) {
                    Side::Second
                } else {
                    Side::First
                };
                live.submit(side, None, None, step).unwrap();
            }
            sessions += 1;
        }
    }
    let detail = if problems.is_empty() {
        format!("identical results files; {replayed} logged pairs replayed; {sessions} sessions restored at 8 checkpoints each")
    } else {
        problems.join("; ")
    };
    verdict(problems.is_empty(), detail)
}

// ------------------------------------------------------------------ driver

const CRITERIA: [&str; 11] = [
    "gradient-fidelity",
    "matrix-update-fidelity",
    "btl-calibration",
    "loss-sanity",
    "linear-baseline-recovery",
    "determinism-and-replay",
    "convergence-vs-random",
    "exploration-ablation",
    "random-pair-ablation",
    "noise-ablation",
    "contextual-protocol",
];

fn main() {
    if std::env::args().any(|a| a == "--list") {
        for name in CRITERIA {
            println!("{name}: test");
        }
        return;
    }
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let wanted =
        |name: &str| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()));
    let mut failures = 0;
    let mut report = |name: &str, run: &mut dyn FnMut() -> Verdict| {
        if !wanted(name) {
            return;
        }
        let start = Instant::now();
        let v = run();
        let status = if v.pass { "PASS" } else { "FAIL" };
        failures += usize::from(!v.pass);
        println!(
            "{status} {name}: {} [{:.1}s]",
            v.detail,
            start.elapsed().as_secs_f64()
        );
    };

    report("gradient-fidelity", &mut gradient_fidelity);
    report("matrix-update-fidelity", &mut matrix_update_fidelity);
    report("btl-calibration", &mut btl_calibration);
    report("loss-sanity", &mut loss_sanity);
    report("linear-baseline-recovery", &mut linear_recovery);
    report("determinism-and-replay", &mut determinism_and_replay);

    let sweep_names = [
        "convergence-vs-random",
        "exploration-ablation",
        "random-pair-ablation",
        "noise-ablation",
    ];
    if sweep_names.iter().any(|n| wanted(n)) {
        let main = main_suite();
        report("convergence-vs-random", &mut || convergence(&main));
        report("exploration-ablation", &mut || exploration_ablation(&main));
        report("random-pair-ablation", &mut || random_pair_ablation(&main));
        report("noise-ablation", &mut || noise_ablation(&main));
    }
    report("contextual-protocol", &mut contextual_protocol);

    if failures > 0 {
        println!("acceptance: {failures} criterion(s) failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
