//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line. Run with `cargo test --test acceptance -- --nocapture`
//! to see the per-criterion lines.

use std::time::{Duration, Instant};

use ghzrig_core::diagram::approx_equal;
use ghzrig_core::game::{classical_value, enumerate_inputs, ideal_strategy};
use ghzrig_core::rigidity::{
    chained_isometry, check_keyineqs, check_negation, extract, full_report, swap_isometry,
    swap_isometry_diagram,
};
use ghzrig_core::strategy::{random_strategy, NoiseSpec, Player, Strategy};
use ghzrig_core::tensor::{frobenius_distance, ComplexMatrix, Tolerance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: usize,
    name: &'static str,
    result: Result<String, String>,
    elapsed: Duration,
}

fn run(id: usize, name: &'static str, f: impl FnOnce() -> Result<String, String>) -> Outcome {
    let start = Instant::now();
    let result = f();
    let elapsed = start.elapsed();
    let line = match &result {
        Ok(detail) => format!("criterion {id:02} PASS [{elapsed:?}] {name}: {detail}"),
        Err(detail) => format!("criterion {id:02} FAIL [{elapsed:?}] {name}: {detail}"),
    };
    println!("{line}");
    Outcome {
        id,
        name,
        result,
        elapsed,
    }
}

fn budget(outcome: &mut Outcome, limit: Duration) {
    if outcome.elapsed > limit {
        let msg = format!("runtime {:?} exceeds budget {:?}", outcome.elapsed, limit);
        println!("criterion {:02} FAIL {}: {}", outcome.id, outcome.name, msg);
        outcome.result = Err(msg);
    }
}

fn ideal_optimality() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for n in 1..=3usize {
        let s = ideal_strategy(n).map_err(|e| e.to_string())?;
        let w = s.winning_probability().map_err(|e| e.to_string())?;
        let gap = (w - 1.0).abs();
        worst = worst.max(gap);
        if gap > 1e-10 {
            return Err(format!("n={n}: winning probability {w}, gap {gap:.3e}"));
        }
    }
    Ok(format!(
        "winning probability 1 for n ∈ {{1,2,3}}, max gap {worst:.3e}"
    ))
}

fn classical_gap() -> Result<String, String> {
    let v = classical_value(1).map_err(|e| e.to_string())?;
    if v != 0.75 {
        return Err(format!("classical value {v}, expected exactly 0.75"));
    }
    Ok("classical value over 64 deterministic strategies is exactly 0.75".into())
}

fn input_distribution_counts() -> Result<String, String> {
    for n in 2..=4usize {
        let combos = enumerate_inputs(n).map_err(|e| e.to_string())?;
        let expected = 4 * n + 24 * n * (n - 1);
        if combos.len() != expected {
            return Err(format!(
                "n={n}: {} combos, expected {expected}",
                combos.len()
            ));
        }
        let total: f64 = combos.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(format!("n={n}: probabilities sum to {total}"));
        }
    }
    Ok("counts 4n + 24n(n−1) and unit total probability for n ∈ {2,3,4}".into())
}

fn losing_probability_identity() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6e2a);
    let mut max_gap: f64 = 0.0;
    for trial in 0..20 {
        let s = random_strategy(2, [4, 4, 4], &mut rng).map_err(|e| e.to_string())?;
        let section = check_keyineqs(&s).map_err(|e| e.to_string())?;
        for e in &section.entries {
            max_gap = max_gap.max(e.identity_gap);
            if e.identity_gap > 1e-10 {
                return Err(format!(
                    "trial {trial} round {} line {} ({}): residual² − 4p = {:.3e}",
                    e.round, e.line, e.variant, e.identity_gap
                ));
            }
        }
    }
    Ok(format!(
        "residual² = 4·losing probability across 20 random strategies, max gap {max_gap:.3e}"
    ))
}

fn epsilon_zero_collapse() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for n in 1..=2usize {
        let s = ideal_strategy(n).map_err(|e| e.to_string())?;
        let report = full_report(&s).map_err(|e| e.to_string())?;
        let extraction = extract(&s).map_err(|e| e.to_string())?;
        let max = report.max_residual().max(extraction.residual);
        worst = worst.max(max);
        if max > 1e-9 {
            return Err(format!("n={n}: max residual {max:.3e} above 1e-9"));
        }
    }
    Ok(format!(
        "all checkers and extraction ≤ 1e-9 on the ideal strategy at N ∈ {{1,2}} (max {worst:.3e})"
    ))
}

fn rigidity_scaling() -> Result<String, String> {
    let s = ideal_strategy(1).map_err(|e| e.to_string())?;
    let mut points = Vec::new();
    let mut ratios = Vec::new();
    for step in 1..=10 {
        let theta = 0.02 * step as f64;
        let noisy = s
            .perturb(&NoiseSpec::rotation(theta))
            .map_err(|e| e.to_string())?;
        let result = extract(&noisy).map_err(|e| e.to_string())?;
        if result.epsilon <= 0.0 || result.residual <= 0.0 {
            return Err(format!("theta={theta}: degenerate point"));
        }
        points.push((result.epsilon.ln(), result.residual.ln()));
        ratios.push(result.residual / result.epsilon.sqrt());
    }
    let m = points.len() as f64;
    let mean_x: f64 = points.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y: f64 = points.iter().map(|p| p.1).sum::<f64>() / m;
    let slope: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum::<f64>()
        / points.iter().map(|p| (p.0 - mean_x).powi(2)).sum::<f64>();
    if (slope - 0.5).abs() > 0.15 {
        return Err(format!("log-log slope {slope:.4} outside 0.5 ± 0.15"));
    }
    let max_ratio = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let min_ratio = ratios.iter().cloned().fold(f64::MAX, f64::min);
    if max_ratio / min_ratio >= 5.0 {
        return Err(format!(
            "residual/√ε spread {:.3} exceeds 5",
            max_ratio / min_ratio
        ));
    }
    Ok(format!(
        "slope {slope:.4} (target 0.5 ± 0.15), residual/√ε spread {:.4}",
        max_ratio / min_ratio
    ))
}

fn diagram_oracle_agreement() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xd1a6);
    let mut worst: f64 = 0.0;
    for trial in 0..10 {
        let dims = if trial % 2 == 0 { [2, 2, 2] } else { [3, 2, 4] };
        let s = random_strategy(1, dims, &mut rng).map_err(|e| e.to_string())?;
        for player in Player::ALL {
            let direct = swap_isometry(&s, player, 1).map_err(|e| e.to_string())?;
            let diagram = swap_isometry_diagram(&s, player, 1).map_err(|e| e.to_string())?;
            let check = approx_equal((&diagram).into(), (&direct).into(), 1e-12)
                .map_err(|e| e.to_string())?;
            worst = worst.max(check.residual);
            if !check.holds {
                return Err(format!(
                    "trial {trial} player {}: diagram vs matrix residual {:.3e}",
                    player.label(),
                    check.residual
                ));
            }
        }
    }
    Ok(format!(
        "diagram evaluation matches the matrix product on 10 random strategies (max residual {worst:.3e})"
    ))
}

fn isometry_property() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x150e);
    let mut worst: f64 = 0.0;
    for trial in 0..10 {
        let dims = if trial % 3 == 0 { [2, 3, 2] } else { [4, 4, 4] };
        let s = random_strategy(2, dims, &mut rng).map_err(|e| e.to_string())?;
        for player in Player::ALL {
            let theta = chained_isometry(&s, player).map_err(|e| e.to_string())?;
            let gram = theta.dagger().mul(&theta).map_err(|e| e.to_string())?;
            let id = ComplexMatrix::identity(theta.cols()).map_err(|e| e.to_string())?;
            let defect = frobenius_distance(&gram, &id).map_err(|e| e.to_string())?;
            worst = worst.max(defect);
            if defect > 1e-9 {
                return Err(format!(
                    "trial {trial} player {}: ‖Θ†Θ − I‖ = {defect:.3e}",
                    player.label()
                ));
            }
        }
    }
    Ok(format!(
        "‖Θ†Θ − I‖ ≤ 1e-9 on 10 random strategies (max {worst:.3e})"
    ))
}

fn monte_carlo_consistency() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3c4d);
    let rounds = 100_000u64;
    let mut worst_sigmas: f64 = 0.0;
    for trial in 0..5 {
        let s: Strategy = random_strategy(2, [2, 2, 2], &mut rng).map_err(|e| e.to_string())?;
        let p = s.winning_probability().map_err(|e| e.to_string())?;
        let seed = 1000 + trial as u64;
        let f1 = s.simulate(rounds, seed).map_err(|e| e.to_string())?;
        let f2 = s.simulate(rounds, seed).map_err(|e| e.to_string())?;
        if f1.to_bits() != f2.to_bits() {
            return Err(format!("trial {trial}: same seed produced {f1} and {f2}"));
        }
        let sigma = (p * (1.0 - p) / rounds as f64).sqrt();
        let sigmas = (f1 - p).abs() / sigma.max(1e-12);
        worst_sigmas = worst_sigmas.max(sigmas);
        if (f1 - p).abs() > 3.0 * sigma + 1e-9 {
            return Err(format!(
                "trial {trial}: |{f1} − {p}| beyond 3σ (σ = {sigma:.2e})"
            ));
        }
    }
    Ok(format!(
        "5 random strategies within 3σ at 10⁵ rounds (worst {worst_sigmas:.2}σ), byte-identical replay"
    ))
}

fn negation_structure() -> Result<String, String> {
    let base = ideal_strategy(1).map_err(|e| e.to_string())?;
    let noises = [
        NoiseSpec::rotation(0.05),
        NoiseSpec::rotation(0.1),
        NoiseSpec::rotation(0.2),
        NoiseSpec::state_mix(0.1),
    ];
    let mut worst: f64 = 0.0;
    for spec in noises {
        let s = base.perturb(&spec).map_err(|e| e.to_string())?;
        let entries = check_negation(&s).map_err(|e| e.to_string())?;
        if entries.len() != 7 {
            return Err(format!("{} labels reported, expected 7", entries.len()));
        }
        for e in &entries {
            worst = worst.max(e.deviation);
            if e.deviation > 1e-10 {
                return Err(format!(
                    "labels {:?} under {}: deviation {:.3e}",
                    e.labels, e.operator, e.deviation
                ));
            }
        }
    }
    Ok(format!(
        "every non-G₀ component flips sign under its designated operator (max deviation {worst:.3e})"
    ))
}

#[test]
fn acceptance() {
    // Strategies validate up front so later criteria can assume validity.
    let probe = ideal_strategy(2).unwrap();
    assert!(probe.validate(Tolerance::DEFAULT).ok);

    let mut outcomes = Vec::new();

    let mut c1 = run(1, "ideal-strategy optimality", ideal_optimality);
    budget(&mut c1, Duration::from_secs(5));
    outcomes.push(c1);

    let mut c2 = run(2, "classical gap", classical_gap);
    budget(&mut c2, Duration::from_secs(1));
    outcomes.push(c2);

    outcomes.push(run(
        3,
        "input-distribution counts",
        input_distribution_counts,
    ));
    outcomes.push(run(
        4,
        "losing-probability identity",
        losing_probability_identity,
    ));

    let mut c5 = run(5, "ε = 0 collapse of the chain", epsilon_zero_collapse);
    budget(&mut c5, Duration::from_secs(60));
    outcomes.push(c5);

    outcomes.push(run(
        6,
        "rigidity scaling on the noise sweep",
        rigidity_scaling,
    ));
    outcomes.push(run(
        7,
        "diagram/matrix oracle agreement",
        diagram_oracle_agreement,
    ));
    outcomes.push(run(8, "isometry property", isometry_property));
    outcomes.push(run(9, "Monte Carlo consistency", monte_carlo_consistency));
    outcomes.push(run(10, "negation structure", negation_structure));

    let failures: Vec<String> = outcomes
        .iter()
        .filter_map(|o| {
            o.result
                .as_ref()
                .err()
                .map(|e| format!("criterion {:02} ({}): {e}", o.id, o.name))
        })
        .collect();
    assert!(
        failures.is_empty(),
        "{} criterion(s) failed:\n{}",
        failures.len(),
        failures.join("\n")
    );
}
