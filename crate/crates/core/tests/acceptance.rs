//! Acceptance criteria 1–8. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hsa_core::audit::{
    algebraic_audit, exhaustive_audit, golden_example1, state_count, DEFAULT_MAX_STATES,
};
use hsa_core::code_design::CodeDesign;
use hsa_core::key_design::{phi, sample_circulant_validity, select_field, Regime};
use hsa_core::protocol::{run_round, InputVector, SchemeParams};
use hsa_core::rates::{achievable_rates, converse_bounds, measured_rates, Rate, RateTuple};

type Outcome = Result<String, String>;

fn ratio(n: u64, d: u64) -> Rate {
    Rate::new(n, d)
}

fn tuple(x: Rate, y: Rate, z: Rate, zs: Rate) -> RateTuple {
    RateTuple::new(x, y, z, zs)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Measured rates of `trials` seeded rounds, all of which must recover.
fn sweep_rounds(p: &SchemeParams, trials: u64, blocks: usize) -> Result<Vec<RateTuple>, String> {
    let len = blocks * p.block_size();
    let mut rng =
        ChaCha8Rng::seed_from_u64(p.users() as u64 * 100 + p.topology().association() as u64);
    (0..trials)
        .map(|t| {
            let inputs = InputVector::random(p, len, &mut rng);
            let round = run_round(p, &inputs, t).map_err(|e| e.to_string())?;
            ensure(round.recovered_sum == inputs.sum(p.field()), || {
                format!(
                    "K={} B={} trial {t}: wrong sum",
                    p.users(),
                    p.topology().association()
                )
            })?;
            measured_rates(&round.transcript).map_err(|e| e.to_string())
        })
        .collect()
}

fn criterion1() -> Outcome {
    let p = golden_example1();
    ensure(state_count(&p, 2) == 6561, || "state count".into())?;
    let report = exhaustive_audit(&p, 2, DEFAULT_MAX_STATES).map_err(|e| e.to_string())?;
    let mi = report.mi.as_ref().unwrap();
    let rec = report.recovery.as_ref().unwrap();
    ensure(rec.passed && rec.states == 6561, || {
        format!("recovery {rec:?}")
    })?;
    ensure(mi.relay_independent == vec![true; 3], || {
        format!("relays {mi:?}")
    })?;
    ensure(mi.server_independent, || "server factorization".into())?;
    ensure(report.passed, || "report".into())?;
    let rates = sweep_rounds(&p, 1, 1)?;
    let expected = tuple(ratio(1, 1), ratio(1, 2), ratio(1, 2), ratio(1, 1));
    ensure(rates[0] == expected, || format!("rates {}", rates[0]))?;
    Ok(format!("6561 states exact, rates {expected}"))
}

/// Criteria 2 and 3 share the sweep.
fn criteria2_and_3() -> (Outcome, Outcome) {
    let mut schemes = 0;
    let mut transcripts = 0;
    let mut rate_err = None;
    for k in 2..=8 {
        for b in 1..k {
            let built = SchemeParams::build(k, b, None, 0);
            let p = match built {
                Ok(p) => p,
                Err(e) => {
                    return (
                        Err(format!("K={k} B={b}: {e}")),
                        Err("sweep aborted".into()),
                    )
                }
            };
            if !p.validate().passed() || p.validate().checks.len() != 5 {
                return (
                    Err(format!("K={k} B={b}: validation")),
                    Err("sweep aborted".into()),
                );
            }
            let rates = match sweep_rounds(&p, 100, 2) {
                Ok(r) => r,
                Err(e) => return (Err(e), Err("sweep aborted".into())),
            };
            let expected = achievable_rates(k, b).unwrap();
            let corner = tuple(
                ratio(1, 1),
                ratio(1, b as u64),
                ratio(1, b as u64),
                ratio(1, 1).max(ratio(k as u64, b as u64) - ratio(1, 1)),
            );
            if rate_err.is_none() && (expected != corner || rates.iter().any(|r| *r != corner)) {
                rate_err = Some(format!("K={k} B={b}: measured {}", rates[0]));
            }
            schemes += 1;
            transcripts += rates.len();
        }
    }
    (
        Ok(format!("{schemes} schemes valid, 100/100 rounds each")),
        match rate_err {
            None => Ok(format!(
                "{transcripts} transcripts at (1, 1/B, 1/B, max(1, K/B-1))"
            )),
            Some(e) => Err(e),
        },
    )
}

fn criterion4() -> Outcome {
    for k in 2..=6 {
        let p = SchemeParams::build(k, k, None, 0).map_err(|e| format!("K={k}: {e}"))?;
        ensure(p.regime() == Regime::FullAssociation, || {
            format!("K={k}: regime")
        })?;
        ensure(algebraic_audit(&p).passed && p.validate().passed(), || {
            format!("K={k}: algebraic audit")
        })?;
        let expected = tuple(
            ratio(1, 1),
            ratio(1, k as u64 - 1),
            ratio(1, k as u64 - 1),
            ratio(1, 1),
        );
        for r in sweep_rounds(&p, 20, 2)? {
            ensure(r == expected, || format!("K={k}: measured {r}"))?;
        }
    }
    Ok("K=2..6 at (1, 1/(K-1), 1/(K-1), 1)".into())
}

fn criterion5() -> Outcome {
    ensure(converse_bounds(8, 3).unwrap().zs == ratio(5, 3), || {
        "R_ZS bound (8,3)".into()
    })?;
    let mut configs = 0;
    for k in 2..=8 {
        for b in 1..=k {
            if b == k && k > 6 {
                continue;
            }
            let p = SchemeParams::build(k, b, None, 0).map_err(|e| e.to_string())?;
            let lb = converse_bounds(k, b).unwrap();
            let m = sweep_rounds(&p, 1, 1)?[0];
            ensure(m.dominates(&lb), || format!("K={k} B={b}: {m} below {lb}"))?;
            if b < k {
                ensure(m.y == lb.y && m.z == lb.z && m.zs == lb.zs, || {
                    format!("K={k} B={b}: {m} not tight against {lb}")
                })?;
            }
            configs += 1;
        }
    }
    Ok(format!(
        "R_ZS(8,3) >= 5/3, {configs} configs dominate, tight for B <= K-1"
    ))
}

/// Smallest prime `≡ 1 (mod m)` at or above `from`, by a sieve.
fn sieve_prime(from: u64, m: u64) -> u64 {
    let n = (from * 4 + 64) as usize;
    let mut composite = vec![false; n];
    for i in 2..n {
        if !composite[i] {
            for j in (i * i..n).step_by(i) {
                composite[j] = true;
            }
        }
    }
    (from as usize..n)
        .find(|&p| p >= 2 && !composite[p] && (p as u64 - 1).is_multiple_of(m))
        .expect("prime in range") as u64
}

fn criterion6() -> Outcome {
    let (k, b) = (4, 2);
    let p = SchemeParams::build(k, b, None, 0).map_err(|e| e.to_string())?;
    let q = p.field().modulus();
    let phi = phi(k, b);
    ensure(phi == 46, || format!("phi = {phi}"))?;
    ensure(q == sieve_prime(phi, k as u64) && q == 53, || {
        format!("default q = {q}")
    })?;
    let code: &CodeDesign = p.code().unwrap();
    let (valid, samples) = sample_circulant_validity(code, 200, 6);
    // valid/samples ≥ 1 − φ/q − 1/20, cleared of denominators.
    let lhs = valid as i64 * q as i64 * 20;
    let rhs = samples as i64 * (20 * (q as i64 - phi as i64) - q as i64);
    ensure(lhs >= rhs, || format!("{valid}/{samples} valid at q={q}"))?;
    Ok(format!(
        "q={q}, {valid}/{samples} valid, bound 1 - 46/53 - 0.05"
    ))
}

fn criterion7() -> Outcome {
    let p = SchemeParams::build(3, 2, Some(7), 0).map_err(|e| e.to_string())?;
    let states = state_count(&p, 2);
    ensure(states <= DEFAULT_MAX_STATES as u128, || {
        format!("{states} states")
    })?;
    let report = exhaustive_audit(&p, 2, DEFAULT_MAX_STATES).map_err(|e| e.to_string())?;
    ensure(report.passed, || format!("{report:?}"))?;
    Ok(format!("K=3 B=2 q=7 L=2, {states} states exact"))
}

fn criterion8() -> Outcome {
    let schemes = common::all_schemes(8);
    let checks: [(&str, common::Check); 7] = [
        ("topology duality K<=12", common::topology_duality(12)),
        (
            "polynomial zero pattern and ladder K<=8",
            common::polynomial_structure(8),
        ),
        (
            "keyless decoding",
            common::keyless_recovery(8, |f, n| {
                (0..n as u64).map(|j| (j * j + 1) % f.modulus()).collect()
            }),
        ),
        ("key cancellation", common::key_cancellation(&schemes)),
        (
            "null space equals span(R)",
            common::nullspace_equals_recovery_span(&schemes),
        ),
        ("relay rank", common::relay_ranks(&schemes)),
        ("rank oracle", common::rank_oracle()),
    ];
    let mut names = Vec::new();
    for (name, result) in checks {
        result.map_err(|e| format!("{name}: {e}"))?;
        names.push(name);
    }
    Ok(names.join(", "))
}

fn main() -> ExitCode {
    // Keep criterion 6's default field in sync with the selector.
    assert_eq!(select_field(4, 2).unwrap().modulus(), 53);
    let mut failed = 0;
    let mut report = |n: usize, outcome: Outcome, started: Instant| {
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {n}: PASS ({secs:.2}s) {msg}"),
            Err(msg) => {
                failed += 1;
                println!("criterion {n}: FAIL ({secs:.2}s) {msg}");
            }
        }
    };
    let t = Instant::now();
    report(1, criterion1(), t);
    let t = Instant::now();
    let (c2, c3) = criteria2_and_3();
    report(2, c2, t);
    report(3, c3, t);
    let t = Instant::now();
    report(4, criterion4(), t);
    let t = Instant::now();
    report(5, criterion5(), t);
    let t = Instant::now();
    report(6, criterion6(), t);
    let t = Instant::now();
    report(7, criterion7(), t);
    let t = Instant::now();
    report(8, criterion8(), t);
    if failed == 0 {
        println!("acceptance: 8/8 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
