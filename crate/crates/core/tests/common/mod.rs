//! Exhaustive property checks shared by the property suite and the
//! acceptance runner. Each returns the first violation found.

#![allow(dead_code)]

use hsa_core::audit::{relay_security_algebraic, server_security_algebraic};
use hsa_core::code_design::{CodeDesign, EvaluationPoints};
use hsa_core::gf::{Matrix, PrimeField};
use hsa_core::key_design::select_field;
use hsa_core::protocol::SchemeParams;
use hsa_core::topology::Topology;

pub type Check = Result<(), String>;

/// Every `(K, B)` with `2 ≤ K ≤ max_k` and `1 ≤ B ≤ K`, built at the
/// default field with seed 0.
pub fn all_schemes(max_k: usize) -> Vec<SchemeParams> {
    (2..=max_k)
        .flat_map(|k| (1..=k).map(move |b| (k, b)))
        .map(|(k, b)| {
            SchemeParams::build(k, b, None, 0).unwrap_or_else(|e| panic!("build K={k} B={b}: {e}"))
        })
        .collect()
}

fn label(p: &SchemeParams) -> String {
    format!("K={} B={}", p.users(), p.topology().association())
}

pub fn topology_duality(max_k: usize) -> Check {
    for k in 1..=max_k {
        for b in 1..=k {
            let t = Topology::new(k, b).map_err(|e| e.to_string())?;
            for u in 1..=k {
                let relays = t.relays_of_user(u).unwrap();
                if relays.len() != b {
                    return Err(format!("K={k} B={b}: user {u} has {} relays", relays.len()));
                }
                if b == k {
                    let mut sorted = relays.clone();
                    sorted.sort_unstable();
                    if sorted != (1..=k).collect::<Vec<_>>() {
                        return Err(format!("K={k}: user {u} not fully associated"));
                    }
                }
                for i in 1..=k {
                    let users = t.users_of_relay(i).unwrap();
                    if users.len() != b {
                        return Err(format!("K={k} B={b}: relay {i} has {} users", users.len()));
                    }
                    if relays.contains(&i) != users.contains(&u) {
                        return Err(format!("K={k} B={b}: duality fails at user {u}, relay {i}"));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Zero pattern of the association polynomial family at the evaluation
/// points, and the monic degree ladder.
pub fn polynomial_structure(max_k: usize) -> Check {
    for k in 2..=max_k {
        for b in 1..k {
            let field = select_field(k, b).map_err(|e| e.to_string())?;
            let topo = Topology::new(k, b).unwrap();
            let points = EvaluationPoints::sequential(field, k).map_err(|e| e.to_string())?;
            let code = CodeDesign::new(topo, points).map_err(|e| e.to_string())?;
            for user in 1..=k {
                let relays = topo.relays_of_user(user).unwrap();
                for level in 1..=b {
                    let p = code.family(user, level);
                    let deg = k - b + level - 1;
                    if p.degree() != Some(deg) || p.coeff(deg) != 1 {
                        return Err(format!(
                            "K={k} B={b}: p_{user}^({level}) has degree {:?}, leading {}",
                            p.degree(),
                            p.coeff(deg)
                        ));
                    }
                    for j in 1..=k {
                        let zero = p.eval(code.points().theta(j)) == 0;
                        // Higher levels may vanish at an associated point by
                        // coincidence (x³ − 1 at 3 mod 13), so only level 1
                        // is checked in both directions.
                        let associated = relays.contains(&j);
                        if (!associated && !zero) || (level == 1 && associated && zero) {
                            return Err(format!(
                                "K={k} B={b}: p_{user}^({level})(θ_{j}) zero={zero}"
                            ));
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Stacked inputs through the code matrix and `Θ` decode to the sum
/// without any keys.
pub fn keyless_recovery(max_k: usize, input: impl Fn(PrimeField, usize) -> Vec<u64>) -> Check {
    for k in 2..=max_k {
        for b in 1..k {
            let field = select_field(k, b).map_err(|e| e.to_string())?;
            let topo = Topology::new(k, b).unwrap();
            let points = EvaluationPoints::sequential(field, k).unwrap();
            let code = CodeDesign::new(topo, points).unwrap();
            let w = input(field, b * k);
            let y = (code.code_matrix() * code.theta()).left_mul_vec(&w);
            let decoded = code.recovery().left_mul_vec(&y);
            let expected: Vec<u64> = (0..b)
                .map(|j| (0..k).fold(0, |acc, u| field.add(acc, w[u * b + j])))
                .collect();
            if decoded != expected {
                return Err(format!(
                    "K={k} B={b}: decoded {decoded:?}, expected {expected:?}"
                ));
            }
        }
    }
    Ok(())
}

pub fn key_cancellation(schemes: &[SchemeParams]) -> Check {
    for p in schemes {
        let residue = &(&p.h().transpose() * p.lambda()) * p.recovery();
        if !residue.is_zero() {
            return Err(format!("{}: H^T Lambda R nonzero", label(p)));
        }
    }
    Ok(())
}

/// `null(𝐇ᵀ𝚲)` has dimension equal to the block size and is spanned by
/// the independent columns of `𝐑`.
pub fn nullspace_equals_recovery_span(schemes: &[SchemeParams]) -> Check {
    for p in schemes {
        let m = &p.h().transpose() * p.lambda();
        let null = m.nullspace();
        let r = p.recovery();
        let ok = null.cols() == p.block_size()
            && (&m * r).is_zero()
            && r.rank() == r.cols()
            && r.cols() == p.block_size();
        if !ok || !server_security_algebraic(p).passed {
            return Err(format!(
                "{}: dim null = {}, rank R = {}",
                label(p),
                null.cols(),
                r.rank()
            ));
        }
    }
    Ok(())
}

pub fn relay_ranks(schemes: &[SchemeParams]) -> Check {
    for p in schemes {
        for i in 1..=p.users() {
            let c = relay_security_algebraic(p, i);
            if !c.passed || c.rank != p.block_size() {
                return Err(format!("{}: relay {i} rank {}", label(p), c.rank));
            }
        }
    }
    Ok(())
}

/// `log_q` of the number of distinct row combinations.
pub fn brute_force_rank(m: &Matrix) -> usize {
    let f = m.field();
    let q = f.modulus();
    let (rows, cols) = (m.rows(), m.cols());
    let mut span = std::collections::BTreeSet::new();
    for idx in 0..q.pow(rows as u32) {
        let mut coeffs = Vec::with_capacity(rows);
        let mut x = idx;
        for _ in 0..rows {
            coeffs.push(x % q);
            x /= q;
        }
        let v: Vec<u64> = (0..cols)
            .map(|c| (0..rows).fold(0, |acc, r| f.add(acc, f.mul(coeffs[r], m.raw(r, c)))))
            .collect();
        span.insert(v);
    }
    let mut size = span.len() as u64;
    let mut rank = 0;
    while size > 1 {
        size /= q;
        rank += 1;
    }
    rank
}

/// `rank` against the span-enumeration oracle on every matrix over GF(2)
/// up to 3×3, and on a deterministic sample over GF(3).
pub fn rank_oracle() -> Check {
    let f2 = PrimeField::new(2).unwrap();
    for rows in 1..=3 {
        for cols in 1..=3 {
            for bits in 0u64..1 << (rows * cols) {
                let m = Matrix::from_fn(f2, rows, cols, |r, c| (bits >> (r * cols + c)) & 1);
                if m.rank() != brute_force_rank(&m) {
                    return Err(format!("GF(2) rank mismatch on {m}"));
                }
            }
        }
    }
    let f3 = PrimeField::new(3).unwrap();
    let mut state = 0x2545_f491_u64;
    for _ in 0..500 {
        let n = 1 + (state % 4) as usize;
        let m = Matrix::from_fn(f3, n, n, |_, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 33) % 3
        });
        if m.rank() != brute_force_rank(&m) {
            return Err(format!("GF(3) rank mismatch on {m}"));
        }
    }
    Ok(())
}
