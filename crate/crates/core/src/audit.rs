//! Security and recovery audits.
//!
//! The algebraic checks work at any size. The exhaustive audits enumerate
//! every realization of the inputs and the source key and test
//! independence by exact count factorization: two variables `A`, `B` over
//! `N` equally likely states are independent iff
//! `N · count(a, b) = count(a) · count(b)` for every cell.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::code_design::InputCoefficients;
use crate::gf::{Matrix, PrimeField};
use crate::key_design::KeyDesign;
use crate::protocol::{Kernel, SchemeParams};
use crate::topology::Topology;

pub const DEFAULT_MAX_STATES: u64 = 100_000_000;

/// Largest count table the exhaustive audits will allocate.
const MAX_TABLE_CELLS: u64 = 1 << 26;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuditError {
    #[error("state space of {states} exceeds the limit {max}")]
    StateSpaceTooLarge { states: u128, max: u64 },
    #[error("count table of {cells} cells exceeds the limit {max}")]
    TableTooLarge { cells: u128, max: u64 },
    #[error("input length {len} is not a positive multiple of the block size {block}")]
    InvalidLength { len: usize, block: usize },
}

/// The `K = 3`, `B = 2` scheme over GF(3) with two input symbols per user.
pub fn golden_example1() -> SchemeParams {
    let f = PrimeField::new(3).expect("3 is prime");
    let topology = Topology::new(3, 2).expect("valid topology");
    let alpha_rows: [((usize, usize), [i64; 2]); 6] = [
        ((1, 1), [-2, 0]),
        ((1, 2), [-1, -1]),
        ((2, 2), [1, -1]),
        ((2, 3), [2, 0]),
        ((3, 3), [1, 1]),
        ((3, 1), [-1, 1]),
    ];
    let alpha = InputCoefficients::from_entries(
        f,
        alpha_rows
            .iter()
            .map(|&(link, row)| (link, row.iter().map(|&v| f.reduce_i64(v)).collect())),
    );
    let h = Matrix::from_rows(f, &[vec![1, 0], vec![0, 1], vec![1, 1]]);
    let lambda = Matrix::from_rows(f, &[vec![-1, 1, 0], vec![0, 2, 1], vec![2, 0, 1]]);
    // Sum symbol 1 is (Y3 − Y1)/2, symbol 2 is (Y1 − 2Y2 + Y3)/2.
    let recovery = Matrix::from_rows(f, &[vec![1, 2], vec![0, 2], vec![2, 2]]);
    SchemeParams::from_parts(topology, alpha, KeyDesign::explicit(h, lambda), recovery)
        .expect("golden scheme is valid")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RelayCheck {
    pub relay: usize,
    /// Rank of the key coefficient rows `λ_{k,i} h_k` seen by the relay.
    pub rank: usize,
    pub expected_rank: usize,
    pub nonzero_lambdas: bool,
    pub passed: bool,
}

/// The key symbols reaching relay `i` are independent and each message
/// carries one.
pub fn relay_security_algebraic(params: &SchemeParams, i: usize) -> RelayCheck {
    let f = params.field();
    let h = params.h();
    let users: Vec<usize> = params
        .active_topology()
        .users_of_relay(i)
        .unwrap_or_default();
    let lambdas: Vec<u64> = users
        .iter()
        .map(|&k| params.lambda().raw(k - 1, i - 1))
        .collect();
    let rows = Matrix::from_fn(f, users.len(), h.cols(), |r, c| {
        f.mul(lambdas[r], h.raw(users[r] - 1, c))
    });
    let rank = rows.rank();
    let nonzero_lambdas = lambdas.iter().all(|&l| l != 0);
    RelayCheck {
        relay: i,
        rank,
        expected_rank: users.len(),
        nonzero_lambdas,
        passed: nonzero_lambdas && rank == users.len() && !users.is_empty(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ServerCheck {
    /// `rank(𝐇ᵀ𝚲)`.
    pub rank: usize,
    pub expected_rank: usize,
    /// `𝐇ᵀ𝚲𝐑 = 0`.
    pub cancellation: bool,
    pub null_dim: usize,
    /// `null(𝐇ᵀ𝚲) = span(𝐑)`.
    pub null_equals_recovery_span: bool,
    pub passed: bool,
}

/// Every key-cancelling combination of the relay messages is a combination
/// of the decoding vectors.
pub fn server_security_algebraic(params: &SchemeParams) -> ServerCheck {
    let k = params.users();
    let expected_rank = k - params.block_size();
    let ht_lambda = &params.h().transpose() * params.lambda();
    let rank = ht_lambda.rank();
    let cancellation = (&ht_lambda * params.recovery()).is_zero();
    let null = ht_lambda.nullspace();
    let null_equals_recovery_span = null.same_column_span(params.recovery());
    ServerCheck {
        rank,
        expected_rank,
        cancellation,
        null_dim: null.cols(),
        null_equals_recovery_span,
        passed: rank == expected_rank && cancellation && null_equals_recovery_span,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MiReport {
    pub states: u64,
    /// Relay messages independent of all inputs, index `i − 1`.
    pub relay_independent: Vec<bool>,
    /// Relay messages independent of all inputs given their sum.
    pub server_independent: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecoveryReport {
    pub states: u64,
    /// States whose decoded sum is wrong.
    pub wrong_decodes: u64,
    /// The relay messages determine the input sum as a function.
    pub functional: bool,
    pub passed: bool,
}

/// Combined verdicts. `passed` holds iff every contained check passed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub relay_checks: Vec<RelayCheck>,
    pub server_check: ServerCheck,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mi: Option<MiReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovery: Option<RecoveryReport>,
    pub passed: bool,
}

impl AuditReport {
    fn finish(mut self) -> Self {
        self.passed = self.relay_checks.iter().all(|c| c.passed)
            && self.server_check.passed
            && self.mi.as_ref().is_none_or(|m| m.passed)
            && self.recovery.as_ref().is_none_or(|r| r.passed);
        self
    }
}

pub fn algebraic_audit(params: &SchemeParams) -> AuditReport {
    AuditReport {
        relay_checks: (1..=params.users())
            .map(|i| relay_security_algebraic(params, i))
            .collect(),
        server_check: server_security_algebraic(params),
        mi: None,
        recovery: None,
        passed: false,
    }
    .finish()
}

/// Algebraic checks plus both exhaustive audits at input length `len`.
pub fn exhaustive_audit(
    params: &SchemeParams,
    len: usize,
    max_states: u64,
) -> Result<AuditReport, AuditError> {
    let mut report = algebraic_audit(params);
    report.mi = Some(exhaustive_mi_audit(params, len, max_states)?);
    report.recovery = Some(exhaustive_recovery_audit(params, len, max_states)?);
    Ok(report.finish())
}

/// Number of `(W, Z_Σ)` realizations at input length `len`.
pub fn state_count(params: &SchemeParams, len: usize) -> u128 {
    let blocks = len / params.block_size().max(1);
    let exp = params.users() * len + blocks * params.source_key_len();
    (params.field().modulus() as u128).saturating_pow(exp as u32)
}

/// Digit-indexed view of the state space.
struct Space {
    kernel: Kernel,
    q: u64,
    users: usize,
    len: usize,
    blocks: usize,
    /// `q^{K·L}` input realizations.
    w_count: u64,
    /// `q^{blocks·L_ZΣ*}` source key realizations.
    z_count: u64,
    /// For each relay, positions in `kernel.links` of its incoming links.
    relay_links: Vec<Vec<usize>>,
    relay_cells: Vec<u64>,
    y_cells: u64,
    sum_cells: u64,
}

/// Scratch buffers for one evaluation.
struct Scratch {
    w: Vec<u64>,
    w_block: Vec<u64>,
    z: Vec<u64>,
    x: Vec<u64>,
    y: Vec<u64>,
    y_block: Vec<u64>,
    decoded: Vec<u64>,
}

fn digits(mut idx: u64, q: u64, out: &mut [u64]) {
    for d in out.iter_mut() {
        *d = idx % q;
        idx /= q;
    }
}

fn pack(q: u64, symbols: impl Iterator<Item = u64>) -> u64 {
    symbols.fold((0, 1), |(acc, m), s| (acc + s * m, m * q)).0
}

impl Space {
    fn new(params: &SchemeParams, len: usize, max_states: u64) -> Result<Self, AuditError> {
        let block = params.block_size();
        if len == 0 || !len.is_multiple_of(block) {
            return Err(AuditError::InvalidLength { len, block });
        }
        let states = state_count(params, len);
        if states > max_states as u128 {
            return Err(AuditError::StateSpaceTooLarge {
                states,
                max: max_states,
            });
        }
        let kernel = params.kernel();
        let q = params.field().modulus();
        let users = params.users();
        let blocks = len / block;
        let qpow = |e: usize| (q as u128).saturating_pow(e as u32);
        let relay_links: Vec<Vec<usize>> = (1..=users)
            .map(|i| {
                (0..kernel.links.len())
                    .filter(|&p| kernel.links[p].relay == i)
                    .collect()
            })
            .collect();
        let relay_cells: Vec<u128> = relay_links.iter().map(|l| qpow(l.len() * blocks)).collect();
        let y_cells = qpow(users * blocks);
        let sum_cells = qpow(len);
        for cells in relay_cells.iter().copied().chain([y_cells * sum_cells]) {
            if cells > MAX_TABLE_CELLS as u128 {
                return Err(AuditError::TableTooLarge {
                    cells,
                    max: MAX_TABLE_CELLS,
                });
            }
        }
        Ok(Space {
            q,
            users,
            len,
            blocks,
            w_count: qpow(users * len) as u64,
            z_count: qpow(blocks * kernel.key_len) as u64,
            relay_links,
            relay_cells: relay_cells.iter().map(|&c| c as u64).collect(),
            y_cells: y_cells as u64,
            sum_cells: sum_cells as u64,
            kernel,
        })
    }

    fn scratch(&self) -> Scratch {
        Scratch {
            w: vec![0; self.users * self.len],
            w_block: vec![0; self.users * self.kernel.block],
            z: vec![0; self.blocks * self.kernel.key_len],
            x: vec![0; self.blocks * self.kernel.links.len()],
            y: vec![0; self.blocks * self.users],
            y_block: vec![0; self.users],
            decoded: vec![0; self.kernel.block],
        }
    }

    fn load_w(&self, w_idx: u64, s: &mut Scratch) {
        digits(w_idx, self.q, &mut s.w);
    }

    /// Fill `x` (block-major per link) and `y` (block-major per relay).
    fn encode(&self, z_idx: u64, s: &mut Scratch) {
        digits(z_idx, self.q, &mut s.z);
        let (bs, nl, nz, k) = (
            self.kernel.block,
            self.kernel.links.len(),
            self.kernel.key_len,
            self.users,
        );
        for t in 0..self.blocks {
            for u in 0..k {
                s.w_block[u * bs..(u + 1) * bs]
                    .copy_from_slice(&s.w[u * self.len + t * bs..u * self.len + (t + 1) * bs]);
            }
            self.kernel.encode_block(
                &s.w_block,
                &s.z[t * nz..(t + 1) * nz],
                &mut s.x[t * nl..(t + 1) * nl],
                &mut s.y[t * k..(t + 1) * k],
            );
        }
    }

    fn relay_cell(&self, relay: usize, s: &Scratch) -> usize {
        let nl = self.kernel.links.len();
        let links = &self.relay_links[relay];
        pack(
            self.q,
            (0..self.blocks).flat_map(|t| links.iter().map(move |&p| s.x[t * nl + p])),
        ) as usize
    }

    fn y_cell(&self, s: &Scratch) -> usize {
        pack(self.q, s.y.iter().copied()) as usize
    }

    fn input_sum(&self, s: &Scratch, j: usize) -> u64 {
        let f = self.kernel.field;
        (0..self.users).fold(0, |acc, u| f.add(acc, s.w[u * self.len + j]))
    }

    fn sum_cell(&self, s: &Scratch) -> usize {
        pack(self.q, (0..self.len).map(|j| self.input_sum(s, j))) as usize
    }

    /// Disjoint ranges of input realizations for parallel work.
    fn w_chunks(&self) -> Vec<(u64, u64)> {
        let target = (rayon::current_num_threads() as u64 * 8).max(1);
        let step = self.w_count.div_ceil(target).max(1);
        (0..self.w_count)
            .step_by(step as usize)
            .map(|a| (a, (a + step).min(self.w_count)))
            .collect()
    }
}

/// Marginal count tables: per relay over its messages, and over
/// `(ΣW, Y)` for the server.
#[derive(Clone)]
struct Marginals {
    relay: Vec<Vec<u64>>,
    server: Vec<u64>,
}

impl Marginals {
    fn merge(mut self, other: Marginals) -> Marginals {
        for (a, b) in self.relay.iter_mut().zip(other.relay) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.server
            .iter_mut()
            .zip(other.server)
            .for_each(|(x, y)| *x += y);
        self
    }
}

/// Sparse histogram with cheap reset.
struct Hist {
    counts: Vec<u64>,
    touched: Vec<usize>,
}

impl Hist {
    fn new(cells: u64) -> Self {
        Hist {
            counts: vec![0; cells as usize],
            touched: Vec::new(),
        }
    }

    fn bump(&mut self, cell: usize) {
        if self.counts[cell] == 0 {
            self.touched.push(cell);
        }
        self.counts[cell] += 1;
    }

    /// Check `total · count_w(c) = marginal(c) · count_w` on every cell.
    /// Cells outside the support of this histogram are covered by
    /// requiring the marginal mass on the support to equal `total`.
    fn factorizes(&self, marginal: &[u64], total: u64) -> bool {
        let count_w: u64 = self.touched.iter().map(|&c| self.counts[c]).sum();
        let mut mass = 0u128;
        for &c in &self.touched {
            if total as u128 * self.counts[c] as u128 != marginal[c] as u128 * count_w as u128 {
                return false;
            }
            mass += marginal[c] as u128;
        }
        mass == total as u128
    }

    fn reset(&mut self) {
        for &c in &self.touched {
            self.counts[c] = 0;
        }
        self.touched.clear();
    }
}

/// Exhaustive relay and server independence at input length `len`.
pub fn exhaustive_mi_audit(
    params: &SchemeParams,
    len: usize,
    max_states: u64,
) -> Result<MiReport, AuditError> {
    let space = Space::new(params, len, max_states)?;
    let k = space.users;
    let ycells = space.y_cells as usize;

    // Pass 1: marginals.
    let empty = Marginals {
        relay: space
            .relay_cells
            .iter()
            .map(|&c| vec![0; c as usize])
            .collect(),
        server: vec![0; (space.sum_cells * space.y_cells) as usize],
    };
    let marginals = space
        .w_chunks()
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut m = empty.clone();
            let mut s = space.scratch();
            for w_idx in lo..hi {
                space.load_w(w_idx, &mut s);
                let sum = space.sum_cell(&s);
                for z_idx in 0..space.z_count {
                    space.encode(z_idx, &mut s);
                    for i in 0..k {
                        m.relay[i][space.relay_cell(i, &s)] += 1;
                    }
                    m.server[sum * ycells + space.y_cell(&s)] += 1;
                }
            }
            m
        })
        .reduce(|| empty.clone(), Marginals::merge);

    let total = space.w_count * space.z_count;
    let partition: Vec<u64> = marginals
        .server
        .chunks(ycells)
        .map(|c| c.iter().sum())
        .collect();

    // Pass 2: per-input conditional tables against the marginals.
    let verdicts = space
        .w_chunks()
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut s = space.scratch();
            let mut relay_hists: Vec<Hist> =
                space.relay_cells.iter().map(|&c| Hist::new(c)).collect();
            let mut y_hist = Hist::new(space.y_cells);
            let mut ok = (vec![true; k], true);
            for w_idx in lo..hi {
                space.load_w(w_idx, &mut s);
                let sum = space.sum_cell(&s);
                for z_idx in 0..space.z_count {
                    space.encode(z_idx, &mut s);
                    for (i, h) in relay_hists.iter_mut().enumerate() {
                        h.bump(space.relay_cell(i, &s));
                    }
                    y_hist.bump(space.y_cell(&s));
                }
                for (i, h) in relay_hists.iter_mut().enumerate() {
                    ok.0[i] &= h.factorizes(&marginals.relay[i], total);
                    h.reset();
                }
                let row = &marginals.server[sum * ycells..(sum + 1) * ycells];
                ok.1 &= y_hist.factorizes(row, partition[sum]);
                y_hist.reset();
            }
            ok
        })
        .reduce(
            || (vec![true; k], true),
            |a, b| {
                (
                    a.0.iter().zip(&b.0).map(|(x, y)| *x && *y).collect(),
                    a.1 && b.1,
                )
            },
        );

    let passed = verdicts.0.iter().all(|&v| v) && verdicts.1;
    Ok(MiReport {
        states: total,
        relay_independent: verdicts.0,
        server_independent: verdicts.1,
        passed,
    })
}

/// Decode every realization and check the relay messages determine the
/// input sum.
pub fn exhaustive_recovery_audit(
    params: &SchemeParams,
    len: usize,
    max_states: u64,
) -> Result<RecoveryReport, AuditError> {
    let space = Space::new(params, len, max_states)?;
    let k = space.users;
    let bs = space.kernel.block;
    const UNSEEN: u64 = u64::MAX;
    let seen: Vec<AtomicU64> = (0..space.y_cells).map(|_| AtomicU64::new(UNSEEN)).collect();

    let (wrong, functional) = space
        .w_chunks()
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut s = space.scratch();
            let mut wrong = 0u64;
            let mut functional = true;
            for w_idx in lo..hi {
                space.load_w(w_idx, &mut s);
                let sum = space.sum_cell(&s) as u64;
                for z_idx in 0..space.z_count {
                    space.encode(z_idx, &mut s);
                    let mut correct = true;
                    for t in 0..space.blocks {
                        s.y_block.copy_from_slice(&s.y[t * k..(t + 1) * k]);
                        space.kernel.decode_block(&s.y_block, &mut s.decoded);
                        correct &= (0..bs).all(|j| s.decoded[j] == space.input_sum(&s, t * bs + j));
                    }
                    wrong += u64::from(!correct);
                    let slot = &seen[space.y_cell(&s)];
                    if let Err(prev) =
                        slot.compare_exchange(UNSEEN, sum, Ordering::Relaxed, Ordering::Relaxed)
                    {
                        functional &= prev == sum;
                    }
                }
            }
            (wrong, functional)
        })
        .reduce(|| (0, true), |a, b| (a.0 + b.0, a.1 && b.1));

    Ok(RecoveryReport {
        states: space.w_count * space.z_count,
        wrong_decodes: wrong,
        functional,
        passed: wrong == 0 && functional,
    })
}
