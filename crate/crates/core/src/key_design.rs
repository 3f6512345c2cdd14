//! Individual-key generation matrix `𝐇` and key coefficient matrix `𝚲`.
//!
//! Individual keys are `Z = 𝐇 Z_Σᵀ` for a source key `Z_Σ` of
//! `max{B, K−B}` uniform symbols, and user `k` masks its message to relay
//! `i` with `λ_{k,i} Z_k`. Keys cancel at the server iff `𝐇ᵀ𝚲𝐑 = 0`; the
//! server learns nothing beyond the sum iff `null(𝐇ᵀ𝚲) = span(𝐑)`; relays
//! learn nothing iff each sees `B` independent key symbols.
//!
//! Four regimes are covered:
//!
//! * `B = 1`: `𝚲 = I` and `𝐇` spans the annihilator of the recovery vector.
//! * `2 ≤ B ≤ ⌊K/2⌋`: circulant `𝚲_g`, `𝐇 = (𝚲_gᵀ)⁻¹ 𝐐` for a searched `g`.
//! * `⌊K/2⌋ < B ≤ K−1`: Vandermonde `𝐇`, per-relay `𝚲` columns solved
//!   from a shared parameter `β` that avoids a bad set.
//! * `B = K`: the `B = K−1` scheme with one link per user left unused.

use std::collections::BTreeSet;

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::code_design::{CodeDesign, CodeDesignError, EvaluationPoints};
use crate::gf::{is_prime, vandermonde, GfError, Matrix, PrimeField, MAX_MODULUS};
use crate::topology::{Topology, TopologyError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyDesignError {
    #[error("no valid circulant parameter g in GF({q}) after {tried} candidates")]
    NoValidG { q: u64, tried: u64 },
    #[error("no valid parameter beta in GF({q}): bad set covers all {bad} nonzero elements")]
    NoValidBeta { q: u64, bad: usize },
    #[error("K={k} does not divide q-1={}", .q - 1)]
    NoRootOfUnity { k: usize, q: u64 },
    #[error("Lagrange constant term vanishes at relay {relay}, position {position}")]
    LagrangeConstantZero { relay: usize, position: usize },
    #[error("construction failed: {0}")]
    ConstructionFailed(String),
    #[error("regime {regime:?} does not apply to K={k}, B={b}")]
    WrongRegime { regime: Regime, k: usize, b: usize },
    #[error("no prime below 2^31 satisfies the field requirements for K={k}, B={b}")]
    FieldTooLarge { k: usize, b: usize },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    CodeDesign(#[from] CodeDesignError),
    #[error(transparent)]
    Gf(#[from] GfError),
}

/// Which construction produced a [`KeyDesign`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `B = 1`.
    SingleAssociation,
    /// `2 ≤ B ≤ ⌊K/2⌋`, circulant key coefficients.
    Circulant,
    /// `⌊K/2⌋ < B ≤ K−1`, Vandermonde key generation.
    Vandermonde,
    /// `B = K`, reduced to `B = K−1`.
    FullAssociation,
    /// Coefficients supplied verbatim rather than constructed.
    Explicit,
}

impl Regime {
    pub fn for_params(k: usize, b: usize) -> Result<Regime, KeyDesignError> {
        Topology::new(k, b)?;
        if k < 2 {
            return Err(KeyDesignError::ConstructionFailed(
                "secure aggregation needs at least two users".into(),
            ));
        }
        Ok(if b == k {
            Regime::FullAssociation
        } else if b == 1 {
            Regime::SingleAssociation
        } else if b <= k / 2 {
            Regime::Circulant
        } else {
            Regime::Vandermonde
        })
    }
}

/// The free parameter chosen by the search, when the regime has one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyParam {
    None,
    G(u64),
    Beta(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyDesign {
    h: Matrix,
    lambda: Matrix,
    regime: Regime,
    param: KeyParam,
    candidates_tried: u64,
}

impl KeyDesign {
    /// Wrap explicitly supplied matrices. No validation is performed.
    pub fn explicit(h: Matrix, lambda: Matrix) -> Self {
        KeyDesign {
            h,
            lambda,
            regime: Regime::Explicit,
            param: KeyParam::None,
            candidates_tried: 0,
        }
    }

    /// `𝐇`, `K × L_ZΣ*`.
    pub fn h(&self) -> &Matrix {
        &self.h
    }

    /// `𝚲`, `K × K`, row = user, column = relay.
    pub fn lambda(&self) -> &Matrix {
        &self.lambda
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn param(&self) -> KeyParam {
        self.param
    }

    /// How many parameter candidates the search examined.
    pub fn candidates_tried(&self) -> u64 {
        self.candidates_tried
    }

    /// Number of source key symbols per block.
    pub fn source_key_len(&self) -> usize {
        self.h.cols()
    }

    pub fn with_h(mut self, h: Matrix) -> Self {
        self.h = h;
        self
    }

    pub fn with_lambda(mut self, lambda: Matrix) -> Self {
        self.lambda = lambda;
        self
    }
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// `φ(K,B) = C(K,B)(K−B)(K−1)(B−1) + BK + 2`, a field size that guarantees
/// a valid circulant parameter.
pub fn phi(k: usize, b: usize) -> u64 {
    let (k, b) = (k as u64, b as u64);
    binomial(k, b) * (k - b) * (k - 1) * b.saturating_sub(1) + b * k + 2
}

fn smallest_prime(from: u64, pred: impl Fn(u64) -> bool) -> Option<u64> {
    (from..MAX_MODULUS).find(|&q| pred(q) && is_prime(q))
}

/// Default field for `(K, B)`: the smallest prime meeting the regime's
/// sufficient condition.
///
/// * circulant: `q ≡ 1 (mod K)` and `q ≥ φ(K,B)`
/// * Vandermonde: `q > KB`
/// * `B = 1`: `q > K + 1`
/// * `B = K`: `q > K + 1` and the requirement of the `B = K−1` regime
pub fn select_field(k: usize, b: usize) -> Result<PrimeField, KeyDesignError> {
    let regime = Regime::for_params(k, b)?;
    let lower = match regime {
        Regime::SingleAssociation => k as u64 + 2,
        Regime::Circulant => phi(k, b),
        Regime::Vandermonde => (k * b) as u64 + 1,
        Regime::FullAssociation => {
            let reduced = select_field(k, k - 1)?.modulus();
            reduced.max(k as u64 + 2)
        }
        Regime::Explicit => unreachable!("never selected by parameters"),
    };
    let q = match regime {
        Regime::Circulant => smallest_prime(lower, |q| (q - 1) % k as u64 == 0),
        _ => smallest_prime(lower, |_| true),
    };
    let q = q.ok_or(KeyDesignError::FieldTooLarge { k, b })?;
    Ok(PrimeField::new(q)?)
}

/// Seeded pseudorandom enumeration of `GF(q) \ {0}`.
///
/// Walks `1 + ((start + t·stride) mod (q−1))` with `stride` coprime to
/// `q−1`, so every nonzero element is visited exactly once.
#[derive(Debug, Clone)]
pub struct CandidateOrder {
    n: u64,
    start: u64,
    stride: u64,
    t: u64,
}

impl CandidateOrder {
    pub fn new(field: PrimeField, seed: u64) -> Self {
        let n = field.modulus() - 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = rng.gen_range(0..n);
        let stride = loop {
            let s = if n > 1 { rng.gen_range(1..n) } else { 1 };
            if gcd(s, n) == 1 {
                break s;
            }
        };
        CandidateOrder {
            n,
            start,
            stride,
            t: 0,
        }
    }
}

impl Iterator for CandidateOrder {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        if self.t >= self.n {
            return None;
        }
        let v = (self.start as u128 + self.t as u128 * self.stride as u128) % self.n as u128;
        self.t += 1;
        Some(v as u64 + 1)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// True when every `size`-row submatrix of `m` has full rank `size`.
pub fn every_rows_independent(m: &Matrix, size: usize) -> bool {
    first_dependent_rows(m, size).is_none()
}

fn first_dependent_rows(m: &Matrix, size: usize) -> Option<Vec<usize>> {
    (0..m.rows())
        .combinations(size)
        .find(|rows| m.select_rows(rows).rank() < size)
}

/// `𝚲_g = circ(1, g, …, g^{B−1}, 0, …, 0)`.
pub fn circulant_lambda(topo: &Topology, field: PrimeField, g: u64) -> Matrix {
    let (k, b) = (topo.users(), topo.association());
    Matrix::from_fn(field, k, k, |r, c| {
        let shift = (c + k - r) % k;
        if shift < b {
            field.pow(g, shift as u64)
        } else {
            0
        }
    })
}

/// `𝐐`, the `K × ncols` matrix with entry `(k, j) = θ_k^j`.
pub fn power_matrix(points: &EvaluationPoints, ncols: usize) -> Result<Matrix, KeyDesignError> {
    Ok(vandermonde(&points.elements(), ncols)?)
}

/// Why a circulant parameter was rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CandidateRejection {
    Zero,
    RootOfUnity,
    SingularLambda { rank: usize },
    NotMds { rows: Vec<usize> },
}

/// Try one circulant parameter `g` against the full validity conditions.
pub fn circulant_candidate(code: &CodeDesign, g: u64) -> Result<KeyDesign, CandidateRejection> {
    let topo = code.topology();
    let field = code.field();
    let (k, b) = (topo.users(), topo.association());
    let g = g % field.modulus();
    if g == 0 {
        return Err(CandidateRejection::Zero);
    }
    if field.pow(g, k as u64) == 1 {
        return Err(CandidateRejection::RootOfUnity);
    }
    let lambda = circulant_lambda(topo, field, g);
    let lambda_t_inv = match lambda.transpose().inverse() {
        Ok(m) => m,
        Err(GfError::Singular { rank, .. }) => {
            return Err(CandidateRejection::SingularLambda { rank })
        }
        Err(e) => unreachable!("square matrix: {e}"),
    };
    let q_mat = power_matrix(code.points(), k - b).expect("points are distinct");
    let h = &lambda_t_inv * &q_mat;
    if let Some(rows) = first_dependent_rows(&h, k - b) {
        return Err(CandidateRejection::NotMds { rows });
    }
    Ok(KeyDesign {
        h,
        lambda,
        regime: Regime::Circulant,
        param: KeyParam::G(g),
        candidates_tried: 0,
    })
}

/// Circulant construction for `2 ≤ B ≤ ⌊K/2⌋`.
///
/// Requires `K | q−1`. Candidates are visited in the seeded order and the
/// first one passing [`circulant_candidate`] is accepted.
pub fn scheme1_keygen(code: &CodeDesign, seed: u64) -> Result<KeyDesign, KeyDesignError> {
    let topo = code.topology();
    let (k, b) = (topo.users(), topo.association());
    if Regime::for_params(k, b)? != Regime::Circulant {
        return Err(KeyDesignError::WrongRegime {
            regime: Regime::Circulant,
            k,
            b,
        });
    }
    let q = code.field().modulus();
    if !(q - 1).is_multiple_of(k as u64) {
        return Err(KeyDesignError::NoRootOfUnity { k, q });
    }
    let mut tried = 0;
    for g in CandidateOrder::new(code.field(), seed) {
        tried += 1;
        if let Ok(mut design) = circulant_candidate(code, g) {
            design.candidates_tried = tried;
            return Ok(design);
        }
    }
    Err(KeyDesignError::NoValidG { q, tried })
}

/// Empirical fraction of uniformly drawn `g ∈ GF(q)` that are valid.
/// Returns `(valid, samples)`.
pub fn sample_circulant_validity(code: &CodeDesign, samples: u64, seed: u64) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = code.field().modulus();
    let valid = (0..samples)
        .filter(|_| circulant_candidate(code, rng.gen_range(0..q)).is_ok())
        .count() as u64;
    (valid, samples)
}

/// `L_j(0)` for the Lagrange basis over `nodes`, by the product formula
/// `∏_{m≠j} −x_m / (x_j − x_m)`.
pub fn lagrange_constant_terms(field: PrimeField, nodes: &[u64]) -> Result<Vec<u64>, GfError> {
    nodes
        .iter()
        .enumerate()
        .map(|(j, &xj)| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(m, _)| m != j)
                .try_fold(1u64, |acc, (_, &xm)| {
                    let den = field.inv(field.sub(xj, xm))?;
                    Ok(field.mul(acc, field.mul(field.neg(xm), den)))
                })
        })
        .collect()
}

/// Per-relay data of the Vandermonde construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelaySolve {
    /// `U_k`, ascending.
    pub users: Vec<usize>,
    /// First row of `𝚯_{U_k}⁻¹`.
    pub constant_terms: Vec<u64>,
    /// `γ^{(k)}`.
    pub gamma: Vec<u64>,
    /// Forbidden values `−γ(j)/θ̂₁(j)`, deduplicated and sorted.
    pub bad: Vec<u64>,
}

/// Solve the per-relay systems and collect the forbidden `β` values.
pub fn beta_bad_sets(code: &CodeDesign) -> Result<Vec<RelaySolve>, KeyDesignError> {
    let topo = code.topology();
    let field = code.field();
    let (k, b) = (topo.users(), topo.association());
    let h = power_matrix(code.points(), b)?;
    (1..=k)
        .map(|relay| {
            let users = topo.users_of_relay(relay)?;
            let rows: Vec<usize> = users.iter().map(|u| u - 1).collect();
            let inv = h.select_rows(&rows).inverse()?;
            let constant_terms = inv.row(0).to_vec();
            if let Some(pos) = constant_terms.iter().position(|&c| c == 0) {
                return Err(KeyDesignError::LagrangeConstantZero {
                    relay,
                    position: pos + 1,
                });
            }
            let theta = code.points().theta(relay);
            let mut gamma = vec![0u64; b];
            for i in 1..k - b {
                let coef = field.pow(theta, i as u64);
                for (g, &v) in gamma.iter_mut().zip(inv.row(i)) {
                    *g = field.add(*g, field.mul(coef, v));
                }
            }
            let bad: BTreeSet<u64> = gamma
                .iter()
                .zip(&constant_terms)
                .map(|(&g, &c)| field.mul(field.neg(g), field.inv(c).expect("nonzero")))
                .collect();
            Ok(RelaySolve {
                users,
                constant_terms,
                gamma,
                bad: bad.into_iter().collect(),
            })
        })
        .collect()
}

/// Vandermonde construction for `⌊K/2⌋ < B ≤ K−1`.
pub fn scheme2_keygen(code: &CodeDesign, seed: u64) -> Result<KeyDesign, KeyDesignError> {
    let topo = code.topology();
    let field = code.field();
    let (k, b) = (topo.users(), topo.association());
    if Regime::for_params(k, b)? != Regime::Vandermonde {
        return Err(KeyDesignError::WrongRegime {
            regime: Regime::Vandermonde,
            k,
            b,
        });
    }
    let solves = beta_bad_sets(code)?;
    let global: BTreeSet<u64> = solves.iter().flat_map(|s| s.bad.iter().copied()).collect();
    let mut tried = 0;
    let beta = CandidateOrder::new(field, seed)
        .inspect(|_| tried += 1)
        .find(|v| !global.contains(v))
        .ok_or(KeyDesignError::NoValidBeta {
            q: field.modulus(),
            bad: global.len(),
        })?;

    let mut lambda = Matrix::zeros(field, k, k);
    for (relay, solve) in solves.iter().enumerate() {
        for (j, &user) in solve.users.iter().enumerate() {
            let v = field.add(field.mul(beta, solve.constant_terms[j]), solve.gamma[j]);
            lambda.set(user - 1, relay, v);
        }
    }
    Ok(KeyDesign {
        h: power_matrix(code.points(), b)?,
        lambda,
        regime: Regime::Vandermonde,
        param: KeyParam::Beta(beta),
        candidates_tried: tried,
    })
}

/// `B = 1`: `𝚲 = I`, `𝐇` is `K × (K−1)`.
///
/// Rows `1..K−1` are Vandermonde rows `(1, θ_k, …, θ_k^{K−2})`; row `K` is
/// chosen so that `𝐫ᵀ𝐇 = 0` for the recovery vector `𝐫`. Since every entry of
/// `𝐫` is nonzero, `𝐫` spans the left null space of `𝐇` and any `K−1` rows
/// are independent; this is re-checked after construction.
pub fn scheme_b1_keygen(code: &CodeDesign) -> Result<KeyDesign, KeyDesignError> {
    let topo = code.topology();
    let field = code.field();
    let (k, b) = (topo.users(), topo.association());
    if Regime::for_params(k, b)? != Regime::SingleAssociation {
        return Err(KeyDesignError::WrongRegime {
            regime: Regime::SingleAssociation,
            k,
            b,
        });
    }
    let r = code.recovery().column(0);
    let top = power_matrix(code.points(), k - 1)?;
    let last_scale = field.neg(field.inv(r[k - 1])?);
    let h = Matrix::from_fn(field, k, k - 1, |row, col| {
        if row < k - 1 {
            top.raw(row, col)
        } else {
            let s = (0..k - 1).fold(0, |acc, u| field.add(acc, field.mul(r[u], top.raw(u, col))));
            field.mul(last_scale, s)
        }
    });
    if !every_rows_independent(&h, k - 1) {
        return Err(KeyDesignError::ConstructionFailed(
            "some K-1 rows of H are dependent; choose different evaluation points".into(),
        ));
    }
    Ok(KeyDesign {
        h,
        lambda: Matrix::identity(field, k),
        regime: Regime::SingleAssociation,
        param: KeyParam::None,
        candidates_tried: 0,
    })
}

/// Dispatch on the regime of `code`'s topology (`B ≤ K−1`).
pub fn build_keys(code: &CodeDesign, seed: u64) -> Result<KeyDesign, KeyDesignError> {
    let topo = code.topology();
    match Regime::for_params(topo.users(), topo.association())? {
        Regime::SingleAssociation => scheme_b1_keygen(code),
        Regime::Circulant => scheme1_keygen(code, seed),
        Regime::Vandermonde => scheme2_keygen(code, seed),
        regime => Err(KeyDesignError::WrongRegime {
            regime,
            k: topo.users(),
            b: topo.association(),
        }),
    }
}

/// The `B = K` scheme: a `B = K−1` design run on the full topology.
#[derive(Debug, Clone)]
pub struct FullAssociationDesign {
    pub nominal: Topology,
    pub code: CodeDesign,
    pub keys: KeyDesign,
}

impl FullAssociationDesign {
    /// Links of the full topology that carry no message: for each user `k`,
    /// the last relay of its cyclic association order, `k − 1`.
    pub fn disabled_links(&self) -> Vec<(usize, usize)> {
        disabled_links(&self.nominal, self.code.topology())
    }
}

/// Links present in `nominal` but absent from `active`.
pub fn disabled_links(nominal: &Topology, active: &Topology) -> Vec<(usize, usize)> {
    nominal
        .links()
        .into_iter()
        .filter(|&(k, i)| !active.is_associated(k, i))
        .collect()
}

pub fn scheme_bk_keygen(
    k: usize,
    points: EvaluationPoints,
    seed: u64,
) -> Result<FullAssociationDesign, KeyDesignError> {
    if k < 2 {
        return Err(KeyDesignError::ConstructionFailed(
            "secure aggregation needs at least two users".into(),
        ));
    }
    let nominal = Topology::new(k, k)?;
    let code = CodeDesign::new(Topology::new(k, k - 1)?, points)?;
    let mut keys = build_keys(&code, seed)?;
    keys.regime = Regime::FullAssociation;
    Ok(FullAssociationDesign {
        nominal,
        code,
        keys,
    })
}

/// One named check of [`ValidationReport`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const CHECK_SUPPORT: &str = "lambda_support";
pub const CHECK_CANCELLATION: &str = "key_cancellation";
pub const CHECK_RANK: &str = "key_rank";
pub const CHECK_NULLSPACE: &str = "nullspace_equals_recovery_span";
pub const CHECK_MDS: &str = "h_mds";

pub fn validate_scheme(keys: &KeyDesign, code: &CodeDesign) -> ValidationReport {
    validate_matrices(code.topology(), keys.h(), keys.lambda(), code.recovery())
}

/// The five algebraic conditions, for any `(𝐇, 𝚲, 𝐑)` on topology `topo`.
pub fn validate_matrices(
    topo: &Topology,
    h: &Matrix,
    lambda: &Matrix,
    recovery: &Matrix,
) -> ValidationReport {
    let (k, b) = (topo.users(), topo.association());
    let mut checks = Vec::with_capacity(5);

    let shape_ok = lambda.rows() == k && lambda.cols() == k && h.rows() == k;
    let violations: Vec<(usize, usize)> = if shape_ok {
        (1..=k)
            .flat_map(|u| (1..=k).map(move |i| (u, i)))
            .filter(|&(u, i)| (lambda.raw(u - 1, i - 1) != 0) != topo.is_associated(u, i))
            .collect()
    } else {
        Vec::new()
    };
    checks.push(Check {
        name: CHECK_SUPPORT.into(),
        passed: shape_ok && violations.is_empty(),
        detail: if shape_ok {
            format!("{} support violations {:?}", violations.len(), violations)
        } else {
            format!(
                "shape mismatch: H {}x{}, Lambda {}x{}",
                h.rows(),
                h.cols(),
                lambda.rows(),
                lambda.cols()
            )
        },
    });
    if !shape_ok || recovery.rows() != k {
        for name in [CHECK_CANCELLATION, CHECK_RANK, CHECK_NULLSPACE, CHECK_MDS] {
            checks.push(Check {
                name: name.into(),
                passed: false,
                detail: "skipped: shape mismatch".into(),
            });
        }
        return ValidationReport { checks };
    }

    let ht_lambda = &h.transpose() * lambda;
    let residue = &ht_lambda * recovery;
    checks.push(Check {
        name: CHECK_CANCELLATION.into(),
        passed: residue.is_zero(),
        detail: format!(
            "H^T Lambda R is {}zero",
            if residue.is_zero() { "" } else { "non" }
        ),
    });

    let rank = ht_lambda.rank();
    checks.push(Check {
        name: CHECK_RANK.into(),
        passed: rank == k - b,
        detail: format!("rank(Lambda^T H) = {rank}, expected {}", k - b),
    });

    let null = ht_lambda.nullspace();
    let same = null.same_column_span(recovery);
    checks.push(Check {
        name: CHECK_NULLSPACE.into(),
        passed: same,
        detail: format!(
            "dim null(H^T Lambda) = {}, rank(R) = {}",
            null.cols(),
            recovery.rank()
        ),
    });

    let mds = if h.cols() < b {
        Some(Vec::new())
    } else {
        first_dependent_rows(h, b)
    };
    checks.push(Check {
        name: CHECK_MDS.into(),
        passed: mds.is_none(),
        detail: match mds {
            None => format!("every {b} rows of H independent"),
            Some(rows) if rows.is_empty() => format!("H has {} < {b} columns", h.cols()),
            Some(rows) => format!("rows {:?} of H are dependent", rows),
        },
    });
    ValidationReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(k: usize, b: usize, q: Option<u64>) -> CodeDesign {
        let f = match q {
            Some(q) => PrimeField::new(q).unwrap(),
            None => select_field(k, b).unwrap(),
        };
        CodeDesign::new(
            Topology::new(k, b).unwrap(),
            EvaluationPoints::sequential(f, k).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi(4, 2), 46);
        assert_eq!(phi(8, 3), 3946);
    }

    #[test]
    fn default_fields() {
        assert_eq!(select_field(3, 2).unwrap().modulus(), 7);
        assert_eq!(select_field(4, 1).unwrap().modulus(), 7);
        let q = select_field(4, 2).unwrap().modulus();
        assert_eq!(q % 4, 1);
        assert!(q >= 46);
    }

    #[test]
    fn candidate_order_is_a_permutation() {
        for q in [2, 3, 7, 53, 101] {
            let f = PrimeField::new(q).unwrap();
            for seed in 0..5 {
                let mut v: Vec<u64> = CandidateOrder::new(f, seed).collect();
                v.sort_unstable();
                assert_eq!(v, (1..q).collect::<Vec<_>>());
            }
        }
        let f = PrimeField::new(101).unwrap();
        let a: Vec<u64> = CandidateOrder::new(f, 9).collect();
        let b: Vec<u64> = CandidateOrder::new(f, 9).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn circulant_support_matches_topology() {
        let t = Topology::new(6, 3).unwrap();
        let f = PrimeField::new(13).unwrap();
        let m = circulant_lambda(&t, f, 2);
        for u in 1..=6 {
            for i in 1..=6 {
                assert_eq!(m.raw(u - 1, i - 1) != 0, t.is_associated(u, i));
            }
        }
        assert_eq!(m.row(0), &[1, 2, 4, 0, 0, 0]);
    }

    #[test]
    fn roots_of_unity_rejected() {
        let code = design(4, 2, None);
        let f = code.field();
        let root = (2..f.modulus()).find(|&g| f.pow(g, 4) == 1).unwrap();
        assert_eq!(
            circulant_candidate(&code, root),
            Err(CandidateRejection::RootOfUnity)
        );
        assert_eq!(
            circulant_candidate(&code, 1),
            Err(CandidateRejection::RootOfUnity)
        );
        assert_eq!(circulant_candidate(&code, 0), Err(CandidateRejection::Zero));
    }

    #[test]
    fn scheme1_output_reproduces_q() {
        let code = design(4, 2, None);
        let keys = scheme1_keygen(&code, 1).unwrap();
        let q_mat = power_matrix(code.points(), 2).unwrap();
        assert_eq!(&keys.lambda().transpose() * keys.h(), q_mat);
        assert!(validate_scheme(&keys, &code).passed());
        let KeyParam::G(g) = keys.param() else {
            panic!()
        };
        assert_ne!(code.field().pow(g, 4), 1);
    }

    #[test]
    fn scheme1_requires_root_of_unity() {
        // 4 does not divide 58.
        let code = design(4, 2, Some(59));
        assert_eq!(
            scheme1_keygen(&code, 0),
            Err(KeyDesignError::NoRootOfUnity { k: 4, q: 59 })
        );
    }

    #[test]
    fn scheme1_reports_exhausted_search() {
        // GF(5): 4 | 4 but every nonzero g is a 4th root of unity.
        let code = design(4, 2, Some(5));
        assert_eq!(
            scheme1_keygen(&code, 0),
            Err(KeyDesignError::NoValidG { q: 5, tried: 4 })
        );
    }

    #[test]
    fn lagrange_constants_match_inverse() {
        let code = design(5, 4, None);
        let f = code.field();
        for solve in beta_bad_sets(&code).unwrap() {
            let nodes: Vec<u64> = solve
                .users
                .iter()
                .map(|&u| code.points().theta(u))
                .collect();
            assert_eq!(
                lagrange_constant_terms(f, &nodes).unwrap(),
                solve.constant_terms
            );
            assert!(solve.constant_terms.iter().all(|&c| c != 0));
            assert!(solve.bad.len() <= 4);
        }
    }

    #[test]
    fn scheme2_shape_of_lambda_t_h() {
        for (k, b) in [(3, 2), (5, 3), (5, 4), (7, 5)] {
            let code = design(k, b, None);
            let keys = scheme2_keygen(&code, 3).unwrap();
            let KeyParam::Beta(beta) = keys.param() else {
                panic!()
            };
            let f = code.field();
            let prod = &keys.lambda().transpose() * keys.h();
            for row in 0..k {
                let theta = code.points().theta(row + 1);
                assert_eq!(prod.raw(row, 0), beta);
                for col in 1..b {
                    let expected = if col < k - b {
                        f.pow(theta, col as u64)
                    } else {
                        0
                    };
                    assert_eq!(prod.raw(row, col), expected);
                }
            }
            assert_eq!(prod.rank(), k - b);
            assert!(validate_scheme(&keys, &code).passed());
        }
    }

    #[test]
    fn scheme2_bad_set_exhaustion() {
        // (3, 2) over GF(5): count how many nonzero values remain and make
        // sure the search result is consistent with the bad set.
        let code = design(3, 2, Some(5));
        let bad: BTreeSet<u64> = beta_bad_sets(&code)
            .unwrap()
            .into_iter()
            .flat_map(|s| s.bad)
            .collect();
        let res = scheme2_keygen(&code, 0);
        if bad.iter().filter(|&&v| v != 0).count() == 4 {
            assert!(matches!(res, Err(KeyDesignError::NoValidBeta { .. })));
        } else {
            let KeyParam::Beta(beta) = res.unwrap().param() else {
                panic!()
            };
            assert!(!bad.contains(&beta));
        }
    }

    #[test]
    fn b1_construction() {
        for k in 2..=8 {
            let code = design(k, 1, None);
            let keys = scheme_b1_keygen(&code).unwrap();
            assert_eq!(keys.lambda(), &Matrix::identity(code.field(), k));
            assert_eq!((keys.h().rows(), keys.h().cols()), (k, k - 1));
            assert!(every_rows_independent(keys.h(), k - 1));
            let r = code.recovery().column(0);
            assert!(keys.h().left_mul_vec(&r).iter().all(|&v| v == 0));
            assert!(validate_scheme(&keys, &code).passed(), "K={k}");
        }
    }

    #[test]
    fn b1_reference_matrix_is_mds_with_zero_row_sum() {
        let f = PrimeField::new(5).unwrap();
        let h = Matrix::from_rows(f, &[vec![1, 0], vec![0, 1], vec![-1, -1]]);
        let ones = vec![1; 3];
        assert!(h.left_mul_vec(&ones).iter().all(|&v| v == 0));
        assert!(every_rows_independent(&h, 2));
        let golden = Matrix::from_rows(f, &[vec![1, 0], vec![0, 1], vec![1, 1]]);
        assert!(every_rows_independent(&golden, 2));
    }

    #[test]
    fn bk_reduction() {
        let f = select_field(3, 3).unwrap();
        let full = scheme_bk_keygen(3, EvaluationPoints::sequential(f, 3).unwrap(), 0).unwrap();
        assert_eq!(full.keys.regime(), Regime::FullAssociation);
        assert_eq!(full.code.topology().association(), 2);
        assert_eq!(full.disabled_links(), vec![(1, 3), (2, 1), (3, 2)]);
        assert!(validate_scheme(&full.keys, &full.code).passed());
    }

    #[test]
    fn validation_catches_mutations() {
        let code = design(5, 3, None);
        let keys = scheme2_keygen(&code, 0).unwrap();
        assert!(validate_scheme(&keys, &code).passed());

        let mut lambda = keys.lambda().clone();
        lambda.set(0, 0, 0);
        let bad = keys.clone().with_lambda(lambda);
        let report = validate_scheme(&bad, &code);
        assert!(!report.check(CHECK_SUPPORT).unwrap().passed);

        // Rank-deficient H: every row equal.
        let f = code.field();
        let h = Matrix::from_fn(f, 5, 3, |_, c| c as u64 + 1);
        let bad = keys.clone().with_h(h);
        let report = validate_scheme(&bad, &code);
        assert!(!report.check(CHECK_RANK).unwrap().passed);
        assert!(!report.check(CHECK_MDS).unwrap().passed);
    }
}
