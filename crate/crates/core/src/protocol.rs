//! One aggregation round: keys, user uploads, relay sums, server decode.
//!
//! Inputs are processed in blocks of `blockSize` symbols (`B`, or `K−1` when
//! every user is connected to every relay). Per block each user sends one
//! symbol per associated relay,
//! `X_{k,i} = Σ_j α_{k,i}^{(j)} W_k^{(j)} + λ_{k,i} Z_k`, each relay forwards
//! `Y_i = Σ_{k ∈ U_i} X_{k,i}`, and the server computes `[Y_1 … Y_K] 𝐑`.
//! Every block uses fresh source-key symbols.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::code_design::{CodeDesign, CodeDesignError, EvaluationPoints, InputCoefficients};
use crate::gf::{FieldElement, GfError, Matrix, PrimeField};
use crate::key_design::{
    build_keys, disabled_links, scheme_bk_keygen, select_field, validate_matrices, KeyDesign,
    KeyDesignError, Regime, ValidationReport,
};
use crate::topology::{Topology, TopologyError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Gf(#[from] GfError),
    #[error(transparent)]
    CodeDesign(#[from] CodeDesignError),
    #[error(transparent)]
    KeyDesign(#[from] KeyDesignError),
    #[error("scheme failed validation: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("{what}: expected {expected} symbols, got {got}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("input length {len} is not a positive multiple of the block size {block}")]
    InvalidLength { len: usize, block: usize },
    #[error("missing message from user {user} to relay {relay}")]
    MissingUserMessage { user: usize, relay: usize },
    #[error("missing message from relay {relay}")]
    MissingRelayMessage { relay: usize },
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// A fully compiled, validated linear scheme.
#[derive(Debug, Clone)]
pub struct SchemeParams {
    topology: Topology,
    active: Topology,
    field: PrimeField,
    alpha: InputCoefficients,
    keys: KeyDesign,
    recovery: Matrix,
    code: Option<CodeDesign>,
}

impl SchemeParams {
    /// Build the scheme for `(K, B)`, selecting the default field when `q`
    /// is `None` and using evaluation points `θ_i = i`.
    pub fn build(k: usize, b: usize, q: Option<u64>, seed: u64) -> Result<Self, BuildError> {
        let topology = Topology::new(k, b)?;
        let field = match q {
            Some(q) => PrimeField::new(q)?,
            None => select_field(k, b)?,
        };
        let points = EvaluationPoints::sequential(field, k)?;
        Self::build_with_points(topology, points, seed)
    }

    pub fn build_with_points(
        topology: Topology,
        points: EvaluationPoints,
        seed: u64,
    ) -> Result<Self, BuildError> {
        let (k, b) = (topology.users(), topology.association());
        let (code, keys) = if Regime::for_params(k, b)? == Regime::FullAssociation {
            let full = scheme_bk_keygen(k, points, seed)?;
            (full.code, full.keys)
        } else {
            let code = CodeDesign::new(topology, points)?;
            let keys = build_keys(&code, seed)?;
            (code, keys)
        };
        let params = SchemeParams {
            topology,
            active: *code.topology(),
            field: code.field(),
            alpha: code.alpha().clone(),
            keys,
            recovery: code.recovery().clone(),
            code: Some(code),
        };
        params.ensure_valid()?;
        Ok(params)
    }

    /// Assemble a scheme from explicit coefficients on topology `topology`,
    /// all links active. Fails unless the algebraic validation passes.
    pub fn from_parts(
        topology: Topology,
        alpha: InputCoefficients,
        keys: KeyDesign,
        recovery: Matrix,
    ) -> Result<Self, BuildError> {
        let params = SchemeParams {
            topology,
            active: topology,
            field: alpha.field(),
            alpha,
            keys,
            recovery,
            code: None,
        };
        params.ensure_valid()?;
        Ok(params)
    }

    fn ensure_valid(&self) -> Result<(), BuildError> {
        let report = self.validate();
        if report.passed() {
            Ok(())
        } else {
            let failed: Vec<String> = report
                .checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| format!("{} ({})", c.name, c.detail))
                .collect();
            Err(BuildError::Validation(failed.join("; ")))
        }
    }

    /// The five algebraic conditions on `(𝐇, 𝚲, 𝐑)`.
    pub fn validate(&self) -> ValidationReport {
        validate_matrices(
            &self.active,
            self.keys.h(),
            self.keys.lambda(),
            &self.recovery,
        )
    }

    /// Replace `𝚲` without validation. For fault-injection tests.
    pub fn with_lambda(mut self, lambda: Matrix) -> Self {
        self.keys = self.keys.with_lambda(lambda);
        self
    }

    /// Replace `𝐇` without validation. For fault-injection tests.
    pub fn with_h(mut self, h: Matrix) -> Self {
        self.keys = self.keys.with_h(h);
        self
    }

    /// Replace `𝐑` without validation. For fault-injection tests.
    pub fn with_recovery(mut self, recovery: Matrix) -> Self {
        self.recovery = recovery;
        self
    }

    /// The nominal `(K, B)` topology.
    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// The topology actually carrying messages; differs from
    /// [`topology`](Self::topology) only when `B = K`.
    pub fn active_topology(&self) -> &Topology {
        &self.active
    }

    pub fn users(&self) -> usize {
        self.topology.users()
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    /// Input symbols per block.
    pub fn block_size(&self) -> usize {
        self.active.association()
    }

    /// Source key symbols per block, `L_ZΣ*`.
    pub fn source_key_len(&self) -> usize {
        self.keys.source_key_len()
    }

    pub fn alpha(&self) -> &InputCoefficients {
        &self.alpha
    }

    pub fn keys(&self) -> &KeyDesign {
        &self.keys
    }

    pub fn h(&self) -> &Matrix {
        self.keys.h()
    }

    pub fn lambda(&self) -> &Matrix {
        self.keys.lambda()
    }

    pub fn recovery(&self) -> &Matrix {
        &self.recovery
    }

    /// The generating message design, absent for explicit schemes.
    pub fn code(&self) -> Option<&CodeDesign> {
        self.code.as_ref()
    }

    pub fn regime(&self) -> Regime {
        self.keys.regime()
    }

    /// Links of the nominal topology that stay silent.
    pub fn disabled_links(&self) -> Vec<(usize, usize)> {
        disabled_links(&self.topology, &self.active)
    }

    pub fn is_link_active(&self, k: usize, i: usize) -> bool {
        self.active.is_associated(k, i)
    }

    /// Dense tables for the per-block inner loop.
    pub(crate) fn kernel(&self) -> Kernel {
        let f = self.field;
        let links: Vec<LinkCoef> = self
            .active
            .links()
            .into_iter()
            .map(|(user, relay)| LinkCoef {
                user,
                relay,
                alpha: self
                    .alpha
                    .get(user, relay)
                    .map(<[u64]>::to_vec)
                    .unwrap_or_else(|| vec![0; self.block_size()]),
                lambda: self.lambda().raw(user - 1, relay - 1),
            })
            .collect();
        Kernel {
            field: f,
            users: self.users(),
            block: self.block_size(),
            key_len: self.source_key_len(),
            h: self.h().to_rows(),
            recovery: self.recovery.clone(),
            links,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LinkCoef {
    pub user: usize,
    pub relay: usize,
    pub alpha: Vec<u64>,
    pub lambda: u64,
}

/// Allocation-free per-block encoder and decoder on raw residues.
#[derive(Debug, Clone)]
pub(crate) struct Kernel {
    pub field: PrimeField,
    pub users: usize,
    pub block: usize,
    pub key_len: usize,
    pub h: Vec<Vec<u64>>,
    pub recovery: Matrix,
    /// Active links, users ascending, relays in cyclic order.
    pub links: Vec<LinkCoef>,
}

impl Kernel {
    /// `Z_k = h_k · Z_Σ`.
    #[inline]
    pub fn individual_key(&self, user: usize, source: &[u64]) -> u64 {
        dot(self.field, &self.h[user - 1], source)
    }

    /// `Σ_j α_j W^{(j)} + λ Z`.
    #[inline]
    pub fn link_symbol(&self, link: &LinkCoef, w_block: &[u64], z: u64) -> u64 {
        let f = self.field;
        f.add(dot(f, &link.alpha, w_block), f.mul(link.lambda, z))
    }

    /// Encode one block. `w` holds the block of every user back to back
    /// (`K × block`), `source` one block of the source key. Writes one
    /// symbol per active link into `x` and one per relay into `y`.
    pub fn encode_block(&self, w: &[u64], source: &[u64], x: &mut [u64], y: &mut [u64]) {
        let f = self.field;
        y.fill(0);
        let mut z_cache = (0usize, 0u64);
        for (slot, link) in x.iter_mut().zip(&self.links) {
            if z_cache.0 != link.user {
                z_cache = (link.user, self.individual_key(link.user, source));
            }
            let w_block = &w[(link.user - 1) * self.block..link.user * self.block];
            let sym = self.link_symbol(link, w_block, z_cache.1);
            *slot = sym;
            y[link.relay - 1] = f.add(y[link.relay - 1], sym);
        }
    }

    /// `[Y_1 … Y_K] 𝐑` for one block.
    pub fn decode_block(&self, y: &[u64], out: &mut [u64]) {
        let f = self.field;
        for (c, o) in out.iter_mut().enumerate() {
            *o = (0..self.users).fold(0, |acc, r| f.add(acc, f.mul(y[r], self.recovery.raw(r, c))));
        }
    }
}

#[inline]
fn dot(f: PrimeField, a: &[u64], b: &[u64]) -> u64 {
    a.iter()
        .zip(b)
        .fold(0, |acc, (&x, &y)| f.add(acc, f.mul(x, y)))
}

fn raw(v: &[FieldElement]) -> Vec<u64> {
    v.iter().map(FieldElement::value).collect()
}

fn lift(field: PrimeField, v: &[u64]) -> Vec<FieldElement> {
    v.iter().map(|&x| field.elem(x)).collect()
}

/// Source key material: one segment of `L_ZΣ*` symbols per block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceKey {
    blocks: Vec<Vec<FieldElement>>,
}

impl SourceKey {
    pub fn from_blocks(blocks: Vec<Vec<FieldElement>>) -> Self {
        SourceKey { blocks }
    }

    pub fn blocks(&self) -> &[Vec<FieldElement>] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Total number of symbols, `L_ZΣ`.
    pub fn len(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Uniform source key, `block_count × L_ZΣ*` symbols from a seeded stream.
pub fn sample_source_key(params: &SchemeParams, block_count: usize, seed: u64) -> SourceKey {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = params.field();
    let blocks = (0..block_count)
        .map(|_| {
            (0..params.source_key_len())
                .map(|_| f.elem(rng.gen_range(0..f.modulus())))
                .collect()
        })
        .collect();
    SourceKey { blocks }
}

/// Individual keys `Z_k = h_k Z_Σᵀ`, one symbol per block for each user.
pub fn derive_keys(
    params: &SchemeParams,
    source: &SourceKey,
) -> Result<Vec<Vec<FieldElement>>, ProtocolError> {
    let kernel = params.kernel();
    let mut keys = vec![Vec::with_capacity(source.block_count()); params.users()];
    for block in source.blocks() {
        if block.len() != params.source_key_len() {
            return Err(ProtocolError::SizeMismatch {
                what: "source key block",
                expected: params.source_key_len(),
                got: block.len(),
            });
        }
        let block = raw(block);
        for (user, key) in keys.iter_mut().enumerate() {
            key.push(params.field().elem(kernel.individual_key(user + 1, &block)));
        }
    }
    Ok(keys)
}

/// Messages of user `k` to each relay of its nominal association set.
/// Silent links map to an empty message.
pub fn user_encode(
    params: &SchemeParams,
    k: usize,
    w_k: &[FieldElement],
    z_k: &[FieldElement],
) -> Result<BTreeMap<usize, Vec<FieldElement>>, ProtocolError> {
    let block = params.block_size();
    let blocks = check_length(w_k.len(), block)?;
    if z_k.len() != blocks {
        return Err(ProtocolError::SizeMismatch {
            what: "individual key",
            expected: blocks,
            got: z_k.len(),
        });
    }
    let kernel = params.kernel();
    let w = raw(w_k);
    let mut out = BTreeMap::new();
    for relay in params.topology().relays_of_user(k)? {
        let msg = match kernel
            .links
            .iter()
            .find(|l| l.user == k && l.relay == relay)
        {
            Some(link) => (0..blocks)
                .map(|t| {
                    let sym =
                        kernel.link_symbol(link, &w[t * block..(t + 1) * block], z_k[t].value());
                    params.field().elem(sym)
                })
                .collect(),
            None => Vec::new(),
        };
        out.insert(relay, msg);
    }
    Ok(out)
}

fn check_length(len: usize, block: usize) -> Result<usize, ProtocolError> {
    if len == 0 || !len.is_multiple_of(block) {
        return Err(ProtocolError::InvalidLength { len, block });
    }
    Ok(len / block)
}

/// `Y_i`: the symbolwise sum of the messages relay `i` received, keyed by
/// sending user.
pub fn relay_encode(
    params: &SchemeParams,
    i: usize,
    received: &BTreeMap<usize, Vec<FieldElement>>,
) -> Result<Vec<FieldElement>, ProtocolError> {
    let mut sum: Option<Vec<FieldElement>> = None;
    for user in params.topology().users_of_relay(i)? {
        let msg = received.get(&user);
        if !params.is_link_active(user, i) {
            if let Some(m) = msg {
                if !m.is_empty() {
                    return Err(ProtocolError::SizeMismatch {
                        what: "message on silent link",
                        expected: 0,
                        got: m.len(),
                    });
                }
            }
            continue;
        }
        let msg = msg.ok_or(ProtocolError::MissingUserMessage { user, relay: i })?;
        match sum.as_mut() {
            None => sum = Some(msg.clone()),
            Some(acc) => {
                if acc.len() != msg.len() {
                    return Err(ProtocolError::SizeMismatch {
                        what: "user message",
                        expected: acc.len(),
                        got: msg.len(),
                    });
                }
                for (a, &m) in acc.iter_mut().zip(msg) {
                    *a += m;
                }
            }
        }
    }
    Ok(sum.unwrap_or_default())
}

/// `Σ_k W_k`, blockwise `[Y_1 … Y_K] 𝐑`.
pub fn server_decode(
    params: &SchemeParams,
    relay_messages: &BTreeMap<usize, Vec<FieldElement>>,
) -> Result<Vec<FieldElement>, ProtocolError> {
    let k = params.users();
    let ys: Vec<Vec<u64>> = (1..=k)
        .map(|relay| {
            relay_messages
                .get(&relay)
                .map(|y| raw(y))
                .ok_or(ProtocolError::MissingRelayMessage { relay })
        })
        .collect::<Result<_, _>>()?;
    let blocks = ys[0].len();
    if let Some(bad) = ys.iter().find(|y| y.len() != blocks) {
        return Err(ProtocolError::SizeMismatch {
            what: "relay message",
            expected: blocks,
            got: bad.len(),
        });
    }
    let kernel = params.kernel();
    let block = params.block_size();
    let mut out = vec![0u64; blocks * block];
    let mut y = vec![0u64; k];
    for t in 0..blocks {
        for (slot, ys_i) in y.iter_mut().zip(&ys) {
            *slot = ys_i[t];
        }
        kernel.decode_block(&y, &mut out[t * block..(t + 1) * block]);
    }
    Ok(lift(params.field(), &out))
}

/// Inputs of all users, `W_1 … W_K`, of a common length `L`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputVector {
    inputs: Vec<Vec<FieldElement>>,
}

impl InputVector {
    pub fn new(inputs: Vec<Vec<FieldElement>>) -> Result<Self, ProtocolError> {
        let len = inputs.first().map_or(0, Vec::len);
        if let Some(bad) = inputs.iter().find(|w| w.len() != len) {
            return Err(ProtocolError::SizeMismatch {
                what: "input",
                expected: len,
                got: bad.len(),
            });
        }
        Ok(InputVector { inputs })
    }

    /// Uniform inputs of length `len` for every user.
    pub fn random<R: Rng>(params: &SchemeParams, len: usize, rng: &mut R) -> Self {
        let f = params.field();
        let inputs = (0..params.users())
            .map(|_| {
                (0..len)
                    .map(|_| f.elem(rng.gen_range(0..f.modulus())))
                    .collect()
            })
            .collect();
        InputVector { inputs }
    }

    pub fn len(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn users(&self) -> usize {
        self.inputs.len()
    }

    /// `W_k`, 1-based.
    pub fn user(&self, k: usize) -> &[FieldElement] {
        &self.inputs[k - 1]
    }

    /// Plain symbolwise sum, the value the server must recover.
    pub fn sum(&self, field: PrimeField) -> Vec<FieldElement> {
        let mut acc = vec![field.zero(); self.len()];
        for w in &self.inputs {
            for (a, &x) in acc.iter_mut().zip(w) {
                *a += x;
            }
        }
        acc
    }
}

/// A message on one user-to-relay link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LinkMessage {
    pub user: usize,
    pub relay: usize,
    pub symbols: Vec<u64>,
}

/// Everything exchanged in one round plus key sizes, in symbols.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Transcript {
    pub users: usize,
    pub input_len: usize,
    /// Every nominal link, users ascending; silent links carry no symbols.
    pub x: Vec<LinkMessage>,
    /// `Y_i` at index `i − 1`.
    pub y: Vec<Vec<u64>>,
    /// Symbols uploaded by each user, `L_X`.
    pub l_x: usize,
    /// `L_{Y,i}` at index `i − 1`.
    pub l_y: Vec<usize>,
    /// Symbols per individual key, `L_Z`.
    pub l_z: usize,
    /// Source key symbols, `L_ZΣ`.
    pub l_zs: usize,
}

impl Transcript {
    /// Symbols uploaded by user `k`.
    pub fn uploaded_by(&self, k: usize) -> usize {
        self.x
            .iter()
            .filter(|m| m.user == k)
            .map(|m| m.symbols.len())
            .sum()
    }

    /// The recorded counts agree with the recorded messages.
    pub fn is_consistent(&self) -> bool {
        (1..=self.users).all(|k| self.uploaded_by(k) == self.l_x)
            && self.y.len() == self.users
            && self.l_y.len() == self.users
            && self.y.iter().zip(&self.l_y).all(|(y, &l)| y.len() == l)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundResult {
    pub recovered_sum: Vec<FieldElement>,
    pub transcript: Transcript,
}

/// Run a full round on `inputs`, keys drawn from `seed`.
pub fn run_round(
    params: &SchemeParams,
    inputs: &InputVector,
    seed: u64,
) -> Result<RoundResult, ProtocolError> {
    let k = params.users();
    if inputs.users() != k {
        return Err(ProtocolError::SizeMismatch {
            what: "user count",
            expected: k,
            got: inputs.users(),
        });
    }
    let blocks = check_length(inputs.len(), params.block_size())?;
    let source = sample_source_key(params, blocks, seed);
    let keys = derive_keys(params, &source)?;

    let mut inboxes: Vec<BTreeMap<usize, Vec<FieldElement>>> = vec![BTreeMap::new(); k];
    let mut x = Vec::new();
    for user in 1..=k {
        for (relay, msg) in user_encode(params, user, inputs.user(user), &keys[user - 1])? {
            x.push(LinkMessage {
                user,
                relay,
                symbols: raw(&msg),
            });
            inboxes[relay - 1].insert(user, msg);
        }
    }
    let mut relay_out = BTreeMap::new();
    for relay in 1..=k {
        relay_out.insert(relay, relay_encode(params, relay, &inboxes[relay - 1])?);
    }
    let recovered_sum = server_decode(params, &relay_out)?;

    let y: Vec<Vec<u64>> = relay_out.values().map(|v| raw(v)).collect();
    let transcript = Transcript {
        users: k,
        input_len: inputs.len(),
        l_x: x
            .iter()
            .filter(|m| m.user == 1)
            .map(|m| m.symbols.len())
            .sum(),
        l_y: y.iter().map(Vec::len).collect(),
        l_z: keys[0].len(),
        l_zs: source.len(),
        x,
        y,
    };
    Ok(RoundResult {
        recovered_sum,
        transcript,
    })
}
