use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use hsa_core::audit::{
    algebraic_audit, exhaustive_audit, golden_example1, AuditError, AuditReport,
};
use hsa_core::key_design::{
    phi, sample_circulant_validity, select_field, KeyParam, Regime, ValidationReport,
};
use hsa_core::protocol::{run_round, InputVector, SchemeParams};
use hsa_core::rates::{
    achievable_rates, converse_bounds, fmt_ratio, gap_flags, measured_rates, Rate, RateTuple,
};

use crate::config::{Format, Level, RunConfig};

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    Construction = 2,
    AuditFailed = 3,
    Config = 4,
}

#[derive(Debug)]
pub struct Failure {
    pub status: Status,
    pub message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure {
            status: Status::Config,
            message: message.into(),
        }
    }

    fn construction(message: impl ToString) -> Self {
        Failure {
            status: Status::Construction,
            message: message.to_string(),
        }
    }
}

/// Rendered output and the status it implies.
pub struct Outcome {
    pub body: String,
    pub status: Status,
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn require_json(cfg: &RunConfig) -> Result<(), Failure> {
    match cfg.format {
        Format::Json => Ok(()),
        Format::Csv => Err(Failure::config("csv output is only available for `rates`")),
    }
}

#[derive(Serialize)]
struct SchemeInfo {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "B")]
    b: usize,
    q: u64,
    regime: Regime,
    param: KeyParam,
    block_size: usize,
    source_key_len: usize,
    disabled_links: Vec<(usize, usize)>,
}

impl SchemeInfo {
    fn of(p: &SchemeParams) -> Self {
        SchemeInfo {
            k: p.users(),
            b: p.topology().association(),
            q: p.field().modulus(),
            regime: p.regime(),
            param: p.keys().param(),
            block_size: p.block_size(),
            source_key_len: p.source_key_len(),
            disabled_links: p.disabled_links(),
        }
    }
}

fn build(cfg: &RunConfig) -> Result<SchemeParams, Failure> {
    if cfg.golden_example1 {
        return Ok(golden_example1());
    }
    let (k, b) = cfg.params().map_err(Failure::config)?;
    SchemeParams::build(k, b, cfg.q, cfg.seed).map_err(Failure::construction)
}

fn input_len(cfg: &RunConfig, p: &SchemeParams) -> Result<usize, Failure> {
    let len = cfg.l.unwrap_or(p.block_size());
    if len == 0 || !len.is_multiple_of(p.block_size()) {
        return Err(Failure::config(format!(
            "L={len} is not a positive multiple of the block size {}",
            p.block_size()
        )));
    }
    Ok(len)
}

#[derive(Serialize)]
struct SimulateReport {
    command: &'static str,
    scheme: SchemeInfo,
    #[serde(rename = "L")]
    l: usize,
    seed: u64,
    trials: usize,
    recovered: usize,
    measured: Option<RateTuple>,
    achievable: RateTuple,
    converse: RateTuple,
    measured_equals_achievable: bool,
    dominates_converse: bool,
    passed: bool,
}

pub fn simulate(cfg: &RunConfig) -> Result<Outcome, Failure> {
    require_json(cfg)?;
    let params = build(cfg)?;
    let len = input_len(cfg, &params)?;
    let (k, b) = (params.users(), params.topology().association());

    let mut seeder = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds: Vec<(u64, u64)> = (0..cfg.trials)
        .map(|_| (seeder.next_u64(), seeder.next_u64()))
        .collect();
    let results: Vec<(bool, Option<RateTuple>)> = seeds
        .par_iter()
        .map(|&(input_seed, key_seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(input_seed);
            let inputs = InputVector::random(&params, len, &mut rng);
            match run_round(&params, &inputs, key_seed) {
                Ok(round) => (
                    round.recovered_sum == inputs.sum(params.field()),
                    measured_rates(&round.transcript).ok(),
                ),
                Err(_) => (false, None),
            }
        })
        .collect();

    let recovered = results.iter().filter(|r| r.0).count();
    let measured = results.first().and_then(|r| r.1);
    let rates_agree = results.iter().all(|r| r.1.is_some() && r.1 == measured);
    let achievable = achievable_rates(k, b).map_err(Failure::construction)?;
    let converse = converse_bounds(k, b).map_err(Failure::construction)?;
    let measured_equals_achievable = rates_agree && measured == Some(achievable);
    let dominates_converse = rates_agree && measured.is_some_and(|m| m.dominates(&converse));
    let passed = recovered == cfg.trials && measured_equals_achievable && dominates_converse;
    let report = SimulateReport {
        command: "simulate",
        scheme: SchemeInfo::of(&params),
        l: len,
        seed: cfg.seed,
        trials: cfg.trials,
        recovered,
        measured,
        achievable,
        converse,
        measured_equals_achievable,
        dominates_converse,
        passed,
    };
    Ok(Outcome {
        body: json(&report),
        status: if passed {
            Status::Ok
        } else {
            Status::AuditFailed
        },
    })
}

#[derive(Serialize)]
struct AuditOutput {
    command: &'static str,
    scheme: SchemeInfo,
    level: &'static str,
    #[serde(rename = "L")]
    l: usize,
    validation: ValidationReport,
    audit: AuditReport,
    measured: Option<RateTuple>,
    passed: bool,
}

pub fn audit(cfg: &RunConfig) -> Result<Outcome, Failure> {
    require_json(cfg)?;
    let params = build(cfg)?;
    let len = input_len(cfg, &params)?;
    let validation = params.validate();
    let report = match cfg.level {
        Level::Algebraic => algebraic_audit(&params),
        Level::Exhaustive => match exhaustive_audit(&params, len, cfg.max_states) {
            Ok(r) => r,
            Err(e @ (AuditError::StateSpaceTooLarge { .. } | AuditError::TableTooLarge { .. })) => {
                return Err(Failure::config(format!(
                    "{e}; raise --max-states or shrink L"
                )))
            }
            Err(e) => return Err(Failure::config(e.to_string())),
        },
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let inputs = InputVector::random(&params, len, &mut rng);
    let measured = run_round(&params, &inputs, cfg.seed)
        .ok()
        .and_then(|r| measured_rates(&r.transcript).ok());
    let passed = validation.passed() && report.passed;
    let out = AuditOutput {
        command: "audit",
        scheme: SchemeInfo::of(&params),
        level: match cfg.level {
            Level::Algebraic => "algebraic",
            Level::Exhaustive => "exhaustive",
        },
        l: len,
        validation,
        audit: report,
        measured,
        passed,
    };
    Ok(Outcome {
        body: json(&out),
        status: if passed {
            Status::Ok
        } else {
            Status::AuditFailed
        },
    })
}

#[derive(Serialize)]
struct RateRow {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "B")]
    b: usize,
    q: u64,
    achievable: RateTuple,
    converse: RateTuple,
    gap_flags: String,
}

/// One CSV line; column names are fixed.
#[derive(Serialize)]
struct CsvRow {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "B")]
    b: usize,
    q: u64,
    #[serde(rename = "RX_ach")]
    rx_ach: String,
    #[serde(rename = "RY_ach")]
    ry_ach: String,
    #[serde(rename = "RZ_ach")]
    rz_ach: String,
    #[serde(rename = "RZS_ach")]
    rzs_ach: String,
    #[serde(rename = "RX_lb")]
    rx_lb: String,
    #[serde(rename = "RY_lb")]
    ry_lb: String,
    #[serde(rename = "RZ_lb")]
    rz_lb: String,
    #[serde(rename = "RZS_lb")]
    rzs_lb: String,
    gap_flags: String,
}

impl From<&RateRow> for CsvRow {
    fn from(r: &RateRow) -> Self {
        let s = |x: Rate| fmt_ratio(&x);
        CsvRow {
            k: r.k,
            b: r.b,
            q: r.q,
            rx_ach: s(r.achievable.x),
            ry_ach: s(r.achievable.y),
            rz_ach: s(r.achievable.z),
            rzs_ach: s(r.achievable.zs),
            rx_lb: s(r.converse.x),
            ry_lb: s(r.converse.y),
            rz_lb: s(r.converse.z),
            rzs_lb: s(r.converse.zs),
            gap_flags: r.gap_flags.clone(),
        }
    }
}

pub fn rates(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let (k_lo, k_hi) = match (cfg.k, cfg.k_min, cfg.k_max) {
        (Some(k), _, _) => (k, k),
        (None, lo, hi) => (lo.unwrap_or(2), hi.unwrap_or(8)),
    };
    if k_lo < 2 || k_lo > k_hi {
        return Err(Failure::config(format!(
            "empty or invalid K range {k_lo}..={k_hi}"
        )));
    }
    let mut rows = Vec::new();
    for k in k_lo..=k_hi {
        let bs: Vec<usize> = match cfg.b {
            Some(b) if b <= k => vec![b],
            Some(_) => continue,
            None => (1..=k).collect(),
        };
        for b in bs {
            let achievable = achievable_rates(k, b).map_err(|e| Failure::config(e.to_string()))?;
            let converse = converse_bounds(k, b).map_err(|e| Failure::config(e.to_string()))?;
            let q = match cfg.q {
                Some(q) => q,
                None => select_field(k, b).map_err(Failure::construction)?.modulus(),
            };
            rows.push(RateRow {
                k,
                b,
                q,
                gap_flags: gap_flags(&achievable, &converse),
                achievable,
                converse,
            });
        }
    }
    let body = match cfg.format {
        Format::Json => json(&serde_json::json!({ "command": "rates", "rows": rows })),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in &rows {
                w.serialize(CsvRow::from(row))
                    .map_err(|e| Failure::config(e.to_string()))?;
            }
            String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
        }
    };
    Ok(Outcome {
        body,
        status: Status::Ok,
    })
}

#[derive(Serialize)]
struct SearchReport {
    command: &'static str,
    scheme: SchemeInfo,
    candidates_tried: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    circulant: Option<CirculantStats>,
}

#[derive(Serialize)]
struct CirculantStats {
    phi: u64,
    /// `1 − φ/q`, floored at zero.
    lower_bound: String,
    samples: u64,
    valid: u64,
    valid_fraction: String,
}

pub fn search_params(cfg: &RunConfig) -> Result<Outcome, Failure> {
    require_json(cfg)?;
    let params = build(cfg)?;
    let circulant = match (params.regime(), params.code()) {
        (Regime::Circulant, Some(code)) => {
            let (k, b) = (params.users(), params.topology().association());
            let q = params.field().modulus();
            let phi = phi(k, b);
            let (valid, samples) = sample_circulant_validity(code, cfg.trials as u64, cfg.seed);
            Some(CirculantStats {
                phi,
                lower_bound: fmt_ratio(&Rate::new(q.saturating_sub(phi), q)),
                samples,
                valid,
                valid_fraction: fmt_ratio(&Rate::new(valid, samples.max(1))),
            })
        }
        _ => None,
    };
    let report = SearchReport {
        command: "search-params",
        candidates_tried: params.keys().candidates_tried(),
        scheme: SchemeInfo::of(&params),
        circulant,
    };
    Ok(Outcome {
        body: json(&report),
        status: Status::Ok,
    })
}
