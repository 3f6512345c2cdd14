//! Message design for the input symbols.
//!
//! Each user `k` gets an association polynomial vanishing exactly at the
//! evaluation points of the relays it is *not* connected to. From it a family
//! of `B` polynomials is derived whose coefficient vectors stack into the code
//! matrix `𝐁` (`BK × K`). Relay `i` receives the evaluations of user `k`'s
//! family at `θ_i`, and the server undoes the evaluation with the last `B`
//! columns of `𝚯⁻¹`, the recovery matrix `𝐑`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::gf::{vandermonde, FieldElement, GfError, Matrix, Polynomial, PrimeField};
use crate::topology::{Topology, TopologyError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodeDesignError {
    #[error("evaluation point {0} is zero")]
    ZeroPoint(usize),
    #[error("evaluation point value {0} appears twice")]
    DuplicatePoint(u64),
    #[error("field GF({q}) has too few nonzero elements for {k} distinct points")]
    FieldTooSmall { q: u64, k: usize },
    #[error("expected {expected} evaluation points, got {got}")]
    PointCountMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Gf(#[from] GfError),
}

/// Distinct, nonzero evaluation points `θ_1, …, θ_K`, one per relay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvaluationPoints {
    field: PrimeField,
    values: Vec<u64>,
}

impl EvaluationPoints {
    pub fn new(field: PrimeField, values: Vec<u64>) -> Result<Self, CodeDesignError> {
        let values: Vec<u64> = values.into_iter().map(|v| v % field.modulus()).collect();
        for (i, &v) in values.iter().enumerate() {
            if v == 0 {
                return Err(CodeDesignError::ZeroPoint(i + 1));
            }
            if values[..i].contains(&v) {
                return Err(CodeDesignError::DuplicatePoint(v));
            }
        }
        Ok(EvaluationPoints { field, values })
    }

    /// `θ_i = i`, valid whenever `q > K`.
    pub fn sequential(field: PrimeField, k: usize) -> Result<Self, CodeDesignError> {
        if field.modulus() <= k as u64 {
            return Err(CodeDesignError::FieldTooSmall {
                q: field.modulus(),
                k,
            });
        }
        Self::new(field, (1..=k as u64).collect())
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `θ_i`, 1-based.
    pub fn theta(&self, i: usize) -> u64 {
        self.values[i - 1]
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn elements(&self) -> Vec<FieldElement> {
        self.values.iter().map(|&v| self.field.elem(v)).collect()
    }
}

fn check_points(topo: &Topology, points: &EvaluationPoints) -> Result<(), CodeDesignError> {
    if points.len() != topo.users() {
        return Err(CodeDesignError::PointCountMismatch {
            expected: topo.users(),
            got: points.len(),
        });
    }
    Ok(())
}

/// `p_k(x) = ∏_{i ∉ B_k} (x − θ_i)`, monic of degree `K − B`.
pub fn association_polynomial(
    topo: &Topology,
    points: &EvaluationPoints,
    k: usize,
) -> Result<Polynomial, CodeDesignError> {
    check_points(topo, points)?;
    let relays = topo.relays_of_user(k)?;
    let roots = (1..=topo.users())
        .filter(|i| !relays.contains(i))
        .map(|i| points.theta(i));
    Ok(Polynomial::from_roots(points.field(), roots))
}

/// The `B` polynomials `p_k^{(1)}, …, p_k^{(B)}`.
///
/// `p^{(1)} = p_k` and `p^{(b)} = x·p^{(b−1)} − c·p^{(1)}`, where `c` is the
/// coefficient of `x^{K−B−1}` in `p^{(b−1)}`. Each step clears the
/// coefficient of `x^{K−B}`, which leaves the top `B` coefficients of
/// `p^{(b)}` equal to the unit vector at degree `K−B+b−1`.
pub fn recursive_family(
    topo: &Topology,
    points: &EvaluationPoints,
    k: usize,
) -> Result<Vec<Polynomial>, CodeDesignError> {
    let base = association_polynomial(topo, points, k)?;
    let gap = topo.users() - topo.association();
    let mut family = Vec::with_capacity(topo.association());
    family.push(base.clone());
    for _ in 1..topo.association() {
        let prev = family.last().expect("nonempty");
        // With B = K the index K−B−1 is negative and the coefficient is zero.
        let c = gap.checked_sub(1).map_or(0, |j| prev.coeff(j));
        family.push(prev.mul_x().sub(&base.scale(c)));
    }
    Ok(family)
}

/// `𝐁 ∈ GF(q)^{BK×K}`; row `(i−1)B + b` holds the coefficients of `p_i^{(b)}`.
pub fn build_code_matrix(
    topo: &Topology,
    points: &EvaluationPoints,
) -> Result<Matrix, CodeDesignError> {
    let families = all_families(topo, points)?;
    Ok(code_matrix_from(topo, points.field(), &families))
}

fn all_families(
    topo: &Topology,
    points: &EvaluationPoints,
) -> Result<Vec<Vec<Polynomial>>, CodeDesignError> {
    (1..=topo.users())
        .map(|k| recursive_family(topo, points, k))
        .collect()
}

fn code_matrix_from(topo: &Topology, field: PrimeField, families: &[Vec<Polynomial>]) -> Matrix {
    let (k, b) = (topo.users(), topo.association());
    Matrix::from_fn(field, b * k, k, |row, col| {
        families[row / b][row % b].coeff(col)
    })
}

/// `𝚯 = [θ_1, …, θ_K]` with column `k` equal to `(1, θ_k, …, θ_k^{K−1})ᵀ`.
pub fn theta_matrix(points: &EvaluationPoints) -> Result<Matrix, CodeDesignError> {
    Ok(vandermonde(&points.elements(), points.len())?.transpose())
}

/// `𝐑`: the last `B` columns of `𝚯⁻¹`.
pub fn recovery_matrix(
    topo: &Topology,
    points: &EvaluationPoints,
) -> Result<Matrix, CodeDesignError> {
    check_points(topo, points)?;
    let inv = theta_matrix(points)?.inverse()?;
    Ok(recovery_from_inverse(topo, &inv))
}

fn recovery_from_inverse(topo: &Topology, theta_inv: &Matrix) -> Matrix {
    let (k, b) = (topo.users(), topo.association());
    let cols: Vec<usize> = (k - b..k).collect();
    theta_inv.select_cols(&cols)
}

/// Sparse table of input coefficients `α_{k,i}^{(j)}`.
///
/// Only associated links `(k, i ∈ B_k)` have entries; a missing entry means
/// relay `i` never receives anything from user `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputCoefficients {
    field: PrimeField,
    symbols: usize,
    table: BTreeMap<(usize, usize), Vec<u64>>,
}

impl InputCoefficients {
    /// Build from explicit `(user, relay) -> [α^{(1)}, …, α^{(L)}]` entries.
    ///
    /// Panics if the rows have differing lengths.
    pub fn from_entries(
        field: PrimeField,
        entries: impl IntoIterator<Item = ((usize, usize), Vec<u64>)>,
    ) -> Self {
        let mut symbols = None;
        let table: BTreeMap<_, _> = entries
            .into_iter()
            .map(|(key, row)| {
                let len = *symbols.get_or_insert(row.len());
                assert_eq!(len, row.len(), "coefficient rows of unequal length");
                (key, row.into_iter().map(|v| v % field.modulus()).collect())
            })
            .collect();
        InputCoefficients {
            field,
            symbols: symbols.unwrap_or(0),
            table,
        }
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    /// Number of input symbols each coefficient row multiplies.
    pub fn symbols(&self) -> usize {
        self.symbols
    }

    /// `α_{k,i}^{(1..)}`, or `None` when `i ∉ B_k`.
    pub fn get(&self, k: usize, i: usize) -> Option<&[u64]> {
        self.table.get(&(k, i)).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &[u64])> {
        self.table.iter().map(|(&key, v)| (key, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

/// `α_{k,i}^{(j)} = p_k^{(j)}(θ_i)` for every associated link.
pub fn input_coefficients(
    topo: &Topology,
    points: &EvaluationPoints,
) -> Result<InputCoefficients, CodeDesignError> {
    let families = all_families(topo, points)?;
    Ok(coefficients_from(topo, points, &families))
}

fn coefficients_from(
    topo: &Topology,
    points: &EvaluationPoints,
    families: &[Vec<Polynomial>],
) -> InputCoefficients {
    let entries = topo.links().into_iter().map(|(k, i)| {
        let theta = points.theta(i);
        let row = families[k - 1].iter().map(|p| p.eval(theta)).collect();
        ((k, i), row)
    });
    InputCoefficients::from_entries(points.field(), entries)
}

/// Complete message design for one `(K, B, q)` and choice of points.
#[derive(Debug, Clone)]
pub struct CodeDesign {
    topology: Topology,
    points: EvaluationPoints,
    families: Vec<Vec<Polynomial>>,
    code_matrix: Matrix,
    theta: Matrix,
    theta_inv: Matrix,
    recovery: Matrix,
    alpha: InputCoefficients,
}

impl CodeDesign {
    pub fn new(topology: Topology, points: EvaluationPoints) -> Result<Self, CodeDesignError> {
        check_points(&topology, &points)?;
        let families = all_families(&topology, &points)?;
        let code_matrix = code_matrix_from(&topology, points.field(), &families);
        let theta = theta_matrix(&points)?;
        let theta_inv = theta.inverse()?;
        let recovery = recovery_from_inverse(&topology, &theta_inv);
        let alpha = coefficients_from(&topology, &points, &families);
        Ok(CodeDesign {
            topology,
            points,
            families,
            code_matrix,
            theta,
            theta_inv,
            recovery,
            alpha,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn field(&self) -> PrimeField {
        self.points.field()
    }

    pub fn points(&self) -> &EvaluationPoints {
        &self.points
    }

    /// `p_k^{(b)}`, both indices 1-based.
    pub fn family(&self, k: usize, b: usize) -> &Polynomial {
        &self.families[k - 1][b - 1]
    }

    pub fn code_matrix(&self) -> &Matrix {
        &self.code_matrix
    }

    pub fn theta(&self) -> &Matrix {
        &self.theta
    }

    pub fn theta_inv(&self) -> &Matrix {
        &self.theta_inv
    }

    pub fn recovery(&self) -> &Matrix {
        &self.recovery
    }

    pub fn alpha(&self) -> &InputCoefficients {
        &self.alpha
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(k: usize, b: usize, q: u64) -> (Topology, EvaluationPoints) {
        let f = PrimeField::new(q).unwrap();
        (
            Topology::new(k, b).unwrap(),
            EvaluationPoints::sequential(f, k).unwrap(),
        )
    }

    #[test]
    fn association_polynomial_examples() {
        let (t, p) = setup(3, 2, 7);
        let poly = association_polynomial(&t, &p, 1).unwrap();
        // x − 3
        assert_eq!(poly.coeffs(), &[4, 1]);

        let (t, p) = setup(4, 2, 13);
        let poly = association_polynomial(&t, &p, 1).unwrap();
        // x² − 7x + 12
        assert_eq!(poly.coeffs(), &[12, 6, 1]);

        let (t, p) = setup(3, 3, 7);
        assert_eq!(association_polynomial(&t, &p, 2).unwrap().coeffs(), &[1]);
    }

    #[test]
    fn recursive_family_example() {
        let (t, p) = setup(3, 2, 7);
        let fam = recursive_family(&t, &p, 1).unwrap();
        assert_eq!(fam.len(), 2);
        assert_eq!(fam[0].coeffs(), &[4, 1]);
        // x² − 9 ≡ x² + 5 (mod 7)
        assert_eq!(fam[1].coeffs(), &[5, 0, 1]);
    }

    #[test]
    fn code_matrix_example_rows() {
        let (t, p) = setup(3, 2, 7);
        let m = build_code_matrix(&t, &p).unwrap();
        assert_eq!((m.rows(), m.cols()), (6, 3));
        assert_eq!(m.row(0), &[4, 1, 0]);
        assert_eq!(m.row(1), &[5, 0, 1]);
    }

    #[test]
    fn identity_tail_and_dimensions() {
        for (k, b, q) in [(3, 2, 7), (4, 2, 13), (5, 3, 17), (6, 1, 7), (7, 6, 43)] {
            let (t, p) = setup(k, b, q);
            let m = build_code_matrix(&t, &p).unwrap();
            assert_eq!((m.rows(), m.cols()), (b * k, k));
            for row in 0..b * k {
                for c in k - b..k {
                    let expected = u64::from(c - (k - b) == row % b);
                    assert_eq!(m.raw(row, c), expected, "K={k} B={b} row={row} col={c}");
                }
            }
        }
    }

    #[test]
    fn input_coefficient_example() {
        let (t, p) = setup(3, 2, 7);
        let alpha = input_coefficients(&t, &p).unwrap();
        // −2 and −8 mod 7
        assert_eq!(alpha.get(1, 1).unwrap(), &[5, 6]);
        assert!(alpha.get(1, 3).is_none());
        assert_eq!(alpha.len(), 6);
    }

    #[test]
    fn recovery_is_last_columns_of_inverse() {
        let (t, p) = setup(4, 2, 13);
        let d = CodeDesign::new(t, p).unwrap();
        let prod = d.theta() * d.recovery();
        let id = Matrix::identity(d.field(), 4);
        assert_eq!(prod, id.select_cols(&[2, 3]));
        assert_eq!(d.recovery().rank(), 2);
        assert_eq!(d.theta() * d.theta_inv(), id);
    }

    #[test]
    fn point_validation() {
        let f = PrimeField::new(7).unwrap();
        assert_eq!(
            EvaluationPoints::new(f, vec![1, 0, 2]),
            Err(CodeDesignError::ZeroPoint(2))
        );
        assert_eq!(
            EvaluationPoints::new(f, vec![1, 8]),
            Err(CodeDesignError::DuplicatePoint(1))
        );
        assert!(EvaluationPoints::sequential(f, 7).is_err());
        let t = Topology::new(3, 2).unwrap();
        let p = EvaluationPoints::sequential(f, 4).unwrap();
        assert!(matches!(
            CodeDesign::new(t, p),
            Err(CodeDesignError::PointCountMismatch { .. })
        ));
    }
}
