//! Exact arithmetic and dense linear algebra over a prime field GF(q).
//!
//! Everything in the protocol reduces to operations on residues modulo a
//! prime `q < 2^31`, so products of two reduced values always fit in a `u64`.
//! Matrices store raw reduced residues and carry their field alongside;
//! [`FieldElement`] is the typed view used at API boundaries.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exclusive upper bound on supported moduli.
pub const MAX_MODULUS: u64 = 1 << 31;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GfError {
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("modulus {0} is not below 2^31")]
    ModulusTooLarge(u64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("matrix is singular (rank {rank} of {size})")]
    Singular { rank: usize, size: usize },
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("duplicate evaluation point {0}")]
    DuplicatePoints(u64),
}

/// Trial-division primality test; adequate for `n < 2^31`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// The prime field GF(q).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct PrimeField {
    q: u64,
}

impl TryFrom<u64> for PrimeField {
    type Error = GfError;

    fn try_from(q: u64) -> Result<Self, GfError> {
        PrimeField::new(q)
    }
}

impl From<PrimeField> for u64 {
    fn from(f: PrimeField) -> u64 {
        f.q
    }
}

impl PrimeField {
    pub fn new(q: u64) -> Result<Self, GfError> {
        if q >= MAX_MODULUS {
            return Err(GfError::ModulusTooLarge(q));
        }
        if !is_prime(q) {
            return Err(GfError::NotPrime(q));
        }
        Ok(PrimeField { q })
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.q
    }

    /// Lift a raw integer into the field, reducing it.
    pub fn elem(&self, v: u64) -> FieldElement {
        FieldElement {
            value: v % self.q,
            field: *self,
        }
    }

    /// Lift a signed integer, so that `-1` maps to `q - 1`.
    pub fn elem_i64(&self, v: i64) -> FieldElement {
        self.elem(self.reduce_i64(v))
    }

    pub fn zero(&self) -> FieldElement {
        self.elem(0)
    }

    pub fn one(&self) -> FieldElement {
        self.elem(1)
    }

    /// All field elements in increasing order of their representative.
    pub fn elements(&self) -> impl Iterator<Item = FieldElement> + '_ {
        (0..self.q).map(move |v| self.elem(v))
    }

    #[inline]
    pub fn reduce_i64(&self, v: i64) -> u64 {
        v.rem_euclid(self.q as i64) as u64
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.q - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        (a * b) % self.q
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.q;
        base %= self.q;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via the extended Euclidean algorithm.
    pub fn inv(&self, a: u64) -> Result<u64, GfError> {
        let a = a % self.q;
        if a == 0 {
            return Err(GfError::DivisionByZero);
        }
        let (mut r0, mut r1) = (self.q as i64, a as i64);
        let (mut t0, mut t1) = (0i64, 1i64);
        while r1 != 0 {
            let quot = r0 / r1;
            (r0, r1) = (r1, r0 - quot * r1);
            (t0, t1) = (t1, t0 - quot * t1);
        }
        debug_assert_eq!(r0, 1);
        Ok(self.reduce_i64(t0))
    }
}

impl fmt::Display for PrimeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF({})", self.q)
    }
}

/// A residue modulo the prime of its field. Always reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u64,
    field: PrimeField,
}

impl FieldElement {
    #[inline]
    pub fn value(&self) -> u64 {
        self.value
    }

    #[inline]
    pub fn field(&self) -> PrimeField {
        self.field
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    pub fn inv(&self) -> Result<FieldElement, GfError> {
        ff_inv(*self)
    }

    pub fn pow(&self, exp: u64) -> FieldElement {
        self.field.elem(self.field.pow(self.value, exp))
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

/// Inverse of a nonzero field element.
pub fn ff_inv(a: FieldElement) -> Result<FieldElement, GfError> {
    let v = a.field.inv(a.value)?;
    Ok(a.field.elem(v))
}

macro_rules! binop {
    ($tr:ident, $method:ident, $atr:ident, $amethod:ident, $op:ident) => {
        impl $tr for FieldElement {
            type Output = FieldElement;
            #[inline]
            fn $method(self, rhs: FieldElement) -> FieldElement {
                debug_assert_eq!(self.field, rhs.field, "mixed-field arithmetic");
                FieldElement {
                    value: self.field.$op(self.value, rhs.value),
                    field: self.field,
                }
            }
        }

        impl $atr for FieldElement {
            #[inline]
            fn $amethod(&mut self, rhs: FieldElement) {
                *self = $tr::$method(*self, rhs);
            }
        }
    };
}

binop!(Add, add, AddAssign, add_assign, add);
binop!(Sub, sub, SubAssign, sub_assign, sub);
binop!(Mul, mul, MulAssign, mul_assign, mul);

impl Neg for FieldElement {
    type Output = FieldElement;
    fn neg(self) -> FieldElement {
        FieldElement {
            value: self.field.neg(self.value),
            field: self.field,
        }
    }
}

/// Dense row-major matrix over GF(q).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matrix {
    field: PrimeField,
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl Matrix {
    pub fn zeros(field: PrimeField, rows: usize, cols: usize) -> Self {
        Matrix {
            field,
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(field: PrimeField, n: usize) -> Self {
        Self::from_fn(field, n, n, |r, c| u64::from(r == c))
    }

    /// Build from a generator; values are reduced mod q.
    pub fn from_fn(
        field: PrimeField,
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> u64,
    ) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c) % field.q);
            }
        }
        Matrix {
            field,
            rows,
            cols,
            data,
        }
    }

    /// Build from signed integer rows. Panics on ragged input.
    pub fn from_rows(field: PrimeField, rows: &[Vec<i64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self::from_fn(field, rows.len(), cols, |r, c| field.reduce_i64(rows[r][c]))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn field(&self) -> PrimeField {
        self.field
    }

    #[inline]
    pub fn raw(&self, r: usize, c: usize) -> u64 {
        self.data[r * self.cols + c]
    }

    pub fn get(&self, r: usize, c: usize) -> FieldElement {
        self.field.elem(self.raw(r, c))
    }

    pub fn set(&mut self, r: usize, c: usize, v: u64) {
        self.data[r * self.cols + c] = v % self.field.q;
    }

    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<u64> {
        (0..self.rows).map(|r| self.raw(r, c)).collect()
    }

    /// Rows as signed-free `Vec<Vec<u64>>`, mostly for serialization.
    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.field, self.cols, self.rows, |r, c| self.raw(c, r))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        Matrix::from_fn(self.field, idx.len(), self.cols, |r, c| self.raw(idx[r], c))
    }

    pub fn select_cols(&self, idx: &[usize]) -> Matrix {
        Matrix::from_fn(self.field, self.rows, idx.len(), |r, c| self.raw(r, idx[c]))
    }

    /// `[self | other]`. Panics if row counts differ.
    pub fn hconcat(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "hconcat row mismatch");
        Matrix::from_fn(self.field, self.rows, self.cols + other.cols, |r, c| {
            if c < self.cols {
                self.raw(r, c)
            } else {
                other.raw(r, c - self.cols)
            }
        })
    }

    /// Row vector times matrix: `v · M`.
    pub fn left_mul_vec(&self, v: &[u64]) -> Vec<u64> {
        assert_eq!(v.len(), self.rows, "vector length mismatch");
        let f = self.field;
        let mut out = vec![0u64; self.cols];
        for (r, &coef) in v.iter().enumerate() {
            if coef == 0 {
                continue;
            }
            for (c, o) in out.iter_mut().enumerate() {
                *o = f.add(*o, f.mul(coef, self.raw(r, c)));
            }
        }
        out
    }

    /// Matrix times column vector: `M · v`.
    pub fn mul_vec(&self, v: &[u64]) -> Vec<u64> {
        assert_eq!(v.len(), self.cols, "vector length mismatch");
        let f = self.field;
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(v)
                    .fold(0, |acc, (&a, &b)| f.add(acc, f.mul(a, b)))
            })
            .collect()
    }

    /// Reduced row echelon form and its pivot columns.
    fn rref(&self) -> (Matrix, Vec<usize>) {
        let f = self.field;
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut prow = 0;
        for col in 0..m.cols {
            if prow == m.rows {
                break;
            }
            // First nonzero entry at or below the pivot row.
            let Some(sel) = (prow..m.rows).find(|&r| m.raw(r, col) != 0) else {
                continue;
            };
            m.swap_rows(prow, sel);
            let inv = f.inv(m.raw(prow, col)).expect("pivot is nonzero");
            for c in col..m.cols {
                let v = f.mul(m.raw(prow, c), inv);
                m.data[prow * m.cols + c] = v;
            }
            for r in 0..m.rows {
                let factor = m.raw(r, col);
                if r == prow || factor == 0 {
                    continue;
                }
                for c in col..m.cols {
                    let v = f.sub(m.raw(r, c), f.mul(factor, m.raw(prow, c)));
                    m.data[r * m.cols + c] = v;
                }
            }
            pivots.push(col);
            prow += 1;
        }
        (m, pivots)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }

    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    pub fn inverse(&self) -> Result<Matrix, GfError> {
        if self.rows != self.cols {
            return Err(GfError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let n = self.rows;
        let aug = self.hconcat(&Matrix::identity(self.field, n));
        let (red, pivots) = aug.rref();
        let rank = pivots.iter().filter(|&&p| p < n).count();
        if rank < n {
            return Err(GfError::Singular { rank, size: n });
        }
        let right: Vec<usize> = (n..2 * n).collect();
        Ok(red.select_cols(&right))
    }

    /// Basis of the right null space `{x : M x = 0}`, one vector per column.
    pub fn nullspace(&self) -> Matrix {
        let f = self.field;
        let (red, pivots) = self.rref();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        let mut basis = Matrix::zeros(f, self.cols, free.len());
        for (j, &fc) in free.iter().enumerate() {
            basis.set(fc, j, 1);
            for (r, &pc) in pivots.iter().enumerate() {
                basis.set(pc, j, f.neg(red.raw(r, fc)));
            }
        }
        basis
    }

    /// True when both matrices have the same column span.
    pub fn same_column_span(&self, other: &Matrix) -> bool {
        if self.rows != other.rows {
            return false;
        }
        let a = self.rank();
        let b = other.rank();
        a == b && self.hconcat(other).rank() == a
    }
}

impl std::ops::Mul<&Matrix> for &Matrix {
    type Output = Matrix;

    fn mul(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.field, rhs.field, "mixed-field product");
        assert_eq!(
            self.cols, rhs.rows,
            "dimension mismatch {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let f = self.field;
        let mut out = Matrix::zeros(f, self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.raw(r, k);
                if a == 0 {
                    continue;
                }
                for c in 0..rhs.cols {
                    let idx = r * rhs.cols + c;
                    out.data[idx] = f.add(out.data[idx], f.mul(a, rhs.raw(k, c)));
                }
            }
        }
        out
    }
}

impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            let row: Vec<String> = self.row(r).iter().map(u64::to_string).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// `points.len() × ncols` matrix with entry `(i, j) = points[i]^j`.
pub fn vandermonde(points: &[FieldElement], ncols: usize) -> Result<Matrix, GfError> {
    let field = match points.first() {
        Some(p) => p.field(),
        None => return Err(GfError::Singular { rank: 0, size: 0 }),
    };
    for (i, p) in points.iter().enumerate() {
        if points[..i].contains(p) {
            return Err(GfError::DuplicatePoints(p.value()));
        }
    }
    Ok(Matrix::from_fn(field, points.len(), ncols, |r, c| {
        field.pow(points[r].value(), c as u64)
    }))
}

/// Univariate polynomial, coefficient `j` multiplies `x^j`.
///
/// Trailing zeros are trimmed, so the zero polynomial has no coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    field: PrimeField,
    coeffs: Vec<u64>,
}

impl Polynomial {
    pub fn new(field: PrimeField, coeffs: Vec<u64>) -> Self {
        let mut p = Polynomial {
            field,
            coeffs: coeffs.into_iter().map(|c| c % field.q).collect(),
        };
        p.trim();
        p
    }

    pub fn zero(field: PrimeField) -> Self {
        Polynomial {
            field,
            coeffs: Vec::new(),
        }
    }

    pub fn one(field: PrimeField) -> Self {
        Self::new(field, vec![1])
    }

    /// `∏ (x - r)` over the given roots.
    pub fn from_roots(field: PrimeField, roots: impl IntoIterator<Item = u64>) -> Self {
        roots.into_iter().fold(Self::one(field), |acc, r| {
            let shifted = acc.mul_x();
            let scaled = acc.scale(r);
            shifted.sub(&scaled)
        })
    }

    fn trim(&mut self) {
        while self.coeffs.last() == Some(&0) {
            self.coeffs.pop();
        }
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    /// Coefficient of `x^j`; zero beyond the degree.
    pub fn coeff(&self, j: usize) -> u64 {
        self.coeffs.get(j).copied().unwrap_or(0)
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> u64 {
        self.coeffs.last().copied().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, x: u64) -> u64 {
        let f = self.field;
        self.coeffs
            .iter()
            .rev()
            .fold(0, |acc, &c| f.add(f.mul(acc, x), c))
    }

    pub fn mul_x(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        coeffs.push(0);
        coeffs.extend_from_slice(&self.coeffs);
        Polynomial {
            field: self.field,
            coeffs,
        }
    }

    pub fn scale(&self, c: u64) -> Self {
        let f = self.field;
        Self::new(f, self.coeffs.iter().map(|&a| f.mul(a, c % f.q)).collect())
    }

    pub fn add(&self, other: &Polynomial) -> Self {
        let f = self.field;
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::new(
            f,
            (0..n)
                .map(|j| f.add(self.coeff(j), other.coeff(j)))
                .collect(),
        )
    }

    pub fn sub(&self, other: &Polynomial) -> Self {
        let f = self.field;
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::new(
            f,
            (0..n)
                .map(|j| f.sub(self.coeff(j), other.coeff(j)))
                .collect(),
        )
    }

    pub fn mul(&self, other: &Polynomial) -> Self {
        let f = self.field;
        if self.is_zero() || other.is_zero() {
            return Self::zero(f);
        }
        let mut out = vec![0u64; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] = f.add(out[i + j], f.mul(a, b));
            }
        }
        Self::new(f, out)
    }

    /// Remainder of division by `divisor`; `None` if the divisor is zero.
    pub fn rem(&self, divisor: &Polynomial) -> Option<Polynomial> {
        let f = self.field;
        let dd = divisor.degree()?;
        let lead_inv = f.inv(divisor.leading()).ok()?;
        let mut r = self.coeffs.clone();
        while r.len() > dd {
            let top = *r.last().unwrap();
            let shift = r.len() - 1 - dd;
            if top != 0 {
                let factor = f.mul(top, lead_inv);
                for (j, &d) in divisor.coeffs.iter().enumerate() {
                    r[shift + j] = f.sub(r[shift + j], f.mul(factor, d));
                }
            }
            r.pop();
        }
        Some(Self::new(f, r))
    }
}
