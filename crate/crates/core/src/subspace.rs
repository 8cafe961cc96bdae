//! Parametric null spaces: column matrices `S`, the projection pair
//! `P0 = S (S'S)^{-1} S'`, `P1 = I - P0`, and the reference standard
//! deviation of a precision matrix.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{generalized_inverse, thin_svd, Matrix, SymMatrix, ThinSvd};
use crate::scalar::Real;

/// Singular values below this fraction of the largest mark dependent columns.
pub const RANK_TOL: f64 = 1e-8;

/// Element-wise covariate transform used as one null-space column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Transform {
    Const,
    Power(u32),
    Sin(f64),
    Cos(f64),
    Exp(f64),
}

impl Transform {
    pub fn eval<T: Real>(&self, x: T) -> T {
        match *self {
            Transform::Const => T::one(),
            Transform::Power(p) => x.powi(p as i32),
            Transform::Sin(w) => (T::lit(w) * x).sin(),
            Transform::Cos(w) => (T::lit(w) * x).cos(),
            Transform::Exp(a) => (T::lit(a) * x).exp(),
        }
    }

    pub fn deriv2<T: Real>(&self, x: T) -> T {
        match *self {
            Transform::Const => T::zero(),
            Transform::Power(0) | Transform::Power(1) => T::zero(),
            Transform::Power(p) => T::from_u32(p * (p - 1)).unwrap() * x.powi(p as i32 - 2),
            Transform::Sin(w) => -T::lit(w * w) * (T::lit(w) * x).sin(),
            Transform::Cos(w) => -T::lit(w * w) * (T::lit(w) * x).cos(),
            Transform::Exp(a) => T::lit(a * a) * (T::lit(a) * x).exp(),
        }
    }
}

fn parse_scale(s: &str) -> Option<f64> {
    // accepts "", "pi", "2", "2*pi", "pi/12", "0.5"
    let s = s.trim();
    if s.is_empty() {
        return Some(1.0);
    }
    if let Some((num, den)) = s.split_once('/') {
        return Some(parse_scale(num)? / parse_scale(den)?);
    }
    let mut value = 1.0;
    for factor in s.split('*') {
        let f = factor.trim();
        value *= match f {
            "pi" => std::f64::consts::PI,
            _ => f.parse::<f64>().ok()?,
        };
    }
    Some(value)
}

impl FromStr for Transform {
    type Err = Error;

    /// Parses `1`, `x`, `x^p`, `sin(a*x)`, `cos(a*x)`, `exp(a*x)` where `a`
    /// may be a number, `pi`, or a product/quotient of those.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unrecognized column expression `{s}`"));
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if t == "1" {
            return Ok(Transform::Const);
        }
        if t == "x" {
            return Ok(Transform::Power(1));
        }
        if let Some(p) = t.strip_prefix("x^") {
            return p.parse::<u32>().map(Transform::Power).map_err(|_| bad());
        }
        for (name, ctor) in [
            ("sin", Transform::Sin as fn(f64) -> Transform),
            ("cos", Transform::Cos),
            ("exp", Transform::Exp),
        ] {
            if let Some(inner) = t.strip_prefix(name).and_then(|r| r.strip_prefix('(')) {
                let inner = inner.strip_suffix(')').ok_or_else(bad)?;
                let coef = if inner == "x" {
                    Some(1.0)
                } else if let Some(c) = inner.strip_suffix("*x") {
                    parse_scale(c)
                } else if let Some(c) = inner.strip_prefix("x*") {
                    parse_scale(c)
                } else {
                    None
                };
                return coef.map(ctor).ok_or_else(bad);
            }
        }
        Err(bad())
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Const => write!(f, "1"),
            Transform::Power(1) => write!(f, "x"),
            Transform::Power(p) => write!(f, "x^{p}"),
            Transform::Sin(w) => write!(f, "sin({w}*x)"),
            Transform::Cos(w) => write!(f, "cos({w}*x)"),
            Transform::Exp(a) => write!(f, "exp({a}*x)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SubspaceKind {
    Polynomial { degree: u32 },
    Trig { order: u32, period: f64 },
    Custom(Vec<Transform>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceSpec {
    pub kind: SubspaceKind,
    /// Prepend a constant column for polynomial and trig kinds (and for a
    /// custom list that lacks one).
    pub includes_intercept: bool,
}

impl SubspaceSpec {
    pub fn polynomial(degree: u32) -> Self {
        Self {
            kind: SubspaceKind::Polynomial { degree },
            includes_intercept: true,
        }
    }

    pub fn trig(order: u32, period: f64) -> Self {
        Self {
            kind: SubspaceKind::Trig { order, period },
            includes_intercept: true,
        }
    }

    pub fn custom(columns: Vec<Transform>) -> Self {
        Self {
            kind: SubspaceKind::Custom(columns),
            includes_intercept: false,
        }
    }

    /// Column transforms in order.
    pub fn transforms(&self) -> Result<Vec<Transform>> {
        let mut cols = Vec::new();
        match &self.kind {
            SubspaceKind::Polynomial { degree } => {
                if self.includes_intercept {
                    cols.push(Transform::Const);
                }
                cols.extend((1..=*degree).map(Transform::Power));
            }
            SubspaceKind::Trig { order, period } => {
                if !(*period > 0.0) {
                    return Err(Error::domain(format!("trig period must be positive, got {period}")));
                }
                if self.includes_intercept {
                    cols.push(Transform::Const);
                }
                for w in 1..=*order {
                    let freq = w as f64 * 2.0 * std::f64::consts::PI / period;
                    cols.push(Transform::Cos(freq));
                    cols.push(Transform::Sin(freq));
                }
            }
            SubspaceKind::Custom(list) => {
                if self.includes_intercept && !list.contains(&Transform::Const) {
                    cols.push(Transform::Const);
                }
                cols.extend(list.iter().copied());
            }
        }
        if cols.is_empty() {
            return Err(Error::Config("null space has no columns".into()));
        }
        Ok(cols)
    }
}

impl FromStr for SubspaceSpec {
    type Err = Error;

    /// `polynomial:p`, `trig:order:period`, or `custom:e1,e2,...`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Config(format!("invalid null space `{s}`: {why}"));
        let (head, rest) = s.trim().split_once(':').ok_or_else(|| bad("missing `:`"))?;
        match head.trim() {
            "polynomial" => {
                let p = rest.trim().parse().map_err(|_| bad("degree"))?;
                Ok(Self::polynomial(p))
            }
            "trig" => {
                let (o, period) = rest.split_once(':').ok_or_else(|| bad("expected trig:order:period"))?;
                let order = o.trim().parse().map_err(|_| bad("order"))?;
                let period = parse_scale(period).ok_or_else(|| bad("period"))?;
                Ok(Self::trig(order, period))
            }
            "custom" => {
                let cols = split_top_level(rest)
                    .into_iter()
                    .map(str::parse)
                    .collect::<Result<Vec<Transform>>>()?;
                Ok(Self::custom(cols))
            }
            other => Err(bad(&format!("unknown kind `{other}`"))),
        }
    }
}

fn split_top_level(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out.retain(|p| !p.is_empty());
    out
}

/// A null space evaluated on a training covariate.
#[derive(Debug, Clone)]
pub struct Subspace<T> {
    transforms: Vec<Transform>,
    columns: Matrix<T>,
    svd: ThinSvd<T>,
}

pub fn eval_columns<T: Real>(transforms: &[Transform], x: &[T]) -> Matrix<T> {
    Matrix::from_fn(x.len(), transforms.len(), |i, j| transforms[j].eval(x[i]))
}

pub fn eval_columns_deriv2<T: Real>(transforms: &[Transform], x: &[T]) -> Matrix<T> {
    Matrix::from_fn(x.len(), transforms.len(), |i, j| transforms[j].deriv2(x[i]))
}

/// Evaluates the null-space columns on `x`, rejecting numerically dependent columns.
pub fn build_columns<T: Real>(spec: &SubspaceSpec, x: &[T]) -> Result<Matrix<T>> {
    Ok(Subspace::new(spec, x)?.columns)
}

impl<T: Real> Subspace<T> {
    pub fn new(spec: &SubspaceSpec, x: &[T]) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::domain("null space needs at least one covariate value"));
        }
        let transforms = spec.transforms()?;
        Self::from_columns(transforms.clone(), eval_columns(&transforms, x))
    }

    fn from_columns(transforms: Vec<Transform>, columns: Matrix<T>) -> Result<Self> {
        let cols = columns.cols();
        if columns.rows() < cols {
            return Err(Error::RankDeficient {
                rank: columns.rows(),
                cols,
            });
        }
        let svd = thin_svd(&columns);
        let rank = svd.rank(T::lit(RANK_TOL));
        if rank < cols {
            return Err(Error::RankDeficient { rank, cols });
        }
        Ok(Self {
            transforms,
            columns,
            svd,
        })
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn columns(&self) -> &Matrix<T> {
        &self.columns
    }

    pub fn dim(&self) -> usize {
        self.columns.cols()
    }

    pub fn projections(&self) -> ProjectionPair<T> {
        ProjectionPair {
            basis: self.svd.u.clone(),
        }
    }

    /// Least-squares coefficients `g` minimizing `|y - S g|`.
    pub fn least_squares(&self, y: &[T]) -> Vec<T> {
        let uty = self.svd.u.t_mul_vec(y);
        let scaled: Vec<T> = uty
            .iter()
            .zip(&self.svd.singular_values)
            .map(|(&a, &s)| a / s)
            .collect();
        self.svd.v.mul_vec(&scaled)
    }

    /// Largest `|f''|` on `grid` of the parametric least-squares fit to `y`.
    pub fn fitted_max_abs_deriv2(&self, y: &[T], grid: &[T]) -> T {
        let coef = self.least_squares(y);
        let d2 = eval_columns_deriv2(&self.transforms, grid).mul_vec(&coef);
        d2.into_iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
    }
}

/// Orthogonal projections onto the null space (`P0`) and its complement (`P1`).
/// Stored through an orthonormal basis `U` of `span(S)`, `P0 = U U'`.
#[derive(Debug, Clone)]
pub struct ProjectionPair<T> {
    basis: Matrix<T>,
}

/// Projection pair for an explicit column matrix.
pub fn projections<T: Real>(s: &Matrix<T>) -> Result<ProjectionPair<T>> {
    let transforms = vec![Transform::Const; s.cols()];
    Ok(Subspace::from_columns(transforms, s.clone())?.projections())
}

impl<T: Real> ProjectionPair<T> {
    pub fn orthonormal_basis(&self) -> &Matrix<T> {
        &self.basis
    }

    pub fn n(&self) -> usize {
        self.basis.rows()
    }

    pub fn p0(&self) -> SymMatrix<T> {
        SymMatrix::from_matrix_unchecked(self.basis.matmul(&self.basis.transpose())).exact_symmetrize()
    }

    pub fn p1(&self) -> SymMatrix<T> {
        let n = self.n();
        let p0 = self.p0();
        SymMatrix::from_matrix_unchecked(Matrix::identity(n).sub(p0.matrix()))
    }

    pub fn apply_p0(&self, v: &[T]) -> Vec<T> {
        self.basis.mul_vec(&self.basis.t_mul_vec(v))
    }

    pub fn apply_p1(&self, v: &[T]) -> Vec<T> {
        let p0v = self.apply_p0(v);
        v.iter().zip(p0v).map(|(&a, b)| a - b).collect()
    }

    /// `Z' P1 Z` without forming the `n x n` projection.
    pub fn complement_gram(&self, z: &Matrix<T>) -> SymMatrix<T> {
        let utz = self.basis.t_matmul(z);
        let zz = z.t_matmul(z);
        let proj = utz.t_matmul(&utz);
        SymMatrix::from_matrix_unchecked(zz.sub(&proj)).exact_symmetrize()
    }
}

impl<T: Real> SymMatrix<T> {
    fn exact_symmetrize(self) -> Self {
        let m = self.into_matrix();
        let n = m.rows();
        let two = T::lit(2.0);
        SymMatrix::from_matrix_unchecked(Matrix::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)]) / two))
    }
}

/// Geometric mean of the marginal standard deviations implied by the
/// precision `f`, computed from its generalized inverse. Indices whose
/// marginal variance is numerically zero are skipped.
pub fn sigma_ref<T: Real>(f: &SymMatrix<T>) -> Result<T> {
    let (cov, _rank) = generalized_inverse(f, T::lit(crate::linalg::DEFAULT_REL_TOL))?;
    let floor = T::lit(1e-12);
    let logs: Vec<T> = cov
        .diag()
        .into_iter()
        .filter(|&v| v > floor)
        .map(|v| T::lit(0.5) * v.ln())
        .collect();
    if logs.is_empty() {
        return Err(Error::domain("all marginal variances vanish"));
    }
    let m = T::from_usize(logs.len()).unwrap();
    Ok((logs.into_iter().sum::<T>() / m).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polynomial_columns() {
        let s = build_columns(&SubspaceSpec::polynomial(1), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s, Matrix::from_rows(&[[1.0, 1.0], [1.0, 2.0], [1.0, 3.0]]));
    }

    #[test]
    fn trig_column_count() {
        let x: Vec<f64> = (0..96).map(|i| i as f64 * 0.25).collect();
        let s = build_columns(&SubspaceSpec::trig(4, 24.0), &x).unwrap();
        assert_eq!(s.cols(), 9);
    }

    #[test]
    fn constant_covariate_is_rank_deficient() {
        let err = build_columns(&SubspaceSpec::polynomial(2), &[2.0; 5]).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { rank: 1, cols: 3 }));
    }

    #[test]
    fn mean_projection() {
        let pp = projections(&Matrix::from_columns(&[vec![1.0; 3]])).unwrap();
        let p0 = pp.p0();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(p0[(i, j)], 1.0 / 3.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn simple_regression_hat_matrix() {
        let s = build_columns(&SubspaceSpec::polynomial(1), &[-1.0, 0.0, 1.0]).unwrap();
        let p0 = projections(&s).unwrap().p0();
        let want = Matrix::from_rows(&[
            [5.0 / 6.0, 1.0 / 3.0, -1.0 / 6.0],
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            [-1.0 / 6.0, 1.0 / 3.0, 5.0 / 6.0],
        ]);
        assert!(p0.matrix().max_abs_diff(&want) < 1e-14);
        let p1s = projections(&s).unwrap().p1().matrix().matmul(&s);
        assert!(p1s.max_abs() < 1e-14);
    }

    #[test]
    fn sigma_ref_examples() {
        assert_abs_diff_eq!(sigma_ref(&SymMatrix::<f64>::identity(5)).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            sigma_ref(&SymMatrix::from_diag(&[4.0, 4.0])).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        let f = SymMatrix::from_rows(&[[3.0, 1.0], [1.0, 2.0]]).unwrap();
        let s = 3.0;
        let a = sigma_ref(&f).unwrap();
        let b = sigma_ref(&f.scale(s * s)).unwrap();
        assert_abs_diff_eq!(b, a / s, epsilon = 1e-12);
    }

    #[test]
    fn sigma_ref_all_null_is_error() {
        assert!(sigma_ref(&SymMatrix::<f64>::from_diag(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn parse_specs() {
        assert_eq!(
            "polynomial:2".parse::<SubspaceSpec>().unwrap(),
            SubspaceSpec::polynomial(2)
        );
        assert_eq!(
            "trig:4:24".parse::<SubspaceSpec>().unwrap(),
            SubspaceSpec::trig(4, 24.0)
        );
        let c: SubspaceSpec = "custom:1, sin(pi*x), cos(pi*x)".parse().unwrap();
        let pi = std::f64::consts::PI;
        assert_eq!(
            c.transforms().unwrap(),
            vec![Transform::Const, Transform::Sin(pi), Transform::Cos(pi)]
        );
        assert!("spline:3".parse::<SubspaceSpec>().is_err());
        assert!("custom:log(x)".parse::<SubspaceSpec>().is_err());
    }

    #[test]
    fn transform_second_derivatives() {
        let x = 0.7f64;
        let h = 1e-4;
        for t in [
            Transform::Power(3),
            Transform::Sin(2.0),
            Transform::Cos(0.5),
            Transform::Exp(1.3),
        ] {
            let fd = (t.eval(x + h) - 2.0 * t.eval(x) + t.eval(x - h)) / (h * h);
            assert_abs_diff_eq!(t.deriv2(x), fd, epsilon = 1e-5);
        }
    }

    #[test]
    fn least_squares_recovers_polynomial() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 / 4.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 - 2.0 * v + 0.5 * v * v).collect();
        let sub = Subspace::new(&SubspaceSpec::polynomial(2), &x).unwrap();
        let g = sub.least_squares(&y);
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(g[1], -2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(g[2], 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(sub.fitted_max_abs_deriv2(&y, &x), 1.0, epsilon = 1e-9);
    }
}
