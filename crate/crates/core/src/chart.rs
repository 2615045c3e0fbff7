//! Quadratic charts of the embedding map from tangent to normal coordinates.
//!
//! For each normal coordinate `a` the map is modelled as
//! `g_a(u0 + δ) = g_a(u0) + δᵀ∇g_a + ½ δᵀ H_a δ`. The gradient and the upper
//! triangle of each Hessian are the unknowns of one least-squares system
//! whose design matrix has a row `[u, u², u_i u_j (i < j)]` per neighbor.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{CemsError, Result};

/// One column of the design matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Linear(usize),
    Square(usize),
    /// `u_i * u_j` with `i < j`.
    Cross(usize, usize),
}

/// Approximation order of the chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Order {
    First,
    Second,
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Order::First => "1",
            Order::Second => "2",
        })
    }
}

impl FromStr for Order {
    type Err = CemsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "first" => Ok(Order::First),
            "2" | "second" => Ok(Order::Second),
            other => Err(CemsError::Parameter(format!("unknown chart order '{other}'"))),
        }
    }
}

/// Column layout for intrinsic dimension `d`: `d` linear terms, `d` squares,
/// then the `d(d-1)/2` cross terms in lexicographic order.
pub fn layout(d: usize, order: Order) -> Vec<Term> {
    let mut terms: Vec<Term> = (0..d).map(Term::Linear).collect();
    if order == Order::Second {
        terms.extend((0..d).map(Term::Square));
        for i in 0..d {
            for j in i + 1..d {
                terms.push(Term::Cross(i, j));
            }
        }
    }
    terms
}

/// Number of unknowns per normal coordinate, `d + d(d+1)/2` for second order.
pub fn unknowns(d: usize, order: Order) -> usize {
    match order {
        Order::First => d,
        Order::Second => d + d * (d + 1) / 2,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    /// `k x m`.
    pub psi: DMatrix<f64>,
    pub layout: Vec<Term>,
}

impl DesignMatrix {
    pub fn intrinsic_dim(&self) -> usize {
        self.layout.iter().filter(|t| matches!(t, Term::Linear(_))).count()
    }
}

fn term_value(term: Term, u: impl Fn(usize) -> f64) -> f64 {
    match term {
        Term::Linear(i) => u(i),
        Term::Square(i) => u(i) * u(i),
        Term::Cross(i, j) => u(i) * u(j),
    }
}

/// Builds the second-order design matrix from `k x d` tangent coordinates.
pub fn assemble_design(tangent_coords: &DMatrix<f64>) -> Result<DesignMatrix> {
    assemble_design_with_order(tangent_coords, Order::Second)
}

pub fn assemble_design_with_order(tangent_coords: &DMatrix<f64>, order: Order) -> Result<DesignMatrix> {
    let (k, d) = tangent_coords.shape();
    if k == 0 || d == 0 {
        return Err(CemsError::Schema(format!(
            "design needs k >= 1 and d >= 1, got {k}x{d}"
        )));
    }
    let layout = layout(d, order);
    let psi = DMatrix::from_fn(k, layout.len(), |row, col| {
        term_value(layout[col], |i| tangent_coords[(row, i)])
    });
    Ok(DesignMatrix { psi, layout })
}

/// Ridge weight for the chart solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    Fixed(f64),
    /// Zero when the system is (over)determined, otherwise
    /// `1e-6 * trace(ΨᵀΨ) / m`.
    Auto,
}

impl Ridge {
    pub fn resolve(&self, psi: &DMatrix<f64>) -> f64 {
        match *self {
            Ridge::Fixed(r) => r,
            Ridge::Auto => {
                let (k, m) = psi.shape();
                if k >= m {
                    0.0
                } else {
                    let trace: f64 = psi.iter().map(|v| v * v).sum();
                    1e-6 * trace / m as f64
                }
            }
        }
    }
}

impl fmt::Display for Ridge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ridge::Fixed(r) => write!(f, "{r}"),
            Ridge::Auto => f.write_str("auto"),
        }
    }
}

impl FromStr for Ridge {
    type Err = CemsError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Ridge::Auto);
        }
        let r: f64 = s
            .parse()
            .map_err(|_| CemsError::Parameter(format!("invalid ridge '{s}'")))?;
        if !(r >= 0.0 && r.is_finite()) {
            return Err(CemsError::Parameter(format!(
                "ridge must be a finite value >= 0, got {s}"
            )));
        }
        Ok(Ridge::Fixed(r))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartSolution {
    /// `m x q`, column `a` holds the unknowns of normal coordinate `a`.
    pub coefficients: DMatrix<f64>,
    /// `‖ΨX − G‖_F`.
    pub residual_norm: f64,
    pub ridge: f64,
}

/// Solves `Ψ X ≈ G`. With `ridge == 0` this is the minimum-norm least-squares
/// solution; otherwise `(ΨᵀΨ + ridge I)⁻¹ ΨᵀG`.
pub fn solve_chart(psi: &DMatrix<f64>, g: &DMatrix<f64>, ridge: f64) -> Result<ChartSolution> {
    let (k, m) = psi.shape();
    if g.nrows() != k {
        return Err(CemsError::Schema(format!(
            "design has {k} rows, targets have {}",
            g.nrows()
        )));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(CemsError::Parameter(format!(
            "ridge must be finite and >= 0, got {ridge}"
        )));
    }
    if psi.iter().chain(g.iter()).any(|v| !v.is_finite()) {
        return Err(CemsError::Numeric("non-finite entries in chart system".into()));
    }
    let q = g.ncols();
    if q == 0 || m == 0 {
        return Ok(ChartSolution {
            coefficients: DMatrix::zeros(m, q),
            residual_norm: 0.0,
            ridge,
        });
    }
    let coefficients = if ridge == 0.0 {
        let svd = psi.clone().svd(true, true);
        let s_max = svd.singular_values.max();
        let tol = s_max * (k.max(m) as f64) * f64::EPSILON;
        svd.solve(g, tol)
            .map_err(|e| CemsError::Numeric(format!("pseudoinverse solve failed: {e}")))?
    } else {
        let psi_t = psi.transpose();
        let mut gram = &psi_t * psi;
        for i in 0..m {
            gram[(i, i)] += ridge;
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| CemsError::Numeric("regularized normal equations are not positive definite".into()))?;
        chol.solve(&(&psi_t * g))
    };
    if coefficients.iter().any(|v| !v.is_finite()) {
        return Err(CemsError::Numeric(
            "chart solve produced non-finite coefficients".into(),
        ));
    }
    let residual_norm = (psi * &coefficients - g).norm();
    Ok(ChartSolution {
        coefficients,
        residual_norm,
        ridge,
    })
}

/// Gradient and Hessians of the embedding map around a base point.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticChart {
    /// `d x q`, column `a` is `∇g_a`.
    pub gradient: DMatrix<f64>,
    /// `q` symmetric `d x d` matrices.
    pub hessians: Vec<DMatrix<f64>>,
    /// `g(u0)`, length `q`.
    pub base_value: DVector<f64>,
    /// `u0`, length `d`.
    pub base_point: DVector<f64>,
    pub ridge_used: f64,
    pub residual_norm: f64,
}

impl QuadraticChart {
    pub fn intrinsic_dim(&self) -> usize {
        self.gradient.nrows()
    }

    pub fn normal_dim(&self) -> usize {
        self.gradient.ncols()
    }

    /// Largest absolute Hessian entry over all normal coordinates.
    pub fn hessian_max_abs(&self) -> f64 {
        self.hessians
            .iter()
            .flat_map(|h| h.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Reads gradient and Hessian entries out of the solved coefficients.
///
/// Square-term coefficients are halved Hessian diagonals (`c u² = ½ H_ii u²`)
/// while cross-term coefficients equal the off-diagonal entries directly
/// (`c u_i u_j = ½ (H_ij + H_ji) u_i u_j`).
pub fn extract_chart(
    solution: &ChartSolution,
    layout: &[Term],
    base_value: DVector<f64>,
    base_point: DVector<f64>,
) -> Result<QuadraticChart> {
    let x = &solution.coefficients;
    if x.nrows() != layout.len() {
        return Err(CemsError::Schema(format!(
            "coefficients have {} rows, layout has {} terms",
            x.nrows(),
            layout.len()
        )));
    }
    let d = layout.iter().filter(|t| matches!(t, Term::Linear(_))).count();
    let q = x.ncols();
    if base_value.len() != q || base_point.len() != d {
        return Err(CemsError::Schema(format!(
            "base value/point lengths {}/{} do not match chart {d}x{q}",
            base_value.len(),
            base_point.len()
        )));
    }
    let mut gradient = DMatrix::zeros(d, q);
    let mut hessians = vec![DMatrix::zeros(d, d); q];
    for (row, term) in layout.iter().enumerate() {
        for a in 0..q {
            let c = x[(row, a)];
            match *term {
                Term::Linear(i) => gradient[(i, a)] = c,
                Term::Square(i) => hessians[a][(i, i)] = 2.0 * c,
                Term::Cross(i, j) => {
                    hessians[a][(i, j)] = c;
                    hessians[a][(j, i)] = c;
                }
            }
        }
    }
    Ok(QuadraticChart {
        gradient,
        hessians,
        base_value,
        base_point,
        ridge_used: solution.ridge,
        residual_norm: solution.residual_norm,
    })
}

/// `g(u0) + δᵀ∇g + ½ δᵀHδ` with `δ = eta − u0`, per normal coordinate.
pub fn evaluate_chart(chart: &QuadraticChart, eta: &DVector<f64>) -> Result<DVector<f64>> {
    if eta.len() != chart.intrinsic_dim() {
        return Err(CemsError::Schema(format!(
            "eta has length {}, chart expects {}",
            eta.len(),
            chart.intrinsic_dim()
        )));
    }
    let delta = eta - &chart.base_point;
    let linear = chart.gradient.transpose() * &delta;
    Ok(DVector::from_fn(chart.normal_dim(), |a, _| {
        let quad = delta.dot(&(&chart.hessians[a] * &delta));
        chart.base_value[a] + linear[a] + 0.5 * quad
    }))
}

/// Fits a chart to neighbors given relative to the base point.
///
/// `tangent_offsets` are `u_j − u0` and `normal_offsets` are `g_j − g(u0)`.
pub fn fit_chart(
    tangent_offsets: &DMatrix<f64>,
    normal_offsets: &DMatrix<f64>,
    order: Order,
    ridge: Ridge,
    base_value: DVector<f64>,
    base_point: DVector<f64>,
) -> Result<QuadraticChart> {
    let design = assemble_design_with_order(tangent_offsets, order)?;
    let ridge = ridge.resolve(&design.psi);
    let solution = solve_chart(&design.psi, normal_offsets, ridge)?;
    extract_chart(&solution, &design.layout, base_value, base_point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;

    #[test]
    fn one_dimensional_row() {
        let d = assemble_design(&dmatrix![2.0]).unwrap();
        assert_eq!(d.psi, dmatrix![2.0, 4.0]);
    }

    #[test]
    fn column_counts() {
        assert_eq!(assemble_design(&DMatrix::zeros(4, 3)).unwrap().psi.ncols(), 9);
        assert_eq!(unknowns(3, Order::Second), 9);
        assert_eq!(unknowns(1, Order::First), 1);
        assert_eq!(
            assemble_design_with_order(&DMatrix::zeros(4, 1), Order::First)
                .unwrap()
                .psi
                .ncols(),
            1
        );
    }

    #[test]
    fn two_dimensional_layout() {
        let (a, b) = (1.5, -2.0);
        let d = assemble_design(&dmatrix![a, b]).unwrap();
        assert_eq!(d.psi, dmatrix![a, b, a * a, b * b, a * b]);
        assert_eq!(
            d.layout,
            vec![
                Term::Linear(0),
                Term::Linear(1),
                Term::Square(0),
                Term::Square(1),
                Term::Cross(0, 1)
            ]
        );
    }

    #[test]
    fn square_system_is_solved_exactly() {
        let psi = dmatrix![2.0, 1.0; 1.0, 3.0];
        let g = dmatrix![1.0; 2.0];
        let s = solve_chart(&psi, &g, 0.0).unwrap();
        assert!(s.residual_norm < 1e-10);
    }

    #[test]
    fn zero_targets_give_zero_coefficients() {
        let psi = dmatrix![1.0, 2.0; 3.0, 4.0; 5.0, 7.0];
        let g = DMatrix::zeros(3, 2);
        for ridge in [0.0, 0.1, 10.0] {
            assert_eq!(solve_chart(&psi, &g, ridge).unwrap().coefficients, DMatrix::zeros(2, 2));
        }
    }

    #[test]
    fn non_finite_system_is_numeric_error() {
        let psi = dmatrix![1.0, f64::NAN];
        assert!(matches!(
            solve_chart(&psi, &dmatrix![1.0], 0.0),
            Err(CemsError::Numeric(_))
        ));
    }

    #[test]
    fn overdetermined_noiseless_recovery() {
        // d = 2, m = 5, k = 10 rows generated from known coefficients
        let u = DMatrix::from_fn(10, 2, |i, j| ((i * 3 + j * 5) % 7) as f64 / 7.0 - 0.4 + 0.05 * j as f64);
        let design = assemble_design(&u).unwrap();
        let truth = dmatrix![0.3, -1.0; 1.2, 0.5; -0.7, 2.0; 0.25, 0.0; 1.5, -0.6];
        let g = &design.psi * &truth;
        let s = solve_chart(&design.psi, &g, 0.0).unwrap();
        assert!((s.coefficients - truth).abs().max() < 1e-8);
    }

    #[test]
    fn one_dimensional_extraction_doubles_square_term() {
        let sol = ChartSolution {
            coefficients: dmatrix![0.7; 1.5],
            residual_norm: 0.0,
            ridge: 0.0,
        };
        let c = extract_chart(&sol, &layout(1, Order::Second), dvector![0.0], dvector![0.0]).unwrap();
        assert_eq!(c.gradient, dmatrix![0.7]);
        assert_eq!(c.hessians[0], dmatrix![3.0]);
    }

    #[test]
    fn cross_term_is_the_off_diagonal() {
        let sol = ChartSolution {
            coefficients: dmatrix![0.0; 0.0; 0.0; 0.0; 0.8],
            residual_norm: 0.0,
            ridge: 0.0,
        };
        let c = extract_chart(&sol, &layout(2, Order::Second), dvector![0.0], DVector::zeros(2)).unwrap();
        assert_eq!(c.hessians[0], dmatrix![0.0, 0.8; 0.8, 0.0]);
    }

    #[test]
    fn extraction_checks_layout() {
        let sol = ChartSolution {
            coefficients: dmatrix![1.0; 2.0],
            residual_norm: 0.0,
            ridge: 0.0,
        };
        assert!(extract_chart(&sol, &layout(2, Order::Second), dvector![0.0], DVector::zeros(2)).is_err());
    }

    #[test]
    fn known_hessian_is_recovered_from_twelve_neighbors() {
        let h = dmatrix![2.0, 1.0; 1.0, 4.0];
        let u = DMatrix::from_fn(12, 2, |i, j| {
            let t = i as f64 * 0.5235987755982988 + j as f64 * 0.9;
            (0.2 + 0.02 * i as f64) * if j == 0 { t.cos() } else { t.sin() }
        });
        let g = DMatrix::from_fn(12, 1, |i, _| {
            let ui = u.row(i).transpose();
            0.5 * ui.dot(&(&h * &ui))
        });
        let c = fit_chart(
            &u,
            &g,
            Order::Second,
            Ridge::Fixed(0.0),
            dvector![0.0],
            DVector::zeros(2),
        )
        .unwrap();
        assert!((&c.hessians[0] - &h).abs().max() < 1e-7);
        assert!(c.gradient.abs().max() < 1e-7);
    }

    #[test]
    fn evaluate_at_base_point_is_base_value() {
        let c = QuadraticChart {
            gradient: dmatrix![1.0; -2.0],
            hessians: vec![dmatrix![1.0, 0.5; 0.5, 3.0]],
            base_value: dvector![0.25],
            base_point: dvector![0.1, -0.3],
            ridge_used: 0.0,
            residual_norm: 0.0,
        };
        assert_eq!(evaluate_chart(&c, &dvector![0.1, -0.3]).unwrap(), dvector![0.25]);
        assert!(evaluate_chart(&c, &dvector![0.1]).is_err());
    }

    #[test]
    fn flat_chart_is_affine() {
        let c = QuadraticChart {
            gradient: dmatrix![1.0; -2.0],
            hessians: vec![DMatrix::zeros(2, 2)],
            base_value: dvector![0.0],
            base_point: dvector![0.0, 0.0],
            ridge_used: 0.0,
            residual_norm: 0.0,
        };
        assert_eq!(evaluate_chart(&c, &dvector![0.5, 0.25]).unwrap(), dvector![0.0]);
        assert_eq!(evaluate_chart(&c, &dvector![1.0, 0.0]).unwrap(), dvector![1.0]);
    }

    /// Term-by-term polynomial evaluation, written without matrix products.
    fn polynomial_oracle(c: &QuadraticChart, eta: &[f64]) -> Vec<f64> {
        let d = eta.len();
        (0..c.normal_dim())
            .map(|a| {
                let delta: Vec<f64> = (0..d).map(|i| eta[i] - c.base_point[i]).collect();
                let mut v = c.base_value[a];
                for i in 0..d {
                    v += c.gradient[(i, a)] * delta[i];
                    v += 0.5 * c.hessians[a][(i, i)] * delta[i] * delta[i];
                    for j in i + 1..d {
                        v += c.hessians[a][(i, j)] * delta[i] * delta[j];
                    }
                }
                v
            })
            .collect()
    }

    proptest! {
        #[test]
        fn evaluation_matches_polynomial_oracle(
            coeffs in prop::collection::vec(-2.0f64..2.0, 9 * 2),
            base in prop::collection::vec(-1.0f64..1.0, 5),
            etas in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 100),
        ) {
            let sol = ChartSolution { coefficients: DMatrix::from_column_slice(9, 2, &coeffs), residual_norm: 0.0, ridge: 0.0 };
            let c = extract_chart(&sol, &layout(3, Order::Second), DVector::from_column_slice(&base[..2]), DVector::from_column_slice(&base[2..])).unwrap();
            for h in &c.hessians {
                prop_assert_eq!(h, &h.transpose());
            }
            for eta in &etas {
                let got = evaluate_chart(&c, &DVector::from_column_slice(eta)).unwrap();
                let want = polynomial_oracle(&c, eta);
                for (g, w) in got.iter().zip(&want) {
                    prop_assert!((g - w).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn exact_quadratic_recovery(
            a in prop::collection::vec(-1.0f64..1.0, 2),
            h in prop::collection::vec(-2.0f64..2.0, 3),
            jitter in prop::collection::vec(-0.05f64..0.05, 24),
        ) {
            let hm = dmatrix![h[0], h[1]; h[1], h[2]];
            let av = DVector::from_column_slice(&a);
            // well-spread stencil around the origin
            let u = DMatrix::from_fn(12, 2, |i, j| {
                let t = i as f64 * std::f64::consts::TAU / 12.0;
                let r = 0.3 + 0.1 * (i % 3) as f64;
                r * if j == 0 { t.cos() } else { t.sin() } + jitter[2 * i + j]
            });
            let g = DMatrix::from_fn(12, 1, |i, _| {
                let ui = u.row(i).transpose();
                ui.dot(&av) + 0.5 * ui.dot(&(&hm * &ui))
            });
            let c = fit_chart(&u, &g, Order::Second, Ridge::Fixed(0.0), dvector![0.0], DVector::zeros(2)).unwrap();
            prop_assert!((c.gradient.column(0) - &av).abs().max() < 1e-7);
            prop_assert!((&c.hessians[0] - &hm).abs().max() < 1e-7);
        }

        #[test]
        fn ridge_shrinks_coefficients(
            psi in prop::collection::vec(-1.0f64..1.0, 6 * 4),
            g in prop::collection::vec(-1.0f64..1.0, 6),
        ) {
            let psi = DMatrix::from_column_slice(6, 4, &psi);
            let g = DMatrix::from_column_slice(6, 1, &g);
            let mut last = f64::INFINITY;
            for ridge in [1e-6, 1e-3, 1e-1, 1.0, 10.0, 1e3] {
                let n = solve_chart(&psi, &g, ridge).unwrap().coefficients.norm();
                prop_assert!(n <= last * (1.0 + 1e-9));
                last = n;
            }
        }

        #[test]
        fn underdetermined_solve_is_minimum_norm(
            psi in prop::collection::vec(-1.0f64..1.0, 3 * 5),
            g in prop::collection::vec(-1.0f64..1.0, 3),
            w in prop::collection::vec(-1.0f64..1.0, 5),
        ) {
            let psi = DMatrix::from_column_slice(3, 5, &psi);
            let g = DMatrix::from_column_slice(3, 1, &g);
            let x = solve_chart(&psi, &g, 0.0).unwrap().coefficients;
            // project w onto the null space of psi
            let w = DVector::from_column_slice(&w);
            let pinv = psi.clone().pseudo_inverse(1e-12).unwrap();
            let null = &w - &pinv * (&psi * &w);
            prop_assume!(null.norm() > 1e-6);
            let shifted = &x + DMatrix::from_column_slice(5, 1, null.as_slice());
            prop_assert!((&psi * &shifted - &g).norm() < 1e-8 + (&psi * &x - &g).norm());
            prop_assert!(shifted.norm() > x.norm());
        }
    }
}
