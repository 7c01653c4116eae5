//! Dense linear programming.
//!
//! Problems are stated in general form
//!
//! ```text
//! min cᵀx   s.t.   A_ub·x ≤ b_ub,   A_eq·x = b_eq,   l ≤ x ≤ u
//! ```
//!
//! and solved by a two-phase tableau simplex on the equivalent standard form
//! (`Ax = b, x ≥ 0`). Pricing is Dantzig's rule, falling back to Bland's rule
//! after a run of degenerate pivots so the method cannot cycle. The returned
//! solution is certified by recomputing the simplex multipliers from the
//! original data and checking dual feasibility and the duality gap.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One linear row `coeffs · x (≤ | =) rhs` with dense coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(n: usize, rhs: f64) -> Self {
        Self { coeffs: vec![0.0; n], rhs }
    }

    pub fn with(mut self, var: usize, coeff: f64) -> Self {
        self.coeffs[var] += coeff;
        self
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub inequalities: Vec<Constraint>,
    pub equalities: Vec<Constraint>,
    /// `(lower, upper)`; infinite values mean no bound.
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            inequalities: Vec::new(),
            equalities: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.n_vars();
        if self.bounds.len() != n {
            return Err(LpError::Malformed(format!("{} bounds for {n} variables", self.bounds.len())));
        }
        for (kind, rows) in [("inequality", &self.inequalities), ("equality", &self.equalities)] {
            for (i, r) in rows.iter().enumerate() {
                if r.coeffs.len() != n {
                    return Err(LpError::Malformed(format!("{kind} {i} has {} coefficients", r.coeffs.len())));
                }
                if !r.rhs.is_finite() || r.coeffs.iter().any(|v| !v.is_finite()) {
                    return Err(LpError::Malformed(format!("{kind} {i} has non-finite data")));
                }
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(LpError::Malformed("non-finite objective".into()));
        }
        for (j, &(l, u)) in self.bounds.iter().enumerate() {
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(LpError::Malformed(format!("invalid bounds on variable {j}")));
            }
        }
        Ok(())
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for r in &self.inequalities {
            worst = worst.max(r.activity(x) - r.rhs);
        }
        for r in &self.equalities {
            worst = worst.max((r.activity(x) - r.rhs).abs());
        }
        for (&v, &(l, u)) in x.iter().zip(&self.bounds) {
            worst = worst.max(l - v).max(v - u);
        }
        worst
    }
}

/// A constraint of the original problem, as named in certificates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintRef {
    Inequality(usize),
    Equality(usize),
    LowerBound(usize),
    UpperBound(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("infeasible (phase-one residual {infeasibility:.3e}); certificate rows: {certificate:?}")]
    Infeasible {
        infeasibility: f64,
        /// Farkas multipliers on the original constraints.
        certificate: Vec<(ConstraintRef, f64)>,
    },
    #[error("unbounded along variable {0}")]
    Unbounded(usize),
    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),
    #[error("solution failed certification: duality gap {gap:.3e}, dual infeasibility {dual:.3e}, primal residual {primal:.3e}")]
    Certification { gap: f64, dual: f64, primal: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative feasibility/optimality tolerance for certification.
    pub tolerance: f64,
    pub max_iterations: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-7, max_iterations: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub duality_gap: f64,
    pub primal_residual: f64,
    pub iterations: usize,
}

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;

/// How an original variable is expressed through standard-form columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `x = offset + col`
    Shifted { col: usize, offset: f64 },
    /// `x = offset − col`
    Mirrored { col: usize, offset: f64 },
    /// `x = pos − neg`
    Split { pos: usize, neg: usize },
}

#[derive(Debug, Clone, Copy)]
enum RowOrigin {
    Ineq(usize),
    Eq(usize),
    Upper(usize),
}

struct StandardForm {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    /// Column that can start in the basis for each row, if any.
    slack_of_row: Vec<Option<usize>>,
    origin: Vec<RowOrigin>,
    /// Sign applied to the row when making its rhs non-negative.
    row_sign: Vec<f64>,
    maps: Vec<VarMap>,
    constant: f64,
}

fn to_standard_form(lp: &LinearProgram) -> StandardForm {
    let n = lp.n_vars();
    let mut maps = Vec::with_capacity(n);
    let mut n_cols = 0;
    let mut upper_rows = Vec::new();
    for (j, &(l, u)) in lp.bounds.iter().enumerate() {
        if l.is_finite() {
            maps.push(VarMap::Shifted { col: n_cols, offset: l });
            if u.is_finite() {
                upper_rows.push((j, n_cols, u - l));
            }
            n_cols += 1;
        } else if u.is_finite() {
            maps.push(VarMap::Mirrored { col: n_cols, offset: u });
            n_cols += 1;
        } else {
            maps.push(VarMap::Split { pos: n_cols, neg: n_cols + 1 });
            n_cols += 2;
        }
    }
    let n_struct = n_cols;
    let n_slack = lp.inequalities.len() + upper_rows.len();
    let total = n_struct + n_slack;

    let mut c = vec![0.0; total];
    let mut constant = 0.0;
    for (j, &cj) in lp.objective.iter().enumerate() {
        match maps[j] {
            VarMap::Shifted { col, offset } => {
                c[col] += cj;
                constant += cj * offset;
            }
            VarMap::Mirrored { col, offset } => {
                c[col] -= cj;
                constant += cj * offset;
            }
            VarMap::Split { pos, neg } => {
                c[pos] += cj;
                c[neg] -= cj;
            }
        }
    }

    let expand = |row: &Constraint| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; total];
        let mut rhs = row.rhs;
        for (j, &aj) in row.coeffs.iter().enumerate() {
            if aj == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Shifted { col, offset } => {
                    out[col] += aj;
                    rhs -= aj * offset;
                }
                VarMap::Mirrored { col, offset } => {
                    out[col] -= aj;
                    rhs -= aj * offset;
                }
                VarMap::Split { pos, neg } => {
                    out[pos] += aj;
                    out[neg] -= aj;
                }
            }
        }
        (out, rhs)
    };

    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut slack_of_row = Vec::new();
    let mut origin = Vec::new();
    let mut slack = n_struct;
    for (i, row) in lp.inequalities.iter().enumerate() {
        let (mut coeffs, rhs) = expand(row);
        coeffs[slack] = 1.0;
        a.push(coeffs);
        b.push(rhs);
        slack_of_row.push(Some(slack));
        origin.push(RowOrigin::Ineq(i));
        slack += 1;
    }
    for &(j, col, width) in &upper_rows {
        let mut coeffs = vec![0.0; total];
        coeffs[col] = 1.0;
        coeffs[slack] = 1.0;
        a.push(coeffs);
        b.push(width);
        slack_of_row.push(Some(slack));
        origin.push(RowOrigin::Upper(j));
        slack += 1;
    }
    for (i, row) in lp.equalities.iter().enumerate() {
        let (coeffs, rhs) = expand(row);
        a.push(coeffs);
        b.push(rhs);
        slack_of_row.push(None);
        origin.push(RowOrigin::Eq(i));
    }
    let mut row_sign = vec![1.0; a.len()];
    for i in 0..a.len() {
        if b[i] < 0.0 {
            b[i] = -b[i];
            a[i].iter_mut().for_each(|v| *v = -*v);
            row_sign[i] = -1.0;
            // a flipped slack has coefficient −1 and cannot start basic
            slack_of_row[i] = None;
        }
    }
    StandardForm { a, b, c, slack_of_row, origin, row_sign, maps, constant }
}

struct Tableau {
    /// Row-major `m × (n + 1)`; the last column is the rhs.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.n]
    }

    fn pivot(&mut self, r: usize, col: usize, cost: &mut [f64], obj: &mut f64) {
        let piv = self.rows[r][col];
        let inv = 1.0 / piv;
        self.rows[r].iter_mut().for_each(|v| *v *= inv);
        let pivot_row = std::mem::take(&mut self.rows[r]);
        let nz: Vec<usize> = (0..=self.n).filter(|&j| pivot_row[j] != 0.0).collect();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col];
            if f != 0.0 {
                for &j in &nz {
                    row[j] -= f * pivot_row[j];
                }
                row[col] = 0.0;
            }
        }
        let f = cost[col];
        if f != 0.0 {
            for &j in &nz {
                if j < self.n {
                    cost[j] -= f * pivot_row[j];
                }
            }
            *obj -= f * pivot_row[self.n];
            cost[col] = 0.0;
        }
        self.rows[r] = pivot_row;
        self.basis[r] = col;
    }

    /// Runs the simplex method on reduced costs `cost` (updated in place).
    /// Columns with `allowed[j] == false` never enter.
    fn optimize(&mut self, cost: &mut [f64], obj: &mut f64, allowed: &[bool], iterations: &mut usize, limit: usize) -> Result<(), LpError> {
        let mut degenerate = 0usize;
        loop {
            let bland = degenerate >= DEGENERATE_RUN;
            let mut entering = None;
            let mut best = -COST_TOL;
            for j in 0..self.n {
                if !allowed[j] || cost[j] >= -COST_TOL {
                    continue;
                }
                if bland {
                    entering = Some(j);
                    break;
                }
                if cost[j] < best {
                    best = cost[j];
                    entering = Some(j);
                }
            }
            let Some(col) = entering else { return Ok(()) };

            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[col];
                if a > PIVOT_TOL {
                    let ratio = row[self.n] / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li]) {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, ratio)) = leave else { return Err(LpError::Unbounded(col)) };
            if ratio.abs() <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, col, cost, obj);
            *iterations += 1;
            if *iterations > limit {
                return Err(LpError::IterationLimit(limit));
            }
        }
    }
}

/// Solves `lp`, returning a certified optimum or a verdict.
pub fn solve_lp(lp: &LinearProgram, options: &SolverOptions) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let sf = to_standard_form(lp);
    let m = sf.a.len();
    let n_std = sf.c.len();

    // Artificial columns for rows without a usable slack.
    let art_rows: Vec<usize> = (0..m).filter(|&i| sf.slack_of_row[i].is_none()).collect();
    let n_total = n_std + art_rows.len();
    let mut rows = Vec::with_capacity(m);
    let mut basis = vec![0; m];
    for i in 0..m {
        let mut r = sf.a[i].clone();
        r.resize(n_total + 1, 0.0);
        r[n_total] = sf.b[i];
        rows.push(r);
        if let Some(s) = sf.slack_of_row[i] {
            basis[i] = s;
        }
    }
    for (k, &i) in art_rows.iter().enumerate() {
        rows[i][n_std + k] = 1.0;
        basis[i] = n_std + k;
    }
    let mut tab = Tableau { rows, basis, n: n_total };
    let limit = options.max_iterations.unwrap_or(50 * (m + n_total) + 1000);
    let mut iterations = 0;

    // Phase one: minimise the sum of artificials.
    let mut cost1 = vec![0.0; n_total];
    let mut obj1 = 0.0;
    for &i in &art_rows {
        for j in 0..n_std {
            cost1[j] -= tab.rows[i][j];
        }
        obj1 -= tab.rhs(i);
    }
    let allowed_all = vec![true; n_total];
    tab.optimize(&mut cost1, &mut obj1, &allowed_all, &mut iterations, limit)?;
    let infeasibility = -obj1;
    let b_scale = 1.0 + sf.b.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if infeasibility > options.tolerance * b_scale {
        let phase1_cost: Vec<f64> = (0..n_total).map(|j| if j >= n_std { 1.0 } else { 0.0 }).collect();
        let y = multipliers(&sf, &tab, &phase1_cost, &art_rows, n_std, &(0..m).collect::<Vec<_>>()).unwrap_or_else(|| vec![0.0; m]);
        let certificate = y
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > 1e-9)
            .map(|(i, &v)| (constraint_ref(&sf, i), v * sf.row_sign[i]))
            .collect();
        return Err(LpError::Infeasible { infeasibility, certificate });
    }

    // Drive artificials out of the basis; rows where that is impossible are redundant.
    let mut redundant = vec![false; m];
    for i in 0..m {
        if tab.basis[i] < n_std {
            continue;
        }
        if let Some(j) = (0..n_std).find(|&j| tab.rows[i][j].abs() > 1e-7) {
            let mut dummy_cost = vec![0.0; n_total];
            let mut dummy_obj = 0.0;
            tab.pivot(i, j, &mut dummy_cost, &mut dummy_obj);
        } else {
            redundant[i] = true;
        }
    }
    let keep: Vec<usize> = (0..m).filter(|&i| !redundant[i]).collect();
    tab.rows = keep.iter().map(|&i| std::mem::take(&mut tab.rows[i])).collect();
    tab.basis = keep.iter().map(|&i| tab.basis[i]).collect();

    // Phase two on the true costs.
    let mut allowed = vec![true; n_total];
    allowed[n_std..].iter_mut().for_each(|v| *v = false);
    let mut cost2: Vec<f64> = (0..n_total).map(|j| if j < n_std { sf.c[j] } else { 0.0 }).collect();
    let mut obj2 = 0.0;
    for (i, &bcol) in tab.basis.iter().enumerate() {
        let cb = cost2[bcol];
        if cb != 0.0 {
            let row = &tab.rows[i];
            for j in 0..n_total {
                if j != bcol {
                    cost2[j] -= cb * row[j];
                }
            }
            obj2 -= cb * row[n_total];
            cost2[bcol] = 0.0;
        }
    }
    tab.optimize(&mut cost2, &mut obj2, &allowed, &mut iterations, limit)?;

    let mut xs = vec![0.0; n_std];
    for (i, &bcol) in tab.basis.iter().enumerate() {
        if bcol < n_std {
            xs[bcol] = tab.rhs(i).max(0.0);
        }
    }
    let x: Vec<f64> = sf
        .maps
        .iter()
        .map(|m| match *m {
            VarMap::Shifted { col, offset } => offset + xs[col],
            VarMap::Mirrored { col, offset } => offset - xs[col],
            VarMap::Split { pos, neg } => xs[pos] - xs[neg],
        })
        .collect();

    // Certification against the original data.
    let phase2_cost: Vec<f64> = (0..n_total).map(|j| if j < n_std { sf.c[j] } else { 0.0 }).collect();
    let y = multipliers(&sf, &tab, &phase2_cost, &art_rows, n_std, &keep).ok_or(LpError::Certification {
        gap: f64::INFINITY,
        dual: f64::INFINITY,
        primal: f64::INFINITY,
    })?;
    let mut dual_infeas: f64 = 0.0;
    for j in 0..n_std {
        let r = sf.c[j] - keep.iter().zip(&y).map(|(&i, yi)| sf.a[i][j] * yi).sum::<f64>();
        dual_infeas = dual_infeas.max(-r);
    }
    let primal_std: f64 = sf.c.iter().zip(&xs).map(|(c, v)| c * v).sum();
    let dual_obj: f64 = keep.iter().zip(&y).map(|(&i, yi)| sf.b[i] * yi).sum();
    let gap = (primal_std - dual_obj).abs();
    let objective = lp.objective_value(&x);
    let primal = lp.max_violation(&x);
    let c_scale = 1.0 + sf.c.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let scale = 1.0 + primal_std.abs();
    let tol = options.tolerance;
    if gap > tol * scale || dual_infeas > tol * c_scale || primal > tol * b_scale {
        return Err(LpError::Certification { gap, dual: dual_infeas, primal });
    }
    debug_assert!((objective - (primal_std + sf.constant)).abs() <= 1e-6 * (1.0 + objective.abs()));
    Ok(LpSolution { x, objective, duality_gap: gap, primal_residual: primal, iterations })
}

fn constraint_ref(sf: &StandardForm, row: usize) -> ConstraintRef {
    match sf.origin[row] {
        RowOrigin::Ineq(i) => ConstraintRef::Inequality(i),
        RowOrigin::Eq(i) => ConstraintRef::Equality(i),
        RowOrigin::Upper(j) => ConstraintRef::UpperBound(j),
    }
}

/// Simplex multipliers `y` solving `Bᵀy = c_B` for the rows in `keep`.
fn multipliers(sf: &StandardForm, tab: &Tableau, cost: &[f64], art_rows: &[usize], n_std: usize, keep: &[usize]) -> Option<Vec<f64>> {
    let m = keep.len();
    if m == 0 {
        return Some(Vec::new());
    }
    let column = |col: usize, row: usize| -> f64 {
        if col < n_std {
            sf.a[row][col]
        } else if art_rows[col - n_std] == row {
            1.0
        } else {
            0.0
        }
    };
    let bt = DMatrix::from_fn(m, m, |r, c| column(tab.basis[r], keep[c]));
    let cb = DVector::from_iterator(m, tab.basis.iter().map(|&j| cost[j]));
    bt.lu().solve(&cb).map(|v| v.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_lower_bound() {
        let mut lp = LinearProgram::new(1);
        lp.objective[0] = 1.0;
        lp.bounds[0] = (f64::NEG_INFINITY, f64::INFINITY);
        lp.inequalities.push(Constraint::new(1, -3.0).with(0, -1.0));
        let sol = solve_lp(&lp, &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(sol.x[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.objective, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn textbook_maximisation() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-3.0, -5.0];
        lp.inequalities.push(Constraint::new(2, 4.0).with(0, 1.0));
        lp.inequalities.push(Constraint::new(2, 12.0).with(1, 2.0));
        lp.inequalities.push(Constraint::new(2, 18.0).with(0, 3.0).with(1, 2.0));
        let sol = solve_lp(&lp, &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(sol.objective, -36.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.x[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.x[1], 6.0, epsilon = 1e-9);
    }

    #[test]
    fn equalities_and_mirrored_bounds() {
        // min x − y, x + y = 2, x ≤ 5 (free below), y ∈ [−1, 1.5]
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, -1.0];
        lp.bounds = vec![(f64::NEG_INFINITY, 5.0), (-1.0, 1.5)];
        lp.equalities.push(Constraint::new(2, 2.0).with(0, 1.0).with(1, 1.0));
        let sol = solve_lp(&lp, &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(sol.x[0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.x[1], 1.5, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_with_certificate() {
        let mut lp = LinearProgram::new(1);
        lp.inequalities.push(Constraint::new(1, 1.0).with(0, 1.0));
        lp.inequalities.push(Constraint::new(1, -2.0).with(0, -1.0));
        match solve_lp(&lp, &SolverOptions::default()) {
            Err(LpError::Infeasible { certificate, infeasibility }) => {
                assert!(infeasibility > 0.5);
                assert!(!certificate.is_empty());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::new(1);
        lp.objective[0] = -1.0;
        assert!(matches!(solve_lp(&lp, &SolverOptions::default()), Err(LpError::Unbounded(_))));
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 2.0];
        lp.equalities.push(Constraint::new(2, 1.0).with(0, 1.0).with(1, 1.0));
        lp.equalities.push(Constraint::new(2, 2.0).with(0, 2.0).with(1, 2.0));
        let sol = solve_lp(&lp, &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(sol.objective, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn malformed_rejected() {
        let mut lp = LinearProgram::new(2);
        lp.inequalities.push(Constraint::new(3, 1.0));
        assert!(matches!(solve_lp(&lp, &SolverOptions::default()), Err(LpError::Malformed(_))));
    }
}
