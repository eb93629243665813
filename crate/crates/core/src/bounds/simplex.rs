//! Two-phase revised primal simplex.
//!
//! Columns are stored sparse and the basis inverse is kept dense, refreshed
//! by Gauss-Jordan every few hundred pivots. Entering variable: lowest index
//! with an improving reduced cost. Leaving variable: minimum ratio, ties to
//! the lowest basic index. Bland's rule terminates without cycling, so
//! pivoting is deterministic.

use super::{LinearProgram, LpSolution, LpStatus, Relation};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct SimplexOptions {
    /// Entries below this magnitude are treated as zero when pivoting.
    pub pivot_tolerance: f64,
    /// Phase-one infeasibility above this is reported as infeasible.
    pub feasibility_tolerance: f64,
    pub max_pivots: usize,
    /// Pivots between refactorizations of the basis inverse.
    pub refactor_every: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            pivot_tolerance: 1e-9,
            feasibility_tolerance: 1e-7,
            max_pivots: 1_000_000,
            refactor_every: 500,
        }
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    solve_lp_with(lp, SimplexOptions::default())
}

pub fn solve_lp_with(lp: &LinearProgram, opts: SimplexOptions) -> Result<LpSolution> {
    lp.validate()?;
    let mut s = Revised::new(lp, opts);
    let n = lp.num_vars();

    if s.first_artificial < s.cols {
        let phase_one: Vec<f64> = (0..s.cols)
            .map(|j| if j >= s.first_artificial { -1.0 } else { 0.0 })
            .collect();
        s.set_costs(phase_one);
        let status = s.optimize(s.cols)?;
        debug_assert_eq!(status, LpStatus::Optimal);
        if s.objective_value() < -opts.feasibility_tolerance {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                values: vec![0.0; n],
                objective: f64::NAN,
                pivots: s.pivots,
            });
        }
        s.drive_out_artificials()?;
    }

    let mut costs = lp.objective.clone();
    costs.resize(s.cols, 0.0);
    s.set_costs(costs);
    let status = s.optimize(s.first_artificial)?;
    s.refactor()?;
    let values = s.primal(n);
    let objective = match status {
        LpStatus::Optimal => lp.objective_value(&values),
        _ => f64::INFINITY,
    };
    Ok(LpSolution {
        status,
        values,
        objective,
        pivots: s.pivots,
    })
}

struct Revised {
    rows: usize,
    cols: usize,
    /// Compressed sparse columns.
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<f64>,
    rhs: Vec<f64>,
    costs: Vec<f64>,
    /// Row-major dense B⁻¹.
    binv: Vec<f64>,
    /// Values of the basic variables.
    xb: Vec<f64>,
    /// Duals c_B B⁻¹.
    y: Vec<f64>,
    basis: Vec<usize>,
    /// Rows whose artificial stays basic at zero because the row is redundant.
    frozen: Vec<bool>,
    first_artificial: usize,
    pivots: usize,
    since_refactor: usize,
    opts: SimplexOptions,
}

impl Revised {
    fn new(lp: &LinearProgram, opts: SimplexOptions) -> Self {
        let n = lp.num_vars();
        let rows = lp.constraints.len();
        // Normalize to nonnegative right-hand sides.
        let normalized: Vec<(f64, Relation, f64)> = lp
            .constraints
            .iter()
            .map(|c| {
                if c.rhs < 0.0 {
                    let rel = match c.relation {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    };
                    (-1.0, rel, -c.rhs)
                } else {
                    (1.0, c.relation, c.rhs)
                }
            })
            .collect();
        let slacks = normalized.iter().filter(|(_, r, _)| *r != Relation::Eq).count();
        let artificials = normalized.iter().filter(|(_, r, _)| *r != Relation::Le).count();
        let first_artificial = n + slacks;
        let cols = first_artificial + artificials;

        let mut per_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); cols];
        let mut basis = vec![0; rows];
        let (mut next_slack, mut next_art) = (n, first_artificial);
        for (r, (c, &(sign, rel, _))) in lp.constraints.iter().zip(&normalized).enumerate() {
            for (j, &v) in c.coeffs.iter().enumerate() {
                if v != 0.0 {
                    per_col[j].push((r, sign * v));
                }
            }
            match rel {
                Relation::Le => {
                    per_col[next_slack].push((r, 1.0));
                    basis[r] = next_slack;
                    next_slack += 1;
                }
                Relation::Ge => {
                    per_col[next_slack].push((r, -1.0));
                    next_slack += 1;
                    per_col[next_art].push((r, 1.0));
                    basis[r] = next_art;
                    next_art += 1;
                }
                Relation::Eq => {
                    per_col[next_art].push((r, 1.0));
                    basis[r] = next_art;
                    next_art += 1;
                }
            }
        }
        let mut col_start = Vec::with_capacity(cols + 1);
        let mut col_row = Vec::new();
        let mut col_val = Vec::new();
        col_start.push(0);
        for col in per_col {
            for (r, v) in col {
                col_row.push(r);
                col_val.push(v);
            }
            col_start.push(col_row.len());
        }
        let mut binv = vec![0.0; rows * rows];
        for r in 0..rows {
            binv[r * rows + r] = 1.0;
        }
        let rhs: Vec<f64> = normalized.iter().map(|&(_, _, b)| b).collect();
        Self {
            rows,
            cols,
            col_start,
            col_row,
            col_val,
            xb: rhs.clone(),
            rhs,
            costs: vec![0.0; cols],
            binv,
            y: vec![0.0; rows],
            basis,
            frozen: vec![false; rows],
            first_artificial,
            pivots: 0,
            since_refactor: 0,
            opts,
        }
    }

    fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_start[j]..self.col_start[j + 1];
        self.col_row[range.clone()]
            .iter()
            .copied()
            .zip(self.col_val[range].iter().copied())
    }

    fn objective_value(&self) -> f64 {
        self.basis.iter().zip(&self.xb).map(|(&b, &x)| self.costs[b] * x).sum()
    }

    fn set_costs(&mut self, costs: Vec<f64>) {
        self.costs = costs;
        self.recompute_duals();
    }

    fn recompute_duals(&mut self) {
        let m = self.rows;
        self.y.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..m {
            let cb = self.costs[self.basis[r]];
            if cb != 0.0 {
                for (yk, &b) in self.y.iter_mut().zip(&self.binv[r * m..(r + 1) * m]) {
                    *yk += cb * b;
                }
            }
        }
    }

    /// z_j = c_B B⁻¹ a_j − c_j.
    fn reduced_cost(&self, j: usize) -> f64 {
        self.column(j).map(|(r, v)| self.y[r] * v).sum::<f64>() - self.costs[j]
    }

    /// B⁻¹ a_j.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.rows;
        let mut alpha = vec![0.0; m];
        for (k, v) in self.column(j) {
            for (r, a) in alpha.iter_mut().enumerate() {
                let b = self.binv[r * m + k];
                if b != 0.0 {
                    *a += b * v;
                }
            }
        }
        alpha
    }

    /// Runs simplex pivots allowing only columns `< allowed` to enter.
    fn optimize(&mut self, allowed: usize) -> Result<LpStatus> {
        let tol = self.opts.pivot_tolerance;
        loop {
            let Some(enter) = (0..allowed).find(|&j| self.reduced_cost(j) < -tol) else {
                return Ok(LpStatus::Optimal);
            };
            let alpha = self.ftran(enter);
            let mut leave: Option<(usize, f64)> = None;
            for (r, &a) in alpha.iter().enumerate() {
                if a > tol && !self.frozen[r] {
                    let ratio = self.xb[r].max(0.0) / a;
                    let better = match leave {
                        None => true,
                        Some((lr, best)) => {
                            ratio < best - 1e-12 || (ratio <= best + 1e-12 && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((row, _)) = leave else {
                return Ok(LpStatus::Unbounded);
            };
            if self.pivots >= self.opts.max_pivots {
                return Err(Error::Resource {
                    what: "simplex pivots",
                    needed: self.pivots as u128 + 1,
                    limit: self.opts.max_pivots as u128,
                    hint: "",
                });
            }
            self.pivot(row, enter, &alpha)?;
        }
    }

    fn pivot(&mut self, row: usize, col: usize, alpha: &[f64]) -> Result<()> {
        let m = self.rows;
        let z_enter = self.reduced_cost(col);
        let p = alpha[row];
        let (before, rest) = self.binv.split_at_mut(row * m);
        let (prow, after) = rest.split_at_mut(m);
        prow.iter_mut().for_each(|v| *v /= p);
        let theta = self.xb[row] / p;
        for (r, target) in before.chunks_exact_mut(m).chain(after.chunks_exact_mut(m)).enumerate() {
            let r = if r < row { r } else { r + 1 };
            let f = alpha[r];
            if f != 0.0 {
                for (t, &pv) in target.iter_mut().zip(prow.iter()) {
                    if pv != 0.0 {
                        *t -= f * pv;
                    }
                }
                self.xb[r] -= f * theta;
            }
        }
        self.xb[row] = theta;
        for (yk, &pv) in self.y.iter_mut().zip(prow.iter()) {
            *yk -= z_enter * pv;
        }
        self.basis[row] = col;
        self.pivots += 1;
        self.since_refactor += 1;
        if self.since_refactor >= self.opts.refactor_every {
            self.refactor()?;
        }
        Ok(())
    }

    /// Rebuilds B⁻¹, x_B and the duals from the basis columns.
    fn refactor(&mut self) -> Result<()> {
        let m = self.rows;
        self.since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        // Gauss-Jordan on [B | I] with partial pivoting.
        let w = 2 * m;
        let mut aug = vec![0.0; m * w];
        for (c, &j) in self.basis.iter().enumerate() {
            let (start, end) = (self.col_start[j], self.col_start[j + 1]);
            for k in start..end {
                aug[self.col_row[k] * w + c] = self.col_val[k];
            }
        }
        for r in 0..m {
            aug[r * w + m + r] = 1.0;
        }
        for c in 0..m {
            let piv = (c..m)
                .max_by(|&a, &b| aug[a * w + c].abs().total_cmp(&aug[b * w + c].abs()))
                .unwrap_or(c);
            if aug[piv * w + c].abs() < 1e-12 {
                return Err(Error::Domain("simplex basis became singular".into()));
            }
            if piv != c {
                for k in 0..w {
                    aug.swap(piv * w + k, c * w + k);
                }
            }
            let p = aug[c * w + c];
            aug[c * w..(c + 1) * w].iter_mut().for_each(|v| *v /= p);
            let (before, rest) = aug.split_at_mut(c * w);
            let (prow, after) = rest.split_at_mut(w);
            for target in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
                let f = target[c];
                if f != 0.0 {
                    for (t, &pv) in target.iter_mut().zip(prow.iter()) {
                        if pv != 0.0 {
                            *t -= f * pv;
                        }
                    }
                }
            }
        }
        // Row c of the right half is row c of B⁻¹ (basis position c).
        for r in 0..m {
            self.binv[r * m..(r + 1) * m].copy_from_slice(&aug[r * w + m..(r + 1) * w]);
        }
        for r in 0..m {
            self.xb[r] = (0..m).map(|k| self.binv[r * m + k] * self.rhs[k]).sum();
        }
        self.recompute_duals();
        Ok(())
    }

    /// After a feasible phase one, pivots artificial variables out of the
    /// basis (their value is zero); rows with no other pivot candidate are
    /// linearly redundant and keep their artificial frozen at zero.
    fn drive_out_artificials(&mut self) -> Result<()> {
        let m = self.rows;
        for r in 0..m {
            if self.basis[r] < self.first_artificial {
                continue;
            }
            let row = &self.binv[r * m..(r + 1) * m];
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.first_artificial {
                if self.basis.contains(&j) {
                    continue;
                }
                let v: f64 = self.column(j).map(|(k, a)| row[k] * a).sum();
                if v.abs() > self.opts.pivot_tolerance && best.is_none_or(|(_, b)| v.abs() > b) {
                    best = Some((j, v.abs()));
                }
            }
            match best {
                Some((j, _)) => {
                    let alpha = self.ftran(j);
                    self.pivot(r, j, &alpha)?;
                }
                None => self.frozen[r] = true,
            }
        }
        Ok(())
    }

    fn primal(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < n {
                x[b] = self.xb[r].max(0.0);
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::FEASIBILITY_TOLERANCE;

    fn lp(obj: &[f64], rows: &[(&[f64], Relation, f64)]) -> LinearProgram {
        let mut lp = LinearProgram::new(obj.to_vec());
        for (c, r, b) in rows {
            lp.add_constraint(c.to_vec(), *r, *b).unwrap();
        }
        lp
    }

    #[test]
    fn single_bound() {
        let s = solve_lp(&lp(&[1.0], &[(&[1.0], Relation::Le, 1.0)])).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn textbook_two_variable() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
        let p = lp(
            &[3.0, 5.0],
            &[
                (&[1.0, 0.0], Relation::Le, 4.0),
                (&[0.0, 2.0], Relation::Le, 12.0),
                (&[3.0, 2.0], Relation::Le, 18.0),
            ],
        );
        let s = solve_lp(&p).unwrap();
        assert!((s.objective - 36.0).abs() < 1e-9);
        assert!((s.values[0] - 2.0).abs() < 1e-9 && (s.values[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows_use_phase_one() {
        // max x + 2y, x + y = 2, x ≥ 0.5, x − y ≤ 0.25 → (0.5, 1.5)
        let p = lp(
            &[1.0, 2.0],
            &[
                (&[1.0, 1.0], Relation::Eq, 2.0),
                (&[1.0, 0.0], Relation::Ge, 0.5),
                (&[1.0, -1.0], Relation::Le, 0.25),
            ],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 3.5).abs() < 1e-9, "{s:?}");
        assert!(p.max_violation(&s.values) <= FEASIBILITY_TOLERANCE);
    }

    #[test]
    fn negative_rhs_rows_are_flipped() {
        // −x ≤ −1 means x ≥ 1; max −x → −1
        let s = solve_lp(&lp(&[-1.0], &[(&[-1.0], Relation::Le, -1.0)])).unwrap();
        assert!((s.objective + 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let s = solve_lp(&lp(&[1.0], &[(&[1.0], Relation::Le, 1.0), (&[1.0], Relation::Ge, 2.0)])).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
        assert!(s.optimum().is_err());
        let s = solve_lp(&lp(&[1.0, 0.0], &[(&[0.0, 1.0], Relation::Le, 1.0)])).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        let p = lp(
            &[1.0, 1.0],
            &[
                (&[1.0, 1.0], Relation::Eq, 1.0),
                (&[2.0, 2.0], Relation::Eq, 2.0),
                (&[1.0, 0.0], Relation::Le, 0.3),
            ],
        );
        let s = solve_lp(&p).unwrap();
        assert!((s.objective - 1.0).abs() < 1e-9);
        assert!(p.max_violation(&s.values) <= FEASIBILITY_TOLERANCE);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Beale's cycling example (cycles under Dantzig's rule without anti-cycling).
        let p = lp(
            &[0.75, -150.0, 0.02, -6.0],
            &[
                (&[0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0),
                (&[0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0),
                (&[0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0),
            ],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 0.05).abs() < 1e-9, "{s:?}");
    }

    #[test]
    fn pivot_limit_is_a_resource_error() {
        let p = lp(
            &[1.0, 1.0],
            &[(&[1.0, 0.0], Relation::Le, 1.0), (&[0.0, 1.0], Relation::Le, 1.0)],
        );
        let opts = SimplexOptions {
            max_pivots: 1,
            ..Default::default()
        };
        assert!(matches!(solve_lp_with(&p, opts), Err(Error::Resource { .. })));
    }
}
