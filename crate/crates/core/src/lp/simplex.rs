//! Dense tableau simplex for feasibility problems `A_eq x = b_eq`,
//! `A_le x <= b_le`, `x >= 0`, with Bland's pivoting rule.

/// Sparse row `(column, coefficient)` with its right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Problem {
    pub columns: usize,
    pub equalities: Vec<Row>,
    pub inequalities: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOne {
    /// Minimum total infeasibility (sum of artificial variables).
    pub residual: f64,
    /// Structural values of the final basic solution.
    pub x: Vec<f64>,
    pub pivots: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationLimit(pub usize);

const PIVOT_EPS: f64 = 1e-9;

struct Tableau {
    width: usize,
    rows: usize,
    data: Vec<f64>,
    /// Objective row, same width; last entry is minus the objective value.
    obj: Vec<f64>,
    basis: Vec<usize>,
    /// Columns that may enter the basis.
    eligible: Vec<bool>,
    /// Artificial columns start here.
    first_artificial: usize,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs_col(&self) -> usize {
        self.width - 1
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let inv = 1.0 / self.at(pr, pc);
        let (before, rest) = self.data.split_at_mut(pr * w);
        let (prow, after) = rest.split_at_mut(w);
        for v in prow.iter_mut() {
            *v *= inv;
        }
        prow[pc] = 1.0;
        let reduce = |row: &mut [f64]| {
            let f = row[pc];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(prow.iter()) {
                    if *p != 0.0 {
                        *v -= f * p;
                    }
                }
                row[pc] = 0.0;
            }
        };
        before.chunks_mut(w).for_each(reduce);
        after.chunks_mut(w).for_each(reduce);
        reduce(&mut self.obj);
        self.basis[pr] = pc;
    }

    /// Bland: lowest-index improving column, ratio ties to lowest basic index.
    fn run(&mut self, max_pivots: usize) -> Result<usize, IterationLimit> {
        let rhs = self.rhs_col();
        let mut pivots = 0;
        loop {
            let Some(enter) = (0..rhs).find(|&c| self.eligible[c] && self.obj[c] < -PIVOT_EPS) else {
                return Ok(pivots);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, enter);
                if a > PIVOT_EPS {
                    let ratio = self.at(r, rhs) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12
                                || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            // Phase one is bounded below by zero, so a column without a leaving
            // row only appears through round-off; skip it.
            let Some((pr, _)) = leave else {
                self.eligible[enter] = false;
                continue;
            };
            if pivots == max_pivots {
                return Err(IterationLimit(max_pivots));
            }
            let left = self.basis[pr];
            self.pivot(pr, enter);
            pivots += 1;
            if left >= self.first_artificial {
                self.eligible[left] = false;
            }
        }
    }
}

/// Minimize the total artificial infeasibility.
pub fn phase_one(problem: &Problem, max_pivots: usize) -> Result<PhaseOne, IterationLimit> {
    let n = problem.columns;
    let slacks = problem.inequalities.len();
    let rows: Vec<(&Row, Option<usize>)> = problem
        .equalities
        .iter()
        .map(|r| (r, None))
        .chain(
            problem
                .inequalities
                .iter()
                .enumerate()
                .map(|(s, r)| (r, Some(n + s))),
        )
        .collect();
    let m = rows.len();
    // A row needs an artificial unless its slack can start in the basis.
    let needs_art: Vec<bool> = rows
        .iter()
        .map(|(r, slack)| slack.is_none() || r.rhs < 0.0)
        .collect();
    let arts = needs_art.iter().filter(|&&b| b).count();
    let base = n + slacks;
    let width = base + arts + 1;
    let mut data = vec![0.0; m * width];
    let mut basis = vec![0; m];
    let mut obj = vec![0.0; width];
    let mut next_art = base;
    for (r, (row, slack)) in rows.iter().enumerate() {
        let sign = if row.rhs < 0.0 { -1.0 } else { 1.0 };
        let line = &mut data[r * width..(r + 1) * width];
        for &(c, v) in &row.coeffs {
            line[c] += sign * v;
        }
        if let Some(s) = slack {
            line[*s] = sign;
        }
        line[width - 1] = sign * row.rhs;
        if needs_art[r] {
            line[next_art] = 1.0;
            basis[r] = next_art;
            next_art += 1;
            for c in 0..base {
                obj[c] -= line[c];
            }
            obj[width - 1] -= line[width - 1];
        } else {
            basis[r] = slack.expect("rows without artificials have slacks");
        }
    }
    let mut t = Tableau {
        width,
        rows: m,
        data,
        obj,
        basis,
        eligible: vec![true; width - 1],
        first_artificial: base,
    };
    let pivots = t.run(max_pivots)?;
    let residual = (-t.obj[width - 1]).max(0.0);
    let mut x = vec![0.0; n];
    for (r, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.at(r, width - 1);
        }
    }
    Ok(PhaseOne { residual, x, pivots })
}
