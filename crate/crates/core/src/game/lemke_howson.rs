//! Lemke-Howson complementary pivoting for bimatrix games of any size.
//!
//! Payoffs are shifted to be strictly positive and the game is written as
//! the pair of polytopes
//!
//! ```text
//! P = { x >= 0 : Bᵀx <= 1 }      labels: i  (x_i = 0),  m + j ((Bᵀx)_j = 1)
//! Q = { y >= 0 : A y <= 1 }      labels: i  ((Ay)_i = 1), m + j (y_j = 0)
//! ```
//!
//! Starting from a completely labelled vertex pair, one label is dropped and
//! the duplicate label produced by each pivot is dropped in the other
//! polytope until the missing label is picked up again. Ties in the ratio
//! test are broken lexicographically so degenerate games terminate.

use thiserror::Error;

const PIVOT_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PivotError {
    #[error("payoff matrices must be non-empty with matching shapes")]
    Shape,
    #[error("payoffs must be finite")]
    NonFinite,
    #[error("label {0} is out of range")]
    Label(usize),
    #[error("pivoting did not terminate after {0} steps")]
    Cycling(usize),
    #[error("unbounded ray in the ratio test")]
    Unbounded,
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let data = rows.iter().flat_map(|row| row.iter().copied()).collect();
        Self { rows: r, cols: c, data }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone)]
struct Tableau {
    /// Each row: coefficients for every variable followed by the right-hand side.
    rows: Vec<Vec<f64>>,
    /// Basic variable of each row.
    basis: Vec<usize>,
    /// Label carried by each variable.
    labels: Vec<usize>,
    /// Columns of the initial (slack) basis, used for lexicographic ties.
    slack_start: usize,
}

impl Tableau {
    /// `[M | I | 1]` with the slack variables basic.
    fn new(m: &[Vec<f64>], structural_labels: Vec<usize>, slack_labels: Vec<usize>) -> Self {
        let nrows = m.len();
        let nstruct = structural_labels.len();
        let nvars = nstruct + nrows;
        let rows = m
            .iter()
            .enumerate()
            .map(|(i, coeffs)| {
                let mut row = vec![0.0; nvars + 1];
                row[..nstruct].copy_from_slice(coeffs);
                row[nstruct + i] = 1.0;
                row[nvars] = 1.0;
                row
            })
            .collect();
        let mut labels = structural_labels;
        labels.extend(slack_labels);
        Self { rows, basis: (nstruct..nvars).collect(), labels, slack_start: nstruct }
    }

    fn nvars(&self) -> usize {
        self.labels.len()
    }

    fn var_with_label(&self, label: usize) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    fn is_basic(&self, var: usize) -> bool {
        self.basis.contains(&var)
    }

    /// Brings `enter` into the basis and returns the variable that left.
    fn pivot(&mut self, enter: usize) -> Result<usize, PivotError> {
        let rhs = self.nvars();
        let mut best: Option<usize> = None;
        for (r, row) in self.rows.iter().enumerate() {
            let coef = row[enter];
            if coef <= PIVOT_EPS {
                continue;
            }
            best = match best {
                None => Some(r),
                Some(b) => {
                    if self.lex_less(r, b, enter, rhs) {
                        Some(r)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        let pr = best.ok_or(PivotError::Unbounded)?;
        let pivot_val = self.rows[pr][enter];
        for v in self.rows[pr].iter_mut() {
            *v /= pivot_val;
        }
        let pivot_row = self.rows[pr].clone();
        for (r, row) in self.rows.iter_mut().enumerate() {
            if r == pr {
                continue;
            }
            let f = row[enter];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[enter] = 0.0;
            }
        }
        let leaving = self.basis[pr];
        self.basis[pr] = enter;
        Ok(leaving)
    }

    /// Lexicographic comparison of `(rhs, B⁻¹ row) / coef` for rows `a` and `b`.
    fn lex_less(&self, a: usize, b: usize, enter: usize, rhs: usize) -> bool {
        let (ra, rb) = (&self.rows[a], &self.rows[b]);
        let (ca, cb) = (ra[enter], rb[enter]);
        let cols = std::iter::once(rhs).chain(self.slack_start..rhs);
        for c in cols {
            let va = ra[c] / ca;
            let vb = rb[c] / cb;
            let scale = va.abs().max(vb.abs()).max(1.0);
            if (va - vb).abs() > 1e-12 * scale {
                return va < vb;
            }
        }
        false
    }

    /// Values of the first `n` (structural) variables at the current vertex.
    fn structural(&self, n: usize) -> Vec<f64> {
        let rhs = self.nvars();
        let mut out = vec![0.0; n];
        for (r, &var) in self.basis.iter().enumerate() {
            if var < n {
                out[var] = self.rows[r][rhs].max(0.0);
            }
        }
        out
    }
}

/// Vertex pair of the two best-response polytopes.
#[derive(Debug, Clone)]
pub struct LemkeHowson {
    m: usize,
    n: usize,
    p: Tableau,
    q: Tableau,
}

/// Mixed strategies of the row and column player.
pub type Equilibrium = (Vec<f64>, Vec<f64>);

impl LemkeHowson {
    /// Positions the walk at the artificial equilibrium `(0, 0)`.
    pub fn new(a: &Matrix, b: &Matrix) -> Result<Self, PivotError> {
        if a.rows == 0 || a.cols == 0 || a.rows != b.rows || a.cols != b.cols {
            return Err(PivotError::Shape);
        }
        if a.data.iter().chain(&b.data).any(|v| !v.is_finite()) {
            return Err(PivotError::NonFinite);
        }
        let (m, n) = (a.rows, a.cols);
        let shift_a = 1.0 - a.min();
        let shift_b = 1.0 - b.min();
        // Q: A y + r = 1
        let qa: Vec<Vec<f64>> = (0..m).map(|i| (0..n).map(|j| a.get(i, j) + shift_a).collect()).collect();
        let q = Tableau::new(&qa, (m..m + n).collect(), (0..m).collect());
        // P: Bᵀ x + s = 1
        let pb: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| b.get(i, j) + shift_b).collect()).collect();
        let p = Tableau::new(&pb, (0..m).collect(), (m..m + n).collect());
        Ok(Self { m, n, p, q })
    }

    /// Follows the path that drops `label` from the current vertex pair.
    /// Returns `None` when the path ends at the artificial equilibrium.
    pub fn walk(&mut self, label: usize) -> Result<Option<Equilibrium>, PivotError> {
        if label >= self.m + self.n {
            return Err(PivotError::Label(label));
        }
        let start_in_p = {
            let var = self.p.var_with_label(label).expect("every label has a variable");
            !self.p.is_basic(var)
        };
        let mut in_p = start_in_p;
        let mut current = label;
        let limit = 50 * (self.m + self.n) + 100;
        for _ in 0..limit {
            let tab = if in_p { &mut self.p } else { &mut self.q };
            let var = tab.var_with_label(current).expect("every label has a variable");
            let leaving = tab.pivot(var)?;
            let leaving_label = tab.labels[leaving];
            if leaving_label == label {
                return Ok(self.current());
            }
            current = leaving_label;
            in_p = !in_p;
        }
        Err(PivotError::Cycling(limit))
    }

    fn current(&self) -> Option<Equilibrium> {
        let x = self.p.structural(self.m);
        let y = self.q.structural(self.n);
        let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
        if sx <= 0.0 || sy <= 0.0 {
            return None;
        }
        Some((x.iter().map(|v| v / sx).collect(), y.iter().map(|v| v / sy).collect()))
    }
}

/// Runs Lemke-Howson from the artificial equilibrium dropping `label`.
pub fn lemke_howson(a: &Matrix, b: &Matrix, label: usize) -> Result<Equilibrium, PivotError> {
    let mut lh = LemkeHowson::new(a, b)?;
    lh.walk(label)?.ok_or(PivotError::Unbounded)
}
