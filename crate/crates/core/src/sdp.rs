//! Strict-LMI feasibility: find matrix variables making symmetric affine
//! block matrices negative definite with margin.
//!
//! Strict inequalities are realized as `M(x) <= -eps I`. The solver folds all
//! constraints into the scalarized program `min t s.t. M_k(x) + eps_k I <= t I`
//! (each constraint pre-scaled by its constant-block norm) and follows the
//! log-det barrier central path with damped Newton steps. A point with `t < 0`
//! is a feasible assignment with margin; a central-path lower bound above zero
//! is an operational infeasibility verdict. Problems here are small (blocks
//! of a few dozen rows), so all linear algebra is dense.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

use crate::linalg;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("malformed problem: {0}")]
    Dimension(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

/// A matrix decision variable.
#[derive(Debug, Clone)]
pub struct VarSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Symmetric variables expose only their upper triangle as free scalars.
    pub symmetric: bool,
    /// Adds the constraint `-X <= -eps I`, i.e. `X >= eps I`.
    pub require_pd: bool,
}

/// One affine placement inside a block constraint:
/// `block(row, col) += left * X * right` (or `X^T` when `transpose`).
///
/// Off-diagonal placements implicitly mirror their transpose into
/// `block(col, row)`, keeping the constraint symmetric.
#[derive(Debug, Clone)]
pub struct Term {
    pub var: usize,
    pub block_row: usize,
    pub block_col: usize,
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
    pub transpose: bool,
}

/// A symmetric affine block constraint `constant + terms(x) <= -eps I`.
#[derive(Debug, Clone)]
pub struct LmiConstraint {
    pub name: String,
    pub block_sizes: Vec<usize>,
    /// Fully assembled constant part, symmetric, `sum(block_sizes)` square.
    pub constant: DMatrix<f64>,
    pub terms: Vec<Term>,
}

impl LmiConstraint {
    pub fn dim(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    fn block_offset(&self, idx: usize) -> usize {
        self.block_sizes[..idx].iter().sum()
    }
}

/// A strict-LMI feasibility problem.
#[derive(Debug, Clone, Default)]
pub struct LmiProblem {
    pub vars: Vec<VarSpec>,
    pub constraints: Vec<LmiConstraint>,
    /// Margin; `None` selects `1e-6 * max constant-block norm`.
    pub epsilon: Option<f64>,
}

impl LmiProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        symmetric: bool,
        require_pd: bool,
    ) -> usize {
        assert!(!symmetric || rows == cols, "symmetric variables must be square");
        self.vars.push(VarSpec {
            name: name.to_string(),
            rows,
            cols,
            symmetric,
            require_pd,
        });
        self.vars.len() - 1
    }

    pub fn add_constraint(
        &mut self,
        name: &str,
        block_sizes: Vec<usize>,
        constant: DMatrix<f64>,
    ) -> usize {
        self.constraints.push(LmiConstraint {
            name: name.to_string(),
            block_sizes,
            constant,
            terms: Vec::new(),
        });
        self.constraints.len() - 1
    }

    #[allow(clippy::too_many_arguments)]
    pub fn add_term(
        &mut self,
        constraint: usize,
        var: usize,
        block_row: usize,
        block_col: usize,
        left: DMatrix<f64>,
        right: DMatrix<f64>,
        transpose: bool,
    ) {
        self.constraints[constraint].terms.push(Term {
            var,
            block_row,
            block_col,
            left,
            right,
            transpose,
        });
    }

    fn validate(&self) -> Result<(), SdpError> {
        for (k, c) in self.constraints.iter().enumerate() {
            let dim = c.dim();
            if c.constant.nrows() != dim || c.constant.ncols() != dim {
                return Err(SdpError::Dimension(format!(
                    "constraint {k} constant is {}x{}, blocks say {dim}",
                    c.constant.nrows(),
                    c.constant.ncols()
                )));
            }
            let sym_defect = (c.constant.clone() - c.constant.transpose()).norm();
            if sym_defect > 1e-9 * c.constant.norm().max(1.0) {
                return Err(SdpError::Dimension(format!(
                    "constraint {k} constant is not symmetric (defect {sym_defect:.3e})"
                )));
            }
            for (ti, term) in c.terms.iter().enumerate() {
                let var = self.vars.get(term.var).ok_or_else(|| {
                    SdpError::Dimension(format!("constraint {k} term {ti}: unknown variable"))
                })?;
                if term.block_row >= c.block_sizes.len() || term.block_col >= c.block_sizes.len() {
                    return Err(SdpError::Dimension(format!(
                        "constraint {k} term {ti}: block index out of range"
                    )));
                }
                let (vr, vc) = if term.transpose {
                    (var.cols, var.rows)
                } else {
                    (var.rows, var.cols)
                };
                let br = c.block_sizes[term.block_row];
                let bc = c.block_sizes[term.block_col];
                if term.left.nrows() != br
                    || term.left.ncols() != vr
                    || term.right.nrows() != vc
                    || term.right.ncols() != bc
                {
                    return Err(SdpError::Dimension(format!(
                        "constraint {k} term {ti}: factor shapes do not chain to {br}x{bc}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Assembles constraint `idx` for a concrete assignment, independently of
    /// any solver state. Intended for re-verification.
    pub fn evaluate(
        &self,
        idx: usize,
        assignment: &[(String, DMatrix<f64>)],
    ) -> Result<DMatrix<f64>, SdpError> {
        let c = self
            .constraints
            .get(idx)
            .ok_or_else(|| SdpError::Dimension(format!("no constraint {idx}")))?;
        let mut m = c.constant.clone();
        for term in &c.terms {
            let var = &self.vars[term.var];
            let value = assignment
                .iter()
                .find(|(n, _)| *n == var.name)
                .map(|(_, v)| v)
                .ok_or_else(|| {
                    SdpError::Dimension(format!("assignment missing variable {}", var.name))
                })?;
            let placed = if term.transpose {
                &term.left * value.transpose() * &term.right
            } else {
                &term.left * value * &term.right
            };
            let (r0, c0) = (c.block_offset(term.block_row), c.block_offset(term.block_col));
            let mut view = m.view_mut((r0, c0), placed.shape());
            view += &placed;
            if term.block_row != term.block_col {
                let t = placed.transpose();
                let mut mirror = m.view_mut((c0, r0), t.shape());
                mirror += &t;
            }
        }
        Ok(linalg::symmetrize(&m))
    }
}

/// A feasible assignment together with its achieved margins.
#[derive(Debug, Clone)]
pub struct LmiSolution {
    pub assignment: Vec<(String, DMatrix<f64>)>,
    /// `lambda_max` of each assembled constraint, original units
    /// (PD-requirement constraints appended after the explicit ones).
    pub margins: Vec<f64>,
    /// Margin the constraints were solved at.
    pub epsilon: f64,
    pub newton_iterations: usize,
    /// Final scalarized objective (normalized units; negative means margins met).
    pub t_final: f64,
}

impl LmiSolution {
    pub fn get(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.assignment.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }
}

/// Outcome of a feasibility run.
#[derive(Debug, Clone)]
pub enum Feasibility {
    Feasible(LmiSolution),
    /// No point meets the margin; `best_margin` is the smallest scalarized
    /// constraint level reached (normalized units, positive means the margin
    /// was missed), `lower_bound` its certified floor.
    Infeasible { best_margin: f64, lower_bound: f64 },
}

/// Interior-point iteration knobs.
#[derive(Debug, Clone)]
pub struct SolverSettings {
    pub max_stages: usize,
    pub max_newton_per_stage: usize,
    pub tau0: f64,
    pub tau_growth: f64,
    pub newton_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_stages: 64,
            max_newton_per_stage: 120,
            tau0: 1.0,
            tau_growth: 8.0,
            newton_tol: 1e-9,
        }
    }
}

struct ScalarBasis {
    /// Variable index, (row, col) of the represented entry.
    var: usize,
    i: usize,
    j: usize,
}

/// Scaled working form of the problem.
struct Working {
    /// Constraint matrices in original units.
    consts: Vec<DMatrix<f64>>,
    derivs: Vec<Vec<DMatrix<f64>>>,
    /// Per-constraint scale and normalized margin.
    scales: Vec<f64>,
    etas: Vec<f64>,
    epsilon: f64,
    basis: Vec<ScalarBasis>,
    nu: f64,
}

fn basis_matrix(spec: &VarSpec, i: usize, j: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(spec.rows, spec.cols);
    e[(i, j)] = 1.0;
    if spec.symmetric && i != j {
        e[(j, i)] = 1.0;
    }
    e
}

fn place_term(term: &Term, value: &DMatrix<f64>, dim: usize, c: &LmiConstraint) -> DMatrix<f64> {
    let placed = if term.transpose {
        &term.left * value.transpose() * &term.right
    } else {
        &term.left * value * &term.right
    };
    let (r0, c0) = (c.block_offset(term.block_row), c.block_offset(term.block_col));
    let mut out = DMatrix::zeros(dim, dim);
    out.view_mut((r0, c0), placed.shape()).copy_from(&placed);
    if term.block_row != term.block_col {
        let t = placed.transpose();
        let mut mirror = out.view_mut((c0, r0), t.shape());
        mirror += &t;
    }
    out
}

fn build_working(problem: &LmiProblem) -> Result<Working, SdpError> {
    problem.validate()?;

    // PD requirements become constraints of their own: -X <= -eps I.
    let mut constraints: Vec<LmiConstraint> = problem.constraints.clone();
    for (vi, var) in problem.vars.iter().enumerate() {
        if var.require_pd {
            constraints.push(LmiConstraint {
                name: format!("pd:{}", var.name),
                block_sizes: vec![var.rows],
                constant: DMatrix::zeros(var.rows, var.rows),
                terms: vec![Term {
                    var: vi,
                    block_row: 0,
                    block_col: 0,
                    left: -DMatrix::<f64>::identity(var.rows, var.rows),
                    right: DMatrix::identity(var.rows, var.rows),
                    transpose: false,
                }],
            });
        }
    }
    if constraints.is_empty() {
        return Err(SdpError::Dimension("problem has no constraints".into()));
    }

    let mut basis = Vec::new();
    for (vi, var) in problem.vars.iter().enumerate() {
        if var.symmetric {
            for i in 0..var.rows {
                for j in i..var.cols {
                    basis.push(ScalarBasis { var: vi, i, j });
                }
            }
        } else {
            for i in 0..var.rows {
                for j in 0..var.cols {
                    basis.push(ScalarBasis { var: vi, i, j });
                }
            }
        }
    }
    if basis.is_empty() {
        return Err(SdpError::Dimension("problem has no variables".into()));
    }

    let global_scale = constraints
        .iter()
        .map(|c| linalg::spectral_norm(&c.constant))
        .fold(0.0_f64, f64::max);
    let epsilon = problem.epsilon.unwrap_or(1e-6 * global_scale.max(1.0));
    if !(epsilon > 0.0) {
        return Err(SdpError::Dimension("margin epsilon must be positive".into()));
    }

    let mut consts = Vec::with_capacity(constraints.len());
    let mut derivs = Vec::with_capacity(constraints.len());
    let mut scales = Vec::with_capacity(constraints.len());
    let mut etas = Vec::with_capacity(constraints.len());
    let mut nu = 0.0;
    for c in &constraints {
        let dim = c.dim();
        nu += dim as f64;
        let mut per_comp = vec![DMatrix::zeros(dim, dim); basis.len()];
        for term in &c.terms {
            for (ci, b) in basis.iter().enumerate() {
                if b.var != term.var {
                    continue;
                }
                let e = basis_matrix(&problem.vars[b.var], b.i, b.j);
                per_comp[ci] += place_term(term, &e, dim, c);
            }
        }
        let per_comp: Vec<_> = per_comp.iter().map(linalg::symmetrize).collect();
        let norm = linalg::spectral_norm(&c.constant);
        let scale = if norm > 1e-12 * global_scale.max(1.0) {
            norm
        } else {
            global_scale.max(1.0)
        };
        scales.push(scale);
        etas.push(epsilon / scale);
        consts.push(linalg::symmetrize(&c.constant));
        derivs.push(per_comp);
    }

    Ok(Working {
        consts,
        derivs,
        scales,
        etas,
        epsilon,
        basis,
        nu,
    })
}

impl Working {
    /// `t I - (M_k(x)/s_k + eta_k I)` for every constraint; `None` if any
    /// slack fails the PD test.
    fn slacks(&self, x: &DVector<f64>, t: f64) -> Option<Vec<Cholesky<f64, nalgebra::Dyn>>> {
        let mut out = Vec::with_capacity(self.consts.len());
        for k in 0..self.consts.len() {
            let s = self.slack_matrix(k, x, t);
            out.push(Cholesky::new(s)?);
        }
        Some(out)
    }

    fn slack_matrix(&self, k: usize, x: &DVector<f64>, t: f64) -> DMatrix<f64> {
        let dim = self.consts[k].nrows();
        let mut m = self.consts[k].clone();
        for (ci, d) in self.derivs[k].iter().enumerate() {
            if x[ci] != 0.0 {
                m += d * x[ci];
            }
        }
        m /= self.scales[k];
        for i in 0..dim {
            m[(i, i)] += self.etas[k] - t;
        }
        -m
    }

    fn objective(&self, chols: &[Cholesky<f64, nalgebra::Dyn>], t: f64, tau: f64) -> f64 {
        let mut f = tau * t;
        for ch in chols {
            let l = ch.l_dirty();
            let mut logdet = 0.0;
            for i in 0..l.nrows() {
                logdet += l[(i, i)].ln();
            }
            f -= 2.0 * logdet;
        }
        f
    }

    /// Worst original-unit margin `lambda_max(M_k(x))` per constraint.
    fn margins(&self, x: &DVector<f64>) -> Vec<f64> {
        (0..self.consts.len())
            .map(|k| {
                let mut m = self.consts[k].clone();
                for (ci, d) in self.derivs[k].iter().enumerate() {
                    if x[ci] != 0.0 {
                        m += d * x[ci];
                    }
                }
                linalg::max_eig_sym(&m)
            })
            .collect()
    }

    fn unflatten(&self, problem: &LmiProblem, x: &DVector<f64>) -> Vec<(String, DMatrix<f64>)> {
        let mut values: Vec<DMatrix<f64>> = problem
            .vars
            .iter()
            .map(|v| DMatrix::zeros(v.rows, v.cols))
            .collect();
        for (ci, b) in self.basis.iter().enumerate() {
            values[b.var][(b.i, b.j)] = x[ci];
            if problem.vars[b.var].symmetric {
                values[b.var][(b.j, b.i)] = x[ci];
            }
        }
        problem
            .vars
            .iter()
            .zip(values)
            .map(|(v, m)| (v.name.clone(), m))
            .collect()
    }
}

/// Searches for an assignment with every constraint `<= -eps I`.
pub fn solve_feasibility(problem: &LmiProblem) -> Result<Feasibility, SdpError> {
    solve_feasibility_with(problem, &SolverSettings::default())
}

pub fn solve_feasibility_with(
    problem: &LmiProblem,
    settings: &SolverSettings,
) -> Result<Feasibility, SdpError> {
    let w = build_working(problem)?;
    let nvars = w.basis.len();

    let mut x = DVector::zeros(nvars);
    let mut t = (0..w.consts.len())
        .map(|k| {
            let mut m = w.consts[k].clone() / w.scales[k];
            for i in 0..m.nrows() {
                m[(i, i)] += w.etas[k];
            }
            linalg::max_eig_sym(&m)
        })
        .fold(f64::NEG_INFINITY, f64::max)
        + 1.0;

    let mut tau = settings.tau0;
    let mut best_t = t;
    let mut iterations = 0usize;

    let finish_feasible = |w: &Working, x: &DVector<f64>, t: f64, iters: usize| {
        let assignment = w.unflatten(problem, x);
        let margins = w.margins(x);
        Feasibility::Feasible(LmiSolution {
            assignment,
            margins,
            epsilon: w.epsilon,
            newton_iterations: iters,
            t_final: t,
        })
    };

    for _stage in 0..settings.max_stages {
        let mut stage_converged = false;
        for _ in 0..settings.max_newton_per_stage {
            iterations += 1;
            let (grad, hess) = newton_system(&w, &x, t, tau)?;
            let dir = solve_newton(&hess, &grad)?;
            let decrement2 = -grad.dot(&dir);
            if !decrement2.is_finite() {
                return Err(SdpError::NumericalFailure(
                    "non-finite Newton decrement".into(),
                ));
            }
            if decrement2 <= settings.newton_tol {
                stage_converged = true;
                break;
            }

            // Backtrack into the PD region, then on the objective.
            let chols_here = w
                .slacks(&x, t)
                .ok_or_else(|| SdpError::NumericalFailure("iterate left the cone".into()))?;
            let f_here = w.objective(&chols_here, t, tau);
            let slope = grad.dot(&dir);
            let mut alpha = 1.0f64;
            let mut moved = false;
            for _ in 0..60 {
                let xn = &x + dir.rows(0, nvars) * alpha;
                let tn = t + dir[nvars] * alpha;
                if let Some(chols) = w.slacks(&xn, tn) {
                    let fn_ = w.objective(&chols, tn, tau);
                    if fn_ <= f_here + 0.25 * alpha * slope {
                        x = xn;
                        t = tn;
                        moved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !moved {
                stage_converged = true;
                break;
            }
            best_t = best_t.min(t);
            if t <= -1e-10 {
                return Ok(finish_feasible(&w, &x, t, iterations));
            }
        }

        if t <= -1e-10 {
            return Ok(finish_feasible(&w, &x, t, iterations));
        }
        if stage_converged {
            let lower_bound = t - 1.1 * w.nu / tau - 1e-12;
            if lower_bound > 0.0 {
                return Ok(Feasibility::Infeasible {
                    best_margin: best_t,
                    lower_bound,
                });
            }
        }
        tau *= settings.tau_growth;
        if tau > 1e17 {
            break;
        }
    }

    Err(SdpError::NumericalFailure(format!(
        "no verdict at margin {:.3e} (best normalized level {:.3e})",
        w.epsilon, best_t
    )))
}

/// Gradient and Hessian of `tau * t - sum_k logdet(slack_k)` in `(x, t)`.
fn newton_system(
    w: &Working,
    x: &DVector<f64>,
    t: f64,
    tau: f64,
) -> Result<(DVector<f64>, DMatrix<f64>), SdpError> {
    let nvars = w.basis.len();
    let dim = nvars + 1;
    let mut grad = DVector::zeros(dim);
    grad[nvars] = tau;
    let mut hess = DMatrix::zeros(dim, dim);

    for k in 0..w.consts.len() {
        let s = w.slack_matrix(k, x, t);
        let eig = nalgebra::SymmetricEigen::new(s);
        let lmin = eig.eigenvalues.min();
        let lmax = eig.eigenvalues.max();
        // The line search keeps iterates inside the cone via Cholesky; the
        // eigensolver may still see a boundary-hugging slack as marginally
        // non-PD. Clamp rounding-level dips, fail on anything real.
        if !(lmin > -1e-14 * lmax.max(f64::MIN_POSITIVE)) {
            return Err(SdpError::NumericalFailure(
                "slack matrix lost positive definiteness".into(),
            ));
        }
        let floor = lmax.max(f64::MIN_POSITIVE) * 1e-18;
        let inv_roots = eig.eigenvalues.map(|l| 1.0 / l.max(floor).sqrt());
        let s_inv_half =
            &eig.eigenvectors * DMatrix::from_diagonal(&inv_roots) * eig.eigenvectors.transpose();

        // G_a = S^(-1/2) dS/da S^(-1/2); dS/dx_i = -D_i/s_k, dS/dt = I.
        let mut gs: Vec<DMatrix<f64>> = Vec::with_capacity(dim);
        for d in &w.derivs[k] {
            gs.push(&s_inv_half * d * &s_inv_half * (-1.0 / w.scales[k]));
        }
        gs.push(&s_inv_half * &s_inv_half);

        for (a, g) in gs.iter().enumerate() {
            grad[a] -= g.trace();
        }
        for a in 0..dim {
            for b in a..dim {
                let v = gs[a].dot(&gs[b]);
                hess[(a, b)] += v;
                if a != b {
                    hess[(b, a)] += v;
                }
            }
        }
    }
    Ok((grad, hess))
}

fn solve_newton(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Result<DVector<f64>, SdpError> {
    let dim = hess.nrows();
    let base = hess.trace().max(1e-300) / dim as f64;
    let mut ridge = 1e-13;
    for _ in 0..8 {
        let mut h = hess.clone();
        for i in 0..dim {
            h[(i, i)] += ridge * base;
        }
        if let Some(ch) = Cholesky::new(h) {
            return Ok(ch.solve(&(-grad)));
        }
        ridge *= 100.0;
    }
    Err(SdpError::NumericalFailure(
        "Newton system not positive definite".into(),
    ))
}
