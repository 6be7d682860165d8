//! Local-hidden-variable polytope membership by linear programming.
//!
//! The scenario has two settings per side and three outcomes (+, -, no
//! click), so the local polytope is the convex hull of 81 deterministic
//! vertices: 9 strategies per side, one outcome choice per setting. The
//! membership test is a phase-1 simplex feasibility solve over the vertex
//! weights with Bland's rule; 37 equality rows by 81 columns is small enough
//! that refactoring the basis every iteration is the simplest correct choice.

use crate::bell::BehaviorTable;
use crate::error::{Error, Result};
use crate::tolerances::LP_TOL;

pub const NUM_VERTICES: usize = 81;
pub const BEHAVIOR_DIM: usize = 36;

/// Flatten a behavior table to the 36-entry vector used by the LP.
pub fn flatten(behavior: &BehaviorTable) -> [f64; BEHAVIOR_DIM] {
    let mut v = [0.0; BEHAVIOR_DIM];
    for x in 0..2 {
        for y in 0..2 {
            for a in 0..3 {
                for b in 0..3 {
                    v[((x * 2 + y) * 3 + a) * 3 + b] = behavior.raw()[x][y][a][b];
                }
            }
        }
    }
    v
}

/// The deterministic local vertex where Alice answers `fa[x]` and Bob `fb[y]`
/// (outcome indices 0 = +, 1 = -, 2 = no click).
pub fn vertex_behavior(fa: [usize; 2], fb: [usize; 2]) -> BehaviorTable {
    let mut raw = [[[[0.0f64; 3]; 3]; 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            raw[x][y][fa[x]][fb[y]] = 1.0;
        }
    }
    BehaviorTable::from_raw(raw)
}

/// All 81 vertices, flattened, in a fixed enumeration order.
pub fn vertices() -> Vec<[f64; BEHAVIOR_DIM]> {
    let mut out = Vec::with_capacity(NUM_VERTICES);
    for fa0 in 0..3 {
        for fa1 in 0..3 {
            for fb0 in 0..3 {
                for fb1 in 0..3 {
                    out.push(flatten(&vertex_behavior([fa0, fa1], [fb0, fb1])));
                }
            }
        }
    }
    out
}

/// Result of the membership test.
#[derive(Debug, Clone)]
pub enum LhvMembership {
    /// Convex weights over the 81 vertices reproducing the behavior.
    Feasible { weights: Vec<f64> },
    /// Separating Bell functional: `functional . v <= local_bound` for every
    /// vertex while `functional . behavior = behavior_value > local_bound`.
    Infeasible {
        functional: Vec<f64>,
        local_bound: f64,
        behavior_value: f64,
    },
}

/// Decide whether `behavior` lies in the local polytope.
pub fn lhv_membership(behavior: &BehaviorTable) -> Result<LhvMembership> {
    behavior.validate()?;
    let p = flatten(behavior);
    let verts = vertices();

    // Equality system: vertex-weight combination matches all 36 entries plus
    // the normalization row.
    const M: usize = BEHAVIOR_DIM + 1;
    let n_total = NUM_VERTICES + M; // weights + artificials
    let mut cols: Vec<[f64; M]> = Vec::with_capacity(n_total);
    for v in &verts {
        let mut col = [0.0; M];
        col[..BEHAVIOR_DIM].copy_from_slice(v);
        col[BEHAVIOR_DIM] = 1.0;
        cols.push(col);
    }
    for i in 0..M {
        let mut col = [0.0; M];
        col[i] = 1.0;
        cols.push(col);
    }
    let mut b = [0.0; M];
    for (i, bi) in b.iter_mut().take(BEHAVIOR_DIM).enumerate() {
        if p[i] < -LP_TOL {
            return Err(Error::LpFailure(format!(
                "behavior entry {i} is negative: {}",
                p[i]
            )));
        }
        *bi = p[i].max(0.0);
    }
    b[BEHAVIOR_DIM] = 1.0;

    let cost: Vec<f64> = (0..n_total)
        .map(|j| if j >= NUM_VERTICES { 1.0 } else { 0.0 })
        .collect();

    let mut basis: Vec<usize> = (NUM_VERTICES..n_total).collect();

    let solve_basis = |basis: &[usize], rhs: &[f64; M], transpose: bool| -> Result<[f64; M]> {
        // Dense Gaussian elimination with partial pivoting on the basis
        // matrix (or its transpose).
        let mut a = [[0.0f64; M]; M];
        for (j, &col) in basis.iter().enumerate() {
            for i in 0..M {
                if transpose {
                    a[j][i] = cols[col][i];
                } else {
                    a[i][j] = cols[col][i];
                }
            }
        }
        let mut x = *rhs;
        let mut perm: Vec<usize> = (0..M).collect();
        for k in 0..M {
            let mut piv = k;
            for r in (k + 1)..M {
                if a[perm[r]][k].abs() > a[perm[piv]][k].abs() {
                    piv = r;
                }
            }
            perm.swap(k, piv);
            let pk = perm[k];
            if a[pk][k].abs() < 1e-13 {
                return Err(Error::LpFailure("singular basis matrix".into()));
            }
            for r in (k + 1)..M {
                let pr = perm[r];
                let f = a[pr][k] / a[pk][k];
                if f != 0.0 {
                    for c in k..M {
                        a[pr][c] -= f * a[pk][c];
                    }
                    x[pr] -= f * x[pk];
                }
            }
        }
        let mut out = [0.0f64; M];
        for k in (0..M).rev() {
            let pk = perm[k];
            let mut acc = x[pk];
            for c in (k + 1)..M {
                acc -= a[pk][c] * out[c];
            }
            out[k] = acc / a[pk][k];
        }
        Ok(out)
    };

    let mut x_basic = solve_basis(&basis, &b, false)?;

    for _iter in 0..10_000 {
        // Simplex multipliers: B^T y = c_B.
        let mut c_b = [0.0; M];
        for (i, &j) in basis.iter().enumerate() {
            c_b[i] = cost[j];
        }
        let y = solve_basis(&basis, &c_b, true)?;

        // Bland's rule: entering column = smallest index with negative
        // reduced cost.
        let mut entering = None;
        'search: for j in 0..n_total {
            if basis.contains(&j) {
                continue;
            }
            let mut dj = cost[j];
            for i in 0..M {
                dj -= y[i] * cols[j][i];
            }
            if dj < -LP_TOL {
                entering = Some(j);
                break 'search;
            }
        }
        let entering = match entering {
            Some(j) => j,
            None => {
                // Optimal.
                let objective: f64 = basis
                    .iter()
                    .zip(x_basic.iter())
                    .map(|(&j, &xj)| cost[j] * xj)
                    .sum();
                if objective <= LP_TOL {
                    let mut weights = vec![0.0; NUM_VERTICES];
                    for (i, &j) in basis.iter().enumerate() {
                        if j < NUM_VERTICES {
                            weights[j] = x_basic[i].max(0.0);
                        }
                    }
                    return Ok(LhvMembership::Feasible { weights });
                }
                // Farkas certificate from the dual: functional . v <= -y_36
                // on every vertex, functional . p > -y_36.
                let functional: Vec<f64> = y[..BEHAVIOR_DIM].to_vec();
                let local_bound = verts
                    .iter()
                    .map(|v| v.iter().zip(&functional).map(|(vi, fi)| vi * fi).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max);
                let behavior_value: f64 =
                    p.iter().zip(&functional).map(|(pi, fi)| pi * fi).sum();
                return Ok(LhvMembership::Infeasible {
                    functional,
                    local_bound,
                    behavior_value,
                });
            }
        };

        // Direction: B d = A_entering.
        let d = solve_basis(&basis, &cols[entering], false)?;
        let mut leaving: Option<(usize, f64)> = None;
        for i in 0..M {
            if d[i] > LP_TOL {
                let ratio = x_basic[i] / d[i];
                let better = match leaving {
                    None => true,
                    Some((li, lr)) => {
                        ratio < lr - 1e-15 || (ratio < lr + 1e-15 && basis[i] < basis[li])
                    }
                };
                if better {
                    leaving = Some((i, ratio));
                }
            }
        }
        let (leave_idx, step) = match leaving {
            Some(l) => l,
            None => return Err(Error::LpFailure("phase-1 LP unbounded".into())),
        };
        basis[leave_idx] = entering;
        // Update the basic solution by refactorization.
        let _ = step;
        x_basic = solve_basis(&basis, &b, false)?;
        for xi in x_basic.iter_mut() {
            if *xi < 0.0 && *xi > -1e-11 {
                *xi = 0.0;
            }
        }
    }
    Err(Error::LpFailure("simplex iteration limit reached".into()))
}
