//! Algebraic constraint elimination.
//!
//! Every constrained problem is reduced through an affine map
//! `x_full = T x_red + x0`: free DOFs keep one reduced unknown each,
//! Dirichlet DOFs carry a fixed value, and rigid-motion DOFs are linear
//! combinations of auxiliary unknowns (particle translation / rotation)
//! plus an offset. Reduced operators `T^T A T` stay symmetric whenever
//! `A` is, so the constrained variational problem and the reduced
//! algebraic problem are the same thing.

use crate::error::HomogError;
use crate::fem::sparse::SparseMatrix;

#[derive(Debug, Clone)]
enum Role {
    Free,
    Fixed(f64),
    /// Linear combination of auxiliary unknowns plus an offset; the
    /// usize indexes the auxiliary unknown list.
    Linked { terms: Vec<(usize, f64)>, offset: f64 },
}

/// Builder for a [`Reduction`]. Each full DOF may receive at most one
/// role; a second assignment is an [`HomogError::InconsistentConstraints`].
pub struct ReductionBuilder {
    roles: Vec<Option<Role>>,
    n_aux: usize,
}

impl ReductionBuilder {
    pub fn new(n_full: usize) -> Self {
        ReductionBuilder {
            roles: vec![None; n_full],
            n_aux: 0,
        }
    }

    /// Allocate an auxiliary unknown (e.g. one rigid-body component).
    pub fn add_aux(&mut self) -> usize {
        self.n_aux += 1;
        self.n_aux - 1
    }

    pub fn set_fixed(&mut self, dof: usize, value: f64) -> Result<(), HomogError> {
        self.assign(dof, Role::Fixed(value))
    }

    /// Tie a DOF to `sum_k coeff_k * aux_k + offset`.
    pub fn set_linked(
        &mut self,
        dof: usize,
        terms: Vec<(usize, f64)>,
        offset: f64,
    ) -> Result<(), HomogError> {
        self.assign(dof, Role::Linked { terms, offset })
    }

    fn assign(&mut self, dof: usize, role: Role) -> Result<(), HomogError> {
        if self.roles[dof].is_some() {
            return Err(HomogError::InconsistentConstraints(format!(
                "DOF {dof} received two constraint roles"
            )));
        }
        self.roles[dof] = Some(role);
        Ok(())
    }

    pub fn build(mut self) -> Reduction {
        let n_full = self.roles.len();
        // Free DOFs first (in DOF order), auxiliary unknowns appended.
        let mut n_free = 0usize;
        let mut terms = Vec::with_capacity(n_full);
        let mut offset = vec![0.0; n_full];
        for dof in 0..n_full {
            match self.roles[dof].take().unwrap_or(Role::Free) {
                Role::Free => {
                    terms.push(vec![(n_free, 1.0)]);
                    n_free += 1;
                }
                Role::Fixed(v) => {
                    terms.push(Vec::new());
                    offset[dof] = v;
                }
                Role::Linked { terms: t, offset: o } => {
                    terms.push(t.into_iter().map(|(a, c)| (usize::MAX - a, c)).collect());
                    offset[dof] = o;
                }
            }
        }
        // Rewrite aux placeholders now that n_free is known.
        for t in &mut terms {
            for (idx, _) in t.iter_mut() {
                if *idx > n_full + self.n_aux {
                    *idx = n_free + (usize::MAX - *idx);
                }
            }
        }
        Reduction {
            n_full,
            n_free,
            n_red: n_free + self.n_aux,
            terms,
            offset,
        }
    }
}

/// Affine reduction map `x_full = T x_red + x0`.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub n_full: usize,
    pub n_free: usize,
    pub n_red: usize,
    /// Per full DOF: (reduced index, coefficient) pairs.
    terms: Vec<Vec<(usize, f64)>>,
    /// Per full DOF: affine offset x0.
    offset: Vec<f64>,
}

impl Reduction {
    /// Identity reduction (no constraints).
    pub fn identity(n: usize) -> Self {
        ReductionBuilder::new(n).build()
    }

    /// Reduced index of auxiliary unknown `a`.
    pub fn aux_index(&self, a: usize) -> usize {
        self.n_free + a
    }

    /// x_full = T x_red + x0.
    pub fn expand(&self, x_red: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x_red.len(), self.n_red);
        let mut x = self.offset.clone();
        for dof in 0..self.n_full {
            for &(r, c) in &self.terms[dof] {
                x[dof] += c * x_red[r];
            }
        }
        x
    }

    /// y_red = T^T y_full.
    pub fn restrict(&self, y_full: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y_full.len(), self.n_full);
        let mut y = vec![0.0; self.n_red];
        for dof in 0..self.n_full {
            for &(r, c) in &self.terms[dof] {
                y[r] += c * y_full[dof];
            }
        }
        y
    }

    pub fn offset_full(&self) -> &[f64] {
        &self.offset
    }

    pub fn has_offset(&self) -> bool {
        self.offset.iter().any(|&v| v != 0.0)
    }

    /// Reduced right-hand side `T^T (b - A x0)` for the system rows
    /// reduced by `self` with columns reduced by `cols`.
    pub fn reduce_rhs(&self, a: &SparseMatrix, cols: &Reduction, b: &[f64]) -> Vec<f64> {
        let mut t = b.to_vec();
        if cols.has_offset() {
            a.matvec_add(&cols.offset, -1.0, &mut t);
        }
        self.restrict(&t)
    }
}

/// Reduced operator `T_rows^T A T_cols`.
pub fn reduce_bilinear(
    a: &SparseMatrix,
    rows: &Reduction,
    cols: &Reduction,
) -> Result<SparseMatrix, HomogError> {
    debug_assert_eq!(a.nrows, rows.n_full);
    debug_assert_eq!(a.ncols, cols.n_full);
    let mut trip = Vec::with_capacity(a.nnz());
    for r in 0..a.nrows {
        if rows.terms[r].is_empty() {
            continue;
        }
        for k in a.row_ptr[r]..a.row_ptr[r + 1] {
            let c = a.col_idx[k];
            let v = a.vals[k];
            if v == 0.0 {
                continue;
            }
            for &(rr, rc) in &rows.terms[r] {
                for &(cr, cc) in &cols.terms[c] {
                    trip.push((rr, cr, rc * v * cc));
                }
            }
        }
    }
    let sym = a.symmetric && std::ptr::eq(rows, cols);
    SparseMatrix::from_triplets(rows.n_red, cols.n_red, trip, sym)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_and_fixed_roundtrip() {
        let mut b = ReductionBuilder::new(4);
        b.set_fixed(1, 2.5).unwrap();
        let red = b.build();
        assert_eq!(red.n_red, 3);
        let x = red.expand(&[1.0, 3.0, 4.0]);
        assert_eq!(x, vec![1.0, 2.5, 3.0, 4.0]);
        let y = red.restrict(&[1.0, 10.0, 2.0, 3.0]);
        assert_eq!(y, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn linked_dofs_expand_affinely() {
        let mut b = ReductionBuilder::new(3);
        let u = b.add_aux();
        b.set_linked(0, vec![(u, 1.0)], 0.5).unwrap();
        b.set_linked(2, vec![(u, -2.0)], 0.0).unwrap();
        let red = b.build();
        assert_eq!(red.n_red, 2); // one free (dof 1) + one aux
        let x = red.expand(&[7.0, 3.0]);
        assert_eq!(x, vec![3.5, 7.0, -6.0]);
    }

    #[test]
    fn double_assignment_is_inconsistent() {
        let mut b = ReductionBuilder::new(2);
        b.set_fixed(0, 0.0).unwrap();
        assert!(matches!(
            b.set_linked(0, vec![], 0.0),
            Err(HomogError::InconsistentConstraints(_))
        ));
    }

    #[test]
    fn reduced_operator_matches_dense_computation() {
        // A 3x3 symmetric matrix with dof 2 fixed to 1.0.
        let a = SparseMatrix::from_triplets(
            3,
            3,
            vec![
                (0, 0, 2.0),
                (0, 1, -1.0),
                (1, 0, -1.0),
                (1, 1, 2.0),
                (1, 2, -1.0),
                (2, 1, -1.0),
                (2, 2, 2.0),
            ],
            true,
        )
        .unwrap();
        let mut b = ReductionBuilder::new(3);
        b.set_fixed(2, 1.0).unwrap();
        let red = b.build();
        let ar = reduce_bilinear(&a, &red, &red).unwrap();
        assert_eq!(ar.nrows, 2);
        assert_eq!(ar.get(0, 0), 2.0);
        assert_eq!(ar.get(1, 1), 2.0);
        // rhs: T^T(b - A x0) with b = 0 gives [0, 1].
        let rhs = red.reduce_rhs(&a, &red, &[0.0, 0.0, 0.0]);
        assert_eq!(rhs, vec![0.0, 1.0]);
    }
}
