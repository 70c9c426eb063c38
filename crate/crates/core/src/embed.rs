//! Zero-padding embedding of source-sized objects into the target ambient
//! space. The source block always sits in the top-left corner.

use crate::error::{Error, Result};
use crate::matcore::{DenseMatrix, OrthoFactor};

/// Target ambient shape for the embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbedShape {
    pub target_rows: usize,
    pub target_cols: usize,
}

impl EmbedShape {
    pub fn new(target_rows: usize, target_cols: usize) -> Self {
        Self {
            target_rows,
            target_cols,
        }
    }

    /// Row offset of the source block. Always zero.
    pub fn block_row_offset(&self) -> usize {
        0
    }

    /// Column offset of the source block. Always zero.
    pub fn block_col_offset(&self) -> usize {
        0
    }
}

/// `[[a, 0], [0, 0]]` in the target shape.
pub fn embed_matrix(a: &DenseMatrix, shape: EmbedShape) -> Result<DenseMatrix> {
    if a.rows() > shape.target_rows || a.cols() > shape.target_cols {
        return Err(Error::shape(format!(
            "cannot embed {}x{} into {}x{}",
            a.rows(),
            a.cols(),
            shape.target_rows,
            shape.target_cols
        )));
    }
    let mut out = DenseMatrix::zeros(shape.target_rows, shape.target_cols);
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            out.set(i, j, a.get(i, j));
        }
    }
    Ok(out)
}

/// Appends zero rows to a factor. The Gram matrix is unchanged, so the
/// result stays column-orthonormal.
pub fn embed_factor(u: &OrthoFactor, target_rows: usize) -> Result<OrthoFactor> {
    if u.rows() > target_rows {
        return Err(Error::shape(format!(
            "cannot embed factor with {} rows into {target_rows} rows",
            u.rows()
        )));
    }
    let padded = embed_matrix(u.matrix(), EmbedShape::new(target_rows, u.cols()))?;
    Ok(OrthoFactor::from_trusted(padded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{frob_norm, op_norm, orthonormalize_columns};
    use proptest::prelude::*;

    #[test]
    fn pads_top_left() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = embed_matrix(&a, EmbedShape::new(3, 4)).unwrap();
        let want = DenseMatrix::from_rows(&[
            [1.0, 2.0, 0.0, 0.0],
            [3.0, 4.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
        ])
        .unwrap();
        assert_eq!(b, want);
        assert_eq!(
            embed_matrix(&DenseMatrix::zeros(2, 2), EmbedShape::new(5, 5)).unwrap(),
            DenseMatrix::zeros(5, 5)
        );
    }

    #[test]
    fn rejects_overflow() {
        let a = DenseMatrix::zeros(3, 2);
        assert!(matches!(
            embed_matrix(&a, EmbedShape::new(2, 4)),
            Err(Error::Shape(_))
        ));
        let u = OrthoFactor::new(DenseMatrix::identity(3)).unwrap();
        assert!(embed_factor(&u, 2).is_err());
    }

    #[test]
    fn factor_embedding() {
        let u = OrthoFactor::new(DenseMatrix::identity(2)).unwrap();
        let e = embed_factor(&u, 4).unwrap();
        assert_eq!(e.matrix().column(0), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(e.matrix().column(1), vec![0.0, 1.0, 0.0, 0.0]);

        let empty = embed_factor(&OrthoFactor::empty(2), 5).unwrap();
        assert_eq!((empty.rows(), empty.cols()), (5, 0));
    }

    fn mat_4x3() -> impl Strategy<Value = DenseMatrix> {
        prop::collection::vec(-10.0f64..10.0, 12)
            .prop_map(|v| DenseMatrix::new(4, 3, v).unwrap())
    }

    proptest! {
        #[test]
        fn isometry(a in mat_4x3(), extra_r in 0usize..3, extra_c in 0usize..3) {
            let b = embed_matrix(&a, EmbedShape::new(4 + extra_r, 3 + extra_c)).unwrap();
            prop_assert_eq!(frob_norm(&b), frob_norm(&a));
            prop_assert!((op_norm(&b).unwrap() - op_norm(&a).unwrap()).abs() <= 1e-12 * (1.0 + frob_norm(&a)));
        }

        #[test]
        fn linearity(a in mat_4x3(), c in mat_4x3()) {
            let shape = EmbedShape::new(6, 5);
            let lhs = embed_matrix(&(&a + &c), shape).unwrap();
            let rhs = &embed_matrix(&a, shape).unwrap() + &embed_matrix(&c, shape).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn factor_gram_preserved(a in mat_4x3(), extra in 0usize..4) {
            let u = orthonormalize_columns(&a).unwrap();
            let e = embed_factor(&u, 4 + extra).unwrap();
            prop_assert_eq!(e.matrix().t_matmul(e.matrix()), u.matrix().t_matmul(u.matrix()));
            prop_assert!(OrthoFactor::new(e.matrix().clone()).is_ok());
        }
    }
}
