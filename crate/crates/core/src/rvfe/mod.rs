//! Range-view feature extraction: the BasicBlock encoder and the
//! hierarchical-dilated meta kernel.

mod basicblock;
pub mod gradcheck;
mod hdmk;

pub use basicblock::{basicblock_forward, init_basicblock, BasicBlockParams};
pub use hdmk::{
    hdmk_backward, hdmk_forward, init_params, HdMetaKernelParams, HdmkBranch, HdmkGradients,
};

/// How the left and right image edges are padded. Rows are always
/// zero-padded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizontalBoundary {
    /// Columns wrap around, for full 360 degree scans.
    Wrap,
    Zero,
}

impl HorizontalBoundary {
    /// Column index for `u + du`, or `None` when it falls in the padding.
    pub fn column(self, u: usize, du: i32, width: usize) -> Option<usize> {
        let c = u as i64 + du as i64;
        match self {
            HorizontalBoundary::Wrap => Some(c.rem_euclid(width as i64) as usize),
            HorizontalBoundary::Zero => (0..width as i64).contains(&c).then_some(c as usize),
        }
    }
}

pub(crate) fn row(v: usize, dv: i32, height: usize) -> Option<usize> {
    let r = v as i64 + dv as i64;
    (0..height as i64).contains(&r).then_some(r as usize)
}

/// Ordered `(d_h, d_w)` sampling offsets of one kernel branch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelOffsets(Vec<(i32, i32)>);

impl KernelOffsets {
    /// The 3x3 neighborhood `{-1, 0, 1}^2`, row-major (`d_h` outer).
    pub fn k1() -> Self {
        Self::dilated(1)
    }

    /// The 3x3 neighborhood with every offset doubled.
    pub fn k2() -> Self {
        Self::dilated(2)
    }

    pub fn dilated(rate: i32) -> Self {
        let mut offsets = Vec::with_capacity(9);
        for dh in -1..=1 {
            for dw in -1..=1 {
                offsets.push((dh * rate, dw * rate));
            }
        }
        Self(offsets)
    }

    pub fn offsets(&self) -> &[(i32, i32)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k1_spans_the_unit_neighborhood() {
        let k1 = KernelOffsets::k1();
        assert_eq!(k1.len(), 9);
        let mut expected = Vec::new();
        for dh in [-1, 0, 1] {
            for dw in [-1, 0, 1] {
                expected.push((dh, dw));
            }
        }
        assert_eq!(k1.offsets(), expected.as_slice());
    }

    #[test]
    fn k2_doubles_k1() {
        let (k1, k2) = (KernelOffsets::k1(), KernelOffsets::k2());
        for (a, b) in k1.offsets().iter().zip(k2.offsets()) {
            assert_eq!((2 * a.0, 2 * a.1), *b);
        }
    }

    #[test]
    fn boundary_columns() {
        assert_eq!(HorizontalBoundary::Wrap.column(0, -2, 10), Some(8));
        assert_eq!(HorizontalBoundary::Wrap.column(9, 2, 10), Some(1));
        assert_eq!(HorizontalBoundary::Zero.column(0, -1, 10), None);
        assert_eq!(HorizontalBoundary::Zero.column(9, 1, 10), None);
        assert_eq!(HorizontalBoundary::Zero.column(4, 1, 10), Some(5));
        assert_eq!(row(0, -1, 4), None);
        assert_eq!(row(3, 0, 4), Some(3));
    }
}
