//! Strided matrix views over flat buffers and a checked GEMM wrapper.

#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    data: &'a [f64],
    offset: usize,
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

pub(crate) struct MatMut<'a> {
    data: &'a mut [f64],
    offset: usize,
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

fn last_index(offset: usize, rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    if rows == 0 || cols == 0 {
        offset
    } else {
        offset + (rows - 1) * rs + (cols - 1) * cs
    }
}

impl<'a> MatRef<'a> {
    /// Row-major `rows x cols` view of `data`.
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        assert!(rows * cols <= data.len(), "matrix view exceeds buffer");
        MatRef {
            data,
            offset: 0,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        MatRef {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
            ..self
        }
    }

    pub fn block(self, row0: usize, rows: usize, col0: usize, cols: usize) -> Self {
        assert!(row0 + rows <= self.rows && col0 + cols <= self.cols, "block out of range");
        MatRef {
            offset: self.offset + row0 * self.rs + col0 * self.cs,
            rows,
            cols,
            ..self
        }
    }
}

impl<'a> MatMut<'a> {
    pub fn new(data: &'a mut [f64], rows: usize, cols: usize) -> Self {
        assert!(rows * cols <= data.len(), "matrix view exceeds buffer");
        MatMut {
            data,
            offset: 0,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    pub fn block(self, row0: usize, rows: usize, col0: usize, cols: usize) -> Self {
        assert!(row0 + rows <= self.rows && col0 + cols <= self.cols, "block out of range");
        MatMut {
            offset: self.offset + row0 * self.rs + col0 * self.cs,
            rows,
            cols,
            ..self
        }
    }
}

/// `c = beta * c + alpha * a * b`.
pub(crate) fn gemm(alpha: f64, a: MatRef, b: MatRef, beta: f64, c: MatMut) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    assert_eq!((a.rows, b.cols), (c.rows, c.cols), "output shape differs");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        let (rs, cs, off) = (c.rs, c.cs, c.offset);
        for i in 0..m {
            for j in 0..n {
                c.data[off + i * rs + j * cs] *= beta;
            }
        }
        return;
    }
    assert!(last_index(a.offset, a.rows, a.cols, a.rs, a.cs) < a.data.len());
    assert!(last_index(b.offset, b.rows, b.cols, b.rs, b.cs) < b.data.len());
    assert!(last_index(c.offset, c.rows, c.cols, c.rs, c.cs) < c.data.len());
    // SAFETY: every index touched lies within the buffers, checked above;
    // `c` is uniquely borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr().add(a.offset),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.offset),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr().add(c.offset),
            c.rs as isize,
            c.cs as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive() {
        let a: Vec<f64> = (0..6).map(|v| v as f64).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| (v as f64) * 0.5 - 2.0).collect(); // 3x4
        let mut c = vec![1.0; 8];
        gemm(1.0, MatRef::new(&a, 2, 3), MatRef::new(&b, 3, 4), 1.0, MatMut::new(&mut c, 2, 4));
        for i in 0..2 {
            for j in 0..4 {
                let expected: f64 = 1.0 + (0..3).map(|k| a[i * 3 + k] * b[k * 4 + j]).sum::<f64>();
                assert_eq!(c[i * 4 + j], expected);
            }
        }
    }

    #[test]
    fn transposed_and_block_views() {
        // a is stored 3x2; use its transpose (2x3)
        let a = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0]; // 3x2
        let mut c = vec![0.0; 2 * 5];
        let view = MatMut::new(&mut c, 2, 5).block(0, 2, 3, 2);
        gemm(1.0, MatRef::new(&a, 3, 2).t(), MatRef::new(&b, 3, 2), 0.0, view);
        assert_eq!(c, vec![0.0, 0.0, 0.0, 4.0, 5.0, 0.0, 0.0, 0.0, 10.0, 11.0]);
    }
}
