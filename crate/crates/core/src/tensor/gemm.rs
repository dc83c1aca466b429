//! Strided matrix multiply on top of `matrixmultiply::dgemm`.

/// Read-only strided view of an `rows x cols` matrix inside `data`.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a> View<'a> {
    pub fn row_major(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Self { data, rows, cols, rs: cols, cs: 1 }
    }

    /// Same storage viewed as the transposed matrix.
    pub fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn fits(&self) -> bool {
        self.rows == 0 || self.cols == 0 || (self.rows - 1) * self.rs + (self.cols - 1) * self.cs < self.data.len()
    }
}

/// `c = beta * c + a · b`, where `c` is written with strides `(rsc, csc)`.
pub(crate) fn gemm(a: View<'_>, b: View<'_>, beta: f64, c: &mut [f64], rsc: usize, csc: usize) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(k, b.rows, "gemm inner dimension");
    assert!(a.fits() && b.fits(), "gemm operand out of bounds");
    assert!(
        m == 0 || n == 0 || (m - 1) * rsc + (n - 1) * csc < c.len(),
        "gemm output out of bounds"
    );
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: every pointer offset the kernel touches was bounds-checked above,
    // and `c` is a unique borrow so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}
