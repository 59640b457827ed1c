//! Thin safe wrapper over `matrixmultiply::dgemm` for row-major operands.

/// Which operand layout to read. `Trans` reads a stored `[k, m]` matrix as `[m, k]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Op {
    None,
    Trans,
}

/// `c = a · b + beta · c` where `a` is logically `m × k`, `b` is `k × n`
/// and `c` is `m × n`, all row-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    op_a: Op,
    b: &[f64],
    op_b: Op,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k, "gemm: lhs length");
    assert_eq!(b.len(), k * n, "gemm: rhs length");
    assert_eq!(c.len(), m * n, "gemm: output length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            c.iter_mut().for_each(|v| *v = 0.0);
        } else {
            c.iter_mut().for_each(|v| *v *= beta);
        }
        return;
    }
    let (rsa, csa) = match op_a {
        Op::None => (k as isize, 1),
        Op::Trans => (1, m as isize),
    };
    let (rsb, csb) = match op_b {
        Op::None => (n as isize, 1),
        Op::Trans => (1, k as isize),
    };
    // SAFETY: the length assertions above guarantee every strided access
    // stays inside the three slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
