//! Small dense kernels on contiguous slices.
//!
//! Reductions use four independent accumulators in a fixed order so they
//! vectorize and still give the same bits on every run.

#[inline(always)]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// y += alpha·x
#[inline(always)]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Four dot products x_j·v in one sweep over v.
#[inline(always)]
fn dot4(x: [&[f64]; 4], v: &[f64]) -> [f64; 4] {
    let m = v.len();
    let mut acc = [[0.0f64; 4]; 4];
    let body = m - m % 4;
    let mut k = 0;
    while k < body {
        let vk = [v[k], v[k + 1], v[k + 2], v[k + 3]];
        for (a, row) in acc.iter_mut().zip(&x) {
            a[0] += row[k] * vk[0];
            a[1] += row[k + 1] * vk[1];
            a[2] += row[k + 2] * vk[2];
            a[3] += row[k + 3] * vk[3];
        }
        k += 4;
    }
    let mut out = [0.0; 4];
    for (j, (a, row)) in acc.iter().zip(&x).enumerate() {
        let mut tail = 0.0;
        for i in body..m {
            tail += row[i] * v[i];
        }
        out[j] = (a[0] + a[1]) + (a[2] + a[3]) + tail;
    }
    out
}

/// acc += Σ_j c_j·x_j in one sweep over acc.
#[inline(always)]
fn axpy4(c: [f64; 4], x: [&[f64]; 4], acc: &mut [f64]) {
    for (i, a) in acc.iter_mut().enumerate() {
        *a += (c[0] * x[0][i] + c[1] * x[1][i]) + (c[2] * x[2][i] + c[3] * x[3][i]);
    }
}

#[inline(always)]
fn row_block(rows: &[f64], m: usize, r: usize) -> [&[f64]; 4] {
    let at = |k: usize| &rows[(r + k) * m..(r + k + 1) * m];
    [at(0), at(1), at(2), at(3)]
}

#[inline(always)]
fn project_accumulate_portable(rows: &[f64], m: usize, v: &[f64], proj: &mut [f64], acc: &mut [f64]) {
    let n = proj.len();
    debug_assert_eq!(rows.len(), n * m);
    let body = n - n % 4;
    let mut r = 0;
    while r < body {
        let x = row_block(rows, m, r);
        let d = dot4(x, v);
        proj[r..r + 4].copy_from_slice(&d);
        axpy4(d, x, acc);
        r += 4;
    }
    for r in body..n {
        let row = &rows[r * m..(r + 1) * m];
        proj[r] = dot(row, v);
        axpy(proj[r], row, acc);
    }
}

#[inline(always)]
fn transpose_apply_portable(rows: &[f64], m: usize, c: &[f64], acc: &mut [f64]) {
    let n = c.len();
    debug_assert_eq!(rows.len(), n * m);
    let body = n - n % 4;
    let mut r = 0;
    while r < body {
        axpy4([c[r], c[r + 1], c[r + 2], c[r + 3]], row_block(rows, m, r), acc);
        r += 4;
    }
    for r in body..n {
        axpy(c[r], &rows[r * m..(r + 1) * m], acc);
    }
}

#[inline(always)]
fn rank_one_downdate_portable(rows: &mut [f64], m: usize, t: &[f64], p: &[f64]) {
    for (row, &ti) in rows.chunks_exact_mut(m).zip(t) {
        axpy(-ti, p, row);
    }
}

// The AVX2 builds run the same scalar code, only with wider registers: no
// reassociation and no FMA contraction, so both paths give the same bits.
#[cfg(target_arch = "x86_64")]
mod avx2 {
    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn project_accumulate(rows: &[f64], m: usize, v: &[f64], proj: &mut [f64], acc: &mut [f64]) {
        super::project_accumulate_portable(rows, m, v, proj, acc)
    }

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn transpose_apply(rows: &[f64], m: usize, c: &[f64], acc: &mut [f64]) {
        super::transpose_apply_portable(rows, m, c, acc)
    }

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn rank_one_downdate(rows: &mut [f64], m: usize, t: &[f64], p: &[f64]) {
        super::rank_one_downdate_portable(rows, m, t, p)
    }
}

fn has_avx2() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::is_x86_feature_detected!("avx2")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

/// For a row-major n×m block X: proj = Xv and acc += Xᵀproj, reading each
/// row from memory once.
pub fn project_accumulate(rows: &[f64], m: usize, v: &[f64], proj: &mut [f64], acc: &mut [f64]) {
    assert_eq!(rows.len(), proj.len() * m);
    assert!(v.len() == m && acc.len() == m);
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the CPU supports AVX2.
        return unsafe { avx2::project_accumulate(rows, m, v, proj, acc) };
    }
    project_accumulate_portable(rows, m, v, proj, acc)
}

/// acc += Xᵀc for a row-major n×m block X.
pub fn transpose_apply(rows: &[f64], m: usize, c: &[f64], acc: &mut [f64]) {
    assert_eq!(rows.len(), c.len() * m);
    assert_eq!(acc.len(), m);
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the CPU supports AVX2.
        return unsafe { avx2::transpose_apply(rows, m, c, acc) };
    }
    transpose_apply_portable(rows, m, c, acc)
}

/// X −= t pᵀ for a row-major n×m block X.
pub fn rank_one_downdate(rows: &mut [f64], m: usize, t: &[f64], p: &[f64]) {
    assert_eq!(rows.len(), t.len() * m);
    assert_eq!(p.len(), m);
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the CPU supports AVX2.
        return unsafe { avx2::rank_one_downdate(rows, m, t, p) };
    }
    rank_one_downdate_portable(rows, m, t, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_handles_remainders() {
        let a: Vec<f64> = (1..=7).map(f64::from).collect();
        assert_eq!(dot(&a, &a), 140.0);
        assert_eq!(dot(&[], &[]), 0.0);
    }

    fn naive(rows: &[f64], m: usize, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = rows.len() / m;
        let proj: Vec<f64> = (0..n).map(|r| (0..m).map(|k| rows[r * m + k] * v[k]).sum()).collect();
        let acc = (0..m).map(|k| (0..n).map(|r| proj[r] * rows[r * m + k]).sum()).collect();
        (proj, acc)
    }

    #[test]
    fn blocked_kernels_match_naive_sums() {
        for (n, m) in [(1, 3), (4, 4), (7, 9), (13, 5)] {
            let rows: Vec<f64> = (0..n * m).map(|i| ((i * 7919) % 97) as f64 / 13.0 - 3.0).collect();
            let v: Vec<f64> = (0..m).map(|k| 0.5 - k as f64 / 7.0).collect();
            let (p_ref, a_ref) = naive(&rows, m, &v);
            let mut proj = vec![0.0; n];
            let mut acc = vec![0.0; m];
            project_accumulate(&rows, m, &v, &mut proj, &mut acc);
            for (a, b) in proj.iter().zip(&p_ref).chain(acc.iter().zip(&a_ref)) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
            let mut acc2 = vec![0.0; m];
            transpose_apply(&rows, m, &proj, &mut acc2);
            for (a, b) in acc2.iter().zip(&a_ref) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
            let mut x = rows.clone();
            rank_one_downdate(&mut x, m, &proj, &v);
            for r in 0..n {
                for k in 0..m {
                    assert_eq!(x[r * m + k], rows[r * m + k] - proj[r] * v[k]);
                }
            }
        }
    }

    #[test]
    fn dispatched_kernels_match_portable_bitwise() {
        let (n, m) = (11, 37);
        let rows: Vec<f64> = (0..n * m).map(|i| ((i * 104_729) % 1009) as f64 / 17.0 - 29.0).collect();
        let v: Vec<f64> = (0..m).map(|k| (k as f64).sin()).collect();
        let (mut p1, mut a1) = (vec![0.0; n], vec![0.0; m]);
        let (mut p2, mut a2) = (vec![0.0; n], vec![0.0; m]);
        project_accumulate(&rows, m, &v, &mut p1, &mut a1);
        project_accumulate_portable(&rows, m, &v, &mut p2, &mut a2);
        assert_eq!((&p1, &a1), (&p2, &a2));
        let (mut c1, mut c2) = (vec![0.0; m], vec![0.0; m]);
        transpose_apply(&rows, m, &p1, &mut c1);
        transpose_apply_portable(&rows, m, &p1, &mut c2);
        assert_eq!(c1, c2);
        let (mut x1, mut x2) = (rows.clone(), rows.clone());
        rank_one_downdate(&mut x1, m, &p1, &v);
        rank_one_downdate_portable(&mut x2, m, &p1, &v);
        assert_eq!(x1, x2);
    }

    #[test]
    fn axpy_accumulates() {
        let mut y = vec![1.0, 1.0, 1.0];
        axpy(2.0, &[1.0, 2.0, 3.0], &mut y);
        assert_eq!(y, vec![3.0, 5.0, 7.0]);
    }
}
