//! Dense inner loops over design columns.
//!
//! Columns of a group are processed together so the residual is streamed
//! once per group. The summation order per column does not depend on how
//! many columns share a pass, and every multiply-add is fused (in hardware
//! when available), so every code path produces the same bits.

const LANES: usize = 8;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut out = [0.0];
    dots(&[a], b, &mut out);
    out[0]
}

/// `out[k] = cols[k] . r`
pub(crate) fn dots(cols: &[&[f64]], r: &[f64], out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
        // SAFETY: the required CPU feature was detected at runtime
        return unsafe { dots_avx2(cols, r, out) };
    }
    dots_any(cols, r, out)
}

/// `r -= sum_k deltas[k] * cols[k]`, subtracting column by column.
pub(crate) fn axpys_sub(deltas: &[f64], cols: &[&[f64]], r: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
        // SAFETY: the required CPU feature was detected at runtime
        return unsafe { axpys_avx2(deltas, cols, r) };
    }
    axpys_any(deltas, cols, r)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn dots_avx2(cols: &[&[f64]], r: &[f64], out: &mut [f64]) {
    dots_any(cols, r, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn axpys_avx2(deltas: &[f64], cols: &[&[f64]], r: &mut [f64]) {
    axpys_any(deltas, cols, r)
}

#[inline(always)]
fn dots_any(cols: &[&[f64]], r: &[f64], out: &mut [f64]) {
    let mut k = 0;
    while k < cols.len() {
        match cols.len() - k {
            1 => out[k] = dot_block::<1>([cols[k]], r)[0],
            2 => out[k..k + 2].copy_from_slice(&dot_block::<2>([cols[k], cols[k + 1]], r)),
            3 => out[k..k + 3]
                .copy_from_slice(&dot_block::<3>([cols[k], cols[k + 1], cols[k + 2]], r)),
            _ => out[k..k + 4].copy_from_slice(&dot_block::<4>(
                [cols[k], cols[k + 1], cols[k + 2], cols[k + 3]],
                r,
            )),
        }
        k += 4;
    }
}

#[inline(always)]
fn dot_block<const K: usize>(cols: [&[f64]; K], r: &[f64]) -> [f64; K] {
    let n = cols.iter().fold(r.len(), |n, c| n.min(c.len()));
    let r = &r[..n];
    let cols = cols.map(|c| &c[..n]);
    let full = n / LANES * LANES;
    let mut acc = [[0.0f64; LANES]; K];
    let mut i = 0;
    while i < full {
        let rr: &[f64; LANES] = r[i..i + LANES].try_into().unwrap();
        for k in 0..K {
            let x: &[f64; LANES] = cols[k][i..i + LANES].try_into().unwrap();
            for l in 0..LANES {
                acc[k][l] = x[l].mul_add(rr[l], acc[k][l]);
            }
        }
        i += LANES;
    }
    let mut out = [0.0; K];
    for k in 0..K {
        let a = &acc[k];
        let mut s = ((a[0] + a[4]) + (a[1] + a[5])) + ((a[2] + a[6]) + (a[3] + a[7]));
        for j in full..n {
            s = cols[k][j].mul_add(r[j], s);
        }
        out[k] = s;
    }
    out
}

#[inline(always)]
fn axpys_any(deltas: &[f64], cols: &[&[f64]], r: &mut [f64]) {
    let mut k = 0;
    while k < cols.len() {
        match cols.len() - k {
            1 => axpy_block::<1>([deltas[k]], [cols[k]], r),
            2 => axpy_block::<2>([deltas[k], deltas[k + 1]], [cols[k], cols[k + 1]], r),
            3 => axpy_block::<3>(
                [deltas[k], deltas[k + 1], deltas[k + 2]],
                [cols[k], cols[k + 1], cols[k + 2]],
                r,
            ),
            _ => axpy_block::<4>(
                [deltas[k], deltas[k + 1], deltas[k + 2], deltas[k + 3]],
                [cols[k], cols[k + 1], cols[k + 2], cols[k + 3]],
                r,
            ),
        }
        k += 4;
    }
}

#[inline(always)]
fn axpy_block<const K: usize>(deltas: [f64; K], cols: [&[f64]; K], r: &mut [f64]) {
    let n = cols.iter().fold(r.len(), |n, c| n.min(c.len()));
    let r = &mut r[..n];
    let cols = cols.map(|c| &c[..n]);
    for (i, ri) in r.iter_mut().enumerate() {
        let mut v = *ri;
        for k in 0..K {
            v = (-deltas[k]).mul_add(cols[k][i], v);
        }
        *ri = v;
    }
}
