//! In-place fast Walsh-Hadamard transform.

/// Unnormalised transform (`H x` with entries of `H` in `{-1, +1}`).
/// `x.len()` must be a power of two.
pub fn fwht(x: &mut [f64]) {
    let n = x.len();
    assert!(n.is_power_of_two(), "fwht length {n} is not a power of two");
    let mut h = 1;
    while h < n {
        for block in x.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*a, *b);
                *a = u + v;
                *b = u - v;
            }
        }
        h *= 2;
    }
}

/// Orthonormal transform, `H / sqrt(n)`.
pub fn fwht_normalized(x: &mut [f64]) {
    fwht(x);
    let s = 1.0 / (x.len() as f64).sqrt();
    x.iter_mut().for_each(|v| *v *= s);
}
