use super::LogitError;

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(base: u64, mut index: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * f;
        index /= base;
        f *= inv;
    }
    out
}

/// `n` Halton points in `base`, skipping the first `burn_in`. Index 0 (the
/// point 0.0) is never emitted.
pub fn halton(base: u64, n: usize, burn_in: usize) -> Result<Vec<f64>, LogitError> {
    if base < 2 {
        return Err(LogitError::Parameter(format!("halton base must be >= 2, got {base}")));
    }
    let first = burn_in as u64 + 1;
    Ok((0..n as u64).map(|k| radical_inverse(base, first + k)).collect())
}

/// The first `n` primes.
pub fn primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut c = 2u64;
    while out.len() < n {
        if out.iter().take_while(|&&p| p * p <= c).all(|p| !c.is_multiple_of(*p)) {
            out.push(c);
        }
        c += 1;
    }
    out
}
