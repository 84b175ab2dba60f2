//! Paley constructions over prime fields, producing ±1 sign matrices.

use crate::error::{Error, Result};

pub(crate) fn is_prime(q: u64) -> bool {
    if q < 2 {
        return false;
    }
    if q % 2 == 0 {
        return q == 2;
    }
    let mut d = 3u64;
    while d.saturating_mul(d) <= q {
        if q % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

/// Checks that `q` is an odd prime in residue class `class` mod 4.
pub(crate) fn check_paley_prime(q: u64, class: u64) -> Result<()> {
    if q % 4 != class {
        return Err(Error::InvalidResidueClass { q, expected: class });
    }
    if !is_prime(q) {
        return Err(Error::NotPrimePower { q });
    }
    Ok(())
}

/// Quadratic character of GF(q): 0 at zero, +1 on nonzero squares, −1 elsewhere.
fn quadratic_character(q: usize) -> Vec<i8> {
    let mut chi = vec![-1i8; q];
    chi[0] = 0;
    for x in 1..q {
        chi[(x * x) % q] = 1;
    }
    chi
}

/// Jacobsthal entry `χ(j − i)`.
fn jacobsthal(chi: &[i8], i: usize, j: usize) -> i8 {
    let q = chi.len();
    chi[(j + q - i) % q]
}

/// Paley I sign matrix of order `q + 1` for `q ≡ 3 (mod 4)`: `I + [[0, 1ᵀ], [−1, Q]]`.
pub(crate) fn paley1_signs(q: u64) -> Result<Vec<i8>> {
    check_paley_prime(q, 3)?;
    let q = q as usize;
    let chi = quadratic_character(q);
    let n = q + 1;
    let mut h = vec![0i8; n * n];
    for j in 0..n {
        h[j] = 1;
    }
    for i in 1..n {
        h[i * n] = -1;
        for j in 1..n {
            h[i * n + j] = if i == j { 1 } else { jacobsthal(&chi, i - 1, j - 1) };
        }
    }
    normalize_signs(&mut h, n);
    Ok(h)
}

/// Paley II sign matrix of order `2(q + 1)` for `q ≡ 1 (mod 4)`, obtained from the
/// symmetric conference matrix `[[0, 1ᵀ], [1, Q]]` by block substitution.
pub(crate) fn paley2_signs(q: u64) -> Result<Vec<i8>> {
    check_paley_prime(q, 1)?;
    let q = q as usize;
    let chi = quadratic_character(q);
    let m = q + 1;
    let conference = |i: usize, j: usize| -> i8 {
        match (i, j) {
            (0, 0) => 0,
            (0, _) | (_, 0) => 1,
            _ => jacobsthal(&chi, i - 1, j - 1),
        }
    };
    const ZERO_BLOCK: [[i8; 2]; 2] = [[1, -1], [-1, -1]];
    const ONE_BLOCK: [[i8; 2]; 2] = [[1, 1], [1, -1]];
    let n = 2 * m;
    let mut h = vec![0i8; n * n];
    for i in 0..m {
        for j in 0..m {
            let c = conference(i, j);
            for a in 0..2 {
                for b in 0..2 {
                    h[(2 * i + a) * n + 2 * j + b] = if c == 0 { ZERO_BLOCK[a][b] } else { c * ONE_BLOCK[a][b] };
                }
            }
        }
    }
    normalize_signs(&mut h, n);
    Ok(h)
}

/// Flips columns, then rows, so the first row and first column are all `+1`.
fn normalize_signs(h: &mut [i8], n: usize) {
    for j in 0..n {
        if h[j] < 0 {
            for i in 0..n {
                h[i * n + j] = -h[i * n + j];
            }
        }
    }
    for i in 0..n {
        if h[i * n] < 0 {
            for x in &mut h[i * n..(i + 1) * n] {
                *x = -*x;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram_is_scaled_identity(h: &[i8], n: usize) -> bool {
        (0..n).all(|i| {
            (0..n).all(|j| {
                let dot: i64 = (0..n).map(|k| h[i * n + k] as i64 * h[j * n + k] as i64).sum();
                dot == if i == j { n as i64 } else { 0 }
            })
        })
    }

    #[test]
    fn small_paley1_matrices_are_hadamard() {
        for q in [3u64, 7, 11, 19, 23, 31, 43, 47] {
            let h = paley1_signs(q).unwrap();
            assert!(gram_is_scaled_identity(&h, q as usize + 1), "q={q}");
        }
    }

    #[test]
    fn small_paley2_matrices_are_hadamard() {
        for q in [5u64, 13, 17, 29] {
            let h = paley2_signs(q).unwrap();
            assert!(gram_is_scaled_identity(&h, 2 * (q as usize + 1)), "q={q}");
        }
    }

    #[test]
    fn border_is_positive() {
        let h = paley2_signs(5).unwrap();
        let n = 12;
        assert!((0..n).all(|j| h[j] == 1 && h[j * n] == 1));
    }

    #[test]
    fn residue_and_primality_errors() {
        assert!(matches!(paley1_signs(5), Err(Error::InvalidResidueClass { q: 5, expected: 3 })));
        assert!(matches!(paley1_signs(15), Err(Error::NotPrimePower { q: 15 })));
        assert!(matches!(paley1_signs(27), Err(Error::NotPrimePower { q: 27 })));
        assert!(matches!(paley2_signs(3), Err(Error::InvalidResidueClass { q: 3, expected: 1 })));
        assert!(matches!(paley2_signs(9), Err(Error::NotPrimePower { q: 9 })));
        assert!(matches!(paley1_signs(2), Err(Error::InvalidResidueClass { .. })));
    }

    #[test]
    fn primality() {
        let primes: Vec<u64> = (0..60).filter(|&q| is_prime(q)).collect();
        assert_eq!(primes, vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59]);
        assert!(is_prime(383) && is_prime(1279) && !is_prime(667));
    }
}
