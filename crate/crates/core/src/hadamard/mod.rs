//! Normalized Hadamard matrices: orthogonal `C × C` matrices whose entries are all
//! `±1/√C`.
//!
//! Matrices are assembled from Sylvester doubling, the two Paley constructions over
//! prime fields, and Kronecker products of those. Every constructed matrix keeps the
//! [`Recipe`] that produced it; rebuilding from the recipe gives the same bits.

mod paley;
mod recipe;

use ndarray::Array2;

pub use recipe::Recipe;

use crate::error::{Error, Result};
use crate::linalg;

/// Largest order built unless a [`Constructor`] is configured otherwise.
pub const DEFAULT_MAX_SIZE: usize = 4096;

/// Recipes pinned for common transformer widths.
fn pinned_plan(size: usize) -> Option<Recipe> {
    use Recipe::*;
    Some(match size {
        768 => Recipe::kron(Sylvester(1), Paley1(383)),
        1024 => Sylvester(10),
        1152 => Recipe::kron(Sylvester(5), Paley2(17)),
        1280 => Recipe::kron(Sylvester(6), Paley1(19)),
        1408 => Recipe::kron(Sylvester(5), Paley1(43)),
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HadamardMatrix {
    entries: Array2<f64>,
    recipe: Recipe,
}

impl HadamardMatrix {
    fn from_signs(signs: &[i8], size: usize, recipe: Recipe) -> Self {
        let scale = (1.0 / size as f64).sqrt();
        let entries = Array2::from_shape_fn((size, size), |(i, j)| f64::from(signs[i * size + j]) * scale);
        HadamardMatrix { entries, recipe }
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }

    pub fn recipe(&self) -> &Recipe {
        &self.recipe
    }

    fn signs(&self) -> Vec<i8> {
        self.entries.iter().map(|&x| if x < 0.0 { -1 } else { 1 }).collect()
    }
}

/// Builds Hadamard matrices up to a maximum order.
#[derive(Debug, Clone, Copy)]
pub struct Constructor {
    max_size: usize,
}

impl Default for Constructor {
    fn default() -> Self {
        Constructor { max_size: DEFAULT_MAX_SIZE }
    }
}

impl Constructor {
    pub fn with_max_size(max_size: usize) -> Self {
        Constructor { max_size }
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    fn check_size(&self, size: Option<usize>) -> Result<usize> {
        match size {
            Some(n) if n <= self.max_size => Ok(n),
            Some(n) => Err(Error::SizeLimitExceeded { size: n, limit: self.max_size }),
            None => Err(Error::SizeLimitExceeded { size: usize::MAX, limit: self.max_size }),
        }
    }

    /// Sylvester matrix of order `2^exponent`.
    pub fn sylvester(&self, exponent: u32) -> Result<HadamardMatrix> {
        let recipe = Recipe::Sylvester(exponent);
        let n = self.check_size(recipe.size())?;
        // Unrolling the recursive doubling gives H[i][j] = (−1)^popcount(i & j).
        let signs: Vec<i8> = (0..n * n)
            .map(|idx| if ((idx / n) & (idx % n)).count_ones() % 2 == 0 { 1 } else { -1 })
            .collect();
        Ok(HadamardMatrix::from_signs(&signs, n, recipe))
    }

    /// Paley I matrix of order `q + 1`; `q` must be a prime with `q ≡ 3 (mod 4)`.
    pub fn paley1(&self, q: u64) -> Result<HadamardMatrix> {
        let recipe = Recipe::Paley1(q);
        paley::check_paley_prime(q, 3)?;
        let n = self.check_size(recipe.size())?;
        Ok(HadamardMatrix::from_signs(&paley::paley1_signs(q)?, n, recipe))
    }

    /// Paley II matrix of order `2(q + 1)`; `q` must be a prime with `q ≡ 1 (mod 4)`.
    pub fn paley2(&self, q: u64) -> Result<HadamardMatrix> {
        let recipe = Recipe::Paley2(q);
        paley::check_paley_prime(q, 1)?;
        let n = self.check_size(recipe.size())?;
        Ok(HadamardMatrix::from_signs(&paley::paley2_signs(q)?, n, recipe))
    }

    /// Kronecker product `a ⊗ b`.
    pub fn kron(&self, a: &HadamardMatrix, b: &HadamardMatrix) -> Result<HadamardMatrix> {
        let recipe = Recipe::kron(a.recipe.clone(), b.recipe.clone());
        let n = self.check_size(recipe.size())?;
        let (sa, sb) = (a.signs(), b.signs());
        let (na, nb) = (a.size(), b.size());
        let mut signs = vec![0i8; n * n];
        for i in 0..n {
            let (ia, ib) = (i / nb, i % nb);
            for j in 0..n {
                let (ja, jb) = (j / nb, j % nb);
                signs[i * n + j] = sa[ia * na + ja] * sb[ib * nb + jb];
            }
        }
        Ok(HadamardMatrix::from_signs(&signs, n, recipe))
    }

    /// Replays a recipe.
    pub fn build(&self, recipe: &Recipe) -> Result<HadamardMatrix> {
        self.check_size(recipe.size())?;
        match recipe {
            Recipe::Sylvester(k) => self.sylvester(*k),
            Recipe::Paley1(q) => self.paley1(*q),
            Recipe::Paley2(q) => self.paley2(*q),
            Recipe::Kron(a, b) => self.kron(&self.build(a)?, &self.build(b)?),
        }
    }

    /// Finds a recipe for order `size` without building it.
    ///
    /// Pinned recipes are used for 768, 1024, 1152, 1280 and 1408. Otherwise the size is
    /// written as `2^a · m` with `m` odd and, moving factors of two from the Sylvester part
    /// into the core one at a time, the first core reachable by Paley I or Paley II wins.
    pub fn plan(&self, size: usize) -> Result<Recipe> {
        if size == 0 {
            return Err(Error::InvalidArgument("Hadamard order must be positive".into()));
        }
        self.check_size(Some(size))?;
        if let Some(recipe) = pinned_plan(size) {
            return Ok(recipe);
        }
        let twos = size.trailing_zeros();
        let odd = size >> twos;
        if odd == 1 {
            return Ok(Recipe::Sylvester(twos));
        }
        for moved in 0..=twos {
            let core = (odd as u64) << moved;
            let remaining = twos - moved;
            let core_recipe = if paley_feasible(core - 1, 3) {
                Recipe::Paley1(core - 1)
            } else if core % 2 == 0 && core >= 4 && paley_feasible(core / 2 - 1, 1) {
                Recipe::Paley2(core / 2 - 1)
            } else {
                continue;
            };
            return Ok(if remaining == 0 {
                core_recipe
            } else {
                Recipe::kron(Recipe::Sylvester(remaining), core_recipe)
            });
        }
        Err(Error::NoKnownConstruction { size })
    }

    pub fn construct(&self, size: usize) -> Result<HadamardMatrix> {
        let recipe = self.plan(size)?;
        self.build(&recipe)
    }
}

fn paley_feasible(q: u64, class: u64) -> bool {
    paley::check_paley_prime(q, class).is_ok()
}

pub fn sylvester(exponent: u32) -> Result<HadamardMatrix> {
    Constructor::default().sylvester(exponent)
}

pub fn paley1(q: u64) -> Result<HadamardMatrix> {
    Constructor::default().paley1(q)
}

pub fn paley2(q: u64) -> Result<HadamardMatrix> {
    Constructor::default().paley2(q)
}

pub fn kron(a: &HadamardMatrix, b: &HadamardMatrix) -> Result<HadamardMatrix> {
    Constructor::default().kron(a, b)
}

pub fn plan(size: usize) -> Result<Recipe> {
    Constructor::default().plan(size)
}

/// Builds a normalized Hadamard matrix of order `size` with the default size limit.
pub fn construct(size: usize) -> Result<HadamardMatrix> {
    Constructor::default().construct(size)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationReport {
    /// Largest entry of `|H Hᵀ − I|`.
    pub max_orthogonality_residual: f64,
    /// Largest deviation of `|H_ij|` from `1/√C`.
    pub entry_magnitude_error: f64,
}

impl ValidationReport {
    pub fn passes(&self, orthogonality_tol: f64, magnitude_tol: f64) -> bool {
        self.max_orthogonality_residual < orthogonality_tol && self.entry_magnitude_error < magnitude_tol
    }
}

pub fn validate(h: &HadamardMatrix) -> ValidationReport {
    validate_matrix(&h.entries)
}

/// Validation for an arbitrary square matrix claimed to be a normalized Hadamard matrix.
pub fn validate_matrix(m: &Array2<f64>) -> ValidationReport {
    let target = (1.0 / m.nrows() as f64).sqrt();
    ValidationReport {
        max_orthogonality_residual: linalg::orthogonality_residual(m),
        entry_magnitude_error: m.iter().map(|x| (x.abs() - target).abs()).fold(0.0, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sylvester_base_cases() {
        assert_eq!(sylvester(0).unwrap().entries(), &Array2::from_elem((1, 1), 1.0));
        let h1 = sylvester(1).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(h1.entries(), &ndarray::arr2(&[[r, r], [r, -r]]));
        assert!((h1.entries()[[0, 0]] - 0.70710678).abs() < 1e-8);
    }

    #[test]
    fn sylvester_matches_recursive_doubling() {
        // Recursive block form with 1/√2 per level.
        let mut h = Array2::from_elem((1, 1), 1.0);
        for _ in 0..4 {
            let n = h.nrows();
            let mut next = Array2::zeros((2 * n, 2 * n));
            for i in 0..n {
                for j in 0..n {
                    let v = h[[i, j]] / 2f64.sqrt();
                    next[[i, j]] = v;
                    next[[i, j + n]] = v;
                    next[[i + n, j]] = v;
                    next[[i + n, j + n]] = -v;
                }
            }
            h = next;
        }
        let s = sylvester(4).unwrap();
        let diff = (&h - s.entries()).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b));
        assert!(diff < 1e-15);
    }

    #[test]
    fn sylvester_size_limit() {
        assert!(matches!(sylvester(13), Err(Error::SizeLimitExceeded { size: 8192, limit: 4096 })));
        assert!(matches!(sylvester(80), Err(Error::SizeLimitExceeded { .. })));
        assert!(Constructor::with_max_size(8192).sylvester(13).is_ok());
    }

    #[test]
    fn sylvester_10_is_orthogonal() {
        let report = validate(&sylvester(10).unwrap());
        assert!(report.max_orthogonality_residual < 1e-10);
        assert!(report.entry_magnitude_error < 1e-12);
    }

    #[test]
    fn paley_examples() {
        let p3 = paley1(3).unwrap();
        assert_eq!(p3.size(), 4);
        assert!(validate(&p3).max_orthogonality_residual < 1e-12);
        assert_eq!(paley1(383).unwrap().size(), 384);
        assert!(matches!(paley1(5), Err(Error::InvalidResidueClass { .. })));

        let p17 = paley2(17).unwrap();
        assert_eq!(p17.size(), 36);
        assert!(validate(&p17).max_orthogonality_residual < 1e-10);
        let p5 = paley2(5).unwrap();
        assert_eq!(p5.size(), 12);
        assert!(validate(&p5).max_orthogonality_residual < 1e-12);
        assert!(matches!(paley2(3), Err(Error::InvalidResidueClass { .. })));
    }

    #[test]
    fn kron_examples() {
        let s1 = sylvester(1).unwrap();
        let k = kron(&s1, &s1).unwrap();
        let s2 = sylvester(2).unwrap();
        let rk = validate(&k);
        assert!(rk.max_orthogonality_residual < 1e-12 && rk.entry_magnitude_error < 1e-15);
        // Same sign pattern as the order-4 Sylvester matrix, so equal up to row/column signs.
        assert_eq!(k.entries(), s2.entries());

        let one = sylvester(0).unwrap();
        let p = paley1(7).unwrap();
        assert_eq!(kron(&p, &one).unwrap().entries(), p.entries());

        let big = kron(&s1, &paley1(383).unwrap()).unwrap();
        assert_eq!(big.size(), 768);
        assert_eq!(big.recipe(), &Recipe::kron(Recipe::Sylvester(1), Recipe::Paley1(383)));
    }

    #[test]
    fn kron_residual_composes() {
        let a = paley2(13).unwrap();
        let b = paley1(11).unwrap();
        let k = kron(&a, &b).unwrap();
        let (ra, rb, rk) = (validate(&a), validate(&b), validate(&k));
        assert!(rk.max_orthogonality_residual <= ra.max_orthogonality_residual + rb.max_orthogonality_residual + 1e-12);
    }

    #[test]
    fn plans_for_pinned_and_searched_sizes() {
        assert_eq!(plan(1280).unwrap().to_string(), "(kron (sylvester 6) (paley1 19))");
        assert_eq!(plan(768).unwrap().to_string(), "(kron (sylvester 1) (paley1 383))");
        assert_eq!(plan(1152).unwrap().to_string(), "(kron (sylvester 5) (paley2 17))");
        assert_eq!(plan(1408).unwrap().to_string(), "(kron (sylvester 5) (paley1 43))");
        assert_eq!(plan(1024).unwrap(), Recipe::Sylvester(10));
        assert_eq!(plan(1).unwrap(), Recipe::Sylvester(0));
        assert_eq!(plan(12).unwrap(), Recipe::Paley1(11));
        assert_eq!(plan(24).unwrap(), Recipe::kron(Recipe::Sylvester(1), Recipe::Paley1(11)));
        assert_eq!(plan(36).unwrap(), Recipe::Paley2(17));
        assert!(matches!(plan(668), Err(Error::NoKnownConstruction { size: 668 })));
        assert!(matches!(plan(6), Err(Error::NoKnownConstruction { size: 6 })));
        assert!(matches!(plan(5000), Err(Error::SizeLimitExceeded { .. })));
        assert!(plan(0).is_err());
    }

    #[test]
    fn construct_trivial_and_plans_replay() {
        assert_eq!(construct(1).unwrap().entries(), &Array2::from_elem((1, 1), 1.0));
        let h = construct(1280).unwrap();
        let again = Constructor::default().build(h.recipe()).unwrap();
        assert!(h.entries().iter().zip(again.entries().iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn every_multiple_of_four_up_to_200_except_gaps() {
        // Prime-field Paley plus Sylvester covers every order ≤ 200 that is a multiple of
        // four except those needing prime-power fields or other constructions.
        let missing: Vec<usize> = (1..=50usize)
            .map(|k| 4 * k)
            .filter(|&n| plan(n).is_err())
            .collect();
        for n in (1..=50usize).map(|k| 4 * k) {
            if let Ok(r) = plan(n) {
                assert_eq!(r.size(), Some(n));
            }
        }
        assert_eq!(missing, vec![52, 92, 100, 116, 156, 172, 184, 188]);
    }

    #[test]
    fn validate_detects_corruption() {
        let mut m = sylvester(3).unwrap().into_entries();
        let clean = validate_matrix(&m);
        assert!(clean.max_orthogonality_residual < 1e-12 && clean.entry_magnitude_error < 1e-12);
        m[[2, 5]] = -2.0 / 8f64.sqrt();
        let report = validate_matrix(&m);
        assert!(report.entry_magnitude_error > 0.3);
        assert!(report.max_orthogonality_residual > 0.1);
    }

    #[test]
    fn validate_1408() {
        let report = validate(&construct(1408).unwrap());
        assert!(report.max_orthogonality_residual < 1e-9);
        assert!(report.entry_magnitude_error < 1e-12);
    }
}
