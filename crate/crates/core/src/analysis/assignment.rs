//! Dense linear assignment by the Hungarian method with row potentials.

use ndarray::Array2;

/// Column assigned to each row minimizing the total cost of a square matrix.
pub fn min_cost_assignment(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment needs a square matrix");
    if n == 0 {
        return Vec::new();
    }
    // One-based bookkeeping; index 0 is a virtual column used to seed each row.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let row = cost.row(i0 - 1);
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let reduced = row[j - 1] - u[i0] - v[j];
                    if reduced < minv[j] {
                        minv[j] = reduced;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }
    assignment
}

/// Column assigned to each row maximizing the total weight.
pub fn max_weight_assignment(weight: &Array2<f64>) -> Vec<usize> {
    let top = weight.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    min_cost_assignment(&weight.mapv(|w| top - w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn total(w: &Array2<f64>, a: &[usize]) -> f64 {
        a.iter().enumerate().map(|(i, &j)| w[[i, j]]).sum()
    }

    fn brute_force_max(w: &Array2<f64>) -> f64 {
        fn rec(w: &Array2<f64>, row: usize, used: &mut Vec<bool>) -> f64 {
            if row == w.nrows() {
                return 0.0;
            }
            let mut best = f64::NEG_INFINITY;
            for j in 0..w.ncols() {
                if !used[j] {
                    used[j] = true;
                    best = best.max(w[[row, j]] + rec(w, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(w, 0, &mut vec![false; w.ncols()])
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=7 {
            for _ in 0..20 {
                let w = Array2::from_shape_fn((n, n), |_| rng.random_range(0.0..1.0));
                let a = max_weight_assignment(&w);
                let mut seen = a.clone();
                seen.sort_unstable();
                assert_eq!(seen, (0..n).collect::<Vec<_>>());
                assert!((total(&w, &a) - brute_force_max(&w)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn known_instance() {
        let cost = arr2(&[[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]]);
        let a = min_cost_assignment(&cost);
        assert_eq!(total(&cost, &a), 5.0);
        assert_eq!(a, vec![1, 0, 2]);
    }

    #[test]
    fn permutation_matrix_is_recovered() {
        let perm = [3usize, 0, 4, 1, 2];
        let w = Array2::from_shape_fn((5, 5), |(i, j)| if perm[i] == j { 1.0 } else { 0.0 });
        assert_eq!(max_weight_assignment(&w), perm.to_vec());
    }
}
