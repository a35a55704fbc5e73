//! Semi-positive conservation laws in exact integer arithmetic.
//!
//! The extreme rays of `{γ ≥ 0 : γᵀS = 0}` are enumerated with the
//! Schuster–Höfer tableau, then `p = n − rank(S)` of them are chosen so that,
//! after reordering species, the generator matrix reads `N = [I_p, N₂]`.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::{CrnError, CrnNetwork};
use crate::Matrix;

/// Generators `N` of the conservation laws with an identity block.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservationBasis {
    /// `p × n`, columns in the network's species order.
    matrix: DMatrix<i64>,
    /// `pivots[row]` is the species carrying the identity entry of `row`.
    pivots: Vec<usize>,
    /// Pivot species first, then the remaining species in network order.
    permutation: Vec<usize>,
    rank: usize,
}

impl ConservationBasis {
    pub fn n_moieties(&self) -> usize {
        self.pivots.len()
    }

    pub fn n_species(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn rank_of_stoichiometry(&self) -> usize {
        self.rank
    }

    pub fn matrix(&self) -> &DMatrix<i64> {
        &self.matrix
    }

    pub fn matrix_f64(&self) -> Matrix {
        self.matrix.map(|v| v as f64)
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Species not used as pivots, in network order; these index the rows of
    /// `S₂`.
    pub fn dependent_species(&self) -> &[usize] {
        &self.permutation[self.pivots.len()..]
    }

    /// `N` with columns reordered by [`Self::permutation`], i.e. `[I_p, N₂]`.
    pub fn permuted_matrix(&self) -> DMatrix<i64> {
        DMatrix::from_fn(self.n_moieties(), self.n_species(), |r, c| self.matrix[(r, self.permutation[c])])
    }
}

fn big_row(row: impl Iterator<Item = i64>) -> Vec<BigInt> {
    row.map(BigInt::from).collect()
}

/// Exact rank of an integer matrix.
pub fn rank(m: &DMatrix<i64>) -> usize {
    let mut a: Vec<Vec<BigRational>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| BigRational::from_integer(m[(i, j)].into())).collect())
        .collect();
    let (rows, cols) = (m.nrows(), m.ncols());
    let mut r = 0;
    for c in 0..cols {
        let Some(piv) = (r..rows).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        a.swap(r, piv);
        let pivot_row = a[r].clone();
        for row in a.iter_mut().skip(r + 1) {
            if row[c].is_zero() {
                continue;
            }
            let factor = &row[c] / &pivot_row[c];
            for (dst, src) in row.iter_mut().zip(&pivot_row).skip(c) {
                *dst -= &factor * src;
            }
        }
        r += 1;
        if r == rows {
            break;
        }
    }
    r
}

fn normalize(v: &mut [BigInt]) {
    let g = v.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x));
    if !g.is_zero() && !g.is_one() {
        for x in v.iter_mut() {
            *x /= &g;
        }
    }
}

fn support(v: &[BigInt]) -> Vec<bool> {
    v.iter().map(|x| !x.is_zero()).collect()
}

/// Extreme semi-positive conservation vectors, gcd-normalized, in
/// deterministic order (support size, then lexicographic).
pub fn extreme_conservation_vectors(net: &CrnNetwork) -> Vec<Vec<BigInt>> {
    let s = net.stoichiometry();
    let (n, r) = (s.nrows(), s.ncols());
    // Each tableau row is (remaining stoichiometry, conservation vector).
    let mut rows: Vec<(Vec<BigInt>, Vec<BigInt>)> = (0..n)
        .map(|i| {
            let mut e = vec![BigInt::zero(); n];
            e[i] = BigInt::one();
            (big_row(s.row(i).iter().copied()), e)
        })
        .collect();

    for col in 0..r {
        let supports: Vec<Vec<bool>> = rows.iter().map(|(_, g)| support(g)).collect();
        let mut next: Vec<(Vec<BigInt>, Vec<BigInt>)> = Vec::new();
        for (st, g) in &rows {
            if st[col].is_zero() {
                next.push((st.clone(), g.clone()));
            }
        }
        for a in 0..rows.len() {
            if !rows[a].0[col].is_positive() {
                continue;
            }
            for b in 0..rows.len() {
                if !rows[b].0[col].is_negative() {
                    continue;
                }
                let union: Vec<bool> = supports[a].iter().zip(&supports[b]).map(|(&x, &y)| x || y).collect();
                // Keep only combinations whose support is minimal.
                let dominated = (0..rows.len()).any(|c| {
                    c != a && c != b && supports[c].iter().zip(&union).all(|(&sc, &su)| !sc || su)
                });
                if dominated {
                    continue;
                }
                let wa = -&rows[b].0[col];
                let wb = rows[a].0[col].clone();
                let mut st: Vec<BigInt> = rows[a].0.iter().zip(&rows[b].0).map(|(x, y)| &wa * x + &wb * y).collect();
                let mut g: Vec<BigInt> = rows[a].1.iter().zip(&rows[b].1).map(|(x, y)| &wa * x + &wb * y).collect();
                let gcd = st.iter().chain(&g).fold(BigInt::zero(), |acc, x| acc.gcd(x));
                if !gcd.is_zero() && !gcd.is_one() {
                    st.iter_mut().chain(g.iter_mut()).for_each(|x| *x /= &gcd);
                }
                next.push((st, g));
            }
        }
        rows = next;
    }

    let mut rays: Vec<Vec<BigInt>> = rows.into_iter().map(|(_, g)| g).collect();
    for ray in rays.iter_mut() {
        normalize(ray);
    }
    rays.sort_by(|a, b| {
        let sa = a.iter().filter(|x| !x.is_zero()).count();
        let sb = b.iter().filter(|x| !x.is_zero()).count();
        sa.cmp(&sb).then_with(|| b.cmp(a))
    });
    rays.dedup();
    rays
}

/// Species where `rays[k]` equals 1 and every other selected ray is 0.
fn private_units(rays: &[Vec<BigInt>], selected: &[usize], k: usize) -> Vec<usize> {
    let n = rays[k].len();
    (0..n)
        .filter(|&i| rays[k][i].is_one() && selected.iter().all(|&o| o == k || rays[o][i].is_zero()))
        .collect()
}

const SEARCH_BUDGET: usize = 200_000;

fn select_generators(rays: &[Vec<BigInt>], p: usize) -> Option<Vec<usize>> {
    fn dfs(rays: &[Vec<BigInt>], p: usize, start: usize, chosen: &mut Vec<usize>, budget: &mut usize) -> bool {
        if chosen.len() == p {
            return true;
        }
        for cand in start..rays.len() {
            if *budget == 0 {
                return false;
            }
            *budget -= 1;
            if rays.len() - cand < p - chosen.len() {
                return false;
            }
            chosen.push(cand);
            let ok = chosen.iter().all(|&k| !private_units(rays, chosen, k).is_empty());
            if ok && dfs(rays, p, cand + 1, chosen, budget) {
                return true;
            }
            chosen.pop();
        }
        false
    }
    let mut chosen = Vec::with_capacity(p);
    let mut budget = SEARCH_BUDGET;
    dfs(rays, p, 0, &mut chosen, &mut budget).then_some(chosen)
}

/// Integer generators `N = [I_p, N₂]` (up to species order) with `N S = 0`.
pub fn conservation_basis(net: &CrnNetwork) -> Result<ConservationBasis, CrnError> {
    let n = net.n_species();
    let rank = rank(net.stoichiometry());
    let p = n - rank;
    let rays = extreme_conservation_vectors(net);
    if rays.len() < p {
        return Err(CrnError::NotWeaklyElemented(format!(
            "only {} semi-positive conservation vectors for {p} conservation laws",
            rays.len()
        )));
    }
    let chosen = select_generators(&rays, p).ok_or_else(|| {
        CrnError::NotWeaklyElemented(format!(
            "no {p} semi-positive generators admit an identity block"
        ))
    })?;

    let mut rows: Vec<(usize, &Vec<BigInt>)> = chosen
        .iter()
        .map(|&k| (private_units(&rays, &chosen, k)[0], &rays[k]))
        .collect();
    rows.sort_by_key(|&(pivot, _)| pivot);

    let mut matrix = DMatrix::<i64>::zeros(p, n);
    for (r, (_, ray)) in rows.iter().enumerate() {
        for (c, v) in ray.iter().enumerate() {
            matrix[(r, c)] = v
                .to_i64()
                .ok_or_else(|| CrnError::NotWeaklyElemented("conservation coefficient overflows i64".into()))?;
        }
    }
    let pivots: Vec<usize> = rows.iter().map(|&(pivot, _)| pivot).collect();
    let mut permutation = pivots.clone();
    permutation.extend((0..n).filter(|i| !pivots.contains(i)));

    // N S = 0 in exact arithmetic.
    let s = net.stoichiometry();
    for r in 0..p {
        for j in 0..s.ncols() {
            let dot: i128 = (0..n).map(|i| matrix[(r, i)] as i128 * s[(i, j)] as i128).sum();
            if dot != 0 {
                return Err(CrnError::NotWeaklyElemented(format!(
                    "generator {r} is not conserved by reaction {j}"
                )));
            }
        }
    }

    Ok(ConservationBasis {
        matrix,
        pivots,
        permutation,
        rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crn::parse_network;

    fn basis(text: &str) -> ConservationBasis {
        conservation_basis(&parse_network(text).unwrap()).unwrap()
    }

    #[test]
    fn reversible_pair() {
        let b = basis("reaction 2 : A -> B\nreaction 1 : B -> A");
        assert_eq!(b.n_moieties(), 1);
        assert_eq!(b.matrix(), &DMatrix::from_row_slice(1, 2, &[1, 1]));
        assert_eq!(b.permutation(), &[0, 1]);
        assert_eq!(b.dependent_species(), &[1]);
    }

    #[test]
    fn binding_reaction() {
        let b = basis("reaction 1 : A + B -> C\nreaction 1 : C -> A + B");
        assert_eq!(b.matrix(), &DMatrix::from_row_slice(2, 3, &[1, 0, 1, 0, 1, 1]));
        assert_eq!(b.pivots(), &[0, 1]);
        assert_eq!(b.permuted_matrix(), DMatrix::from_row_slice(2, 3, &[1, 0, 1, 0, 1, 1]));
    }

    #[test]
    fn three_cycle() {
        let b = basis("reaction 1 : A -> B\nreaction 1 : B -> C\nreaction 1 : C -> A");
        assert_eq!(b.matrix(), &DMatrix::from_row_slice(1, 3, &[1, 1, 1]));
        assert_eq!(b.rank_of_stoichiometry(), 2);
    }

    #[test]
    fn dimer_has_weight_two() {
        let b = basis("reaction 1 : 2 M -> D\nreaction 1 : D -> 2 M");
        assert_eq!(b.matrix(), &DMatrix::from_row_slice(1, 2, &[1, 2]));
    }

    #[test]
    fn pivot_is_chosen_where_the_entry_is_one() {
        // 2A <-> B: the only generator is (1, 2); B cannot be a pivot.
        let b = basis("reaction 1 : B -> 2 A\nreaction 1 : 2 A -> B");
        assert_eq!(b.matrix(), &DMatrix::from_row_slice(1, 2, &[2, 1]));
        assert_eq!(b.pivots(), &[1]);
        assert_eq!(b.permutation(), &[1, 0]);
    }

    #[test]
    fn open_network_has_no_moieties() {
        let b = basis("reaction 1 : -> A\nreaction 1 : A ->");
        assert_eq!(b.n_moieties(), 0);
        assert_eq!(b.dependent_species(), &[0]);
    }

    #[test]
    fn mixed_sign_law_is_rejected() {
        // x_A − x_B is conserved but no semi-positive vector is.
        let net = parse_network("reaction 1 : -> A + B\nreaction 1 : A + B ->").unwrap();
        assert!(matches!(conservation_basis(&net), Err(CrnError::NotWeaklyElemented(_))));
    }

    #[test]
    fn no_identity_block_is_rejected() {
        // 2A -> 3B conserves 3A + 2B, which has no unit entry.
        let net = parse_network("reaction 1 : 2 A -> B + B + B").unwrap();
        let rays = extreme_conservation_vectors(&net);
        assert_eq!(rays, vec![vec![BigInt::from(3), BigInt::from(2)]]);
        assert!(matches!(conservation_basis(&net), Err(CrnError::NotWeaklyElemented(_))));
    }

    #[test]
    fn exact_rank() {
        let m = DMatrix::from_row_slice(3, 3, &[1, 2, 3, 2, 4, 6, 1, 0, 1]);
        assert_eq!(rank(&m), 2);
        assert_eq!(rank(&DMatrix::<i64>::zeros(2, 2)), 0);
    }
}
