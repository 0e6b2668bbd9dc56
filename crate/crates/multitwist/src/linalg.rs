//! Exact linear algebra over Q and Z.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type QMat = Vec<Vec<BigRational>>;
pub type ZMat = Vec<Vec<BigInt>>;

pub fn q(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn qz(n: &BigInt) -> BigRational {
    BigRational::from_integer(n.clone())
}

pub fn to_qmat(m: &ZMat) -> QMat {
    m.iter().map(|r| r.iter().map(qz).collect()).collect()
}

pub fn zmat_from_i64(rows: &[Vec<i64>]) -> ZMat {
    rows.iter()
        .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
        .collect()
}

pub fn transpose<T: Clone>(m: &[Vec<T>], ncols: usize) -> Vec<Vec<T>> {
    (0..ncols).map(|j| m.iter().map(|r| r[j].clone()).collect()).collect()
}

/// Reduced row echelon form; returns the reduced matrix and pivot columns.
pub fn rref(mut m: QMat, ncols: usize) -> (QMat, Vec<usize>) {
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..ncols {
        if row >= m.len() {
            break;
        }
        let Some(p) = (row..m.len()).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(row, p);
        let inv = m[row][col].recip();
        for x in m[row].iter_mut() {
            *x = &*x * &inv;
        }
        for r in 0..m.len() {
            if r != row && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in col..ncols {
                    let d = &f * &m[row][c];
                    m[r][c] -= d;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    (m, pivots)
}

pub fn rank(m: &QMat, ncols: usize) -> usize {
    rref(m.clone(), ncols).1.len()
}

/// Basis of {x : m x = 0}.
pub fn nullspace(m: &QMat, ncols: usize) -> Vec<Vec<BigRational>> {
    let (r, pivots) = rref(m.clone(), ncols);
    let free: Vec<usize> = (0..ncols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![BigRational::zero(); ncols];
            v[f] = BigRational::one();
            for (i, &p) in pivots.iter().enumerate() {
                v[p] = -r[i][f].clone();
            }
            v
        })
        .collect()
}

/// Basis of {y : yᵀ m = 0}.
pub fn left_nullspace(m: &QMat, ncols: usize) -> Vec<Vec<BigRational>> {
    let t = transpose(m, ncols);
    nullspace(&t, m.len())
}

/// Whether `v` lies in the column span of `m`.
pub fn in_column_span(m: &QMat, ncols: usize, v: &[BigRational]) -> bool {
    let aug: QMat = m
        .iter()
        .zip(v)
        .map(|(r, x)| {
            let mut r = r.clone();
            r.push(x.clone());
            r
        })
        .collect();
    rank(m, ncols) == rank(&aug, ncols + 1)
}

/// Scale a rational vector to a primitive integer vector, keeping the sign
/// of the first nonzero entry.
pub fn primitive_integer(v: &[BigRational]) -> Vec<BigInt> {
    let mut l = BigInt::one();
    for x in v {
        l = l.lcm(x.denom());
    }
    let ints: Vec<BigInt> = v.iter().map(|x| (x * qz(&l)).to_integer()).collect();
    let g = ints.iter().fold(BigInt::zero(), |g, x| g.gcd(x));
    if g.is_zero() {
        return ints;
    }
    ints.into_iter().map(|x| x / &g).collect()
}

pub fn mat_mul(a: &ZMat, b: &ZMat) -> ZMat {
    let k = b.len();
    let n = if k == 0 { 0 } else { b[0].len() };
    a.iter()
        .map(|r| {
            (0..n)
                .map(|j| (0..k).fold(BigInt::zero(), |s, t| s + &r[t] * &b[t][j]))
                .collect()
        })
        .collect()
}

pub fn identity(n: usize) -> ZMat {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { BigInt::one() } else { BigInt::zero() }).collect())
        .collect()
}

pub fn mat_vec(a: &ZMat, v: &[BigInt]) -> Vec<BigInt> {
    a.iter()
        .map(|r| r.iter().zip(v).fold(BigInt::zero(), |s, (x, y)| s + x * y))
        .collect()
}

pub fn vec_mat(v: &[BigInt], a: &ZMat, ncols: usize) -> Vec<BigInt> {
    (0..ncols)
        .map(|j| v.iter().zip(a).fold(BigInt::zero(), |s, (x, r)| s + x * &r[j]))
        .collect()
}

pub fn dot(a: &[BigInt], b: &[BigInt]) -> BigInt {
    a.iter().zip(b).fold(BigInt::zero(), |s, (x, y)| s + x * y)
}

pub fn det(m: &ZMat) -> BigInt {
    let n = m.len();
    let mut a = to_qmat(m);
    let mut d = BigRational::one();
    for c in 0..n {
        let Some(p) = (c..n).find(|&r| !a[r][c].is_zero()) else {
            return BigInt::zero();
        };
        if p != c {
            a.swap(p, c);
            d = -d;
        }
        d *= a[c][c].clone();
        for r in c + 1..n {
            let f = &a[r][c] / &a[c][c];
            for k in c..n {
                let x = &f * &a[c][k];
                a[r][k] -= x;
            }
        }
    }
    d.to_integer()
}

/// Invariant factors (nonzero diagonal of the Smith normal form).
pub fn smith_invariants(m: &ZMat, ncols: usize) -> Vec<BigInt> {
    let mut a: ZMat = m.to_vec();
    let rows = a.len();
    let mut out = Vec::new();
    let mut t = 0;
    while t < rows.min(ncols) {
        // pick smallest nonzero entry in the trailing block
        let mut best: Option<(usize, usize)> = None;
        for i in t..rows {
            for j in t..ncols {
                if !a[i][j].is_zero()
                    && best.is_none_or(|(bi, bj)| a[i][j].abs() < a[bi][bj].abs())
                {
                    best = Some((i, j));
                }
            }
        }
        let Some((pi, pj)) = best else { break };
        a.swap(t, pi);
        for r in a.iter_mut() {
            r.swap(t, pj);
        }
        loop {
            let mut dirty = false;
            for i in t + 1..rows {
                if !a[i][t].is_zero() {
                    let f = a[i][t].div_floor(&a[t][t]);
                    for j in t..ncols {
                        let x = &f * &a[t][j];
                        a[i][j] -= x;
                    }
                    if !a[i][t].is_zero() {
                        a.swap(t, i);
                        dirty = true;
                    }
                }
            }
            for j in t + 1..ncols {
                if !a[t][j].is_zero() {
                    let f = a[t][j].div_floor(&a[t][t]);
                    for r in a.iter_mut().skip(t) {
                        let x = &f * &r[t];
                        r[j] -= x;
                    }
                    if !a[t][j].is_zero() {
                        for r in a.iter_mut() {
                            r.swap(t, j);
                        }
                        dirty = true;
                    }
                }
            }
            if dirty {
                continue;
            }
            // divisibility condition
            let mut fix = None;
            'outer: for i in t + 1..rows {
                for j in t + 1..ncols {
                    if !(&a[i][j] % &a[t][t]).is_zero() {
                        fix = Some(i);
                        break 'outer;
                    }
                }
            }
            match fix {
                Some(i) => {
                    for j in t..ncols {
                        let x = a[i][j].clone();
                        a[t][j] += x;
                    }
                }
                None => break,
            }
        }
        out.push(a[t][t].abs());
        t += 1;
    }
    out
}

/// Order of Z^n / rowspan(gens), or None when infinite.
pub fn quotient_order(gens: &ZMat, n: usize) -> Option<BigInt> {
    let inv = smith_invariants(gens, n);
    if inv.len() < n {
        return None;
    }
    Some(inv.iter().fold(BigInt::one(), |p, x| p * x))
}

/// Subgroup of Z^n in Hermite normal form, used for coset representatives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lattice {
    pub n: usize,
    /// Echelon rows; `pivots[k]` is the leading column of `rows[k]`, positive.
    pub rows: Vec<Vec<i64>>,
    pub pivots: Vec<usize>,
}

impl Lattice {
    pub fn new(n: usize, gens: &[Vec<i64>]) -> Self {
        let mut a: Vec<Vec<i64>> = gens.iter().filter(|g| g.iter().any(|&x| x != 0)).cloned().collect();
        let mut rows = Vec::new();
        let mut pivots = Vec::new();
        for col in 0..n {
            loop {
                let nz: Vec<usize> = (0..a.len()).filter(|&i| a[i][col] != 0).collect();
                if nz.len() <= 1 {
                    break;
                }
                let p = *nz.iter().min_by_key(|&&i| a[i][col].abs()).unwrap();
                for &i in &nz {
                    if i != p {
                        let f = a[i][col].div_euclid(a[p][col]);
                        for j in 0..n {
                            a[i][j] -= f * a[p][j];
                        }
                    }
                }
            }
            if let Some(p) = (0..a.len()).find(|&i| a[i][col] != 0) {
                let mut r = a.remove(p);
                if r[col] < 0 {
                    r.iter_mut().for_each(|x| *x = -*x);
                }
                rows.push(r);
                pivots.push(col);
            }
            a.retain(|r| r.iter().any(|&x| x != 0));
        }
        // reduce entries above pivots
        for k in 0..rows.len() {
            for i in 0..k {
                let f = rows[i][pivots[k]].div_euclid(rows[k][pivots[k]]);
                if f != 0 {
                    for j in 0..n {
                        rows[i][j] -= f * rows[k][j];
                    }
                }
            }
        }
        Lattice { n, rows, pivots }
    }

    /// Canonical coset representative of v modulo the lattice.
    pub fn reduce(&self, v: &[i64]) -> Vec<i64> {
        let mut v = v.to_vec();
        for (r, &p) in self.rows.iter().zip(&self.pivots) {
            let f = v[p].div_euclid(r[p]);
            if f != 0 {
                for j in 0..self.n {
                    v[j] -= f * r[j];
                }
            }
        }
        v
    }

    pub fn contains(&self, v: &[i64]) -> bool {
        self.reduce(v).iter().all(|&x| x == 0)
    }

    /// Index in Z^n, or None when infinite.
    pub fn index(&self) -> Option<i64> {
        if self.rows.len() < self.n {
            return None;
        }
        Some(self.rows.iter().zip(&self.pivots).map(|(r, &p)| r[p]).product())
    }

    /// All coset representatives when finite.
    pub fn cosets(&self) -> Option<Vec<Vec<i64>>> {
        self.index()?;
        let mut out = vec![vec![0i64; self.n]];
        for (r, &p) in self.rows.iter().zip(&self.pivots) {
            let mut next = Vec::new();
            for v in &out {
                for k in 0..r[p] {
                    let mut w = v.clone();
                    w[p] = k;
                    next.push(w);
                }
            }
            out = next;
        }
        Some(out)
    }
}

pub fn big_to_i64(x: &BigInt) -> i64 {
    x.to_i64().expect("integer out of i64 range")
}

pub fn gcd_all<'a>(xs: impl IntoIterator<Item = &'a BigInt>) -> BigInt {
    xs.into_iter().fold(BigInt::zero(), |g, x| g.gcd(x))
}

/// Combine basis vectors w = Σ λ_i v_i with the smallest positive integer
/// λ_i at each step that cancels no coordinate already nonzero. Every
/// coordinate nonvanishing on some v_i ends up nonzero.
pub fn greedy_nonvanishing(basis: &[Vec<BigRational>], len: usize) -> (Vec<BigInt>, Vec<BigRational>) {
    let mut w = vec![BigRational::zero(); len];
    let mut lambdas = Vec::new();
    for v in basis {
        let bad: Vec<BigRational> = w
            .iter()
            .zip(v)
            .filter(|(a, b)| !a.is_zero() && !b.is_zero())
            .map(|(a, b)| -(a / b))
            .collect();
        let mut lam = BigInt::one();
        while bad.contains(&qz(&lam)) {
            lam += 1;
        }
        for (a, b) in w.iter_mut().zip(v) {
            *a += qz(&lam) * b;
        }
        lambdas.push(lam);
    }
    (lambdas, w)
}
