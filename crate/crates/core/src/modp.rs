//! Dense linear algebra over the prime field Z_p, enough to synthesize
//! sum-gate circuits.

pub type Matrix = Vec<Vec<u32>>;

pub fn add(a: u32, b: u32, p: u32) -> u32 {
    (a + b) % p
}

pub fn sub(a: u32, b: u32, p: u32) -> u32 {
    (a + p - b % p) % p
}

pub fn mul(a: u32, b: u32, p: u32) -> u32 {
    ((a as u64 * b as u64) % p as u64) as u32
}

pub fn pow(mut base: u32, mut e: u32, p: u32) -> u32 {
    let mut acc = 1 % p;
    base %= p;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul(acc, base, p);
        }
        base = mul(base, base, p);
        e >>= 1;
    }
    acc
}

/// Multiplicative inverse; `a` must be nonzero mod p.
pub fn inv(a: u32, p: u32) -> u32 {
    debug_assert!(a % p != 0, "zero has no inverse");
    pow(a, p - 2, p)
}

pub fn identity(n: usize) -> Matrix {
    (0..n).map(|i| (0..n).map(|j| u32::from(i == j)).collect()).collect()
}

pub fn mat_mul(a: &Matrix, b: &Matrix, p: u32) -> Matrix {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).fold(0, |acc, k| add(acc, mul(row[k], b[k][j], p), p)))
                .collect()
        })
        .collect()
}

pub fn mat_vec(a: &Matrix, x: &[u32], p: u32) -> Vec<u32> {
    a.iter()
        .map(|row| row.iter().zip(x).fold(0, |acc, (&r, &v)| add(acc, mul(r, v, p), p)))
        .collect()
}

/// Row-reduces a copy of `m`; returns (rank, determinant if square).
fn eliminate(m: &Matrix, p: u32) -> (usize, u32) {
    let mut a = m.clone();
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let mut det = 1;
    let mut rank = 0;
    for c in 0..cols {
        let Some(piv) = (rank..rows).find(|&r| a[r][c] != 0) else {
            det = 0;
            continue;
        };
        if piv != rank {
            a.swap(piv, rank);
            det = sub(0, det, p);
        }
        det = mul(det, a[rank][c], p);
        let iv = inv(a[rank][c], p);
        for r in 0..rows {
            if r != rank && a[r][c] != 0 {
                let f = mul(a[r][c], iv, p);
                for k in c..cols {
                    let t = mul(f, a[rank][k], p);
                    a[r][k] = sub(a[r][k], t, p);
                }
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    if rows != cols || rank < rows {
        det = 0;
    }
    (rank, det)
}

pub fn rank(m: &Matrix, p: u32) -> usize {
    eliminate(m, p).0
}

pub fn det(m: &Matrix, p: u32) -> u32 {
    eliminate(m, p).1
}

/// Gauss-Jordan inverse; `None` if singular.
pub fn inverse(m: &Matrix, p: u32) -> Option<Matrix> {
    let n = m.len();
    let mut a: Matrix = m
        .iter()
        .zip(identity(n))
        .map(|(row, id)| row.iter().copied().chain(id).collect())
        .collect();
    for c in 0..n {
        let piv = (c..n).find(|&r| a[r][c] != 0)?;
        a.swap(piv, c);
        let iv = inv(a[c][c], p);
        a[c].iter_mut().for_each(|x| *x = mul(*x, iv, p));
        for r in 0..n {
            if r != c && a[r][c] != 0 {
                let f = a[r][c];
                for k in 0..2 * n {
                    let t = mul(f, a[c][k], p);
                    a[r][k] = sub(a[r][k], t, p);
                }
            }
        }
    }
    Some(a.into_iter().map(|row| row[n..].to_vec()).collect())
}

/// Elementary row operation row[target] += coeff * row[control].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transvection {
    pub target: usize,
    pub control: usize,
    pub coeff: u32,
}

fn apply_row_op(a: &mut Matrix, op: Transvection, p: u32) {
    let src = a[op.control].clone();
    for (x, s) in a[op.target].iter_mut().zip(src) {
        *x = add(*x, mul(op.coeff, s, p), p);
    }
}

/// Writes a determinant-one matrix as a product of transvections.
///
/// Returns ops T_1..T_r (each `x[target] += coeff * x[control]`) such that
/// applying them in order to a column vector x yields m x.
pub fn transvection_circuit(m: &Matrix, p: u32) -> Option<Vec<Transvection>> {
    let n = m.len();
    if det(m, p) != 1 {
        return None;
    }
    let mut a = m.clone();
    let mut ops = Vec::new();
    let mut record = |a: &mut Matrix, op: Transvection| {
        apply_row_op(a, op, p);
        ops.push(op);
    };
    for c in 0..n.saturating_sub(1) {
        if a[c][c] == 0 {
            let r = (c + 1..n).find(|&r| a[r][c] != 0)?;
            record(&mut a, Transvection { target: c, control: r, coeff: 1 });
        }
        if a[c][c] != 1 {
            // Borrow a lower row to move the pivot to one.
            let r = c + 1;
            if a[r][c] == 0 {
                record(&mut a, Transvection { target: r, control: c, coeff: 1 });
            }
            let coeff = mul(sub(1, a[c][c], p), inv(a[r][c], p), p);
            record(&mut a, Transvection { target: c, control: r, coeff });
        }
        for r in 0..n {
            if r != c && a[r][c] != 0 {
                let coeff = sub(0, a[r][c], p);
                record(&mut a, Transvection { target: r, control: c, coeff });
            }
        }
    }
    // The last column is now e_last up to entries above the pivot.
    let last = n - 1;
    for r in 0..last {
        if a[r][last] != 0 {
            let coeff = sub(0, a[r][last], p);
            record(&mut a, Transvection { target: r, control: last, coeff });
        }
    }
    debug_assert_eq!(a, identity(n));
    // E_q ... E_1 m = I, so m = E_1^-1 ... E_q^-1: apply E_q^-1 first.
    Some(
        ops.into_iter()
            .rev()
            .map(|op| Transvection { coeff: sub(0, op.coeff, p), ..op })
            .collect(),
    )
}
