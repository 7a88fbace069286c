/// Dense row-major square matrix.
#[derive(Clone, Debug)]
pub(crate) struct Dense {
    pub n: usize,
    pub a: Vec<f64>,
}

impl Dense {
    pub fn identity(n: usize) -> Self {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        Dense { n, a }
    }

    pub fn add(&mut self, i: usize, j: usize, x: f64) {
        self.a[i * self.n + j] += x;
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot falls below `1e-12`.
pub(crate) fn solve(mut m: Dense, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = m.n;
    let a = &mut m.a;
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best < 1e-12 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row * n + k] * x[k];
        }
        x[row] = s / a[row * n + row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_with_pivoting() {
        // 0x + y = 2; x + y = 3
        let m = Dense {
            n: 2,
            a: vec![0.0, 1.0, 1.0, 1.0],
        };
        let x = solve(m, vec![2.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn singular_is_none() {
        let m = Dense {
            n: 2,
            a: vec![1.0, 2.0, 2.0, 4.0],
        };
        assert!(solve(m, vec![1.0, 2.0]).is_none());
    }
}
