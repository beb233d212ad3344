/// Solves `a x = b` for a small dense system by Gaussian elimination with
/// partial pivoting. `a` is row-major n×n. Returns `None` when singular.
pub(crate) fn solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[piv * n + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row * n + row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Ordinary least squares for `rows · β ≈ y`.
pub(crate) fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let p = rows.first()?.len();
    let mut ata = vec![0.0; p * p];
    let mut aty = vec![0.0; p];
    for (r, &t) in rows.iter().zip(y) {
        for i in 0..p {
            aty[i] += r[i] * t;
            for j in 0..p {
                ata[i * p + j] += r[i] * r[j];
            }
        }
    }
    solve(ata, aty)
}

/// Levenberg–Marquardt on `residuals(p)` with a central-difference Jacobian.
pub(crate) fn levenberg_marquardt(
    residuals: impl Fn(&[f64]) -> Vec<f64>,
    p0: &[f64],
    max_iter: usize,
) -> Vec<f64> {
    let cost = |p: &[f64]| residuals(p).iter().map(|r| r * r).sum::<f64>();
    let mut p = p0.to_vec();
    let mut c = cost(&p);
    let mut lambda = 1e-3;
    let n = p.len();
    for _ in 0..max_iter {
        let r = residuals(&p);
        let m = r.len();
        let mut jac = vec![0.0; m * n];
        for j in 0..n {
            let h = 1e-6 * p[j].abs().max(1e-3);
            let mut pp = p.clone();
            pp[j] += h;
            let rp = residuals(&pp);
            pp[j] -= 2.0 * h;
            let rm = residuals(&pp);
            for i in 0..m {
                jac[i * n + j] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let mut jtj = vec![0.0; n * n];
        let mut jtr = vec![0.0; n];
        for i in 0..m {
            for a in 0..n {
                jtr[a] -= jac[i * n + a] * r[i];
                for b in 0..n {
                    jtj[a * n + b] += jac[i * n + a] * jac[i * n + b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..20 {
            let mut damped = jtj.clone();
            for a in 0..n {
                damped[a * n + a] += lambda * jtj[a * n + a].max(1e-12);
            }
            if let Some(step) = solve(damped, jtr.clone()) {
                let cand: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
                let cc = cost(&cand);
                if cc.is_finite() && cc < c {
                    let rel = (c - cc) / c.max(1e-300);
                    p = cand;
                    c = cc;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = rel > 1e-14;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let x = solve(vec![2.0, 1.0, 1.0, 3.0], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
        assert!(solve(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 1.0]).is_none());
    }

    #[test]
    fn recovers_exponential_decay() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.2).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * (-0.7 * x).exp()).collect();
        let p = levenberg_marquardt(
            |p| xs.iter().zip(&ys).map(|(x, y)| p[0] * (-p[1] * x).exp() - y).collect(),
            &[1.0, 0.1],
            200,
        );
        assert!((p[0] - 3.0).abs() < 1e-6 && (p[1] - 0.7).abs() < 1e-6, "{p:?}");
    }
}
