//! Naive reference implementations of the matrix measurements, written as
//! literal double loops with the closed-form normalizing constants. They
//! share no code with the library.

#![allow(dead_code)]

pub type Dense = Vec<Vec<f64>>;

/// Mean and population std of a list, two-pass.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let mut s = 0.0;
    for x in xs {
        s += x;
    }
    let mu = s / xs.len() as f64;
    let mut v = 0.0;
    for x in xs {
        v += (x - mu) * (x - mu);
    }
    (mu, (v / xs.len() as f64).sqrt())
}

pub fn svm(d: &Dense) -> f64 {
    let size = d.len() as f64;
    let mut s = 0.0;
    for row in d {
        for x in row {
            s += x * x;
        }
    }
    s / (2.0 * size * size)
}

pub fn mean(d: &Dense) -> f64 {
    let n = d.len() - 1;
    let mut s = 0.0;
    for i in 1..=n {
        for j in 0..i {
            s += d[i][j];
        }
    }
    2.0 * s / (n * (n + 1)) as f64
}

pub fn std(d: &Dense) -> f64 {
    let n = d.len() - 1;
    let mu = mean(d);
    let mut s = 0.0;
    for i in 1..=n {
        for j in 0..i {
            s += (d[i][j] - mu).powi(2);
        }
    }
    (2.0 * s / (n * (n + 1)) as f64).sqrt()
}

pub fn asv(d: &Dense, tau: f64) -> f64 {
    let n = d.len() - 1;
    let mut count = 0usize;
    for i in 1..=n {
        for j in 0..i {
            if d[i][j] > tau {
                count += 1;
            }
        }
    }
    2.0 * count as f64 / (n * (n + 1)) as f64
}

pub fn ssty(d: &Dense, sub: &Dense) -> f64 {
    let n = d.len() - 1;
    let mut s = 0.0;
    for i in 1..=n {
        for j in 0..i {
            s += (d[i][j] - sub[i][j]).powi(2);
        }
    }
    2.0 * s / (n * (n + 1)) as f64
}

/// Diagonal replaced by the mean of the horizontal neighbours that exist.
pub fn fill_diagonal(d: &Dense) -> Dense {
    let size = d.len();
    let mut out = d.clone();
    for i in 0..size {
        let mut s = 0.0;
        let mut c = 0.0;
        if i > 0 {
            s += d[i][i - 1];
            c += 1.0;
        }
        if i + 1 < size {
            s += d[i][i + 1];
            c += 1.0;
        }
        out[i][i] = if c > 0.0 { s / c } else { 0.0 };
    }
    out
}

pub struct Gradients {
    pub hg_mean: f64,
    pub hg_std: f64,
    pub hg_rstd: f64,
    pub vg_mean: f64,
    pub vg_std: f64,
    pub vg_cstd: f64,
    pub dg_mean: f64,
    pub dg_std: f64,
    pub g_overall: f64,
}

pub fn gradients(d: &Dense) -> Gradients {
    let d = fill_diagonal(d);
    let n = d.len() - 1;
    let pairs = (n * (n + 1)) as f64 / 2.0;

    let mut hg_sum = 0.0;
    for i in 1..=n {
        for j in 1..=i {
            hg_sum += d[i][j - 1] - d[i][j];
        }
    }
    let hg_mean = hg_sum / pairs;
    let mut hg_sq = 0.0;
    for i in 1..=n {
        for j in 1..=i {
            hg_sq += (d[i][j - 1] - d[i][j] - hg_mean).powi(2);
        }
    }
    let hg_std = (hg_sq / pairs).sqrt();
    let mut hg_rstd = 0.0;
    for i in 1..=n {
        let row: Vec<f64> = (1..=i).map(|j| d[i][j - 1] - d[i][j]).collect();
        hg_rstd += mean_std(&row).1;
    }
    hg_rstd /= n as f64;

    let mut vg_sum = 0.0;
    for i in 0..n {
        for j in 0..=i {
            vg_sum += d[i + 1][j] - d[i][j];
        }
    }
    let vg_mean = vg_sum / pairs;
    let mut vg_sq = 0.0;
    for i in 0..n {
        for j in 0..=i {
            vg_sq += (d[i + 1][j] - d[i][j] - vg_mean).powi(2);
        }
    }
    let vg_std = (vg_sq / pairs).sqrt();
    let mut vg_cstd = 0.0;
    for j in 0..n {
        let col: Vec<f64> = (j..n).map(|i| d[i + 1][j] - d[i][j]).collect();
        vg_cstd += mean_std(&col).1;
    }
    vg_cstd /= n as f64;

    let dg_count = (n * (n - 1)) as f64 / 2.0;
    let mut dg_sum = 0.0;
    for i in 1..n {
        for j in 1..=i {
            dg_sum += d[i + 1][j - 1] - d[i][j];
        }
    }
    let dg_mean = dg_sum / dg_count;
    let mut dg_sq = 0.0;
    for i in 1..n {
        for j in 1..=i {
            dg_sq += (d[i + 1][j - 1] - d[i][j] - dg_mean).powi(2);
        }
    }
    let dg_std = (dg_sq / dg_count).sqrt();

    let r = |m: f64, s: f64| if s == 0.0 { 0.0 } else { m / s };
    Gradients {
        hg_mean,
        hg_std,
        hg_rstd,
        vg_mean,
        vg_std,
        vg_cstd,
        dg_mean,
        dg_std,
        g_overall: (r(hg_mean, hg_std) + r(vg_mean, vg_std) + r(dg_mean, dg_std)) / 3.0,
    }
}

pub fn dctny(d: &Dense) -> f64 {
    let n = d.len() - 1;
    let phi_mean = mean(d);
    if phi_mean == 0.0 {
        return 0.0;
    }
    let mut s = 0.0;
    for r in 1..n {
        let mut mu = 0.0;
        for j in 0..=n - r {
            mu += d[j + r][j] / (n - r + 1) as f64;
        }
        for j in 0..=n - r {
            s += (d[j + r][j] - mu).powi(2);
        }
    }
    s / phi_mean
}

pub fn asymm(d: &Dense) -> f64 {
    let n = d.len() - 1;
    let phi_mean = mean(d);
    if phi_mean == 0.0 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 1..=n {
        for j in 0..i {
            s += (d[i][j] - d[n - j][n - i]).abs();
        }
    }
    s / phi_mean
}

/// All sixteen, in canonical order.
pub fn all(d: &Dense, sub: &Dense, tau: f64) -> [f64; 16] {
    let g = gradients(d);
    [
        svm(d),
        mean(d),
        std(d),
        asv(d, tau),
        ssty(d, sub),
        g.hg_mean,
        g.hg_std,
        g.hg_rstd,
        g.vg_mean,
        g.vg_std,
        g.vg_cstd,
        g.dg_mean,
        g.dg_std,
        g.g_overall,
        dctny(d),
        asymm(d),
    ]
}

/// `sqrt(mean_k (g_i[k] - g_j[k])^2)` for every pair, from per-row signals.
pub fn variance_matrix(rows: &[Vec<f64>]) -> Dense {
    let size = rows.len();
    let m = rows[0].len() as f64;
    let mut d = vec![vec![0.0; size]; size];
    for i in 0..size {
        for j in 0..size {
            let mut s = 0.0;
            for k in 0..rows[i].len() {
                s += (rows[i][k] - rows[j][k]).powi(2);
            }
            d[i][j] = (s / m).sqrt();
        }
    }
    d
}

/// Fraction of objects correct under every transformation, by explicit
/// product of per-transformation indicators.
pub fn robust_accuracy(pred: &[Vec<u16>], truth: &[u16]) -> f64 {
    let m = truth.len();
    let mut robust = 0usize;
    for k in 0..m {
        let mut all = 1u32;
        for row in pred {
            all *= u32::from(row[k] == truth[k]);
        }
        robust += all as usize;
    }
    robust as f64 / m as f64
}

/// Relative closeness with a tiny absolute floor for exact zeros.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}
