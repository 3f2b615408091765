//! Scalar special functions and discrete samplers shared across modules.
//!
//! Everything here is classical numerics: Lanczos log-gamma, the regularized
//! incomplete gamma pair (series + Lentz continued fraction), error function
//! and normal CDF built on top of it, and a Poisson sampler (Knuth product
//! method for small means, Hörmann's transformed rejection for large ones).

use crate::rng::CounterRng;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma domain: x > 0, got {x}");
    if x < 0.5 {
        // reflection keeps the Lanczos argument comfortably positive
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_cf(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..500 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_cf(a: f64, x: f64) -> f64 {
    // modified Lentz
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

pub fn erf(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let p = gamma_p(0.5, x * x);
    if x > 0.0 {
        p
    } else {
        -p
    }
}

pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        gamma_q(0.5, x * x)
    } else {
        1.0 + gamma_p(0.5, x * x)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Chi-square survival function (p-value of a statistic `x` at `k` dof).
pub fn chi2_sf(x: f64, k: f64) -> f64 {
    gamma_q(0.5 * k, 0.5 * x)
}

/// Standard normal deviate (Box-Muller; the sine partner is discarded).
pub fn standard_normal(rng: &mut CounterRng) -> f64 {
    let u1 = (1.0 - rng.next_f64()).max(1e-300);
    let u2 = rng.next_f64();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Cholesky solve of the symmetric positive-definite system `A x = b`,
/// `a` row-major n x n. Returns None when a pivot falls below a relative
/// tolerance (rank deficiency).
pub fn solve_spd(n: usize, a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let chol = cholesky(n, a)?;
    Some(chol_solve(n, &chol, b))
}

/// Inverse of a symmetric positive-definite matrix, row-major.
pub fn invert_spd(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    let chol = cholesky(n, a)?;
    let mut inv = vec![0.0; n * n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = chol_solve(n, &chol, &e);
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    Some(inv)
}

fn cholesky(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0f64, f64::max).max(1e-300);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= scale * 1e-12 {
                    return None;
                }
                l[i * n + j] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn chol_solve(n: usize, l: &[f64], b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    x
}

/// One Poisson deviate with mean `lambda` >= 0.
///
/// Knuth's product method below mean 10, Hörmann's PTRS transformed
/// rejection above; both are exact samplers, not normal approximations.
pub fn poisson(lambda: f64, rng: &mut CounterRng) -> u64 {
    assert!(
        lambda >= 0.0 && lambda.is_finite(),
        "poisson mean must be finite and nonnegative, got {lambda}"
    );
    if lambda == 0.0 {
        return 0;
    }
    if lambda < 10.0 {
        let limit = (-lambda).exp();
        let mut k = 0u64;
        let mut prod = 1.0;
        loop {
            prod *= rng.next_f64();
            if prod <= limit {
                return k;
            }
            k += 1;
        }
    }
    // PTRS (Hörmann 1993), constants as published
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.024_83 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.next_f64() - 0.5;
        let v = rng.next_f64();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln()
            <= k * loglam - lambda - ln_gamma(k + 1.0)
        {
            return k as u64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_anchors() {
        // Gamma(1) = Gamma(2) = 1, Gamma(5) = 24, Gamma(0.5) = sqrt(pi)
        assert!((ln_gamma(1.0)).abs() < 1e-13);
        assert!((ln_gamma(2.0)).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24.0f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-13);
    }

    #[test]
    fn incomplete_gamma_complement() {
        for &(a, x) in &[(0.5, 0.3), (2.0, 1.0), (5.0, 9.0), (24.5, 20.0)] {
            let s = gamma_p(a, x) + gamma_q(a, x);
            assert!((s - 1.0).abs() < 1e-13, "a={a} x={x} sum={s}");
        }
    }

    #[test]
    fn erf_anchors() {
        // erf(1) = 0.8427007929497149
        assert!((erf(1.0) - 0.842_700_792_949_714_9).abs() < 1e-12);
        assert!((erf(-1.0) + 0.842_700_792_949_714_9).abs() < 1e-12);
        // normal_cdf(1.959964) ~ 0.975
        assert!((normal_cdf(1.959_964) - 0.975).abs() < 1e-6);
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn chi2_sf_anchors() {
        // classic table values: chi2_{0.01}(2) = 9.21034, chi2_{0.01}(49) = 74.9195
        assert!((chi2_sf(9.210_340_371_976_18, 2.0) - 0.01).abs() < 1e-9);
        let p = chi2_sf(74.919_473, 49.0);
        assert!((p - 0.01).abs() < 1e-4, "p = {p}");
    }

    #[test]
    fn spd_solve_and_inverse() {
        // A = [[4,1,0],[1,3,1],[0,1,2]], x = [1,-2,3] -> b = A x
        let a = [4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0];
        let x_true = [1.0, -2.0, 3.0];
        let b: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| a[i * 3 + j] * x_true[j]).sum())
            .collect();
        let x = solve_spd(3, &a, &b).unwrap();
        for (xi, ti) in x.iter().zip(x_true.iter()) {
            assert!((xi - ti).abs() < 1e-12);
        }
        let inv = invert_spd(3, &a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let prod: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod - expect).abs() < 1e-12);
            }
        }
        // singular matrix reports rank deficiency
        let sing = [1.0, 1.0, 1.0, 1.0];
        assert!(solve_spd(2, &sing, &[1.0, 1.0]).is_none());
    }

    #[test]
    fn standard_normal_moments() {
        let mut rng = CounterRng::new(77);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64 - mean * mean;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn poisson_zero_and_small_mean() {
        let mut rng = CounterRng::new(11);
        assert_eq!(poisson(0.0, &mut rng), 0);
        let n = 100_000;
        let lam = 3.7;
        let mean = (0..n).map(|_| poisson(lam, &mut rng) as f64).sum::<f64>() / n as f64;
        let se = (lam / n as f64).sqrt();
        assert!((mean - lam).abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn poisson_large_mean_moments() {
        let mut rng = CounterRng::new(12);
        let n = 50_000usize;
        let lam = 14_545.45;
        let xs: Vec<f64> = (0..n).map(|_| poisson(lam, &mut rng) as f64).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
        let se_mean = (lam / n as f64).sqrt();
        assert!((mean - lam).abs() < 4.0 * se_mean, "mean {mean}");
        // variance of the sample variance ~ 2 lam^2 / n for Poisson(lam) at large lam
        let se_var = lam * (2.0 / n as f64).sqrt();
        assert!((var - lam).abs() < 5.0 * se_var, "var {var}");
    }

    #[test]
    fn poisson_ptrs_matches_pmf() {
        // goodness of fit at a mean in the PTRS regime
        let lam = 35.0;
        let mut rng = CounterRng::new(13);
        let n = 200_000usize;
        let mut counts = vec![0u64; 120];
        for _ in 0..n {
            let k = poisson(lam, &mut rng) as usize;
            counts[k.min(119)] += 1;
        }
        // exact pmf, bins merged so expected >= 10
        let mut pmf = vec![0.0f64; 120];
        for (k, p) in pmf.iter_mut().enumerate() {
            let lp = k as f64 * lam.ln() - lam - ln_gamma(k as f64 + 1.0);
            *p = lp.exp();
        }
        pmf[119] = 1.0 - pmf[..119].iter().sum::<f64>();
        let mut chi2 = 0.0;
        let mut dof: i64 = -1;
        let (mut obs_acc, mut exp_acc) = (0.0, 0.0);
        for k in 0..120 {
            obs_acc += counts[k] as f64;
            exp_acc += pmf[k] * n as f64;
            if exp_acc >= 10.0 {
                chi2 += (obs_acc - exp_acc) * (obs_acc - exp_acc) / exp_acc;
                dof += 1;
                obs_acc = 0.0;
                exp_acc = 0.0;
            }
        }
        if exp_acc > 0.0 {
            chi2 += (obs_acc - exp_acc) * (obs_acc - exp_acc) / exp_acc;
            dof += 1;
        }
        let p = chi2_sf(chi2, dof as f64);
        assert!(p > 0.01, "chi2={chi2} dof={dof} p={p}");
    }
}
