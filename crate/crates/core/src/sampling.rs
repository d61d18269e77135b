//! Normal-distribution helpers: CDF, quantile and truncated sampling.

use rand::Rng;
use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn std_normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Quantile of the standard normal. `p` must lie in (0, 1).
pub fn std_normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Probability mass of the standard normal on `[a, b]`, computed in the
/// tail where it is representable.
pub fn std_normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        std_normal_cdf(-a) - std_normal_cdf(-b)
    } else {
        std_normal_cdf(b) - std_normal_cdf(a)
    }
}

/// Draws from `N(mean, sd^2)` restricted to `[lo, hi]` by inverting the CDF.
///
/// The upper tail is handled through the reflected variable so that far-tail
/// truncations keep their precision. When the interval carries no
/// representable mass the nearer bound is returned.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo <= hi);
    if sd <= 0.0 {
        return mean.clamp(lo, hi);
    }
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    // Work in whichever tail keeps the CDF values small.
    let (a, b, sign) = if a >= 0.0 { (-b, -a, -1.0) } else { (a, b, 1.0) };
    let pa = std_normal_cdf(a);
    let pb = std_normal_cdf(b);
    let z = if pb > pa {
        let u: f64 = rng.random();
        let p = pa + u * (pb - pa);
        if p <= 0.0 || p >= 1.0 {
            if p <= 0.0 {
                a
            } else {
                b
            }
        } else {
            std_normal_quantile(p).clamp(a, b)
        }
    } else if b.abs() < a.abs() {
        b
    } else {
        a
    };
    (mean + sign * z * sd).clamp(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quantile_inverts_cdf() {
        for &x in &[-6.0, -2.5, -1.0, 0.0, 0.3, 1.7, 4.0] {
            let p = std_normal_cdf(x);
            assert!((std_normal_quantile(p) - x).abs() < 1e-9, "x = {x}");
        }
        let p = std_normal_cdf(1.959963984540054);
        assert!((p - 0.975).abs() < 1e-10, "{p}");
    }

    #[test]
    fn far_tail_truncation_stays_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x = truncated_normal(&mut rng, 0.0, 1.0, 9.0, 9.5);
            assert!((9.0..=9.5).contains(&x));
            let y = truncated_normal(&mut rng, 0.0, 1.0, -50.0, -49.0);
            assert!((-50.0..=-49.0).contains(&y));
        }
    }

    #[test]
    fn far_tail_mean_matches_mills_ratio() {
        // E[X | X > a] ~ a + 1/a for large a.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20_000;
        let a = 8.0;
        let mean: f64 = (0..n)
            .map(|_| truncated_normal(&mut rng, 0.0, 1.0, a, f64::INFINITY))
            .sum::<f64>()
            / n as f64;
        let expected = std_normal_pdf(a) / std_normal_cdf(-a);
        assert!((mean - expected).abs() < 0.01, "{mean} vs {expected}");
    }
}
