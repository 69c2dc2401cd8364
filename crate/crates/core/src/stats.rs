//! Cumulative distributions on grids and Kolmogorov-Smirnov checks.

/// Cumulative distribution of a density sampled on a uniform 1D grid.
///
/// The density is taken as piecewise linear between grid points, so the
/// cumulative is piecewise quadratic and can be inverted exactly.
#[derive(Debug, Clone)]
pub struct GridCdf {
    x0: f64,
    dx: f64,
    density: Vec<f64>,
    cum: Vec<f64>,
}

impl GridCdf {
    pub fn new(density: &[f64], x0: f64, dx: f64) -> Self {
        assert!(density.len() >= 2, "need at least two samples");
        let mut cum = Vec::with_capacity(density.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for w in density.windows(2) {
            acc += 0.5 * (w[0] + w[1]) * dx;
            cum.push(acc);
        }
        GridCdf {
            x0,
            dx,
            density: density.to_vec(),
            cum,
        }
    }

    pub fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn lower(&self) -> f64 {
        self.x0
    }

    pub fn upper(&self) -> f64 {
        self.x0 + (self.density.len() - 1) as f64 * self.dx
    }

    /// Unnormalized mass between the first grid point and `x`.
    pub fn mass_below(&self, x: f64) -> f64 {
        if x <= self.lower() {
            return 0.0;
        }
        if x >= self.upper() {
            return self.total();
        }
        let u = (x - self.x0) / self.dx;
        let i = (u.floor() as usize).min(self.density.len() - 2);
        let s = u - i as f64;
        let (r0, r1) = (self.density[i], self.density[i + 1]);
        self.cum[i] + self.dx * (r0 * s + 0.5 * (r1 - r0) * s * s)
    }

    /// Normalized cumulative probability at `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.mass_below(x) / self.total()
    }

    /// Position at which the normalized cumulative reaches `u`.
    pub fn inverse(&self, u: f64) -> f64 {
        let target = u.clamp(0.0, 1.0) * self.total();
        let i = match self
            .cum
            .binary_search_by(|c| c.partial_cmp(&target).unwrap())
        {
            Ok(i) => return self.x0 + i as f64 * self.dx,
            Err(i) => i.clamp(1, self.cum.len() - 1) - 1,
        };
        let (r0, r1) = (self.density[i], self.density[i + 1]);
        let rem = target - self.cum[i];
        // dx * (r0 s + (r1 - r0) s^2 / 2) = rem
        let a = 0.5 * (r1 - r0) * self.dx;
        let b = r0 * self.dx;
        let disc = (b * b + 4.0 * a * rem).max(0.0);
        let denom = b + disc.sqrt();
        let s = if denom > 0.0 { 2.0 * rem / denom } else { 0.5 };
        self.x0 + (i as f64 + s.clamp(0.0, 1.0)) * self.dx
    }
}

/// Two-sided KS statistic of `samples` against the continuous CDF `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = (-2.0 * j * j * lambda * lambda).exp();
        sum += if j as usize % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn effective_sqrt_n(n: usize) -> f64 {
    let s = (n as f64).sqrt();
    s + 0.12 + 0.11 / s
}

/// Approximate p-value of a one-sample KS statistic `d` with `n` samples.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    kolmogorov_survival(effective_sqrt_n(n) * d)
}

/// Critical KS statistic at significance `alpha`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    let (mut lo, mut hi) = (0.2, 5.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_survival(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi) / effective_sqrt_n(n)
}

/// Median of a non-empty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_density_cdf_is_linear() {
        let cdf = GridCdf::new(&[1.0; 11], 0.0, 0.1);
        assert!((cdf.total() - 1.0).abs() < 1e-14);
        assert!((cdf.cdf(0.37) - 0.37).abs() < 1e-12);
        assert!((cdf.inverse(0.81) - 0.81).abs() < 1e-12);
    }

    #[test]
    fn inverse_undoes_cdf_on_ramp() {
        let dens: Vec<f64> = (0..50)
            .map(|i| (i as f64 * 0.3).sin().abs() + 0.01)
            .collect();
        let cdf = GridCdf::new(&dens, -2.0, 0.05);
        for &x in &[-1.99, -1.3, 0.0, 0.123, 0.4] {
            let back = cdf.inverse(cdf.cdf(x));
            assert!((back - x).abs() < 1e-10, "{x} -> {back}");
        }
    }

    #[test]
    fn kolmogorov_critical_values() {
        // asymptotic table: 1.36 at 5 %, 1.63 at 1 %
        let c1 = ks_critical_value(1_000_000, 0.01) * 1000.0;
        let c5 = ks_critical_value(1_000_000, 0.05) * 1000.0;
        assert!((c1 - 1.6276).abs() < 1e-3, "{c1}");
        assert!((c5 - 1.3581).abs() < 1e-3, "{c5}");
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn ks_statistic_of_exact_quantiles_is_small() {
        let n = 1000;
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&samples, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
