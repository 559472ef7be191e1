use serde::Serialize;

/// Running count, mean and central moments up to order four, with an
/// associative pairwise merge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut m = Moments::new();
        xs.iter().for_each(|&x| m.push(x));
        m
    }

    pub fn push(&mut self, x: f64) {
        self.merge(&Moments { count: 1, mean: x, m2: 0.0, m3: 0.0, m4: 0.0 });
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let d = other.mean - self.mean;
        let d2 = d * d;
        let mean = self.mean + d * nb / n;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + d * d2 * na * nb * (na - nb) / (n * n)
            + 3.0 * d * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * d * (na * other.m3 - nb * self.m3) / n;
        *self = Moments { count: self.count + other.count, mean, m2, m3, m4 };
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        self.m2 / (self.count - 1) as f64
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn standard_error(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        self.std_dev() / (self.count as f64).sqrt()
    }

    /// Standard error of the sample variance, from the fourth central moment.
    pub fn variance_standard_error(&self) -> f64 {
        let n = self.count as f64;
        let mu2 = self.m2 / n;
        let mu4 = self.m4 / n;
        ((mu4 - mu2 * mu2) / n).max(0.0).sqrt()
    }

    pub fn skewness(&self) -> f64 {
        let n = self.count as f64;
        let mu2 = self.m2 / n;
        (self.m3 / n) / mu2.powf(1.5)
    }

    pub fn excess_kurtosis(&self) -> f64 {
        let n = self.count as f64;
        let mu2 = self.m2 / n;
        (self.m4 / n) / (mu2 * mu2) - 3.0
    }

    pub fn estimate(&self) -> Estimate {
        let se = self.standard_error();
        Estimate {
            mean: self.mean,
            standard_error: se,
            count: self.count,
            ci95: [self.mean - 1.96 * se, self.mean + 1.96 * se],
        }
    }
}

/// Mean with its standard error and a normal 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub standard_error: f64,
    pub count: u64,
    pub ci95: [f64; 2],
}

impl Estimate {
    /// Whether `target` is within `k` standard errors (plus `band`).
    pub fn within(&self, target: f64, k: f64, band: f64) -> bool {
        (self.mean - target).abs() <= k * self.standard_error + band
    }
}

/// Least-squares line through `(log x, log y)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_standard_error: f64,
    pub residuals: Vec<f64>,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> LineFit {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "a line needs two points");
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| y - intercept - slope * x).collect();
    let slope_standard_error = if xs.len() > 2 {
        (residuals.iter().map(|r| r * r).sum::<f64>() / (m - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LineFit { slope, intercept, slope_standard_error, residuals }
}

pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> LineFit {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    fit_line(&lx, &ly)
}
