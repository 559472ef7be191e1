use serde::{Deserialize, Serialize};

/// Shape of a test function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    /// `A exp(1 - 1 / (1 - u^2))` for `|u| < 1`, `u = (x - c) / r`.
    Bump { amplitude: f64, radius: f64, center: f64 },
    /// `A exp(-(x - c)^2 / (2 s^2))`, cut to zero once below 1e-300.
    Gaussian { amplitude: f64, sigma: f64, center: f64 },
}

impl Default for Shape {
    fn default() -> Self {
        Shape::Bump { amplitude: 1.0, radius: 1.0, center: 0.0 }
    }
}

/// Relative cut-off for the Gaussian tail.
const GAUSS_FLOOR: f64 = 1e-300;

/// Smooth compactly supported function on the macroscopic line, with
/// analytic derivatives and precomputed `L^2` norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestFunction {
    pub shape: Shape,
    pub support_radius: f64,
    pub norm_sq: f64,
    pub d1_norm_sq: f64,
    pub d2_norm_sq: f64,
}

impl TestFunction {
    pub fn new(shape: Shape) -> Self {
        let support_radius = match shape {
            Shape::Bump { radius, .. } => {
                assert!(radius > 0.0, "bump radius must be positive");
                radius
            }
            Shape::Gaussian { sigma, .. } => {
                assert!(sigma > 0.0, "gaussian width must be positive");
                sigma * (-2.0 * GAUSS_FLOOR.ln()).sqrt()
            }
        };
        let mut tf = TestFunction { shape, support_radius, norm_sq: 0.0, d1_norm_sq: 0.0, d2_norm_sq: 0.0 };
        tf.norm_sq = tf.integrate(|x| tf.value(x).powi(2));
        tf.d1_norm_sq = tf.integrate(|x| tf.d1(x).powi(2));
        tf.d2_norm_sq = tf.integrate(|x| tf.d2(x).powi(2));
        tf
    }

    pub fn bump(amplitude: f64, radius: f64) -> Self {
        Self::new(Shape::Bump { amplitude, radius, center: 0.0 })
    }

    pub fn gaussian(amplitude: f64, sigma: f64) -> Self {
        Self::new(Shape::Gaussian { amplitude, sigma, center: 0.0 })
    }

    pub fn center(&self) -> f64 {
        match self.shape {
            Shape::Bump { center, .. } | Shape::Gaussian { center, .. } => center,
        }
    }

    /// The same profile translated by `dx`.
    pub fn shifted(&self, dx: f64) -> Self {
        let mut out = *self;
        match &mut out.shape {
            Shape::Bump { center, .. } | Shape::Gaussian { center, .. } => *center += dx,
        }
        out
    }

    /// The profile multiplied by `c`; norms are rescaled exactly.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = *self;
        match &mut out.shape {
            Shape::Bump { amplitude, .. } | Shape::Gaussian { amplitude, .. } => *amplitude *= c,
        }
        out.norm_sq *= c * c;
        out.d1_norm_sq *= c * c;
        out.d2_norm_sq *= c * c;
        out
    }

    /// `(phi, phi', phi'', phi''')` at `x`.
    pub fn jet(&self, x: f64) -> [f64; 4] {
        match self.shape {
            Shape::Bump { amplitude, radius, center } => {
                let u = (x - center) / radius;
                let s = 1.0 - u * u;
                if s <= 0.0 {
                    return [0.0; 4];
                }
                let h = 1.0 - 1.0 / s;
                if h < -700.0 {
                    return [0.0; 4];
                }
                let e = amplitude * h.exp();
                let h1 = -2.0 * u / (s * s);
                let h2 = -(2.0 + 6.0 * u * u) / (s * s * s);
                let h3 = -24.0 * u * (1.0 + u * u) / (s * s * s * s);
                [
                    e,
                    e * h1 / radius,
                    e * (h1 * h1 + h2) / radius.powi(2),
                    e * (h1 * h1 * h1 + 3.0 * h1 * h2 + h3) / radius.powi(3),
                ]
            }
            Shape::Gaussian { amplitude, sigma, center } => {
                if (x - center).abs() >= self.support_radius {
                    return [0.0; 4];
                }
                let z = (x - center) / sigma;
                let e = amplitude * (-0.5 * z * z).exp();
                [e, -e * z / sigma, e * (z * z - 1.0) / sigma.powi(2), e * (3.0 * z - z * z * z) / sigma.powi(3)]
            }
        }
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        self.jet(x)[0]
    }

    #[inline]
    pub fn d1(&self, x: f64) -> f64 {
        self.jet(x)[1]
    }

    #[inline]
    pub fn d2(&self, x: f64) -> f64 {
        self.jet(x)[2]
    }

    #[inline]
    pub fn d3(&self, x: f64) -> f64 {
        self.jet(x)[3]
    }

    /// Whether the support fits strictly inside a torus of circumference `c`.
    pub fn fits(&self, circumference: f64) -> bool {
        2.0 * self.support_radius < circumference
    }

    /// Composite 8-point Gauss-Legendre over the support.
    fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        const NODES: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
        const WEIGHTS: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];
        let panels = 4000;
        let (a, b) = (self.center() - self.support_radius, self.center() + self.support_radius);
        let h = (b - a) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * h;
            for (x, w) in NODES.iter().zip(WEIGHTS) {
                let d = 0.5 * h * x;
                total += w * (f(mid - d) + f(mid + d));
            }
        }
        0.5 * h * total
    }
}

impl Default for TestFunction {
    fn default() -> Self {
        TestFunction::new(Shape::default())
    }
}
