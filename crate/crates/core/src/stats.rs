//! Streaming means, variances and the ratio-of-means standard error.

/// Welford accumulator for a pair `(x, y)` with their co-moment.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct PairMoments {
    pub n: u64,
    pub mean_x: f64,
    pub mean_y: f64,
    m2x: f64,
    m2y: f64,
    cxy: f64,
}

impl PairMoments {
    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        let n = self.n as f64;
        let dx = x - self.mean_x;
        let dy = y - self.mean_y;
        self.mean_x += dx / n;
        self.mean_y += dy / n;
        self.m2x += dx * (x - self.mean_x);
        self.m2y += dy * (y - self.mean_y);
        self.cxy += dx * (y - self.mean_y);
    }

    fn sample_var(m2: f64, n: u64) -> f64 {
        if n < 2 {
            0.0
        } else {
            (m2 / (n - 1) as f64).max(0.0)
        }
    }

    pub fn var_x(&self) -> f64 {
        Self::sample_var(self.m2x, self.n)
    }

    pub fn var_y(&self) -> f64 {
        Self::sample_var(self.m2y, self.n)
    }

    pub fn cov(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.cxy / (self.n - 1) as f64
        }
    }

    pub fn se_x(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.var_x() / self.n as f64).sqrt()
        }
    }

    pub fn se_y(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.var_y() / self.n as f64).sqrt()
        }
    }

    /// `mean_x / mean_y` and its delta-method standard error.
    pub fn ratio(&self) -> (f64, f64) {
        let (mx, my) = (self.mean_x, self.mean_y);
        if my == 0.0 {
            return if mx == 0.0 {
                (0.0, 0.0)
            } else {
                (f64::INFINITY, 0.0)
            };
        }
        let r = mx / my;
        if self.n < 2 {
            return (r, 0.0);
        }
        let v = (self.var_x() - 2.0 * r * self.cov() + r * r * self.var_y()) / (my * my);
        (r, (v.max(0.0) / self.n as f64).sqrt())
    }
}

/// Single-variable Welford accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn se(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64 / self.n as f64)
                .max(0.0)
                .sqrt()
        }
    }
}
