//! Mergeable Monte-Carlo accumulators.

/// A Monte-Carlo point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, std_err: 0.0 }
    }

    /// `|self - other| <= k * sqrt(se1^2 + se2^2)`
    pub fn agrees_with(&self, other: f64, k: f64) -> bool {
        (self.value - other).abs() <= k * self.std_err
    }
}

/// Welford mean/variance accumulator with Chan's parallel merge.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanAcc {
    n: u64,
    mean: f64,
    m2: f64,
}

impl MeanAcc {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &MeanAcc) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn std_err(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.variance() / self.n as f64).sqrt()
    }

    pub fn estimate(&self) -> Estimate {
        Estimate { value: self.mean, std_err: self.std_err() }
    }
}

/// Accumulates `exp(a_i)` in max-shifted form so that the mean can be read
/// back in log space without overflow.
#[derive(Debug, Clone, Copy)]
pub struct LogExpAcc {
    n: u64,
    max: f64,
    argmax: u64,
    s1: f64,
    s2: f64,
}

impl Default for LogExpAcc {
    fn default() -> Self {
        Self { n: 0, max: f64::NEG_INFINITY, argmax: 0, s1: 0.0, s2: 0.0 }
    }
}

impl LogExpAcc {
    /// `index` is the global sample index, remembered for the running maximum.
    pub fn push(&mut self, a: f64, index: u64) {
        self.n += 1;
        if a == f64::NEG_INFINITY {
            return;
        }
        if a > self.max {
            let r = (self.max - a).exp();
            self.s1 *= r;
            self.s2 *= r * r;
            self.max = a;
            self.argmax = index;
        }
        let e = (a - self.max).exp();
        self.s1 += e;
        self.s2 += e * e;
    }

    pub fn merge(&mut self, other: &LogExpAcc) {
        self.n += other.n;
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if other.max > self.max {
            let r = (self.max - other.max).exp();
            self.s1 = self.s1 * r + other.s1;
            self.s2 = self.s2 * r * r + other.s2;
            self.max = other.max;
            self.argmax = other.argmax;
        } else {
            let r = (other.max - self.max).exp();
            self.s1 += other.s1 * r;
            self.s2 += other.s2 * r * r;
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// Largest exponent seen and the sample index it came from.
    pub fn max(&self) -> (f64, u64) {
        (self.max, self.argmax)
    }

    pub fn is_degenerate(&self) -> bool {
        self.max == f64::NEG_INFINITY || self.n == 0
    }

    /// `log(mean(exp(a_i)))`
    pub fn log_mean(&self) -> f64 {
        self.max + (self.s1 / self.n as f64).ln()
    }

    /// Standard error of `mean(exp(a_i))` divided by that mean.
    pub fn relative_std_err(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let m1 = self.s1 / n;
        let var = ((self.s2 / n - m1 * m1) * n / (n - 1.0)).max(0.0);
        (var / n).sqrt() / m1
    }
}
