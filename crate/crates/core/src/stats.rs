/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { mean: value, std_err: 0.0, n: 0 }
    }

    /// Welford accumulation over `samples`; an empty iterator gives a zero estimate.
    pub fn from_samples<I: IntoIterator<Item = f64>>(samples: I) -> Self {
        let mut acc = Accumulator::default();
        for s in samples {
            acc.push(s);
        }
        acc.finish()
    }

    /// `mean ± k·std_err` contains `value`.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_err
    }
}

#[derive(Debug, Clone, Default)]
pub struct Accumulator {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, value: f64) {
        self.n += 1;
        let delta = value - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (value - self.mean);
    }

    pub fn finish(&self) -> Estimate {
        let std_err = if self.n > 1 {
            (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
        } else {
            0.0
        };
        Estimate { mean: self.mean, std_err, n: self.n }
    }
}
