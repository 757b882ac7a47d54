use super::FalconError;

/// Doubling epoch boundaries `τ_0 = 0`, `τ_m = tau1·2^{m−1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochSchedule {
    tau1: u64,
}

impl EpochSchedule {
    pub fn new(tau1: u64) -> Result<Self, FalconError> {
        if tau1 < 4 {
            return Err(FalconError::InvalidParams(format!("tau1 must be >= 4, got {tau1}")));
        }
        Ok(Self { tau1 })
    }

    pub fn tau1(&self) -> u64 {
        self.tau1
    }

    /// `τ_m`; saturates instead of overflowing for absurd epochs.
    pub fn tau(&self, m: usize) -> u64 {
        match m {
            0 => 0,
            _ => self.tau1.checked_shl((m - 1) as u32).filter(|v| v >> (m - 1) == self.tau1).unwrap_or(u64::MAX),
        }
    }

    pub fn len(&self, m: usize) -> u64 {
        self.tau(m) - self.tau(m - 1)
    }

    /// Smallest `m` with `τ_m ≥ t`, for `t ≥ 1`.
    pub fn epoch_of(&self, t: u64) -> usize {
        assert!(t >= 1, "rounds start at 1");
        let mut m = 1;
        while self.tau(m) < t {
            m += 1;
        }
        m
    }

    /// Passive rounds at the end of epoch `m`: `⌈ε·(τ_m − τ_{m−1})⌉`.
    pub fn passive_rounds(&self, m: usize, epsilon: f64) -> u64 {
        ceil_count(epsilon * self.len(m) as f64)
    }

    /// Last active round of epoch `m`.
    pub fn last_active(&self, m: usize, epsilon: f64) -> u64 {
        self.tau(m) - self.passive_rounds(m, epsilon)
    }
}

/// `⌈v⌉` that ignores float noise of a few ulps above an integer.
fn ceil_count(v: f64) -> u64 {
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.max(1.0) {
        r as u64
    } else {
        v.ceil() as u64
    }
}

/// Rate knobs of the exploration schedule and constraint budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateParams {
    pub rho: f64,
    pub rho_prime: f64,
    /// Complexity of the model class; the parameter count for linear models.
    pub comp: f64,
    pub c1: f64,
    pub c3: f64,
    pub delta: f64,
}

impl RateParams {
    /// `ρ = 1`, `ρ′ = 0`, `comp = d`, unit constants.
    pub fn linear(num_params: usize, delta: f64) -> Self {
        Self { rho: 1.0, rho_prime: 0.0, comp: num_params as f64, c1: 1.0, c3: 1.0, delta }
    }

    pub fn validate(&self) -> Result<(), FalconError> {
        let mut problems = Vec::new();
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            problems.push(format!("rho must lie in (0,1], got {}", self.rho));
        }
        if !(self.rho_prime >= 0.0 && self.rho_prime.is_finite()) {
            problems.push(format!("rho_prime must be >= 0, got {}", self.rho_prime));
        }
        for (name, v) in [("comp", self.comp), ("c1", self.c1), ("c3", self.c3)] {
            if !(v > 0.0 && v.is_finite()) {
                problems.push(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.delta > 0.0 && self.delta <= 0.5) {
            problems.push(format!("delta must lie in (0, 0.5], got {}", self.delta));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(FalconError::InvalidParams(problems.join("; ")))
        }
    }

    /// `ln^{ρ′}(n)`, exactly 1 when `ρ′ = 0`. The argument is floored at `e`
    /// so tiny batches never zero the factor.
    fn log_power(&self, n: f64) -> f64 {
        if self.rho_prime == 0.0 {
            1.0
        } else {
            n.max(std::f64::consts::E).ln().powf(self.rho_prime)
        }
    }
}

/// Active exploration parameter `γ_m`.
///
/// `γ_1 = 1`; for `m ≥ 2`, with `n = τ_{m−1} − τ_{m−2}`,
/// `γ_m = √(C₃·K·n^ρ / (ln^{ρ′}(n)·ln((m−1)/δ)·comp))`.
pub fn gamma_for_epoch(m: usize, schedule: &EpochSchedule, rates: &RateParams, num_arms: usize) -> Result<f64, FalconError> {
    match m {
        0 => Err(FalconError::InvalidParams("epochs start at 1".into())),
        1 => Ok(1.0),
        _ => {
            let ratio = (m - 1) as f64 / rates.delta;
            if ratio <= 1.0 {
                return Err(FalconError::InvalidConfidence { m, delta: rates.delta });
            }
            let n = schedule.len(m - 1) as f64;
            let num = rates.c3 * num_arms as f64 * n.powf(rates.rho);
            let den = rates.log_power(n) * ratio.ln() * rates.comp;
            Ok((num / den).sqrt())
        }
    }
}

/// Constraint slack for epoch `m` with `passive_rows` passive observations:
/// `C₁·ln^{ρ′}(n′)·ln(12m²/δ)·comp / n′^ρ`.
pub fn slack_for_epoch(m: usize, passive_rows: usize, rates: &RateParams) -> f64 {
    let n = passive_rows as f64;
    let log_conf = (12.0 * (m * m) as f64 / rates.delta).ln();
    rates.c1 * rates.log_power(n) * log_conf * rates.comp / n.powf(rates.rho)
}

/// Passive fraction tuned to a guess of the approximation error:
/// `min(c·K^{4/5}·b^{2/5}, 0.49)`.
pub fn tune_epsilon(b_guess: f64, num_arms: usize, c: f64) -> f64 {
    assert!(b_guess >= 0.0 && c > 0.0, "b_guess >= 0 and c > 0 required");
    (c * (num_arms as f64).powf(0.8) * b_guess.powf(0.4)).min(0.49)
}
