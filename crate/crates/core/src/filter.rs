//! Discrete first-order low-pass `wc / (s + wc)` for sampled signals.

/// Exact discretisation of a first-order lag under a first-order
/// (linear-interpolation) hold on the input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowPass {
    pub omega_c: f64,
    pub state: f64,
    prev_input: Option<f64>,
}

impl LowPass {
    pub fn new(omega_c: f64) -> Self {
        Self { omega_c, state: 0.0, prev_input: None }
    }

    /// Start in steady state at `value`.
    pub fn settled(omega_c: f64, value: f64) -> Self {
        Self { omega_c, state: value, prev_input: Some(value) }
    }

    /// True until the first sample has been seen.
    pub fn is_fresh(&self) -> bool {
        self.prev_input.is_none()
    }

    /// Advance by `dt` given the input sampled at the end of the interval.
    /// On the first call the input is taken as constant over the interval.
    pub fn step(&mut self, input: f64, dt: f64) -> f64 {
        let prev = self.prev_input.unwrap_or(input);
        let x = self.omega_c * dt;
        let a = (-x).exp();
        // b1 multiplies the new sample, b0 the old one; b0 + b1 = 1 - a
        let b1 = 1.0 - (1.0 - a) / x;
        let b0 = (1.0 - a) - b1;
        self.state = a * self.state + b0 * prev + b1 * input;
        self.prev_input = Some(input);
        self.state
    }
}

/// Low-pass followed by a backward difference of the filtered signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilteredDerivative {
    pub filter: LowPass,
    pub derivative: f64,
    /// filtered value before the most recent step
    pub previous: f64,
}

impl FilteredDerivative {
    pub fn new(omega_c: f64) -> Self {
        Self { filter: LowPass::new(omega_c), derivative: 0.0, previous: 0.0 }
    }

    pub fn settled(omega_c: f64, value: f64) -> Self {
        Self { filter: LowPass::settled(omega_c, value), derivative: 0.0, previous: value }
    }

    pub fn value(&self) -> f64 {
        self.filter.state
    }

    pub fn step(&mut self, input: f64, dt: f64) -> f64 {
        self.previous = self.filter.state;
        let next = self.filter.step(input, dt);
        self.derivative = (next - self.previous) / dt;
        self.derivative
    }
}
