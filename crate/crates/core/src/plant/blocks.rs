//! Discrete linear blocks obtained from analog prototypes with the bilinear (trapezoidal) rule.

/// Second-order section in transposed direct form II.
#[derive(Debug, Clone, PartialEq)]
pub struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
    s: [f64; 2],
    dc: f64,
}

impl Biquad {
    /// `num` and `den` hold analog coefficients of `s², s, 1`.
    pub fn from_analog(num: [f64; 3], den: [f64; 3], h: f64) -> Self {
        let k = 2.0 / h;
        let k2 = k * k;
        let map = |c: [f64; 3]| {
            [
                c[0] * k2 + c[1] * k + c[2],
                -2.0 * c[0] * k2 + 2.0 * c[2],
                c[0] * k2 - c[1] * k + c[2],
            ]
        };
        let bz = map(num);
        let az = map(den);
        let a0 = az[0];
        Self {
            b: [bz[0] / a0, bz[1] / a0, bz[2] / a0],
            a: [az[1] / a0, az[2] / a0],
            s: [0.0; 2],
            // exact; the discrete sums cancel badly at small steps
            dc: if den[2] != 0.0 {
                num[2] / den[2]
            } else {
                f64::INFINITY
            },
        }
    }

    /// Unity-peak band-pass `(ω/Q)s / (s² + (ω/Q)s + ω²)`.
    pub fn band_pass(f_hz: f64, q: f64, h: f64) -> Self {
        let w = 2.0 * std::f64::consts::PI * f_hz;
        Self::from_analog([0.0, w / q, 0.0], [1.0, w / q, w * w], h)
    }

    /// Second-order low-pass with unity DC gain.
    pub fn low_pass2(f_hz: f64, zeta: f64, h: f64) -> Self {
        let w = 2.0 * std::f64::consts::PI * f_hz;
        Self::from_analog([0.0, 0.0, w * w], [1.0, 2.0 * zeta * w, w * w], h)
    }

    /// Lead-lag `(1 + T1 s)/(1 + T2 s)`.
    pub fn lead_lag(t1: f64, t2: f64, h: f64) -> Self {
        Self::from_analog([0.0, t1, 1.0], [0.0, t2, 1.0], h)
    }

    /// First-order lag `1/(1 + T s)`.
    pub fn lag(t: f64, h: f64) -> Self {
        Self::from_analog([0.0, 0.0, 1.0], [0.0, t, 1.0], h)
    }

    pub fn step(&mut self, u: f64) -> f64 {
        let y = self.b[0] * u + self.s[0];
        self.s[0] = self.b[1] * u - self.a[0] * y + self.s[1];
        self.s[1] = self.b[2] * u - self.a[1] * y;
        y
    }

    pub fn dc_gain(&self) -> f64 {
        self.dc
    }

    /// Places the section at the equilibrium reached under constant input `u`.
    pub fn set_steady(&mut self, u: f64) {
        let y = self.dc_gain() * u;
        self.s[1] = self.b[2] * u - self.a[1] * y;
        self.s[0] = self.b[1] * u - self.a[0] * y + self.s[1];
    }

    pub fn reset(&mut self) {
        self.s = [0.0; 2];
    }

    /// Discrete frequency response at `f_hz` for sampling step `h`.
    pub fn response(&self, f_hz: f64, h: f64) -> num_complex::Complex64 {
        let z1 = num_complex::Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f_hz * h);
        let z2 = z1 * z1;
        (self.b[0] + self.b[1] * z1 + self.b[2] * z2) / (1.0 + self.a[0] * z1 + self.a[1] * z2)
    }
}

/// Runs a section forward and then backward over a record (zero phase, squared magnitude).
pub fn filtfilt(proto: &Biquad, x: &[f64]) -> Vec<f64> {
    let mut f = proto.clone();
    f.reset();
    let mut y: Vec<f64> = x.iter().map(|&v| f.step(v)).collect();
    f.reset();
    for v in y.iter_mut().rev() {
        *v = f.step(*v);
    }
    y
}

/// Trapezoidal integrator with clamp-style anti-windup.
#[derive(Debug, Clone, PartialEq)]
pub struct PiController {
    pub kp: f64,
    pub ki: f64,
    pub state: f64,
    prev_err: f64,
}

impl PiController {
    pub fn new(kp: f64, ki: f64) -> Self {
        Self {
            kp,
            ki,
            state: 0.0,
            prev_err: 0.0,
        }
    }

    /// Sets the integrator so that a zero error yields `output`.
    pub fn set_output(&mut self, output: f64) {
        self.state = output;
        self.prev_err = 0.0;
    }

    /// Unlimited output if the integrator were advanced with `err`.
    pub fn preview(&self, err: f64, h: f64) -> f64 {
        self.kp * err + self.state + 0.5 * h * self.ki * (err + self.prev_err)
    }

    /// Advances the integrator unless `freeze` is set; returns the unlimited output.
    pub fn step(&mut self, err: f64, h: f64, freeze: bool) -> f64 {
        if !freeze {
            self.state += 0.5 * h * self.ki * (err + self.prev_err);
        }
        self.prev_err = err;
        self.kp * err + self.state
    }
}
