//! Pass/fail rows shared by the verification reports.

/// One named check: a measured value against a tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// Passes when `value <= tolerance`; otherwise when `value > tolerance`.
    pub upper: bool,
}

impl Check {
    pub fn below(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check { name: name.into(), value, tolerance, upper: true }
    }

    pub fn above(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check { name: name.into(), value, tolerance, upper: false }
    }

    pub fn passed(&self) -> bool {
        if self.upper {
            self.value <= self.tolerance
        } else {
            self.value > self.tolerance
        }
    }
}
