use serde::{Deserialize, Serialize};

use crate::io::Violations;

/// Converter stack rating of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceRating {
    pub n_converters: u32,
    pub s_per_converter_mvar: f64,
    pub rated_current_ka: f64,
    /// Below this line current the device cannot sustain injection.
    pub i_min_inject_ka: f64,
}

impl Default for DeviceRating {
    fn default() -> Self {
        DeviceRating {
            n_converters: 10,
            s_per_converter_mvar: 1.0,
            rated_current_ka: 1.0,
            i_min_inject_ka: 0.05,
        }
    }
}

impl DeviceRating {
    pub fn total_mvar(&self) -> f64 {
        self.n_converters as f64 * self.s_per_converter_mvar
    }

    /// Maximum injectable voltage at or below rated current (kV).
    pub fn v_cap_kv(&self) -> f64 {
        self.total_mvar() / self.rated_current_ka
    }

    pub(crate) fn check_into(&self, v: &mut Violations, path: &str) {
        if self.n_converters == 0 {
            v.push(format!("{path}.n_converters"), "must be at least 1");
        }
        for (name, x) in [
            ("s_per_converter_mvar", self.s_per_converter_mvar),
            ("rated_current_ka", self.rated_current_ka),
            ("i_min_inject_ka", self.i_min_inject_ka),
        ] {
            if !(x.is_finite() && x > 0.0) {
                v.push(format!("{path}.{name}"), "must be positive");
            }
        }
        if self.i_min_inject_ka >= self.rated_current_ka {
            v.push(format!("{path}.i_min_inject_ka"), "must be below rated_current_ka");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cap_voltage_is_mva_consistent() {
        let r = DeviceRating::default();
        assert_eq!(r.v_cap_kv(), 10.0);
        assert_eq!(r.v_cap_kv() * r.rated_current_ka, r.total_mvar());
    }
}
