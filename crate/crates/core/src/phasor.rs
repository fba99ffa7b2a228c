//! RMS phasor quantities. Voltages are in kV, currents in kA, impedances in
//! ohms, angles in radians.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Complex RMS quantity. Serialized as `[re, im]`.
pub type Phasor = Complex64;

/// Builds a phasor from magnitude and angle in degrees.
pub fn polar_deg(mag: f64, deg: f64) -> Phasor {
    Complex64::from_polar(mag, deg.to_radians())
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut x = theta % (2.0 * PI);
    if x <= -PI {
        x += 2.0 * PI;
    } else if x > PI {
        x -= 2.0 * PI;
    }
    x
}

pub fn is_finite(z: Phasor) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        match self {
            Phase::A => 0,
            Phase::B => 1,
            Phase::C => 2,
        }
    }

    pub fn from_index(i: usize) -> Phase {
        Phase::ALL[i]
    }

    pub fn lower(self) -> &'static str {
        match self {
            Phase::A => "a",
            Phase::B => "b",
            Phase::C => "c",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::A => "A",
            Phase::B => "B",
            Phase::C => "C",
        };
        f.write_str(s)
    }
}

/// One phasor per phase. Asymmetry is allowed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreePhaseSet {
    pub a: Phasor,
    pub b: Phasor,
    pub c: Phasor,
}

impl ThreePhaseSet {
    pub const ZERO: ThreePhaseSet = ThreePhaseSet {
        a: Complex64::new(0.0, 0.0),
        b: Complex64::new(0.0, 0.0),
        c: Complex64::new(0.0, 0.0),
    };

    pub fn new(a: Phasor, b: Phasor, c: Phasor) -> Self {
        ThreePhaseSet { a, b, c }
    }

    /// Positive-sequence set: `b` lags `a` by 120 degrees, `c` leads by 120.
    pub fn balanced(a: Phasor) -> Self {
        let rot = Complex64::from_polar(1.0, -2.0 * PI / 3.0);
        ThreePhaseSet {
            a,
            b: a * rot,
            c: a * rot * rot,
        }
    }

    pub fn from_fn(mut f: impl FnMut(Phase) -> Phasor) -> Self {
        ThreePhaseSet {
            a: f(Phase::A),
            b: f(Phase::B),
            c: f(Phase::C),
        }
    }

    pub fn map(&self, mut f: impl FnMut(Phasor) -> Phasor) -> Self {
        ThreePhaseSet {
            a: f(self.a),
            b: f(self.b),
            c: f(self.c),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Phase, Phasor)> + '_ {
        Phase::ALL.into_iter().map(move |p| (p, self[p]))
    }

    pub fn magnitudes(&self) -> [f64; 3] {
        [self.a.norm(), self.b.norm(), self.c.norm()]
    }

    pub fn is_finite(&self) -> bool {
        is_finite(self.a) && is_finite(self.b) && is_finite(self.c)
    }

    /// Residual sum `a + b + c` (that is, 3 times the zero-sequence component).
    pub fn residual(&self) -> Phasor {
        self.a + self.b + self.c
    }
}

impl Index<Phase> for ThreePhaseSet {
    type Output = Phasor;
    fn index(&self, p: Phase) -> &Phasor {
        match p {
            Phase::A => &self.a,
            Phase::B => &self.b,
            Phase::C => &self.c,
        }
    }
}

impl IndexMut<Phase> for ThreePhaseSet {
    fn index_mut(&mut self, p: Phase) -> &mut Phasor {
        match p {
            Phase::A => &mut self.a,
            Phase::B => &mut self.b,
            Phase::C => &mut self.c,
        }
    }
}
