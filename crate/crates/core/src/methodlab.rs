//! Closed-form single-inductor fixtures for comparing switching treatments.
//!
//! Two fixtures: an inductor carrying `i_L0` whose parallel switch opens,
//! with a freewheeling diode ([`freewheel_resolver`]) and without one
//! ([`interrupt_reinit`]). Everything here is scalar algebra written out by hand;
//! nothing is shared with the MNA engine, so the two can check each other.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureParams {
    pub l: f64,
    pub h: f64,
    pub il0: f64,
}

impl Default for FixtureParams {
    fn default() -> Self {
        Self {
            l: 0.005,
            h: 1e-4,
            il0: 1.0,
        }
    }
}

impl FixtureParams {
    /// Trapezoidal companion conductance `h / 2L`.
    fn g(&self) -> f64 {
        self.h / (2.0 * self.l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolver {
    /// Trapezoidal solve at the switching instant, assuming `u = 0` and
    /// `i_L = i_L0` one step earlier.
    TrapAtTsw,
    /// Backward-Euler half step from the switching instant.
    BeHalf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pass {
    pub diode_on: bool,
    pub u: f64,
    pub il: f64,
    pub id: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolverRecord {
    pub resolver: Resolver,
    pub passes: Vec<Pass>,
}

impl ResolverRecord {
    pub fn last(&self) -> &Pass {
        self.passes.last().expect("at least one pass")
    }
}

/// Switch opens with the diode initially off; solve, re-check the diode,
/// repeat until it stops changing.
pub fn freewheel_resolver(p: FixtureParams, resolver: Resolver) -> ResolverRecord {
    // i_L = g * u + hist for the method in use.
    let (g, hist) = match resolver {
        Resolver::TrapAtTsw => {
            let (u_prev, i_prev) = (0.0, p.il0);
            let g = p.h / (2.0 * p.l);
            (g, g * u_prev + i_prev)
        }
        Resolver::BeHalf => ((p.h / 2.0) / p.l, p.il0),
    };
    let mut passes = Vec::new();
    let mut diode_on = false;
    for _ in 0..4 {
        let pass = if diode_on {
            Pass {
                diode_on,
                u: 0.0,
                il: hist,
                id: hist,
            }
        } else {
            Pass {
                diode_on,
                u: -hist / g,
                il: 0.0,
                id: 0.0,
            }
        };
        passes.push(pass);
        // Diode anode at ground, cathode at u.
        let flip = if diode_on {
            pass.id < 0.0
        } else {
            -pass.u > 0.0
        };
        if !flip {
            break;
        }
        diode_on = !diode_on;
    }
    ResolverRecord { resolver, passes }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabMethod {
    Instantaneous,
    HalfBe,
    Zou,
    TwoHalfExtrap,
    Fbbe,
}

impl LabMethod {
    pub const ALL: [LabMethod; 5] = [
        LabMethod::Instantaneous,
        LabMethod::HalfBe,
        LabMethod::Zou,
        LabMethod::TwoHalfExtrap,
        LabMethod::Fbbe,
    ];

    pub fn id(self) -> &'static str {
        match self {
            LabMethod::Instantaneous => "instantaneous",
            LabMethod::HalfBe => "half-be",
            LabMethod::Zou => "zou",
            LabMethod::TwoHalfExtrap => "two-half-extrap",
            LabMethod::Fbbe => "fbbe",
        }
    }
}

impl fmt::Display for LabMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for LabMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| format!("unknown method '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodReport {
    pub method: LabMethod,
    pub u_plus: f64,
    pub il_plus: f64,
    pub oscillation: bool,
    /// `u` at the first four trapezoidal steps after the switching instant.
    pub u_samples: [f64; 4],
}

/// `true` when the post-switching pair leads to no trapezoidal ringing.
pub fn oscillation_condition(u_plus: f64, il_plus: f64, l: f64, h: f64) -> bool {
    (h / (2.0 * l) * u_plus + il_plus).abs() <= 1e-12 * il_plus.abs().max(1.0)
}

/// The lone inductor after its parallel switch opens: compute the
/// post-switching values with `method`, then run four trapezoidal steps.
pub fn interrupt_reinit(p: FixtureParams, method: LabMethod) -> MethodReport {
    let g = p.g();
    let gb = (p.h / 2.0) / p.l;
    let i0 = p.il0;
    // With the switch open the inductor current is forced to zero, so every
    // solve reads 0 = g * u + hist.
    let (u_plus, il_plus) = match method {
        LabMethod::Instantaneous => {
            let hist = g * 0.0 + i0;
            (-hist / g, 0.0)
        }
        LabMethod::HalfBe => {
            let u_half = -i0 / gb;
            (u_half, i0)
        }
        LabMethod::Zou => {
            let il_half = 0.0;
            let il_back = 2.0 * i0 - il_half;
            // i0 = gb * u + il_back
            ((i0 - il_back) / gb, i0)
        }
        LabMethod::TwoHalfExtrap => {
            let (u_half, il_half) = (-i0 / gb, 0.0);
            let u_full = -il_half / gb;
            (2.0 * u_half - u_full, 2.0 * il_half - 0.0)
        }
        LabMethod::Fbbe => {
            let il_half = 0.0;
            // 0 = (-gb) * u + il_half
            (il_half / gb, 0.0)
        }
    };

    let mut u_samples = [0.0; 4];
    let (mut u, mut i) = (u_plus, il_plus);
    for s in &mut u_samples {
        let hist = i + g * u;
        u = -hist / g;
        i = 0.0;
        *s = u;
    }
    MethodReport {
        method,
        u_plus,
        il_plus,
        oscillation: !oscillation_condition(u_plus, il_plus, p.l, p.h),
        u_samples,
    }
}

/// One row per method: `method u_plus iL_plus oscillation u1 u2 u3 u4`.
pub fn lab_table(p: FixtureParams) -> String {
    let mut out = format!(
        "{:<16} {:>24} {:>24} {:>11} {:>24} {:>24} {:>24} {:>24}\n",
        "method", "u_plus", "iL_plus", "oscillation", "u1", "u2", "u3", "u4"
    );
    for m in LabMethod::ALL {
        let r = interrupt_reinit(p, m);
        out.push_str(&format!(
            "{:<16} {:>24.16e} {:>24.16e} {:>11} {:>24.16e} {:>24.16e} {:>24.16e} {:>24.16e}\n",
            m.id(),
            r.u_plus + 0.0,
            r.il_plus + 0.0,
            r.oscillation,
            r.u_samples[0] + 0.0,
            r.u_samples[1] + 0.0,
            r.u_samples[2] + 0.0,
            r.u_samples[3] + 0.0
        ));
    }
    out
}
