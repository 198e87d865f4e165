//! Gate drivers. A driver's level is a function of time alone.

use crate::netlist::DriverKind;

const SUB_BRACKETS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Toggle {
    pub time: f64,
    /// Gate level from `time` onwards.
    pub level: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Driver {
    pub id: String,
    pub kind: DriverKind,
}

/// Index `k` of the period `[k/f, (k+1)/f)` containing `t`, robust to
/// rounding in `t * f`.
fn period_index(t: f64, f: f64) -> f64 {
    let mut k = (t * f).floor();
    if k / f > t {
        k -= 1.0;
    } else if (k + 1.0) / f <= t {
        k += 1.0;
    }
    k
}

impl Driver {
    pub fn new(id: &str, kind: DriverKind) -> Self {
        Self {
            id: id.to_string(),
            kind,
        }
    }

    pub fn level(&self, t: f64) -> bool {
        match self.kind {
            DriverKind::Square { frequency, duty } => {
                let k = period_index(t, frequency);
                t < (k + duty) / frequency
            }
            DriverKind::PwmSineSaw { carrier, .. } => {
                self.pwm_margin(period_index(t, carrier), t) > 0.0
            }
        }
    }

    /// Modulating wave minus the carrier, using the carrier ramp of period `k`
    /// even when `t` lies at or past its end.
    fn pwm_margin(&self, k: f64, t: f64) -> f64 {
        let DriverKind::PwmSineSaw {
            carrier,
            magnitude,
            mod_frequency,
            mod_phase,
        } = self.kind
        else {
            unreachable!()
        };
        let modulating =
            magnitude * (2.0 * std::f64::consts::PI * mod_frequency * t + mod_phase).sin();
        let saw = -1.0 + 2.0 * (t - k / carrier) * carrier;
        modulating - saw
    }

    /// Earliest level change strictly after `after`.
    pub fn next_toggle(&self, after: f64) -> Option<Toggle> {
        match self.kind {
            DriverKind::Square { frequency, duty } => {
                let k = period_index(after, frequency);
                [
                    ((k + duty) / frequency, false),
                    ((k + 1.0) / frequency, true),
                    ((k + 1.0 + duty) / frequency, false),
                ]
                .into_iter()
                .find(|&(time, _)| time > after)
                .map(|(time, level)| Toggle { time, level })
            }
            DriverKind::PwmSineSaw {
                carrier,
                mod_frequency,
                ..
            } => {
                let periods = if mod_frequency > 0.0 {
                    (2.0 * carrier / mod_frequency).ceil() as usize + 2
                } else {
                    2
                };
                let k0 = period_index(after, carrier);
                (0..periods).find_map(|j| self.pwm_toggle_in_period(k0 + j as f64, after))
            }
        }
    }

    /// First toggle in `(after, (k+1)/fc]` that belongs to carrier period `k`,
    /// including the wrap of the carrier at its end.
    fn pwm_toggle_in_period(&self, k: f64, after: f64) -> Option<Toggle> {
        let DriverKind::PwmSineSaw { carrier, .. } = self.kind else {
            unreachable!()
        };
        let start = k / carrier;
        let end = (k + 1.0) / carrier;
        let level_in = |t: f64| self.pwm_margin(k, t) > 0.0;

        let lo0 = start.max(after);
        if lo0 < end {
            let width = (end - start) / SUB_BRACKETS as f64;
            let mut lo = lo0;
            for s in 1..=SUB_BRACKETS {
                let hi = if s == SUB_BRACKETS {
                    end
                } else {
                    start + width * s as f64
                };
                if hi <= lo {
                    continue;
                }
                let old = level_in(lo);
                if level_in(hi) != old {
                    let (mut a, mut b) = (lo, hi);
                    loop {
                        let mid = 0.5 * (a + b);
                        if mid <= a || mid >= b {
                            break;
                        }
                        if level_in(mid) == old {
                            a = mid;
                        } else {
                            b = mid;
                        }
                    }
                    if b < end {
                        return Some(Toggle {
                            time: b,
                            level: !old,
                        });
                    }
                }
                lo = hi;
            }
        }

        if end > after {
            let before = level_in(end);
            let next = self.level(end);
            if before != next {
                return Some(Toggle {
                    time: end,
                    level: next,
                });
            }
        }
        None
    }
}
