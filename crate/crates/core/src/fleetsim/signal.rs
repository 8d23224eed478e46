//! Noiseless signal shapes per sensor and deterministic hash noise.

use std::f64::consts::PI;

use serde::Serialize;

use crate::model::Orientation;

/// Inputs of a signal evaluation, in site-local terms.
#[derive(Debug, Clone, Copy)]
pub struct LocalTime {
    /// Hours since local midnight, fractional.
    pub hour: f64,
    pub weekday: bool,
    /// Days since the fleet start.
    pub day: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Signal {
    /// Diurnal base + orientation-dependent solar gain + occupancy.
    IndoorTemperature { solar_gain: f64 },
    IndoorHumidity,
    Luminosity,
    Co2,
    OutdoorTemperature,
    OutdoorHumidity,
    Wind,
    /// Rain bursts per hour, mm per report.
    Rain,
    /// Smooth diurnal pollutant/pressure curve.
    Atmospheric { base: f64, amplitude: f64 },
    /// Phase current: school-hours load profile on weekdays.
    Current { scale: f64 },
}

/// Diurnal cycle in [-1, 1], peaking mid-afternoon.
fn diurnal(hour: f64) -> f64 {
    (2.0 * PI * (hour - 9.0) / 24.0).sin()
}

/// Occupancy in [0, 1]: ramps at 08:00–08:30 and 16:30–17:00 on weekdays.
fn occupancy(t: LocalTime) -> f64 {
    if !t.weekday {
        return 0.0;
    }
    let h = t.hour;
    if (8.0..8.5).contains(&h) {
        (h - 8.0) * 2.0
    } else if (8.5..16.5).contains(&h) {
        1.0
    } else if (16.5..17.0).contains(&h) {
        (17.0 - h) * 2.0
    } else {
        0.0
    }
}

fn daylight(hour: f64) -> f64 {
    // sunrise 07:00, sunset 19:00
    if (7.0..19.0).contains(&hour) {
        (PI * (hour - 7.0) / 12.0).sin()
    } else {
        0.0
    }
}

impl Signal {
    pub fn solar_gain(o: Orientation) -> f64 {
        // strongest for south-facing rooms
        let b = o.bearing().to_radians();
        1.5 * (1.0 - b.cos()) / 2.0
    }

    /// Noiseless value at local time `t`; `burst` ∈ [0,1) drives rain.
    pub fn eval(&self, t: LocalTime, burst: f64) -> f64 {
        let d = diurnal(t.hour);
        match *self {
            Signal::IndoorTemperature { solar_gain } => {
                21.0 + 2.0 * d + solar_gain * daylight(t.hour) + 1.0 * occupancy(t)
            }
            Signal::IndoorHumidity => 50.0 - 5.0 * d,
            Signal::Luminosity => 600.0 * daylight(t.hour) + 150.0 * occupancy(t),
            Signal::Co2 => 600.0 + 250.0 * d + 150.0 * occupancy(t),
            Signal::OutdoorTemperature => 15.0 + 6.0 * d,
            Signal::OutdoorHumidity => 65.0 - 15.0 * d,
            Signal::Wind => 1.5 + 1.0 * d,
            Signal::Rain => {
                if burst < 0.08 {
                    0.05 + 5.0 * burst
                } else {
                    0.0
                }
            }
            Signal::Atmospheric { base, amplitude } => base + amplitude * d,
            Signal::Current { scale } => scale * (12.0 + 8.0 * d + 10.0 * occupancy(t)),
        }
    }

    /// Closed range containing every noiseless value.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Signal::IndoorTemperature { solar_gain } => (19.0, 24.0 + solar_gain),
            Signal::IndoorHumidity => (45.0, 55.0),
            Signal::Luminosity => (0.0, 750.0),
            Signal::Co2 => (350.0, 1000.0),
            Signal::OutdoorTemperature => (9.0, 21.0),
            Signal::OutdoorHumidity => (50.0, 80.0),
            Signal::Wind => (0.5, 2.5),
            Signal::Rain => (0.0, 0.45),
            Signal::Atmospheric { base, amplitude } => (base - amplitude, base + amplitude),
            Signal::Current { scale } => (4.0 * scale, 30.0 * scale),
        }
    }

    /// Zero-inflated signals: their window IQR is routinely zero.
    pub fn is_intermittent(&self) -> bool {
        matches!(self, Signal::Rain)
    }

    /// Value injected as an outlier: far outside the bounds, beyond any
    /// window's 3·IQR fences. Humidity drops to 0 % (a sensor-error class).
    pub fn outlier_value(&self, noise_amplitude: f64) -> f64 {
        let (lo, hi) = self.bounds();
        let span = hi - lo + 2.0 * noise_amplitude;
        match self {
            Signal::IndoorHumidity => 0.0,
            _ => hi + noise_amplitude + 4.0 * span + 1.0,
        }
    }

    /// Absolute noise amplitude for a relative noise level.
    pub fn noise_amplitude(&self, rel: f64) -> f64 {
        if self.is_intermittent() {
            return 0.0;
        }
        let (lo, hi) = self.bounds();
        rel * (hi - lo)
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in [0, 1) from a hashed key.
pub(crate) fn unit(seed: u64, a: u64, b: u64) -> f64 {
    let h = splitmix64(seed ^ splitmix64(a.wrapping_mul(0x1000_0000_01B3) ^ splitmix64(b)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}
