//! Double-double time stamps.
//!
//! Close to a quenching time the step sizes fall far below the spacing of
//! `f64` numbers near `t`, so times are accumulated as an unevaluated sum
//! `hi + lo`. Differences between nearby stamps keep full relative accuracy.

use std::cmp::Ordering;
use std::fmt;

use serde::{Serialize, Serializer};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Time {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

impl Time {
    pub const ZERO: Time = Time { hi: 0.0, lo: 0.0 };

    pub fn new(t: f64) -> Self {
        Self { hi: t, lo: 0.0 }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn add(self, dt: f64) -> Self {
        let (s, e) = two_sum(self.hi, dt);
        let (hi, lo) = two_sum(s, e + self.lo);
        Self { hi, lo }
    }

    /// `self - earlier` rounded to `f64`.
    pub fn since(self, earlier: Time) -> f64 {
        let (s, e) = two_sum(self.hi, -earlier.hi);
        s + (e + (self.lo - earlier.lo))
    }
}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.since(*other).partial_cmp(&0.0)
    }
}

impl From<f64> for Time {
    fn from(t: f64) -> Self {
        Time::new(t)
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.to_f64(), f)
    }
}

impl Serialize for Time {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.to_f64())
    }
}
