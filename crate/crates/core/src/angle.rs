use std::f64::consts::{PI, TAU};

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}
