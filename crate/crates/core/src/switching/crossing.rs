/// Root of the straight line through `(t - h, x_prev)` and `(t, x_new)`.
///
/// # Panics
/// When the segment has no sign change: `x_new` must be zero, or `x_prev`
/// and `x_new` must be nonzero with opposite signs.
pub fn zero_cross_time(x_prev: f64, x_new: f64, t: f64, h: f64) -> f64 {
    if x_new == 0.0 {
        return t;
    }
    assert!(
        x_prev != 0.0 && x_prev.signum() != x_new.signum(),
        "zero_cross_time needs a sign change, got {x_prev} -> {x_new}"
    );
    t - x_new.abs() / (x_prev.abs() + x_new.abs()) * h
}
