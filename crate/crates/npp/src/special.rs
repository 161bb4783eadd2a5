//! Small special-function helpers not provided by statrs.

/// Trigamma function `psi'(x)` for `x > 0`.
///
/// Uses the recurrence `psi'(x) = psi'(x+1) + 1/x^2` to shift the argument
/// above 10, then the asymptotic series up to the `B_10` term.
pub fn trigamma(x: f64) -> f64 {
    assert!(x > 0.0, "trigamma requires x > 0, got {x}");
    let mut acc = 0.0;
    let mut x = x;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // 1/x + 1/(2x^2) + 1/(6x^3) - 1/(30x^5) + 1/(42x^7) - 1/(30x^9) + 5/(66x^11)
    acc + inv
        * (1.0
            + inv * (0.5
                + inv * (1.0 / 6.0
                    + inv2
                        * (-1.0 / 30.0
                            + inv2 * (1.0 / 42.0 + inv2 * (-1.0 / 30.0 + inv2 * 5.0 / 66.0))))))
}
