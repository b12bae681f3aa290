use crate::error::{Error, Result};

/// Upper 1% point of the chi-square distribution with one degree of freedom.
pub const CHI2_1DOF_CRITICAL_001: f64 = 6.635;

/// Outcome of a continuity-corrected McNemar test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McNemar {
    /// Samples method A got right and method B got wrong.
    pub b: usize,
    /// Samples method A got wrong and method B got right.
    pub c: usize,
    pub statistic: f64,
    /// Significant at the 0.01 level.
    pub significant: bool,
}

/// Paired McNemar test on per-sample correctness of two methods.
pub fn mcnemar(correct_a: &[bool], correct_b: &[bool]) -> Result<McNemar> {
    if correct_a.len() != correct_b.len() {
        return Err(Error::LengthMismatch {
            left: correct_a.len(),
            right: correct_b.len(),
        });
    }
    let (mut b, mut c) = (0usize, 0usize);
    for (&x, &y) in correct_a.iter().zip(correct_b) {
        match (x, y) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(from_discordant(b, c))
}

pub(crate) fn from_discordant(b: usize, c: usize) -> McNemar {
    if b + c == 0 {
        return McNemar {
            b,
            c,
            statistic: 0.0,
            significant: false,
        };
    }
    let diff = (b as f64 - c as f64).abs() - 1.0;
    let statistic = diff * diff / (b + c) as f64;
    McNemar {
        b,
        c,
        statistic,
        significant: statistic > CHI2_1DOF_CRITICAL_001,
    }
}
