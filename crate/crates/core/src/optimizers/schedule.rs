use serde::{Deserialize, Serialize};

/// Learning-rate multiplier hook. Constant unless configured otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Linear warmup, then cosine decay to `min_ratio` at `total_steps`.
    WarmupCosine {
        warmup_steps: u64,
        total_steps: u64,
        min_ratio: f64,
    },
}

impl LrSchedule {
    pub fn multiplier(&self, step: u64) -> f64 {
        match *self {
            LrSchedule::Constant => 1.0,
            LrSchedule::WarmupCosine {
                warmup_steps,
                total_steps,
                min_ratio,
            } => {
                if step < warmup_steps {
                    return (step + 1) as f64 / warmup_steps as f64;
                }
                let span = total_steps.saturating_sub(warmup_steps).max(1) as f64;
                let t = ((step - warmup_steps) as f64 / span).min(1.0);
                min_ratio + (1.0 - min_ratio) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_is_one() {
        assert_eq!(LrSchedule::Constant.multiplier(12345), 1.0);
    }

    #[test]
    fn warmup_then_cosine() {
        let s = LrSchedule::WarmupCosine {
            warmup_steps: 10,
            total_steps: 110,
            min_ratio: 0.1,
        };
        assert!((s.multiplier(0) - 0.1).abs() < 1e-15);
        assert_eq!(s.multiplier(9), 1.0);
        assert_eq!(s.multiplier(10), 1.0);
        assert!((s.multiplier(60) - 0.55).abs() < 1e-12);
        assert!((s.multiplier(110) - 0.1).abs() < 1e-12);
        assert!((s.multiplier(500) - 0.1).abs() < 1e-12);
    }
}
