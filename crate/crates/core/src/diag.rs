//! Per-run diagnostic counters (thread-safe, report as key=value text).

use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug, Default)]
pub struct Diagnostics {
    /// Non-finite radiance samples dropped.
    pub dropped_samples: AtomicU64,
    /// Samples dropped because ‖∇φ‖ fell below the degenerate threshold.
    pub degenerate_gradients: AtomicU64,
    /// Near-tangent intersection denominators clamped.
    pub denominator_clamps: AtomicU64,
    /// Relaxed silhouette points detected.
    pub relaxed_points: AtomicU64,
    /// Sign-change candidates whose bracket collapsed before bisection.
    pub bracket_failures: AtomicU64,
    /// Sphere traces that exhausted max_steps with small φ (classified hit).
    pub step_stalls: AtomicU64,
}

impl Diagnostics {
    pub fn new() -> Diagnostics {
        Diagnostics::default()
    }

    pub fn bump(counter: &AtomicU64) {
        counter.fetch_add(1, Ordering::Relaxed);
    }

    /// Fold another run's counters into this one.
    pub fn merge(&self, other: &Diagnostics) {
        let pairs = [
            (&self.dropped_samples, &other.dropped_samples),
            (&self.degenerate_gradients, &other.degenerate_gradients),
            (&self.denominator_clamps, &other.denominator_clamps),
            (&self.relaxed_points, &other.relaxed_points),
            (&self.bracket_failures, &other.bracket_failures),
            (&self.step_stalls, &other.step_stalls),
        ];
        for (a, b) in pairs {
            a.fetch_add(b.load(Ordering::Relaxed), Ordering::Relaxed);
        }
    }

    pub fn report(&self) -> String {
        let g = |c: &AtomicU64| c.load(Ordering::Relaxed);
        format!(
            "dropped_samples={}\ndegenerate_gradients={}\ndenominator_clamps={}\nrelaxed_points={}\nbracket_failures={}\nstep_stalls={}\n",
            g(&self.dropped_samples),
            g(&self.degenerate_gradients),
            g(&self.denominator_clamps),
            g(&self.relaxed_points),
            g(&self.bracket_failures),
            g(&self.step_stalls),
        )
    }
}
