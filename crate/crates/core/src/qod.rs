//! Closed-form data-freshness model.
//!
//! A device refreshes its cached data every `theta` time slots. Requests land
//! uniformly at random within a cycle, which yields closed forms for the
//! average age of information (AoI) and the average service latency. The
//! quality-of-data (QoD) score blends the headroom of both quantities below
//! their caps on a log scale.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QodError {
    #[error("update cycle must span at least one slot (theta = {0})")]
    DegenerateCycle(f64),
    #[error("log argument {0} is not positive; update frequency infeasible for the given caps")]
    LogDomain(f64),
}

/// Slot timing derived from the cached data size and the transmission rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotConfig {
    cached_data_size_bits: f64,
    transmission_rate: f64,
    slot_duration: f64,
}

impl SlotConfig {
    /// Slot duration is always `size / rate`; both inputs must be positive.
    pub fn new(cached_data_size_bits: f64, transmission_rate: f64) -> Self {
        assert!(
            cached_data_size_bits > 0.0 && transmission_rate > 0.0,
            "data size and rate must be positive"
        );
        Self {
            cached_data_size_bits,
            transmission_rate,
            slot_duration: cached_data_size_bits / transmission_rate,
        }
    }

    /// 24 Kb over 24 Mbps: a 1 ms slot.
    pub fn default_experiment() -> Self {
        Self::new(24_000.0, 24_000_000.0)
    }

    pub fn cached_data_size_bits(&self) -> f64 {
        self.cached_data_size_bits
    }

    pub fn transmission_rate(&self) -> f64 {
        self.transmission_rate
    }

    pub fn slot_duration(&self) -> f64 {
        self.slot_duration
    }
}

/// Maximum permissible average AoI and service latency, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreshnessCaps {
    pub max_aoi: f64,
    pub max_latency: f64,
}

impl FreshnessCaps {
    pub fn new(max_aoi: f64, max_latency: f64) -> Self {
        assert!(max_aoi > 0.0 && max_latency > 0.0, "caps must be positive");
        Self { max_aoi, max_latency }
    }
}

/// Number of time slots per update cycle; the inverse of the update frequency.
///
/// Treated as a continuous real >= 1 so that update frequencies can vary
/// continuously during optimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateCycle {
    theta: f64,
}

impl UpdateCycle {
    pub fn new(theta: f64) -> Result<Self, QodError> {
        if !(theta >= 1.0) {
            return Err(QodError::DegenerateCycle(theta));
        }
        Ok(Self { theta })
    }

    pub fn from_frequency(f: f64) -> Result<Self, QodError> {
        Self::new(1.0 / f)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

/// Average AoI over a cycle: `t * (1/theta + theta/2 + 1/2)`.
pub fn average_aoi(cycle: UpdateCycle, slot: SlotConfig) -> f64 {
    let theta = cycle.theta();
    slot.slot_duration() * (1.0 / theta + theta / 2.0 + 0.5)
}

/// Average service latency over a cycle: `t * (1 + 1/theta)`.
///
/// A request in the last slot of the cycle waits one extra slot for the
/// refresh; every other slot is served immediately.
pub fn average_latency(cycle: UpdateCycle, slot: SlotConfig) -> f64 {
    let theta = cycle.theta();
    slot.slot_duration() * (1.0 + 1.0 / theta)
}

/// AoI headroom below the cap. Negative when the cap is exceeded.
pub fn aoi_impact(aoi: f64, caps: FreshnessCaps) -> f64 {
    caps.max_aoi - aoi
}

/// Latency headroom below the cap. Negative when the cap is exceeded.
pub fn latency_impact(latency: f64, caps: FreshnessCaps) -> f64 {
    caps.max_latency - latency
}

/// QoD score: `ln(alpha * (G - H) + H + 1)` where `G` and `H` are the AoI and
/// latency impacts and `alpha` weights AoI preference over latency.
pub fn qod_score(
    cycle: UpdateCycle,
    slot: SlotConfig,
    caps: FreshnessCaps,
    alpha: f64,
) -> Result<f64, QodError> {
    assert!((0.0..=1.0).contains(&alpha), "alpha must lie in [0, 1]");
    let g = aoi_impact(average_aoi(cycle, slot), caps);
    let h = latency_impact(average_latency(cycle, slot), caps);
    let arg = alpha * (g - h) + h + 1.0;
    if arg <= 0.0 {
        return Err(QodError::LogDomain(arg));
    }
    Ok(arg.ln())
}
