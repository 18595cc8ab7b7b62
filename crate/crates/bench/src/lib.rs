//! Fixtures shared by the benchmarks.

use hbcoop_core::analog::{build_all, AnalogPrecoder};
use hbcoop_core::channel::ChannelSet;
use hbcoop_core::montecarlo::{realization_channels, Scenario};
use hbcoop_core::silence::Instance;
use hbcoop_core::BaseStation;

/// One realization of a scenario with everything an [`Instance`] borrows.
pub struct Fixture {
    pub scenario: Scenario,
    pub channels: ChannelSet,
    pub analog: Vec<AnalogPrecoder>,
    pub stations: Vec<BaseStation>,
    pub targets: Vec<f64>,
    pub noise: Vec<f64>,
}

impl Fixture {
    pub fn new(scenario: Scenario, index: usize) -> Self {
        let channels = realization_channels(&scenario, index).expect("channels");
        let analog = build_all(
            scenario.architecture,
            &channels,
            &vec![scenario.rf_chains; scenario.n_bs],
        )
        .expect("analog precoders");
        let stations = scenario.stations().expect("stations");
        let targets = scenario.user_targets();
        let noise = vec![scenario.noise_watts(); scenario.n_users];
        Fixture {
            scenario,
            channels,
            analog,
            stations,
            targets,
            noise,
        }
    }

    /// Two-BS reference deployment.
    pub fn reference(index: usize) -> Self {
        Self::new(Scenario::table1(2), index)
    }

    pub fn instance(&self) -> Instance<'_> {
        Instance {
            channels: &self.channels,
            analog: &self.analog,
            stations: &self.stations,
            targets: &self.targets,
            noise: &self.noise,
        }
    }
}
