//! Shared fixtures for the benchmarks: calibrated workloads per array size.

use sa_seu_core::fault::{FaultExecutor, Utilisation};
use sa_seu_core::stimulus::{calibrate_workload, generate_train, Stimulus, StimulusParams};
use sa_seu_core::PipelineConfig;

pub struct Fixture {
    pub config: PipelineConfig,
    pub params: StimulusParams,
}

impl Fixture {
    pub fn new(rows: usize, cols: usize, passes: usize) -> Self {
        let cal = calibrate_workload(rows, cols, passes, 2000, 11).expect("calibration");
        let params = StimulusParams::from_calibration(rows, cols, passes, &cal).expect("params");
        let config = PipelineConfig::new(rows, cols, passes, cal.shift).expect("config");
        Self { config, params }
    }

    pub fn stimulus(&self, utilisation: Utilisation, index: u64) -> Stimulus {
        let (n, target) = utilisation.train(&self.config);
        generate_train(&self.params, index, n, target).expect("stimulus")
    }

    pub fn executor(&self, utilisation: Utilisation) -> FaultExecutor {
        FaultExecutor::new(self.config.clone(), utilisation)
    }
}
