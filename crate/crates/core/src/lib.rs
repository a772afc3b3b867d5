pub mod ledger;
pub mod nfv_state;
pub mod routing;
pub mod topology;
pub mod units;
pub mod workload;
pub mod drl;
pub mod agents;
pub mod sim;
pub mod config;
