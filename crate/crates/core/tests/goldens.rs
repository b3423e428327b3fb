use stsim_core::config::RunConfig;
use stsim_core::kernel::{run_desk_pass, DeskPass};
use stsim_core::mapper::{Dataflow, LoopDim, Stationarity};
use stsim_core::sim::run_simulate;

#[test]
fn default_sparsity_is_frozen() {
    let s = run_desk_pass(&DeskPass::default()).unwrap().stats;
    assert_eq!(s.s_s, 0.1448974609375);
    assert_eq!(s.s_smg, 0.12139892578125);
    assert_eq!(s.s_pg, 0.25213623046875);
}

#[test]
fn default_os_c_cycles_are_frozen() {
    let cfg = RunConfig::default();
    let r = run_simulate(&cfg, Dataflow::new(Stationarity::Os, LoopDim::C)).unwrap();
    assert_eq!(r.latency.total_cycles, 333_868_032);
    assert_eq!(r.latency.mm_cycles, 333_868_032);
    let phases: Vec<u64> = r.latency.phases.iter().map(|p| p.cycles).collect();
    assert_eq!(phases, vec![121_490_944, 134_139_392, 78_237_696]);
}
