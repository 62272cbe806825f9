use m3p::mission::run_mission;
use m3p::scenario::Scenario;

#[test]
#[ignore]
fn one_seed() {
    let seed: u64 = std::env::var("SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(5);
    let scn = Scenario::builtin("sixcorridor").unwrap();
    let out = run_mission(&scn, seed).unwrap();
    let r = out.report;
    println!("seed {seed}: {:?} counts {:?} goal {:.2}", r.final_phase, r.recovery_mode_counts, r.true_goal_distance);
}
