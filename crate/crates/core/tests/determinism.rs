//! Identical seeds give byte-identical trajectories whatever the number of
//! worker threads.

use blockquery::{datasets, run_campaign, ChainConfig, CampaignConfig, CuratedOracle, Strategy};

pub fn trajectory_json(threads: usize, strategy: Strategy, seed: u64) -> String {
    let karate = datasets::karate();
    let config = CampaignConfig::new(2, strategy, ChainConfig::schedule(8, 4_000, 2_000), seed);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let mut oracle = CuratedOracle::new(karate.truth.clone().unwrap());
        run_campaign(&karate.graph, &mut oracle, &config, 6).unwrap().to_json().unwrap()
    })
}

#[test]
fn thread_count_does_not_change_trajectories() {
    for strategy in [Strategy::Mi, Strategy::Aa, Strategy::Random] {
        let one = trajectory_json(1, strategy, 11);
        for threads in [2, 3, 8] {
            assert!(one == trajectory_json(threads, strategy, 11), "{strategy} with {threads} threads");
        }
    }
}

#[test]
fn different_seeds_differ() {
    assert_ne!(trajectory_json(1, Strategy::Mi, 1), trajectory_json(1, Strategy::Mi, 2));
}
