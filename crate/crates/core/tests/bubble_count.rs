//! Realized bubble counts at (40,5) stay near the requested target.

use bosoncert::coarsegrain::{build_bubbles, BubbleParams};
use bosoncert::distributions::boson_distribution;
use bosoncert::fock::FockState;
use bosoncert::interferometer::haar_unitary;
use bosoncert::rng::Seed;
use bosoncert::sampling::TableSampler;

#[test]
fn mean_bubble_count_tracks_target() {
    let u = haar_unitary(40, 77).unwrap();
    let input = FockState::single_occupancy(40, 5).unwrap();
    let table = boson_distribution(&u, &input).unwrap();
    let sampler = TableSampler::new(&table);
    let targets = [26usize, 41, 70];
    let mut sums = [0usize; 3];
    let seeds = 100;
    for s in 0..seeds {
        let sample = sampler.draw(10_000, Seed::new(500 + s, 1)).unwrap();
        for (sum, &t) in sums.iter_mut().zip(&targets) {
            *sum += build_bubbles(&sample, &BubbleParams::new(t)).unwrap().len();
        }
    }
    for (sum, t) in sums.into_iter().zip(targets) {
        let mean = sum as f64 / seeds as f64;
        println!("target {t}: mean N_B {mean:.1}");
        assert!((mean - t as f64).abs() <= 0.2 * t as f64, "target {t}: mean {mean}");
    }
}
