use std::time::Instant;
use rand::{Rng, SeedableRng};
use v2g_core::sac::{ReplayBuffer, SacAgent, SacConfig, Transition};
fn main() {
    for (obs, act) in [(5usize, 2usize), (34, 2), (34, 10)] {
        let mut agent = SacAgent::new(obs, act, SacConfig::default(), 0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut b = ReplayBuffer::new(10_000);
        for _ in 0..2000 { b.push(Transition{ state:(0..obs).map(|_| rng.random_range(0.9..1.1)).collect(), action:(0..act).map(|_| rng.random_range(-1.0..1.0)).collect(), reward: rng.random_range(-5.0..10.0), next_state:(0..obs).map(|_| rng.random_range(0.9..1.1)).collect(), done:false}); }
        let t = Instant::now();
        for _ in 0..20 { agent.update(&b).unwrap(); }
        println!("obs {obs} act {act}: {:.1} ms/update", t.elapsed().as_secs_f64()*1000.0/20.0);
    }
}
