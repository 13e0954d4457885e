use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use securecyclon::identity::generate_identity;
use securecyclon::*;

fn chain(scheme: &dyn SignatureScheme, len: usize) -> Descriptor {
    let mut rng = SimRng::seed_from_u64(7);
    let keys: Vec<KeyPair> = (0..=len).map(|_| generate_identity(scheme, &mut rng)).collect();
    let mut d = Descriptor::create(&keys[0], Address::new(1, 4000), 1_000);
    for w in keys.windows(2) {
        d = d.transfer(&w[0], w[1].node_id(), scheme).unwrap();
    }
    d
}

fn descriptors(c: &mut Criterion) {
    let mut g = c.benchmark_group("descriptor");
    let schemes: [(&str, Box<dyn SignatureScheme>); 2] =
        [("keyed-hash", Box::new(KeyedHashScheme::new())), ("ed25519", Box::new(Ed25519Scheme::new()))];
    for (name, scheme) in &schemes {
        let bytes = chain(scheme.as_ref(), 6).encode();
        g.bench_function(format!("decode_verify_t6/{name}"), |b| {
            b.iter(|| {
                let d = Descriptor::decode(black_box(&bytes)).unwrap();
                assert!(d.verify_chain(scheme.as_ref()));
            })
        });
    }
    let scheme = KeyedHashScheme::new();
    let a = chain(&scheme, 6);
    g.bench_function("chain_relation_t6", |b| b.iter(|| chain_relation(black_box(&a), black_box(&a)).unwrap()));
    g.finish();
}

fn cycles(c: &mut Criterion) {
    let mut g = c.benchmark_group("cycle");
    g.sample_size(10);
    for mode in [Mode::Legacy, Mode::Secure] {
        let config = ScenarioConfig {
            mode,
            cycles: u64::MAX,
            ..ScenarioConfig::default()
        };
        let mut warm = Simulation::new(config.clone()).unwrap();
        for _ in 0..20 {
            warm.step();
        }
        g.bench_function(format!("n1000/{mode:?}"), |b| b.iter(|| warm.step()));
        g.bench_function(format!("bootstrap_n1000/{mode:?}"), |b| {
            b.iter_batched(|| config.clone(), |c| Simulation::new(c).unwrap(), BatchSize::PerIteration)
        });
    }
    g.finish();
}

criterion_group!(benches, descriptors, cycles);
criterion_main!(benches);
