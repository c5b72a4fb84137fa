#![allow(dead_code)]

pub mod oracles;

use snapdial::corpus::*;
use snapdial::model::World;
use snapdial::numerics::Rng;
use snapdial::tracker::{train_trackers, TrackerHyper};

pub struct Fixture {
    pub world: World,
    pub splits: Splits,
    pub vocab: Vocabulary,
}

/// Generated corpus, trained trackers and vocabulary.
pub fn fixture(n: usize, seed: u64, min_count: usize) -> Fixture {
    let ontology = Ontology::restaurant();
    let database = Database::restaurant(&ontology, seed);
    let dialogues = generate_corpus(&ontology, &database, n, &GeneratorConfig::default(), &mut Rng::new(seed)).unwrap();
    let splits = split(&dialogues, &mut Rng::substream(seed, 1)).unwrap();
    let trackers = train_trackers(&ontology, &splits.train, &splits.valid, &TrackerHyper::default()).unwrap();
    let vocab = build_vocab(&ontology, &splits.train, min_count).unwrap();
    Fixture {
        world: World { ontology, database, trackers },
        splits,
        vocab,
    }
}
