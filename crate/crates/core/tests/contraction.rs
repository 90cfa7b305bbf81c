mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tessera::config::{NodeProfile, Strategy, StrategyChoice};
use tessera::dense::{tensordot, DenseTensor};
use tessera::planner::{plan, BlockArray, ContractionSpec, TuneConfig};
use tessera::runtime::{execute_contraction, Runtime};
use tessera::store::BlockStore;

use common::{random_layouts, rel_error};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn assembled_blocks_equal_dense_contraction(seed in any::<u64>(), workers in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (la, lb) = random_layouts(&mut rng);
        let da = DenseTensor::random(la.global_extents(), &mut rng);
        let db = DenseTensor::random(lb.global_extents(), &mut rng);
        let spec = ContractionSpec::new(la.clone(), lb.clone()).unwrap();
        let want = tensordot(&da, &db, &spec.axes()).unwrap();

        let store = Arc::new(BlockStore::temporary(2).unwrap());
        let node = NodeProfile { cores: 4, memory_bytes: 1 << 30 };
        let rt = Runtime::new(vec![node; 2], workers, store.clone());
        let a = BlockArray::scatter(&store, la, &da).unwrap();
        let b = BlockArray::scatter(&store, lb, &db).unwrap();
        for strategy in [Strategy::Sequential, Strategy::Commutative, Strategy::Tree] {
            let config = TuneConfig { strategy: StrategyChoice::from(strategy), bk_threshold: 4 };
            let p = plan(spec.clone(), node, config).unwrap();
            let run = execute_contraction(&rt, &p, &a, &b).unwrap();
            let got = run.output.gather(&store, 0).unwrap();
            prop_assert!(rel_error(&got, &want) <= 1e-4, "{}", strategy);
            run.output.delete(&store).unwrap();
        }
    }
}
