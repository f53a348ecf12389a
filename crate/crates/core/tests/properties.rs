use approx::assert_abs_diff_eq;
use odrec::baselines::FrequencyModel;
use odrec::dataset::{build_encoder_sequences, build_training_examples, chronological_split, preprocess, Corpus, LocationRecord, Trip};
use odrec::eval::{acc_at_k, map_single_truth};
use odrec::geo::GeoPoint;
use odrec::model::{ranking, UserRef};
use proptest::prelude::*;

fn corpus(n_loc: usize, trips: Vec<Vec<(usize, usize)>>) -> Corpus {
    let locations = (0..n_loc)
        .map(|i| LocationRecord {
            loc_id: format!("L{i}"),
            point: GeoPoint::new(1.3, 103.8 + 0.001 * i as f64).unwrap(),
        })
        .collect();
    let users = (0..trips.len()).map(|u| format!("U{u}")).collect();
    let trips = trips
        .into_iter()
        .map(|seq| {
            seq.into_iter()
                .enumerate()
                .map(|(k, (o, d))| Trip {
                    origin: o % n_loc,
                    dest: d % n_loc,
                    pickup_ts: 1000 * k as i64,
                    dropoff_ts: 1000 * k as i64 + 300,
                })
                .collect()
        })
        .collect();
    Corpus::new(locations, users, trips).unwrap()
}

fn arb_corpus() -> impl Strategy<Value = Corpus> {
    (1usize..12, prop::collection::vec(prop::collection::vec((0usize..100, 0usize..100), 0..20), 0..30))
        .prop_map(|(n, t)| corpus(n, t))
}

proptest! {
    #[test]
    fn ranking_is_a_sorted_permutation(scores in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        let r = ranking(&scores);
        let mut seen = r.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..scores.len()).collect::<Vec<_>>());
        for w in r.windows(2) {
            let (a, b) = (scores[w[0]], scores[w[1]]);
            prop_assert!(a > b || (a == b && w[0] < w[1]));
        }
    }

    #[test]
    fn acc_is_monotone_in_k(n in 1usize..30, truth_seed in 0usize..1000, perm_seed in any::<u64>()) {
        let mut r: Vec<usize> = (0..n).collect();
        let mut s = perm_seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            r.swap(i, (s >> 33) as usize % (i + 1));
        }
        let truth = truth_seed % n;
        let accs: Vec<u8> = (1..=n).map(|k| acc_at_k(&r, truth, k).unwrap()).collect();
        prop_assert!(accs.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(accs[n - 1], 1);
        let map = map_single_truth(&[(r, truth)]).unwrap();
        prop_assert!(map > 0.0 && map <= 1.0);
    }

    #[test]
    fn preprocessing_is_a_fixpoint(c in arb_corpus(), min_trips in 1usize..6, min_users in 1usize..6) {
        let p = preprocess(&c, min_trips, min_users).corpus;
        prop_assert_eq!(&preprocess(&p, min_trips, min_users).corpus, &p);
        prop_assert!(p.trips.iter().all(|t| t.len() >= min_trips));
        prop_assert!(p.n_trips() <= c.n_trips());
    }

    #[test]
    fn split_partitions_each_user(c in arb_corpus(), ratio in 0.05f64..=1.0) {
        let s = chronological_split(&c, ratio).unwrap();
        for u in 0..c.n_users() {
            let mut joined = s.train.trips[u].clone();
            joined.extend(s.test.trips[u].iter().cloned());
            prop_assert_eq!(&joined, &c.trips[u]);
            if c.trips[u].len() >= 2 {
                prop_assert!(!s.train.trips[u].is_empty());
            }
        }
    }

    #[test]
    fn training_examples_chain_trips(c in arb_corpus()) {
        for (u, seq) in c.trips.iter().enumerate() {
            let ex = build_training_examples(u, seq);
            prop_assert_eq!(ex.len(), seq.len().saturating_sub(1));
            for (k, e) in ex.iter().enumerate() {
                prop_assert_eq!(e.prev_dest, seq[k].dest);
                prop_assert_eq!(e.origin, seq[k + 1].origin);
                prop_assert_eq!(e.target, seq[k + 1].dest);
            }
            let (o, d) = build_encoder_sequences(seq);
            prop_assert_eq!(o.len(), d.len());
            prop_assert!(o.iter().zip(&ex).all(|(v, e)| v.loc == e.origin));
            prop_assert!(d.iter().zip(&ex).all(|(v, e)| v.loc == e.prev_dest));
        }
    }

    #[test]
    fn frequency_rankings_are_permutations(c in arb_corpus(), lambda in 0.0f64..=1.0) {
        let fm = FrequencyModel::fit(&c);
        let n = c.n_locations();
        let full = |r: Vec<usize>| {
            let mut r = r;
            r.sort_unstable();
            r == (0..n).collect::<Vec<_>>()
        };
        prop_assert!(full(fm.top_rank(n)));
        for u in 0..c.n_users() {
            let user = UserRef::Known(u);
            prop_assert!(full(fm.u_top_rank(user, n)));
            prop_assert!(full(fm.taxi_rank(user, lambda, n)));
            // Everything the user has visited outranks everything they have not.
            let visited: Vec<bool> = (0..n).map(|l| c.trips[u].iter().any(|t| t.dest == l)).collect();
            let r = fm.u_top_rank(user, n);
            let first_unvisited = r.iter().position(|&l| !visited[l]).unwrap_or(n);
            prop_assert!(r[first_unvisited..].iter().all(|&l| !visited[l]));
            if c.n_trips() > 0 && !c.trips[u].is_empty() {
                assert_abs_diff_eq!(fm.taxi_scores(user, lambda).iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            }
        }
    }
}
