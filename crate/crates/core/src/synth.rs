//! Seeded synthetic hashtag streams.
//!
//! Topics own a small vocabulary of related hashtags and a pool of resources.
//! Tag and resource popularity within a topic follow a Zipf-like law, and each
//! tag has its own click propensity, so the aggregated network has hubs and
//! varied CTRs.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::TagEvent;

const TOPICS: &[(&str, &[&str])] = &[
    ("politics", &["politics", "polls", "policy", "election", "elections", "vote", "voters", "senate", "senator", "parliament", "debate", "democracy"]),
    ("sport", &["sport", "sports", "soccer", "football", "footballer", "tennis", "olympics", "olympic", "marathon", "match", "matchday", "goal"]),
    ("technology", &["tech", "technology", "techno", "ai", "aiart", "robots", "robotics", "software", "softwaredev", "cloud", "cloudnative", "startup"]),
    ("music", &["music", "musical", "musician", "concert", "concerts", "jazz", "jazzfest", "rock", "rocknroll", "album", "albums", "playlist"]),
    ("food", &["food", "foodie", "foodporn", "recipe", "recipes", "vegan", "veganfood", "coffee", "coffeetime", "pizza", "pizzanight", "brunch"]),
];

const RESOURCES_PER_TOPIC: usize = 30;

/// `n` events drawn from the built-in topic vocabularies.
pub fn synthetic_events(n: usize, seed: u64) -> Vec<TagEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topic_pick = WeightedIndex::new(TOPICS.iter().enumerate().map(|(i, _)| 1.0 / (i as f64 + 1.0))).expect("positive weights");
    let label_picks: Vec<WeightedIndex<f64>> = TOPICS
        .iter()
        .map(|(_, words)| WeightedIndex::new((0..words.len()).map(|r| 1.0 / (r as f64 + 1.0))).expect("positive weights"))
        .collect();
    let resource_pick =
        WeightedIndex::new((0..RESOURCES_PER_TOPIC).map(|r| 1.0 / (r as f64 + 1.0))).expect("positive weights");
    let propensity: Vec<Vec<f64>> =
        TOPICS.iter().map(|(_, words)| words.iter().map(|_| rng.random_range(0.02..0.6)).collect()).collect();

    let mut ts = 1_700_000_000i64;
    (0..n)
        .map(|_| {
            let t = topic_pick.sample(&mut rng);
            let (topic, words) = TOPICS[t];
            let w = label_picks[t].sample(&mut rng);
            let label = match rng.random_range(0..4) {
                0 => format!("#{}", words[w]),
                1 => words[w].to_uppercase(),
                _ => words[w].to_string(),
            };
            let resource = resource_pick.sample(&mut rng);
            let uri = format!("https://example.org/{topic}/{resource}");
            let clicked = rng.random_bool(propensity[t][w]);
            ts += rng.random_range(1..120);
            TagEvent::new(&label, &uri, topic, &format!("{topic} post {resource}"), clicked, ts)
                .expect("generated events are valid")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::aggregate;

    #[test]
    fn deterministic_for_seed() {
        assert_eq!(synthetic_events(200, 3), synthetic_events(200, 3));
        assert_ne!(synthetic_events(200, 3), synthetic_events(200, 4));
    }

    #[test]
    fn aggregates_into_many_tags() {
        let events = synthetic_events(1000, 7);
        let tags = aggregate(&events, 1.0);
        assert!(tags.len() > 50, "{}", tags.len());
        let ctrs: Vec<f64> = tags.iter().map(|t| t.exposition().ctr()).collect();
        assert!(ctrs.iter().any(|&c| c > 0.3) && ctrs.iter().any(|&c| c < 0.1));
    }
}
