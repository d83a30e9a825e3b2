//! Thread-timing descriptives of a corpus.

use crate::corpus::{AuthorRole, Corpus, DAY_MS, MINUTE_MS};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalDescriptives {
    /// Median minutes to the first non-poster response over answered posts;
    /// `None` when no post is answered.
    pub median_first_response_min: Option<f64>,
    /// Mean over all posts of last-response time minus post time.
    pub mean_lifespan_days: f64,
    /// Fraction of posts without any non-poster response.
    pub no_response_fraction: f64,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 { values[mid] } else { (values[mid - 1] + values[mid]) / 2.0 })
}

pub fn interval_descriptives(corpus: &Corpus) -> IntervalDescriptives {
    let mut firsts = Vec::new();
    let mut lifespan_sum = 0.0;
    let mut unanswered = 0usize;
    for p in corpus.posts() {
        let thread: Vec<_> = corpus.thread(&p.id).collect();
        match thread.iter().find(|r| r.author_role != AuthorRole::Poster) {
            Some(r) => firsts.push((r.created_at - p.created_at) as f64 / MINUTE_MS as f64),
            None => unanswered += 1,
        }
        if let Some(last) = thread.iter().map(|r| r.created_at).max() {
            lifespan_sum += (last - p.created_at) as f64 / DAY_MS as f64;
        }
    }
    let n = corpus.posts().len().max(1) as f64;
    IntervalDescriptives {
        median_first_response_min: median(&mut firsts),
        mean_lifespan_days: lifespan_sum / n,
        no_response_fraction: if corpus.posts().is_empty() { 0.0 } else { unanswered as f64 / n },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Post, ResponseMsg};

    fn post(id: &str) -> Post {
        Post {
            id: id.into(),
            author_id: "u".into(),
            text: "t".into(),
            created_at: 1,
            has_image: false,
            forum_id: String::new(),
            category: None,
            valence: None,
        }
    }

    fn reply(id: &str, minutes: i64) -> ResponseMsg {
        ResponseMsg {
            id: id.into(),
            post_id: "p".into(),
            author_id: "m".into(),
            author_role: AuthorRole::Human,
            text: "hi".into(),
            created_at: 1 + minutes * MINUTE_MS,
            valence: None,
        }
    }

    #[test]
    fn one_thread() {
        let c = Corpus::new(vec![post("p")], vec![reply("b", 30), reply("a", 4)]);
        let d = interval_descriptives(&c);
        assert_eq!(d.median_first_response_min, Some(4.0));
        assert!((d.mean_lifespan_days * 24.0 * 60.0 - 30.0).abs() < 1e-9);
        assert_eq!(d.no_response_fraction, 0.0);
    }

    #[test]
    fn no_responses() {
        let c = Corpus::new(vec![post("p"), post("q")], vec![]);
        let d = interval_descriptives(&c);
        assert_eq!(d.no_response_fraction, 1.0);
        assert_eq!(d.mean_lifespan_days, 0.0);
        assert_eq!(d.median_first_response_min, None);
    }

    #[test]
    fn even_median() {
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), Some(2.5));
    }
}
