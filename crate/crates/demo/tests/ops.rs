use supportbot_demo::ops::{self, ExperimentParams};

const PAIRS: &str = "baby sleep\tre baby sleep\nbaby cry cry\tre baby cry cry\n\ndoctor visit\tre doctor visit\n";

#[test]
fn pairs_parse_with_line_numbers_in_errors() {
    assert_eq!(ops::parse_pairs(PAIRS).unwrap().len(), 3);
    assert_eq!(ops::parse_pairs("a\tb\nno tab here\n").unwrap_err(), "line 2: expected post<TAB>reply");
    assert!(ops::parse_pairs("a\t \n").is_err());
}

#[test]
fn retrieval_ranks_by_score() {
    let v = ops::retrieve(PAIRS, "baby cry").unwrap();
    assert_eq!(v["doc"], 1);
    assert_eq!(v["response"], "re baby cry cry");
    assert_eq!(v["zero_score"], false);
    let ranked = v["ranked"].as_array().unwrap();
    assert_eq!(ranked.len(), 3);
    assert_eq!(ranked[0]["doc"], 1);
    assert_eq!(ranked[0]["score"], v["score"]);
    let scores: Vec<f64> = ranked.iter().map(|r| r["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(scores[2], 0.0);

    let miss = ops::retrieve(PAIRS, "zebra").unwrap();
    assert_eq!(miss["zero_score"], true);
    assert!(ops::retrieve("", "baby").is_err());
}

#[test]
fn chi2_matches_integer_arithmetic() {
    let v = ops::chi2(595, 1122, 433, 1295, false).unwrap();
    let (a, b, c, d) = (595i128, 1122i128, 433i128, 1295i128);
    let expected = ((a + b + c + d) * (a * d - b * c).pow(2)) as f64 / ((a + b) * (c + d) * (a + c) * (b + d)) as f64;
    assert!((v["statistic"].as_f64().unwrap() - expected).abs() < 1e-9);
    assert_eq!(v["df"], 1.0);
    assert!((v["row_rates"][0].as_f64().unwrap() - 595.0 / 1717.0).abs() < 1e-15);
    assert!(ops::chi2(0, 0, 1, 1, false).is_err());
}

#[test]
fn t_summary_matches_hand_values() {
    // pooled sd 1, standard error sqrt(1/2 + 1/2) = 1
    let v = ops::t_summary([1.0, 1.0], 2, [0.0, 1.0], 2, false).unwrap();
    assert!((v["statistic"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(v["df"], 2.0);
    // Student t with 2 df: P(|T| > t) = 1 - t / sqrt(t^2 + 2)
    assert!((v["p"].as_f64().unwrap() - (1.0 - 1.0 / 3f64.sqrt())).abs() < 1e-9);
    assert!(ops::t_summary([1.0, 1.0], 1, [0.0, 1.0], 2, false).is_err());
}

#[test]
fn sample_pairs_round_trip() {
    let tsv = ops::sample_pairs(7, 20).unwrap();
    let pairs = ops::parse_pairs(&tsv).unwrap();
    assert_eq!(pairs.len(), 20);
    assert!(tsv.lines().all(|l| l.matches('\t').count() == 1));
}

#[test]
fn experiment_is_deterministic_and_bounded() {
    let p = ExperimentParams { seed: 2, days: 0.25, arm_probability: 0.5, followup_boost: 1.0 };
    let a = ops::experiment(&p).unwrap();
    assert_eq!(a, ops::experiment(&p).unwrap());
    let enrolled = a["enrolled"].as_u64().unwrap();
    assert!(a["posts_seen"].as_u64().unwrap() >= enrolled && enrolled > 0);
    assert!(a["published"].as_u64().unwrap() <= enrolled);
    let arms = a["report"]["experiment"]["post_count"].as_u64().unwrap() + a["report"]["control"]["post_count"].as_u64().unwrap();
    assert_eq!(arms, enrolled);

    assert!(ops::experiment(&ExperimentParams { days: 4.0, ..p }).is_err());
    assert!(ops::experiment(&ExperimentParams { arm_probability: 1.5, ..p }).is_err());
}
