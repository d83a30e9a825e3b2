//! Exact-arithmetic oracles for the closed-form statistics. Each `check_*`
//! recomputes its fixtures with arbitrary-precision rationals and returns
//! the number of fixtures that agree to 1e-9, or the first disagreement.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use std::collections::HashMap;
use supportbot_core::corpus::PairExample;
use supportbot_core::evaluation::*;
use supportbot_core::generator::{build_bm25_index, DEFAULT_B, DEFAULT_K1};
use supportbot_core::text::Tokenizer;

pub type Q = BigRational;

pub fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn frac(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// Decimal literal as an exact rational, e.g. "1.78".
pub fn dec(s: &str) -> Q {
    let (neg, s) = s.strip_prefix('-').map_or((false, s), |r| (true, r));
    let (int, frac_part) = s.split_once('.').unwrap_or((s, ""));
    let digits: i64 = format!("{int}{frac_part}").parse().unwrap();
    let v = Q::new(BigInt::from(digits), BigInt::from(10i64.pow(frac_part.len() as u32)));
    if neg {
        -v
    } else {
        v
    }
}

pub fn f(x: &Q) -> f64 {
    x.to_f64().unwrap()
}

pub fn close(what: &str, actual: f64, exact: f64) -> Result<(), String> {
    if (actual - exact).abs() <= 1e-9 * exact.abs().max(1.0) {
        Ok(())
    } else {
        Err(format!("{what}: {actual} vs oracle {exact}"))
    }
}

pub fn chi2_oracle(a: i64, b: i64, c: i64, d: i64) -> Q {
    let n = q(a + b + c + d);
    let diff = q(a * d - b * c);
    n * &diff * &diff / (q(a + b) * q(c + d) * q(a + c) * q(b + d))
}

pub const CHI2_FIXTURES: [(i64, i64, i64, i64); 4] = [(10, 20, 30, 60), (20, 30, 30, 20), (595, 1122, 433, 1295), (3, 9, 11, 2)];

pub fn check_chi2() -> Result<usize, String> {
    for (a, b, c, d) in CHI2_FIXTURES {
        let got = chi2_2x2(a as u64, b as u64, c as u64, d as u64, false).map_err(|e| e.to_string())?;
        close(&format!("chi2 {a},{b},{c},{d}"), got.statistic, f(&chi2_oracle(a, b, c, d)))?;
        if got.df != 1.0 {
            return Err(format!("chi2 df {}", got.df));
        }
    }
    Ok(CHI2_FIXTURES.len())
}

/// Pooled t squared from rational samples.
fn pooled_t2(x: &[Q], y: &[Q]) -> Q {
    let mean = |v: &[Q]| v.iter().fold(Q::zero(), |s, e| s + e) / q(v.len() as i64);
    let ss = |v: &[Q], m: &Q| v.iter().fold(Q::zero(), |s, e| s + (e - m) * (e - m));
    let (mx, my) = (mean(x), mean(y));
    let (nx, ny) = (q(x.len() as i64), q(y.len() as i64));
    let sp2 = (ss(x, &mx) + ss(y, &my)) / (&nx + &ny - q(2));
    let d = mx - my;
    &d * &d / (sp2 * (Q::one() / nx + Q::one() / ny))
}

pub fn check_t_test() -> Result<usize, String> {
    let fixtures: [(&[i64], &[i64]); 3] =
        [(&[1, 2, 3], &[2, 3, 4]), (&[5, 7, 7, 9, 12], &[1, 4, 4, 6]), (&[10, 11, 13, 13, 15, 20], &[9, 9, 10, 12, 14, 14, 18])];
    for (x, y) in fixtures {
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        let xq: Vec<Q> = x.iter().map(|&v| q(v)).collect();
        let yq: Vec<Q> = y.iter().map(|&v| q(v)).collect();
        let got = t_test_ind(&xf, &yf, TVariant::Pooled).map_err(|e| e.to_string())?;
        close(&format!("t {x:?} {y:?}"), got.statistic * got.statistic, f(&pooled_t2(&xq, &yq)))?;
        if got.df != (x.len() + y.len() - 2) as f64 {
            return Err(format!("t df {}", got.df));
        }
    }
    Ok(fixtures.len())
}

/// Pooled t squared from decimal summaries.
pub fn summary_t2(m1: &str, s1: &str, n1: i64, m2: &str, s2: &str, n2: i64) -> Q {
    let (s1, s2) = (dec(s1), dec(s2));
    let sp2 = (q(n1 - 1) * &s1 * &s1 + q(n2 - 1) * &s2 * &s2) / q(n1 + n2 - 2);
    let d = dec(m1) - dec(m2);
    &d * &d / (sp2 * (frac(1, n1) + frac(1, n2)))
}

pub fn check_t_from_summary() -> Result<usize, String> {
    let fixtures =
        [("1.78", "5.1", 1728, "1.36", "4.9", 1717), ("15.1", "16.5", 1728, "15.76", "16.4", 1717), ("3.25", "0.5", 10, "2", "1.25", 12)];
    for (m1, s1, n1, m2, s2, n2) in fixtures {
        let got = t_from_summary(
            Summary { mean: m1.parse().unwrap(), sd: s1.parse().unwrap(), n: n1 as u64 },
            Summary { mean: m2.parse().unwrap(), sd: s2.parse().unwrap(), n: n2 as u64 },
            TVariant::Pooled,
        )
        .map_err(|e| e.to_string())?;
        close(&format!("t summary {m1}"), got.statistic * got.statistic, f(&summary_t2(m1, s1, n1, m2, s2, n2)))?;
    }
    Ok(fixtures.len())
}

fn kappa_oracle(a: &[u8], b: &[u8]) -> Q {
    let n = q(a.len() as i64);
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as i64;
    let p_o = q(agree) / &n;
    let mut p_e = Q::zero();
    for cat in 0u8..=255 {
        let ca = a.iter().filter(|&&x| x == cat).count() as i64;
        let cb = b.iter().filter(|&&x| x == cat).count() as i64;
        p_e += q(ca * cb) / (&n * &n);
    }
    (p_o - &p_e) / (Q::one() - p_e)
}

pub fn check_kappa() -> Result<usize, String> {
    let fixtures: [(&[u8], &[u8]); 3] = [
        (&[0, 0, 1, 1], &[0, 1, 0, 1]),
        (&[0, 1, 2, 0, 1, 2, 2, 1], &[0, 1, 2, 1, 1, 2, 0, 1]),
        (&[1, 1, 1, 0, 0, 1, 1, 0, 1, 1], &[1, 1, 0, 0, 0, 1, 1, 1, 1, 1]),
    ];
    for (a, b) in fixtures {
        close(&format!("kappa {a:?}"), cohen_kappa(a, b).map_err(|e| e.to_string())?, f(&kappa_oracle(a, b)))?;
    }
    Ok(fixtures.len())
}

/// ICC(3,1) from a spreadsheet-style ANOVA table in exact arithmetic.
fn icc_oracle(m: &[Vec<i64>]) -> Q {
    let k = m.len() as i64;
    let n = m[0].len() as i64;
    let total: i64 = m.iter().flatten().sum();
    let correction = frac(total * total, k * n);
    let ss_total = q(m.iter().flatten().map(|x| x * x).sum()) - &correction;
    let ss_rows: Q = (0..n as usize)
        .map(|j| {
            let s: i64 = m.iter().map(|r| r[j]).sum();
            frac(s * s, k)
        })
        .fold(Q::zero(), |a, b| a + b)
        - &correction;
    let ss_cols: Q = m
        .iter()
        .map(|r| {
            let s: i64 = r.iter().sum();
            frac(s * s, n)
        })
        .fold(Q::zero(), |a, b| a + b)
        - &correction;
    let ss_err = &ss_total - &ss_rows - &ss_cols;
    let bms = ss_rows / q(n - 1);
    let ems = ss_err / q((n - 1) * (k - 1));
    (&bms - &ems) / (&bms + q(k - 1) * &ems)
}

pub fn check_icc() -> Result<usize, String> {
    let fixtures: Vec<Vec<Vec<i64>>> = vec![
        vec![vec![2, 1, -1, 0], vec![2, 0, -2, 0], vec![1, 1, -1, 1]],
        vec![vec![-2, -1, 0, 1, 2], vec![-1, -1, 1, 1, 2]],
        vec![vec![0, 1, 2], vec![1, 1, 2], vec![0, 2, 2], vec![-1, 0, 1]],
    ];
    for m in &fixtures {
        let rm = RatingMatrix::new(Dimension::EmotionalSupport, m.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect())
            .map_err(|e| e.to_string())?;
        close(&format!("icc {m:?}"), icc_3_1(&rm).map_err(|e| e.to_string())?, f(&icc_oracle(m)))?;
    }
    Ok(fixtures.len())
}

/// Product of clipped precisions counted by brute force over every
/// candidate position.
fn precision_product(cand: &[&str], refs: &[Vec<&str>], max_n: usize) -> Q {
    let mut prod = Q::one();
    for n in 1..=max_n {
        let grams: Vec<&[&str]> = cand.windows(n).collect();
        let mut seen: HashMap<&[&str], ()> = HashMap::new();
        let mut matched = 0i64;
        for g in &grams {
            if seen.insert(g, ()).is_some() {
                continue;
            }
            let in_cand = grams.iter().filter(|h| h == &g).count() as i64;
            let best_ref = refs.iter().map(|r| r.windows(n).filter(|h| h == g).count() as i64).max().unwrap();
            matched += in_cand.min(best_ref);
        }
        prod *= frac(matched, grams.len() as i64);
    }
    prod
}

pub fn check_bleu() -> Result<usize, String> {
    let split = |s: &'static str| s.split(' ').collect::<Vec<&str>>();
    let fixtures = [
        ("the the the the the", vec!["the cat sat"], 1),
        ("you are not alone in this hard time", vec!["you are not alone in this", "we are with you"], 4),
        ("hugs to you and the baby dear", vec!["hugs to you and your baby", "sending hugs to you and the baby"], 2),
    ];
    for (c, refs, max_n) in &fixtures {
        let cand = split(c);
        let refs: Vec<Vec<&str>> = refs.iter().map(|r| split(r)).collect();
        // every fixture candidate is longer than its closest reference: BP = 1
        let got = bleu(&cand, &refs, *max_n, Smoothing::None).map_err(|e| e.to_string())?;
        close(&format!("bleu {c:?}"), got.powi(*max_n as i32), f(&precision_product(&cand, &refs, *max_n)))?;
    }
    // 3-token candidate vs 6-token reference, max_n = 1: p1 = 1, BP = e^(1 - 2)
    let got = bleu(&["a", "b", "c"], &[vec!["a", "b", "c", "d", "e", "f"]], 1, Smoothing::None).map_err(|e| e.to_string())?;
    close("bleu brevity", got.ln(), -1.0)?;
    Ok(fixtures.len() + 1)
}

/// Okapi BM25 for the hand corpus, written out term by term.
pub fn check_bm25() -> Result<usize, String> {
    let docs = ["baby sleep", "baby cry cry", "doctor visit"];
    let pairs: Vec<PairExample> = docs.iter().map(|d| PairExample { post_text: d.to_string(), response_text: format!("re {d}") }).collect();
    let index = build_bm25_index(&pairs, Tokenizer::default(), DEFAULT_K1, DEFAULT_B).map_err(|e| e.to_string())?;
    let (k1, b) = (1.2f64, 0.75f64);
    let n = 3.0f64;
    let avgdl = (2.0 + 3.0 + 2.0) / 3.0;
    let idf = |df: f64| ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
    let term = |tf: f64, dl: f64, df: f64| idf(df) * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
    // query "baby cry": baby has df 2, cry has df 1
    let expected = [term(1.0, 2.0, 2.0), term(1.0, 3.0, 2.0) + term(2.0, 3.0, 1.0), 0.0];
    let got = index.scores(&["baby".to_string(), "cry".to_string()]);
    for (i, (g, e)) in got.iter().zip(expected).enumerate() {
        close(&format!("bm25 doc {i}"), *g, e)?;
    }
    let r = index.retrieve("baby cry").map_err(|e| e.to_string())?;
    if r.doc != 1 || r.response != "re baby cry cry" {
        return Err(format!("retrieved doc {}", r.doc));
    }
    Ok(expected.len())
}
