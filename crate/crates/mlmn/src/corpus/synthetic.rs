//! Synthetic corpus with oracle labels, standing in for the annotated
//! judgment corpus in offline runs.
//!
//! Every article owns a disjoint premise keyword set and a conclusion
//! clause. A (fact, article) pair is positive iff the fact contains the
//! article's full keyword set. Each article carries a severity class
//! (its index modulo 5) and the decision class of a case is the highest
//! severity among its triggered articles. Cases are constructed so the
//! five classes are balanced.
//!
//! Some cases spread the keyword set of an uncited article across two
//! separate distractor facts. The whole paragraph then contains the
//! full set while no single fact does, so paragraph-level matching is
//! ambiguous where fact-level matching is not, as in real judgments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{ArticleRecord, CaseRecord, DefaultTokenizer, Tokenizer};
use super::CorpusError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_cases: usize,
    pub n_articles: usize,
    pub keywords_per_article: usize,
    /// Total keyword tokens available for the disjoint per-article sets.
    pub keyword_pool: usize,
    pub distractor_pool: usize,
    /// Chance that a case scatters an uncited article's keywords over
    /// two distractor facts.
    pub split_keyword_prob: f64,
}

impl SyntheticConfig {
    pub fn new(seed: u64, n_cases: usize, n_articles: usize, keywords_per_article: usize) -> Self {
        Self {
            seed,
            n_cases,
            n_articles,
            keywords_per_article,
            keyword_pool: n_articles * keywords_per_article,
            distractor_pool: 30,
            split_keyword_prob: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct LabeledClause {
    pub text: String,
    pub label: String,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub cases: Vec<CaseRecord>,
    pub articles: Vec<ArticleRecord>,
    pub article_keywords: Vec<Vec<String>>,
    pub premise_lexicon: Vec<String>,
    pub conclusion_lexicon: Vec<String>,
    pub labeled_clauses: Vec<LabeledClause>,
}

const PREMISE_MARKERS: &[&str] = &["whoever", "where", "violating"];
const CONCLUSION_MARKERS: &[&str] = &["shall", "sentenced", "penalty", "fined"];

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticCorpus, CorpusError> {
    if config.n_articles < 2 {
        return Err(CorpusError::Invalid(
            "synthetic corpus needs at least 2 articles".into(),
        ));
    }
    let needed = config.n_articles * config.keywords_per_article;
    if config.keyword_pool < needed {
        return Err(CorpusError::Invalid(format!(
            "keyword pool {} too small for {} disjoint keywords",
            config.keyword_pool, needed
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let keywords: Vec<String> = (0..config.keyword_pool).map(|i| format!("kw{i:03}")).collect();
    let distractors: Vec<String> = (0..config.distractor_pool).map(|i| format!("d{i:02}")).collect();

    // disjoint keyword sets per article
    let mut shuffled = keywords.clone();
    shuffled.shuffle(&mut rng);
    let mut articles = Vec::with_capacity(config.n_articles);
    let mut article_keywords = Vec::with_capacity(config.n_articles);
    let mut labeled_clauses = Vec::new();
    for a in 0..config.n_articles {
        let kws: Vec<String> = shuffled
            [a * config.keywords_per_article..(a + 1) * config.keywords_per_article]
            .to_vec();
        let marker = PREMISE_MARKERS[a % PREMISE_MARKERS.len()];
        let premise = format!("{marker} {} in public", kws.join(" "));
        let conclusion = format!("shall be sentenced to penalty term{a} and fined");
        let text = format!("{premise} ， {conclusion} 。");
        labeled_clauses.push(LabeledClause {
            text: premise.clone(),
            label: "premise".into(),
        });
        labeled_clauses.push(LabeledClause {
            text: conclusion.clone(),
            label: "conclusion".into(),
        });
        articles.push(ArticleRecord {
            article_id: format!("art{a:03}"),
            law: "synthetic law".into(),
            text,
        });
        article_keywords.push(kws);
    }

    let tokenizer = DefaultTokenizer;
    let n_severities = config.n_articles.min(5);
    let severity = |a: usize| a % n_severities;
    let mut cases = Vec::with_capacity(config.n_cases);
    for case_idx in 0..config.n_cases {
        // one article at the case's target severity, plus extras of
        // strictly lower severity, so the class is the highest severity
        // present and the five classes come out balanced
        let target = case_idx % n_severities;
        let at_target: Vec<usize> = (0..config.n_articles)
            .filter(|&a| severity(a) == target)
            .collect();
        let mut lower: Vec<usize> = (0..config.n_articles)
            .filter(|&a| severity(a) < target)
            .collect();
        lower.shuffle(&mut rng);
        let n_extra = rng.gen_range(0..=lower.len().min(4));
        let mut gold = vec![*at_target.choose(&mut rng).expect("non-empty severity group")];
        gold.extend(lower.into_iter().take(n_extra));

        // one fact per gold article, occasionally merging two articles
        // into one fact, plus an optional distractor-only fact
        let mut fact_articles: Vec<Vec<usize>> = Vec::new();
        let mut queue = gold.clone();
        while let Some(a) = queue.pop() {
            if !queue.is_empty() && rng.gen_bool(0.25) {
                let b = queue.pop().unwrap();
                fact_articles.push(vec![a, b]);
            } else {
                fact_articles.push(vec![a]);
            }
        }
        if rng.gen_bool(0.3) {
            fact_articles.push(vec![]);
        }

        let mut fact_keywords: Vec<Vec<String>> = fact_articles
            .iter()
            .map(|arts| {
                arts.iter()
                    .flat_map(|&a| article_keywords[a].iter().cloned())
                    .collect()
            })
            .collect();
        // scatter an uncited article's keywords over two facts; the
        // paragraph then contains the full set but no single fact does
        if config.keywords_per_article >= 2 && rng.gen_bool(config.split_keyword_prob) {
            let uncited: Vec<usize> =
                (0..config.n_articles).filter(|a| !gold.contains(a)).collect();
            if let Some(&x) = uncited.choose(&mut rng) {
                let kws = &article_keywords[x];
                let mid = kws.len() / 2;
                fact_keywords.push(kws[..mid].to_vec());
                fact_keywords.push(kws[mid..].to_vec());
            }
        }
        fact_keywords.shuffle(&mut rng);

        let mut facts = Vec::new();
        for kws in &fact_keywords {
            let mut words: Vec<String> = vec!["the".into(), "defendant".into()];
            words.extend(kws.iter().cloned());
            let n_extra = rng.gen_range(2..=5);
            for _ in 0..n_extra {
                words.push(distractors.choose(&mut rng).unwrap().clone());
            }
            facts.push(words.join(" "));
        }

        // oracle labels: recompute by scanning, not by construction
        let mut pairs = Vec::new();
        let mut triggered: std::collections::BTreeSet<usize> = std::collections::BTreeSet::new();
        for (fi, fact) in facts.iter().enumerate() {
            let tokens: std::collections::BTreeSet<String> =
                tokenizer.tokenize(fact).into_iter().collect();
            for (a, kws) in article_keywords.iter().enumerate() {
                if kws.iter().all(|k| tokens.contains(k)) {
                    pairs.push((fi, format!("art{a:03}")));
                    triggered.insert(a);
                }
            }
        }
        let decision = triggered.iter().map(|&a| severity(a)).max().unwrap_or(0) as u8;
        let articles_cited: Vec<String> =
            triggered.iter().map(|&a| format!("art{a:03}")).collect();
        cases.push(CaseRecord {
            case_id: format!("case{case_idx:04}"),
            facts,
            articles: articles_cited,
            pairs,
            decision,
        });
    }

    Ok(SyntheticCorpus {
        cases,
        articles,
        article_keywords,
        premise_lexicon: PREMISE_MARKERS.iter().map(|s| s.to_string()).collect(),
        conclusion_lexicon: CONCLUSION_MARKERS.iter().map(|s| s.to_string()).collect(),
        labeled_clauses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_rule_holds() {
        let corpus = generate_synthetic(&SyntheticConfig::new(7, 50, 8, 3)).unwrap();
        let tokenizer = DefaultTokenizer;
        for case in &corpus.cases {
            for (fi, fact) in case.facts.iter().enumerate() {
                let tokens: std::collections::BTreeSet<String> =
                    tokenizer.tokenize(fact).into_iter().collect();
                for (a, kws) in corpus.article_keywords.iter().enumerate() {
                    let id = format!("art{a:03}");
                    let expected = kws.iter().all(|k| tokens.contains(k));
                    let stored = case.pairs.contains(&(fi, id.clone()));
                    assert_eq!(expected, stored, "case {} fact {fi} article {id}", case.case_id);
                }
            }
        }
    }

    #[test]
    fn same_seed_identical() {
        let a = generate_synthetic(&SyntheticConfig::new(3, 20, 5, 2)).unwrap();
        let b = generate_synthetic(&SyntheticConfig::new(3, 20, 5, 2)).unwrap();
        assert_eq!(a.cases, b.cases);
        assert_eq!(a.articles, b.articles);
    }

    #[test]
    fn two_keyword_sets_two_positives() {
        let corpus = generate_synthetic(&SyntheticConfig::new(1, 200, 2, 2)).unwrap();
        // with 2 articles, cases with class 1 trigger both
        let multi = corpus
            .cases
            .iter()
            .find(|c| c.articles.len() == 2)
            .expect("some case triggers both articles");
        assert_eq!(multi.decision, 1);
    }

    #[test]
    fn pool_too_small_rejected() {
        let mut config = SyntheticConfig::new(0, 5, 4, 3);
        config.keyword_pool = 10;
        assert!(generate_synthetic(&config).is_err());
    }

    #[test]
    fn decision_is_max_triggered_severity() {
        let corpus = generate_synthetic(&SyntheticConfig::new(11, 100, 10, 2)).unwrap();
        let mut support = [0usize; 5];
        for case in &corpus.cases {
            let distinct: std::collections::BTreeSet<&String> =
                case.pairs.iter().map(|(_, a)| a).collect();
            assert_eq!(distinct.len(), case.articles.len());
            let max_severity = case
                .articles
                .iter()
                .map(|id| id[3..].parse::<usize>().unwrap() % 5)
                .max()
                .unwrap();
            assert_eq!(case.decision as usize, max_severity);
            support[case.decision as usize] += 1;
        }
        assert_eq!(support, [20; 5]);
    }
}
