//! One handler per subcommand plus the shared loading helpers.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    encode_and_pad, generate_synthetic, read_jsonl, split_dataset, train_cbow, write_jsonl,
    ArticleRecord, Case, CaseRecord, CbowConfig, DefaultTokenizer, EmbeddingTable, SyntheticConfig,
    Tokenizer, Vocabulary, UNK_ID,
};
use crate::decision::{
    coarse_examples, evaluate_examples, gold_fine_examples, predicted_fine_examples,
    train_decision, write_decision_csv, DecisionConfig, DecisionExample, DecisionParams,
    DecisionTrainConfig,
};
use crate::model::{match_score, recommend, Checkpoint, ModelConfig, ModelParams};
use crate::parser::{
    featurize_labeled, train_forest, ArticleParser, Lexicon, ParsedArticle, ParsedArticleRecord,
    RandomForest,
};
use crate::training::{
    evaluate_coarse, evaluate_fine, paragraph_sequence, train_matcher, write_epoch_log,
    write_metrics_csv, ArticleStore, CoarseMode, TrainConfig,
};

use super::manifest::{unix_now, RunManifest};
use super::{ArticleSource, CliError, Command, DecisionMode, EvalMode, FileConfig};

const SPLIT_FRACTIONS: (f64, f64, f64) = (0.8, 0.1, 0.1);

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if p.as_os_str().is_empty() => PathBuf::from("."),
        Some(p) => p.to_path_buf(),
        None => PathBuf::from("."),
    }
}

fn load_vocab(path: &Path) -> Result<Vocabulary, CliError> {
    Vocabulary::load(path)
        .map_err(|e| CliError::input(format!("cannot load vocabulary {}: {e}", path.display())))
}

/// Encodes parsed articles into the candidate store.
fn build_store(
    parsed_path: &Path,
    vocab: &Vocabulary,
    article_length: usize,
) -> Result<ArticleStore, CliError> {
    let records: Vec<ParsedArticleRecord> = read_jsonl(parsed_path)?;
    if records.is_empty() {
        return Err(CliError::input(format!(
            "no parsed articles in {}",
            parsed_path.display()
        )));
    }
    let mut store = ArticleStore::new();
    for record in &records {
        let article = ParsedArticle::from_record(record, &DefaultTokenizer);
        let (seq, q) = article.encode(vocab, article_length)?;
        store.insert(article.article_id, seq, q);
    }
    Ok(store)
}

fn load_cases(
    path: &Path,
    vocab: &Vocabulary,
    fact_length: usize,
    known_articles: &BTreeSet<String>,
) -> Result<Vec<Case>, CliError> {
    let records: Vec<CaseRecord> = read_jsonl(path)?;
    let mut cases = Vec::with_capacity(records.len());
    for record in &records {
        cases.push(Case::from_record(
            record,
            vocab,
            &DefaultTokenizer,
            fact_length,
            known_articles,
        )?);
    }
    if cases.is_empty() {
        return Err(CliError::input(format!("no cases in {}", path.display())));
    }
    Ok(cases)
}

/// Collapses each case to one paragraph fact carrying the case-level
/// gold set, for whole-paragraph matcher training.
fn coarsen(cases: &[Case], fact_length: usize) -> Vec<Case> {
    cases
        .iter()
        .map(|case| Case {
            case_id: case.case_id.clone(),
            facts: vec![paragraph_sequence(case, fact_length)],
            fact_texts: vec![case.fact_texts.join(" ")],
            cited_articles: case.cited_articles.clone(),
            fact_article_pairs: case
                .cited_articles
                .iter()
                .map(|a| (0usize, a.clone()))
                .collect(),
            decision_class: case.decision_class,
        })
        .collect()
}

/// Reads the embedding width from the first TSV line so configs need
/// not repeat it.
fn tsv_dim(path: &Path) -> Result<usize, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let mut line = String::new();
    std::io::BufRead::read_line(&mut std::io::BufReader::new(file), &mut line)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let dim = line.trim_end().split('\t').count().saturating_sub(1);
    if dim == 0 {
        return Err(CliError::input(format!(
            "{} does not look like an embedding TSV",
            path.display()
        )));
    }
    Ok(dim)
}

fn load_embedding(
    path: Option<&PathBuf>,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable, CliError> {
    match path {
        Some(p) => Ok(EmbeddingTable::load(p, vocab, tsv_dim(p)?, seed)?),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(EmbeddingTable::random(vocab.len(), dim, &mut rng))
        }
    }
}

fn all_documents(cases: &[CaseRecord], articles: &[ArticleRecord]) -> Vec<Vec<String>> {
    let tok = DefaultTokenizer;
    let mut docs = Vec::new();
    for case in cases {
        for fact in &case.facts {
            docs.push(tok.tokenize(fact));
        }
    }
    for article in articles {
        docs.push(tok.tokenize(&article.text));
    }
    docs
}

pub fn dispatch(command: Command, fc: FileConfig, seed: u64) -> Result<(), CliError> {
    match command {
        Command::GenSynthetic {
            out_dir,
            cases,
            articles,
            keywords_per_article,
            keyword_pool,
            distractor_pool,
        } => gen_synthetic(
            &out_dir,
            seed,
            cases,
            articles,
            keywords_per_article,
            keyword_pool,
            distractor_pool,
        ),
        Command::ParseArticles {
            articles,
            lexicon,
            forest,
            train,
            save_forest,
            trees,
            max_depth,
            out,
            report,
        } => parse_articles(
            seed,
            &articles,
            &lexicon,
            forest.as_deref(),
            train.as_deref(),
            save_forest.as_deref(),
            trees,
            max_depth,
            &out,
            report.as_deref(),
        ),
        Command::BuildDataset {
            cases,
            articles,
            out_dir,
            min_count,
        } => build_dataset(seed, &cases, &articles, &out_dir, min_count),
        Command::TrainEmbeddings {
            cases,
            articles,
            vocab,
            out,
            dim,
            window,
            negatives,
            epochs,
        } => {
            let mut config = fc.cbow.clone().unwrap_or_default();
            config.seed = seed;
            if let Some(d) = dim {
                config.dim = d;
            }
            if let Some(w) = window {
                config.window = w;
            }
            if let Some(n) = negatives {
                config.negatives_per_target = n;
            }
            if let Some(e) = epochs {
                config.epochs = e;
            }
            train_embeddings(seed, &cases, &articles, &vocab, &out, &config)
        }
        Command::TrainMatcher {
            cases,
            parsed,
            vocab,
            embeddings,
            out_dir,
            neg_ratio,
            coarse,
            threshold,
            max_epochs,
            batch_size,
            patience,
            lr,
            fact_length,
            article_length,
        } => {
            let mut config = fc.model.clone().unwrap_or_default();
            if coarse {
                config.fact_length = 200;
            }
            if let Some(v) = fact_length {
                config.fact_length = v;
            }
            if let Some(v) = article_length {
                config.article_length = v;
            }
            if let Some(v) = threshold {
                config.threshold = v;
            }
            let mut tcfg = fc.train.clone().unwrap_or_default();
            tcfg.seed = seed;
            if let Some(v) = neg_ratio {
                tcfg.negative_ratio = v;
            }
            if let Some(v) = max_epochs {
                tcfg.max_epochs = v;
            }
            if let Some(v) = batch_size {
                tcfg.batch_size = v;
            }
            if let Some(v) = patience {
                tcfg.patience = v;
            }
            if let Some(v) = lr {
                tcfg.learning_rate = v;
            }
            run_train_matcher(
                seed,
                &cases,
                &parsed,
                &vocab,
                embeddings.as_deref(),
                &out_dir,
                coarse,
                &config,
                &tcfg,
            )
        }
        Command::Eval {
            checkpoint,
            cases,
            parsed,
            mode,
            out,
        } => eval(seed, &checkpoint, &cases, &parsed, mode, &out),
        Command::Recommend {
            checkpoint,
            fact,
            parsed,
            threshold,
            all,
        } => run_recommend(seed, &checkpoint, &fact, &parsed, threshold, all),
        Command::TrainDecision {
            cases,
            parsed,
            vocab,
            embeddings,
            out_dir,
            mode,
            source,
            checkpoint,
            max_epochs,
            batch_size,
            patience,
            lr,
        } => {
            let mut tcfg = fc.decision_train.clone().unwrap_or_default();
            tcfg.seed = seed;
            if let Some(v) = max_epochs {
                tcfg.max_epochs = v;
            }
            if let Some(v) = batch_size {
                tcfg.batch_size = v;
            }
            if let Some(v) = patience {
                tcfg.patience = v;
            }
            if let Some(v) = lr {
                tcfg.learning_rate = v;
            }
            run_train_decision(
                seed,
                &fc,
                &cases,
                &parsed,
                &vocab,
                embeddings.as_deref(),
                &out_dir,
                mode,
                source,
                checkpoint.as_deref(),
                &tcfg,
            )
        }
        Command::EvalDecision {
            model,
            cases,
            parsed,
            mode,
            source,
            checkpoint,
            out,
        } => eval_decision(
            seed,
            &model,
            &cases,
            &parsed,
            mode,
            source,
            checkpoint.as_deref(),
            &out,
        ),
    }
}

fn gen_synthetic(
    out_dir: &Path,
    seed: u64,
    n_cases: usize,
    n_articles: usize,
    keywords_per_article: usize,
    keyword_pool: Option<usize>,
    distractor_pool: usize,
) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    let started = unix_now();
    let mut config = SyntheticConfig::new(seed, n_cases, n_articles, keywords_per_article);
    if let Some(pool) = keyword_pool {
        config.keyword_pool = pool;
    }
    config.distractor_pool = distractor_pool;
    let corpus = generate_synthetic(&config)?;

    let cases_path = out_dir.join("cases.jsonl");
    let articles_path = out_dir.join("articles.jsonl");
    let clauses_path = out_dir.join("clauses.jsonl");
    let lexicon_path = out_dir.join("lexicon.txt");
    write_jsonl(&cases_path, &corpus.cases)?;
    write_jsonl(&articles_path, &corpus.articles)?;
    write_jsonl(&clauses_path, &corpus.labeled_clauses)?;
    Lexicon::from_lists(corpus.premise_lexicon, corpus.conclusion_lexicon).save(&lexicon_path)?;

    let mut manifest = RunManifest::new(
        "gen-synthetic",
        seed,
        serde_json::to_value(&config).unwrap_or_default(),
        started,
    );
    for p in [&cases_path, &articles_path, &clauses_path, &lexicon_path] {
        manifest.record_output(p);
    }
    manifest.write(out_dir)?;
    println!(
        "wrote {} cases and {} articles to {}",
        corpus.cases.len(),
        n_articles,
        out_dir.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn parse_articles(
    seed: u64,
    articles_path: &Path,
    lexicon_path: &Path,
    forest_path: Option<&Path>,
    train_path: Option<&Path>,
    save_forest: Option<&Path>,
    trees: usize,
    max_depth: usize,
    out: &Path,
    report: Option<&Path>,
) -> Result<(), CliError> {
    let started = unix_now();
    let lexicon = Lexicon::load(lexicon_path)?;
    let forest = match (forest_path, train_path) {
        (Some(p), None) => RandomForest::load(p)?,
        (None, Some(p)) => {
            let labeled = read_jsonl(p)?;
            let data = featurize_labeled(&labeled, &lexicon);
            train_forest(&data, trees, max_depth, seed)?
        }
        (None, None) => {
            return Err(CliError::input(
                "either --forest or --train must be given",
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap rejects --forest with --train"),
    };
    if let Some(p) = save_forest {
        ensure_dir(&parent_dir(p))?;
        forest.save(p)?;
    }
    ensure_dir(&parent_dir(out))?;

    let records: Vec<ArticleRecord> = read_jsonl(articles_path)?;
    let parser = ArticleParser::new(&forest, &lexicon);
    let mut parsed = Vec::with_capacity(records.len());
    let mut definition_only = Vec::new();
    for record in &records {
        let article = parser.parse(&record.article_id, &record.text, &DefaultTokenizer)?;
        if !article.has_conclusion() {
            definition_only.push(record.article_id.clone());
        }
        parsed.push(article.to_record());
    }
    write_jsonl(out, &parsed)?;

    let mut lines = vec![
        format!("articles: {}", records.len()),
        format!(
            "with conclusion clause: {}",
            records.len() - definition_only.len()
        ),
        format!("definition-only: {}", definition_only.len()),
    ];
    for id in &definition_only {
        lines.push(format!("definition-only article: {id}"));
    }
    let report_text = lines.join("\n") + "\n";
    match report {
        Some(p) => std::fs::write(p, &report_text)
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", p.display())))?,
        None => print!("{report_text}"),
    }

    let mut manifest = RunManifest::new(
        "parse-articles",
        seed,
        serde_json::json!({"trees": trees, "max_depth": max_depth}),
        started,
    );
    manifest.record_input(articles_path)?;
    manifest.record_input(lexicon_path)?;
    if let Some(p) = forest_path {
        manifest.record_input(p)?;
    }
    if let Some(p) = train_path {
        manifest.record_input(p)?;
    }
    manifest.record_output(out);
    manifest.write(&parent_dir(out))?;
    Ok(())
}

fn build_dataset(
    seed: u64,
    cases_path: &Path,
    articles_path: &Path,
    out_dir: &Path,
    min_count: u64,
) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    let started = unix_now();
    let cases: Vec<CaseRecord> = read_jsonl(cases_path)?;
    let articles: Vec<ArticleRecord> = read_jsonl(articles_path)?;
    let docs = all_documents(&cases, &articles);
    let vocab = Vocabulary::build(&docs, min_count)?;

    let vocab_path = out_dir.join("vocab.json");
    vocab.save(&vocab_path)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train, val, test) = split_dataset(&cases, SPLIT_FRACTIONS, &mut rng)?;
    let train_path = out_dir.join("train.jsonl");
    let val_path = out_dir.join("val.jsonl");
    let test_path = out_dir.join("test.jsonl");
    write_jsonl(&train_path, &train)?;
    write_jsonl(&val_path, &val)?;
    write_jsonl(&test_path, &test)?;

    let mut manifest = RunManifest::new(
        "build-dataset",
        seed,
        serde_json::json!({"min_count": min_count, "fractions": [0.8, 0.1, 0.1]}),
        started,
    );
    manifest.record_input(cases_path)?;
    manifest.record_input(articles_path)?;
    for p in [&vocab_path, &train_path, &val_path, &test_path] {
        manifest.record_output(p);
    }
    manifest.write(out_dir)?;
    println!(
        "vocabulary {} tokens; split {}/{}/{}",
        vocab.len(),
        train.len(),
        val.len(),
        test.len()
    );
    Ok(())
}

fn train_embeddings(
    seed: u64,
    cases_path: &Path,
    articles_path: &Path,
    vocab_path: &Path,
    out: &Path,
    config: &CbowConfig,
) -> Result<(), CliError> {
    let started = unix_now();
    let vocab = load_vocab(vocab_path)?;
    let cases: Vec<CaseRecord> = read_jsonl(cases_path)?;
    let articles: Vec<ArticleRecord> = read_jsonl(articles_path)?;
    let docs: Vec<Vec<u32>> = all_documents(&cases, &articles)
        .iter()
        .map(|doc| doc.iter().map(|t| vocab.id(t)).collect())
        .collect();
    let (table, losses) = train_cbow(&docs, &vocab, config)?;
    table.save(out, &vocab)?;

    let mut manifest = RunManifest::new(
        "train-embeddings",
        seed,
        serde_json::to_value(config).unwrap_or_default(),
        started,
    );
    manifest.record_input(cases_path)?;
    manifest.record_input(articles_path)?;
    manifest.record_input(vocab_path)?;
    manifest.record_output(out);
    manifest.write(&parent_dir(out))?;
    for (epoch, loss) in losses.iter().enumerate() {
        println!("epoch {} loss {loss}", epoch + 1);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_train_matcher(
    seed: u64,
    cases_path: &Path,
    parsed_path: &Path,
    vocab_path: &Path,
    embeddings_path: Option<&Path>,
    out_dir: &Path,
    coarse: bool,
    config: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    let started = unix_now();
    let mut config = config.clone();
    if let Some(p) = embeddings_path {
        config.embed_dim = tsv_dim(p)?;
    }
    let config = &config;
    config.validate()?;
    let vocab = load_vocab(vocab_path)?;
    let store = build_store(parsed_path, &vocab, config.article_length)?;
    let known: BTreeSet<String> = store.ids().into_iter().collect();
    let mut cases = load_cases(cases_path, &vocab, config.fact_length, &known)?;
    if coarse {
        cases = coarsen(&cases, config.fact_length);
    }

    let embedding = load_embedding(
        embeddings_path.map(Path::to_path_buf).as_ref(),
        &vocab,
        config.embed_dim,
        seed,
    )?;
    let params = ModelParams::init(config, embedding, seed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train, val, test) = split_dataset(&cases, SPLIT_FRACTIONS, &mut rng)?;
    let outcome = train_matcher(config, tcfg, params, &train, &val, &store)?;

    let test_metrics = evaluate_fine(config, &outcome.params, &test, &store)?;
    let ckpt_path = out_dir.join("model.ckpt");
    Checkpoint {
        config: config.clone(),
        vocab,
        params: outcome.params,
    }
    .save(&ckpt_path)?;
    let epochs_path = out_dir.join("epochs.csv");
    write_epoch_log(&epochs_path, &outcome.logs)?;
    let metrics_path = out_dir.join("metrics.csv");
    write_metrics_csv(
        &metrics_path,
        &[
            ("val".into(), outcome.best_val),
            ("test".into(), test_metrics),
        ],
    )?;

    let mut manifest = RunManifest::new(
        "train-matcher",
        seed,
        serde_json::json!({"model": config, "train": tcfg, "coarse": coarse}),
        started,
    );
    manifest.record_input(cases_path)?;
    manifest.record_input(parsed_path)?;
    manifest.record_input(vocab_path)?;
    if let Some(p) = embeddings_path {
        manifest.record_input(p)?;
    }
    for p in [&ckpt_path, &epochs_path, &metrics_path] {
        manifest.record_output(p);
    }
    manifest.write(out_dir)?;
    println!(
        "best epoch {} val F1 {} test F1 {}",
        outcome.best_epoch, outcome.best_val.f1, test_metrics.f1
    );
    Ok(())
}

fn eval(
    seed: u64,
    ckpt_path: &Path,
    cases_path: &Path,
    parsed_path: &Path,
    mode: EvalMode,
    out: &Path,
) -> Result<(), CliError> {
    let started = unix_now();
    let ckpt = Checkpoint::load(ckpt_path)?;
    let store = build_store(parsed_path, &ckpt.vocab, ckpt.config.article_length)?;
    let known: BTreeSet<String> = store.ids().into_iter().collect();
    let cases = load_cases(cases_path, &ckpt.vocab, ckpt.config.fact_length, &known)?;

    let (label, metrics) = match mode {
        EvalMode::Fine => (
            "fine",
            evaluate_fine(&ckpt.config, &ckpt.params, &cases, &store)?,
        ),
        EvalMode::CoarseUnion => (
            "coarse_union",
            evaluate_coarse(&ckpt.config, &ckpt.params, &cases, &store, CoarseMode::FineUnion)?,
        ),
        EvalMode::CoarseModel => (
            "coarse_model",
            evaluate_coarse(
                &ckpt.config,
                &ckpt.params,
                &cases,
                &store,
                CoarseMode::CoarseModel,
            )?,
        ),
    };
    write_metrics_csv(out, &[(label.to_string(), metrics)])?;

    let mut manifest = RunManifest::new(
        "eval",
        seed,
        serde_json::json!({"mode": label}),
        started,
    );
    manifest.record_input(ckpt_path)?;
    manifest.record_input(cases_path)?;
    manifest.record_input(parsed_path)?;
    manifest.record_output(out);
    manifest.write(&parent_dir(out))?;
    println!(
        "{label}: P {} R {} F1 {}",
        metrics.precision, metrics.recall, metrics.f1
    );
    Ok(())
}

fn run_recommend(
    seed: u64,
    ckpt_path: &Path,
    fact_text: &str,
    parsed_path: &Path,
    threshold: Option<f64>,
    all: bool,
) -> Result<(), CliError> {
    let started = unix_now();
    let ckpt = Checkpoint::load(ckpt_path)?;
    let mut config = ckpt.config.clone();
    if let Some(t) = threshold {
        config.threshold = t;
        config.validate()?;
    }
    let tokens = DefaultTokenizer.tokenize(fact_text);
    let fact = encode_and_pad(&tokens, &ckpt.vocab, config.fact_length);
    if fact.true_length == 0 || fact.unpadded().iter().all(|&id| id == UNK_ID) {
        return Err(CliError::compat(
            "fact has no tokens known to the checkpoint vocabulary",
        ));
    }
    let store = build_store(parsed_path, &ckpt.vocab, config.article_length)?;

    if all {
        let mut scored = Vec::new();
        for (id, (article, q)) in store.iter() {
            let pred = match_score(&config, &ckpt.params, &fact, article, q)?;
            scored.push((id.clone(), pred.prob_match));
        }
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        for (id, prob) in &scored {
            println!("{id}\t{prob}");
        }
    } else {
        let recs = recommend(&config, &ckpt.params, &fact, &store.inputs())?;
        for (id, prob) in &recs {
            println!("{id}\t{prob}");
        }
    }

    let mut manifest = RunManifest::new(
        "recommend",
        seed,
        serde_json::json!({"threshold": config.threshold, "all": all}),
        started,
    );
    manifest.record_input(ckpt_path)?;
    manifest.record_input(parsed_path)?;
    manifest.write(&parent_dir(ckpt_path))?;
    Ok(())
}

/// Saved decision model: everything needed to rebuild inputs the same
/// way at evaluation time.
#[derive(serde::Serialize, serde::Deserialize)]
struct DecisionModelFile {
    config: DecisionConfig,
    vocab: Vocabulary,
    params: DecisionParams,
    fact_length: usize,
    article_length: usize,
}

fn source_label(mode: DecisionMode, source: ArticleSource) -> String {
    let m = match mode {
        DecisionMode::Fine => "fine",
        DecisionMode::Coarse => "coarse",
    };
    let s = match source {
        ArticleSource::Gold => "gold",
        ArticleSource::Predicted => "predicted",
    };
    format!("{m}_{s}")
}

/// Builds the decision dataset for a (mode, source) pair. The matcher
/// checkpoint is only consulted for predicted correspondences.
fn decision_examples(
    mode: DecisionMode,
    source: ArticleSource,
    dcfg: &DecisionConfig,
    cases: &[Case],
    store: &ArticleStore,
    matcher: Option<&Checkpoint>,
) -> Result<Vec<DecisionExample>, CliError> {
    match (mode, source) {
        (DecisionMode::Fine, ArticleSource::Gold) => Ok(gold_fine_examples(cases)),
        (DecisionMode::Fine, ArticleSource::Predicted) => {
            let ckpt = matcher.ok_or_else(|| {
                CliError::input("--source predicted requires --checkpoint")
            })?;
            Ok(predicted_fine_examples(
                &ckpt.config,
                &ckpt.params,
                cases,
                store,
            )?)
        }
        (DecisionMode::Coarse, _) => Ok(coarse_examples(cases, dcfg.coarse_length)),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_train_decision(
    seed: u64,
    fc: &FileConfig,
    cases_path: &Path,
    parsed_path: &Path,
    vocab_path: &Path,
    embeddings_path: Option<&Path>,
    out_dir: &Path,
    mode: DecisionMode,
    source: ArticleSource,
    ckpt_path: Option<&Path>,
    tcfg: &DecisionTrainConfig,
) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    let started = unix_now();
    let vocab = load_vocab(vocab_path)?;
    let matcher = match ckpt_path {
        Some(p) => Some(Checkpoint::load(p)?),
        None => None,
    };
    let mcfg = matcher
        .as_ref()
        .map(|c| c.config.clone())
        .or_else(|| fc.model.clone())
        .unwrap_or_default();
    let mut dcfg = fc.decision.clone().unwrap_or_default();

    let store = build_store(parsed_path, &vocab, mcfg.article_length)?;
    let known: BTreeSet<String> = store.ids().into_iter().collect();
    let cases = load_cases(cases_path, &vocab, mcfg.fact_length, &known)?;

    let embedding = load_embedding(
        embeddings_path.map(Path::to_path_buf).as_ref(),
        &vocab,
        dcfg.embed_dim,
        seed,
    )?;
    dcfg.embed_dim = embedding.dim;
    let params = DecisionParams::init(&dcfg, embedding, seed)?;

    let examples = decision_examples(mode, source, &dcfg, &cases, &store, matcher.as_ref())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train, val, test) = split_dataset(&examples, SPLIT_FRACTIONS, &mut rng)?;
    let outcome = train_decision(tcfg, params, &train, &val, &store)?;
    let test_metrics = evaluate_examples(&outcome.params, &test, &store)?;

    let label = source_label(mode, source);
    let model_path = out_dir.join("decision.json");
    let file = DecisionModelFile {
        config: dcfg.clone(),
        vocab,
        params: outcome.params,
        fact_length: mcfg.fact_length,
        article_length: mcfg.article_length,
    };
    let json = serde_json::to_string(&file)
        .map_err(|e| CliError::input(format!("decision model serialization: {e}")))?;
    std::fs::write(&model_path, json)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", model_path.display())))?;
    let csv_path = out_dir.join("decision.csv");
    write_decision_csv(&csv_path, &[(label.clone(), test_metrics.clone())])?;

    let mut manifest = RunManifest::new(
        "train-decision",
        seed,
        serde_json::json!({"decision": dcfg, "train": tcfg, "source": label}),
        started,
    );
    manifest.record_input(cases_path)?;
    manifest.record_input(parsed_path)?;
    manifest.record_input(vocab_path)?;
    if let Some(p) = embeddings_path {
        manifest.record_input(p)?;
    }
    if let Some(p) = ckpt_path {
        manifest.record_input(p)?;
    }
    manifest.record_output(&model_path);
    manifest.record_output(&csv_path);
    manifest.write(out_dir)?;
    println!(
        "{label}: best epoch {} test macro F1 {}",
        outcome.best_epoch, test_metrics.macro_f1
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval_decision(
    seed: u64,
    model_path: &Path,
    cases_path: &Path,
    parsed_path: &Path,
    mode: DecisionMode,
    source: ArticleSource,
    ckpt_path: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let started = unix_now();
    let content = std::fs::read_to_string(model_path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", model_path.display())))?;
    let mut file: DecisionModelFile = serde_json::from_str(&content)
        .map_err(|e| CliError::compat(format!("bad decision model {}: {e}", model_path.display())))?;
    file.vocab.rebuild();

    let matcher = match ckpt_path {
        Some(p) => Some(Checkpoint::load(p)?),
        None => None,
    };
    let store = build_store(parsed_path, &file.vocab, file.article_length)?;
    let known: BTreeSet<String> = store.ids().into_iter().collect();
    let cases = load_cases(cases_path, &file.vocab, file.fact_length, &known)?;
    let examples =
        decision_examples(mode, source, &file.config, &cases, &store, matcher.as_ref())?;
    let metrics = evaluate_examples(&file.params, &examples, &store)?;

    let label = source_label(mode, source);
    write_decision_csv(out, &[(label.clone(), metrics.clone())])?;

    let mut manifest = RunManifest::new(
        "eval-decision",
        seed,
        serde_json::json!({"source": label}),
        started,
    );
    manifest.record_input(model_path)?;
    manifest.record_input(cases_path)?;
    manifest.record_input(parsed_path)?;
    if let Some(p) = ckpt_path {
        manifest.record_input(p)?;
    }
    manifest.record_output(out);
    manifest.write(&parent_dir(out))?;
    println!(
        "{label}: macro F1 {} weighted F1 {}",
        metrics.macro_f1, metrics.weighted_f1
    );
    Ok(())
}
