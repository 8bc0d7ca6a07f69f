use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use icdlink::corpus::{code_frequencies, corpus_stats as compute_stats, mark_mentions, Corpus, StatsReport};
use icdlink::decoder::{AnnotationResult, Decoder};
use icdlink::lexicon::{PrefixTrie, Vocabulary};
use icdlink::metrics::{build_report, render_table};
use icdlink::ontology::Ontology;
use icdlink::predictions::{join_assignments, read_predictions, write_predictions, PredictionRecord};
use icdlink::scorer::{NgramModel, OracleScorer, SeededRandomScorer};
use log::{info, warn};
use rayon::prelude::*;

use crate::error::CliError;
use crate::scorer_spec::{document_seed, ScorerSpec};
use crate::{AnnotateArgs, EvalArgs, Format};

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CliError::Open {
            path: path.to_path_buf(),
            source,
        })
}

fn load_kb(path: &Path) -> Result<Ontology, CliError> {
    let ont = Ontology::load(open(path)?).map_err(|e| CliError::data(path, e))?;
    info!("loaded {} entities from {}", ont.len(), path.display());
    Ok(ont)
}

fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    let corpus = Corpus::load(open(path)?).map_err(|e| CliError::data(path, e))?;
    let substituted: usize = corpus.documents.iter().map(|d| d.substitutions.len()).sum();
    if substituted > 0 {
        warn!(
            "{}: replaced {substituted} reserved characters with fullwidth forms",
            path.display()
        );
    }
    info!("loaded {} documents from {}", corpus.len(), path.display());
    Ok(corpus)
}

/// Writes to `out`, or stdout when absent.
fn emit(out: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
    let what = out.map_or_else(|| "stdout".to_string(), |p| p.display().to_string());
    let wrap = |source| CliError::Write {
        what: what.clone(),
        source,
    };
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path).map_err(wrap)?);
            body(&mut w).and_then(|_| w.flush()).map_err(wrap)
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            body(&mut w).and_then(|_| w.flush()).map_err(wrap)
        }
    }
}

fn count(n: usize, one: &str, many: &str) -> String {
    format!("{n} {}", if n == 1 { one } else { many })
}

pub fn kb_validate(kb: &Path) -> Result<(), CliError> {
    let ont = load_kb(kb)?;
    println!(
        "{}, {}, {}",
        count(ont.len(), "entity", "entities"),
        count(ont.chapter_count(), "chapter", "chapters"),
        count(ont.subchapter_count(), "subchapter", "subchapters")
    );
    Ok(())
}

pub fn corpus_validate(corpus: &Path, kb: Option<&Path>) -> Result<(), CliError> {
    let c = load_corpus(corpus)?;
    if let Some(kb) = kb {
        let ont = load_kb(kb)?;
        for doc in &c.documents {
            for (i, m) in doc.mentions.iter().enumerate() {
                let Some(code) = m.gold_code.as_deref() else { continue };
                match ont.get(code) {
                    None => {
                        return Err(CliError::data(
                            corpus,
                            format!("document `{}` mention {i}: code `{code}` is not in the knowledge base", doc.doc_id),
                        ))
                    }
                    Some(e) if e.system != m.system => warn!(
                        "document `{}` mention {i}: labelled {} but `{code}` is {}",
                        doc.doc_id, m.system, e.system
                    ),
                    Some(_) => {}
                }
            }
        }
    }
    println!(
        "{}, {}",
        count(c.len(), "document", "documents"),
        count(c.mention_count(), "mention", "mentions")
    );
    Ok(())
}

fn stats_table(s: &StatsReport) -> String {
    let mut out = String::new();
    let row = |out: &mut String, label: &str, value: usize| out.push_str(&format!("{label:<22}{value:>8}\n"));
    row(&mut out, "Reports", s.reports);
    row(&mut out, "Diagnosis samples", s.diagnoses.samples);
    row(&mut out, "Diagnosis codes", s.diagnoses.codes);
    row(&mut out, "Diagnosis 1-shot", s.diagnoses.one_shot_codes);
    row(&mut out, "Procedure samples", s.procedures.samples);
    row(&mut out, "Procedure codes", s.procedures.codes);
    row(&mut out, "Procedure 1-shot", s.procedures.one_shot_codes);
    row(&mut out, "Distinct codes", s.distinct_codes);
    row(&mut out, "1-shot codes", s.one_shot_codes);
    if let Some(few) = &s.few_shot_codes {
        for (k, n) in few {
            row(&mut out, &format!("{k}-shot (train)"), *n);
        }
    }
    out
}

pub fn corpus_stats(corpus: &Path, train: Option<&Path>, format: Format, out: Option<&Path>) -> Result<(), CliError> {
    let c = load_corpus(corpus)?;
    let freq = match train {
        Some(p) => Some(code_frequencies(&load_corpus(p)?).map_err(|e| CliError::data(p, e))?),
        None => None,
    };
    let stats = compute_stats(&c, freq.as_ref());
    emit(out, |w| match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *w, &stats)?;
            writeln!(w)
        }
        Format::Table => w.write_all(stats_table(&stats).as_bytes()),
    })
}

enum Scorer {
    Oracle,
    Random(u64),
    Ngram(NgramModel),
}

pub fn annotate(args: &AnnotateArgs, spec: ScorerSpec) -> Result<(), CliError> {
    let ont = load_kb(&args.kb)?;
    let corpus = load_corpus(&args.corpus)?.truncated(args.truncate);
    let vocab = Vocabulary::characters();
    let trie = PrefixTrie::build(&vocab, &ont).map_err(CliError::invalid)?;
    let scorer = match spec {
        ScorerSpec::Oracle => Scorer::Oracle,
        ScorerSpec::Random(seed) => Scorer::Random(seed.unwrap_or(args.seed)),
        ScorerSpec::Ngram(n) => {
            let path = args
                .train_corpus
                .as_deref()
                .ok_or_else(|| CliError::Usage("--scorer ngram requires --train-corpus".into()))?;
            let train = load_corpus(path)?;
            Scorer::Ngram(NgramModel::train(&vocab, &ont, &train, n).map_err(|e| CliError::data(path, e))?)
        }
    };
    info!("annotating {} documents with {spec}", corpus.len());

    let decoder = Decoder::new(&ont, &trie);
    let annotate_one = |(index, doc): (usize, &icdlink::Document)| -> Result<PredictionRecord, CliError> {
        let fail = |e: &dyn std::fmt::Display| CliError::data(&args.corpus, format!("document `{}`: {e}", doc.doc_id));
        let marked = mark_mentions(doc).map_err(|e| fail(&e))?;
        let result: AnnotationResult = match &scorer {
            Scorer::Oracle => {
                let mut s = OracleScorer::for_annotation(&vocab, &ont, &marked).map_err(|e| fail(&e))?;
                decoder.annotate_document(&mut s, &marked)
            }
            Scorer::Random(seed) => {
                decoder.annotate_document(&mut SeededRandomScorer::new(document_seed(*seed, index)), &marked)
            }
            Scorer::Ngram(model) => decoder.annotate_document(&mut &*model, &marked),
        }
        .map_err(|e| fail(&e))?;
        Ok(PredictionRecord::from_result(&doc.doc_id, &result))
    };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = args.jobs {
        pool = pool.num_threads(jobs.get());
    }
    let pool = pool.build().map_err(CliError::invalid)?;
    let records = pool.install(|| {
        corpus
            .documents
            .par_iter()
            .enumerate()
            .map(annotate_one)
            .collect::<Result<Vec<_>, _>>()
    })?;

    emit(args.out.as_deref(), |w| {
        write_predictions(w, &records).map_err(|e| io::Error::other(e.to_string()))
    })
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let ont = load_kb(&args.kb)?;
    let gold = load_corpus(&args.corpus)?.truncated(args.truncate);
    let predictions = read_predictions(open(&args.predictions)?).map_err(|e| CliError::data(&args.predictions, e))?;
    let assignments = join_assignments(&gold, &predictions).map_err(CliError::invalid)?;
    let freq = match args.train_corpus.as_deref() {
        Some(p) => Some(code_frequencies(&load_corpus(p)?).map_err(|e| CliError::data(p, e))?),
        None => None,
    };
    let report = build_report(&assignments, &ont, freq.as_ref()).map_err(CliError::invalid)?;
    info!("evaluated {} mentions", assignments.len());
    emit(args.out.as_deref(), |w| match args.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *w, &report)?;
            writeln!(w)
        }
        Format::Table => w.write_all(render_table(&report).as_bytes()),
    })
}
