use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::bm25::{bm25_idf, bm25_term_score, Bm25Params};
use super::document::{tokenize, Document, Source};
use super::embed::{Embedder, EmbedderSpec};
use super::fusion::{reciprocal_rank_fusion, RRF_K};
use super::RetrievalError;

/// Documents returned per tool query unless the agent asks otherwise.
pub const DEFAULT_TOP_K: usize = 5;

const INDEX_FORMAT_VERSION: u32 = 1;

/// One ranked search result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub doc_id: String,
    pub score: f64,
}

fn rank(mut hits: Vec<Hit>, k: usize) -> Vec<Hit> {
    hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
    hits.truncate(k);
    hits
}

/// Immutable single-source index: BM25 postings plus one embedding per document.
pub struct RetrievalIndex {
    source: Source,
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
    doc_len: Vec<usize>,
    postings: HashMap<String, Vec<(usize, usize)>>,
    avgdl: f64,
    vectors: Vec<Vec<f64>>,
    embedder: Box<dyn Embedder>,
    params: Bm25Params,
}

impl fmt::Debug for RetrievalIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RetrievalIndex")
            .field("source", &self.source)
            .field("documents", &self.docs.len())
            .field("avgdl", &self.avgdl)
            .field("embedder", &self.embedder.spec())
            .finish()
    }
}

impl RetrievalIndex {
    /// Index `docs`, all of which must come from `source`.
    pub fn build(source: Source, docs: Vec<Document>, embedder: Box<dyn Embedder>) -> Result<Self, RetrievalError> {
        let vectors = docs
            .iter()
            .map(|d| embedder.embed(&d.text()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::assemble(source, docs, vectors, embedder)
    }

    fn assemble(
        source: Source,
        docs: Vec<Document>,
        vectors: Vec<Vec<f64>>,
        embedder: Box<dyn Embedder>,
    ) -> Result<Self, RetrievalError> {
        let dim = embedder.dimension();
        let mut by_id = HashMap::with_capacity(docs.len());
        let mut doc_len = Vec::with_capacity(docs.len());
        let mut postings: HashMap<String, Vec<(usize, usize)>> = HashMap::new();
        for (i, d) in docs.iter().enumerate() {
            if d.source != source {
                return Err(RetrievalError::WrongSource {
                    expected: source,
                    actual: d.source,
                });
            }
            if by_id.insert(d.doc_id.clone(), i).is_some() {
                return Err(RetrievalError::DuplicateDocId {
                    doc_id: d.doc_id.clone(),
                    source_kind: source,
                });
            }
            let tokens = tokenize(&d.text());
            doc_len.push(tokens.len());
            let mut tf: BTreeMap<String, usize> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (t, c) in tf {
                postings.entry(t).or_default().push((i, c));
            }
        }
        for v in &vectors {
            if v.len() != dim {
                return Err(RetrievalError::Dimension {
                    want: dim,
                    got: v.len(),
                });
            }
        }
        let avgdl = if docs.is_empty() {
            0.0
        } else {
            doc_len.iter().sum::<usize>() as f64 / docs.len() as f64
        };
        Ok(Self {
            source,
            docs,
            by_id,
            doc_len,
            postings,
            avgdl,
            vectors,
            embedder,
            params: Bm25Params::default(),
        })
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn dimension(&self) -> usize {
        self.embedder.dimension()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn embedding(&self, doc_id: &str) -> Option<&[f64]> {
        self.by_id.get(doc_id).map(|&i| self.vectors[i].as_slice())
    }

    /// Registry record of a trial, looked up by NCT id with no date filter.
    pub fn find_trial(&self, nct_id: &str) -> Option<&Document> {
        self.docs.iter().find(|d| d.nct_id.as_deref() == Some(nct_id))
    }

    pub fn embedder_spec(&self) -> EmbedderSpec {
        self.embedder.spec()
    }

    /// Okapi BM25 over documents dated strictly before `cutoff`.
    /// Documents sharing no term with the query are not returned.
    pub fn bm25_search(&self, query: &str, k: usize, cutoff: NaiveDate) -> Vec<Hit> {
        if k == 0 || self.docs.is_empty() {
            return Vec::new();
        }
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let n = self.docs.len();
        let mut scores: BTreeMap<usize, f64> = BTreeMap::new();
        for t in &terms {
            let Some(list) = self.postings.get(t) else { continue };
            let idf: f64 = bm25_idf(n, list.len());
            for &(doc, tf) in list {
                if self.docs[doc].date >= cutoff {
                    continue;
                }
                let s = bm25_term_score(tf, self.doc_len[doc], self.avgdl, idf, self.params);
                *scores.entry(doc).or_default() += s;
            }
        }
        let hits = scores
            .into_iter()
            .filter(|(_, s)| *s > 0.0)
            .map(|(i, score)| Hit {
                doc_id: self.docs[i].doc_id.clone(),
                score,
            })
            .collect();
        rank(hits, k)
    }

    /// Cosine similarity over documents dated strictly before `cutoff`.
    pub fn vector_search(&self, query: &str, k: usize, cutoff: NaiveDate) -> Result<Vec<Hit>, RetrievalError> {
        if k == 0 || self.docs.is_empty() {
            return Ok(Vec::new());
        }
        let q = self.embedder.embed(query)?;
        if q.iter().all(|x| *x == 0.0) {
            return Ok(Vec::new());
        }
        let hits = self
            .docs
            .iter()
            .zip(&self.vectors)
            .filter(|(d, _)| d.date < cutoff)
            .map(|(d, v)| Hit {
                doc_id: d.doc_id.clone(),
                score: q.iter().zip(v).map(|(a, b)| a * b).sum(),
            })
            .collect();
        Ok(rank(hits, k))
    }

    /// Reciprocal Rank Fusion of the top-2k lexical and vector lists.
    pub fn hybrid_search(&self, query: &str, k: usize, cutoff: NaiveDate) -> Result<Vec<Hit>, RetrievalError> {
        if k == 0 {
            return Ok(Vec::new());
        }
        let depth = 2 * k;
        let lexical: Vec<String> = self
            .bm25_search(query, depth, cutoff)
            .into_iter()
            .map(|h| h.doc_id)
            .collect();
        let dense: Vec<String> = self
            .vector_search(query, depth, cutoff)?
            .into_iter()
            .map(|h| h.doc_id)
            .collect();
        let mut fused: Vec<Hit> = reciprocal_rank_fusion::<f64>(&[lexical, dense], RRF_K)
            .into_iter()
            .map(|(doc_id, score)| Hit { doc_id, score })
            .collect();
        fused.truncate(k);
        Ok(fused)
    }

    /// Write the index under `dir/<source>/`.
    pub fn save(&self, dir: &Path) -> Result<(), RetrievalError> {
        let sub = dir.join(self.source.as_str());
        fs::create_dir_all(&sub).map_err(|e| RetrievalError::io(&sub, e))?;
        let docs_path = sub.join("documents.jsonl");
        let mut w = BufWriter::new(fs::File::create(&docs_path).map_err(|e| RetrievalError::io(&docs_path, e))?);
        for d in &self.docs {
            let line = serde_json::to_string(d).map_err(|e| RetrievalError::Format(e.to_string()))?;
            writeln!(w, "{line}").map_err(|e| RetrievalError::io(&docs_path, e))?;
        }
        w.flush().map_err(|e| RetrievalError::io(&docs_path, e))?;

        let vec_path = sub.join("vectors.bin");
        let mut w = BufWriter::new(fs::File::create(&vec_path).map_err(|e| RetrievalError::io(&vec_path, e))?);
        for v in &self.vectors {
            for x in v {
                w.write_all(&x.to_le_bytes())
                    .map_err(|e| RetrievalError::io(&vec_path, e))?;
            }
        }
        w.flush().map_err(|e| RetrievalError::io(&vec_path, e))
    }

    fn load(dir: &Path, source: Source, embedder: Box<dyn Embedder>) -> Result<Self, RetrievalError> {
        let sub = dir.join(source.as_str());
        let docs_path = sub.join("documents.jsonl");
        let f = fs::File::open(&docs_path).map_err(|e| RetrievalError::io(&docs_path, e))?;
        let mut docs = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| RetrievalError::io(&docs_path, e))?;
            let d: Document = serde_json::from_str(&line).map_err(|e| RetrievalError::MalformedRecord {
                line: i + 1,
                message: e.to_string(),
            })?;
            docs.push(d);
        }
        let vec_path = sub.join("vectors.bin");
        let mut bytes = Vec::new();
        fs::File::open(&vec_path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| RetrievalError::io(&vec_path, e))?;
        let dim = embedder.dimension();
        if bytes.len() != docs.len() * dim * 8 {
            return Err(RetrievalError::Format(format!(
                "{} holds {} bytes, expected {}",
                vec_path.display(),
                bytes.len(),
                docs.len() * dim * 8
            )));
        }
        let flat: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let vectors = if dim == 0 {
            vec![Vec::new(); docs.len()]
        } else {
            flat.chunks(dim).map(<[f64]>::to_vec).collect()
        };
        Self::assemble(source, docs, vectors, embedder)
    }
}

/// Strict-cutoff hybrid search over a registry index: only trials that
/// started before the subject trial are eligible.
pub fn nct_exclusion_search(
    index: &RetrievalIndex,
    query: &str,
    k: usize,
    subject_trial_start: NaiveDate,
) -> Result<Vec<Hit>, RetrievalError> {
    if index.source() != Source::Nct {
        return Err(RetrievalError::WrongSource {
            expected: Source::Nct,
            actual: index.source(),
        });
    }
    index.hybrid_search(query, k, subject_trial_start)
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    embedder: EmbedderSpec,
    documents: BTreeMap<Source, usize>,
}

/// The PubMed and NCT indices used by the agents' tools.
#[derive(Debug)]
pub struct KnowledgeBase {
    pub pubmed: RetrievalIndex,
    pub nct: RetrievalIndex,
}

impl KnowledgeBase {
    /// Split a mixed corpus by source and index both halves.
    pub fn ingest(
        records: impl IntoIterator<Item = Document>,
        embedder: &EmbedderSpec,
    ) -> Result<Self, RetrievalError> {
        let (pubmed, nct): (Vec<Document>, Vec<Document>) =
            records.into_iter().partition(|d| d.source == Source::Pubmed);
        Ok(Self {
            pubmed: RetrievalIndex::build(Source::Pubmed, pubmed, embedder.build()?)?,
            nct: RetrievalIndex::build(Source::Nct, nct, embedder.build()?)?,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<(), RetrievalError> {
        fs::create_dir_all(dir).map_err(|e| RetrievalError::io(dir, e))?;
        self.pubmed.save(dir)?;
        self.nct.save(dir)?;
        let manifest = Manifest {
            format_version: INDEX_FORMAT_VERSION,
            embedder: self.pubmed.embedder_spec(),
            documents: [(Source::Pubmed, self.pubmed.len()), (Source::Nct, self.nct.len())].into(),
        };
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| RetrievalError::Format(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| RetrievalError::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self, RetrievalError> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| RetrievalError::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| RetrievalError::Format(e.to_string()))?;
        if manifest.format_version != INDEX_FORMAT_VERSION {
            return Err(RetrievalError::Format(format!(
                "unsupported index format version {}",
                manifest.format_version
            )));
        }
        let kb = Self {
            pubmed: RetrievalIndex::load(dir, Source::Pubmed, manifest.embedder.build()?)?,
            nct: RetrievalIndex::load(dir, Source::Nct, manifest.embedder.build()?)?,
        };
        for (source, n) in &manifest.documents {
            let got = match source {
                Source::Pubmed => kb.pubmed.len(),
                Source::Nct => kb.nct.len(),
            };
            if got != *n {
                return Err(RetrievalError::Format(format!(
                    "manifest lists {n} {source} documents, found {got}"
                )));
            }
        }
        Ok(kb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::HashingEmbedder;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn doc(id: &str, body: &str, d: &str) -> Document {
        Document {
            doc_id: id.into(),
            source: Source::Pubmed,
            title: String::new(),
            body: body.into(),
            date: date(d),
            nct_id: None,
        }
    }

    fn index(docs: Vec<Document>) -> RetrievalIndex {
        RetrievalIndex::build(Source::Pubmed, docs, Box::new(HashingEmbedder::default())).unwrap()
    }

    const FAR: &str = "2100-01-01";

    #[test]
    fn stats_of_three_documents() {
        let idx = index(vec![
            doc("a", "one two three", "2000-01-01"),
            doc("b", "one", "2000-01-01"),
            doc("c", "one two", "2000-01-01"),
        ]);
        assert_eq!(idx.len(), 3);
        assert_eq!(idx.avgdl(), 2.0);
    }

    #[test]
    fn empty_index_returns_nothing() {
        let idx = index(vec![]);
        assert!(idx.bm25_search("x", 5, date(FAR)).is_empty());
        assert!(idx.vector_search("x", 5, date(FAR)).unwrap().is_empty());
        assert!(idx.hybrid_search("x", 5, date(FAR)).unwrap().is_empty());
    }

    #[test]
    fn duplicate_doc_id_rejected() {
        let err = RetrievalIndex::build(
            Source::Pubmed,
            vec![doc("a", "x", "2000-01-01"), doc("a", "y", "2000-01-01")],
            Box::new(HashingEmbedder::default()),
        )
        .unwrap_err();
        assert!(matches!(err, RetrievalError::DuplicateDocId { .. }));
    }

    #[test]
    fn absent_term_gives_empty_list() {
        let idx = index(vec![doc("a", "aspirin trial", "2000-01-01")]);
        assert!(idx.bm25_search("ibuprofen", 3, date(FAR)).is_empty());
    }

    #[test]
    fn aspirin_hand_value() {
        let idx = index(vec![
            doc("A", "aspirin trial aspirin", "2000-01-01"),
            doc("B", "placebo trial", "2000-01-01"),
        ]);
        let hits = idx.bm25_search("aspirin", 5, date(FAR));
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].doc_id, "A");
        let (k1, b, avgdl) = (1.5, 0.75, 2.5);
        let idf = (1.0f64 + (2.0 - 1.0 + 0.5) / (1.0 + 0.5)).ln();
        let want = idf * (2.0 * (k1 + 1.0)) / (2.0 + k1 * (1.0 - b + b * 3.0 / avgdl));
        assert!((hits[0].score - want).abs() < 1e-12);
    }

    #[test]
    fn cutoff_is_strict() {
        let idx = index(vec![doc("a", "aspirin", "2010-01-01")]);
        assert!(idx.bm25_search("aspirin", 3, date("2010-01-01")).is_empty());
        assert_eq!(idx.bm25_search("aspirin", 3, date("2010-01-02")).len(), 1);
        assert!(idx.vector_search("aspirin", 3, date("2010-01-01")).unwrap().is_empty());
    }

    #[test]
    fn self_similarity_is_one() {
        let idx = index(vec![
            doc("a", "dengue vaccine immunogenicity", "2000-01-01"),
            doc("b", "statin cardiovascular outcomes", "2000-01-01"),
        ]);
        let hits = idx
            .vector_search("dengue vaccine immunogenicity", 1, date(FAR))
            .unwrap();
        assert_eq!(hits[0].doc_id, "a");
        assert!((hits[0].score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ties_break_by_doc_id() {
        let idx = index(vec![
            doc("b", "same words", "2000-01-01"),
            doc("a", "same words", "2000-01-01"),
        ]);
        let hits = idx.bm25_search("same", 2, date(FAR));
        assert_eq!(hits[0].doc_id, "a");
        assert_eq!(hits[0].score, hits[1].score);
    }

    #[test]
    fn single_matching_document_survives_fusion() {
        let idx = index(vec![doc("only", "rare biomarker", "2000-01-01")]);
        let hits = idx.hybrid_search("rare biomarker", 3, date(FAR)).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].doc_id, "only");
        assert_eq!(hits[0].score, 2.0 / 61.0);
    }

    #[test]
    fn exclusion_search_requires_registry_index() {
        let idx = index(vec![doc("a", "x", "2000-01-01")]);
        assert!(matches!(
            nct_exclusion_search(&idx, "x", 3, date(FAR)),
            Err(RetrievalError::WrongSource { .. })
        ));
    }

    #[test]
    fn exclusion_boundaries() {
        let mk = |id: &str, d: &str| Document {
            doc_id: id.into(),
            source: Source::Nct,
            title: "registry".into(),
            body: "vaccine".into(),
            date: date(d),
            nct_id: Some(id.into()),
        };
        let idx = RetrievalIndex::build(
            Source::Nct,
            vec![mk("NCT_SAME", "2012-05-10"), mk("NCT_EARLIER", "2012-05-09")],
            Box::new(HashingEmbedder::default()),
        )
        .unwrap();
        let hits = nct_exclusion_search(&idx, "vaccine", 5, date("2012-05-10")).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.doc_id.as_str()).collect();
        assert_eq!(ids, ["NCT_EARLIER"]);
        let empty = RetrievalIndex::build(Source::Nct, vec![], Box::new(HashingEmbedder::default())).unwrap();
        assert!(nct_exclusion_search(&empty, "vaccine", 5, date("2012-05-10"))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut docs = vec![
            doc("p1", "aspirin platelet", "2001-01-01"),
            doc("p2", "vaccine dengue", "2002-01-01"),
        ];
        docs.push(Document {
            doc_id: "NCT1".into(),
            source: Source::Nct,
            title: "t".into(),
            body: "vaccine".into(),
            date: date("2003-01-01"),
            nct_id: Some("NCT1".into()),
        });
        let kb = KnowledgeBase::ingest(docs, &EmbedderSpec::Hashing { dim: 16 }).unwrap();
        kb.save(dir.path()).unwrap();
        let back = KnowledgeBase::load(dir.path()).unwrap();
        assert_eq!(back.pubmed.len(), 2);
        assert_eq!(back.nct.len(), 1);
        assert_eq!(back.pubmed.avgdl(), kb.pubmed.avgdl());
        for q in ["aspirin", "vaccine dengue", "platelet vaccine"] {
            assert_eq!(
                back.pubmed.hybrid_search(q, 5, date(FAR)).unwrap(),
                kb.pubmed.hybrid_search(q, 5, date(FAR)).unwrap()
            );
        }
        assert_eq!(back.pubmed.embedding("p2"), kb.pubmed.embedding("p2"));
    }
}
