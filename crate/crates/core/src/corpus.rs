//! Text ingestion: tokenization, sentence segmentation, gap candidates and
//! the C-test container with its JSON form.
//!
//! Token and sentence indices are 0-based. Gap sizes count characters
//! removed from the end of a word and are 1-based (`1..=len-1`).

use std::ops::Range;
use std::sync::Arc;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    /// Byte span into [`Document::text`].
    pub span: Range<usize>,
    pub is_word: bool,
}

impl Token {
    pub fn char_len(&self) -> usize {
        self.surface.chars().count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub text: String,
    pub tokens: Vec<Token>,
    /// Token index ranges; they partition `tokens` in order.
    pub sentences: Vec<Range<usize>>,
}

impl Document {
    pub fn sentence_of(&self, token: usize) -> Option<usize> {
        self.sentences.iter().position(|s| s.contains(&token))
    }

    pub fn word_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_word).count()
    }
}

const TERMINATORS: [char; 3] = ['.', '!', '?'];
const CLOSERS: [char; 7] = ['"', '\'', ')', ']', '’', '”', '»'];
const WORD_JOINERS: [char; 3] = ['-', '\'', '’'];

/// Split `text` into tokens and sentences.
///
/// Words are maximal alphanumeric runs; a hyphen or apostrophe between two
/// alphanumerics stays inside the word, as does `.`/`,` between digits.
/// Every other non-space character is its own punctuation token. A sentence
/// ends after a run of `.`, `!` or `?` (plus adjacent closing quotes or
/// brackets) when followed by whitespace and an uppercase-initial token, or
/// by the end of the text.
pub fn tokenize(text: &str) -> Result<Document> {
    if text.trim().is_empty() {
        return Err(Error::EmptyInput);
    }
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let byte_end = |idx: usize| chars.get(idx).map_or(text.len(), |&(b, _)| b);
    let mut tokens = Vec::new();
    let mut pos = 0;
    while pos < chars.len() {
        let (start, c) = chars[pos];
        if c.is_whitespace() {
            pos += 1;
            continue;
        }
        if c.is_alphanumeric() {
            let mut end = pos + 1;
            while end < chars.len() {
                let cur = chars[end].1;
                let next_alnum = chars.get(end + 1).is_some_and(|&(_, n)| n.is_alphanumeric());
                let joins = cur.is_alphanumeric()
                    || (WORD_JOINERS.contains(&cur) && next_alnum)
                    || ((cur == '.' || cur == ',')
                        && chars[end - 1].1.is_ascii_digit()
                        && chars.get(end + 1).is_some_and(|&(_, n)| n.is_ascii_digit()));
                if !joins {
                    break;
                }
                end += 1;
            }
            let span = start..byte_end(end);
            tokens.push(Token { surface: text[span.clone()].to_string(), span, is_word: true });
            pos = end;
        } else {
            let span = start..byte_end(pos + 1);
            tokens.push(Token { surface: text[span.clone()].to_string(), span, is_word: false });
            pos += 1;
        }
    }
    if tokens.is_empty() {
        return Err(Error::EmptyInput);
    }

    let is_terminator = |t: &Token| t.surface.chars().all(|c| TERMINATORS.contains(&c)) && !t.is_word;
    let is_closer = |t: &Token| !t.is_word && t.surface.chars().all(|c| CLOSERS.contains(&c));
    let mut sentences = Vec::new();
    let mut sent_start = 0;
    let mut idx = 0;
    while idx < tokens.len() {
        if !is_terminator(&tokens[idx]) {
            idx += 1;
            continue;
        }
        let mut last = idx;
        while last + 1 < tokens.len()
            && (is_terminator(&tokens[last + 1]) || is_closer(&tokens[last + 1]))
            && tokens[last + 1].span.start == tokens[last].span.end
        {
            last += 1;
        }
        let boundary = match tokens.get(last + 1) {
            None => true,
            Some(next) => {
                let gap = &text[tokens[last].span.end..next.span.start];
                !gap.is_empty()
                    && gap.chars().all(char::is_whitespace)
                    && next.surface.chars().next().is_some_and(char::is_uppercase)
            }
        };
        if boundary {
            sentences.push(sent_start..last + 1);
            sent_start = last + 1;
        }
        idx = last + 1;
    }
    if sent_start < tokens.len() {
        sentences.push(sent_start..tokens.len());
    }
    Ok(Document { text: text.to_string(), tokens, sentences })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapCandidate {
    pub token_index: usize,
    /// Length in characters (`l_i`).
    pub word_length: usize,
    pub sentence_index: usize,
    pub surface: String,
}

impl GapCandidate {
    /// Split into (hint, solution) for a gap removing `size` trailing characters.
    pub fn split(&self, size: usize) -> (String, String) {
        let keep = self.word_length - size;
        let cut = self.surface.char_indices().nth(keep).map_or(self.surface.len(), |(b, _)| b);
        (self.surface[..cut].to_string(), self.surface[cut..].to_string())
    }

    pub fn sizes(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.word_length - 1
    }
}

/// Which word tokens qualify as gap candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePolicy {
    pub min_length: usize,
    pub allow_hyphenated: bool,
    pub allow_apostrophe: bool,
    /// Keep only the first `max_candidates` eligible words.
    pub max_candidates: Option<usize>,
}

impl Default for CandidatePolicy {
    fn default() -> Self {
        Self { min_length: 2, allow_hyphenated: false, allow_apostrophe: false, max_candidates: None }
    }
}

impl CandidatePolicy {
    pub fn accepts(&self, surface: &str) -> bool {
        let len = surface.chars().count();
        len >= self.min_length.max(2)
            && surface.chars().all(|c| {
                c.is_alphabetic()
                    || (c == '-' && self.allow_hyphenated)
                    || ((c == '\'' || c == '’') && self.allow_apostrophe)
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CandidateSet {
    pub candidates: Vec<GapCandidate>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn get(&self, i: usize) -> Result<&GapCandidate> {
        self.candidates.get(i).ok_or(Error::IndexOutOfRange { index: i, len: self.len() })
    }

    pub fn by_token(&self, token: usize) -> Option<usize> {
        self.candidates.binary_search_by_key(&token, |c| c.token_index).ok()
    }

    /// Candidate indices sharing the sentence of candidate `i` (contiguous,
    /// since candidates are ordered by position).
    pub fn sentence_members(&self, i: usize) -> Range<usize> {
        let s = self.candidates[i].sentence_index;
        let start = self.candidates[..i].iter().rposition(|c| c.sentence_index != s).map_or(0, |p| p + 1);
        let end = self.candidates[i..].iter().position(|c| c.sentence_index != s).map_or(self.len(), |p| i + p);
        start..end
    }
}

/// All word tokens in interior sentences accepted by `policy`, in order.
pub fn extract_candidates(doc: &Document, policy: &CandidatePolicy) -> CandidateSet {
    let mut candidates = Vec::new();
    let last = doc.sentences.len().saturating_sub(1);
    for (sentence_index, range) in doc.sentences.iter().enumerate() {
        if sentence_index == 0 || sentence_index == last {
            continue;
        }
        for token_index in range.clone() {
            let token = &doc.tokens[token_index];
            if token.is_word && policy.accepts(&token.surface) {
                candidates.push(GapCandidate {
                    token_index,
                    word_length: token.char_len(),
                    sentence_index,
                    surface: token.surface.clone(),
                });
            }
        }
    }
    if let Some(limit) = policy.max_candidates {
        candidates.truncate(limit);
    }
    CandidateSet { candidates }
}

/// A tokenized passage together with its candidate set.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub document: Document,
    pub candidates: CandidateSet,
    pub policy: CandidatePolicy,
}

impl Instance {
    pub fn new(document: Document, policy: CandidatePolicy) -> Self {
        let candidates = extract_candidates(&document, &policy);
        Self { document, candidates, policy }
    }

    pub fn from_text(text: &str, policy: &CandidatePolicy) -> Result<Self> {
        Ok(Self::new(tokenize(text)?, policy.clone()))
    }

    pub fn n(&self) -> usize {
        self.candidates.len()
    }

    pub fn candidate(&self, i: usize) -> &GapCandidate {
        &self.candidates.candidates[i]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gap {
    pub candidate_index: usize,
    pub size: usize,
    pub hint: String,
    pub solution: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CTestMeta {
    pub strategy: String,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CTest {
    pub instance: Arc<Instance>,
    /// Sorted by candidate index; at most one gap per candidate.
    pub gaps: Vec<Gap>,
    pub meta: CTestMeta,
}

impl CTest {
    /// Build from `(candidate, size)` pairs, validating every gap.
    pub fn new(instance: Arc<Instance>, selection: &[(usize, usize)], meta: CTestMeta) -> Result<Self> {
        let mut picks = selection.to_vec();
        picks.sort_unstable();
        let mut gaps = Vec::with_capacity(picks.len());
        for (pos, &(i, size)) in picks.iter().enumerate() {
            if pos > 0 && picks[pos - 1].0 == i {
                return Err(Error::InvariantViolation(format!("candidate {i} gapped twice")));
            }
            let cand = instance.candidates.get(i)?;
            if size < 1 || size + 1 > cand.word_length {
                return Err(Error::InvariantViolation(format!(
                    "gap size {size} outside 1..={} for '{}'",
                    cand.word_length - 1,
                    cand.surface
                )));
            }
            let (hint, solution) = cand.split(size);
            gaps.push(Gap { candidate_index: i, size, hint, solution });
        }
        Ok(Self { instance, gaps, meta })
    }

    pub fn m(&self) -> usize {
        self.gaps.len()
    }

    pub fn selection(&self) -> Vec<(usize, usize)> {
        self.gaps.iter().map(|g| (g.candidate_index, g.size)).collect()
    }

    /// Placement indicator vector over candidates.
    pub fn placement(&self) -> Vec<bool> {
        let mut b = vec![false; self.instance.n()];
        for g in &self.gaps {
            b[g.candidate_index] = true;
        }
        b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RenderStyle {
    /// Hint followed by one underscore per removed character.
    #[default]
    Blanks,
    /// Hint followed by the solution in square brackets.
    Solutions,
}

pub fn render(ctest: &CTest, style: RenderStyle) -> String {
    let doc = &ctest.instance.document;
    let mut out = String::with_capacity(doc.text.len() + ctest.gaps.len() * 4);
    let mut cursor = 0;
    for gap in &ctest.gaps {
        let token = &doc.tokens[ctest.instance.candidate(gap.candidate_index).token_index];
        out.push_str(&doc.text[cursor..token.span.start]);
        out.push_str(&gap.hint);
        match style {
            RenderStyle::Blanks => out.extend(std::iter::repeat_n('_', gap.size)),
            RenderStyle::Solutions => {
                out.push('[');
                out.push_str(&gap.solution);
                out.push(']');
            }
        }
        cursor = token.span.end;
    }
    out.push_str(&doc.text[cursor..]);
    out
}

pub fn ctest_to_json(ctest: &CTest) -> Value {
    let doc = &ctest.instance.document;
    let sentences: Vec<Value> = doc.sentences.iter().map(|r| json!([r.start, r.end])).collect();
    let gaps: Vec<Value> = ctest
        .gaps
        .iter()
        .map(|g| {
            json!({
                "token": ctest.instance.candidate(g.candidate_index).token_index,
                "size": g.size,
                "hint": g.hint,
                "solution": g.solution,
            })
        })
        .collect();
    json!({
        "text": doc.text,
        "sentences": sentences,
        "gaps": gaps,
        "meta": { "strategy": ctest.meta.strategy, "tau": ctest.meta.tau },
    })
}

pub fn serialize_ctest(ctest: &CTest) -> String {
    serde_json::to_string_pretty(&ctest_to_json(ctest)).expect("json values always serialize")
}

pub fn parse_ctest(input: &str, policy: &CandidatePolicy) -> Result<CTest> {
    let value: Value = serde_json::from_str(input).map_err(|e| Error::schema("", e.to_string()))?;
    ctest_from_json(&value, policy)
}

pub(crate) fn field<'a>(obj: &'a Map<String, Value>, base: &str, key: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| Error::schema(format!("{base}/{key}"), "missing field"))
}

pub(crate) fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| Error::schema(path, "expected object"))
}

pub(crate) fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| Error::schema(path, "expected array"))
}

pub(crate) fn as_usize(v: &Value, path: &str) -> Result<usize> {
    v.as_u64().map(|x| x as usize).ok_or_else(|| Error::schema(path, "expected non-negative integer"))
}

pub(crate) fn as_f64(v: &Value, path: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| Error::schema(path, "expected number"))
}

pub(crate) fn as_str<'a>(v: &'a Value, path: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| Error::schema(path, "expected string"))
}

/// Rebuild a C-test from its JSON form. The text is re-tokenized and must
/// reproduce the stored sentence ranges; each gap must sit on a candidate.
pub fn ctest_from_json(value: &Value, policy: &CandidatePolicy) -> Result<CTest> {
    let root = as_object(value, "")?;
    let text = as_str(field(root, "", "text")?, "/text")?;
    let sentences = as_array(field(root, "", "sentences")?, "/sentences")?;
    let gaps = as_array(field(root, "", "gaps")?, "/gaps")?;
    let meta = as_object(field(root, "", "meta")?, "/meta")?;
    let strategy = as_str(field(meta, "/meta", "strategy")?, "/meta/strategy")?.to_string();
    let tau = match field(meta, "/meta", "tau")? {
        Value::Null => None,
        v => Some(as_f64(v, "/meta/tau")?),
    };

    let instance = Instance::from_text(text, policy)?;
    let mut ranges = Vec::with_capacity(sentences.len());
    for (k, s) in sentences.iter().enumerate() {
        let path = format!("/sentences/{k}");
        let pair = as_array(s, &path)?;
        if pair.len() != 2 {
            return Err(Error::schema(path, "expected [start, end]"));
        }
        ranges.push(as_usize(&pair[0], &format!("{path}/0"))?..as_usize(&pair[1], &format!("{path}/1"))?);
    }
    if ranges != instance.document.sentences {
        return Err(Error::InvariantViolation("sentence ranges do not match the tokenized text".into()));
    }

    let mut selection = Vec::with_capacity(gaps.len());
    for (k, g) in gaps.iter().enumerate() {
        let path = format!("/gaps/{k}");
        let obj = as_object(g, &path)?;
        let token = as_usize(field(obj, &path, "token")?, &format!("{path}/token"))?;
        let size = as_usize(field(obj, &path, "size")?, &format!("{path}/size"))?;
        let hint = as_str(field(obj, &path, "hint")?, &format!("{path}/hint"))?;
        let solution = as_str(field(obj, &path, "solution")?, &format!("{path}/solution"))?;
        if size == 0 {
            return Err(Error::InvariantViolation(format!("{path}: gap size must be at least 1")));
        }
        let i = instance.candidates.by_token(token).ok_or_else(|| {
            Error::InvariantViolation(format!("{path}: token {token} is not a gap candidate"))
        })?;
        let cand = instance.candidate(i);
        if size + 1 > cand.word_length {
            return Err(Error::InvariantViolation(format!("{path}: size {size} leaves no hint")));
        }
        let (h, s) = cand.split(size);
        if h != hint || s != solution {
            return Err(Error::InvariantViolation(format!(
                "{path}: hint+solution '{hint}'+'{solution}' does not match '{}' at size {size}",
                cand.surface
            )));
        }
        selection.push((i, size));
    }
    CTest::new(Arc::new(instance), &selection, CTestMeta { strategy, tau })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(doc: &Document) -> Vec<&str> {
        doc.tokens.iter().filter(|t| t.is_word).map(|t| t.surface.as_str()).collect()
    }

    #[test]
    fn three_short_sentences() {
        let doc = tokenize("The cat sat. It slept. The end.").unwrap();
        assert_eq!(doc.sentences.len(), 3);
        assert_eq!(words(&doc), ["The", "cat", "sat", "It", "slept", "The", "end"]);
        assert_eq!(doc.tokens.len(), 10);
    }

    #[test]
    fn single_word() {
        let doc = tokenize("Hello").unwrap();
        assert_eq!(doc.sentences, vec![0..1]);
        assert_eq!(doc.tokens.len(), 1);
    }

    #[test]
    fn empty_text_rejected() {
        assert!(matches!(tokenize("   \n"), Err(Error::EmptyInput)));
        assert!(matches!(tokenize(""), Err(Error::EmptyInput)));
    }

    #[test]
    fn no_split_before_lowercase_or_inside_numbers() {
        let doc = tokenize("It cost 3.50 dollars, e.g. a lot. Then it stopped.").unwrap();
        assert_eq!(doc.sentences.len(), 2);
        assert!(words(&doc).contains(&"3.50"));
    }

    #[test]
    fn closing_quote_stays_with_sentence() {
        let doc = tokenize("He said \"Stop!\" Then he left.").unwrap();
        assert_eq!(doc.sentences.len(), 2);
        let first = &doc.tokens[doc.sentences[0].clone()];
        assert_eq!(first.last().unwrap().surface, "\"");
    }

    #[test]
    fn hyphen_and_apostrophe_stay_inside_words() {
        let doc = tokenize("A well-known fact isn't new.").unwrap();
        assert_eq!(words(&doc), ["A", "well-known", "fact", "isn't", "new"]);
    }

    #[test]
    fn candidates_from_middle_sentence() {
        let doc = tokenize("First one here. A cat sat on 42 mats. Last one here.").unwrap();
        let set = extract_candidates(&doc, &CandidatePolicy::default());
        let got: Vec<_> = set.candidates.iter().map(|c| c.surface.as_str()).collect();
        assert_eq!(got, ["cat", "sat", "on", "mats"]);
        assert!(set.candidates.iter().all(|c| c.sentence_index == 1));
    }

    #[test]
    fn two_sentences_have_no_interior() {
        let doc = tokenize("One sentence here. Another one there.").unwrap();
        assert!(extract_candidates(&doc, &CandidatePolicy::default()).is_empty());
    }

    #[test]
    fn hyphenated_words_follow_policy() {
        let doc = tokenize("Start. A well-known fact. End.").unwrap();
        let strict = extract_candidates(&doc, &CandidatePolicy::default());
        assert_eq!(strict.len(), 1);
        let loose = CandidatePolicy { allow_hyphenated: true, ..Default::default() };
        assert_eq!(extract_candidates(&doc, &loose).len(), 2);
    }

    #[test]
    fn extraction_is_idempotent() {
        let doc = tokenize("Start here. The dog and the cat ran. They sat. End here.").unwrap();
        let p = CandidatePolicy::default();
        assert_eq!(extract_candidates(&doc, &p), extract_candidates(&doc, &p));
    }

    #[test]
    fn sentence_members_are_contiguous() {
        let inst = Instance::from_text("Start here. The dog ran. A cat sat down. End here.", &Default::default()).unwrap();
        assert_eq!(inst.n(), 6);
        assert_eq!(inst.candidates.sentence_members(0), 0..3);
        assert_eq!(inst.candidates.sentence_members(4), 3..6);
    }

    fn sample() -> Arc<Instance> {
        Arc::new(Instance::from_text("Start here. The cat sat on the mat today. End here.", &Default::default()).unwrap())
    }

    #[test]
    fn render_blanks() {
        let inst = sample();
        // candidates: The cat sat on the mat today
        let ct = CTest::new(inst, &[(1, 2), (3, 1), (6, 4)], CTestMeta::default()).unwrap();
        assert_eq!(render(&ct, RenderStyle::Blanks), "Start here. The c__ sat o_ the mat t____. End here.");
        assert_eq!(render(&ct, RenderStyle::Solutions), "Start here. The c[at] sat o[n] the mat t[oday]. End here.");
    }

    #[test]
    fn ctest_rejects_bad_sizes() {
        let inst = sample();
        assert!(CTest::new(inst.clone(), &[(1, 0)], CTestMeta::default()).is_err());
        assert!(CTest::new(inst.clone(), &[(1, 3)], CTestMeta::default()).is_err());
        assert!(CTest::new(inst, &[(1, 1), (1, 2)], CTestMeta::default()).is_err());
    }

    #[test]
    fn json_round_trip_and_errors() {
        let inst = sample();
        let ct = CTest::new(inst, &[(0, 2), (5, 1)], CTestMeta { strategy: "stat".into(), tau: Some(0.5) }).unwrap();
        let text = serialize_ctest(&ct);
        let back = parse_ctest(&text, &CandidatePolicy::default()).unwrap();
        assert_eq!(back.selection(), ct.selection());
        assert_eq!(back.meta, ct.meta);

        let mut v: Value = serde_json::from_str(&text).unwrap();
        v.as_object_mut().unwrap().remove("gaps");
        match ctest_from_json(&v, &CandidatePolicy::default()) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "/gaps"),
            other => panic!("expected schema error, got {other:?}"),
        }

        let mut v: Value = serde_json::from_str(&text).unwrap();
        v["gaps"][0]["size"] = json!(0);
        assert!(matches!(ctest_from_json(&v, &CandidatePolicy::default()), Err(Error::InvariantViolation(_))));

        let mut v: Value = serde_json::from_str(&text).unwrap();
        v["gaps"][1]["hint"] = json!(7);
        match ctest_from_json(&v, &CandidatePolicy::default()) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "/gaps/1/hint"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }
}
