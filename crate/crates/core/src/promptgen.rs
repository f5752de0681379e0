//! Prompt rendering and instruction-tuning corpus generation.
//!
//! A template carries four placeholders: two text fields (`<ItemTitleList>`,
//! `<TargetItemTitle>`) and two ID fields (`<UserID>`, `<TargetItemID>`) that
//! receive code text. The text-only variant drops the ID fields together with
//! the words that introduce them.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{render_code, CodeBook, CodeFormat, CodeText, CodecError, EntityKind};
use crate::dataset::{ItemCatalog, LabeledInteraction, Partition, SegmentTag, SplitSet};

/// The default question template. `\n` is a real line feed.
pub const DEFAULT_TEMPLATE: &str = "#Question: A user has given high ratings to the following books: <ItemTitleList>. Additionally, we have information about the user's preferences encoded in the feature <UserID>. Using all available information, make a prediction about whether the user would enjoy the book titled <TargetItemTitle> with the feature <TargetItemID>? Answer with \"Yes\" or \"No\". \n#Answer:";

pub const DEFAULT_HISTORY_LEN: usize = 10;

const ITEM_TITLE_LIST: &str = "ItemTitleList";
const USER_ID: &str = "UserID";
const TARGET_ITEM_TITLE: &str = "TargetItemTitle";
const TARGET_ITEM_ID: &str = "TargetItemID";
const PLACEHOLDERS: [&str; 4] = [ITEM_TITLE_LIST, USER_ID, TARGET_ITEM_TITLE, TARGET_ITEM_ID];
const ID_FIELDS: [&str; 2] = [USER_ID, TARGET_ITEM_ID];

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("placeholder <{name}> appears {count} times; expected exactly once")]
    PlaceholderCount { name: &'static str, count: usize },
    #[error("unknown placeholder <{0}> in template")]
    UnknownPlaceholder(String),
    #[error("cannot derive a text-only template: no clause introduces <{0}>")]
    CannotStripIdField(&'static str),
    #[error("full-mode prompt needs user and item codes")]
    MissingCodes,
    #[error("no title for item {0:?}")]
    MissingTitle(String),
    #[error("no {kind} code for {id:?}")]
    MissingCode { kind: EntityKind, id: String },
    #[error("label must be 0 or 1, got {0}")]
    BadLabel(u8),
    #[error("{0} segment tags for {1} test rows")]
    TagCount(usize, usize),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusMode {
    /// ID fields removed; no collaborative codes in the prompt.
    TextOnly,
    Full,
}

impl CorpusMode {
    pub fn name(self) -> &'static str {
        match self {
            CorpusMode::TextOnly => "text_only",
            CorpusMode::Full => "full",
        }
    }
}

impl fmt::Display for CorpusMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorpusMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text_only" => Ok(CorpusMode::TextOnly),
            "full" => Ok(CorpusMode::Full),
            other => Err(format!("unknown corpus mode {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Completion {
    Yes,
    No,
}

impl Completion {
    pub fn as_str(self) -> &'static str {
        match self {
            Completion::Yes => "Yes",
            Completion::No => "No",
        }
    }
}

pub fn completion_for_label(label: u8) -> Result<Completion, PromptError> {
    match label {
        1 => Ok(Completion::Yes),
        0 => Ok(Completion::No),
        other => Err(PromptError::BadLabel(other)),
    }
}

/// A piece of a parsed template.
#[derive(Clone, Debug, PartialEq)]
enum Piece {
    Literal(String),
    Field(&'static str),
}

/// Splits `text` at `<Name>` tokens. Names must be known placeholders.
fn parse_pieces(text: &str) -> Result<Vec<Piece>, PromptError> {
    let mut pieces = Vec::new();
    let mut literal = String::new();
    let mut rest = text;
    while let Some(open) = rest.find('<') {
        let after = &rest[open + 1..];
        let name_len = after
            .find(|c: char| !c.is_ascii_alphanumeric() && c != '_')
            .unwrap_or(after.len());
        if name_len > 0 && after[name_len..].starts_with('>') {
            let name = &after[..name_len];
            let known = PLACEHOLDERS
                .iter()
                .find(|p| **p == name)
                .ok_or_else(|| PromptError::UnknownPlaceholder(name.to_owned()))?;
            literal.push_str(&rest[..open]);
            if !literal.is_empty() {
                pieces.push(Piece::Literal(std::mem::take(&mut literal)));
            }
            pieces.push(Piece::Field(known));
            rest = &after[name_len + 1..];
        } else {
            literal.push_str(&rest[..=open]);
            rest = after;
        }
    }
    literal.push_str(rest);
    if !literal.is_empty() {
        pieces.push(Piece::Literal(literal));
    }
    Ok(pieces)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PromptTemplate {
    full: Vec<Piece>,
    text_only: Vec<Piece>,
}

impl PromptTemplate {
    pub fn new(text: &str) -> Result<Self, PromptError> {
        let full = parse_pieces(text)?;
        for name in PLACEHOLDERS {
            let count = full.iter().filter(|p| **p == Piece::Field(name)).count();
            if count != 1 {
                return Err(PromptError::PlaceholderCount { name, count });
            }
        }
        let text_only = parse_pieces(&strip_id_fields(text)?)?;
        Ok(Self { full, text_only })
    }

    /// The template text for `mode`, placeholders intact.
    pub fn text(&self, mode: CorpusMode) -> String {
        self.pieces(mode)
            .iter()
            .map(|p| match p {
                Piece::Literal(s) => s.clone(),
                Piece::Field(name) => format!("<{name}>"),
            })
            .collect()
    }

    fn pieces(&self, mode: CorpusMode) -> &[Piece] {
        match mode {
            CorpusMode::Full => &self.full,
            CorpusMode::TextOnly => &self.text_only,
        }
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::new(DEFAULT_TEMPLATE).expect("default template is well-formed")
    }
}

const SENTENCE_ENDS: [&str; 3] = [". ", "? ", "! "];
const CLAUSE_STARTS: [&str; 2] = [" with ", ", "];

/// Removes each ID field from `text`. A sentence holding nothing but the ID
/// field goes entirely; otherwise the clause from the nearest preceding
/// `" with "` or `", "` up to the field is cut.
fn strip_id_fields(text: &str) -> Result<String, PromptError> {
    let mut out = text.to_owned();
    for name in ID_FIELDS {
        let token = format!("<{name}>");
        let at = out.find(&token).ok_or(PromptError::PlaceholderCount { name, count: 0 })?;
        let field_end = at + token.len();
        let sentence_start = SENTENCE_ENDS
            .iter()
            .filter_map(|sep| out[..at].rfind(sep).map(|p| p + sep.len()))
            .max()
            .unwrap_or(0);
        let sentence_end = SENTENCE_ENDS
            .iter()
            .filter_map(|sep| out[field_end..].find(sep).map(|p| field_end + p + sep.len()))
            .min()
            .unwrap_or(out.len());
        let sentence = &out[sentence_start..sentence_end];
        let holds_other_field = PLACEHOLDERS
            .iter()
            .filter(|p| **p != name)
            .any(|p| sentence.contains(&format!("<{p}>")));
        if !holds_other_field {
            out.replace_range(sentence_start..sentence_end, "");
            continue;
        }
        let clause_start = CLAUSE_STARTS
            .iter()
            .filter_map(|sep| out[sentence_start..at].rfind(sep).map(|p| sentence_start + p))
            .max()
            .ok_or(PromptError::CannotStripIdField(name))?;
        let between = &out[clause_start..at];
        if PLACEHOLDERS.iter().any(|p| between.contains(&format!("<{p}>"))) {
            return Err(PromptError::CannotStripIdField(name));
        }
        out.replace_range(clause_start..field_end, "");
    }
    Ok(out)
}

/// `"A", "B"` oldest first, keeping the newest `history_len` titles, or
/// `None` when empty.
fn format_history(history_titles: &[String], history_len: usize) -> String {
    let keep = &history_titles[history_titles.len().saturating_sub(history_len)..];
    if keep.is_empty() {
        return "None".to_owned();
    }
    keep.iter()
        .map(|t| format!("\"{t}\""))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Fills the template in a single pass, so substituted text is never
/// re-scanned for placeholders.
pub fn render_prompt(
    template: &PromptTemplate,
    history_titles: &[String],
    codes: Option<(&CodeText, &CodeText)>,
    target_title: &str,
    mode: CorpusMode,
    history_len: usize,
) -> Result<String, PromptError> {
    if mode == CorpusMode::Full && codes.is_none() {
        return Err(PromptError::MissingCodes);
    }
    let history = format_history(history_titles, history_len);
    let mut out = String::new();
    for piece in template.pieces(mode) {
        match piece {
            Piece::Literal(s) => out.push_str(s),
            Piece::Field(name) => match *name {
                ITEM_TITLE_LIST => out.push_str(&history),
                TARGET_ITEM_TITLE => out.push_str(target_title),
                USER_ID => out.push_str(codes.ok_or(PromptError::MissingCodes)?.0.as_str()),
                TARGET_ITEM_ID => out.push_str(codes.ok_or(PromptError::MissingCodes)?.1.as_str()),
                other => return Err(PromptError::UnknownPlaceholder(other.to_owned())),
            },
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub prompt: String,
    pub completion: Completion,
    pub user_id: String,
    pub item_id: String,
    /// Warm/cold tag for test rows; absent for train and valid rows.
    pub segment: Option<SegmentTag>,
}

/// What to emit and how.
#[derive(Clone, Debug)]
pub struct CorpusOptions<'a> {
    pub template: &'a PromptTemplate,
    pub mode: CorpusMode,
    pub format: CodeFormat,
    pub history_len: usize,
}

/// One record per row of `partition`, in split order. A record's history is
/// the user's positively labeled items with a strictly earlier timestamp, in
/// any partition, excluding the target item itself.
pub fn build_corpus(
    split: &SplitSet,
    partition: Partition,
    test_tags: Option<&[SegmentTag]>,
    catalog: &ItemCatalog,
    codes: Option<&CodeBook>,
    opts: &CorpusOptions<'_>,
) -> Result<Vec<PromptRecord>, PromptError> {
    if let Some(tags) = test_tags {
        if tags.len() != split.test.len() {
            return Err(PromptError::TagCount(tags.len(), split.test.len()));
        }
    }
    if opts.mode == CorpusMode::Full && codes.is_none() {
        return Err(PromptError::MissingCodes);
    }
    let code_text = |kind: EntityKind, id: &str| -> Result<CodeText, PromptError> {
        let code = codes
            .and_then(|b| b.get(kind, id))
            .ok_or_else(|| PromptError::MissingCode {
                kind,
                id: id.to_owned(),
            })?;
        Ok(render_code(code, opts.format)?)
    };
    let title = |id: &str| -> Result<&str, PromptError> {
        catalog.title(id).ok_or_else(|| PromptError::MissingTitle(id.to_owned()))
    };

    // (timestamp, item) of positives per user, in chronological order.
    let mut positives: HashMap<&str, Vec<(u64, &str)>> = HashMap::new();
    let mut records = Vec::with_capacity(split.partition(partition).len());
    for p in Partition::ALL {
        let rows: &[LabeledInteraction] = split.partition(p);
        for (k, row) in rows.iter().enumerate() {
            if p == partition {
                let earlier = positives.get(row.user_id()).map_or(&[][..], Vec::as_slice);
                let cut = earlier.partition_point(|(ts, _)| *ts < row.timestamp());
                let mut history = earlier[..cut]
                    .iter()
                    .rev()
                    .filter(|(_, item)| *item != row.item_id())
                    .take(opts.history_len)
                    .map(|(_, item)| title(item).map(str::to_owned))
                    .collect::<Result<Vec<_>, _>>()?;
                history.reverse();
                let pair = match opts.mode {
                    CorpusMode::Full => Some((
                        code_text(EntityKind::User, row.user_id())?,
                        code_text(EntityKind::Item, row.item_id())?,
                    )),
                    CorpusMode::TextOnly => None,
                };
                let prompt = render_prompt(
                    opts.template,
                    &history,
                    pair.as_ref().map(|(u, i)| (u, i)),
                    title(row.item_id())?,
                    opts.mode,
                    opts.history_len,
                )?;
                records.push(PromptRecord {
                    prompt,
                    completion: completion_for_label(row.label)?,
                    user_id: row.user_id().to_owned(),
                    item_id: row.item_id().to_owned(),
                    segment: match p {
                        Partition::Test => test_tags.map(|t| t[k]),
                        _ => None,
                    },
                });
            }
            if row.is_positive() {
                positives
                    .entry(row.user_id())
                    .or_default()
                    .push((row.timestamp(), row.item_id()));
            }
        }
        if p == partition {
            break;
        }
    }
    Ok(records)
}

/// JSON Lines with LF line endings.
pub fn corpus_to_jsonl(records: &[PromptRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_corpus(path: &Path, records: &[PromptRecord]) -> std::io::Result<()> {
    fs::write(path, corpus_to_jsonl(records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{compress_dot_decimal, parse_binary_string};
    use crate::dataset::Interaction;

    const TEXT_ONLY: &str = "#Question: A user has given high ratings to the following books: <ItemTitleList>. Using all available information, make a prediction about whether the user would enjoy the book titled <TargetItemTitle>? Answer with \"Yes\" or \"No\". \n#Answer:";

    fn codes() -> (CodeText, CodeText) {
        (
            compress_dot_decimal(&CodeText::binary("10101100000100001111111000000001").unwrap()).unwrap(),
            CodeText::dot_decimal("1.2.3.4").unwrap(),
        )
    }

    #[test]
    fn default_template_round_trips() {
        let t = PromptTemplate::default();
        assert_eq!(t.text(CorpusMode::Full), DEFAULT_TEMPLATE);
        assert_eq!(t.text(CorpusMode::TextOnly), TEXT_ONLY);
    }

    #[test]
    fn template_validation() {
        assert_eq!(
            PromptTemplate::new("<ItemTitleList> <UserID> <TargetItemTitle>"),
            Err(PromptError::PlaceholderCount { name: TARGET_ITEM_ID, count: 0 })
        );
        assert_eq!(
            PromptTemplate::new("<Foo> <ItemTitleList>"),
            Err(PromptError::UnknownPlaceholder("Foo".into()))
        );
        let dup = DEFAULT_TEMPLATE.replace("<TargetItemTitle>", "<UserID>");
        assert!(matches!(
            PromptTemplate::new(&dup),
            Err(PromptError::PlaceholderCount { .. })
        ));
        // '<' that is not a placeholder stays literal
        let loose = DEFAULT_TEMPLATE.replace("#Question:", "#Question (a < b):");
        assert!(PromptTemplate::new(&loose).is_ok());
    }

    #[test]
    fn golden_full_prompt() {
        let (u, i) = codes();
        let got = render_prompt(
            &PromptTemplate::default(),
            &["Dune".into(), "Emma".into()],
            Some((&u, &i)),
            "Persuasion",
            CorpusMode::Full,
            10,
        )
        .unwrap();
        assert_eq!(
            got,
            "#Question: A user has given high ratings to the following books: \"Dune\", \"Emma\". Additionally, we have information about the user's preferences encoded in the feature 172.16.254.1. Using all available information, make a prediction about whether the user would enjoy the book titled Persuasion with the feature 1.2.3.4? Answer with \"Yes\" or \"No\". \n#Answer:"
        );
        assert!(got.starts_with("#Question: A user has given high ratings to the following books:"));
        assert!(got.ends_with("\n#Answer:"));
    }

    #[test]
    fn empty_history_renders_none_and_truncation_keeps_newest() {
        let t = PromptTemplate::default();
        let p = render_prompt(&t, &[], None, "X", CorpusMode::TextOnly, 10).unwrap();
        assert!(p.contains("books: None."));
        let hist: Vec<String> = (0..5).map(|k| format!("T{k}")).collect();
        let p = render_prompt(&t, &hist, None, "X", CorpusMode::TextOnly, 2).unwrap();
        assert!(p.contains("books: \"T3\", \"T4\"."));
    }

    #[test]
    fn substituted_text_is_not_rescanned() {
        let t = PromptTemplate::default();
        let p = render_prompt(&t, &["<UserID>".into()], None, "<TargetItemID>", CorpusMode::TextOnly, 10)
            .unwrap();
        assert!(p.contains("\"<UserID>\""));
        assert!(p.contains("titled <TargetItemID>?"));
    }

    #[test]
    fn full_mode_requires_codes() {
        let t = PromptTemplate::default();
        assert_eq!(
            render_prompt(&t, &[], None, "X", CorpusMode::Full, 10),
            Err(PromptError::MissingCodes)
        );
    }

    #[test]
    fn completions() {
        assert_eq!(completion_for_label(1).unwrap().as_str(), "Yes");
        assert_eq!(completion_for_label(0).unwrap().as_str(), "No");
        assert!(completion_for_label(2).is_err());
        assert_eq!(serde_json::to_string(&Completion::Yes).unwrap(), "\"Yes\"");
    }

    fn li(user: &str, item: &str, label: u8, ts: u64) -> LabeledInteraction {
        LabeledInteraction {
            interaction: Interaction {
                user_id: user.into(),
                item_id: item.into(),
                rating: 0.0,
                timestamp: ts,
            },
            label,
        }
    }

    fn fixture() -> (SplitSet, ItemCatalog, CodeBook) {
        let train = vec![
            li("u1", "a", 1, 1),
            li("u1", "b", 0, 2),
            li("u1", "c", 1, 3),
            li("u2", "a", 1, 3),
        ];
        let valid = vec![li("u1", "d", 1, 5), li("u1", "e", 1, 5)];
        let test = vec![li("u1", "a", 0, 9), li("u3", "b", 1, 10)];
        let split = SplitSet::from_partitions(train, valid, test);
        let catalog: ItemCatalog = ["a", "b", "c", "d", "e"]
            .iter()
            .map(|id| (id.to_string(), format!("Title {}", id.to_uppercase())))
            .collect();
        let mut book = CodeBook::new(8);
        for u in ["u1", "u2", "u3"] {
            book.insert(EntityKind::User, u, parse_binary_string("11110000").unwrap()).unwrap();
        }
        for i in ["a", "b", "c", "d", "e"] {
            book.insert(EntityKind::Item, i, parse_binary_string("00001111").unwrap()).unwrap();
        }
        (split, catalog, book)
    }

    #[test]
    fn corpus_history_rules() {
        let (split, catalog, book) = fixture();
        let template = PromptTemplate::default();
        let opts = CorpusOptions {
            template: &template,
            mode: CorpusMode::Full,
            format: CodeFormat::Binary,
            history_len: 10,
        };
        let train = build_corpus(&split, Partition::Train, None, &catalog, Some(&book), &opts).unwrap();
        assert_eq!(train.len(), 4);
        assert!(train[0].prompt.contains("books: None."));
        assert!(train[2].prompt.contains("books: \"Title A\"."));
        assert!(train[0].prompt.contains("feature 11110000."));

        let valid = build_corpus(&split, Partition::Valid, None, &catalog, Some(&book), &opts).unwrap();
        // equal timestamps: "d" is not history for "e"
        assert!(valid[1].prompt.contains("books: \"Title A\", \"Title C\"."));

        let tags = [SegmentTag::Warm, SegmentTag::Cold];
        let test = build_corpus(&split, Partition::Test, Some(&tags), &catalog, Some(&book), &opts).unwrap();
        // target item "a" is excluded from its own history
        assert!(test[0].prompt.contains("books: \"Title C\", \"Title D\", \"Title E\"."));
        assert_eq!(test[0].completion, Completion::No);
        assert_eq!(test[1].segment, Some(SegmentTag::Cold));
        assert!(test[1].prompt.contains("books: None."));
    }

    #[test]
    fn corpus_errors_name_the_entity() {
        let (split, mut catalog, book) = fixture();
        let template = PromptTemplate::default();
        let opts = CorpusOptions {
            template: &template,
            mode: CorpusMode::Full,
            format: CodeFormat::DotDecimal,
            history_len: 10,
        };
        let mut partial = CodeBook::new(8);
        partial.insert(EntityKind::User, "u1", parse_binary_string("11110000").unwrap()).unwrap();
        let err = build_corpus(&split, Partition::Train, None, &catalog, Some(&partial), &opts).unwrap_err();
        assert_eq!(err, PromptError::MissingCode { kind: EntityKind::Item, id: "a".into() });

        catalog = ItemCatalog::default();
        let err = build_corpus(&split, Partition::Train, None, &catalog, Some(&book), &opts).unwrap_err();
        assert_eq!(err, PromptError::MissingTitle("a".into()));
    }

    #[test]
    fn jsonl_shape() {
        let (split, catalog, _) = fixture();
        let template = PromptTemplate::default();
        let opts = CorpusOptions {
            template: &template,
            mode: CorpusMode::TextOnly,
            format: CodeFormat::Binary,
            history_len: 10,
        };
        let tags = [SegmentTag::Warm, SegmentTag::Cold];
        let recs = build_corpus(&split, Partition::Test, Some(&tags), &catalog, None, &opts).unwrap();
        let text = corpus_to_jsonl(&recs);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        let keys: Vec<&str> = first.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys.len(), 5);
        for k in ["prompt", "completion", "user_id", "item_id", "segment"] {
            assert!(keys.contains(&k));
        }
        assert_eq!(first["segment"], "warm");
        assert_eq!(first["completion"], "No");
        assert!(!text.contains('\r'));
    }
}
