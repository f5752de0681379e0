//! Binary codes and their text renderings: plain `0`/`1` strings and
//! dot-decimal groups of 8 bits (`172.16.254.1`).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("binary text must contain only '0' and '1', found {0:?}")]
    NotBinary(char),
    #[error("binary text is empty")]
    Empty,
    #[error("dot-decimal compression needs a length divisible by 8, got {0}")]
    LengthNotByteAligned(usize),
    #[error("dot-decimal group {index} is empty")]
    EmptyGroup { index: usize },
    #[error("dot-decimal group {group:?} contains a non-digit")]
    NonDigit { group: String },
    #[error("dot-decimal group {group:?} exceeds 255")]
    GroupOutOfRange { group: String },
    #[error("dot-decimal group {group:?} has a leading zero")]
    LeadingZero { group: String },
    #[error("code lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("unknown code format {0:?}")]
    UnknownFormat(String),
}

/// A fixed-width code over {0,1}.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryCode {
    bits: Vec<bool>,
}

impl BinaryCode {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        Self::new(bits.iter().map(|&b| b != 0).collect())
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count_ones(&self) -> u32 {
        self.bits.iter().filter(|b| **b).count() as u32
    }

    /// {0,1} → {-1,+1}.
    pub fn signs(&self) -> impl Iterator<Item = i32> + '_ {
        self.bits.iter().map(|&b| if b { 1 } else { -1 })
    }

    /// Bits packed into u64 words, first bit in the most significant position
    /// of the first word.
    pub fn packed(&self) -> Vec<u64> {
        self.bits
            .chunks(64)
            .map(|chunk| {
                chunk
                    .iter()
                    .enumerate()
                    .fold(0u64, |w, (k, &b)| w | (u64::from(b) << (63 - k)))
            })
            .collect()
    }

    pub fn hamming(&self, other: &BinaryCode) -> Result<u32, CodecError> {
        check_len(self, other)?;
        Ok(self
            .packed()
            .iter()
            .zip(other.packed())
            .map(|(a, b)| (a ^ b).count_ones())
            .sum())
    }

    /// Inner product of the ±1 images.
    pub fn signed_dot(&self, other: &BinaryCode) -> Result<i32, CodecError> {
        check_len(self, other)?;
        Ok(self.signs().zip(other.signs()).map(|(a, b)| a * b).sum())
    }
}

pub(crate) fn check_len(a: &BinaryCode, b: &BinaryCode) -> Result<(), CodecError> {
    if a.len() != b.len() {
        return Err(CodecError::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeFormat {
    #[default]
    Binary,
    DotDecimal,
}

impl CodeFormat {
    pub fn name(self) -> &'static str {
        match self {
            CodeFormat::Binary => "binary",
            CodeFormat::DotDecimal => "dot_decimal",
        }
    }
}

impl fmt::Display for CodeFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CodeFormat {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" => Ok(CodeFormat::Binary),
            "dot_decimal" => Ok(CodeFormat::DotDecimal),
            other => Err(CodecError::UnknownFormat(other.into())),
        }
    }
}

/// Rendered code text tagged with its format. Construct through the codec
/// functions so the text always matches the format.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CodeText {
    text: String,
    format: CodeFormat,
}

impl CodeText {
    pub fn binary(text: &str) -> Result<Self, CodecError> {
        validate_binary(text)?;
        Ok(Self {
            text: text.to_owned(),
            format: CodeFormat::Binary,
        })
    }

    pub fn dot_decimal(text: &str) -> Result<Self, CodecError> {
        parse_groups(text)?;
        Ok(Self {
            text: text.to_owned(),
            format: CodeFormat::DotDecimal,
        })
    }

    pub fn parse(text: &str, format: CodeFormat) -> Result<Self, CodecError> {
        match format {
            CodeFormat::Binary => Self::binary(text),
            CodeFormat::DotDecimal => Self::dot_decimal(text),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn format(&self) -> CodeFormat {
        self.format
    }

    pub fn to_code(&self) -> BinaryCode {
        let binary = match self.format {
            CodeFormat::Binary => self.text.clone(),
            CodeFormat::DotDecimal => decompress_dot_decimal(self).expect("validated").text,
        };
        BinaryCode::new(binary.bytes().map(|b| b == b'1').collect())
    }
}

impl fmt::Display for CodeText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

fn validate_binary(text: &str) -> Result<(), CodecError> {
    if text.is_empty() {
        return Err(CodecError::Empty);
    }
    match text.chars().find(|c| *c != '0' && *c != '1') {
        Some(c) => Err(CodecError::NotBinary(c)),
        None => Ok(()),
    }
}

pub fn code_to_binary_string(code: &BinaryCode) -> CodeText {
    CodeText {
        text: code.bits().iter().map(|&b| if b { '1' } else { '0' }).collect(),
        format: CodeFormat::Binary,
    }
}

pub fn parse_binary_string(text: &str) -> Result<BinaryCode, CodecError> {
    Ok(CodeText::binary(text)?.to_code())
}

/// Each 8-bit group (most significant bit first) becomes its decimal value;
/// groups are joined by `.`.
pub fn compress_dot_decimal(binary: &CodeText) -> Result<CodeText, CodecError> {
    let bytes = binary.text.as_bytes();
    if binary.format != CodeFormat::Binary {
        return Err(CodecError::UnknownFormat(binary.format.name().into()));
    }
    if !bytes.len().is_multiple_of(8) {
        return Err(CodecError::LengthNotByteAligned(bytes.len()));
    }
    let groups: Vec<String> = bytes
        .chunks(8)
        .map(|byte| {
            byte.iter()
                .fold(0u16, |acc, &b| (acc << 1) | u16::from(b == b'1'))
                .to_string()
        })
        .collect();
    Ok(CodeText {
        text: groups.join("."),
        format: CodeFormat::DotDecimal,
    })
}

fn parse_groups(text: &str) -> Result<Vec<u8>, CodecError> {
    text.split('.')
        .enumerate()
        .map(|(index, group)| {
            if group.is_empty() {
                return Err(CodecError::EmptyGroup { index });
            }
            if !group.bytes().all(|b| b.is_ascii_digit()) {
                return Err(CodecError::NonDigit {
                    group: group.into(),
                });
            }
            if group.len() > 1 && group.starts_with('0') {
                return Err(CodecError::LeadingZero {
                    group: group.into(),
                });
            }
            group
                .parse::<u8>()
                .map_err(|_| CodecError::GroupOutOfRange {
                    group: group.into(),
                })
        })
        .collect()
}

pub fn decompress_dot_decimal(text: &CodeText) -> Result<CodeText, CodecError> {
    let bytes = parse_groups(&text.text)?;
    Ok(CodeText {
        text: bytes.iter().map(|b| format!("{b:08b}")).collect(),
        format: CodeFormat::Binary,
    })
}

pub fn render_code(code: &BinaryCode, format: CodeFormat) -> Result<CodeText, CodecError> {
    let binary = code_to_binary_string(code);
    match format {
        CodeFormat::Binary => Ok(binary),
        CodeFormat::DotDecimal => compress_dot_decimal(&binary),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    User,
    Item,
}

impl EntityKind {
    pub fn name(self) -> &'static str {
        match self {
            EntityKind::User => "user",
            EntityKind::Item => "item",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum CodeDumpError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Codes keyed by raw entity identifier; the in-memory form of a code dump.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct CodeBook {
    dim: usize,
    users: BTreeMap<String, BinaryCode>,
    items: BTreeMap<String, BinaryCode>,
}

const DUMP_MAGIC: &str = "#binllm-codes";

impl CodeBook {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn insert(&mut self, kind: EntityKind, id: &str, code: BinaryCode) -> Result<(), CodecError> {
        if code.len() != self.dim {
            return Err(CodecError::LengthMismatch(self.dim, code.len()));
        }
        self.table_mut(kind).insert(id.to_owned(), code);
        Ok(())
    }

    pub fn get(&self, kind: EntityKind, id: &str) -> Option<&BinaryCode> {
        self.table(kind).get(id)
    }

    pub fn len(&self) -> usize {
        self.users.len() + self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn table(&self, kind: EntityKind) -> &BTreeMap<String, BinaryCode> {
        match kind {
            EntityKind::User => &self.users,
            EntityKind::Item => &self.items,
        }
    }

    fn table_mut(&mut self, kind: EntityKind) -> &mut BTreeMap<String, BinaryCode> {
        match kind {
            EntityKind::User => &mut self.users,
            EntityKind::Item => &mut self.items,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (EntityKind, &str, &BinaryCode)> {
        self.users
            .iter()
            .map(|(id, c)| (EntityKind::User, id.as_str(), c))
            .chain(self.items.iter().map(|(id, c)| (EntityKind::Item, id.as_str(), c)))
    }

    /// Renders the dump: a header line `#binllm-codes<TAB>d=<d><TAB>format=<f>`,
    /// then `kind<TAB>id<TAB>code_text` per entity, users first, ids sorted.
    pub fn to_dump(&self, format: CodeFormat) -> Result<String, CodecError> {
        if format == CodeFormat::DotDecimal && !self.dim.is_multiple_of(8) {
            return Err(CodecError::LengthNotByteAligned(self.dim));
        }
        let mut out = Vec::new();
        writeln!(out, "{DUMP_MAGIC}\td={}\tformat={}", self.dim, format).unwrap();
        for (kind, id, code) in self.iter() {
            writeln!(out, "{kind}\t{id}\t{}", render_code(code, format)?).unwrap();
        }
        Ok(String::from_utf8(out).expect("utf-8 ids"))
    }

    pub fn write_dump(&self, path: &Path, format: CodeFormat) -> Result<(), CodeDumpError> {
        let text = self.to_dump(format)?;
        fs::write(path, text).map_err(|source| CodeDumpError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn parse_dump(text: &str) -> Result<(Self, CodeFormat), CodeDumpError> {
        let mut lines = text.lines().enumerate();
        let malformed = |line: usize, message: &str| CodeDumpError::Malformed {
            line,
            message: message.to_owned(),
        };
        let (_, header) = lines.next().ok_or_else(|| malformed(1, "missing header"))?;
        let fields: Vec<&str> = header.split('\t').collect();
        if fields.len() != 3 || fields[0] != DUMP_MAGIC {
            return Err(malformed(1, "bad header"));
        }
        let dim: usize = fields[1]
            .strip_prefix("d=")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| malformed(1, "bad d= field"))?;
        let format: CodeFormat = fields[2]
            .strip_prefix("format=")
            .ok_or_else(|| malformed(1, "bad format= field"))?
            .parse()?;
        let mut book = CodeBook::new(dim);
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            let [kind, id, code] = parts[..] else {
                return Err(malformed(lineno, "expected kind<TAB>id<TAB>code"));
            };
            let kind = match kind {
                "user" => EntityKind::User,
                "item" => EntityKind::Item,
                _ => return Err(malformed(lineno, "kind must be user or item")),
            };
            let code = CodeText::parse(code, format)
                .map_err(|e| malformed(lineno, &e.to_string()))?
                .to_code();
            book.insert(kind, id, code)
                .map_err(|e| malformed(lineno, &e.to_string()))?;
        }
        Ok((book, format))
    }

    pub fn read_dump(path: &Path) -> Result<(Self, CodeFormat), CodeDumpError> {
        let text = fs::read_to_string(path).map_err(|source| CodeDumpError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_dump(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bin(s: &str) -> CodeText {
        CodeText::binary(s).unwrap()
    }

    #[test]
    fn binary_rendering() {
        assert_eq!(code_to_binary_string(&BinaryCode::from_bits(&[1, 0, 1])).as_str(), "101");
        assert_eq!(
            code_to_binary_string(&BinaryCode::from_bits(&[0; 8])).as_str(),
            "00000000"
        );
        assert_eq!(parse_binary_string("101").unwrap(), BinaryCode::from_bits(&[1, 0, 1]));
        assert_eq!(parse_binary_string("10x"), Err(CodecError::NotBinary('x')));
    }

    #[test]
    fn ipv4_worked_example() {
        let c = compress_dot_decimal(&bin("10101100000100001111111000000001")).unwrap();
        assert_eq!(c.as_str(), "172.16.254.1");
        assert_eq!(
            decompress_dot_decimal(&c).unwrap().as_str(),
            "10101100000100001111111000000001"
        );
    }

    #[test]
    fn compress_edges() {
        assert_eq!(compress_dot_decimal(&bin("00000000")).unwrap().as_str(), "0");
        assert_eq!(compress_dot_decimal(&bin("1111111100000001")).unwrap().as_str(), "255.1");
        assert_eq!(
            compress_dot_decimal(&bin("101")),
            Err(CodecError::LengthNotByteAligned(3))
        );
        assert!(compress_dot_decimal(&bin("101"))
            .unwrap_err()
            .to_string()
            .contains('3'));
    }

    #[test]
    fn decompress_rejects_malformed() {
        assert_eq!(decompress_dot_decimal(&CodeText::dot_decimal("0").unwrap()).unwrap().as_str(), "00000000");
        assert!(matches!(
            CodeText::dot_decimal("256.1"),
            Err(CodecError::GroupOutOfRange { .. })
        ));
        assert!(matches!(CodeText::dot_decimal("1..2"), Err(CodecError::EmptyGroup { index: 1 })));
        assert!(matches!(CodeText::dot_decimal("1.a"), Err(CodecError::NonDigit { .. })));
        assert!(matches!(CodeText::dot_decimal("1.016"), Err(CodecError::LeadingZero { .. })));
        assert!(matches!(CodeText::dot_decimal(""), Err(CodecError::EmptyGroup { index: 0 })));
    }

    #[test]
    fn render_dispatch() {
        let code = BinaryCode::new((0..32).map(|k| k % 3 == 0).collect());
        assert_eq!(render_code(&code, CodeFormat::Binary).unwrap().as_str().len(), 32);
        let dd = render_code(&code, CodeFormat::DotDecimal).unwrap();
        assert_eq!(dd.as_str().split('.').count(), 4);
        assert!(dd.as_str().len() <= 15);
        let short = BinaryCode::new(vec![true; 12]);
        assert_eq!(
            render_code(&short, CodeFormat::DotDecimal),
            Err(CodecError::LengthNotByteAligned(12))
        );
    }

    #[test]
    fn hamming_and_signed_dot() {
        let a = BinaryCode::from_bits(&[1, 1, 0, 0]);
        let b = BinaryCode::from_bits(&[1, 0, 1, 0]);
        assert_eq!(a.hamming(&b).unwrap(), 2);
        assert_eq!(a.signed_dot(&b).unwrap(), 0);
        assert_eq!(a.signed_dot(&a).unwrap(), 4);
        assert!(a.hamming(&BinaryCode::from_bits(&[1])).is_err());
    }

    #[test]
    fn dump_roundtrip_and_header() {
        let mut book = CodeBook::new(16);
        book.insert(EntityKind::User, "1", parse_binary_string("1010110000010000").unwrap())
            .unwrap();
        book.insert(EntityKind::Item, "1193", parse_binary_string("1111111000000001").unwrap())
            .unwrap();
        let text = book.to_dump(CodeFormat::DotDecimal).unwrap();
        assert_eq!(
            text,
            "#binllm-codes\td=16\tformat=dot_decimal\nuser\t1\t172.16\nitem\t1193\t254.1\n"
        );
        let (back, format) = CodeBook::parse_dump(&text).unwrap();
        assert_eq!(format, CodeFormat::DotDecimal);
        assert_eq!(back, book);
    }

    #[test]
    fn dump_rejects_wrong_width() {
        let text = "#binllm-codes\td=8\tformat=binary\nuser\t1\t0101\n";
        assert!(matches!(
            CodeBook::parse_dump(text),
            Err(CodeDumpError::Malformed { line: 2, .. })
        ));
    }

    fn positional_value(byte: &str) -> u32 {
        byte.chars()
            .enumerate()
            .map(|(k, c)| if c == '1' { 1u32 << (7 - k) } else { 0 })
            .sum()
    }

    proptest! {
        #[test]
        fn group_values_match_positional_sum(
            bits in (1..16usize).prop_flat_map(|k| proptest::collection::vec(any::<bool>(), 8 * k))
        ) {
            let text = code_to_binary_string(&BinaryCode::new(bits));
            let dd = compress_dot_decimal(&text).unwrap();
            let groups: Vec<u32> = dd.as_str().split('.').map(|g| g.parse().unwrap()).collect();
            let expected: Vec<u32> = text.as_str().as_bytes().chunks(8)
                .map(|c| positional_value(std::str::from_utf8(c).unwrap())).collect();
            prop_assert_eq!(groups, expected);
            prop_assert!(dd.as_str().split('.').all(|g| g == "0" || !g.starts_with('0')));
        }

        #[test]
        fn dot_decimal_roundtrip(bytes in proptest::collection::vec(any::<u8>(), 1..64usize)) {
            let text = bytes.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(".");
            let dd = CodeText::dot_decimal(&text).unwrap();
            let back = compress_dot_decimal(&decompress_dot_decimal(&dd).unwrap()).unwrap();
            prop_assert_eq!(back.as_str(), text.as_str());
        }
    }
}
